//! Noisy-corpus construction: ECG superimposed on clean sEMG at exact input
//! SNRs.
//!
//! On-disk layout of a dataset directory:
//!
//! ```text
//! index.json
//! records/<id>/clean.f32
//! records/<id>/noisy.f32
//! records/<id>/meta.json
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ingestion::{
    mask_to_runs, mean_power, read_f32le, read_json, read_signal, runs_to_mask, write_f32le, write_json,
    DatasetManifest, ManifestEntry, Role, SignalFormat, SignalSegment, Split,
};
use crate::metrics::snr_in;

/// Returns `α·noise` such that `snr_in(clean, clean + α·noise) == target_db`.
///
/// Powers are taken over the whole segment, rest intervals included.
pub fn scale_noise_to_snr(clean: &SignalSegment, noise: &SignalSegment, target_db: f64) -> Result<SignalSegment> {
    check_compatible(clean, noise)?;
    let alpha = noise_gain(clean.samples(), noise.samples(), target_db)?;
    let scaled = noise.samples().iter().map(|v| alpha * v).collect();
    SignalSegment::new(scaled, noise.fs())
}

fn noise_gain(clean: &[f64], noise: &[f64], target_db: f64) -> Result<f64> {
    if !target_db.is_finite() {
        return Err(Error::InvalidArgument(format!("target SNR must be finite, got {target_db}")));
    }
    let pc = mean_power(clean);
    let pn = mean_power(noise);
    if pc == 0.0 || pn == 0.0 {
        return Err(Error::ZeroPower);
    }
    Ok((pc / (pn * 10f64.powf(target_db / 10.0))).sqrt())
}

fn check_compatible(a: &SignalSegment, b: &SignalSegment) -> Result<()> {
    if a.fs() != b.fs() {
        return Err(Error::RateMismatch {
            left: a.fs(),
            right: b.fs(),
        });
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Periodic extension of `x` starting at `offset`, cut to `len` samples.
pub fn tile_to_length(x: &[f64], len: usize, offset: usize) -> Vec<f64> {
    if x.is_empty() {
        return vec![0.0; len];
    }
    (0..len).map(|i| x[(offset + i) % x.len()]).collect()
}

/// Where a record came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub split: Option<Split>,
    pub semg_subject: String,
    pub channel: u32,
    pub semg_source: String,
    pub ecg_subject: String,
    pub ecg_source: String,
    /// Start sample within the ECG source before tiling.
    pub ecg_offset: usize,
}

/// Invariants: `noisy == clean + noise_scaled` elementwise and the measured
/// input SNR equals `target_snr_db`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationRecord {
    pub id: String,
    pub clean: SignalSegment,
    pub noise_scaled: SignalSegment,
    pub noisy: SignalSegment,
    pub target_snr_db: f64,
    pub provenance: Provenance,
}

impl ContaminationRecord {
    pub fn measured_snr_in(&self) -> Result<f64> {
        snr_in(self.clean.samples(), self.noisy.samples())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_f32le(&dir.join("clean.f32"), self.clean.samples())?;
        write_f32le(&dir.join("noisy.f32"), self.noisy.samples())?;
        write_json(&dir.join("meta.json"), &RecordMeta::of(self)?)
    }

    /// Loads a record; `noise_scaled` is recovered as `noisy - clean`.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta: RecordMeta = read_json(&dir.join("meta.json"), "record meta")?;
        let clean = read_f32le(&dir.join("clean.f32"))?;
        let noisy = read_f32le(&dir.join("noisy.f32"))?;
        if clean.len() != noisy.len() {
            return Err(Error::format(dir, "record", "clean and noisy lengths differ"));
        }
        let mask = meta.activation.as_ref().map(|r| runs_to_mask(r, clean.len())).transpose()?;
        let noise: Vec<f64> = noisy.iter().zip(&clean).map(|(n, c)| n - c).collect();
        Ok(Self {
            id: meta.id,
            clean: SignalSegment::with_mask(clean, meta.fs, mask)?,
            noise_scaled: SignalSegment::new(noise, meta.fs)?,
            noisy: SignalSegment::new(noisy, meta.fs)?,
            target_snr_db: meta.target_snr_db,
            provenance: meta.provenance,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordMeta {
    id: String,
    fs: f64,
    len: usize,
    target_snr_db: f64,
    measured_snr_in: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    activation: Option<Vec<[usize; 2]>>,
    provenance: Provenance,
}

impl RecordMeta {
    fn of(r: &ContaminationRecord) -> Result<Self> {
        Ok(Self {
            id: r.id.clone(),
            fs: r.clean.fs(),
            len: r.clean.len(),
            target_snr_db: r.target_snr_db,
            measured_snr_in: r.measured_snr_in()?,
            activation: r.clean.mask().map(mask_to_runs),
            provenance: r.provenance.clone(),
        })
    }
}

/// Superimposes `ecg` (tiled or cropped to the clean length) at `target_db`.
pub fn contaminate(clean: &SignalSegment, ecg: &SignalSegment, target_db: f64) -> Result<ContaminationRecord> {
    contaminate_at(clean, ecg, target_db, 0)
}

/// As [`contaminate`], reading the ECG from `offset` onwards.
pub fn contaminate_at(
    clean: &SignalSegment,
    ecg: &SignalSegment,
    target_db: f64,
    offset: usize,
) -> Result<ContaminationRecord> {
    if clean.fs() != ecg.fs() {
        return Err(Error::RateMismatch {
            left: clean.fs(),
            right: ecg.fs(),
        });
    }
    let noise = SignalSegment::new(tile_to_length(ecg.samples(), clean.len(), offset), clean.fs())?;
    let noise_scaled = scale_noise_to_snr(clean, &noise, target_db)?;
    let noisy: Vec<f64> = clean
        .samples()
        .iter()
        .zip(noise_scaled.samples())
        .map(|(c, n)| c + n)
        .collect();
    Ok(ContaminationRecord {
        id: String::new(),
        noisy: SignalSegment::new(noisy, clean.fs())?,
        clean: clean.clone(),
        noise_scaled,
        target_snr_db: target_db,
        provenance: Provenance::default(),
    })
}

/// SNR grids and pairing counts per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub train_snrs_db: Vec<f64>,
    pub test_snrs_db: Vec<f64>,
    /// ECG sources superimposed on each clean training/validation segment.
    pub train_pairings: usize,
    /// ECG sources superimposed on each clean test segment.
    pub test_pairings: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            train_snrs_db: vec![-5.0, -7.0, -9.0, -11.0, -13.0, -15.0],
            test_snrs_db: (0..8).map(|i| -14.0 + 2.0 * i as f64).collect(),
            train_pairings: 5,
            test_pairings: 1,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn grid(&self, split: Split) -> &[f64] {
        match split {
            Split::Test => &self.test_snrs_db,
            _ => &self.train_snrs_db,
        }
    }

    pub fn pairings(&self, split: Split) -> usize {
        match split {
            Split::Test => self.test_pairings,
            _ => self.train_pairings,
        }
    }

    /// Uses one grid and pairing count for every split.
    pub fn uniform(snrs_db: Vec<f64>, pairings: usize, seed: u64) -> Self {
        Self {
            train_snrs_db: snrs_db.clone(),
            test_snrs_db: snrs_db,
            train_pairings: pairings,
            test_pairings: pairings,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub split: Split,
    pub target_snr_db: f64,
    pub semg_subject: String,
    pub channel: u32,
    pub ecg_subject: String,
    pub ecg_offset: usize,
    pub len: usize,
}

/// Contents of `index.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub fs: f64,
    pub seed: u64,
    pub snr_grids: BTreeMap<String, Vec<f64>>,
    pub records: Vec<IndexEntry>,
}

impl CorpusIndex {
    pub fn load(dataset_dir: &Path) -> Result<Self> {
        read_json(&dataset_dir.join("index.json"), "corpus index")
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &IndexEntry> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn record_dir(dataset_dir: &Path, id: &str) -> PathBuf {
        dataset_dir.join("records").join(id)
    }

    /// Loads every record of `split`, in index order.
    pub fn load_split(&self, dataset_dir: &Path, split: Split, exec: Execution) -> Result<Vec<ContaminationRecord>> {
        let ids: Vec<&IndexEntry> = self.split(split).collect();
        exec.map(&ids, |e| ContaminationRecord::load(&Self::record_dir(dataset_dir, &e.id)))
            .into_iter()
            .collect()
    }
}

/// One planned record before any signal is touched.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    pub split: Split,
    pub segment: usize,
    pub slot: usize,
    pub snr_index: usize,
    pub target_snr_db: f64,
    /// Index into the manifest's entries.
    pub semg_entry: usize,
    pub ecg_entry: usize,
    /// Fraction of the ECG source to start from, in [0, 1).
    pub ecg_phase: f64,
}

impl Pairing {
    pub fn id(&self) -> String {
        format!(
            "{}_{:05}_e{}_s{:02}",
            self.split.as_str(),
            self.segment,
            self.slot,
            self.snr_index
        )
    }
}

fn stream_key(seed: u64, split: Split, segment: usize) -> u64 {
    // splitmix64 finalizer over the packed key
    let mut z = seed
        ^ (split as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (segment as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn ecg_pool(manifest: &DatasetManifest, split: Split) -> Vec<usize> {
    let pick = |s: Split| -> Vec<usize> {
        manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.role == Role::Ecg && e.split == s)
            .map(|(i, _)| i)
            .collect()
    };
    match split {
        Split::Validation => {
            let own = pick(Split::Validation);
            if own.is_empty() {
                pick(Split::Train)
            } else {
                own
            }
        }
        s => pick(s),
    }
}

/// Enumerates every record the corpus will contain. Each clean segment gets
/// `pairings` distinct ECG sources, each mixed at every SNR of its split's
/// grid. The ECG choice for a (segment, slot) depends only on the seed, the
/// split and the segment index.
pub fn plan_pairings(manifest: &DatasetManifest, cfg: &CorpusConfig) -> Result<Vec<Pairing>> {
    manifest.validate()?;
    let mut out = Vec::new();
    for split in Split::ALL {
        let segments: Vec<usize> = manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.role == Role::Semg && e.split == split)
            .map(|(i, _)| i)
            .collect();
        if segments.is_empty() {
            continue;
        }
        let grid = cfg.grid(split);
        let pairings = cfg.pairings(split);
        if grid.is_empty() || pairings == 0 {
            return Err(Error::Corpus(format!("empty SNR grid or pairing count for {}", split.as_str())));
        }
        let pool = ecg_pool(manifest, split);
        if pool.len() < pairings {
            return Err(Error::Corpus(format!(
                "{} split needs {pairings} ECG sources per segment, only {} available",
                split.as_str(),
                pool.len()
            )));
        }
        for (seg_idx, &semg_entry) in segments.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_key(cfg.seed, split, seg_idx));
            let mut perm = pool.clone();
            for slot in 0..pairings {
                let j = rng.gen_range(slot..perm.len());
                perm.swap(slot, j);
                let phase: f64 = rng.gen();
                for (snr_index, &snr) in grid.iter().enumerate() {
                    out.push(Pairing {
                        split,
                        segment: seg_idx,
                        slot,
                        snr_index,
                        target_snr_db: snr,
                        semg_entry,
                        ecg_entry: perm[slot],
                        ecg_phase: phase,
                    });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Corpus("manifest has no sEMG segments".into()));
    }
    Ok(out)
}

/// Number of records per split the plan will produce.
pub fn planned_counts(manifest: &DatasetManifest, cfg: &CorpusConfig) -> Result<BTreeMap<Split, usize>> {
    let mut counts = BTreeMap::new();
    for p in plan_pairings(manifest, cfg)? {
        *counts.entry(p.split).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Builds the dataset directory from a manifest of preprocessed sEMG
/// segments and ECG recordings sharing one sample rate.
pub fn build_corpus(
    manifest: &DatasetManifest,
    cfg: &CorpusConfig,
    out_dir: &Path,
    exec: Execution,
) -> Result<CorpusIndex> {
    let plan = plan_pairings(manifest, cfg)?;
    let mut needed: Vec<usize> = plan.iter().flat_map(|p| [p.semg_entry, p.ecg_entry]).collect();
    needed.sort_unstable();
    needed.dedup();
    let loaded: Vec<Result<SignalSegment>> = exec.map(&needed, |&i| {
        let e = &manifest.entries[i];
        let path = manifest.resolve(e);
        read_signal(&path, SignalFormat::from_path(&path))
    });
    let mut signals = HashMap::new();
    for (i, s) in needed.iter().zip(loaded) {
        signals.insert(*i, s?);
    }
    let fs = signals[&plan[0].semg_entry].fs();
    if let Some((i, s)) = signals.iter().find(|(_, s)| s.fs() != fs) {
        return Err(Error::Corpus(format!(
            "{} is sampled at {} Hz, corpus rate is {fs} Hz",
            manifest.entries[*i].path.display(),
            s.fs()
        )));
    }

    let records_dir = out_dir.join("records");
    fs::create_dir_all(&records_dir).map_err(|e| Error::io(&records_dir, e))?;
    let results: Vec<Result<IndexEntry>> = exec.map(&plan, |p| {
        let semg: &ManifestEntry = &manifest.entries[p.semg_entry];
        let ecg: &ManifestEntry = &manifest.entries[p.ecg_entry];
        let clean = &signals[&p.semg_entry];
        let noise = &signals[&p.ecg_entry];
        let offset = (p.ecg_phase * noise.len() as f64) as usize;
        let mut rec = contaminate_at(clean, noise, p.target_snr_db, offset)?;
        rec.id = p.id();
        rec.provenance = Provenance {
            split: Some(p.split),
            semg_subject: semg.subject.clone(),
            channel: semg.channel,
            semg_source: semg.path.display().to_string(),
            ecg_subject: ecg.subject.clone(),
            ecg_source: ecg.path.display().to_string(),
            ecg_offset: offset,
        };
        rec.save(&CorpusIndex::record_dir(out_dir, &rec.id))?;
        Ok(IndexEntry {
            id: rec.id,
            split: p.split,
            target_snr_db: p.target_snr_db,
            semg_subject: semg.subject.clone(),
            channel: semg.channel,
            ecg_subject: ecg.subject.clone(),
            ecg_offset: offset,
            len: clean.len(),
        })
    });
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut snr_grids = BTreeMap::new();
    for split in Split::ALL {
        if records.iter().any(|r| r.split == split) {
            snr_grids.insert(split.as_str().to_string(), cfg.grid(split).to_vec());
        }
    }
    let index = CorpusIndex {
        fs,
        seed: cfg.seed,
        snr_grids,
        records,
    };
    write_json(&out_dir.join("index.json"), &index)?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::{synth_ecg, synth_semg, write_signal, ActivationWindow, SignalMeta};
    use proptest::prelude::*;
    use rand::Rng;

    fn seg(xs: Vec<f64>) -> SignalSegment {
        SignalSegment::new(xs, 1000.0).unwrap()
    }

    #[test]
    fn unit_gain_at_zero_db() {
        let c = seg(vec![1.0, -1.0, 1.0, -1.0]);
        let n = seg(vec![-1.0, 1.0, 1.0, -1.0]);
        let s = scale_noise_to_snr(&c, &n, 0.0).unwrap();
        assert_eq!(s.samples(), n.samples());
    }

    #[test]
    fn gain_at_minus_ten_db() {
        let c = seg(vec![2.0, -2.0]);
        let n = seg(vec![-2.0, 2.0]);
        let s = scale_noise_to_snr(&c, &n, -10.0).unwrap();
        let alpha = s.samples()[1] / 2.0;
        assert!((alpha - 3.162_277_660_168_379_5).abs() < 1e-12);
        let s = scale_noise_to_snr(&c, &n, -20.0).unwrap();
        assert!((s.power() / c.power() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn zero_power_rejected() {
        let c = seg(vec![0.0; 4]);
        let n = seg(vec![1.0; 4]);
        assert!(matches!(scale_noise_to_snr(&c, &n, 0.0), Err(Error::ZeroPower)));
        assert!(matches!(scale_noise_to_snr(&n, &c, 0.0), Err(Error::ZeroPower)));
    }

    #[test]
    fn identical_noise_doubles() {
        let c = seg(vec![0.5, -0.25, 1.0]);
        let r = contaminate(&c, &c, 0.0).unwrap();
        for (a, b) in r.noisy.samples().iter().zip(c.samples()) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn rate_mismatch_rejected() {
        let c = seg(vec![1.0; 8]);
        let e = SignalSegment::new(vec![1.0; 8], 128.0).unwrap();
        assert!(matches!(contaminate(&c, &e, -5.0), Err(Error::RateMismatch { .. })));
    }

    #[test]
    fn short_ecg_is_tiled() {
        assert_eq!(tile_to_length(&[1.0, 2.0, 3.0], 7, 1), vec![2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0]);
    }

    #[test]
    fn record_persists_invariant() {
        let dir = tempfile::tempdir().unwrap();
        let clean = synth_semg(4.0, 1000.0, &[ActivationWindow::new(1.0, 3.0)], 1).unwrap();
        let ecg = synth_ecg(3.0, 1000.0, 70.0, 0.05, 2).unwrap().signal;
        let mut r = contaminate(&clean, &ecg, -10.0).unwrap();
        r.id = "x".into();
        r.save(dir.path()).unwrap();
        let back = ContaminationRecord::load(dir.path()).unwrap();
        assert!((back.measured_snr_in().unwrap() + 10.0).abs() < 1e-6);
        assert_eq!(back.clean.mask(), clean.mask());
    }

    fn write_manifest(dir: &Path, n_semg: usize, n_ecg_train: usize, n_ecg_test: usize) -> DatasetManifest {
        let mut entries = Vec::new();
        for i in 0..n_semg {
            let p = format!("semg_{i}.f32");
            let x = synth_semg(3.0, 1000.0, &[ActivationWindow::new(0.5, 2.5)], i as u64).unwrap();
            write_signal(&dir.join(&p), &x, SignalFormat::RawF32Le, &SignalMeta::default()).unwrap();
            entries.push(ManifestEntry {
                path: p.into(),
                role: Role::Semg,
                subject: format!("s{i}"),
                channel: 2,
                fs: 1000.0,
                split: if i % 2 == 0 { Split::Train } else { Split::Test },
            });
        }
        for i in 0..n_ecg_train + n_ecg_test {
            let p = format!("ecg_{i}.f32");
            let x = synth_ecg(5.0, 1000.0, 60.0 + i as f64, 0.05, 100 + i as u64).unwrap().signal;
            write_signal(&dir.join(&p), &x, SignalFormat::RawF32Le, &SignalMeta::default()).unwrap();
            entries.push(ManifestEntry {
                path: p.into(),
                role: Role::Ecg,
                subject: format!("e{i}"),
                channel: 1,
                fs: 1000.0,
                split: if i < n_ecg_train { Split::Train } else { Split::Test },
            });
        }
        let m = DatasetManifest::new(entries, dir).unwrap();
        m.save(&dir.join("manifest.json")).unwrap();
        DatasetManifest::load(&dir.join("manifest.json")).unwrap()
    }

    #[test]
    fn corpus_counts_and_disjointness() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_manifest(dir.path(), 4, 3, 2);
        let cfg = CorpusConfig {
            train_snrs_db: vec![-5.0, -10.0],
            test_snrs_db: vec![-14.0, -8.0, 0.0],
            train_pairings: 3,
            test_pairings: 2,
            seed: 7,
        };
        let out = dir.path().join("data");
        let index = build_corpus(&m, &cfg, &out, Execution::Parallel).unwrap();
        assert_eq!(index.split(Split::Train).count(), 2 * 3 * 2);
        assert_eq!(index.split(Split::Test).count(), 2 * 2 * 3);
        let train_ecg: Vec<_> = index.split(Split::Train).map(|r| r.ecg_subject.clone()).collect();
        assert!(index.split(Split::Test).all(|r| !train_ecg.contains(&r.ecg_subject)));
        for r in index.load_split(&out, Split::Test, Execution::Sequential).unwrap() {
            assert!((r.measured_snr_in().unwrap() - r.target_snr_db).abs() < 1e-6);
        }
        let again = CorpusIndex::load(&out).unwrap();
        assert_eq!(again, index);
    }

    #[test]
    fn counting_example() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = write_manifest(dir.path(), 10, 5, 0);
        m.entries.iter_mut().for_each(|e| e.split = Split::Train);
        let counts = planned_counts(&m, &CorpusConfig::default()).unwrap();
        assert_eq!(counts[&Split::Train], 300);
    }

    #[test]
    fn insufficient_sources() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_manifest(dir.path(), 2, 2, 1);
        let cfg = CorpusConfig::uniform(vec![-5.0], 2, 0);
        assert!(matches!(plan_pairings(&m, &cfg), Err(Error::Corpus(_))));
    }

    #[test]
    fn pairing_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_manifest(dir.path(), 6, 4, 2);
        let cfg = CorpusConfig::uniform(vec![-5.0, -9.0], 2, 42);
        assert_eq!(plan_pairings(&m, &cfg).unwrap(), plan_pairings(&m, &cfg).unwrap());
        let other = CorpusConfig::uniform(vec![-5.0, -9.0], 2, 43);
        assert_ne!(plan_pairings(&m, &cfg).unwrap(), plan_pairings(&m, &other).unwrap());
        // Slots within a segment use distinct sources.
        for p in plan_pairings(&m, &cfg).unwrap().chunks(4) {
            assert_ne!(p[0].ecg_entry, p[2].ecg_entry);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn snr_is_exact(
            clean in prop::collection::vec(-1.0f64..1.0, 16..256),
            seed in 0u64..1000,
            target in -15.0f64..0.0,
        ) {
            prop_assume!(mean_power(&clean) > 1e-6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise: Vec<f64> = (0..clean.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let r = contaminate(&seg(clean.clone()), &seg(noise), target).unwrap();
            prop_assert!((r.measured_snr_in().unwrap() - target).abs() < 1e-6);
            for i in 0..clean.len() {
                prop_assert_eq!(r.noisy.samples()[i], clean[i] + r.noise_scaled.samples()[i]);
            }
        }
    }
}
