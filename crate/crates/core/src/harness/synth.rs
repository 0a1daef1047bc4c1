//! Surrogate dataset: activation-protocol sEMG segments and band-limited
//! ECG sources, written as signal files plus a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::plan::SurrogatePlan;
use crate::dsp::{design_butterworth, filtfilt, normalize_max_abs, FilterKind};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ingestion::{
    synth_ecg, synth_semg, write_signal, ActivationWindow, DatasetManifest, ManifestEntry, Role, SignalFormat,
    SignalMeta, SignalSegment, Split,
};

pub const MANIFEST_NAME: &str = "manifest.json";
const HR_RANGE_BPM: (f64, f64) = (55.0, 95.0);
const HR_JITTER: f64 = 0.05;

fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Movement/rest cycles starting at a random phase.
pub fn activation_protocol(plan: &SurrogatePlan, rng: &mut impl Rng) -> Vec<ActivationWindow> {
    let cycle = plan.active_s + plan.rest_s;
    let mut t = rng.gen_range(0.0..cycle) - cycle;
    let mut out = Vec::new();
    while t < plan.segment_s {
        let (a, b) = (t.max(0.0), (t + plan.active_s).min(plan.segment_s));
        if b > a {
            out.push(ActivationWindow::new(a, b));
        }
        t += cycle;
    }
    out
}

/// One clean segment, normalized to unit peak amplitude.
pub fn surrogate_semg(plan: &SurrogatePlan, seed: u64) -> Result<SignalSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let windows = activation_protocol(plan, &mut rng);
    let x = synth_semg(plan.segment_s, plan.fs, &windows, rng.gen())?;
    Ok(normalize_max_abs(&x)?.0)
}

/// One ECG source after the zero-phase band-limiting filters.
pub fn surrogate_ecg(plan: &SurrogatePlan, seed: u64) -> Result<SignalSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hr = rng.gen_range(HR_RANGE_BPM.0..HR_RANGE_BPM.1);
    let raw = synth_ecg(plan.ecg_s, plan.fs, hr, HR_JITTER, rng.gen())?.signal;
    let (lo, hi) = plan.ecg_band_hz;
    let hp = design_butterworth(plan.ecg_filter_order, FilterKind::Highpass, &[lo], plan.fs)?;
    let lp = design_butterworth(plan.ecg_filter_order, FilterKind::Lowpass, &[hi], plan.fs)?;
    filtfilt(&lp, &filtfilt(&hp, &raw)?)
}

struct Item {
    path: PathBuf,
    role: Role,
    subject: String,
    channel: u32,
    split: Split,
    seed: u64,
}

/// Writes every signal under `out_dir` and returns the saved manifest.
pub fn synthesize_dataset(plan: &SurrogatePlan, seed: u64, out_dir: &Path, exec: Execution) -> Result<DatasetManifest> {
    let mut items = Vec::new();
    let semg_splits = [
        (Split::Train, plan.train_segments),
        (Split::Validation, plan.validation_segments),
        (Split::Test, plan.test_segments),
    ];
    for (tag, (split, n)) in semg_splits.into_iter().enumerate() {
        for i in 0..n {
            let channel = match split {
                Split::Test => plan.test_channels[i % plan.test_channels.len()],
                _ => plan.train_channel,
            };
            items.push(Item {
                path: PathBuf::from(format!("semg/{}_{i:03}.f32", split.as_str())),
                role: Role::Semg,
                subject: format!("semg-{}-{i:03}", split.as_str()),
                channel,
                split,
                seed: derive_seed(seed, tag as u64 + 1, i as u64),
            });
        }
    }
    for (tag, (split, n)) in [(Split::Train, plan.train_ecg_subjects), (Split::Test, plan.test_ecg_subjects)]
        .into_iter()
        .enumerate()
    {
        for i in 0..n {
            items.push(Item {
                path: PathBuf::from(format!("ecg/{}_{i:02}.f32", split.as_str())),
                role: Role::Ecg,
                subject: format!("ecg-{}-{i:02}", split.as_str()),
                channel: 1,
                split,
                seed: derive_seed(seed, tag as u64 + 11, i as u64),
            });
        }
    }
    for sub in ["semg", "ecg"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let written: Vec<Result<()>> = exec.map(&items, |it| {
        let x = match it.role {
            Role::Semg => surrogate_semg(plan, it.seed)?,
            Role::Ecg => surrogate_ecg(plan, it.seed)?,
        };
        let meta = SignalMeta {
            channel: Some(it.channel),
            subject: Some(it.subject.clone()),
            ..SignalMeta::for_signal(&x)
        };
        write_signal(&out_dir.join(&it.path), &x, SignalFormat::RawF32Le, &meta)
    });
    written.into_iter().collect::<Result<Vec<()>>>()?;
    let entries = items
        .into_iter()
        .map(|it| ManifestEntry {
            path: it.path,
            role: it.role,
            subject: it.subject,
            channel: it.channel,
            fs: plan.fs,
            split: it.split,
        })
        .collect();
    let manifest = DatasetManifest::new(entries, out_dir)?;
    manifest.save(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}
