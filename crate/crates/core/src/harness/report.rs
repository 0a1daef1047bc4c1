//! Per-figure tables (CSV) and static SVG charts built from report CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::pipeline::waveform_dir;
use super::plan::{ExperimentPlan, Method};
use super::svg::{line_chart, Series};
use crate::error::{Error, Result};
use crate::ingestion::read_f32le;
use crate::metrics::{fmt_f64, MetricsReport, OrdF64};
use crate::mixer::{ContaminationRecord, CorpusIndex};

pub const COMBINED: &str = "report.csv";
pub const BY_CHANNEL: &str = "snr_imp_by_channel.csv";
pub const BY_SNR: &str = "snr_imp_by_input_snr.csv";
pub const CRITERIA: &str = "criteria.csv";
pub const WAVEFORM: &str = "waveform.csv";

/// Files written by [`write_tables`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportTables {
    pub combined: PathBuf,
    pub by_channel: PathBuf,
    pub by_snr: PathBuf,
    pub criteria: PathBuf,
    /// Absent when no denoised waveform was kept for the chosen record.
    pub waveform: Option<PathBuf>,
    pub charts: Vec<PathBuf>,
    /// Per-record rows read from the inputs.
    pub records: usize,
}

/// Concatenates report CSVs, keeping only per-record rows.
pub fn load_reports(paths: &[PathBuf]) -> Result<MetricsReport> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(MetricsReport::load(p)?.records().cloned());
    }
    Ok(MetricsReport { rows })
}

/// Per-record rows followed by one aggregate row per (method, input SNR).
pub fn combined(report: &MetricsReport) -> MetricsReport {
    let mut rows: Vec<_> = report.records().cloned().collect();
    rows.extend(report.aggregate_rows());
    MetricsReport { rows }
}

fn channel_key(c: &str) -> (u64, String) {
    (c.parse().unwrap_or(u64::MAX), c.to_string())
}

pub fn by_channel_csv(report: &MetricsReport) -> String {
    let mut s = String::from("method,channel,records,snr_imp\n");
    for ((method, (_, channel)), (m, n)) in report.aggregate_by(|r| (r.method.clone(), channel_key(&r.channel))) {
        let _ = writeln!(s, "{method},{channel},{n},{}", fmt_f64(m.snr_imp));
    }
    s
}

pub fn by_snr_csv(report: &MetricsReport) -> String {
    let mut s = String::from("method,target_snr_db,records,snr_in,snr_out,snr_imp\n");
    for ((method, snr), (m, n)) in report.aggregate_by(|r| (r.method.clone(), OrdF64(r.target_snr_db))) {
        let _ = writeln!(
            s,
            "{method},{},{n},{},{},{}",
            fmt_f64(snr.0),
            fmt_f64(m.snr_in),
            fmt_f64(m.snr_out),
            fmt_f64(m.snr_imp)
        );
    }
    s
}

pub fn criteria_csv(report: &MetricsReport, channel: u32, snrs_db: &[f64]) -> String {
    let mut s = String::from("method,channel,target_snr_db,records,snr_imp,rmse,arv_rmse,mf_rmse\n");
    let channel = channel.to_string();
    let sub = MetricsReport {
        rows: report
            .records()
            .filter(|r| r.channel == channel && snrs_db.contains(&r.target_snr_db))
            .cloned()
            .collect(),
    };
    for ((method, snr), (m, n)) in sub.aggregate_by(|r| (r.method.clone(), OrdF64(r.target_snr_db))) {
        let _ = writeln!(
            s,
            "{method},{channel},{},{n},{},{},{},{}",
            fmt_f64(snr.0),
            fmt_f64(m.snr_imp),
            fmt_f64(m.rmse),
            fmt_f64(m.arv_rmse),
            fmt_f64(m.mf_rmse)
        );
    }
    s
}

/// Mean SNR improvement per method and input SNR.
pub fn snr_curve(report: &MetricsReport) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for ((method, snr), (m, _)) in report.aggregate_by(|r| (r.method.clone(), OrdF64(r.target_snr_db))) {
        out.entry(method).or_default().push((snr.0, m.snr_imp));
    }
    out
}

struct Waveform {
    record: String,
    fs: f64,
    start: usize,
    columns: Vec<(String, Vec<f64>)>,
}

/// Picks the first record (by id) kept by every method and cuts the window.
fn waveform(plan: &ExperimentPlan, methods: &[Method]) -> Result<Option<Waveform>> {
    let mut common: Option<Vec<String>> = None;
    for &m in methods {
        let dir = waveform_dir(plan, m);
        let Ok(read) = fs::read_dir(&dir) else {
            return Ok(None);
        };
        let mut ids: Vec<String> = read
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".f32").map(str::to_string)
            })
            .collect();
        ids.sort();
        common = Some(match common {
            None => ids,
            Some(prev) => prev.into_iter().filter(|i| ids.contains(i)).collect(),
        });
    }
    let Some(record) = common.and_then(|c| c.into_iter().next()) else {
        return Ok(None);
    };
    let rec = ContaminationRecord::load(&CorpusIndex::record_dir(&plan.corpus_dir(), &record))?;
    let fs_hz = rec.clean.fs();
    let start = ((plan.waveform.start_s * fs_hz).round() as usize).min(rec.clean.len());
    let end = (start + (plan.waveform.duration_s * fs_hz).round() as usize).min(rec.clean.len());
    let mut columns = vec![
        ("clean".to_string(), rec.clean.samples()[start..end].to_vec()),
        ("noisy".to_string(), rec.noisy.samples()[start..end].to_vec()),
    ];
    for &m in methods {
        let path = waveform_dir(plan, m).join(format!("{record}.f32"));
        let y = read_f32le(&path)?;
        if y.len() != rec.clean.len() {
            return Err(Error::format(&path, "denoised waveform", "length differs from the record"));
        }
        columns.push((m.as_str().to_string(), y[start..end].to_vec()));
    }
    Ok(Some(Waveform {
        record,
        fs: fs_hz,
        start,
        columns,
    }))
}

fn waveform_csv(w: &Waveform) -> String {
    let mut s = String::from("time_s");
    for (name, _) in &w.columns {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for i in 0..w.columns[0].1.len() {
        s.push_str(&fmt_f64((w.start + i) as f64 / w.fs));
        for (_, v) in &w.columns {
            s.push(',');
            s.push_str(&fmt_f64(v[i]));
        }
        s.push('\n');
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads report CSVs and writes every table and chart into `out_dir`.
pub fn write_tables(plan: &ExperimentPlan, reports: &[PathBuf], out_dir: &Path) -> Result<ReportTables> {
    let report = load_reports(reports)?;
    let records = report.records().count();
    if records == 0 {
        return Err(Error::Corpus("the report inputs contain no records".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut t = ReportTables {
        combined: out_dir.join(COMBINED),
        by_channel: out_dir.join(BY_CHANNEL),
        by_snr: out_dir.join(BY_SNR),
        criteria: out_dir.join(CRITERIA),
        records,
        ..Default::default()
    };
    write(&t.combined, &combined(&report).to_csv())?;
    write(&t.by_channel, &by_channel_csv(&report))?;
    write(&t.by_snr, &by_snr_csv(&report))?;
    write(&t.criteria, &criteria_csv(&report, plan.criteria_channel, &plan.criteria_snrs_db))?;

    let curve = snr_curve(&report);
    let series: Vec<Series> = curve.iter().map(|(m, pts)| Series::new(m, pts.clone())).collect();
    let chart = out_dir.join("snr_imp_by_input_snr.svg");
    write(&chart, &line_chart("SNR improvement vs input SNR", "input SNR (dB)", "SNR_imp (dB)", &series))?;
    t.charts.push(chart);

    let mut channels: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for ((method, (c, _)), (m, _)) in report.aggregate_by(|r| (r.method.clone(), channel_key(&r.channel))) {
        if c != u64::MAX {
            channels.entry(method).or_default().push((c as f64, m.snr_imp));
        }
    }
    let series: Vec<Series> = channels.iter().map(|(m, pts)| Series::new(m, pts.clone())).collect();
    let chart = out_dir.join("snr_imp_by_channel.svg");
    write(&chart, &line_chart("SNR improvement per channel", "channel", "SNR_imp (dB)", &series))?;
    t.charts.push(chart);

    let methods: Vec<Method> = {
        let mut present: Vec<Method> = report.records().filter_map(|r| r.method.parse().ok()).collect();
        present.sort();
        present.dedup();
        present
    };
    if let Some(w) = waveform(plan, &methods)? {
        let path = out_dir.join(WAVEFORM);
        write(&path, &waveform_csv(&w))?;
        t.waveform = Some(path);
        let series: Vec<Series> = w
            .columns
            .iter()
            .map(|(name, v)| {
                let pts = v.iter().enumerate().map(|(i, &y)| ((w.start + i) as f64 / w.fs, y)).collect();
                Series::new(name, pts)
            })
            .collect();
        let chart = out_dir.join("waveform.svg");
        let title = format!("Waveforms of {}", w.record);
        write(&chart, &line_chart(&title, "time (s)", "amplitude", &series))?;
        t.charts.push(chart);
    }
    Ok(t)
}
