//! Signal containers, file formats, dataset manifests and surrogate
//! generators.

mod io;
mod manifest;
mod signal;
mod synth;

pub use io::{
    read_f32le, read_json, read_signal, read_signal_with_meta, sidecar_path, write_f32le, write_json,
    write_signal, SignalFormat, SignalMeta,
};
pub use manifest::{DatasetManifest, ManifestEntry, Role, Split};
pub use signal::{mask_to_runs, runs_to_mask, SignalSegment};
pub(crate) use signal::mean_power;
pub use synth::{
    semg_shaping_filter, synth_ecg, synth_semg, ActivationWindow, EcgWave, SyntheticEcg, ACTIVE_GAIN,
    ECG_BEAT_EXTENT_S, ECG_WAVES, REST_GAIN, SEMG_BAND_HZ,
};
