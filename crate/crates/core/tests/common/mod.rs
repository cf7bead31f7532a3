#![allow(dead_code)]

use igcl::expcli::{prepare, ExperimentConfig, Prepared};
use igcl::siggen::{synth_dataset, Dataset};

/// A config small enough to train every cell in a few seconds.
pub const SMALL_TOML: &str = r#"
seed = 3
repeats = 2
xe_epochs = 2

[synth]
n_stations = 3
n_channels = 2
n_classes = 3
events_per_class = 8
divergence = [1.0]
seed = 21

[split]
seed = 4

[features]
freq_bands = 8
time_frames = 2

[model]
encoder_widths = [16]
head_hidden = 16
embed_dim = 8

[train]
epochs = 2
finetune_epochs = 1
n_e = 16
batch_size = 32
"#;

pub fn small_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(SMALL_TOML).unwrap()
}

pub fn small_dataset(cfg: &ExperimentConfig) -> Dataset {
    Dataset { config: cfg.synth.clone(), streams: synth_dataset(&cfg.synth).unwrap() }
}

pub fn small_prepared() -> (ExperimentConfig, Prepared) {
    let cfg = small_config();
    let prepared = prepare(&cfg, &small_dataset(&cfg)).unwrap();
    (cfg, prepared)
}
