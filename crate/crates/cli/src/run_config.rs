//! Effective run settings: built-in defaults, overridden by an optional
//! `key = value` config file, overridden by command-line flags. Unknown keys
//! in the file are errors; every effective value is reported with its source.

use std::path::Path;

use tornet_core::error::{Error, Result};
use tornet_core::optim::AdamConfig;
use tornet_core::train::{ClassWeighting, TrainConfig};

use crate::TrainArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Default,
    File,
    Flag,
}

impl Source {
    fn name(self) -> &'static str {
        match self {
            Source::Default => "default",
            Source::File => "config file",
            Source::Flag => "flag",
        }
    }
}

struct Setting<T> {
    value: T,
    source: Source,
}

impl<T> Setting<T> {
    fn new(value: T) -> Setting<T> {
        Setting {
            value,
            source: Source::Default,
        }
    }

    fn set(&mut self, value: T, source: Source) {
        self.value = value;
        self.source = source;
    }
}

pub struct RunSettings {
    pub variant: String,
    pub train: TrainConfig,
    describe: Vec<String>,
}

impl RunSettings {
    pub fn describe(&self) -> &[String] {
        &self.describe
    }

    pub fn resolve(args: &TrainArgs) -> Result<RunSettings> {
        let mut lr = Setting::new(1e-5);
        let mut batch_size = Setting::new(16usize);
        let mut epochs: Setting<Option<usize>> = Setting::new(None);
        let mut seed = Setting::new(42u64);
        let mut variant = Setting::new("default".to_string());
        let mut patience: Setting<Option<usize>> = Setting::new(None);
        let mut class_weighting = Setting::new(ClassWeighting::Off);
        let mut grad_clip: Setting<Option<f64>> = Setting::new(None);
        let mut target_uar: Setting<Option<f64>> = Setting::new(None);
        let mut single_thread = Setting::new(false);

        if let Some(path) = &args.config {
            let pairs = parse_config_file(path)?;
            for (line, key, value) in pairs {
                let bad = |what: &str| {
                    Error::Parse {
                        line,
                        msg: format!("{what} '{value}' for key '{key}'"),
                    }
                };
                match key.as_str() {
                    "lr" => lr.set(value.parse().map_err(|_| bad("bad number"))?, Source::File),
                    "batch_size" => batch_size
                        .set(value.parse().map_err(|_| bad("bad integer"))?, Source::File),
                    "epochs" => epochs.set(
                        Some(value.parse().map_err(|_| bad("bad integer"))?),
                        Source::File,
                    ),
                    "seed" => {
                        seed.set(value.parse().map_err(|_| bad("bad integer"))?, Source::File)
                    }
                    "variant" => variant.set(value.clone(), Source::File),
                    "patience" => patience.set(
                        Some(value.parse().map_err(|_| bad("bad integer"))?),
                        Source::File,
                    ),
                    "class_weighting" => class_weighting
                        .set(parse_weighting(&value).ok_or_else(|| bad("bad value"))?, Source::File),
                    "grad_clip" => grad_clip.set(
                        Some(value.parse().map_err(|_| bad("bad number"))?),
                        Source::File,
                    ),
                    "target_uar" => target_uar.set(
                        Some(value.parse().map_err(|_| bad("bad number"))?),
                        Source::File,
                    ),
                    "single_thread" => single_thread.set(
                        value.parse().map_err(|_| bad("bad boolean"))?,
                        Source::File,
                    ),
                    _ => {
                        return Err(Error::Parse {
                            line,
                            msg: format!("unknown config key '{key}'"),
                        })
                    }
                }
            }
        }

        if let Some(v) = args.lr {
            lr.set(v, Source::Flag);
        }
        if let Some(v) = args.batch_size {
            batch_size.set(v, Source::Flag);
        }
        if let Some(v) = args.epochs {
            epochs.set(Some(v), Source::Flag);
        }
        if let Some(v) = args.seed {
            seed.set(v, Source::Flag);
        }
        if let Some(v) = &args.variant {
            variant.set(v.clone(), Source::Flag);
        }
        if let Some(v) = args.patience {
            patience.set(Some(v), Source::Flag);
        }
        if let Some(v) = &args.class_weighting {
            class_weighting.set(
                parse_weighting(v)
                    .ok_or_else(|| Error::config(format!("bad --class-weighting '{v}'")))?,
                Source::Flag,
            );
        }
        if let Some(v) = args.grad_clip {
            grad_clip.set(Some(v), Source::Flag);
        }
        if let Some(v) = args.target_uar {
            target_uar.set(Some(v), Source::Flag);
        }
        if args.single_thread {
            single_thread.set(true, Source::Flag);
        }

        let max_epochs = epochs.value.ok_or_else(|| {
            Error::config("epoch count required: pass --epochs or set 'epochs' in the config file".to_string())
        })?;
        if max_epochs == 0 {
            return Err(Error::config(
                "--epochs 0: no epoch would be trained".to_string(),
            ));
        }

        let train = TrainConfig {
            adam: AdamConfig {
                lr: lr.value,
                ..AdamConfig::default()
            },
            batch_size: batch_size.value,
            max_epochs,
            seed: seed.value,
            patience: patience.value,
            class_weighting: class_weighting.value,
            grad_clip: grad_clip.value,
            target_uar: target_uar.value,
            deterministic: single_thread.value,
        };
        train.validate()?;

        let describe = vec![
            format!("variant = {} ({})", variant.value, variant.source.name()),
            format!("lr = {} ({})", lr.value, lr.source.name()),
            format!("batch_size = {} ({})", batch_size.value, batch_size.source.name()),
            format!("epochs = {} ({})", max_epochs, epochs.source.name()),
            format!("seed = {} ({})", seed.value, seed.source.name()),
            format!(
                "patience = {} ({})",
                patience.value.map_or("off".to_string(), |p| p.to_string()),
                patience.source.name()
            ),
            format!(
                "class_weighting = {} ({})",
                match class_weighting.value {
                    ClassWeighting::Off => "off",
                    ClassWeighting::Balanced => "balanced",
                },
                class_weighting.source.name()
            ),
            format!(
                "grad_clip = {} ({})",
                grad_clip.value.map_or("off".to_string(), |c| c.to_string()),
                grad_clip.source.name()
            ),
            format!(
                "target_uar = {} ({})",
                target_uar.value.map_or("off".to_string(), |t| t.to_string()),
                target_uar.source.name()
            ),
            format!(
                "single_thread = {} ({})",
                single_thread.value,
                single_thread.source.name()
            ),
        ];

        Ok(RunSettings {
            variant: variant.value,
            train,
            describe,
        })
    }
}

fn parse_weighting(text: &str) -> Option<ClassWeighting> {
    match text {
        "off" => Some(ClassWeighting::Off),
        "balanced" => Some(ClassWeighting::Balanced),
        _ => None,
    }
}

/// `key = value` lines; `#` starts a comment.
fn parse_config_file(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(Error::Parse {
            line: i + 1,
            msg: format!("expected 'key = value', got '{raw}'"),
        })?;
        pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}
