use std::path::Path;

use serde::{Deserialize, Serialize};

use avfield::anerf::{ANerfConfig, Fusion};
use avfield::dsp::StftConfig;
use avfield::error::{Error, Result};
use avfield::nn::AdamConfig;
use avfield::train::TrainConfig;

/// Everything a training run depends on besides the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Spectrogram settings; the number of frequency bins follows from `n_fft`.
    pub stft: StftConfig,
    /// Acoustic field. `num_bins` and `bounds` are filled in from `stft` and the
    /// dataset's scene when training starts.
    pub anerf: ANerfConfig,
    pub vnerf: VisualStage,
    pub ir: IrStage,
    /// Seed of the frozen image encoder.
    pub encoder_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 100,
            batch_size: 32,
            adam: AdamConfig::default(),
            stft: StftConfig::default(),
            anerf: ANerfConfig::default(),
            vnerf: VisualStage::default(),
            ir: IrStage::default(),
            encoder_seed: 0,
        }
    }
}

/// Radiance-field pretraining that precedes the acoustic stage when the AV
/// mapper is on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisualStage {
    pub width: usize,
    pub position_frequencies: usize,
    pub direction_frequencies: usize,
    pub samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Rays per training example.
    pub bundle: usize,
    pub adam: AdamConfig,
}

impl Default for VisualStage {
    fn default() -> Self {
        Self {
            width: 32,
            position_frequencies: 10,
            direction_frequencies: 4,
            samples: 32,
            epochs: 4,
            batch_size: 4,
            bundle: 32,
            adam: AdamConfig {
                lr_init: 5e-3,
                lr_final: 5e-4,
                ..AdamConfig::default()
            },
        }
    }
}

/// Network size of the impulse-response field. Its training schedule is the
/// run's `epochs`/`batch_size`/`adam` and it follows `anerf.coordinate_transform`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrStage {
    pub width: usize,
    pub pe_frequencies: usize,
    pub time_frequencies: usize,
}

impl Default for IrStage {
    fn default() -> Self {
        Self {
            width: 32,
            pe_frequencies: 10,
            time_frequencies: 10,
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub width: Option<usize>,
    pub lr_init: Option<f64>,
    pub lr_final: Option<f64>,
    pub coordinate_transform: Option<bool>,
    pub av_mapper: Option<bool>,
    pub fusion: Option<Fusion>,
    pub refine: Option<bool>,
    pub vnerf_epochs: Option<usize>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.stft.validate()?;
        let mut a = self.anerf.clone();
        a.num_bins = self.stft.num_bins();
        a.validate()?;
        let v = &self.vnerf;
        if v.width < 2 || v.samples < 2 || v.bundle == 0 || v.batch_size == 0 {
            return Err(Error::Config(format!("invalid radiance-field stage {v:?}")));
        }
        v.adam.validate()?;
        if self.ir.width < 2 {
            return Err(Error::Config("impulse-response width must be at least 2".into()));
        }
        Ok(())
    }

    /// Reads a config file; absent keys take their defaults, unknown keys are
    /// rejected.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Config(format!("cannot read {}: {e}", path.display())),
        })?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.epochs {
            self.epochs = v;
        }
        if let Some(v) = o.batch_size {
            self.batch_size = v;
        }
        if let Some(v) = o.width {
            self.anerf.width = v;
        }
        if let Some(v) = o.lr_init {
            self.adam.lr_init = v;
        }
        if let Some(v) = o.lr_final {
            self.adam.lr_final = v;
        }
        if let Some(v) = o.coordinate_transform {
            self.anerf.coordinate_transform = v;
        }
        if let Some(v) = o.av_mapper {
            self.anerf.av_mapper = v;
        }
        if let Some(v) = o.fusion {
            self.anerf.fusion = v;
        }
        if let Some(v) = o.refine {
            self.anerf.refine = v;
        }
        if let Some(v) = o.vnerf_epochs {
            self.vnerf.epochs = v;
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: self.adam,
            seed: self.seed,
        }
    }
}
