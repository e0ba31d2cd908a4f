//! Run configuration: profile defaults, then a TOML key-value file, then
//! command-line flags, each layer overriding the previous one.

use std::fmt;
use std::path::{Path, PathBuf};

use roadfuse::geometry::DensifyConfig;
use roadfuse::kitti_io::ImageSize;
use roadfuse::network::{ModelConfig, Precision};
use roadfuse::training::Profile;
use roadfuse::{Backbone, RfuConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Invalid or unreadable configuration. Maps to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Keys accepted in a configuration file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub profile: Option<String>,
    pub dataset_root: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub backbone: Option<String>,
    pub n_rfu: Option<usize>,
    pub densify: Option<bool>,
    pub seed: Option<u64>,
    pub split_seed: Option<u64>,
    pub precision: Option<String>,
    pub pretrained: Option<PathBuf>,

    pub batch_size: Option<usize>,
    pub lr_encoder: Option<f64>,
    pub lr_decoder: Option<f64>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub max_steps: Option<u64>,
    pub image_height: Option<usize>,
    pub image_width: Option<usize>,
    pub flip_prob: Option<f64>,
    pub val_every: Option<usize>,
    pub d_max: Option<f64>,
    pub zero_lidar: Option<bool>,

    pub fusion_channels: Option<usize>,
    pub crp_stages: Option<usize>,
    pub crp_pool_window: Option<usize>,
    pub lidar_block_layers: Option<usize>,

    pub densify_spatial_sigma: Option<f64>,
    pub densify_range_sigma: Option<f64>,
    pub densify_radius: Option<usize>,

    pub ablation_n_rfu: Option<Vec<usize>>,
    pub ablation_seeds: Option<Vec<u64>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| config_err(format!("{}: {}", path.display(), e.0)))
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub dataset_root: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub backbone: Option<Backbone>,
    pub n_rfu: Option<usize>,
    pub densify: Option<bool>,
    pub seed: Option<u64>,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub dataset_root: PathBuf,
    pub output_dir: PathBuf,
    pub backbone: Backbone,
    pub n_rfu: usize,
    pub densify: bool,
    pub seed: u64,
    /// Seed of the train/validation split, independent of the training seed.
    pub split_seed: u64,
    pub precision: Precision,
    /// Encoder weights (safetensors) loaded before training.
    pub pretrained: Option<PathBuf>,
    pub rfu: RfuConfig,
    pub densify_params: DensifyConfig,
    pub train: TrainConfig,
    pub ablation_n_rfu: Vec<usize>,
    pub ablation_seeds: Vec<u64>,
}

fn parse_with<T, E: fmt::Display>(value: &str, what: &str, f: impl Fn(&str) -> Result<T, E>) -> Result<T, ConfigError> {
    f(value).map_err(|e| config_err(format!("{what}: {e}")))
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s.to_ascii_lowercase().as_str() {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        other => Err(format!("unknown precision `{other}` (expected f32 or f64)")),
    }
}

impl RunConfig {
    /// Defaults of a profile before any file or flag is applied.
    pub fn for_profile(profile: Profile) -> Self {
        let (backbone, rfu) = match profile {
            Profile::Paper => (Backbone::Res50, RfuConfig::default()),
            Profile::Toy => (Backbone::Toy, RfuConfig::toy()),
        };
        let train = TrainConfig::for_profile(profile);
        Self {
            profile,
            dataset_root: PathBuf::from("data"),
            output_dir: PathBuf::from("runs"),
            backbone,
            n_rfu: 3,
            densify: false,
            seed: train.seed,
            split_seed: 0,
            precision: Precision::F32,
            pretrained: None,
            rfu,
            densify_params: DensifyConfig::default(),
            train,
            ablation_n_rfu: vec![1, 2, 3],
            ablation_seeds: vec![0, 1, 2],
        }
    }

    /// Layers `file` and then `flags` over the defaults of the selected
    /// profile, and validates the result.
    pub fn resolve(file: &ConfigFile, flags: &Overrides) -> Result<Self, ConfigError> {
        let profile = match (&flags.profile, &file.profile) {
            (Some(p), _) => *p,
            (None, Some(s)) => parse_with(s, "profile", str::parse::<Profile>)?,
            (None, None) => Profile::Toy,
        };
        let mut c = Self::for_profile(profile);
        c.apply_file(file)?;
        c.apply_flags(flags);
        c.sync();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self, ConfigError> {
        let file = match path {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Self::resolve(&file, flags)
    }

    fn apply_file(&mut self, f: &ConfigFile) -> Result<(), ConfigError> {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        set(&mut self.dataset_root, &f.dataset_root);
        set(&mut self.output_dir, &f.output_dir);
        if let Some(s) = &f.backbone {
            self.backbone = parse_with(s, "backbone", str::parse::<Backbone>)?;
        }
        if let Some(s) = &f.precision {
            self.precision = parse_with(s, "precision", parse_precision)?;
        }
        set(&mut self.n_rfu, &f.n_rfu);
        set(&mut self.densify, &f.densify);
        set(&mut self.seed, &f.seed);
        set(&mut self.split_seed, &f.split_seed);
        if f.pretrained.is_some() {
            self.pretrained = f.pretrained.clone();
        }

        let t = &mut self.train;
        set(&mut t.batch_size, &f.batch_size);
        set(&mut t.lr_encoder, &f.lr_encoder);
        set(&mut t.lr_decoder, &f.lr_decoder);
        set(&mut t.momentum, &f.momentum);
        set(&mut t.weight_decay, &f.weight_decay);
        set(&mut t.epochs, &f.epochs);
        if f.max_steps.is_some() {
            t.max_steps = f.max_steps;
        }
        set(&mut t.target_size.height, &f.image_height);
        set(&mut t.target_size.width, &f.image_width);
        set(&mut t.flip_prob, &f.flip_prob);
        set(&mut t.val_every, &f.val_every);
        set(&mut t.d_max, &f.d_max);
        set(&mut t.zero_lidar, &f.zero_lidar);

        set(&mut self.rfu.fusion_channels, &f.fusion_channels);
        set(&mut self.rfu.crp_stages, &f.crp_stages);
        set(&mut self.rfu.crp_pool_window, &f.crp_pool_window);
        set(&mut self.rfu.lidar_block_layers, &f.lidar_block_layers);

        set(&mut self.densify_params.spatial_sigma, &f.densify_spatial_sigma);
        set(&mut self.densify_params.range_sigma, &f.densify_range_sigma);
        set(&mut self.densify_params.radius, &f.densify_radius);

        set(&mut self.ablation_n_rfu, &f.ablation_n_rfu);
        set(&mut self.ablation_seeds, &f.ablation_seeds);
        Ok(())
    }

    fn apply_flags(&mut self, o: &Overrides) {
        if let Some(v) = &o.dataset_root {
            self.dataset_root = v.clone();
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.backbone {
            self.backbone = v;
        }
        if let Some(v) = o.n_rfu {
            self.n_rfu = v;
        }
        if let Some(v) = o.densify {
            self.densify = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
    }

    /// Copies top-level settings into the embedded training config.
    fn sync(&mut self) {
        self.train.profile = self.profile;
        self.train.seed = self.seed;
        self.train.densify = self.densify.then_some(self.densify_params);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check_rfu = |n: usize| {
            if (1..=3).contains(&n) {
                Ok(())
            } else {
                Err(config_err(format!("n_rfu must be 1, 2 or 3, got {n}")))
            }
        };
        check_rfu(self.n_rfu)?;
        if self.ablation_n_rfu.is_empty() || self.ablation_seeds.is_empty() {
            return Err(config_err("ablation_n_rfu and ablation_seeds must not be empty"));
        }
        for &n in &self.ablation_n_rfu {
            check_rfu(n)?;
        }
        let size = self.train.target_size;
        if size.height == 0 || size.width == 0 || !size.divisible_by(32) {
            return Err(config_err(format!("image size {size} must be positive and divisible by 32")));
        }
        if self.densify_params.spatial_sigma <= 0.0 || self.densify_params.range_sigma <= 0.0 {
            return Err(config_err("densify sigmas must be positive"));
        }
        self.rfu.validate().map_err(|e| config_err(e.to_string()))?;
        self.train.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        self.model_with_rfus(self.n_rfu)
    }

    pub fn model_with_rfus(&self, n_rfu: usize) -> ModelConfig {
        ModelConfig {
            backbone: self.backbone,
            n_rfu,
            rfu: self.rfu,
            precision: self.precision,
        }
    }

    pub fn target_size(&self) -> ImageSize {
        self.train.target_size
    }
}
