//! Training configuration and its flat `key = value` file format.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sacloss::{SacConfig, SamplingMode, SignConvention};
use crate::surround::sigma_for_side;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Multiplicative learning-rate decay per `decay_period` epochs.
    pub decay: f64,
    pub decay_period: usize,
    pub max_epochs: usize,
    pub batch: usize,
    pub side: usize,
    /// Surrounding-label spread in pixels at `side`.
    pub sigma: f64,
    /// `None` disables the contrastive term.
    pub sac: Option<SacConfig>,
    pub sac_weight: f64,
    pub seed: u64,
    pub train_samples: usize,
    pub holdout: usize,
    pub difficulty: f64,
    pub channels: [usize; 4],
    pub fusion_channels: usize,
    /// Supervise the surrounding head with the soft label instead of its
    /// binarization.
    pub soft_surround_target: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let side = 64;
        Self {
            lr0: 5e-3,
            decay: 0.1,
            decay_period: 10,
            max_epochs: 30,
            batch: 4,
            side,
            sigma: sigma_for_side(side),
            sac: Some(SacConfig::default()),
            sac_weight: 1.0,
            seed: 0,
            train_samples: 32,
            holdout: 8,
            difficulty: 0.5,
            channels: [8, 16, 32, 64],
            fusion_channels: 8,
            soft_surround_target: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

impl TrainConfig {
    /// `lr0 · decay^(epoch / decay_period)` with a real-valued exponent.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.decay.powf(epoch as f64 / self.decay_period as f64)
    }

    /// Threshold separating surrounding pixels, shared with the surrounding
    /// head's binarized target.
    pub fn surround_threshold(&self) -> f64 {
        self.sac
            .map_or(SacConfig::default().surround_threshold, |s| {
                s.surround_threshold
            })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        if self.decay_period == 0 {
            return bad("decay_period must be at least 1".into());
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if self.side < 48 || !self.side.is_multiple_of(16) {
            return bad(format!(
                "side must be a multiple of 16 and at least 48, got {}",
                self.side
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(0.0..=1.0).contains(&self.difficulty) {
            return bad(format!(
                "difficulty must lie in [0, 1], got {}",
                self.difficulty
            ));
        }
        if self.channels.contains(&0) || self.fusion_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if !(self.sac_weight >= 0.0 && self.sac_weight.is_finite()) {
            return bad(format!(
                "sac_weight must be non-negative, got {}",
                self.sac_weight
            ));
        }
        if self.train_samples == 0 {
            return bad("train_samples must be at least 1".into());
        }
        if let Some(s) = &self.sac {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are ignored;
    /// unspecified keys keep their defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut sac = SacConfig::default();
        let mut sac_on = true;
        let mut sigma_set = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            match key {
                "lr0" => cfg.lr0 = parse(key, value)?,
                "decay" => cfg.decay = parse(key, value)?,
                "decay_period" => cfg.decay_period = parse(key, value)?,
                "max_epochs" => cfg.max_epochs = parse(key, value)?,
                "batch" => cfg.batch = parse(key, value)?,
                "side" => cfg.side = parse(key, value)?,
                "sigma" => {
                    cfg.sigma = parse(key, value)?;
                    sigma_set = true;
                }
                "seed" => cfg.seed = parse(key, value)?,
                "train_samples" => cfg.train_samples = parse(key, value)?,
                "holdout" => cfg.holdout = parse(key, value)?,
                "difficulty" => cfg.difficulty = parse(key, value)?,
                "fusion_channels" => cfg.fusion_channels = parse(key, value)?,
                "soft_surround_target" => cfg.soft_surround_target = parse(key, value)?,
                "sac_weight" => cfg.sac_weight = parse(key, value)?,
                "sac_margin" => sac.margin = parse(key, value)?,
                "sac_threshold" => sac.surround_threshold = parse(key, value)?,
                "sac_sign" => {
                    sac.sign_convention = value
                        .parse::<SignConvention>()
                        .map_err(|e| Error::Config(e.to_string()))?
                }
                "sac_mode" => {
                    if value == "off" {
                        sac_on = false;
                    } else {
                        sac_on = true;
                        sac.mode = value
                            .parse::<SamplingMode>()
                            .map_err(|e| Error::Config(e.to_string()))?;
                    }
                }
                "channels" => {
                    let parts: Vec<usize> = value
                        .split(',')
                        .map(|p| parse(key, p.trim()))
                        .collect::<Result<_>>()?;
                    cfg.channels = parts
                        .try_into()
                        .map_err(|_| Error::Config("channels needs four entries".into()))?;
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {other:?}",
                        n + 1
                    )))
                }
            }
        }
        if !sigma_set {
            cfg.sigma = sigma_for_side(cfg.side);
        }
        cfg.sac = sac_on.then_some(sac);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&text)
    }

    /// Inverse of [`TrainConfig::from_kv`].
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let sac = self.sac.unwrap_or_default();
        let sign = match sac.sign_convention {
            SignConvention::PaperLiteral => "literal",
            SignConvention::ProseIntent => "hinge",
        };
        let c = self.channels;
        let _ = write!(
            out,
            "lr0 = {}\ndecay = {}\ndecay_period = {}\nmax_epochs = {}\nbatch = {}\nside = {}\n\
             sigma = {}\nseed = {}\ntrain_samples = {}\nholdout = {}\ndifficulty = {}\n\
             channels = {},{},{},{}\nfusion_channels = {}\nsoft_surround_target = {}\n\
             sac_mode = {}\nsac_weight = {}\nsac_margin = {}\nsac_threshold = {}\nsac_sign = {}\n",
            self.lr0,
            self.decay,
            self.decay_period,
            self.max_epochs,
            self.batch,
            self.side,
            self.sigma,
            self.seed,
            self.train_samples,
            self.holdout,
            self.difficulty,
            c[0],
            c[1],
            c[2],
            c[3],
            self.fusion_channels,
            self.soft_surround_target,
            self.sac.map_or("off", |s| s.mode.as_str()),
            self.sac_weight,
            sac.margin,
            sac.surround_threshold,
            sign,
        );
        out
    }
}
