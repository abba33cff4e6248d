//! The text-guided conditional information bottleneck: model, loss with
//! analytic gradients, trainer, and checkpoints.

pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod trainer;

use std::fmt;

use crate::dto::TextGuidance;
use crate::error::{Error, Result};

pub use checkpoint::{checkpoint_load, checkpoint_save, Checkpoint};
pub use loss::{forward_backward, LossBreakdown, MmdTarget, Noise, StepOutput};
pub use model::{cgp_augment, classify, reparameterize, sigmoid, standardize, TgcibModel};
pub use trainer::{infer, learning_rate, train, EpochRecord, StepRecord, TrainLog, TrainOptions, Trainer};

/// Which conditions shape the variational target `r(z | ·)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub struct ConditionSet {
    pub standard_normal: bool,
    pub y: bool,
    pub t: bool,
}

impl ConditionSet {
    pub const FULL: ConditionSet = ConditionSet {
        standard_normal: false,
        y: true,
        t: true,
    };

    /// Parses a comma list of `n`/`normal`, `y`, `t` (`none` for the empty set).
    pub fn parse(s: &str) -> Result<Self> {
        let mut c = ConditionSet::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "n" | "normal" | "n01" | "standard-normal" => c.standard_normal = true,
                "y" => c.y = true,
                "t" => c.t = true,
                "none" => {}
                other => return Err(Error::InvalidParam(format!("unknown condition '{other}'"))),
            }
        }
        Ok(c)
    }

    pub fn target(self) -> MmdTarget {
        match (self.t, self.y) {
            (true, true) => MmdTarget::TextPerClass,
            (true, false) => MmdTarget::TextJoint,
            (false, true) => MmdTarget::ClassAxes,
            (false, false) => MmdTarget::Origin,
        }
    }
}

impl fmt::Display for ConditionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.standard_normal {
            parts.push("n");
        }
        if self.y {
            parts.push("y");
        }
        if self.t {
            parts.push("t");
        }
        if parts.is_empty() {
            write!(f, "none")
        } else {
            write!(f, "{}", parts.join(","))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub beta: f64,
    pub lp: u32,
    pub hidden: usize,
    pub batch: usize,
    pub lr0: f64,
    pub decay_power: f64,
    pub cgp_mu: f64,
    pub cgp_sigma: f64,
    pub epochs: usize,
    pub seed: u64,
    pub conditions: ConditionSet,
    pub cgp_enabled: bool,
    pub mmd_enabled: bool,
    /// Treat the text targets as constants (no gradient into the text projection).
    pub detach_mu_r: bool,
    pub guidance: TextGuidance,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            beta: 0.15,
            lp: 512,
            hidden: 64,
            batch: 512,
            lr0: 0.25,
            decay_power: 0.8,
            cgp_mu: 0.5,
            cgp_sigma: 0.4,
            epochs: 10,
            seed: 0,
            conditions: ConditionSet::FULL,
            cgp_enabled: true,
            mmd_enabled: true,
            detach_mu_r: false,
            guidance: TextGuidance::Dto,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidParam(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.cgp_sigma >= 0.0) {
            return Err(Error::InvalidParam(format!("cgp_sigma must be >= 0, got {}", self.cgp_sigma)));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidParam("hidden dim must be >= 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidParam("batch size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParam("epochs must be >= 1".into()));
        }
        if !(self.lr0 >= 0.0) || !(self.decay_power >= 0.0) {
            return Err(Error::InvalidParam("learning-rate schedule must be nonnegative".into()));
        }
        Ok(())
    }

    /// Whether the loss reads text features per record.
    pub fn needs_record_text(&self) -> bool {
        self.mmd_enabled && self.conditions.t && !self.guidance.is_fixed()
    }

    /// Deterministic `key=value` lines, one per field.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        put("beta", self.beta.to_string());
        put("lp", self.lp.to_string());
        put("hidden", self.hidden.to_string());
        put("batch", self.batch.to_string());
        put("lr0", self.lr0.to_string());
        put("decay_power", self.decay_power.to_string());
        put("cgp_mu", self.cgp_mu.to_string());
        put("cgp_sigma", self.cgp_sigma.to_string());
        put("epochs", self.epochs.to_string());
        put("seed", self.seed.to_string());
        put("conditions", self.conditions.to_string());
        put("cgp", self.cgp_enabled.to_string());
        put("mmd", self.mmd_enabled.to_string());
        put("detach_mu_r", self.detach_mu_r.to_string());
        put("guidance", self.guidance.name().to_string());
        s
    }

    /// Applies one `key=value` setting; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad value '{v}' for {key}")))
        }
        match key.trim() {
            "beta" => self.beta = p(key, value)?,
            "lp" => self.lp = p(key, value)?,
            "hidden" => self.hidden = p(key, value)?,
            "batch" => self.batch = p(key, value)?,
            "lr0" => self.lr0 = p(key, value)?,
            "decay_power" => self.decay_power = p(key, value)?,
            "cgp_mu" => self.cgp_mu = p(key, value)?,
            "cgp_sigma" => self.cgp_sigma = p(key, value)?,
            "epochs" => self.epochs = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "conditions" => self.conditions = ConditionSet::parse(value)?,
            "cgp" => self.cgp_enabled = p(key, value)?,
            "mmd" => self.mmd_enabled = p(key, value)?,
            "detach_mu_r" => self.detach_mu_r = p(key, value)?,
            "guidance" => {
                self.guidance = TextGuidance::parse(value.trim())
                    .ok_or_else(|| Error::InvalidParam(format!("unknown guidance '{value}'")))?
            }
            other => return Err(Error::InvalidParam(format!("unknown hyperparameter '{other}'"))),
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut hp = Hyperparams::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad hyperparameter line '{line}'")))?;
            hp.set(k, v)?;
        }
        Ok(hp)
    }
}
