//! Training configuration and its flat `key=value` file form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{KgeError, Result};
use crate::models::ModelKind;
use crate::regularizers::{RegKind, RegSpec, SmootherKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
    /// Parameters are rounded to 32-bit floats after every optimizer step.
    F32,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = KgeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f64" => Ok(Precision::F64),
            "f32" => Ok(Precision::F32),
            other => Err(KgeError::Config(format!("unknown precision '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Evaluate on the validation split every this many epochs (0 disables).
    pub valid_every: usize,
    pub w0: f64,
    pub reg: RegSpec,
    pub precision: Precision,
    pub init_scale: f64,
    pub adagrad_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Cp,
            dim: 200,
            batch_size: 1000,
            learning_rate: 0.1,
            epochs: 200,
            seed: 0,
            valid_every: 5,
            w0: 0.0,
            reg: RegSpec::default(),
            precision: Precision::F64,
            init_scale: 1e-3,
            adagrad_eps: 1e-10,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "model",
    "dim",
    "batch",
    "lr",
    "epochs",
    "seed",
    "valid_every",
    "w0",
    "reg",
    "lambda",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda4",
    "smoother",
    "smoother_weight",
    "conjugate_tail_projection",
    "precision",
    "init_scale",
    "adagrad_eps",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| KgeError::Config(format!("invalid value '{value}' for '{key}'")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(KgeError::Config("batch size must be >= 1".into()));
        }
        if self.dim == 0 {
            return Err(KgeError::Config("embedding size must be >= 1".into()));
        }
        if self.model.is_complex() && !self.dim.is_multiple_of(2) {
            return Err(KgeError::Config(format!(
                "{} needs an even embedding size, got {}",
                self.model, self.dim
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(KgeError::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.w0) {
            return Err(KgeError::Config(format!("w0 must lie in [0, 1], got {}", self.w0)));
        }
        if !(self.init_scale > 0.0) {
            return Err(KgeError::Config("init scale must be > 0".into()));
        }
        if !(self.adagrad_eps > 0.0) {
            return Err(KgeError::Config("adagrad epsilon must be > 0".into()));
        }
        self.reg.validate(self.model)
    }

    /// Sets one field from its `key=value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "model" => self.model = v.parse()?,
            "dim" => self.dim = parse(key, v)?,
            "batch" => self.batch_size = parse(key, v)?,
            "lr" => self.learning_rate = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "valid_every" => self.valid_every = parse(key, v)?,
            "w0" => self.w0 = parse(key, v)?,
            "reg" => self.reg.kind = v.parse::<RegKind>()?,
            "lambda" => self.reg.lambda = parse(key, v)?,
            "lambda1" => self.reg.lambda1 = parse(key, v)?,
            "lambda2" => self.reg.lambda2 = parse(key, v)?,
            "lambda3" => self.reg.lambda3 = parse(key, v)?,
            "lambda4" => self.reg.lambda4 = parse(key, v)?,
            "smoother" => self.reg.smoother = v.parse::<SmootherKind>()?,
            "smoother_weight" => self.reg.smoother_weight = parse(key, v)?,
            "conjugate_tail_projection" => self.reg.conjugate_tail_projection = parse(key, v)?,
            "precision" => self.precision = v.parse()?,
            "init_scale" => self.init_scale = parse(key, v)?,
            "adagrad_eps" => self.adagrad_eps = parse(key, v)?,
            other => return Err(KgeError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Every field as `key=value` lines, in `CONFIG_KEYS` order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for &key in CONFIG_KEYS {
            let _ = writeln!(s, "{key}={}", self.get(key));
        }
        s
    }

    pub fn get(&self, key: &str) -> String {
        match key {
            "model" => self.model.name().to_string(),
            "dim" => self.dim.to_string(),
            "batch" => self.batch_size.to_string(),
            "lr" => self.learning_rate.to_string(),
            "epochs" => self.epochs.to_string(),
            "seed" => self.seed.to_string(),
            "valid_every" => self.valid_every.to_string(),
            "w0" => self.w0.to_string(),
            "reg" => self.reg.kind.name().to_string(),
            "lambda" => self.reg.lambda.to_string(),
            "lambda1" => self.reg.lambda1.to_string(),
            "lambda2" => self.reg.lambda2.to_string(),
            "lambda3" => self.reg.lambda3.to_string(),
            "lambda4" => self.reg.lambda4.to_string(),
            "smoother" => self.reg.smoother.name().to_string(),
            "smoother_weight" => self.reg.smoother_weight.to_string(),
            "conjugate_tail_projection" => self.reg.conjugate_tail_projection.to_string(),
            "precision" => self.precision.name().to_string(),
            "init_scale" => self.init_scale.to_string(),
            "adagrad_eps" => self.adagrad_eps.to_string(),
            _ => String::new(),
        }
    }

    /// Applies a flat `key=value` text; blank lines and `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                KgeError::Config(format!("config line {}: expected key=value", i + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        c.apply_kv(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| KgeError::io(path, e))?;
        Self::from_kv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unknown_key_is_rejected() {
        let mut c = TrainConfig::default();
        assert!(c.set("momentum", "0.9").is_err());
        assert!(c.set("dim", "abc").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let c = TrainConfig::from_kv("# best CP\nmodel=cp\n\ndim=2000\nbatch=100\nreg=dura\nlambda=0.1\nlambda1=0.5\nlambda2=1.5\n").unwrap();
        assert_eq!(c.dim, 2000);
        assert_eq!(c.batch_size, 100);
        assert_eq!(c.reg.kind, RegKind::Dura);
        assert_eq!((c.reg.lambda1, c.reg.lambda2), (0.5, 1.5));
    }

    #[test]
    fn validation_catches_bad_combinations() {
        let mut c = TrainConfig::default();
        c.model = ModelKind::Rescal;
        c.reg.kind = RegKind::N3;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.model = ModelKind::ComplEx;
        c.dim = 3;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn kv_round_trip(dim in 1usize..5000, batch in 1usize..5000, lr in 1e-4f64..1.0,
                         lambda in 0.0f64..1.0, seed in any::<u64>(), w0 in 0.0f64..=1.0,
                         model in 0u8..5, reg in 0usize..10) {
            let mut c = TrainConfig::default();
            c.model = ModelKind::from_tag(model).unwrap();
            c.dim = dim;
            c.batch_size = batch;
            c.learning_rate = lr;
            c.reg.lambda = lambda;
            c.reg.kind = RegKind::ALL[reg];
            c.seed = seed;
            c.w0 = w0;
            let back = TrainConfig::from_kv(&c.to_kv()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
