//! Flat `key = value` run configuration.
//!
//! Every key has a default listed in [`KEYS`]; unknown keys are rejected.
//! The resolved configuration is written into each run directory so a run
//! can be reproduced from its snapshot alone.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fem::{BoundaryCondition, Inclusion, PhantomSpec};
use crate::loss::LossWeights;
use crate::network::{Architecture, CoordinateFrame, EncodingConfig};
use crate::train::TrainingSchedule;

/// `(key, default, description)`; an empty default means "unset".
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "", "RNG seed; required by generate and train"),
    ("rows", "32", "elasticity cells along y (the node lattice has one more)"),
    ("cols", "32", "elasticity cells along x"),
    ("phantom", "two_inclusion", "two_inclusion | homogeneous"),
    ("background_E", "1.0", "background Young's modulus"),
    ("background_nu", "0.3", "background Poisson's ratio"),
    ("inclusion_E", "2.0", "Young's modulus of both disk inclusions"),
    ("inclusion_nu", "0.4", "Poisson's ratio of both disk inclusions"),
    ("stretch", "0.01", "prescribed right-edge displacement as a fraction of plate length"),
    ("snr", "1000", "measurement signal-to-noise ratio, or `none` for clean data"),
    ("dataset", "", "dataset path (default: <out-dir>/dataset.efd)"),
    ("depth", "16", "hidden layers per network"),
    ("width", "128", "neurons per hidden layer"),
    ("sine_scale", "30", "first-layer sine frequency multiplier"),
    ("f_min", "0.0001", "positional encoding minimum frequency"),
    ("omega", "64", "positional encoding frequency count"),
    ("coord_frame", "grid", "network input coordinates: grid (lattice units) | unit ([0, 1])"),
    ("learning_rate", "0.0001", "Adam step size"),
    ("stage_a_iters", "50000", "displacement-only iterations"),
    ("stage_b_iters", "100000", "displacement + strain iterations"),
    ("stage_c_iters", "50000", "full-objective iterations"),
    ("desk_scale_factor", "1.0", "multiplier on every stage length, in (0, 1]"),
    ("pretraining", "true", "false spends the whole budget in the full-objective stage"),
    ("lambda_u", "2", "displacement loss weight"),
    ("lambda_eps", "1", "strain loss weight"),
    ("lambda_r", "3", "equilibrium residual loss weight"),
    ("lambda_E", "0.02", "mean-modulus loss weight"),
    ("E_c", "0.25", "target mean of the relative modulus"),
    ("log_every", "0", "print training progress every N iterations (0 = quiet)"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: Vec<(&'static str, String)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, d, _)| (*k, d.to_string())).collect(),
        }
    }
}

/// Help text listing every key and its default.
pub fn defaults_help() -> String {
    let mut s = String::from("Config keys (flat `key = value` file) and defaults:\n");
    for (k, d, desc) in KEYS {
        let d = if d.is_empty() { "<unset>" } else { d };
        let _ = writeln!(s, "  {k:<18} {d:<14} {desc}");
    }
    s
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`, got `{raw}`", n + 1)));
            };
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::Config(format!("config file {} not found", path.display())));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => {
                *v = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key `{key}`"))),
        }
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("undeclared config key {key}"))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{raw}`")))
    }

    pub fn seed(&self) -> Result<u64> {
        if self.raw("seed").is_empty() {
            return Err(Error::Config("a seed is required (config key `seed` or --seed)".into()));
        }
        self.get("seed")
    }

    pub fn dataset_path(&self) -> Option<&str> {
        Some(self.raw("dataset")).filter(|s| !s.is_empty())
    }

    pub fn log_every(&self) -> Result<usize> {
        self.get("log_every")
    }

    pub fn lattice(&self) -> Result<(usize, usize)> {
        Ok((self.get("rows")?, self.get("cols")?))
    }

    pub fn snr(&self) -> Result<Option<f64>> {
        match self.raw("snr") {
            "none" => Ok(None),
            _ => self.get("snr").map(Some),
        }
    }

    pub fn boundary(&self) -> Result<BoundaryCondition> {
        Ok(BoundaryCondition {
            stretch: self.get("stretch")?,
        })
    }

    pub fn phantom(&self) -> Result<PhantomSpec> {
        let (ny, nx) = self.lattice()?;
        let mut spec = PhantomSpec::homogeneous(self.get("background_E")?, self.get("background_nu")?);
        match self.raw("phantom") {
            "homogeneous" => {}
            "two_inclusion" => {
                let (e, nu) = (self.get("inclusion_E")?, self.get("inclusion_nu")?);
                spec.inclusions = PhantomSpec::two_inclusion(ny, nx)
                    .inclusions
                    .into_iter()
                    .map(|inc: Inclusion| Inclusion { e, nu, ..inc })
                    .collect();
            }
            other => return Err(Error::Config(format!("unknown phantom `{other}`"))),
        }
        Ok(spec)
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let frame = CoordinateFrame::parse(self.raw("coord_frame")).map_err(|e| Error::Config(e.to_string()))?;
        let arch = Architecture {
            encoding: EncodingConfig {
                f_min: self.get("f_min")?,
                omega: self.get("omega")?,
                frame,
            },
            depth: self.get("depth")?,
            width: self.get("width")?,
            sine_scale: self.get("sine_scale")?,
        };
        arch.encoding.validate()?;
        if arch.depth == 0 || arch.width == 0 {
            return Err(Error::Config("depth and width must be at least 1".into()));
        }
        Ok(arch)
    }

    pub fn schedule(&self) -> Result<TrainingSchedule> {
        let s = TrainingSchedule {
            stage_a_iters: self.get("stage_a_iters")?,
            stage_b_iters: self.get("stage_b_iters")?,
            stage_c_iters: self.get("stage_c_iters")?,
            learning_rate: self.get("learning_rate")?,
            seed: self.seed()?,
            desk_scale_factor: self.get("desk_scale_factor")?,
        };
        s.validate()?;
        let pretraining: bool = self.get("pretraining")?;
        Ok(if pretraining { s } else { s.simultaneous() })
    }

    pub fn weights(&self) -> Result<LossWeights> {
        let w = LossWeights {
            lambda_u: self.get("lambda_u")?,
            lambda_eps: self.get("lambda_eps")?,
            lambda_r: self.get("lambda_r")?,
            lambda_e: self.get("lambda_E")?,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn e_c(&self) -> Result<f64> {
        let v: f64 = self.get("E_c")?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("E_c must be positive, got {v}")));
        }
        Ok(v)
    }

    /// Every key with its resolved value, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# resolved run configuration\n");
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
