//! Pipeline configuration.
//!
//! The file format is line based:
//!
//! ```text
//! # comment
//! grid.num_intervals = 64
//! pod.tol = 1e-4        # trailing comments are allowed
//! ```
//!
//! Every key is `section.name`. Blank lines and text after `#` are ignored.
//! Unknown keys, duplicate keys and unparsable values are errors. Keys that
//! are absent keep their defaults, listed in [`PipelineConfig::default`].

use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fom::{Grid1D, Parameter, ParameterDomain, TimeGrid};
use crate::kernel::{KernelConfig, Normalization};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PodConfig {
    pub tol: f64,
    pub omega: f64,
    /// Time points per HAPOD chunk.
    pub chunk_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig {
    pub seed: u64,
    pub n_rom_train: usize,
    pub n_rom_err_test: usize,
    pub n_ml_err_test: usize,
    /// Fresh inputs for the FOM-vs-surrogate check; 0 skips it.
    pub n_e2e_test: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingConfig {
    pub n_rom: usize,
    pub n_ml: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub grid: Grid1D,
    pub time: TimeGrid,
    pub domain: ParameterDomain,
    pub pod: PodConfig,
    /// Kernel settings. The normalization is derived from `domain`.
    pub vkoga: KernelConfig,
    pub sampling: SamplingConfig,
    pub timing: TimingConfig,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let domain = ParameterDomain::diffusion_dominated();
        Self {
            grid: Grid1D { num_intervals: 64 },
            time: TimeGrid { num_steps: 24576, t_end: 3.0 },
            domain,
            pod: PodConfig { tol: 1e-4, omega: 0.75, chunk_size: 1024 },
            vkoga: KernelConfig { output_tol: 1e-7, ..KernelConfig::new(&domain) },
            sampling: SamplingConfig {
                seed: 42,
                n_rom_train: 196,
                n_rom_err_test: 5,
                n_ml_err_test: 50,
                n_e2e_test: 0,
            },
            timing: TimingConfig { n_rom: 10, n_ml: 1000 },
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Config {
        line,
        message: format!("{key}: cannot parse {value:?}: {e}"),
    })
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected key = value, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config { line, message: format!("duplicate key {key}") });
            }
            cfg.set(line, key, value)?;
            seen.push(key.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        let f = || parse_value::<f64>(line, key, value);
        let n = || parse_value::<usize>(line, key, value);
        match key {
            "grid.num_intervals" => self.grid.num_intervals = n()?,
            "time.t_end" => self.time.t_end = f()?,
            "time.num_steps" => self.time.num_steps = n()?,
            "domain.da_min" => self.domain.lower.da = f()?,
            "domain.da_max" => self.domain.upper.da = f()?,
            "domain.pe_min" => self.domain.lower.pe = f()?,
            "domain.pe_max" => self.domain.upper.pe = f()?,
            "pod.tol" => self.pod.tol = f()?,
            "pod.omega" => self.pod.omega = f()?,
            "pod.chunk_size" => self.pod.chunk_size = n()?,
            "vkoga.shape_gamma" => self.vkoga.shape_gamma = f()?,
            "vkoga.lambda_reg" => self.vkoga.lambda_reg = f()?,
            "vkoga.max_points" => self.vkoga.max_points = n()?,
            "vkoga.greedy_tol" => self.vkoga.greedy_tol = f()?,
            "vkoga.output_tol" => self.vkoga.output_tol = f()?,
            "sampling.seed" => self.sampling.seed = parse_value(line, key, value)?,
            "sampling.n_rom_train" => self.sampling.n_rom_train = n()?,
            "sampling.n_rom_err_test" => self.sampling.n_rom_err_test = n()?,
            "sampling.n_ml_err_test" => self.sampling.n_ml_err_test = n()?,
            "sampling.n_e2e_test" => self.sampling.n_e2e_test = n()?,
            "timing.n_rom" => self.timing.n_rom = n()?,
            "timing.n_ml" => self.timing.n_ml = n()?,
            "output.dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(Error::Config { line, message: format!("unknown key {key}") }),
        }
        Ok(())
    }

    /// Checks every section and refreshes the kernel input normalization
    /// from the parameter domain.
    pub fn validate(&mut self) -> Result<()> {
        let cfg_err = |message: String| Error::Config { line: 0, message };
        Grid1D::new(self.grid.num_intervals)?;
        TimeGrid::new(self.time.num_steps, self.time.t_end)?;
        let lower = Parameter::new(self.domain.lower.da, self.domain.lower.pe)?;
        let upper = Parameter::new(self.domain.upper.da, self.domain.upper.pe)?;
        self.domain = ParameterDomain::new(lower, upper)?;
        if !(self.pod.tol > 0.0 && self.pod.tol.is_finite()) {
            return Err(cfg_err(format!("pod.tol must be positive, got {}", self.pod.tol)));
        }
        if !(self.pod.omega > 0.0 && self.pod.omega < 1.0) {
            return Err(cfg_err(format!("pod.omega must lie in (0, 1), got {}", self.pod.omega)));
        }
        if self.pod.chunk_size == 0 {
            return Err(cfg_err("pod.chunk_size must be positive".into()));
        }
        if self.timing.n_rom == 0 || self.timing.n_ml == 0 {
            return Err(cfg_err("timing counts must be positive".into()));
        }
        self.vkoga.normalization = Normalization::from_domain(&self.domain);
        self.vkoga.validate()
    }

    /// Canonical `key = value` listing; [`PipelineConfig::parse`] reads it
    /// back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.domain;
        vec![
            ("grid.num_intervals", self.grid.num_intervals.to_string()),
            ("time.t_end", format!("{:e}", self.time.t_end)),
            ("time.num_steps", self.time.num_steps.to_string()),
            ("domain.da_min", format!("{:e}", d.lower.da)),
            ("domain.da_max", format!("{:e}", d.upper.da)),
            ("domain.pe_min", format!("{:e}", d.lower.pe)),
            ("domain.pe_max", format!("{:e}", d.upper.pe)),
            ("pod.tol", format!("{:e}", self.pod.tol)),
            ("pod.omega", format!("{:e}", self.pod.omega)),
            ("pod.chunk_size", self.pod.chunk_size.to_string()),
            ("vkoga.shape_gamma", format!("{:e}", self.vkoga.shape_gamma)),
            ("vkoga.lambda_reg", format!("{:e}", self.vkoga.lambda_reg)),
            ("vkoga.max_points", self.vkoga.max_points.to_string()),
            ("vkoga.greedy_tol", format!("{:e}", self.vkoga.greedy_tol)),
            ("vkoga.output_tol", format!("{:e}", self.vkoga.output_tol)),
            ("sampling.seed", self.sampling.seed.to_string()),
            ("sampling.n_rom_train", self.sampling.n_rom_train.to_string()),
            ("sampling.n_rom_err_test", self.sampling.n_rom_err_test.to_string()),
            ("sampling.n_ml_err_test", self.sampling.n_ml_err_test.to_string()),
            ("sampling.n_e2e_test", self.sampling.n_e2e_test.to_string()),
            ("timing.n_rom", self.timing.n_rom.to_string()),
            ("timing.n_ml", self.timing.n_ml.to_string()),
            ("output.dir", self.out_dir.display().to_string()),
        ]
    }

    /// First 12 hex digits of the SHA-256 of every setting that affects
    /// results (the output directory is excluded).
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.entries() {
            if k != "output.dir" {
                hasher.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hex::encode(&hasher.finalize()[..6])
    }

    /// Hash of the settings that determine the full-order discretization.
    pub fn fom_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("{} {:e} {}", self.grid.num_intervals, self.time.t_end, self.time.num_steps).as_bytes());
        hex::encode(&hasher.finalize()[..6])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let c = PipelineConfig::default();
        assert_eq!(c.grid.h(), 1.0 / 64.0);
        assert_eq!(c.time.dt(), 2f64.powi(-13));
        assert_eq!(c.sampling.n_rom_train, 196);
        assert_eq!(c.pod.tol, 1e-4);
    }

    #[test]
    fn parse_overrides_and_comments() {
        let text = "# tiny\n\ngrid.num_intervals = 8\npod.tol=1e-3 # looser\nsampling.seed = 7\n";
        let c = PipelineConfig::parse(text).unwrap();
        assert_eq!(c.grid.num_intervals, 8);
        assert_eq!(c.pod.tol, 1e-3);
        assert_eq!(c.sampling.seed, 7);
        assert_eq!(c.time.num_steps, 24576);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = PipelineConfig::parse("grid.num_intervals = 8\npod.tolerance = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
        assert!(matches!(PipelineConfig::parse("pod.tol = abc"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(PipelineConfig::parse("pod.tol"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(PipelineConfig::parse("pod.tol = 1\npod.tol = 2"), Err(Error::Config { line: 2, .. })));
        assert!(PipelineConfig::parse("pod.omega = 1.5").is_err());
        assert!(PipelineConfig::parse("grid.num_intervals = 1").is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut c = PipelineConfig::parse("domain.pe_max = 2.5\nvkoga.shape_gamma = 0.3\n").unwrap();
        c.out_dir = PathBuf::from("somewhere/else");
        let back = PipelineConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn hash_tracks_settings_but_not_output_dir() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.sampling.seed = 43;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.fom_hash(), b.fom_hash());
        assert_eq!(a.hash().len(), 12);
    }
}
