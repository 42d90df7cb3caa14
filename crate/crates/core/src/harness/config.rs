//! Flat `key = value` experiment configuration.
//!
//! Keys are the field names of [`ExperimentConfig`] and of the nested
//! system and SCA settings. `#` starts a comment. Every key is optional;
//! missing keys keep the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, SystemConfig};
use crate::error::{Error, Result};
use crate::sca::{ScaSettings, Variant};

pub const DEFAULT_SNR_POINTS: &str = "-30:5:10";
pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_BER_SYMBOLS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 1;

/// Accepted keys, in the order [`ExperimentConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "n_tx",
    "n_rx",
    "k_devices",
    "l_tx",
    "l_rx",
    "l_paths",
    "p_tx",
    "beta",
    "gamma_min",
    "gamma_min_db",
    "penalty_c",
    "max_outer_iterations",
    "objective_tolerance",
    "solver_tolerance",
    "snr_db_points",
    "trials",
    "ber_symbols",
    "base_seed",
    "scheme",
    "output_path",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub sca: ScaSettings,
    /// Transmit SNRs `P_tx / sigma^2` in dB; `sigma^2` follows from each.
    pub snr_db_points: Vec<f64>,
    pub trials: usize,
    /// BER symbols per (SNR point, trial); 0 disables BER.
    pub ber_symbols: usize,
    pub base_seed: u64,
    pub scheme: Variant,
    pub output_path: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            system: SystemConfig::default(),
            sca: ScaSettings::default(),
            snr_db_points: parse_snr_points(DEFAULT_SNR_POINTS).expect("default grid parses"),
            trials: DEFAULT_TRIALS,
            ber_symbols: DEFAULT_BER_SYMBOLS,
            base_seed: DEFAULT_SEED,
            scheme: Variant::Pldm2,
            output_path: PathBuf::from("results.csv"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.sca.validate()?;
        if self.trials < 1 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.snr_db_points.is_empty() {
            return Err(Error::config("snr_db_points", "must not be empty"));
        }
        if let Some(bad) = self.snr_db_points.iter().find(|v| !v.is_finite()) {
            return Err(Error::config("snr_db_points", format!("non-finite point {bad}")));
        }
        if self.output_path.as_os_str().is_empty() {
            return Err(Error::config("output_path", "must not be empty"));
        }
        Ok(())
    }

    /// SCA settings with the configured scheme.
    pub fn sca_settings(&self) -> ScaSettings {
        ScaSettings { variant: self.scheme, ..self.sca }
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let s = &mut self.system;
        match key {
            "n_tx" => s.n_tx = parse_num(key, v)?,
            "n_rx" => s.n_rx = parse_num(key, v)?,
            "k_devices" => s.k_devices = parse_num(key, v)?,
            "l_tx" => s.l_tx = parse_num(key, v)?,
            "l_rx" => s.l_rx = parse_num(key, v)?,
            "l_paths" => s.l_paths = parse_num(key, v)?,
            "p_tx" => s.p_tx = parse_num(key, v)?,
            "beta" => s.beta = parse_num(key, v)?,
            "gamma_min" => s.gamma_min = parse_num(key, v)?,
            "gamma_min_db" => s.gamma_min = db_to_linear(parse_num(key, v)?),
            "penalty_c" => s.penalty_c = parse_num(key, v)?,
            "max_outer_iterations" => self.sca.max_outer_iterations = parse_num(key, v)?,
            "objective_tolerance" => self.sca.objective_tolerance = parse_num(key, v)?,
            "solver_tolerance" => self.sca.solver_tolerance = parse_num(key, v)?,
            "snr_db_points" => self.snr_db_points = parse_snr_points(v)?,
            "trials" => self.trials = parse_num(key, v)?,
            "ber_symbols" => self.ber_symbols = parse_num(key, v)?,
            "base_seed" => self.base_seed = parse_num(key, v)?,
            "scheme" => self.scheme = v.parse()?,
            "output_path" => self.output_path = PathBuf::from(v),
            "sigma2" => {
                return Err(Error::config(key, "is derived from each SNR point; set snr_db_points and p_tx instead"))
            }
            _ => return Err(Error::config(key, "is not a known key")),
        }
        Ok(())
    }

    /// Canonical text form; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let s = &self.system;
        let points: Vec<String> = self.snr_db_points.iter().map(|v| format!("{v}")).collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("n_tx", s.n_tx.to_string());
        kv("n_rx", s.n_rx.to_string());
        kv("k_devices", s.k_devices.to_string());
        kv("l_tx", s.l_tx.to_string());
        kv("l_rx", s.l_rx.to_string());
        kv("l_paths", s.l_paths.to_string());
        kv("p_tx", format!("{:?}", s.p_tx));
        kv("beta", format!("{:?}", s.beta));
        kv("gamma_min", format!("{:?}", s.gamma_min));
        kv("penalty_c", format!("{:?}", s.penalty_c));
        kv("max_outer_iterations", self.sca.max_outer_iterations.to_string());
        kv("objective_tolerance", format!("{:?}", self.sca.objective_tolerance));
        kv("solver_tolerance", format!("{:?}", self.sca.solver_tolerance));
        kv("snr_db_points", points.join(","));
        kv("trials", self.trials.to_string());
        kv("ber_symbols", self.ber_symbols.to_string());
        kv("base_seed", self.base_seed.to_string());
        kv("scheme", self.scheme.name().to_string());
        kv("output_path", self.output_path.display().to_string());
        out
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}")))
}

/// Parses `a:step:b` (inclusive range), a comma list, or a single value.
pub fn parse_snr_points(text: &str) -> Result<Vec<f64>> {
    let key = "snr_db_points";
    let t = text.trim();
    if t.is_empty() {
        return Err(Error::config(key, "must not be empty"));
    }
    if t.contains(':') {
        let parts: Vec<&str> = t.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::config(key, format!("range `{t}` must be start:step:stop")));
        }
        let a: f64 = parse_num(key, parts[0].trim())?;
        let step: f64 = parse_num(key, parts[1].trim())?;
        let b: f64 = parse_num(key, parts[2].trim())?;
        if !(step != 0.0 && step.is_finite()) || (b - a) * step < 0.0 {
            return Err(Error::config(key, format!("range `{t}` has a step that never reaches the stop")));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        if count > 100_000 {
            return Err(Error::config(key, format!("range `{t}` has {count} points")));
        }
        return Ok((0..count).map(|i| a + step * i as f64).collect());
    }
    t.split(',').map(|p| parse_num(key, p.trim())).collect()
}

/// Parses configuration text; `origin` names the source in errors.
pub fn parse_config_str(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        // gamma_min and gamma_min_db set the same field.
        let canonical = if key == "gamma_min_db" { "gamma_min" } else { key };
        if seen.iter().any(|k| k == canonical) {
            return Err(Error::config(key, format!("set twice (line {})", i + 1)));
        }
        seen.push(canonical.to_string());
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    parse_config_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg = parse_config_str("", "mem").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let s = &cfg.system;
        assert_eq!((s.n_tx, s.l_tx, s.n_rx, s.l_rx, s.k_devices, s.l_paths), (64, 32, 4, 4, 6, 8));
        assert_eq!((s.p_tx, s.beta), (1.0, 3.0));
        assert!((s.gamma_min - 10f64.powf(0.5)).abs() < 1e-15);
    }

    #[test]
    fn snr_range_expands() {
        let pts = parse_snr_points("-30:5:10").unwrap();
        let want: Vec<f64> = (0..9).map(|i| -30.0 + 5.0 * i as f64).collect();
        assert_eq!(pts, want);
        assert_eq!(parse_snr_points("5, 10").unwrap(), vec![5.0, 10.0]);
        assert_eq!(parse_snr_points("10:-5:0").unwrap(), vec![10.0, 5.0, 0.0]);
        assert!(parse_snr_points("0:0:1").is_err());
        assert!(parse_snr_points("0:-1:5").is_err());
    }

    #[test]
    fn beta_below_one_rejected() {
        match parse_config_str("beta = 0.5", "mem") {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "beta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        for text in ["bogus = 1", "trials = 2\ntrials = 3", "gamma_min = 2\ngamma_min_db = 3", "sigma2 = 1"] {
            assert!(matches!(parse_config_str(text, "mem"), Err(Error::InvalidConfig { .. })), "{text}");
        }
        assert!(matches!(parse_config_str("trials 3", "mem"), Err(Error::Parse { line: 1, .. })));
        match parse_config_str("trials = x", "mem") {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "trials"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn text_round_trip() {
        let text = "k_devices = 3\nn_tx = 16 # comment\ngamma_min_db = 3\nsnr_db_points = -10:10:10\nscheme = pldm1\ntrials = 7\n";
        let cfg = parse_config_str(text, "mem").unwrap();
        assert_eq!(cfg.snr_db_points, vec![-10.0, 0.0, 10.0]);
        assert_eq!(cfg.scheme, Variant::Pldm1);
        let again = parse_config_str(&cfg.to_text(), "mem").unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn every_key_is_accepted() {
        for key in KEYS {
            let mut cfg = ExperimentConfig::default();
            let value = match *key {
                "snr_db_points" => "0",
                "scheme" => "pldm1",
                "output_path" => "x.csv",
                "beta" | "p_tx" | "penalty_c" | "gamma_min" => "2",
                "objective_tolerance" | "solver_tolerance" => "1e-6",
                _ => "8",
            };
            cfg.set(key, value).unwrap();
        }
    }
}
