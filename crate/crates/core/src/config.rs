//! INI experiment files.
//!
//! ```ini
//! [experiment]
//! kind = gamma_xi_sweep
//! seed = 7
//! n_traj = 1000
//! t_end = 20
//! dt = 1e-3
//! sweep = 1, 15, 90
//!
//! [system]
//! x0 = 0.4
//!
//! [noise.a]
//! type = flicker
//! exponent = 2
//! variance = 7
//!
//! [noise.b]
//! type = ou
//! rate = 15
//! strength = 0.9
//! ```
//!
//! Unknown sections or keys are rejected so typos do not silently fall back
//! to defaults.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use ini::{Ini, Properties};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{AmplitudeState, SystemParams};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::noise::NoiseModel;
use crate::spectral::HfMetric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Single,
    GammaXiSweep,
    GammaQSweep,
    PminScan,
    PsdReport,
    Validate,
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "single" => ExperimentKind::Single,
            "gamma_xi_sweep" => ExperimentKind::GammaXiSweep,
            "gamma_q_sweep" => ExperimentKind::GammaQSweep,
            "pmin_scan" => ExperimentKind::PminScan,
            "psd_report" => ExperimentKind::PsdReport,
            "validate" => ExperimentKind::Validate,
            other => return Err(Error::config(format!("unknown experiment kind '{other}'"))),
        })
    }
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Single => "single",
            ExperimentKind::GammaXiSweep => "gamma_xi_sweep",
            ExperimentKind::GammaQSweep => "gamma_q_sweep",
            ExperimentKind::PminScan => "pmin_scan",
            ExperimentKind::PsdReport => "psd_report",
            ExperimentKind::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub n_traj: u64,
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub stride: usize,
    pub t_eval: f64,
    /// Mixing ratios; `p` weights `noise_a`.
    pub p_values: Vec<f64>,
    /// γ_ξ values for O-U sweeps and p_min scans, γ_Q values for quantum-noise sweeps.
    pub sweep: Vec<f64>,
    /// Sweep values at which orderings are reported.
    pub checkpoints: Vec<f64>,
    /// Boundary multiplier: `omega_c = omega_c_factor * gamma_Q`.
    pub omega_c_factor: f64,
    pub hf_metric: HfMetric,
    /// Welch segments for estimated spectra.
    pub psd_segments: usize,
    /// Samples per path for estimated spectra.
    pub psd_samples: usize,
    pub system: SystemParams,
    pub init: AmplitudeState,
    pub noise_a: NoiseModel,
    pub noise_b: Option<NoiseModel>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Single,
            seed: 0,
            n_traj: 1000,
            t0: 0.0,
            t_end: 20.0,
            dt: 1e-3,
            stride: 100,
            t_eval: 20.0,
            p_values: vec![0.0, 0.5, 1.0],
            sweep: vec![1.0, 15.0, 90.0],
            checkpoints: vec![1.0, 15.0, 90.0],
            omega_c_factor: 1.0,
            hf_metric: HfMetric::Power,
            psd_segments: 63,
            psd_samples: 1 << 16,
            system: SystemParams::default(),
            init: AmplitudeState::bell(),
            noise_a: NoiseModel::ou(15.0, 1.0),
            noise_b: None,
        }
    }
}

const EXPERIMENT_KEYS: &[&str] = &[
    "kind", "seed", "n_traj", "t0", "t_end", "dt", "stride", "t_eval", "p_values", "sweep", "checkpoints",
    "omega_c_factor", "hf_metric", "psd_segments", "psd_samples",
];
const SYSTEM_KEYS: &[&str] =
    &["dissipation", "memory_rate", "g0", "kappa", "x0", "noise_scale", "init"];

impl ExperimentSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_file_as(path, None)
    }

    /// Read a file, replacing its `kind` before the section checks run.
    pub fn from_file_as(path: &Path, kind: Option<ExperimentKind>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_as(&text, kind)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_as(text, None)
    }

    pub fn parse_as(text: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::config(e.to_string()))?;
        let mut spec = ExperimentSpec::default();
        let mut saw_a = false;

        for (name, props) in ini.iter() {
            match name {
                None => {
                    if let Some((k, _)) = props.iter().next() {
                        return Err(Error::config(format!("key '{k}' outside any section")));
                    }
                }
                Some("experiment") => spec.read_experiment(props)?,
                Some("system") => spec.read_system(props)?,
                Some("noise.a") => {
                    spec.noise_a = read_noise("noise.a", props)?;
                    saw_a = true;
                }
                Some("noise.b") => spec.noise_b = Some(read_noise("noise.b", props)?),
                Some(other) => return Err(Error::config(format!("unknown section [{other}]"))),
            }
        }
        if let Some(k) = kind {
            spec.kind = k;
        }
        if !saw_a && spec.kind != ExperimentKind::Validate {
            return Err(Error::config("missing [noise.a] section"));
        }
        spec.validate()?;
        Ok(spec)
    }

    fn read_experiment(&mut self, props: &Properties) -> Result<()> {
        check_keys("experiment", props, EXPERIMENT_KEYS)?;
        for (k, v) in props.iter() {
            let key = format!("experiment.{k}");
            match k {
                "kind" => self.kind = v.trim().parse()?,
                "seed" => self.seed = parse_num(&key, v)?,
                "n_traj" => self.n_traj = parse_num(&key, v)?,
                "t0" => self.t0 = parse_num(&key, v)?,
                "t_end" => self.t_end = parse_num(&key, v)?,
                "dt" => self.dt = parse_num(&key, v)?,
                "stride" => self.stride = parse_num(&key, v)?,
                "t_eval" => self.t_eval = parse_num(&key, v)?,
                "p_values" => self.p_values = parse_list(&key, v)?,
                "sweep" => self.sweep = parse_list(&key, v)?,
                "checkpoints" => self.checkpoints = parse_list(&key, v)?,
                "omega_c_factor" => self.omega_c_factor = parse_num(&key, v)?,
                "hf_metric" => self.hf_metric = v.trim().parse()?,
                "psd_segments" => self.psd_segments = parse_num(&key, v)?,
                "psd_samples" => self.psd_samples = parse_num(&key, v)?,
                _ => unreachable!(),
            }
        }
        Ok(())
    }

    fn read_system(&mut self, props: &Properties) -> Result<()> {
        check_keys("system", props, SYSTEM_KEYS)?;
        for (k, v) in props.iter() {
            let key = format!("system.{k}");
            let s = &mut self.system;
            match k {
                "dissipation" => s.dissipation = parse_num(&key, v)?,
                "memory_rate" => s.memory_rate = parse_num(&key, v)?,
                "kappa" => s.kappa = parse_num(&key, v)?,
                "noise_scale" => s.noise_scale = parse_num(&key, v)?,
                "g0" => s.g0 = parse_pair(&key, v)?,
                "x0" => s.x0 = parse_pair(&key, v)?,
                "init" => {
                    self.init = match v.trim() {
                        "bell" => AmplitudeState::bell(),
                        "atom1" => AmplitudeState::atomic(1.0.into(), 0.0.into()),
                        other => return Err(Error::config(format!("{key}: unknown initial state '{other}'"))),
                    }
                }
                _ => unreachable!(),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::config(e.to_string());
        self.grid()?;
        if self.n_traj == 0 {
            return Err(Error::config("experiment.n_traj must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::config("experiment.stride must be at least 1"));
        }
        if !(self.t_eval >= self.t0 && self.t_eval <= self.t_end) {
            return Err(Error::config(format!(
                "experiment.t_eval = {} lies outside [{}, {}]",
                self.t_eval, self.t0, self.t_end
            )));
        }
        for (name, list) in [("p_values", &self.p_values), ("sweep", &self.sweep)] {
            if list.is_empty() {
                return Err(Error::config(format!("experiment.{name} must not be empty")));
            }
        }
        if let Some(p) = self.p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::config(format!("experiment.p_values: {p} is outside [0, 1]")));
        }
        if !(self.omega_c_factor > 0.0) {
            return Err(Error::config("experiment.omega_c_factor must be positive"));
        }
        self.system.validate().map_err(cfg)?;
        self.noise_a.validate().map_err(cfg)?;
        if let Some(b) = &self.noise_b {
            b.validate().map_err(cfg)?;
        }
        let needs_b = matches!(self.kind, ExperimentKind::GammaXiSweep | ExperimentKind::GammaQSweep | ExperimentKind::PminScan);
        if needs_b && self.noise_b.is_none() {
            return Err(Error::config(format!("{} needs both [noise.a] and [noise.b]", self.kind.name())));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::spanning(self.t0, self.t_end, self.dt).map_err(|e| Error::config(e.to_string()))
    }

    /// Noise at mixing ratio `p`; the endpoints are the bare components.
    pub fn noise_at(&self, p: f64) -> NoiseModel {
        match &self.noise_b {
            None => self.noise_a.clone(),
            Some(b) if p == 0.0 => b.clone(),
            Some(_) if p == 1.0 => self.noise_a.clone(),
            Some(b) => NoiseModel::mixture(self.noise_a.clone(), b.clone(), p),
        }
    }

    /// SHA-256 of the canonical JSON form of the parsed spec.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn check_keys(section: &str, props: &Properties, allowed: &[&str]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (k, _) in props.iter() {
        if !allowed.contains(&k) {
            return Err(Error::config(format!("unknown key '{k}' in [{section}]")));
        }
        if !seen.insert(k) {
            return Err(Error::config(format!("duplicate key '{k}' in [{section}]")));
        }
    }
    Ok(())
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::config(format!("{key}: cannot parse '{}'", v.trim())))
}

/// Comma-separated values, or `start:step:end` inclusive.
fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    let v = v.trim();
    if v.contains(':') {
        let parts: Vec<f64> = v.split(':').map(|s| parse_num(key, s)).collect::<Result<_>>()?;
        let [start, step, end] = parts[..] else {
            return Err(Error::config(format!("{key}: ranges are start:step:end")));
        };
        if !(step > 0.0) || end < start {
            return Err(Error::config(format!("{key}: empty or non-advancing range '{v}'")));
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        // Round to the step's decimal precision so 0.05 * 3 reads as 0.15.
        return Ok((0..=n).map(|i| round12(start + i as f64 * step)).collect());
    }
    v.split(',').map(|s| parse_num(key, s)).collect()
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// One value for both atoms, or two comma-separated values.
fn parse_pair(key: &str, v: &str) -> Result<[f64; 2]> {
    match parse_list(key, v)?[..] {
        [x] => Ok([x, x]),
        [x, y] => Ok([x, y]),
        _ => Err(Error::config(format!("{key}: expected one or two values"))),
    }
}

fn read_noise(section: &str, props: &Properties) -> Result<NoiseModel> {
    let ty = props.get("type").ok_or_else(|| Error::config(format!("[{section}] needs a type")))?.trim();
    let allowed: &[&str] = match ty {
        "ou" => &["type", "rate", "strength"],
        "flicker" => &["type", "exponent", "amplitude", "variance"],
        "telegraph" => &["type", "p_jump"],
        other => return Err(Error::config(format!("[{section}] unknown noise type '{other}'"))),
    };
    check_keys(section, props, allowed)?;
    let get = |k: &str| -> Result<f64> {
        let v = props.get(k).ok_or_else(|| Error::config(format!("[{section}] missing '{k}'")))?;
        parse_num(&format!("{section}.{k}"), v)
    };
    let model = match ty {
        "ou" => NoiseModel::ou(get("rate")?, get("strength")?),
        "telegraph" => NoiseModel::telegraph(get("p_jump")?),
        _ => {
            let exponent = get("exponent")?;
            match (props.get("amplitude"), props.get("variance")) {
                (Some(_), Some(_)) => {
                    return Err(Error::config(format!("[{section}] give amplitude or variance, not both")))
                }
                (Some(_), None) => NoiseModel::flicker(get("amplitude")?, exponent),
                (None, Some(_)) => NoiseModel::flicker_with_variance(exponent, get("variance")?),
                (None, None) => return Err(Error::config(format!("[{section}] needs amplitude or variance"))),
            }
        }
    };
    model.validate().map_err(|e| Error::config(format!("[{section}] {e}")))?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP_INI: &str = "
[experiment]
kind = gamma_xi_sweep
seed = 11
sweep = 1, 15, 90

[system]
x0 = 0.4

[noise.a]
type = flicker
exponent = 2
variance = 7

[noise.b]
type = ou
rate = 15
strength = 0.9
";

    #[test]
    fn parses_sections() {
        let s = ExperimentSpec::parse(SWEEP_INI).unwrap();
        assert_eq!(s.kind, ExperimentKind::GammaXiSweep);
        assert_eq!(s.seed, 11);
        assert_eq!(s.system.x0, [0.4, 0.4]);
        assert_eq!(s.noise_a, NoiseModel::flicker_with_variance(2.0, 7.0));
        assert_eq!(s.noise_b, Some(NoiseModel::ou(15.0, 0.9)));
        assert_eq!(s.noise_at(1.0), s.noise_a);
        assert!(matches!(s.noise_at(0.5), NoiseModel::Mixture { p, .. } if p == 0.5));
    }

    #[test]
    fn digest_ignores_formatting() {
        let a = ExperimentSpec::parse(SWEEP_INI).unwrap();
        let b = ExperimentSpec::parse(&SWEEP_INI.replace("seed = 11", "seed=11\n; comment")).unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = ExperimentSpec::parse(&SWEEP_INI.replace("seed = 11", "seed = 12")).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn ranges_expand() {
        let v = parse_list("k", "0:0.05:1").unwrap();
        assert_eq!(v.len(), 21);
        assert_eq!(v[3], 0.15);
        assert_eq!(*v.last().unwrap(), 1.0);
        assert!(parse_list("k", "1:0:2").is_err());
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            SWEEP_INI.replace("seed = 11", "sed = 11"),
            SWEEP_INI.replace("[system]", "[sytem]"),
            SWEEP_INI.replace("rate = 15", "rate = -1"),
            SWEEP_INI.replace("variance = 7", "variance = 7\namplitude = 1"),
            SWEEP_INI.replace("sweep = 1, 15, 90", "sweep = 1, x"),
            SWEEP_INI.replace("[noise.b]\ntype = ou\nrate = 15\nstrength = 0.9", ""),
            SWEEP_INI.replace("seed = 11", "seed = 11\nt_eval = 30"),
            SWEEP_INI.replace("seed = 11", "seed = 11\np_values = 0, 1.5"),
            SWEEP_INI.replace("seed = 11", "seed = 11\ndt = 0"),
        ] {
            assert!(matches!(ExperimentSpec::parse(&bad), Err(Error::Config(_))), "accepted:\n{bad}");
        }
    }

    #[test]
    fn validate_needs_no_noise() {
        let s = ExperimentSpec::parse("[experiment]\nkind = validate\n").unwrap();
        assert_eq!(s.kind, ExperimentKind::Validate);
    }
}
