//! Run configuration: a TOML file with one table per stage, every key
//! optional, unknown keys rejected. Command-line flags override the file.

use std::path::Path;
use std::str::FromStr;

use ghplom::dmaps::{CoordinateScaling, MedianConvention};
use ghplom::isde::StepSize;
use ghplom::pca::Retention;
use ghplom::{FitConfig, Selection};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub preprocessing: Preprocessing,
    #[serde(default)]
    pub dmaps: Dmaps,
    #[serde(default)]
    pub gh: Gh,
    #[serde(default)]
    pub sampler: Sampler,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    pub scaling_offset: Option<f64>,
    /// Cumulative variance fraction for PCA; PCA is off when absent.
    pub pca_energy: Option<f64>,
    /// Fixed PCA component count (exclusive with `pca_energy`).
    pub pca_components: Option<usize>,
    pub whiten: Option<bool>,
    pub embed_inputs: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dmaps {
    pub eps_multiplier: Option<f64>,
    pub median_convention: Option<MedianConvention>,
    pub alpha_norm: Option<f64>,
    pub kappa: Option<u32>,
    pub n_eigen: Option<usize>,
    pub coordinate_scaling: Option<CoordinateScaling>,
    pub regression_bandwidth_factor: Option<f64>,
    pub regression_ridge: Option<f64>,
    pub regression_rcond: Option<f64>,
    /// `top_m=<m>` or `ratio=<theta>`.
    pub selection: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gh {
    pub eps_factor: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampler {
    pub f0: Option<f64>,
    /// Absolute step size (exclusive with `step_fraction`).
    pub step: Option<f64>,
    /// Step as a fraction of the KDE bandwidth.
    pub step_fraction: Option<f64>,
    pub burn_in: Option<usize>,
    pub stride: Option<usize>,
    pub chains: Option<usize>,
}

/// Parsed `--select` / `selection` value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionArg(pub Selection);

impl FromStr for SelectionArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| format!("selection '{s}' must look like top_m=<m> or ratio=<theta>"))?;
        match key.trim() {
            "top_m" => value
                .trim()
                .parse()
                .map(|m| SelectionArg(Selection::TopM(m)))
                .map_err(|_| format!("top_m needs a positive integer, got '{value}'")),
            "ratio" => value
                .trim()
                .parse()
                .map(|t| SelectionArg(Selection::RatioThreshold(t)))
                .map_err(|_| format!("ratio needs a number, got '{value}'")),
            other => Err(format!("unknown selection strategy '{other}' (top_m or ratio)")),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    /// Overlays the file on the library defaults.
    pub fn to_fit_config(&self) -> CliResult<FitConfig> {
        let mut cfg = FitConfig::default();
        let p = &self.preprocessing;
        set(&mut cfg.scaling_offset, p.scaling_offset);
        set(&mut cfg.whiten, p.whiten);
        set(&mut cfg.embed_inputs, p.embed_inputs);
        cfg.pca = match (p.pca_energy, p.pca_components) {
            (Some(_), Some(_)) => {
                return Err(CliError::usage("set at most one of pca_energy and pca_components"))
            }
            (Some(tau), None) => Some(Retention::Energy(tau)),
            (None, Some(k)) => Some(Retention::Count(k)),
            (None, None) => None,
        };

        let d = &self.dmaps;
        set(&mut cfg.dmaps.eps_multiplier, d.eps_multiplier);
        set(&mut cfg.dmaps.median_convention, d.median_convention);
        set(&mut cfg.dmaps.alpha_norm, d.alpha_norm);
        set(&mut cfg.dmaps.kappa, d.kappa);
        set(&mut cfg.dmaps.n_eigen, d.n_eigen);
        set(&mut cfg.dmaps.coordinate_scaling, d.coordinate_scaling);
        set(&mut cfg.dmaps.regression_bandwidth_factor, d.regression_bandwidth_factor);
        set(&mut cfg.dmaps.regression_ridge, d.regression_ridge);
        set(&mut cfg.dmaps.regression_rcond, d.regression_rcond);
        if let Some(s) = &d.selection {
            cfg.dmaps.selection = s.parse::<SelectionArg>().map_err(CliError::Usage)?.0;
        }

        set(&mut cfg.gh.eps_factor, self.gh.eps_factor);
        set(&mut cfg.gh.delta, self.gh.delta);

        let s = &self.sampler;
        set(&mut cfg.sampler.f0, s.f0);
        set(&mut cfg.sampler.burn_in, s.burn_in);
        set(&mut cfg.sampler.stride, s.stride);
        set(&mut cfg.sampler.chains, s.chains);
        match (s.step, s.step_fraction) {
            (Some(_), Some(_)) => return Err(CliError::usage("set at most one of step and step_fraction")),
            (Some(dr), None) => cfg.sampler.step = StepSize::Absolute(dr),
            (None, Some(f)) => cfg.sampler.step = StepSize::BandwidthFraction(f),
            (None, None) => {}
        }
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Checks every setting that does not depend on the data.
pub fn validate(cfg: &FitConfig) -> CliResult<()> {
    cfg.dmaps.validate()?;
    cfg.gh.validate()?;
    if !(cfg.scaling_offset >= 0.0 && cfg.scaling_offset.is_finite()) {
        return Err(CliError::usage("scaling_offset must be finite and non-negative"));
    }
    match cfg.pca {
        Some(Retention::Energy(tau)) if !(tau > 0.0 && tau <= 1.0) => {
            return Err(CliError::usage("pca_energy must lie in (0, 1]"))
        }
        Some(Retention::Count(0)) => return Err(CliError::usage("pca_components must be positive")),
        _ => {}
    }
    let s = &cfg.sampler;
    if !(s.f0 >= 0.0 && s.f0.is_finite()) {
        return Err(CliError::usage("f0 must be finite and non-negative"));
    }
    let step = match s.step {
        StepSize::Absolute(v) | StepSize::BandwidthFraction(v) => v,
    };
    if !(step > 0.0 && step.is_finite()) {
        return Err(CliError::usage("sampler step must be positive"));
    }
    if s.burn_in < 1 || s.stride < 1 || s.chains < 1 {
        return Err(CliError::usage("burn_in, stride and chains must be at least 1"));
    }
    Ok(())
}
