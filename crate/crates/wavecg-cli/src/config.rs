//! Run configuration, read from a single JSON file. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use wavecg::operator::GridSpec;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// `[a, b]` pairs of `mu(s) = sum a exp(-b s)`.
    pub kernel: Vec<[f64; 2]>,
    /// Rescale amplitudes to unit mass before use.
    pub normalize: bool,
    /// Operator grid for `spectrum`, `resolvent-scan` and `evolve`.
    pub grid: GridSpec,
    pub seed: u64,
    pub transfer_scan: TransferScan,
    pub spectrum: SpectrumCfg,
    pub resolvent_scan: ResolventScan,
    pub lower_bound: LowerBoundCfg,
    pub evolve: EvolveCfg,
    pub decay_report: DecayReportCfg,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kernel: vec![[1.0, 1.0]],
            normalize: false,
            grid: GridSpec::new(128, 128),
            seed: 0,
            transfer_scan: TransferScan::default(),
            spectrum: SpectrumCfg::default(),
            resolvent_scan: ResolventScan::default(),
            lower_bound: LowerBoundCfg::default(),
            evolve: EvolveCfg::default(),
            decay_report: DecayReportCfg::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferScan {
    pub s_max: f64,
    pub n_samples: usize,
}

impl Default for TransferScan {
    fn default() -> Self {
        Self { s_max: 1000.0, n_samples: 10_000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumCfg {
    /// `None` means `-0.49 delta`.
    pub re_min: Option<f64>,
    pub im_min: f64,
    pub im_max: f64,
    /// Seed grid; `None` picks about eight points per `pi` along `Im`.
    pub n_re: Option<usize>,
    pub n_im: Option<usize>,
    /// Also locate the matching eigenvalue of the discretized generator.
    pub match_eigenvalues: bool,
}

impl Default for SpectrumCfg {
    fn default() -> Self {
        Self {
            re_min: None,
            im_min: 0.5,
            im_max: 50.0 * std::f64::consts::PI,
            n_re: None,
            n_im: None,
            match_eigenvalues: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Equispaced `s` between `s_min` and `s_max`.
    Uniform,
    /// One sample per resonance peak `s = Im lambda_k` near `k pi`.
    Peaks,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolventScan {
    pub s_min: f64,
    pub s_max: f64,
    pub n_samples: usize,
    pub sampling: Sampling,
    /// Grid override; defaults to `n_u = 1024`, `n_w = 128`.
    pub grid: Option<GridSpec>,
}

impl Default for ResolventScan {
    fn default() -> Self {
        Self { s_min: 20.0, s_max: 400.0, n_samples: 200, sampling: Sampling::Peaks, grid: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowerBoundCfg {
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for LowerBoundCfg {
    fn default() -> Self {
        Self { n_min: 1, n_max: 100 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// `A^{-1} r` for a random energy-space vector `r`.
    InverseApplied,
    /// The random vector `r` itself.
    Random,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveCfg {
    pub t_max: f64,
    pub dt: f64,
    pub initial: InitialKind,
    pub fit_window: [f64; 2],
}

impl Default for EvolveCfg {
    fn default() -> Self {
        Self { t_max: 100.0, dt: 0.01, initial: InitialKind::InverseApplied, fit_window: [10.0, 100.0] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayReportCfg {
    /// Dense grid, kept small.
    pub grid: GridSpec,
    pub dt: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub n_times: usize,
    /// Horizon for the exponential rate of the heat-memory block.
    pub a2_t_max: f64,
}

impl Default for DecayReportCfg {
    fn default() -> Self {
        Self {
            grid: GridSpec::new(48, 48).with_history_ratio(1.4),
            dt: 0.01,
            t_min: 10.0,
            t_max: 100.0,
            n_times: 13,
            a2_t_max: 40.0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid configuration: {e}"))
    }
}
