use std::f64::consts::PI;

use serde_json::json;
use wavecg::evolve::{self, InitialData};
use wavecg::kernel::MemoryKernel;
use wavecg::operator::{assemble, GridSpec};
use wavecg::resolvent::{self, NormOptions, ResolventSample};
use wavecg::spectrum::{self, SigmaOptions, Strip};
use wavecg::{symbols, Complex64, Error, Kernel};

use crate::config::{InitialKind, RunConfig, Sampling};
use crate::report::{col, Cell, Metadata, Output};

/// Outcome of a command that ran to completion.
pub enum Status {
    Ok,
    /// Artifacts were written, but a checked property failed.
    Violation(Vec<String>),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(Error::PropertyViolation(_)) => 2,
            _ => 1,
        }
    }
}

type Res = Result<Status, CliError>;

fn build_kernel(cfg: &RunConfig, require_valid: bool) -> Result<Kernel, CliError> {
    let modes: Vec<(f64, f64)> = cfg.kernel.iter().map(|p| (p[0], p[1])).collect();
    let k = if cfg.normalize { MemoryKernel::normalize(modes)? } else { MemoryKernel::new(modes)? };
    if require_valid && !k.check().valid {
        return Err(CliError::Usage(format!(
            "kernel has sum a/b^2 = {} instead of 1; fix the amplitudes or set \"normalize\": true",
            k.mass_g()
        )));
    }
    Ok(k)
}

fn meta(cmd: &str, cfg: &RunConfig, k: &Kernel) -> Metadata {
    Metadata::new(cmd, cfg, k.modes().iter().map(|&(a, b)| [a, b]).collect())
}

fn status(v: Vec<String>) -> Status {
    if v.is_empty() {
        Status::Ok
    } else {
        Status::Violation(v)
    }
}

pub fn kernel_check(cfg: &RunConfig, out: &mut Output) -> Res {
    let k = build_kernel(cfg, false)?;
    let rep = k.check();
    let m = meta("kernel-check", cfg, &k);
    let body = serde_json::to_value(&rep).expect("report serializes");
    println!("{}", serde_json::to_string(&body).expect("json"));
    out.json("kernel_check.json", &m, body)?;
    Ok(if rep.valid {
        Status::Ok
    } else {
        Status::Violation(vec![format!("sum a/b^2 = {} is not 1", rep.mass_g)])
    })
}

pub fn transfer_scan(cfg: &RunConfig, out: &mut Output) -> Res {
    let k = build_kernel(cfg, true)?;
    let tc = &cfg.transfer_scan;
    if !(tc.s_max > 0.0) || tc.n_samples < 1 {
        return Err(CliError::Usage("transfer_scan needs s_max > 0 and n_samples >= 1".into()));
    }
    let mut rows = Vec::with_capacity(tc.n_samples);
    let mut viol = Vec::new();
    let mut c0 = f64::INFINITY;
    for i in 1..=tc.n_samples {
        let s = tc.s_max * i as f64 / tc.n_samples as f64;
        let lam = Complex64::new(0.0, s);
        let l = symbols::ell(&k, lam)?;
        let p = symbols::p2_with_ell(lam, l)?;
        let term = (1.0 + s.sqrt()) * p.re;
        let arg = p.arg();
        c0 = c0.min(term);
        if l.re < 1.0 || l.im.abs() >= 1.0 || p.re <= 0.0 || !(arg > -PI / 2.0 && arg < PI / 4.0) {
            viol.push(format!("s = {s}: ell = {l}, p2 = {p}"));
        }
        rows.push(vec![s.into(), l.re.into(), l.im.into(), p.re.into(), p.im.into(), term.into(), arg.into()]);
    }
    let m = meta("transfer-scan", cfg, &k);
    out.csv(
        "transfer_scan.csv",
        &m,
        &[
            col("s", "frequency, lambda = i s"),
            col("re_ell", "Re ell(i s)"),
            col("im_ell", "Im ell(i s)"),
            col("re_p2", "Re p2(i s)"),
            col("im_p2", "Im p2(i s)"),
            col("c0_term", "(1 + sqrt|s|) Re p2(i s)"),
            col("arg_p2", "arg p2(i s) in radians"),
        ],
        rows,
    )?;
    out.json("transfer_scan.json", &m, json!({ "c0_hat": c0, "n_samples": tc.n_samples, "violations": viol }))?;
    Ok(status(viol))
}

pub fn spectrum(cfg: &RunConfig, out: &mut Output) -> Res {
    let k = build_kernel(cfg, true)?;
    let sc = &cfg.spectrum;
    let mut strip = Strip::default_for(&k).with_im(sc.im_min, sc.im_max);
    if let Some(r) = sc.re_min {
        strip.re_min = r;
    }
    let mut opt = SigmaOptions::for_strip(&strip);
    if let Some(n) = sc.n_re {
        opt.n_re = n;
    }
    if let Some(n) = sc.n_im {
        opt.n_im = n;
    }
    let roots = spectrum::sigma_find(&k, &strip, &opt)?;
    let gen = if sc.match_eigenvalues { Some(assemble(&k, &cfg.grid)?) } else { None };
    let mut rows = Vec::new();
    let mut viol = Vec::new();
    for r in roots.all() {
        if r.re >= 0.0 {
            viol.push(format!("root {} has non-negative real part", r.lambda()));
        }
        let class = match r.class {
            spectrum::RootClass::Sigma => "sigma",
            spectrum::RootClass::ZEll => "z_ell",
        };
        let mut row: Vec<Cell> = vec![r.re.into(), r.im.into(), r.residual.into(), class.into()];
        if let Some(g) = &gen {
            let e = spectrum::nearest_eigenvalue(g, r.lambda(), 1e-12, 80)?;
            row.extend([e.re.into(), e.im.into()]);
        }
        rows.push(row);
    }
    let m = meta("spectrum", cfg, &k);
    let mut cols = vec![
        col("re", "Re lambda of the root"),
        col("im", "Im lambda of the root"),
        col("residual", "|chi| (sigma) or |ell| (z_ell) at the root"),
        col("class", "sigma: zero of chi; z_ell: zero of ell"),
    ];
    if gen.is_some() {
        cols.push(col("eig_re", "Re of the nearest eigenvalue of the discretized generator"));
        cols.push(col("eig_im", "Im of the nearest eigenvalue of the discretized generator"));
    }
    out.csv("spectrum.csv", &m, &cols, rows)?;
    out.json(
        "spectrum.json",
        &m,
        json!({
            "strip": strip,
            "seed_grid": [opt.n_re, opt.n_im],
            "sigma_roots": roots.sigma_roots.len(),
            "z_ell_roots": roots.z_ell_roots.len(),
            "violations": viol,
        }),
    )?;
    Ok(status(viol))
}

/// Default grid of the resolvent scans.
pub fn resolvent_grid() -> GridSpec {
    GridSpec::new(1024, 128)
}

pub fn resolvent_scan(cfg: &RunConfig, out: &mut Output) -> Res {
    let k = build_kernel(cfg, true)?;
    let rc = &cfg.resolvent_scan;
    if !(rc.s_max > rc.s_min) {
        return Err(CliError::Usage("resolvent_scan needs s_max > s_min".into()));
    }
    let grid = rc.grid.clone().unwrap_or_else(resolvent_grid);
    let gen = assemble(&k, &grid)?;
    let opt = NormOptions { seed: cfg.seed, ..Default::default() };
    let samples: Vec<Result<ResolventSample, Error>> = match rc.sampling {
        Sampling::Peaks => resolvent::peak_samples(&gen, rc.s_min, rc.s_max, &opt)?.into_iter().map(Ok).collect(),
        Sampling::Uniform => {
            if rc.n_samples < 2 {
                return Err(CliError::Usage("uniform sampling needs n_samples >= 2".into()));
            }
            let grid: Vec<f64> = (0..rc.n_samples)
                .map(|i| rc.s_min + (rc.s_max - rc.s_min) * i as f64 / (rc.n_samples - 1) as f64)
                .collect();
            resolvent::scan_with(&gen, &grid, &opt).samples
        }
    };
    let ok: Vec<ResolventSample> = samples.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let exponent = resolvent::growth_exponent(&ok, rc.s_min, rc.s_max);
    let rows = samples
        .iter()
        .map(|r| match r {
            Ok(s) => vec![s.s.into(), s.norm.into(), method_name(s).into(), Cell::Empty],
            Err(e) => vec![Cell::Empty, Cell::Empty, Cell::Empty, Cell::Text(e.to_string())],
        })
        .collect();
    let m = meta("resolvent-scan", cfg, &k);
    out.csv(
        "resolvent_scan.csv",
        &m,
        &[
            col("s", "frequency, lambda = i s"),
            col("norm", "||(i s - A_h)^{-1}|| in the energy norm"),
            col("method", "svd (dense) or power_iteration"),
            col("error", "failure message when the sample could not be computed"),
        ],
        rows,
    )?;
    out.json(
        "resolvent_scan.json",
        &m,
        json!({
            "grid": grid,
            "dim": gen.dim(),
            "exponent": exponent,
            "window": [rc.s_min, rc.s_max],
            "samples": ok.len(),
            "failed": samples.len() - ok.len(),
        }),
    )?;
    Ok(Status::Ok)
}

fn method_name(s: &ResolventSample) -> &'static str {
    match s.method {
        resolvent::NormMethod::Svd => "svd",
        resolvent::NormMethod::PowerIteration => "power_iteration",
    }
}

pub fn lower_bound(cfg: &RunConfig, out: &mut Output) -> Res {
    let k = build_kernel(cfg, true)?;
    let lc = &cfg.lower_bound;
    if lc.n_min < 1 || lc.n_max < lc.n_min {
        return Err(CliError::Usage("lower_bound needs 1 <= n_min <= n_max".into()));
    }
    let mut rows = Vec::new();
    let mut failing = Vec::new();
    for n in lc.n_min..=lc.n_max {
        let b = resolvent::lower_bound(&k, n)?;
        let target = PI * n as f64 / 16.0;
        if b.bound * b.bound < target {
            failing.push(n);
        }
        rows.push(vec![
            n.into(),
            b.alpha_n.0.into(),
            b.alpha_n.1.into(),
            b.sigma_n.0.into(),
            b.sigma_n.1.into(),
            b.u_plus_abs().into(),
            b.bound.into(),
            (b.bound * b.bound).into(),
            target.into(),
        ]);
    }
    // smallest n0 in range with bound^2 >= pi n/16 for all n >= n0
    let threshold = match failing.last() {
        None => Some(lc.n_min),
        Some(&n) if n < lc.n_max => Some(n + 1),
        Some(_) => None,
    };
    let viol: Vec<String> = failing
        .iter()
        .filter(|&&n| n >= 10)
        .map(|n| format!("bound^2 < pi n / 16 at n = {n}"))
        .collect();
    let m = meta("lower-bound", cfg, &k);
    out.csv(
        "lower_bound.csv",
        &m,
        &[
            col("n", "index, s = 2 pi n"),
            col("re_alpha", "Re alpha_n = Re ell(2 pi n i)"),
            col("im_alpha", "Im alpha_n"),
            col("re_sigma", "Re sigma_n = Re sqrt(2 pi n i / alpha_n)"),
            col("im_sigma", "Im sigma_n"),
            col("abs_u_plus", "|1/4 + alpha_n sigma_n / (4 tanh sigma_n)|"),
            col("bound", "sqrt(max(|u_plus|^2 - 1/3, 0)), a lower bound for the resolvent norm at 2 pi n i"),
            col("bound_sq", "bound^2"),
            col("pi_n_over_16", "pi n / 16"),
        ],
        rows,
    )?;
    out.json("lower_bound.json", &m, json!({ "empirical_threshold": threshold, "failing_n": failing }))?;
    Ok(status(viol))
}

pub fn evolve(cfg: &RunConfig, out: &mut Output) -> Res {
    let k = build_kernel(cfg, true)?;
    let ec = &cfg.evolve;
    let gen = assemble(&k, &cfg.grid)?;
    let (z0, tag) = match ec.initial {
        InitialKind::InverseApplied => (evolve::inverse_applied_datum(&gen, cfg.seed)?, InitialData::InverseApplied),
        InitialKind::Random => {
            let r = evolve::random_energy_state(&gen, cfg.seed);
            let n = gen.w_norm(&r);
            (r.into_iter().map(|v| v / n).collect(), InitialData::Custom)
        }
    };
    let tr = evolve::evolve_energy(&gen, &z0, ec.t_max, ec.dt, tag)?;
    let fit = tr.fit_window(ec.fit_window[0], ec.fit_window[1]);
    let w = evolve::SLOPE_WINDOW;
    let rows = tr
        .times
        .iter()
        .zip(&tr.energies)
        .enumerate()
        .map(|(i, (&t, &e))| {
            // row i >= 1 is positive checkpoint i-1; its window ends there
            let slope = if i >= w { tr.slopes.get(i - w).map(|p| p.1) } else { None };
            vec![t.into(), e.into(), slope.into()]
        })
        .collect();
    let inc = tr.max_relative_increase();
    let viol = if inc > 1e-10 { vec![format!("energy increased by a relative {inc:e}")] } else { vec![] };
    let m = meta("evolve", cfg, &k);
    out.csv(
        "evolve.csv",
        &m,
        &[
            col("t", "time"),
            col("energy", "||z(t)||_W, the discrete energy norm"),
            col("local_slope", "log-log slope of energy over the 8 checkpoints ending at this row"),
        ],
        rows,
    )?;
    out.json(
        "evolve.json",
        &m,
        json!({
            "fitted_slope": fit,
            "window": ec.fit_window,
            "grid": cfg.grid,
            "dim": gen.dim(),
            "initial_data": tag,
            "max_relative_increase": inc,
        }),
    )?;
    Ok(status(viol))
}

pub fn decay_report(cfg: &RunConfig, out: &mut Output) -> Res {
    let k = build_kernel(cfg, true)?;
    let dc = &cfg.decay_report;
    if !(dc.t_max > dc.t_min && dc.t_min > 0.0) || dc.n_times < 2 {
        return Err(CliError::Usage("decay_report needs 0 < t_min < t_max and n_times >= 2".into()));
    }
    let gen = assemble(&k, &dc.grid)?;
    let ratio = (dc.t_max / dc.t_min).powf(1.0 / (dc.n_times - 1) as f64);
    let times: Vec<f64> = (0..dc.n_times).map(|i| dc.t_min * ratio.powi(i as i32)).collect();
    let su = evolve::semi_uniform_norm(&gen, &times, dc.dt)?;
    let scaled: Vec<f64> = su.iter().map(|(t, v)| t * t * v).collect();
    let band = scaled.iter().cloned().fold(0.0, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let rate = evolve::a2_decay_rate(&gen, dc.a2_t_max, dc.dt, cfg.seed)?;
    let viol: Vec<String> = su
        .windows(2)
        .filter(|w| w[1].1 > w[0].1 * (1.0 + 1e-10))
        .map(|w| format!("||S(t) A^-1|| increased between t = {} and t = {}", w[0].0, w[1].0))
        .collect();
    let rows = su.iter().zip(&scaled).map(|(&(t, v), &s)| vec![t.into(), v.into(), s.into()]).collect();
    let m = meta("decay-report", cfg, &k);
    out.csv(
        "decay_report.csv",
        &m,
        &[
            col("t", "time"),
            col("norm", "||S_h(t) A_h^{-1}||_W"),
            col("t2_norm", "t^2 ||S_h(t) A_h^{-1}||_W"),
        ],
        rows,
    )?;
    out.json(
        "decay_report.json",
        &m,
        json!({
            "grid": dc.grid,
            "dim": gen.dim(),
            "band_ratio": band,
            "within_two_decades": band <= 100.0,
            "a2_exponential_rate": rate,
        }),
    )?;
    Ok(status(viol))
}
