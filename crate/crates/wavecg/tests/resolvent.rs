use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use wavecg::operator::{assemble, GridSpec};
use wavecg::resolvent::{
    apply_semianalytic, fit_slope, growth_exponent, local_maxima, lower_bound, norm_at, norm_at_with, phi1, phi2,
    power_resolvent_norm, sample_datum, scan, GridDatum, HistoryTreatment, LowerBoundDatum, NormMethod, NormOptions,
    ResolventSample, SmoothDatum,
};
use wavecg::spectrum::dense_eigenvalues;
use wavecg::{Generator, Kernel};

fn k1() -> Kernel {
    Kernel::new(vec![(1.0, 1.0)]).unwrap()
}

fn small() -> Generator {
    assemble(&k1(), &GridSpec::new(48, 24).with_history_ratio(1.4)).unwrap()
}

fn power() -> NormOptions {
    NormOptions { method: Some(NormMethod::PowerIteration), tol: 1e-12, max_iter: 20_000, ..Default::default() }
}

fn rel_err(g: &Generator, a: &[Complex64], b: &[Complex64]) -> f64 {
    let d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    g.w_norm(&d) / g.w_norm(b)
}

#[test]
fn svd_and_power_iteration_agree() {
    let g = small();
    for s in [0.0, 3.3, 17.0, -9.5] {
        let a = norm_at(&g, s).unwrap();
        assert_eq!(a.method, NormMethod::Svd);
        let b = norm_at_with(&g, s, &power()).unwrap();
        // power iteration approaches the largest singular value from below
        assert!(b.norm <= a.norm * (1.0 + 1e-9) && b.norm >= a.norm * (1.0 - 1e-4), "s={s}: {} vs {}", a.norm, b.norm);
    }
}

#[test]
fn norm_is_even_in_s_and_finite_at_zero() {
    let g = small();
    let r0 = norm_at(&g, 0.0).unwrap().norm;
    assert!(r0.is_finite() && r0 > 0.0);
    for s in [1.0, 7.7, 30.0] {
        let (a, b) = (norm_at(&g, s).unwrap().norm, norm_at(&g, -s).unwrap().norm);
        assert!((a - b).abs() < 1e-9 * a, "{s}: {a} {b}");
    }
}

#[test]
fn norm_bounded_below_by_spectral_distance() {
    let g = small();
    let ev = dense_eigenvalues(&g, 2000).unwrap();
    for i in 0..40 {
        let s = 0.37 + i as f64 * 0.9;
        let is = Complex64::new(0.0, s);
        let d = ev.iter().map(|z| (z - is).norm()).fold(f64::INFINITY, f64::min);
        let n = norm_at(&g, s).unwrap().norm;
        assert!(n >= (1.0 - 1e-9) / d, "s={s}: {n} < {}", 1.0 / d);
    }
}

#[test]
fn hille_yosida_bound_in_right_half_plane() {
    // contraction semigroup: ||(lambda - A)^{-1}|| <= 1 / Re lambda
    let g = small();
    for &(re, im) in &[(0.1, 0.0), (0.5, 6.0), (2.0, -13.0), (0.05, PI)] {
        let n = power_resolvent_norm(&g, Complex64::new(re, im), &power()).unwrap();
        assert!(n <= (1.0 + 1e-8) / re, "{re}+{im}i: {n}");
    }
}

#[test]
fn lower_bound_formula() {
    let k = k1();
    assert!(lower_bound(&k, 0).is_err());
    for n in [1usize, 5, 40, 100] {
        let lb = lower_bound(&k, n).unwrap();
        let lam = Complex64::new(0.0, 2.0 * PI * n as f64);
        let ell = 1.0 + 1.0 / (lam + 1.0);
        assert!((Complex64::new(lb.alpha_n.0, lb.alpha_n.1) - ell).norm() < 1e-13);
        let sig = (lam / ell).sqrt();
        let up = 0.25 + ell * sig / (4.0 * sig.tanh());
        assert!((lb.u_plus_abs() - up.norm()).abs() < 1e-10 * up.norm());
        assert!((lb.bound - (up.norm_sqr() - 1.0 / 3.0).sqrt()).abs() < 1e-10 * lb.bound);
    }
    let lb = lower_bound(&k, 100).unwrap();
    assert!((lb.u_plus_abs() * 4.0 / (2.0 * PI * 100.0).sqrt() - 1.0).abs() < 0.05);
    // alpha_n -> 1 like 1/n
    let a = |n: usize| {
        let l = lower_bound(&k, n).unwrap().alpha_n;
        Complex64::new(l.0 - 1.0, l.1).norm()
    };
    assert!(a(100) < 2e-3 && a(100) < a(10) / 9.0);
}

#[test]
fn lower_bound_datum_is_amplified_at_least_by_the_bound() {
    let k = k1();
    let g = assemble(&k, &GridSpec::new(1024, 64)).unwrap();
    for n in [2usize, 3] {
        let lam = Complex64::new(0.0, 2.0 * PI * n as f64);
        let d = LowerBoundDatum { n };
        let z = apply_semianalytic(&g, lam, &d, HistoryTreatment::GridTransfer).unwrap();
        let r = sample_datum(&g, &d);
        assert!(g.w_norm(&z) / g.w_norm(&r) >= lower_bound(&k, n).unwrap().bound);
    }
}

#[test]
fn semianalytic_grid_transfer_converges_to_direct_solve() {
    let lam = Complex64::new(0.5, 4.0);
    let d = SmoothDatum { cell: 3 };
    let errs: Vec<f64> = [GridSpec::new(256, 32), GridSpec::new(512, 64)]
        .iter()
        .map(|grid| {
            let g = assemble(&k1(), grid).unwrap();
            let zd = g.shifted_solver(lam).unwrap().solve(&sample_datum(&g, &d));
            let zs = apply_semianalytic(&g, lam, &d, HistoryTreatment::GridTransfer).unwrap();
            rel_err(&g, &zs, &zd)
        })
        .collect();
    assert!(errs[0] < 1e-3, "{errs:?}");
    assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
}

#[test]
fn exact_history_error_shrinks_with_history_refinement() {
    let lam = Complex64::new(0.5, 4.0);
    let d = SmoothDatum { cell: 3 };
    let errs: Vec<f64> = [1.3, 1.15, 1.075]
        .iter()
        .map(|&r| {
            let g = assemble(&k1(), &GridSpec::new(256, 32).with_history_ratio(r)).unwrap();
            let zd = g.shifted_solver(lam).unwrap().solve(&sample_datum(&g, &d));
            let zs = apply_semianalytic(&g, lam, &d, HistoryTreatment::Exact).unwrap();
            rel_err(&g, &zs, &zd)
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] < 0.05, "{errs:?}");
}

#[test]
fn memory_convolution_bound() {
    // xi(s) = int_0^s e^{-lambda (s - r)} eta_hat(r) dr satisfies
    // ||xi||_M <= 2 / (delta + 2 Re lambda) ||eta_hat||_M
    let k = k1();
    let g = assemble(&k, &GridSpec::new(64, 16)).unwrap();
    let lay = &g.layout;
    let lam = Complex64::new(1.0, 0.0);
    let edges = g.history().unwrap().edges();
    // cell averages of (1 - e^{-lambda s}) / lambda
    let prim = |s: f64| (s - (1.0 - (-lam * s).exp()) / lam) / lam;
    for cell in [0usize, 10, 30] {
        let d = SmoothDatum { cell };
        let z = apply_semianalytic(&g, lam, &d, HistoryTreatment::Exact).unwrap();
        let r = sample_datum(&g, &d);
        let mut xi = vec![Complex64::new(0.0, 0.0); g.dim()];
        let mut eta = vec![Complex64::new(0.0, 0.0); g.dim()];
        for j in 0..lay.n_mem {
            let a = (prim(edges[j + 1]) - prim(edges[j])) / (edges[j + 1] - edges[j]);
            for m in 0..lay.n_w {
                xi[lay.eta(j, m)] = z[lay.eta(j, m)] - a * z[lay.w(m)];
                eta[lay.eta(j, m)] = r[lay.eta(j, m)];
            }
        }
        let ratio = g.w_norm(&xi) / g.w_norm(&eta);
        assert!(ratio > 0.0 && ratio <= 2.0 / (k.delta() + 2.0 * lam.re), "cell {cell}: {ratio}");
    }
}

#[test]
fn semianalytic_residual_shrinks() {
    let lam = Complex64::new(0.5, 4.0);
    let d = SmoothDatum { cell: 3 };
    let res: Vec<f64> = [GridSpec::new(256, 32), GridSpec::new(512, 64)]
        .iter()
        .map(|grid| {
            let g = assemble(&k1(), grid).unwrap();
            let r = sample_datum(&g, &d);
            let z = apply_semianalytic(&g, lam, &d, HistoryTreatment::GridTransfer).unwrap();
            let az = g.apply(&z);
            let e: Vec<Complex64> = (0..g.dim()).map(|i| lam * z[i] - az[i] - r[i]).collect();
            g.w_norm(&e) / g.w_norm(&r)
        })
        .collect();
    assert!(res[0] < 1e-2 && res[1] < res[0] / 2.0, "{res:?}");
}

#[test]
fn grid_datum_round_trips_and_rejects_wrong_shapes() {
    let g = assemble(&k1(), &GridSpec::new(64, 16)).unwrap();
    let z = sample_datum(&g, &SmoothDatum { cell: 1 });
    let gd = GridDatum::new(&g, &z).unwrap();
    let back = sample_datum(&g, &gd);
    assert!(rel_err(&g, &back, &z) < 1e-14);
    assert!(GridDatum::new(&g, &z[1..]).is_err());
    // semianalytic path refuses blocks and the origin
    let w = g.wave_block().unwrap();
    assert!(apply_semianalytic(&w, Complex64::new(0.0, 3.0), &SmoothDatum { cell: 0 }, HistoryTreatment::Exact).is_err());
    assert!(apply_semianalytic(&g, Complex64::new(0.0, 0.0), &SmoothDatum { cell: 0 }, HistoryTreatment::Exact).is_err());
}

#[test]
fn scan_and_fits() {
    let g = small();
    let empty = scan(&g, &[]);
    assert!(empty.samples.is_empty() && empty.exponent.is_none());
    let mk = |s: f64, n: f64| ResolventSample { s, norm: n, method: NormMethod::Svd };
    let pl: Vec<ResolventSample> = (1..50).map(|i| mk(i as f64, 3.0 * (i as f64).powf(0.7))).collect();
    assert!((growth_exponent(&pl, 1.0, 50.0).unwrap() - 0.7).abs() < 1e-12);
    assert!(growth_exponent(&pl, 60.0, 70.0).is_none());
    assert!(fit_slope(&[(1.0, 2.0), (1.0, 3.0)]).is_none());
    let zig: Vec<ResolventSample> = (0..10).map(|i| mk(i as f64, if i % 3 == 1 { 5.0 } else { 1.0 })).collect();
    let peaks: Vec<f64> = local_maxima(&zig).iter().map(|r| r.s).collect();
    assert_eq!(peaks, vec![1.0, 4.0, 7.0]);
}

fn series(z: Complex64, skip: usize) -> Complex64 {
    // sum_{k >= 0} z^k / (k + skip)!
    let mut term = Complex64::new(1.0, 0.0);
    for k in 1..=skip {
        term /= k as f64;
    }
    let mut sum = term;
    for k in 1..80 {
        term = term * z / (k + skip) as f64;
        sum += term;
    }
    sum
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn phi_functions_match_taylor_series(re in -3.0f64..1.0, im in -3.0f64..3.0) {
        let z = Complex64::new(re, im);
        prop_assert!((phi1(z) - series(z, 1)).norm() < 1e-13 * series(z, 1).norm());
        prop_assert!((phi2(z) - series(z, 2)).norm() < 1e-12 * series(z, 2).norm());
    }
}
