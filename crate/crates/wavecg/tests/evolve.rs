use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use wavecg::evolve::{
    a2_decay_rate, evolve_energy, inverse_applied_datum, random_energy_state, semi_uniform_norm, step_cn, CnStepper,
    InitialData,
};
use wavecg::operator::{assemble, GridSpec};
use wavecg::resolvent::{power_resolvent_norm, sample_datum, NormOptions, SmoothDatum};
use wavecg::{Generator, Kernel};

fn k1() -> Kernel {
    Kernel::new(vec![(1.0, 1.0)]).unwrap()
}

fn small() -> Generator {
    assemble(&k1(), &GridSpec::new(24, 16).with_history_ratio(1.4)).unwrap()
}

fn diff_norm(g: &Generator, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    g.w_norm(&d)
}

#[test]
fn zero_stays_zero_and_bad_input_is_rejected() {
    let g = small();
    let z = vec![0.0; g.dim()];
    assert!(step_cn(&g, &z, 0.01).unwrap().iter().all(|&v| v == 0.0));
    assert!(step_cn(&g, &z[1..], 0.01).is_err());
    assert!(CnStepper::new(&g, 0.0).is_err());
    assert!(CnStepper::new(&g, f64::NAN).is_err());
    assert!(evolve_energy(&g, &z, 1.0, 2.0, InitialData::Custom).is_err());
}

#[test]
fn wave_block_conserves_energy() {
    let g = assemble(&k1(), &GridSpec::new(64, 8)).unwrap().wave_block().unwrap();
    let z0 = random_energy_state(&g, 11);
    let st = CnStepper::new(&g, 0.01).unwrap();
    let e0 = g.w_norm(&z0);
    let mut z = z0;
    for _ in 0..20 {
        z = st.step_n(&z, 50);
        assert!((g.w_norm(&z) - e0).abs() < 1e-10 * e0);
    }
}

#[test]
fn second_order_in_time() {
    let g = small();
    // smooth data: stiff heat modes carry almost no energy
    let z0: Vec<f64> = sample_datum(&g, &SmoothDatum { cell: 2 }).iter().map(|z| z.re).collect();
    let run = |dt: f64| CnStepper::new(&g, dt).unwrap().step_n(&z0, (1.0 / dt).round() as usize);
    let (a, b, c) = (run(0.02), run(0.01), run(0.005));
    let ratio = diff_norm(&g, &a, &b) / diff_norm(&g, &b, &c);
    assert!((ratio - 4.0).abs() < 0.3, "{ratio}");
}

#[test]
fn inverse_applied_datum_has_unit_energy() {
    let g = small();
    let z = inverse_applied_datum(&g, 3).unwrap();
    assert!((g.w_norm(&z) - 1.0).abs() < 1e-12);
    // A z is parallel to the random state it was built from
    let r = random_energy_state(&g, 3);
    let az = g.apply(&z);
    let scale = g.w_inner(&az, &r) / g.w_inner(&r, &r);
    let res: Vec<f64> = az.iter().zip(&r).map(|(x, y)| x - scale * y).collect();
    assert!(g.w_norm(&res) < 1e-9 * g.w_norm(&az));
}

#[test]
fn decay_trace_is_monotone() {
    let g = small();
    let z0 = inverse_applied_datum(&g, 9).unwrap();
    let tr = evolve_energy(&g, &z0, 20.0, 0.01, InitialData::InverseApplied).unwrap();
    assert_eq!(tr.times[0], 0.0);
    assert!((tr.times.last().unwrap() - 20.0).abs() < 1e-9);
    assert!(tr.max_relative_increase() <= 1e-12);
    assert!(tr.energies.last().unwrap() < &tr.energies[0]);
    assert!(tr.fit_window(2.0, 20.0).unwrap() < 0.0);
}

#[test]
fn rough_data_decay_slower_than_smooth() {
    let g = small();
    let smooth = inverse_applied_datum(&g, 21).unwrap();
    let r = random_energy_state(&g, 21);
    let nr = g.w_norm(&r);
    let rough: Vec<f64> = r.iter().map(|v| v / nr).collect();
    let fs = evolve_energy(&g, &smooth, 20.0, 0.01, InitialData::InverseApplied).unwrap();
    let fr = evolve_energy(&g, &rough, 20.0, 0.01, InitialData::Custom).unwrap();
    let (ss, sr) = (fs.fit_window(2.0, 20.0).unwrap(), fr.fit_window(2.0, 20.0).unwrap());
    assert!(sr > ss, "rough {sr} vs smooth {ss}");
}

#[test]
fn heat_memory_block_decays_exponentially() {
    let rate = a2_decay_rate(&small(), 30.0, 0.01, 1).unwrap();
    assert!(rate < -0.05, "{rate}");
}

#[test]
fn semi_uniform_norm_against_direct_propagation() {
    let g = assemble(&k1(), &GridSpec::new(12, 8).with_history_ratio(1.6)).unwrap();
    let n = g.dim();
    let dt = 0.01;
    let times = [0.0, 0.37, 1.0, 3.0];
    let su = semi_uniform_norm(&g, &times, dt).unwrap();
    // t = 0: ||A^{-1}|| from an unrelated code path
    let opt = NormOptions { tol: 1e-13, max_iter: 50_000, ..Default::default() };
    let inv = power_resolvent_norm(&g, Complex64::new(0.0, 0.0), &opt).unwrap();
    assert!((su[0].1 - inv).abs() < 1e-6 * inv, "{} vs {inv}", su[0].1);
    let st = CnStepper::new(&g, dt).unwrap();
    for &(t, v) in &su[1..] {
        let steps = (t / dt).round() as usize;
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                let x = g.inverse_apply(&g.l_t_solve(&e)).unwrap();
                g.l_t_apply(&st.step_n(&x, steps))
            })
            .collect();
        let m = DMatrix::from_fn(n, n, |r, c| cols[c][r]);
        let direct = m.singular_values().max();
        assert!((v - direct).abs() < 1e-9 * direct, "t={t}: {v} vs {direct}");
    }
    assert!(su.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12)));
    assert!(semi_uniform_norm(&g, &[1.0, 0.5], dt).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cn_never_increases_energy(seed in any::<u64>(), dt in 0.001f64..0.5) {
        let g = small();
        let st = CnStepper::new(&g, dt).unwrap();
        let mut z = random_energy_state(&g, seed);
        let mut e = g.w_norm(&z);
        for _ in 0..50 {
            z = st.step(&z);
            let en = g.w_norm(&z);
            prop_assert!(en <= e * (1.0 + 1e-12));
            e = en;
        }
    }
}
