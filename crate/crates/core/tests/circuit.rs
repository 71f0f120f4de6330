use num_complex::Complex64;
use pinpad_core::circuit::{
    angular, button_impedance, card_impedance, card_resonance, frequency_grid, input_impedance,
    reader_current_per_button, reader_impedance, reflected_impedance, reflection_coefficient,
    reflection_sweep, residual, solve_system, CouplingFactors, S11Point, Testbed,
    ACTIVATION_BAND_HZ, CARRIER_HZ,
};
use proptest::prelude::*;

type M3 = [[Complex64; 3]; 3];

fn det(m: &M3) -> Complex64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Cramer's rule.
fn cramer(m: &M3, v: &[Complex64; 3]) -> [Complex64; 3] {
    let d = det(m);
    let mut out = [Complex64::default(); 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = *m;
        for r in 0..3 {
            mc[r][c] = v[r];
        }
        *o = det(&mc) / d;
    }
    out
}

fn gap(x: &[S11Point], y: &[S11Point]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(p, q)| (p.s11 - q.s11).norm())
        .fold(0.0, f64::max)
}

fn bed() -> Testbed {
    Testbed::reference().unwrap()
}

#[test]
fn button_sweeps_are_passive_and_distinct() {
    let bed = bed();
    let (lo, hi) = ACTIVATION_BAND_HZ;
    let base = reflection_sweep(&bed, lo, hi, 201, None).unwrap();
    let sweeps: Vec<_> = (0..9)
        .map(|b| reflection_sweep(&bed, lo, hi, 201, Some(b)).unwrap())
        .collect();
    for s in sweeps.iter().chain([&base]) {
        assert!(s.points.iter().all(|p| p.s11.norm() <= 1.0 + 1e-12));
    }
    for a in 0..9 {
        assert!(
            gap(&sweeps[a].points, &base.points) > 1e-6,
            "button {a} indistinguishable from card"
        );
        for b in a + 1..9 {
            assert!(
                gap(&sweeps[a].points, &sweeps[b].points) > 1e-6,
                "buttons {a} and {b}"
            );
        }
    }
}

#[test]
fn every_button_shifts_reader_current() {
    let bed = bed();
    let f = frequency_grid(13.06e6, 14.06e6, 101).unwrap();
    let sweep = reader_current_per_button(&bed, &f).unwrap();
    let peaks: Vec<f64> = (0..9).map(|b| sweep.max_abs_deviation(b)).collect();
    for (b, p) in peaks.iter().enumerate() {
        assert!(*p > 0.0 && p.is_finite(), "button {b}");
    }
    for a in 0..9 {
        for b in a + 1..9 {
            assert_ne!(sweep.deviation(a), sweep.deviation(b));
        }
    }
}

#[test]
fn card_resonance_stays_in_band() {
    let bed = bed();
    let f = frequency_grid(12.0e6, 15.5e6, 3501).unwrap();
    let (lo, hi) = ACTIVATION_BAND_HZ;
    let base = card_resonance(
        &bed,
        &bed.coupling_factors(None, [0.0; 3]).unwrap(),
        false,
        &f,
    )
    .unwrap();
    assert!((base - CARRIER_HZ).abs() < 0.2e6, "{base}");
    for (b, k) in bed.button_factors().unwrap().iter().enumerate() {
        let r = card_resonance(&bed, k, true, &f).unwrap();
        assert!(r >= lo && r <= hi, "button {b}: {r}");
    }
}

#[test]
fn two_coil_closed_form() {
    let bed = bed();
    let k = bed.coupling_factors(None, [0.0; 3]).unwrap();
    for f in [13.06e6, 13.56e6, 14.06e6] {
        let w = angular(f);
        let sys = bed.system(&k, &bed.card, false, w);
        let z1 = reader_impedance(&bed.reader, w);
        let z2 = card_impedance(&bed.card, w);
        let m = sys.couplings.m12;
        let i1 = bed.reader.v1 / (z1 + w * w * m * m / z2);
        let i2 = -Complex64::new(0.0, w * m) * i1 / z2;
        let cur = solve_system(&sys).unwrap();
        assert!((cur.i1 - i1).norm() <= 1e-10 * i1.norm());
        assert!((cur.i2 - i2).norm() <= 1e-10 * i2.norm());
        assert_eq!(cur.ip, Complex64::default());
    }
}

#[test]
fn input_impedance_matches_reflection_without_card_button_coupling() {
    let bed = bed();
    let mut k = bed.button_factors().unwrap()[4];
    k.k2p = 0.0;
    let w = bed.omega_c();
    let sys = bed.system(&k, &bed.card, true, w);
    let c = sys.couplings;
    let expect = reader_impedance(&bed.reader, w)
        + reflected_impedance(
            w,
            c.m12,
            c.m1p,
            card_impedance(&bed.card, w),
            button_impedance(&bed.button, w),
        )
        .unwrap();
    let z = input_impedance(&sys).unwrap();
    assert!((z - expect).norm() <= 1e-10 * expect.norm());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solve_agrees_with_cramer(
        k12 in -0.5..0.5f64, k1p in -0.3..0.3f64, k2p in -0.5..0.5f64,
        f in 10e6..17e6f64, modulated in any::<bool>(),
    ) {
        let bed = bed();
        let card = bed.card.with_modulation(modulated);
        let k = CouplingFactors { k12, k1p, k2p };
        let sys = bed.system(&k, &card, true, angular(f));
        prop_assert!(sys.is_symmetric());
        let cur = solve_system(&sys).unwrap();
        let oracle = cramer(&sys.z, &sys.v);
        for (got, want) in cur.as_array().iter().zip(&oracle) {
            prop_assert!((got - want).norm() <= 1e-9 * want.norm().max(1e-12));
        }
        prop_assert!(residual(&sys, &cur) < 1e-12);
    }

    #[test]
    fn reflection_is_passive(f in 1e6..30e6f64, button in 0usize..9) {
        let bed = bed();
        let k = bed.button_factors().unwrap()[button];
        let z = input_impedance(&bed.system(&k, &bed.card, true, angular(f))).unwrap();
        prop_assert!(z.re > 0.0);
        let s = reflection_coefficient(z, bed.reader.z0);
        prop_assert!(s.norm() <= 1.0);
    }
}
