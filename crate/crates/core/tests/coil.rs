use std::f64::consts::PI;

use pinpad_core::coil::{
    dipole_mutual, mutual_inductance, self_inductance, CoilGeometry, CoilLayout, CouplingTable, MU0,
};
use proptest::prelude::*;

/// Double line integral of dl1 . dl2 / R over two filaments, trapezoid rule
/// (spectrally accurate for periodic integrands).
fn neumann(a: f64, b: f64, n1: u32, n2: u32, p: f64, dz: f64, steps: usize) -> f64 {
    let h = 2.0 * PI / steps as f64;
    let trig: Vec<(f64, f64)> = (0..steps).map(|k| (k as f64 * h).sin_cos()).collect();
    let mut acc = 0.0;
    for &(s1, c1) in &trig {
        let (x1, y1) = (a * c1, a * s1);
        for &(s2, c2) in &trig {
            let dx = p + b * c2 - x1;
            let dy = b * s2 - y1;
            let r = (dx * dx + dy * dy + dz * dz).sqrt();
            acc += (c1 * c2 + s1 * s2) / r;
        }
    }
    MU0 / (4.0 * PI) * (n1 as f64 * n2 as f64) * a * b * acc * h * h
}

fn coil(r: f64, n: u32, c: [f64; 3]) -> CoilGeometry {
    CoilGeometry::new(r, n, c, 0.2e-3).unwrap()
}

#[test]
fn matches_neumann_line_integral() {
    // (a, b, n1, n2, lateral, gap)
    let cases = [
        (20e-3, 20e-3, 1, 1, 0.0, 5e-3),
        (20e-3, 10e-3, 2, 3, 0.0, 8e-3),
        (15e-3, 15e-3, 1, 1, 10e-3, 4e-3),
        (25e-3, 8e-3, 4, 1, 18e-3, 3e-3),
        (12e-3, 30e-3, 1, 2, 40e-3, 10e-3),
        (10e-3, 10e-3, 1, 1, 25e-3, 6e-3),
    ];
    for (a, b, n1, n2, p, dz) in cases {
        let m = mutual_inductance(&coil(a, n1, [0.0; 3]), &coil(b, n2, [p, 0.0, dz]))
            .unwrap()
            .henries();
        let oracle = neumann(a, b, n1, n2, p, dz, 1500);
        let rel = (m - oracle).abs() / oracle.abs();
        assert!(
            rel < 1e-3,
            "a={a} b={b} p={p} dz={dz}: {m:e} vs {oracle:e} ({rel:e})"
        );
    }
}

#[test]
fn far_field_tends_to_dipoles() {
    for (p, dz) in [(0.0, 1.0), (1.0, 0.0), (0.6, 0.8)] {
        let m = mutual_inductance(&coil(20e-3, 3, [0.0; 3]), &coil(15e-3, 2, [p, 0.0, dz]))
            .unwrap()
            .henries();
        let d = dipole_mutual(20e-3, 15e-3, 3, 2, p, dz);
        assert!(
            (m - d).abs() <= 0.01 * d.abs(),
            "p={p} dz={dz}: {m:e} vs {d:e}"
        );
    }
}

#[test]
fn self_inductance_is_largest_coupling() {
    let c = coil(20e-3, 2, [0.0; 3]);
    let l = self_inductance(&c).unwrap().henries();
    let m = mutual_inductance(&c, &c.moved_to([0.0, 0.0, 2e-3]))
        .unwrap()
        .henries();
    assert!(l > m && m > 0.0);
}

#[test]
fn table_tracks_direct_quadrature() {
    let layout = CoilLayout::default();
    let card = layout.card().unwrap();
    let button = layout.button([0.0, 0.0]).unwrap();
    let table = CouplingTable::build(&card, &button, (0.0, 40e-3), (0.5e-3, 2e-3), 0.5e-3).unwrap();
    let lc = self_inductance(&card).unwrap().henries();
    let lb = self_inductance(&button).unwrap().henries();
    for (p, dz) in [(3.3e-3, 1.1e-3), (17.7e-3, 0.9e-3), (31.2e-3, 1.7e-3)] {
        let m = mutual_inductance(&card, &button.moved_to([p, 0.0, dz]))
            .unwrap()
            .henries();
        let k = m / (lc * lb).sqrt();
        let t = table.eval(p, dz).unwrap();
        assert!((t - k).abs() < 1e-3, "p={p} dz={dz}: {t} vs {k}");
    }
    assert!(table.eval(table.p_max() + 1e-3, 1e-3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mutual_is_symmetric(
        a in 5e-3..30e-3f64, b in 5e-3..30e-3f64,
        n1 in 1u32..5, n2 in 1u32..5,
        p in 0.0..40e-3f64, dz in 1e-3..20e-3f64,
    ) {
        let ci = coil(a, n1, [0.0; 3]);
        let cq = coil(b, n2, [p, 0.0, dz]);
        let m1 = mutual_inductance(&ci, &cq).unwrap().henries();
        let m2 = mutual_inductance(&cq, &ci).unwrap().henries();
        prop_assert!((m1 - m2).abs() <= 1e-9 * m1.abs().max(1e-15));
    }

    #[test]
    fn coaxial_coupling_falls_with_gap(
        a in 5e-3..30e-3f64, b in 5e-3..30e-3f64, dz in 1e-3..30e-3f64, step in 0.5e-3..10e-3f64,
    ) {
        let near = mutual_inductance(&coil(a, 1, [0.0; 3]), &coil(b, 1, [0.0, 0.0, dz])).unwrap().henries();
        let far = mutual_inductance(&coil(a, 1, [0.0; 3]), &coil(b, 1, [0.0, 0.0, dz + step])).unwrap().henries();
        prop_assert!(near > far && far > 0.0);
    }
}
