use kgsa_core::geodesic::{
    christoffel_crosscheck, christoffel_h_drift, conserved, integrate, predict_barrier, reversal_error,
    GeodesicOptions, PhasePoint,
};
use kgsa_core::geometry::{check_causal_order, diamond_bounds, Covector, Diamond, Metric, SpacetimePoint};
use kgsa_core::potential::SpikeFamily;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn family() -> SpikeFamily {
    let mut v = SpikeFamily::standard();
    v.prepare(40.0).unwrap();
    v
}

/// Initial data at x₀ ∈ [−3, 3] with C/p_z² = k.
fn initial(rng: &mut ChaCha8Rng, k: f64) -> PhasePoint {
    let x0: f64 = rng.random_range(-3.0..3.0);
    let pz: f64 = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let px = ((k + x0.powi(4)) * pz * pz).sqrt() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    PhasePoint::new(
        SpacetimePoint::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), x0, 0.0),
        Covector::new(rng.random_range(-1.0..1.0), pz, px, rng.random_range(-1.0..1.0)),
    )
}

#[test]
fn straight_line_when_pz_vanishes() {
    let v = family();
    let s0 = PhasePoint::new(SpacetimePoint::new(0.0, 0.0, 0.5, 0.0), Covector::new(0.3, 0.0, 0.7, 0.1));
    let (t, d) = integrate(&v, &s0, &GeodesicOptions::new(50.0, 1e-10)).unwrap();
    for s in &t.samples {
        assert!((s.point.x - (0.5 + 0.7 * s.lambda)).abs() < 1e-11 * (1.0 + s.lambda.abs()));
    }
    assert!(d.worst() < 1e-13);
    assert!(d.reached_lambda_max);
}

#[test]
fn confined_example_trajectory() {
    let v = family();
    let s0 = PhasePoint::new(SpacetimePoint::origin(), Covector::new(0.0, 1.0, 1.0, 0.0));
    let bar = predict_barrier(&v, &s0).unwrap();
    assert!((bar.d - 3.1434).abs() < 1e-4);
    let (t, d) = integrate(&v, &s0, &GeodesicOptions::new(1000.0, 1e-10)).unwrap();
    assert!(d.reached_lambda_max && d.all_finite);
    assert!(d.max_abs_x <= bar.d, "{} > {}", d.max_abs_x, bar.d);
    assert!(d.worst() < 1e-8, "drift {:?}", d.max_drift);
    // turned around inside the first spike
    assert!(d.max_abs_x > 3.1213);
    assert!(t.samples.iter().all(|s| s.velocity(&v).z.abs() <= bar.zdot_bound));
}

#[test]
fn random_trajectories_stay_confined() {
    let v = family();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..12 {
        let k = rng.random_range(0.1..20.0);
        let s0 = initial(&mut rng, k);
        let c = conserved(&v, &s0);
        assert!((c.c / (s0.momentum.z * s0.momentum.z) - k).abs() < 1e-9 * (1.0 + k));
        let bar = predict_barrier(&v, &s0).unwrap();
        let (t, d) = integrate(&v, &s0, &GeodesicOptions::new(300.0, 1e-10)).unwrap();
        assert!(d.reached_lambda_max);
        assert!(d.max_abs_x <= bar.d, "k={k}: {} > {}", d.max_abs_x, bar.d);
        assert!(d.worst() < 1e-6, "k={k} drift {:?}", d.max_drift);
        assert!(d.max_abs_zdot <= bar.zdot_bound);
        let _ = t;
    }
}

#[test]
fn time_reversal_returns_to_start() {
    let v = family();
    let s0 = PhasePoint::new(SpacetimePoint::origin(), Covector::new(0.0, 1.0, 1.0, 0.0));
    let e = reversal_error(&v, &s0, 1000.0, 1e-10).unwrap();
    assert!(e < 1e-6, "{e}");
}

#[test]
fn christoffel_formulation_agrees() {
    let v = family();
    let s0 = PhasePoint::new(SpacetimePoint::origin(), Covector::new(0.0, 1.0, 1.0, 0.0));
    let dev = christoffel_crosscheck(&v, &s0, 1000.0, 1e-10).unwrap();
    assert!(dev < 1e-6, "{dev}");
    let free = PhasePoint::new(SpacetimePoint::origin(), Covector::new(0.2, 0.0, 1.0, 0.5));
    assert!(christoffel_crosscheck(&v, &free, 20.0, 1e-10).unwrap() < 1e-12);
    // null geodesic: p_η chosen so that H(0) = 0
    let px: f64 = 1.2;
    let null = PhasePoint::new(SpacetimePoint::origin(), Covector::new(-0.5 * px * px, 1.0, px, 0.0));
    assert!(kgsa_core::geodesic::hamiltonian(&v, &null).abs() < 1e-15);
    let (_, d) = integrate(&v, &null, &GeodesicOptions::new(200.0, 1e-10)).unwrap();
    assert!(d.max_drift[4] < 1e-9);
    assert!(christoffel_h_drift(&v, &null, 200.0, 1e-10).unwrap() < 1e-9);
}

#[test]
fn causal_geodesics_respect_order_and_diamonds() {
    let v = family();
    let g = Metric::new(&v);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let x0: f64 = rng.random_range(-2.0..2.0);
        let pz: f64 = rng.random_range(0.3..1.5);
        let px: f64 = rng.random_range(-2.0..2.0);
        let py: f64 = rng.random_range(-1.0..1.0);
        let m2: f64 = rng.random_range(0.0..1.0);
        let vx = v.eval(x0, 0);
        // H = −m²/2
        let peta = -(0.5 * vx * pz * pz + 0.5 * px * px + 0.5 * py * py + 0.5 * m2) / pz;
        let s0 = PhasePoint::new(SpacetimePoint::new(0.0, 0.0, x0, 0.0), Covector::new(peta, pz, px, py));
        let opts = GeodesicOptions { both_directions: false, ..GeodesicOptions::new(5.0, 1e-10) };
        let (t, _) = integrate(&v, &s0, &opts).unwrap();
        let samples = t.with_velocities(&v);
        assert!(check_causal_order(&g, &samples).unwrap().pass);
        let p = samples[0].0;
        let q = samples.last().unwrap().0;
        match diamond_bounds(&p, &q) {
            Diamond::Bounded(b) => {
                for (r, _) in &samples {
                    assert!(b.contains(&p, r, 0.0), "{r:?} outside {b:?}");
                }
            }
            other => panic!("{other:?}"),
        }
    }
}
