use kgsa_core::geometry::{
    causal_future_from_unit, cone_inequalities, diamond_bounds, minkowski_comparison, CausalKind, Diamond, Metric,
    Orientation, SpacetimePoint, TangentVector,
};
use kgsa_core::potential::{spike_center, SpikeFamily};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn family() -> SpikeFamily {
    let mut v = SpikeFamily::standard();
    v.prepare(20.0).unwrap();
    v
}

fn vector() -> impl Strategy<Value = TangentVector> {
    (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0).prop_map(|(a, b, c, d)| TangentVector::new(a, b, c, d))
}

#[test]
fn cone_inequalities_hold_on_sampled_causal_vectors() {
    let v = family();
    let g = Metric::new(&v);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20_000 {
        let n = rng.random_range(1..=12usize);
        let edge = spike_center(n);
        let p = SpacetimePoint::new(0.0, 0.0, rng.random_range(-edge..=edge), 0.0);
        let u = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        let x = causal_future_from_unit(&g, &p, u);
        assert!(g.classify(&p, &x).is_causal_future(), "{x:?} at {p:?}");
        let r = cone_inequalities(&g, &p, &x, n).unwrap();
        assert!(r.pass, "{x:?} at {p:?}, n={n}: {:?}", r.slack);
    }
}

#[test]
fn spikes_below_the_barrier_stay_below_n() {
    // V ≤ N on |x| ≤ 𝔵_N, which is what makes g dominate the flat comparison form
    let v = family();
    for n in 1..=10usize {
        let edge = spike_center(n);
        for spec in v.specs().iter().take(n - 1) {
            assert!(spec.peak_excess() <= n as f64 + 1e-9);
        }
        for k in 0..=2000 {
            let x = edge * k as f64 / 2000.0;
            assert!(v.eval(x, 0) <= n as f64);
        }
    }
}

#[test]
fn diamonds_scale_with_separation() {
    let o = SpacetimePoint::origin();
    let mut last = 0;
    for d in [0.5, 1.0, 2.0, 3.0, 5.0] {
        match diamond_bounds(&o, &SpacetimePoint::new(d, 0.0, 0.0, 0.0)) {
            Diamond::Bounded(b) => {
                assert!(b.n >= last);
                assert!(((b.n - 1) as f64).sqrt() < d || b.n == 1);
                assert!((b.n as f64).sqrt() >= d);
                last = b.n;
            }
            other => panic!("{other:?}"),
        }
    }
}

proptest! {
    #[test]
    fn metric_is_symmetric_and_bilinear(x in -12.0f64..12.0, a in vector(), b in vector(), c in vector(), s in -3.0f64..3.0) {
        let v = family();
        let g = Metric::new(&v);
        let p = SpacetimePoint::new(0.0, 0.0, x, 0.0);
        let sum = TangentVector::new(a.eta + s * c.eta, a.z + s * c.z, a.x + s * c.x, a.y + s * c.y);
        let lhs = g.eval(&p, &sum, &b);
        let rhs = g.eval(&p, &a, &b) + s * g.eval(&p, &c, &b);
        let scale = 1.0 + lhs.abs() + rhs.abs() + v.eval(x, 0).abs() * 100.0;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        // symmetric up to the rounding of −V·a^η·b^η
        prop_assert!((g.eval(&p, &a, &b) - g.eval(&p, &b, &a)).abs() <= 1e-14 * scale);
        prop_assert_eq!(g.determinant(&p).abs(), 1.0);
    }

    #[test]
    fn negation_flips_orientation(x in -12.0f64..12.0, a in vector()) {
        let v = family();
        let g = Metric::new(&v);
        let p = SpacetimePoint::new(0.0, 0.0, x, 0.0);
        let c = g.classify(&p, &a);
        let d = g.classify(&p, &a.neg());
        prop_assert_eq!(c.kind, d.kind);
        match c.orientation {
            Orientation::Future => prop_assert_eq!(d.orientation, Orientation::Past),
            Orientation::Past => prop_assert_eq!(d.orientation, Orientation::Future),
            Orientation::NotApplicable => prop_assert_eq!(d.orientation, Orientation::NotApplicable),
        }
    }

    #[test]
    fn metric_dominates_flat_comparison(n in 1usize..12, t in -1.0f64..1.0, a in vector()) {
        let v = family();
        let g = Metric::new(&v);
        let p = SpacetimePoint::new(0.0, 0.0, t * spike_center(n), 0.0);
        let gx = g.eval(&p, &a, &a);
        let hx = minkowski_comparison(&a, n);
        let scale = 1.0 + gx.abs() + hx.abs();
        prop_assert!(gx >= hx - 1e-12 * scale, "g={gx} h={hx}");
        // g-causal implies h-causal
        if matches!(g.classify(&p, &a).kind, CausalKind::Timelike | CausalKind::Null) {
            prop_assert!(hx <= 1e-12 * scale);
        }
    }
}
