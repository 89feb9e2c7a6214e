use kgsa_core::potential::{
    bump, calibrate_spike, spike_center, sup_excess_golden, SpikeFamily, WidthRule,
};
use proptest::prelude::*;

fn family(n: usize) -> SpikeFamily {
    let mut f = SpikeFamily::standard();
    f.prepare_count(n).unwrap();
    f
}

#[test]
fn center_and_width_examples() {
    assert_eq!(spike_center(0), 2.0);
    assert!((spike_center(1) - (1.0 + 1.5 * 2f64.sqrt())).abs() < 1e-15);
    assert_eq!(spike_center(3), 5.0);
    let r = WidthRule::default();
    assert!((r.width(1) - 0.25 * 2f64.powf(-3.5)).abs() < 1e-17);
    // ¼·4^(−3.5) = 1/512
    assert_eq!(r.width(3), 1.0 / 512.0);
}

#[test]
fn calibrated_sup_matches_golden_section_oracle() {
    let f = family(200);
    for s in f.specs() {
        let oracle = sup_excess_golden(s) - kgsa_core::dd::Dd::from_f64((s.n + 1) as f64);
        assert!(oracle.to_f64().abs() <= 1e-8, "n={} oracle residual {:e}", s.n, oracle.to_f64());
        assert!(s.sup_residual.abs() <= 1e-10);
        assert!(s.max_value() >= (s.n + 1) as f64);
        assert!(s.peak_t > 0.0 && s.peak_t < 1.0);
        assert!(s.right_edge() < spike_center(s.n + 1));
    }
}

#[test]
fn initial_guess_is_close_for_first_spike() {
    let s = calibrate_spike(1, &WidthRule::default(), 1e-10).unwrap();
    let guess = 2.0 + (spike_center(1) + 0.5 * s.width).powi(4);
    assert!((s.max_value() - guess).abs() / guess < 0.01);
}

#[test]
fn maximum_of_v_on_first_support_is_two() {
    let f = family(3);
    let s = f.specs()[0];
    let mut best = f64::NEG_INFINITY;
    for k in 0..=20000 {
        let x = s.center_left + s.width * k as f64 / 20000.0;
        best = best.max(f.eval(x, 0));
    }
    assert!((best - 2.0).abs() < 1e-6, "{best}");
}

#[test]
fn potential_is_pure_quartic_inside_first_edge() {
    let f = family(5);
    assert_eq!(f.eval(0.0, 0), 0.0);
    assert_eq!(f.eval(1.0, 0), -1.0);
    for k in 0..1000 {
        let x = -3.12 + 6.24 * k as f64 / 999.0;
        assert_eq!(f.eval(x, 0), -(x * x) * (x * x));
    }
}

#[test]
fn active_spike_queries() {
    let f = family(5);
    assert!(f.active_spikes(-1.0, 1.0).is_empty());
    let a = f.active_spikes(3.0, 4.0);
    assert_eq!(a.len(), 1);
    assert_eq!((a[0].0, a[0].1.n), (1.0, 1));
    let b = f.active_spikes(-4.0, 4.0);
    assert_eq!(b.len(), 2);
    assert_eq!((b[0].0, b[0].1.n), (-1.0, 1));
    assert_eq!((b[1].0, b[1].1.n), (1.0, 1));
}

#[test]
fn summability_examples() {
    let f = SpikeFamily::standard();
    let r1 = f.check_summability(1);
    assert!((r1.partial_sums[0] - 0.0220970869120796).abs() < 1e-12);
    assert!(r1.pass);
    let r = f.check_summability(10_000);
    assert!(r.pass);
    let last = *r.partial_sums.last().unwrap();
    assert!(last < 0.66);
    assert!(r.partial_sums.windows(2).all(|w| w[1] >= w[0]));
    // integral comparison: Σ_{n≥1} ¼ n²(n+1)^{-3.5} < ¼ ∫_1^∞ (t)^{-1.5} dt + ¼·2^{-3.5} = 0.5 + 0.0221
    assert!(last < 0.5 + 0.25 * 2f64.powf(-3.5));
    assert!((r.bound - 0.25 * 2.612_375_348_685_488).abs() < 1e-12);
}

#[test]
fn lazy_extension_matches_prepared_table() {
    let small = family(2);
    let big = family(40);
    for k in 0..2000 {
        let x = 3.0 + 17.0 * k as f64 / 1999.0;
        assert_eq!(small.eval(x, 0), big.eval(x, 0));
        assert_eq!(small.eval(-x, 1), big.eval(-x, 1));
    }
}

#[test]
fn disabled_family_is_pure_quartic() {
    let f = SpikeFamily::disabled();
    let s = f.specs().len();
    assert_eq!(s, 0);
    let x = spike_center(1) + 0.01;
    assert_eq!(f.eval(x, 0), -x.powi(4));
    assert!(f.active_spikes(-10.0, 10.0).is_empty());
}

proptest! {
    #[test]
    fn evenness(x in -40.0f64..40.0) {
        let f = SpikeFamily::standard();
        prop_assert_eq!(f.eval(x, 0), f.eval(-x, 0));
        prop_assert_eq!(f.eval(x, 2), f.eval(-x, 2));
        prop_assert_eq!(f.eval(x, 1), -f.eval(-x, 1));
    }

    #[test]
    fn derivative_matches_central_difference_in_spikes(n in 1usize..30, t in 0.02f64..0.98) {
        let f = SpikeFamily::standard();
        let s = f.spike(n).unwrap();
        let x = s.center_left + t * s.width;
        let h = 1e-5 * s.width;
        let (xp, xm) = (x + h, x - h);
        let fd = (f.eval(xp, 0) - f.eval(xm, 0)) / (xp - xm);
        let d = f.eval(x, 1);
        // O(h²) truncation plus cancellation in the difference of large values
        let scale = s.max_value() / s.width;
        prop_assert!((fd - d).abs() <= 1e-5 * scale, "fd {} vs {}", fd, d);
        let fd2 = (f.eval(xp, 1) - f.eval(xm, 1)) / (xp - xm);
        prop_assert!((fd2 - f.eval(x, 2)).abs() <= 1e-5 * scale / s.width);
    }

    #[test]
    fn bump_is_positive_inside(t in 0.0f64..1.0) {
        let b = bump(t, 0);
        prop_assert!(b >= 0.0 && b <= 1.0);
        prop_assert!(bump(t, 1).is_finite() && bump(t, 2).is_finite());
    }
}

#[test]
fn derivative_matches_central_difference_at_edges() {
    let f = family(10);
    for s in f.specs() {
        let scale = s.max_value() / s.width;
        for x in [s.center_left, s.right_edge(), s.center_left - 1e-3, s.right_edge() + 1e-3] {
            let h = 1e-5 * s.width;
            let (xp, xm) = (x + h, x - h);
            let fd = (f.eval(xp, 0) - f.eval(xm, 0)) / (xp - xm);
            let d = f.eval(x, 1);
            assert!((fd - d).abs() < 1e-6 * scale + 1e-6 * d.abs(), "n={} x={x}", s.n);
        }
    }
}
