use kgsa_core::potential::SpikeFamily;
use kgsa_core::reduced::{direct_solve, DirectOptions, ReducedParams};
use kgsa_core::weyl::{
    adjoint_pairing_check, classify_endpoint, deficiency_indices, deficiency_psi, Classification, Endpoint,
    LadderTrend, PsiOptions, TestBump, WeylError, WeylOptions,
};
use num_complex::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn family(x: f64) -> SpikeFamily {
    let mut v = SpikeFamily::standard();
    v.prepare(x).unwrap();
    v
}

fn one() -> ReducedParams {
    ReducedParams::new(1.0, 1.0, 1.0)
}

#[test]
fn spiked_potential_is_limit_circle_at_both_ends() {
    let v = family(50.0);
    let o = WeylOptions::new(40.0, 1e-10);
    let plus = classify_endpoint(&v, &one(), I, Endpoint::PlusInfinity, &o).unwrap();
    let minus = classify_endpoint(&v, &one(), I, Endpoint::MinusInfinity, &o).unwrap();
    assert_eq!(plus.classification, Classification::LimitCircle);
    assert_eq!(minus.classification, Classification::LimitCircle);
    // W even: the −∞ ladders repeat the +∞ ones
    for (a, b) in plus.theta.cumulative.iter().zip(&minus.theta.cumulative) {
        assert!((a - b).abs() <= 1e-12 * a);
    }
    // tails fall like 1/L
    for r in plus.theta.ratios.iter().chain(&plus.phi.ratios) {
        assert!((r - 0.5).abs() < 0.05, "{r}");
    }
    assert!(plus.lg_deviation.unwrap() < 1e-6);
    assert!(plus.wronskian_drift < 1e-6);
    let d = deficiency_indices(&v, &one(), &o).unwrap();
    assert_eq!((d.n_plus, d.n_minus), (2, 2));
}

#[test]
fn constant_potential_is_limit_point_with_exact_weyl_function() {
    let v = family(50.0);
    let o = WeylOptions::new(40.0, 1e-10);
    // p_y ≥ 1.8 drives the Weyl-solution tail to the rounding floor by L = 20
    for (py, pe) in [(1.0, 1.0), (0.0, 0.0), (1.5, -0.3), (2.0, 1.0), (0.5, 2.0), (2.5, 1.0)] {
        let rp = ReducedParams::new(py, 0.0, pe);
        let r = classify_endpoint(&v, &rp, I, Endpoint::PlusInfinity, &o).unwrap();
        assert_eq!(r.classification, Classification::LimitPoint, "{rp:?}");
        // e^{−κx} with κ² = W − λ is the square-integrable solution: m∞ = −κ
        let kappa = (Complex64::new(py * py, 0.0) - I).sqrt();
        let m = *r.disk_centers.last().unwrap();
        assert!((m + kappa).norm() < 1e-8, "{m} vs {}", -kappa);
        let weyl_norm = *r.weyl.cumulative.last().unwrap();
        assert!((weyl_norm - 0.5 / kappa.re).abs() < 1e-8);
        assert_eq!(r.weyl.trend, LadderTrend::Converges);
        assert_eq!(r.theta.trend, LadderTrend::Diverges);
        assert_eq!(r.phi.trend, LadderTrend::Diverges);
        for w in r.disk_radii.windows(2) {
            assert!(w[1] < 1e-3 * w[0]);
        }
        assert!(r.lg_deviation.is_none());
        let d = deficiency_indices(&v, &rp, &o).unwrap();
        assert_eq!((d.n_plus, d.n_minus), (0, 0));
    }
}

#[test]
fn quartic_base_alone_is_limit_circle() {
    let v = SpikeFamily::disabled();
    let o = WeylOptions::new(40.0, 1e-10);
    let r = classify_endpoint(&v, &one(), I, Endpoint::PlusInfinity, &o).unwrap();
    assert_eq!(r.classification, Classification::LimitCircle);
    let d = deficiency_indices(&v, &one(), &o).unwrap();
    assert_eq!((d.n_plus, d.n_minus), (2, 2));
}

#[test]
fn conjugate_parameter_gives_conjugate_report() {
    let v = family(50.0);
    let o = WeylOptions::new(40.0, 1e-10);
    let plus = classify_endpoint(&v, &one(), I, Endpoint::PlusInfinity, &o).unwrap();
    let direct = classify_endpoint(&v, &one(), -I, Endpoint::PlusInfinity, &o).unwrap();
    let mut conj = plus.conjugate();
    // the LG frame phase is not conjugated with λ, so only that witness differs
    conj.lg_deviation = direct.lg_deviation;
    assert_eq!(conj, direct);
    let ic = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    let stops = [1.0, 3.13, 10.0, 25.0];
    let a = direct_solve(&v, &one(), I, (0.0, 25.0), ic, &DirectOptions::new(1e-10), &stops).unwrap();
    let b = direct_solve(&v, &one(), -I, (0.0, 25.0), ic, &DirectOptions::new(1e-10), &stops).unwrap();
    assert_eq!(a.steps.len(), b.steps.len());
    for (p, q) in a.steps.iter().zip(&b.steps) {
        assert_eq!(p.x, q.x);
        assert_eq!(p.u.conj(), q.u);
        assert_eq!(p.du.conj(), q.du);
    }
}

#[test]
fn verdicts_are_stable_under_refinement() {
    let v = family(90.0);
    for rp in [one(), ReducedParams::new(1.0, 0.0, 1.0), ReducedParams::new(2.0, 1.5, 1.0)] {
        let coarse = classify_endpoint(&v, &rp, I, Endpoint::PlusInfinity, &WeylOptions::new(40.0, 1e-10)).unwrap();
        let fine = classify_endpoint(&v, &rp, I, Endpoint::PlusInfinity, &WeylOptions::new(80.0, 1e-11)).unwrap();
        assert_eq!(coarse.classification, fine.classification, "{rp:?}");
        assert_ne!(coarse.classification, Classification::Inconclusive);
    }
}

#[test]
fn disk_radii_shrink_to_a_positive_limit_circle_radius() {
    let v = family(50.0);
    let r = classify_endpoint(&v, &one(), I, Endpoint::PlusInfinity, &WeylOptions::new(40.0, 1e-10)).unwrap();
    assert!(r.disk_radii.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.r_inf() > 10.0 * r.final_decrement(), "{} {}", r.r_inf(), r.final_decrement());
    // center stays inside the previous disks
    for k in 1..r.disk_centers.len() {
        for j in 0..k {
            assert!((r.disk_centers[k] - r.disk_centers[j]).norm() <= r.disk_radii[j] + 1e-12);
        }
    }
}

#[test]
fn classification_preconditions() {
    let v = family(50.0);
    let o = WeylOptions::new(40.0, 1e-10);
    assert!(matches!(
        classify_endpoint(&v, &one(), Complex64::new(2.0, 0.0), Endpoint::PlusInfinity, &o),
        Err(WeylError::RealLambda(_))
    ));
    assert!(matches!(
        classify_endpoint(&v, &one(), I, Endpoint::PlusInfinity, &WeylOptions::new(20.0, 1e-10)),
        Err(WeylError::ShortInterval(_))
    ));
}

#[test]
fn deficiency_solution_properties() {
    let v = family(130.0);
    let p60 = deficiency_psi(&v, &one(), 60.0, &PsiOptions::new(1e-10)).unwrap();
    let origin = p60.samples.iter().find(|s| s.x == 0.0).unwrap();
    assert_eq!(origin.u, Complex64::new(1.0, 0.0));
    assert_eq!(origin.du, Complex64::new(0.0, 0.0));
    assert!(p60.samples.windows(2).all(|w| w[0].x < w[1].x));
    assert_eq!(p60.samples.first().unwrap().x, -60.0);
    assert_eq!(p60.samples.last().unwrap().x, 60.0);
    assert!(p60.parity_defect.unwrap() < 1e-8);
    let c = p60.collocation.unwrap();
    assert!(c.points >= 100);
    assert!(c.max_relative < 1e-6, "{c:?}");
    // normalized by max|ψ| the residual carries the |W| ~ x⁴ growth of ψ″
    assert!(c.max_absolute < 1e-6, "{c:?}");
    let p120 = deficiency_psi(&v, &one(), 120.0, &PsiOptions::norm_only(1e-10)).unwrap();
    let change = (p120.norm() - p60.norm()) / p60.norm();
    assert!(change > 0.0 && change < 0.01, "{change}");
    // the envelope estimate bounds the squared-norm gain and scales like 1/L
    assert!(p120.norm().powi(2) - p60.norm().powi(2) <= p60.tail_bound);
    assert!((p120.tail_bound / p60.tail_bound - 0.5).abs() < 0.05);
    // mirrored and two-sided norms agree
    let mirrored = deficiency_psi(&v, &one(), 60.0, &PsiOptions::norm_only(1e-10)).unwrap();
    assert!((mirrored.norm() - p60.norm()).abs() < 1e-12 * p60.norm());
    assert!(matches!(
        deficiency_psi(&v, &ReducedParams::new(1.0, 0.0, 1.0), 60.0, &PsiOptions::new(1e-10)),
        Err(WeylError::ZeroPz)
    ));
}

#[test]
fn adjoint_pairing_identity_holds() {
    let v = family(70.0);
    let psi = deficiency_psi(&v, &one(), 60.0, &PsiOptions::norm_only(1e-10)).unwrap();
    let spike1 = v.spike(1).unwrap();
    let bumps = [
        TestBump::new(-1.0, 1.0),
        TestBump::new(0.5, 2.5),
        TestBump::new(spike1.center_left - 0.2, spike1.right_edge() + 0.3),
        TestBump::new(-3.4, -2.9),
        TestBump::new(5.5, 7.0),
        TestBump::new(-12.0, -10.0),
    ];
    let res = adjoint_pairing_check(&v, &one(), &psi, &bumps).unwrap();
    assert!(!res[0].straddles_spike && res[2].straddles_spike);
    assert!(res[0].residual < 1e-8);
    for r in &res {
        let bound = if r.straddles_spike { 1e-6 } else { 1e-8 };
        assert!(r.residual < bound, "{r:?}");
    }
    let zero = adjoint_pairing_check(&v, &one(), &psi, &[TestBump::zero(-1.0, 1.0)]).unwrap();
    assert_eq!(zero[0].residual, 0.0);
    assert!(matches!(
        adjoint_pairing_check(&v, &one(), &psi, &[TestBump::new(50.0, 60.0)]),
        Err(WeylError::SupportViolation { .. })
    ));
}

#[test]
fn adjoint_pairing_detects_wrong_potential() {
    let v = family(70.0);
    let psi = deficiency_psi(&v, &one(), 60.0, &PsiOptions::norm_only(1e-10)).unwrap();
    // the same ψ checked against a shifted W
    let shifted = ReducedParams::new(1.1, 1.0, 1.0);
    let res = adjoint_pairing_check(&v, &shifted, &psi, &[TestBump::new(-1.0, 1.0)]).unwrap();
    assert!(res[0].residual > 1e-4, "{:?}", res[0]);
}
