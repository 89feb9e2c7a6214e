//! The acceptance criteria. Every check is deterministic given the config: random draws come
//! from one seeded stream consumed sequentially, and parallel maps preserve input order.

use kgsa_core::geodesic::{integrate, predict_barrier, GeodesicOptions, PhasePoint};
use kgsa_core::geometry::{
    causal_future_from_unit, check_causal_order, cone_inequalities, diamond_bounds, CausalClass, CausalKind,
    Covector, Diamond, Metric, Orientation, SpacetimePoint, TangentVector,
};
use kgsa_core::normmap::{find_threshold, grid_norms, max_neighbor_jump, GridSpec, NormGrid, NormStatus};
use kgsa_core::potential::{spike_center, SpikeFamily};
use kgsa_core::reduced::{
    cauchy_increment, direct_pair, direct_solve, kernel_norm_integral, l1_condition_check, lg_solve, norm2,
    DirectOptions, ReducedParams,
};
use kgsa_core::weyl::{
    adjoint_pairing_check, classify_endpoint, deficiency_from, deficiency_psi, Classification, DeficiencyReport,
    Endpoint, PsiOptions, TestBump, WeylOptions, WeylReport,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::{num, opt_num, Artifacts, Csv};
use crate::CliError;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Spike admissibility bounds.
pub const SUP_RESIDUAL_TOL: f64 = 1e-8;
pub const SUMMABILITY_LIMIT: f64 = 0.66;
/// Relative conserved-quantity drift allowed along the completeness batch.
pub const DRIFT_TOL: f64 = 1e-6;
/// LG machinery bounds.
pub const LG_DEVIATION_TOL: f64 = 1e-5;
pub const WRONSKIAN_TOL: f64 = 1e-6;
pub const CAUCHY_FACTOR: f64 = 2.0;
/// Deficiency solution bounds.
pub const NORM_CHANGE_TOL: f64 = 0.01;
pub const COLLOCATION_TOL: f64 = 1e-6;
pub const PAIRING_TOL: f64 = 1e-6;
/// p_z = 0 controls at these (p_y, p_η).
pub const LIMIT_POINT_CONTROLS: [(f64, f64); 5] = [(1.0, 1.0), (0.0, 0.0), (1.5, -0.3), (2.0, 1.0), (0.5, 2.0)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CriterionOutcome {
    fn new(id: u32, name: &str, pass: bool, detail: String) -> Self {
        CriterionOutcome {
            id,
            name: name.to_string(),
            pass,
            detail,
        }
    }

    /// `PASS 3 causal-structure: ...`
    pub fn line(&self) -> String {
        format!("{} {} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

/// Shared state of a run: the config, its hash, the prepared potential and the one RNG stream.
pub struct Context {
    pub cfg: RunConfig,
    pub hash: String,
    pub v: SpikeFamily,
    pub rng: ChaCha8Rng,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self, CliError> {
        let mut v = SpikeFamily::new(cfg.potential.rule(), cfg.potential.calibration_tol)?;
        v.prepare_count(cfg.potential.n_max + 1)?;
        v.prepare(cfg.x_extent())?;
        Ok(Context {
            hash: cfg.hash(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            v,
        })
    }

    pub fn weyl_options(&self) -> WeylOptions {
        WeylOptions::new(self.cfg.weyl.l_max, self.cfg.weyl.tol)
    }

    pub fn config_rp(&self) -> ReducedParams {
        ReducedParams::new(self.cfg.weyl.p_y, self.cfg.weyl.p_z, self.cfg.weyl.p_eta)
    }

    fn random_rp(&mut self) -> ReducedParams {
        let (lo, hi) = (self.cfg.normmap.lo, self.cfg.normmap.hi);
        ReducedParams::new(
            self.rng.random_range(lo..hi),
            self.rng.random_range(lo..hi),
            self.rng.random_range(lo..hi),
        )
    }
}

/// Criterion 1: spikes 1..=n_max have disjoint supports, εₙ < ½, calibrated sup residuals
/// within [`SUP_RESIDUAL_TOL`], and Σεₙn² partial sums below [`SUMMABILITY_LIMIT`].
pub fn spike_admissibility(ctx: &Context, arts: &mut Artifacts) -> Result<CriterionOutcome, CliError> {
    let n_max = ctx.cfg.potential.n_max;
    let specs = (1..=n_max + 1).map(|n| ctx.v.spike(n)).collect::<Result<Vec<_>, _>>()?;
    let overlaps = specs.windows(2).filter(|w| w[0].right_edge() >= w[1].center_left).count();
    let certified = &specs[..n_max];
    let max_width = certified.iter().map(|s| s.width).fold(0.0, f64::max);
    let max_residual = certified.iter().map(|s| s.sup_residual.abs()).fold(0.0, f64::max);
    let summ = ctx.v.check_summability(n_max);
    let max_sum = summ.partial_sums.iter().copied().fold(0.0, f64::max);
    let monotone = summ.partial_sums.windows(2).all(|w| w[1] >= w[0]);
    let pass = overlaps == 0 && max_width < 0.5 && max_residual <= SUP_RESIDUAL_TOL && max_sum <= SUMMABILITY_LIMIT && monotone;
    let mut table = crate::output::header_line(&ctx.hash).into_bytes();
    ctx.v.write_spike_table(n_max, &mut table)?;
    arts.add("spike-table.csv", table);
    Ok(CriterionOutcome::new(
        1,
        "spike-admissibility",
        pass,
        format!(
            "n<={n_max}: overlaps {overlaps}, max eps {max_width:.4e}, max sup residual {max_residual:.3e} (<= {SUP_RESIDUAL_TOL:e}), max partial sum {max_sum:.6} (<= {SUMMABILITY_LIMIT}, analytic bound {:.6})",
            summ.bound
        ),
    ))
}

/// Initial data at x₀ ∈ [−x0_max, x0_max] with C/p_z² = k and p_z of either sign.
fn batch_initial(rng: &mut ChaCha8Rng, x0_max: f64, k: f64) -> PhasePoint {
    let x0: f64 = rng.random_range(-x0_max..x0_max);
    let pz: f64 = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let px = ((k + x0.powi(4)) * pz * pz).sqrt() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    PhasePoint::new(
        SpacetimePoint::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), x0, 0.0),
        Covector::new(rng.random_range(-1.0..1.0), pz, px, rng.random_range(-1.0..1.0)),
    )
}

pub const BATCH_COLUMNS: [&str; 20] = [
    "index", "ratio", "x0", "p_eta", "p_z", "p_x", "p_y", "D", "E", "zdot_bound", "max_abs_x", "max_abs_zdot",
    "drift_p_eta", "drift_p_z", "drift_p_y", "drift_C", "drift_H", "reached", "finite", "steps",
];

/// Criterion 2: the random batch reaches |λ| = λ_max in both directions with bounded drift,
/// stays within the predicted barrier D, and obeys |ż| ≤ |p_η| + E|p_z| at every step.
pub fn geodesic_completeness(ctx: &mut Context, arts: &mut Artifacts) -> Result<CriterionOutcome, CliError> {
    let g = ctx.cfg.geodesic.clone();
    let ics: Vec<(f64, PhasePoint)> = (0..g.batch)
        .map(|_| {
            let k = ctx.rng.random_range(g.ratio_min..g.ratio_max);
            (k, batch_initial(&mut ctx.rng, g.x0_max, k))
        })
        .collect();
    let opts = GeodesicOptions {
        sample_stride: usize::MAX,
        ..GeodesicOptions::new(g.lambda_max, g.tol)
    };
    let v = &ctx.v;
    let runs = ics
        .par_iter()
        .map(|(k, s0)| {
            let bar = predict_barrier(v, s0)?;
            let (_, d) = integrate(v, s0, &opts)?;
            Ok((*k, *s0, bar, d))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut csv = Csv::new(&ctx.hash, &BATCH_COLUMNS);
    let mut failed = Vec::new();
    let mut worst = 0.0f64;
    let mut above_invariant = 0;
    let mut max_x_ratio = 0.0f64;
    for (i, (k, s0, bar, d)) in runs.iter().enumerate() {
        let m = s0.momentum;
        let ok = d.reached_lambda_max
            && d.all_finite
            && d.worst() < DRIFT_TOL
            && d.max_abs_x <= bar.d
            && d.max_abs_zdot <= bar.zdot_bound;
        if !ok {
            failed.push(i);
        }
        worst = worst.max(d.worst());
        if d.worst() >= 100.0 * g.tol {
            above_invariant += 1;
        }
        max_x_ratio = max_x_ratio.max(d.max_abs_x / bar.d);
        let mut row = vec![
            i.to_string(),
            num(*k),
            num(s0.point.x),
            num(m.eta),
            num(m.z),
            num(m.x),
            num(m.y),
            num(bar.d),
            num(bar.e),
            num(bar.zdot_bound),
            num(d.max_abs_x),
            num(d.max_abs_zdot),
        ];
        row.extend(d.max_drift.iter().map(|x| num(*x)));
        row.extend([d.reached_lambda_max.to_string(), d.all_finite.to_string(), d.steps.to_string()]);
        csv.row(&row);
    }
    arts.add("geodesic-batch.csv", csv.into_bytes());
    Ok(CriterionOutcome::new(
        2,
        "geodesic-completeness",
        failed.is_empty() && runs.len() == g.batch,
        format!(
            "{} trajectories to |lambda|={} at tol {:e}: failures {:?}, worst drift {worst:.3e} (< {DRIFT_TOL:e}; {above_invariant} above 100*tol), max |x|/D {max_x_ratio:.6}",
            runs.len(),
            g.lambda_max,
            g.tol,
            failed
        ),
    ))
}

/// Expected causal character of the coordinate basis vectors at a point where V has the given sign.
fn basis_expectations(vx: f64) -> [(TangentVector, CausalClass); 5] {
    let class = |kind, orientation| CausalClass { kind, orientation };
    let eta = if vx > 0.0 {
        class(CausalKind::Timelike, Orientation::Future)
    } else if vx == 0.0 {
        class(CausalKind::Null, Orientation::Future)
    } else {
        class(CausalKind::Spacelike, Orientation::NotApplicable)
    };
    [
        (TangentVector::new(0.0, -1.0, 0.0, 0.0), class(CausalKind::Null, Orientation::Future)),
        (TangentVector::new(0.0, 1.0, 0.0, 0.0), class(CausalKind::Null, Orientation::Past)),
        (TangentVector::new(1.0, 0.0, 0.0, 0.0), eta),
        (TangentVector::new(0.0, 0.0, 1.0, 0.0), class(CausalKind::Spacelike, Orientation::NotApplicable)),
        (TangentVector::new(0.0, 0.0, 0.0, 1.0), class(CausalKind::Spacelike, Orientation::NotApplicable)),
    ]
}

/// (checked, mismatches) for the basis catalog at points with V < 0, V = 0 and V > 0.
pub fn basis_catalog(v: &SpikeFamily) -> Result<(usize, usize), CliError> {
    let g = Metric::new(v);
    let s1 = v.spike(1)?;
    let mid = s1.center_left + 0.5 * s1.width;
    let mut checked = 0;
    let mut bad = 0;
    for x in [0.0, 0.7, -2.0, mid, -mid] {
        let p = SpacetimePoint::new(0.0, 0.0, x, 0.0);
        for (vec, want) in basis_expectations(v.eval(x, 0)) {
            checked += 1;
            if g.classify(&p, &vec) != want {
                bad += 1;
            }
        }
    }
    Ok((checked, bad))
}

/// One cone sample: the index n, the base point and the causal future vector.
pub fn cone_sample(v: &SpikeFamily, rng: &mut ChaCha8Rng, n_max: usize) -> (usize, SpacetimePoint, TangentVector) {
    let g = Metric::new(v);
    let n = rng.random_range(1..=n_max);
    let edge = spike_center(n);
    let p = SpacetimePoint::new(0.0, 0.0, rng.random_range(-edge..=edge), 0.0);
    let u = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
    (n, p, causal_future_from_unit(&g, &p, u))
}

/// A timelike future geodesic from a random point, integrated forward for a random affine length.
fn causal_pair(v: &SpikeFamily, rng: &mut ChaCha8Rng, lambda_max: f64) -> (PhasePoint, f64) {
    let x0: f64 = rng.random_range(-2.0..2.0);
    let pz: f64 = rng.random_range(0.3..1.5);
    let px: f64 = rng.random_range(-2.0..2.0);
    let py: f64 = rng.random_range(-1.0..1.0);
    let m2: f64 = rng.random_range(0.01..1.0);
    let p = SpacetimePoint::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), x0, rng.random_range(-1.0..1.0));
    let vx = v.eval(x0, 0);
    // H = −m²/2
    let peta = -(0.5 * vx * pz * pz + 0.5 * px * px + 0.5 * py * py + 0.5 * m2) / pz;
    let len = rng.random_range(0.5..lambda_max);
    (PhasePoint::new(p, Covector::new(peta, pz, px, py)), len)
}

/// Criterion 3: cone inequalities on sampled causal future vectors, the basis catalog, and
/// diamond bounds containing every sample of connecting causal geodesics.
pub fn causal_structure(ctx: &mut Context) -> Result<CriterionOutcome, CliError> {
    let v = &ctx.v;
    let g = Metric::new(v);
    let mut cone_fail = 0usize;
    let mut min_slack = f64::INFINITY;
    for _ in 0..ctx.cfg.cone.samples {
        let (n, p, x) = cone_sample(v, &mut ctx.rng, ctx.cfg.cone.n_max);
        match cone_inequalities(&g, &p, &x, n) {
            Ok(r) if r.pass => min_slack = min_slack.min(r.slack[0]),
            _ => cone_fail += 1,
        }
    }
    let (checked, catalog_bad) = basis_catalog(v)?;
    let pair_len = ctx.cfg.diamond.pair_lambda_max;
    let pairs: Vec<_> = (0..ctx.cfg.diamond.pairs)
        .map(|_| causal_pair(v, &mut ctx.rng, pair_len))
        .collect();
    let tol = ctx.cfg.geodesic.tol;
    let verdicts = pairs
        .par_iter()
        .map(|(s0, len)| {
            let opts = GeodesicOptions {
                both_directions: false,
                ..GeodesicOptions::new(*len, tol)
            };
            let (t, _) = integrate(v, s0, &opts)?;
            let samples = t.with_velocities(v);
            let order = check_causal_order(&g, &samples).map(|r| r.pass).unwrap_or(false);
            let p = samples[0].0;
            let q = samples.last().expect("nonempty trajectory").0;
            let inside = match diamond_bounds(&p, &q) {
                Diamond::Bounded(b) => samples.iter().all(|(r, _)| b.contains(&p, r, 0.0)),
                _ => false,
            };
            Ok((order, inside))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let order_fail = verdicts.iter().filter(|(o, _)| !o).count();
    let diamond_fail = verdicts.iter().filter(|(_, d)| !d).count();
    Ok(CriterionOutcome::new(
        3,
        "causal-structure",
        cone_fail == 0 && catalog_bad == 0 && order_fail == 0 && diamond_fail == 0,
        format!(
            "{} cone samples: {cone_fail} failures, min slack1 {min_slack:.3e}; basis catalog {checked} checks, {catalog_bad} mismatches; {} diamond pairs: {diamond_fail} escape, {order_fail} order violations",
            ctx.cfg.cone.samples,
            pairs.len()
        ),
    ))
}

/// Max over [2, 40] of |u_LG − u_direct| / (|u| + |u′|/S′) for u(0) = 1, u′(0) = 0, with both
/// Wronskian drifts.
pub fn lg_direct_deviation(
    v: &SpikeFamily,
    rp: &ReducedParams,
    lambda: Complex64,
    tol: f64,
) -> Result<(f64, f64, f64), CliError> {
    let xs: Vec<f64> = (0..=380).map(|i| 2.0 + 0.1 * i as f64).collect();
    let lg = lg_solve(v, rp, lambda, 40.0, tol, &xs)?;
    let ic = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    let opts = DirectOptions {
        tol,
        record_steps: false,
    };
    let d = direct_solve(v, rp, lambda, (0.0, 40.0), ic, &opts, &xs)?;
    let coef = lg.coefficients(ic.0, ic.1);
    let mut dev = 0.0f64;
    for (a, b) in lg.stops.iter().zip(&d.stops) {
        let (u, _) = lg.combine(a, coef);
        let scale = b.u.norm() + b.du.norm() / lg.frame.sp(a.x);
        dev = dev.max((u - b.u).norm() / scale);
    }
    let pair = direct_pair(v, rp, lambda, (0.0, 40.0), tol, &[])?;
    Ok((dev, lg.wronskian_drift, pair.wronskian_drift))
}

/// Largest ‖U(b) − U(a)‖ / (∫ₐᵇ‖K‖·max‖U‖) over the windows [10, 20], [20, 40], [40, 80].
pub fn cauchy_ratio(v: &SpikeFamily, rp: &ReducedParams, lambda: Complex64, tol: f64) -> Result<f64, CliError> {
    let lg = lg_solve(v, rp, lambda, 80.0, tol, &[10.0, 20.0, 40.0])?;
    let mut pts = lg.stops.clone();
    pts.push(lg.end);
    let mut worst = 0.0f64;
    for w in pts.windows(2) {
        let inc = cauchy_increment(&w[0], &w[1]);
        let bound = kernel_norm_integral(v, rp, lambda, w[0].x, w[1].x)?;
        let u_max = norm2(&w[0].u).max(norm2(&w[1].u));
        worst = worst.max(inc / (bound * u_max));
    }
    Ok(worst)
}

/// LG solves run one decade below the classification tolerance.
fn lg_tol(ctx: &Context) -> f64 {
    0.1 * ctx.cfg.weyl.tol
}

/// Criterion 4: LG reconstruction against direct integration at λ = ±i for random reduced
/// momenta, both Wronskians, and Cauchy increments of U within the kernel-norm bound.
pub fn lg_machinery(ctx: &mut Context, rps: &[ReducedParams]) -> Result<CriterionOutcome, CliError> {
    let tol = lg_tol(ctx);
    let v = &ctx.v;
    let cases: Vec<(ReducedParams, Complex64)> = rps.iter().flat_map(|rp| [(*rp, I), (*rp, -I)]).collect();
    let res = cases
        .par_iter()
        .map(|(rp, lambda)| {
            let (dev, w_lg, w_direct) = lg_direct_deviation(v, rp, *lambda, tol)?;
            let ratio = cauchy_ratio(v, rp, *lambda, tol)?;
            Ok((dev, w_lg.max(w_direct), ratio))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let max_dev = res.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_w = res.iter().map(|r| r.1).fold(0.0, f64::max);
    let max_ratio = res.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok(CriterionOutcome::new(
        4,
        "lg-machinery",
        max_dev < LG_DEVIATION_TOL && max_w < WRONSKIAN_TOL && max_ratio <= CAUCHY_FACTOR,
        format!(
            "{} cases at lambda=+-i: max LG/direct deviation {max_dev:.3e} (< {LG_DEVIATION_TOL:e}), max Wronskian drift {max_w:.3e} (< {WRONSKIAN_TOL:e}), max Cauchy increment / kernel bound {max_ratio:.3} (<= {CAUCHY_FACTOR})",
            cases.len()
        ),
    ))
}

/// Criterion 5: doubling increments of the condition 2 and 3 integrals from X = 80 to 160,
/// and convergence of the spike sum.
pub fn l1_conditions(ctx: &Context, rps: &[ReducedParams]) -> Result<CriterionOutcome, CliError> {
    let reports = rps
        .par_iter()
        .map(|rp| l1_condition_check(&ctx.v, rp))
        .collect::<Result<Vec<_>, _>>()?;
    let last = |r: &kgsa_core::reduced::L1Report, k: usize| r.doubling_deltas[k].last().copied().unwrap_or(f64::INFINITY);
    let d2 = reports.iter().map(|r| last(r, 0)).fold(0.0, f64::max);
    let d3 = reports.iter().map(|r| last(r, 1)).fold(0.0, f64::max);
    let sums_ok = reports.iter().all(|r| r.spike_sum.converges);
    let slope = reports.iter().map(|r| r.spike_sum.tail_slope).fold(f64::NEG_INFINITY, f64::max);
    let tol = kgsa_core::reduced::L1_INCREMENT_TOL;
    Ok(CriterionOutcome::new(
        5,
        "l1-conditions",
        reports.iter().all(|r| r.verdict),
        format!(
            "{} momenta: max doubling increment 80->160 condition 2 {d2:.3e}, condition 3 {d3:.3e} (< {tol:e}); spike sums converge {sums_ok} (worst tail slope {slope:.3})",
            reports.len()
        ),
    ))
}

/// Both endpoint reports at λ = i and the deficiency counts for one reduced momentum.
#[derive(Clone, Debug)]
pub struct EndpointPair {
    pub rp: ReducedParams,
    pub plus: WeylReport,
    pub minus: WeylReport,
    pub deficiency: (usize, usize),
}

impl EndpointPair {
    /// Common class of the two ends, or Inconclusive when they disagree.
    pub fn classification(&self) -> Classification {
        if self.plus.classification == self.minus.classification {
            self.plus.classification
        } else {
            Classification::Inconclusive
        }
    }
}

pub fn classify_both(v: &SpikeFamily, rp: &ReducedParams, opts: &WeylOptions) -> Result<(EndpointPair, DeficiencyReport), CliError> {
    let plus = classify_endpoint(v, rp, I, Endpoint::PlusInfinity, opts)?;
    let minus = classify_endpoint(v, rp, I, Endpoint::MinusInfinity, opts)?;
    let d = deficiency_from(plus.clone());
    Ok((
        EndpointPair {
            rp: *rp,
            plus,
            minus,
            deficiency: (d.n_plus, d.n_minus),
        },
        d,
    ))
}

pub const WEYL_COLUMNS: [&str; 10] = [
    "p_y", "p_z", "p_eta", "lambda_im", "classification", "n_plus", "n_minus", "r_inf", "psi_norm", "tail_bound",
];

/// λ = +i and λ = −i rows; the −i reports are the conjugates, with the same class and radii.
pub fn weyl_rows(csv: &mut Csv, e: &EndpointPair, psi: Option<(f64, f64)>) {
    for im in [1.0, -1.0] {
        csv.row(&[
            num(e.rp.p_y),
            num(e.rp.p_z),
            num(e.rp.p_eta),
            num(im),
            e.classification().as_str().to_string(),
            e.deficiency.0.to_string(),
            e.deficiency.1.to_string(),
            num(e.plus.r_inf()),
            opt_num(psi.map(|p| p.0)),
            opt_num(psi.map(|p| p.1)),
        ]);
    }
}

/// Criterion 6: limit circle at both ends with (2, 2) across the grid, limit point with (0, 0)
/// for the p_z = 0 controls, and limit circle for the quartic base without spikes.
pub fn classification_dichotomy(
    ctx: &Context,
    grid: &GridSpec,
) -> Result<(CriterionOutcome, Vec<EndpointPair>, Vec<EndpointPair>), CliError> {
    let opts = ctx.weyl_options();
    let v = &ctx.v;
    let on_grid = (0..grid.len())
        .into_par_iter()
        .map(|i| classify_both(v, &grid.params(i), &opts).map(|r| r.0))
        .collect::<Result<Vec<_>, CliError>>()?;
    let controls = LIMIT_POINT_CONTROLS
        .par_iter()
        .map(|&(py, pe)| classify_both(v, &ReducedParams::new(py, 0.0, pe), &opts).map(|r| r.0))
        .collect::<Result<Vec<_>, CliError>>()?;
    let base = classify_both(&SpikeFamily::disabled(), &ctx.config_rp(), &opts)?.0;
    let count = |xs: &[EndpointPair], c: Classification| xs.iter().filter(|e| e.classification() == c).count();
    let grid_lc = on_grid
        .iter()
        .filter(|e| e.classification() == Classification::LimitCircle && e.deficiency == (2, 2))
        .count();
    let inconclusive = count(&on_grid, Classification::Inconclusive) + count(&controls, Classification::Inconclusive);
    let controls_lp = controls
        .iter()
        .filter(|e| e.classification() == Classification::LimitPoint && e.deficiency == (0, 0))
        .count();
    let base_lc = base.classification() == Classification::LimitCircle;
    let max_lg = on_grid.iter().filter_map(|e| e.plus.lg_deviation).fold(0.0, f64::max);
    let pass = grid_lc == on_grid.len() && inconclusive == 0 && controls_lp == controls.len() && base_lc;
    let mut all = on_grid;
    all.extend(controls);
    Ok((
        CriterionOutcome::new(
            6,
            "classification-dichotomy",
            pass,
            format!(
                "grid {grid_lc}/{} LimitCircle both ends with (2,2); p_z=0 controls {controls_lp}/{} LimitPoint with (0,0); spikes-off base {}; Inconclusive {inconclusive}; max LG deviation {max_lg:.3e}",
                grid.len(),
                LIMIT_POINT_CONTROLS.len(),
                base.classification().as_str()
            ),
        ),
        all,
        vec![base],
    ))
}

/// Test bumps for the pairing identity: interior windows on both sides, one across spike 1,
/// and one far out between spikes.
pub fn pairing_bumps(v: &SpikeFamily) -> Result<Vec<TestBump>, CliError> {
    let s1 = v.spike(1)?;
    Ok(vec![
        TestBump::new(-1.0, 1.0),
        TestBump::new(0.5, 2.5),
        TestBump::new(s1.center_left - 0.2, s1.right_edge() + 0.3),
        TestBump::new(-3.4, -2.9),
        TestBump::new(5.5, 7.0),
        TestBump::new(-12.0, -10.0),
    ])
}

/// Criterion 7: ψ norm ladder from L to l_check, collocation residual normalized by max|ψ|,
/// and the adjoint pairing identity on the test bumps.
pub fn deficiency_solution(ctx: &Context) -> Result<CriterionOutcome, CliError> {
    let p = &ctx.cfg.psi;
    let rp = ctx.config_rp();
    let psi = deficiency_psi(&ctx.v, &rp, p.l, &PsiOptions::new(p.tol))?;
    let far = deficiency_psi(&ctx.v, &rp, p.l_check, &PsiOptions::norm_only(p.tol))?;
    let change = (far.norm() - psi.norm()).abs() / psi.norm();
    let coll = psi.collocation.expect("full ψ carries collocation");
    let bumps = pairing_bumps(&ctx.v)?;
    let pairs = adjoint_pairing_check(&ctx.v, &rp, &psi, &bumps)?;
    let worst = pairs.iter().map(|r| r.residual).fold(0.0, f64::max);
    let straddle = pairs.iter().filter(|r| r.straddles_spike).count();
    let pass = change < NORM_CHANGE_TOL
        && coll.max_absolute < COLLOCATION_TOL
        && worst < PAIRING_TOL
        && pairs.len() >= 5
        && straddle >= 1;
    Ok(CriterionOutcome::new(
        7,
        "deficiency-solution",
        pass,
        format!(
            "rp=({},{},{}): norm {:.10} at L={} -> {:.10} at L={}, change {change:.3e} (< {NORM_CHANGE_TOL}); collocation {} points, max residual/max|psi| {:.3e} (< {COLLOCATION_TOL:e}, pointwise relative {:.3e}); pairing {} bumps ({straddle} across a spike), max residual {worst:.3e} (< {PAIRING_TOL:e})",
            rp.p_y,
            rp.p_z,
            rp.p_eta,
            psi.norm(),
            p.l,
            far.norm(),
            p.l_check,
            coll.points,
            coll.max_absolute,
            coll.max_relative,
            pairs.len()
        ),
    ))
}

pub fn norm_grid(ctx: &Context, grid: &GridSpec) -> Result<NormGrid, CliError> {
    Ok(grid_norms(&ctx.v, grid, ctx.cfg.normmap.l, ctx.cfg.normmap.tol)?)
}

/// Criterion 8: a threshold M with fraction_below ≥ target and a positive minimum on the grid.
pub fn threshold_existence(ctx: &Context, grid: &NormGrid) -> Result<CriterionOutcome, CliError> {
    let target = ctx.cfg.normmap.target;
    let t = find_threshold(grid, target)?;
    let failed = grid.points.iter().filter(|p| p.status != NormStatus::Converged).count();
    let jump = max_neighbor_jump(grid);
    Ok(CriterionOutcome::new(
        8,
        "threshold-existence",
        t.fraction_below >= target && t.min_norm > 0.0 && failed == 0,
        format!(
            "{} points, {failed} not converged: M {:.10} with fraction_below {:.4} (>= {target}), norms min {:.6} median {:.6} max {:.6}, max neighbor jump {jump:.3}",
            grid.points.len(),
            t.m,
            t.fraction_below,
            t.min_norm,
            t.median_norm,
            t.max_norm
        ),
    ))
}

/// Random reduced momenta shared by criteria 4 and 5.
pub fn sample_momenta(ctx: &mut Context) -> Vec<ReducedParams> {
    (0..ctx.cfg.weyl.lg_cases).map(|_| ctx.random_rp()).collect()
}
