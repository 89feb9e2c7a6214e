use std::time::Instant;

use kgsa_core::geodesic::{conserved, integrate, predict_barrier, ConfinementReport, GeodesicOptions, PhasePoint, CONSERVED_NAMES};
use kgsa_core::geometry::{cone_inequalities, diamond_bounds, Covector, Diamond, Metric, SpacetimePoint};
use kgsa_core::normmap::{find_threshold, max_neighbor_jump, write_grid, GridSpec, ThresholdReport};
use kgsa_core::weyl::{deficiency_psi, PsiOptions};
use serde::{Deserialize, Serialize};

use crate::checks::{self, Context, CriterionOutcome, EndpointPair};
use crate::output::{json, num, Artifacts, Csv, TOOL};
use crate::CliError;

/// Files produced by a command, lines for stdout, and whether every check passed.
pub struct Outcome {
    pub artifacts: Artifacts,
    pub lines: Vec<String>,
    pub pass: bool,
}

impl Outcome {
    fn ok(artifacts: Artifacts, lines: Vec<String>) -> Self {
        Outcome {
            artifacts,
            lines,
            pass: true,
        }
    }
}

fn point(c: [f64; 4]) -> SpacetimePoint {
    SpacetimePoint::new(c[0], c[1], c[2], c[3])
}

#[derive(Serialize)]
struct SummabilitySummary {
    n_max: usize,
    bound: f64,
    pass: bool,
    partial_sums: Vec<f64>,
}

/// Spike table and the Σεₙn² summability report.
pub fn potential(ctx: &Context) -> Result<Outcome, CliError> {
    let mut arts = Artifacts::default();
    let c = checks::spike_admissibility(ctx, &mut arts)?;
    let s = ctx.v.check_summability(ctx.cfg.potential.n_max);
    arts.add(
        "summability.json",
        json(
            &ctx.hash,
            &SummabilitySummary {
                n_max: ctx.cfg.potential.n_max,
                bound: s.bound,
                pass: s.pass,
                partial_sums: s.partial_sums,
            },
        ),
    );
    Ok(Outcome {
        artifacts: arts,
        lines: vec![c.line()],
        pass: c.pass,
    })
}

#[derive(Serialize)]
struct DriftSummary {
    max_drift: Vec<(String, f64)>,
    max_abs_x: f64,
    max_abs_zdot: f64,
    reached_lambda_max: bool,
    all_finite: bool,
    steps: usize,
    barrier: Option<ConfinementReport>,
}

pub const TRAJECTORY_COLUMNS: [&str; 11] = ["lambda", "eta", "z", "x", "y", "p_eta", "p_z", "p_x", "p_y", "H", "C"];

/// Integrates the configured initial data in both directions.
pub fn geodesic(ctx: &Context) -> Result<Outcome, CliError> {
    let g = &ctx.cfg.geodesic;
    let m = g.momentum;
    let s0 = PhasePoint::new(point(g.point), Covector::new(m[0], m[1], m[2], m[3]));
    let barrier = if m[1] != 0.0 { Some(predict_barrier(&ctx.v, &s0)?) } else { None };
    let opts = GeodesicOptions {
        sample_stride: g.sample_stride,
        ..GeodesicOptions::new(g.lambda_max, g.tol)
    };
    let (t, d) = integrate(&ctx.v, &s0, &opts)?;
    let mut csv = Csv::new(&ctx.hash, &TRAJECTORY_COLUMNS);
    for s in &t.samples {
        let q = conserved(&ctx.v, s);
        let (p, k) = (s.point, s.momentum);
        csv.row(&[s.lambda, p.eta, p.z, p.x, p.y, k.eta, k.z, k.x, k.y, q.h, q.c].map(num));
    }
    let mut arts = Artifacts::default();
    arts.add("trajectory.csv", csv.into_bytes());
    let contained = barrier.is_none_or(|b| d.max_abs_x <= b.d && d.max_abs_zdot <= b.zdot_bound);
    arts.add(
        "drift.json",
        json(
            &ctx.hash,
            &DriftSummary {
                max_drift: CONSERVED_NAMES.iter().map(|n| n.to_string()).zip(d.max_drift).collect(),
                max_abs_x: d.max_abs_x,
                max_abs_zdot: d.max_abs_zdot,
                reached_lambda_max: d.reached_lambda_max,
                all_finite: d.all_finite,
                steps: d.steps,
                barrier,
            },
        ),
    );
    let line = format!(
        "geodesic: {} samples, worst drift {:.3e}, max |x| {:.6}{}",
        t.samples.len(),
        d.worst(),
        d.max_abs_x,
        barrier.map_or(String::new(), |b| format!(" (barrier D {:.6})", b.d))
    );
    Ok(Outcome {
        artifacts: arts,
        lines: vec![line],
        pass: d.reached_lambda_max && d.all_finite && contained,
    })
}

pub const CONE_COLUMNS: [&str; 10] = ["n", "x", "X_eta", "X_z", "X_x", "X_y", "slack1", "slack2", "slack3", "slack4"];

#[derive(Serialize)]
struct ConeSummary {
    samples: usize,
    failures: usize,
    catalog_checks: usize,
    catalog_mismatches: usize,
}

/// Cone inequalities on sampled causal future vectors and the basis catalog.
pub fn cone(ctx: &mut Context) -> Result<Outcome, CliError> {
    let n_max = ctx.cfg.cone.n_max;
    let mut csv = Csv::new(&ctx.hash, &CONE_COLUMNS);
    let mut failures = 0;
    for _ in 0..ctx.cfg.cone.samples {
        let (n, p, x) = checks::cone_sample(&ctx.v, &mut ctx.rng, n_max);
        let r = cone_inequalities(&Metric::new(&ctx.v), &p, &x, n)?;
        failures += usize::from(!r.pass);
        let mut row = vec![n.to_string()];
        row.extend([p.x, x.eta, x.z, x.x, x.y].map(num));
        row.extend(r.slack.map(num));
        csv.row(&row);
    }
    let (checked, bad) = checks::basis_catalog(&ctx.v)?;
    let mut arts = Artifacts::default();
    arts.add("cone-report.csv", csv.into_bytes());
    let summary = ConeSummary {
        samples: ctx.cfg.cone.samples,
        failures,
        catalog_checks: checked,
        catalog_mismatches: bad,
    };
    arts.add("cone-summary.json", json(&ctx.hash, &summary));
    Ok(Outcome {
        artifacts: arts,
        lines: vec![format!(
            "cone: {} samples, {failures} failures; basis catalog {checked} checks, {bad} mismatches",
            summary.samples
        )],
        pass: failures == 0 && bad == 0,
    })
}

#[derive(Serialize)]
struct DiamondSummary {
    p: SpacetimePoint,
    q: SpacetimePoint,
    diamond: Diamond,
}

pub fn diamond(ctx: &Context) -> Result<Outcome, CliError> {
    let (p, q) = (point(ctx.cfg.diamond.p), point(ctx.cfg.diamond.q));
    let d = diamond_bounds(&p, &q);
    let line = match &d {
        Diamond::Empty => "diamond: empty".to_string(),
        Diamond::Point(_) => "diamond: single point".to_string(),
        Diamond::Bounded(b) => format!(
            "diamond: N {} x_max {:.6} y_span {} z_span {:.6} eta [{}, {}]",
            b.n, b.x_max, b.y_span, b.z_span, b.eta_range[0], b.eta_range[1]
        ),
    };
    let mut arts = Artifacts::default();
    arts.add("diamond.json", json(&ctx.hash, &DiamondSummary { p, q, diamond: d }));
    Ok(Outcome::ok(arts, vec![line]))
}

/// ‖ψ‖ and the tail bound when p_z ≠ 0; ψ is not square integrable otherwise.
fn psi_norm(ctx: &Context, e: &EndpointPair) -> Result<Option<(f64, f64)>, CliError> {
    if e.rp.p_z == 0.0 {
        return Ok(None);
    }
    let psi = deficiency_psi(&ctx.v, &e.rp, ctx.cfg.psi.l, &PsiOptions::norm_only(ctx.cfg.psi.tol))?;
    Ok(Some((psi.norm(), psi.tail_bound)))
}

/// Endpoint classification, deficiency indices and ‖ψ‖ for the configured reduced momenta.
pub fn weyl(ctx: &Context) -> Result<Outcome, CliError> {
    let (e, d) = checks::classify_both(&ctx.v, &ctx.config_rp(), &ctx.weyl_options())?;
    let psi = psi_norm(ctx, &e)?;
    let mut csv = Csv::new(&ctx.hash, &checks::WEYL_COLUMNS);
    checks::weyl_rows(&mut csv, &e, psi);
    let mut arts = Artifacts::default();
    arts.add("weyl-report.csv", csv.into_bytes());
    arts.add("weyl.json", json(&ctx.hash, &(&d, &e.minus)));
    let line = format!(
        "weyl: rp=({},{},{}) {} at both ends, deficiency ({},{}), r_inf {:.6e}",
        e.rp.p_y,
        e.rp.p_z,
        e.rp.p_eta,
        e.classification().as_str(),
        e.deficiency.0,
        e.deficiency.1,
        e.plus.r_inf()
    );
    Ok(Outcome::ok(arts, vec![line]))
}

#[derive(Serialize)]
struct ThresholdSummary {
    threshold: ThresholdReport,
    max_neighbor_jump: f64,
}

fn grid_spec(ctx: &Context) -> GridSpec {
    let n = &ctx.cfg.normmap;
    GridSpec::cube(n.lo, n.hi, n.count)
}

fn grid_csv(ctx: &Context, grid: &kgsa_core::normmap::NormGrid) -> Result<Vec<u8>, CliError> {
    let mut bytes = Vec::new();
    write_grid(grid, &mut bytes, &[format!("{TOOL} config={}", ctx.hash)])?;
    Ok(bytes)
}

/// ‖ψ‖ over the parameter cube and the threshold M.
pub fn normmap(ctx: &Context) -> Result<Outcome, CliError> {
    let grid = checks::norm_grid(ctx, &grid_spec(ctx))?;
    let t = find_threshold(&grid, ctx.cfg.normmap.target)?;
    let mut arts = Artifacts::default();
    arts.add("normmap-grid.csv", grid_csv(ctx, &grid)?);
    let line = format!(
        "normmap: {} points, M {:.10} fraction_below {:.4}, min {:.6} max {:.6}",
        grid.points.len(),
        t.m,
        t.fraction_below,
        t.min_norm,
        t.max_norm
    );
    let pass = t.fraction_below >= ctx.cfg.normmap.target && t.min_norm > 0.0;
    arts.add(
        "threshold.json",
        json(
            &ctx.hash,
            &ThresholdSummary {
                threshold: t,
                max_neighbor_jump: max_neighbor_jump(&grid),
            },
        ),
    );
    Ok(Outcome {
        artifacts: arts,
        lines: vec![line],
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub criteria: Vec<CriterionOutcome>,
    /// Ids of failed criteria.
    pub failures: Vec<u32>,
    pub pass: bool,
}

pub const VERIFY_REPORT: &str = "verify-report.json";

/// Runs criteria 1 through 8. Progress with timings goes to stderr only, so artifacts stay
/// byte-identical across runs.
pub fn verify(ctx: &mut Context) -> Result<Outcome, CliError> {
    let mut arts = Artifacts::default();
    let mut criteria = Vec::new();
    let start = Instant::now();
    let record = |c: CriterionOutcome, criteria: &mut Vec<CriterionOutcome>| {
        eprintln!("[{:>7.1}s] {}", start.elapsed().as_secs_f64(), c.line());
        criteria.push(c);
    };
    record(checks::spike_admissibility(ctx, &mut arts)?, &mut criteria);
    record(checks::geodesic_completeness(ctx, &mut arts)?, &mut criteria);
    record(checks::causal_structure(ctx)?, &mut criteria);
    let mut rps = vec![ctx.config_rp()];
    rps.extend(checks::sample_momenta(ctx));
    record(checks::lg_machinery(ctx, &rps)?, &mut criteria);
    record(checks::l1_conditions(ctx, &rps)?, &mut criteria);
    let spec = grid_spec(ctx);
    let (c6, endpoints, base) = checks::classification_dichotomy(ctx, &spec)?;
    record(c6, &mut criteria);
    record(checks::deficiency_solution(ctx)?, &mut criteria);
    let grid = checks::norm_grid(ctx, &spec)?;
    record(checks::threshold_existence(ctx, &grid)?, &mut criteria);
    arts.add("normmap-grid.csv", grid_csv(ctx, &grid)?);

    // grid points carry the ψ norms of the sweep; controls have none
    let mut csv = Csv::new(&ctx.hash, &checks::WEYL_COLUMNS);
    for (i, e) in endpoints.iter().enumerate() {
        let psi = grid.points.get(i).filter(|p| p.params == e.rp).map(|p| (p.norm, p.tail_bound));
        checks::weyl_rows(&mut csv, e, psi);
    }
    arts.add("weyl-report.csv", csv.into_bytes());
    let mut base_csv = Csv::new(&ctx.hash, &checks::WEYL_COLUMNS);
    for e in &base {
        checks::weyl_rows(&mut base_csv, e, None);
    }
    arts.add("weyl-base-only.csv", base_csv.into_bytes());

    let failures: Vec<u32> = criteria.iter().filter(|c| !c.pass).map(|c| c.id).collect();
    let report = VerifyReport {
        seed: ctx.cfg.seed,
        pass: failures.is_empty(),
        failures,
        criteria,
    };
    arts.add(VERIFY_REPORT, json(&ctx.hash, &report));
    let mut lines: Vec<String> = report.criteria.iter().map(|c| c.line()).collect();
    lines.push(format!("failures: {:?}", report.failures));
    Ok(Outcome {
        artifacts: arts,
        lines,
        pass: report.pass,
    })
}
