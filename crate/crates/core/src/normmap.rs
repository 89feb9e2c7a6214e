//! ‖ψ‖ over a grid of reduced momenta, the sublevel threshold M, and CSV export.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::SpikeFamily;
use crate::reduced::ReducedParams;
use crate::weyl::{deficiency_psi, PsiOptions};

#[derive(Debug, Error)]
pub enum NormMapError {
    #[error("grid axis {axis}: {reason}")]
    BadSpec { axis: usize, reason: String },
    #[error("grid has no converged points")]
    EmptyGrid,
    #[error("target fraction {0} outside (0, 1]")]
    BadTarget(f64),
    #[error("L = {0} is below 60")]
    ShortInterval(f64),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Axis k spans [lo, hi] with `count` points; a single point sits at lo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        Axis { lo, hi, count }
    }

    pub fn point(lo: f64) -> Self {
        Axis { lo, hi: lo, count: 1 }
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.count == 1 {
            return self.lo;
        }
        let t = i as f64 / (self.count - 1) as f64;
        if i + 1 == self.count {
            self.hi
        } else {
            self.lo + t * (self.hi - self.lo)
        }
    }
}

/// Axes in the order (p_y, p_z, p_η).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: [Axis; 3],
}

impl GridSpec {
    pub fn cube(lo: f64, hi: f64, count: usize) -> Self {
        GridSpec {
            axes: [Axis::new(lo, hi, count); 3],
        }
    }

    pub fn single(rp: &ReducedParams) -> Self {
        GridSpec {
            axes: [Axis::point(rp.p_y), Axis::point(rp.p_z), Axis::point(rp.p_eta)],
        }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), NormMapError> {
        for (k, a) in self.axes.iter().enumerate() {
            let bad = |reason: &str| NormMapError::BadSpec {
                axis: k,
                reason: reason.to_string(),
            };
            if !a.lo.is_finite() || !a.hi.is_finite() || a.hi < a.lo {
                return Err(bad("range must be finite with lo ≤ hi"));
            }
            if a.count == 0 || (a.count == 1) != (a.lo == a.hi) {
                return Err(bad("need count ≥ 2 on a proper range or count = 1 on a point"));
            }
        }
        if self.axes[1].lo <= 0.0 {
            return Err(NormMapError::BadSpec {
                axis: 1,
                reason: "p_z must stay positive".to_string(),
            });
        }
        Ok(())
    }

    /// Grid point with index (i, j, k) flattened as (i·n_z + j)·n_η + k.
    pub fn params(&self, idx: usize) -> ReducedParams {
        let [ay, az, ae] = self.axes;
        let k = idx % ae.count;
        let j = (idx / ae.count) % az.count;
        let i = idx / (ae.count * az.count);
        ReducedParams::new(ay.value(i), az.value(j), ae.value(k))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormStatus {
    /// The ‖ψ‖ ladder increments shrink geometrically.
    Converged,
    Unconverged,
    Failed(String),
}

impl NormStatus {
    pub fn label(&self) -> &'static str {
        match self {
            NormStatus::Converged => "converged",
            NormStatus::Unconverged => "unconverged",
            NormStatus::Failed(_) => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub params: ReducedParams,
    /// ‖ψ‖_{[−L, L]}.
    pub norm: f64,
    /// Envelope estimate of ∫_{|x|>L}|ψ|².
    pub tail_bound: f64,
    pub status: NormStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormGrid {
    pub spec: GridSpec,
    pub l: f64,
    pub tol: f64,
    /// Sorted by (p_y, p_z, p_η).
    pub points: Vec<GridPoint>,
}

/// Largest ratio of successive ladder increments for convergence.
const LADDER_RATIO: f64 = 0.75;

fn ladder_converges(ladder: &[(f64, f64)]) -> bool {
    let inc: Vec<f64> = ladder.windows(2).map(|w| w[1].1 - w[0].1).collect();
    inc.len() >= 3
        && inc.iter().all(|d| *d >= 0.0 && d.is_finite())
        && inc.windows(2).rev().take(2).all(|w| w[1] <= LADDER_RATIO * w[0])
}

/// Evaluates ‖ψ‖_{[−L, L]} at every grid point in parallel. Per-point failures are recorded
/// in the status and never abort the sweep.
pub fn grid_norms(v: &SpikeFamily, spec: &GridSpec, l: f64, tol: f64) -> Result<NormGrid, NormMapError> {
    spec.validate()?;
    if !(l >= 60.0) {
        return Err(NormMapError::ShortInterval(l));
    }
    let opts = PsiOptions::norm_only(tol);
    let mut points: Vec<GridPoint> = (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            let rp = spec.params(idx);
            match deficiency_psi(v, &rp, l, &opts) {
                Ok(psi) => {
                    let norm = psi.norm();
                    let status = if norm.is_finite() && norm > 0.0 && ladder_converges(&psi.norm_ladder) {
                        NormStatus::Converged
                    } else {
                        NormStatus::Unconverged
                    };
                    GridPoint {
                        params: rp,
                        norm,
                        tail_bound: psi.tail_bound,
                        status,
                    }
                }
                Err(e) => GridPoint {
                    params: rp,
                    norm: f64::NAN,
                    tail_bound: f64::NAN,
                    status: NormStatus::Failed(e.to_string()),
                },
            }
        })
        .collect();
    sort_points(&mut points);
    Ok(NormGrid {
        spec: *spec,
        l,
        tol,
        points,
    })
}

fn sort_points(points: &mut [GridPoint]) {
    points.sort_by(|a, b| {
        let (p, q) = (a.params, b.params);
        p.p_y
            .total_cmp(&q.p_y)
            .then(p.p_z.total_cmp(&q.p_z))
            .then(p.p_eta.total_cmp(&q.p_eta))
    });
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub m: f64,
    pub target_fraction: f64,
    /// Fraction of all grid points with ‖ψ‖ < M.
    pub fraction_below: f64,
    pub min_norm: f64,
    pub max_norm: f64,
    pub median_norm: f64,
    pub converged_points: usize,
    pub total_points: usize,
}

fn converged_norms(grid: &NormGrid) -> Vec<f64> {
    let mut vals: Vec<f64> = grid
        .points
        .iter()
        .filter(|p| p.status == NormStatus::Converged)
        .map(|p| p.norm)
        .collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Fraction of grid points in U_M = {‖ψ‖ < M}.
pub fn fraction_below(grid: &NormGrid, m: f64) -> f64 {
    if grid.points.is_empty() {
        return 0.0;
    }
    let n = grid
        .points
        .iter()
        .filter(|p| p.status == NormStatus::Converged && p.norm < m)
        .count();
    n as f64 / grid.points.len() as f64
}

/// M is the smallest float above the ⌈f·n⌉-th smallest converged norm, so at least a fraction
/// f of the converged points lie strictly below it.
pub fn find_threshold(grid: &NormGrid, target_fraction: f64) -> Result<ThresholdReport, NormMapError> {
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(NormMapError::BadTarget(target_fraction));
    }
    let vals = converged_norms(grid);
    if vals.is_empty() {
        return Err(NormMapError::EmptyGrid);
    }
    let n = vals.len();
    let k = ((target_fraction * n as f64).ceil() as usize).clamp(1, n);
    let m = vals[k - 1].next_up();
    let median = if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    };
    Ok(ThresholdReport {
        m,
        target_fraction,
        fraction_below: fraction_below(grid, m),
        min_norm: vals[0],
        max_norm: vals[n - 1],
        median_norm: median,
        converged_points: n,
        total_points: grid.points.len(),
    })
}

/// Largest relative jump |a − b|/min(a, b) between axis neighbours of converged points.
pub fn max_neighbor_jump(grid: &NormGrid) -> f64 {
    let [ay, az, ae] = grid.spec.axes;
    let (ny, nz, ne) = (ay.count, az.count, ae.count);
    if grid.points.len() != ny * nz * ne {
        return f64::NAN;
    }
    let at = |i: usize, j: usize, k: usize| &grid.points[(i * nz + j) * ne + k];
    let mut worst = 0.0f64;
    for i in 0..ny {
        for j in 0..nz {
            for k in 0..ne {
                let p = at(i, j, k);
                let nbrs = [(i + 1, j, k), (i, j + 1, k), (i, j, k + 1)];
                for (a, b, c) in nbrs {
                    if a < ny && b < nz && c < ne {
                        let q = at(a, b, c);
                        if p.status == NormStatus::Converged && q.status == NormStatus::Converged {
                            worst = worst.max((p.norm - q.norm).abs() / p.norm.min(q.norm));
                        }
                    }
                }
            }
        }
    }
    worst
}

pub const GRID_COLUMNS: [&str; 6] = ["p_y", "p_z", "p_eta", "norm", "tail_bound", "status"];

/// Writes `# ` comment lines, the column header, and one row per point with every float in
/// 17 significant digits.
pub fn write_grid<W: Write>(grid: &NormGrid, mut w: W, comments: &[String]) -> Result<(), NormMapError> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(GRID_COLUMNS)?;
    for p in &grid.points {
        out.write_record([
            format!("{:.16e}", p.params.p_y),
            format!("{:.16e}", p.params.p_z),
            format!("{:.16e}", p.params.p_eta),
            format!("{:.16e}", p.norm),
            format!("{:.16e}", p.tail_bound),
            p.status.label().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn export_grid(grid: &NormGrid, path: &Path, comments: &[String]) -> Result<(), NormMapError> {
    let f = BufWriter::new(File::create(path)?);
    write_grid(grid, f, comments)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub p_y: f64,
    pub p_z: f64,
    pub p_eta: f64,
    pub norm: f64,
    pub tail_bound: f64,
    pub status: String,
}

/// Reads rows written by [`write_grid`], skipping comment lines.
pub fn read_grid<R: Read>(r: R) -> Result<Vec<GridRow>, NormMapError> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut rows = Vec::new();
    for rec in rd.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}
