//! Geodesic flow of H = p_η p_z + ½V(x)p_z² + ½p_x² + ½p_y², conserved quantities,
//! confinement between spike barriers, and completeness probes.

use std::cell::Cell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Covector, SpacetimePoint, TangentVector};
use crate::ode::{Dop853, OdeError, OdeOptions, OdeSystem, StepReview};
use crate::potential::{last_index_below, spike_center, SpikeFamily, SpikeSpec, BUMP_SLOPE_MAX};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeodesicError {
    #[error("barrier prediction needs p_z != 0")]
    ZeroPz,
    #[error("no barrier found below spike index {cap}")]
    NoBarrier { cap: usize },
    #[error("integration failed: {0}")]
    ToleranceFailure(#[from] OdeError),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// Local error tolerance used per unit of requested accuracy. Inside spikes C is a difference
/// of two O(x⁴) terms, and the drift accumulates over hundreds of passages, so local steps
/// must be held well below the requested drift level.
pub const LOCAL_TOL_FACTOR: f64 = 1e-3;

fn local_options(tol: f64) -> OdeOptions {
    OdeOptions::with_tol(tol * LOCAL_TOL_FACTOR)
}

/// Spike index beyond which barrier search gives up.
pub const BARRIER_SEARCH_CAP: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub point: SpacetimePoint,
    pub momentum: Covector,
    pub lambda: f64,
}

impl PhasePoint {
    pub fn new(point: SpacetimePoint, momentum: Covector) -> Self {
        PhasePoint {
            point,
            momentum,
            lambda: 0.0,
        }
    }

    fn to_state(self) -> [f64; 8] {
        let (p, m) = (self.point, self.momentum);
        [p.eta, p.z, p.x, p.y, m.eta, m.z, m.x, m.y]
    }

    fn from_state(lambda: f64, s: &[f64; 8]) -> Self {
        PhasePoint {
            point: SpacetimePoint::new(s[0], s[1], s[2], s[3]),
            momentum: Covector::new(s[4], s[5], s[6], s[7]),
            lambda,
        }
    }

    /// dx^μ/dλ = g^{μν}p_ν.
    pub fn velocity(&self, v: &SpikeFamily) -> TangentVector {
        let m = self.momentum;
        let vx = v.eval(self.point.x, 0);
        TangentVector::new(m.z, m.eta + vx * m.z, m.x, m.y)
    }
}

pub fn hamiltonian(v: &SpikeFamily, s: &PhasePoint) -> f64 {
    let m = s.momentum;
    m.eta * m.z + 0.5 * v.eval(s.point.x, 0) * m.z * m.z + 0.5 * m.x * m.x + 0.5 * m.y * m.y
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservedSet {
    pub p_eta: f64,
    pub p_z: f64,
    pub p_y: f64,
    /// C = p_x² + V(x)p_z².
    pub c: f64,
    pub h: f64,
}

impl ConservedSet {
    pub fn as_array(&self) -> [f64; 5] {
        [self.p_eta, self.p_z, self.p_y, self.c, self.h]
    }
}

pub const CONSERVED_NAMES: [&str; 5] = ["p_eta", "p_z", "p_y", "C", "H"];

pub fn conserved(v: &SpikeFamily, s: &PhasePoint) -> ConservedSet {
    conserved_with(&s.momentum, v.eval(s.point.x, 0))
}

fn conserved_with(m: &Covector, vx: f64) -> ConservedSet {
    ConservedSet {
        p_eta: m.eta,
        p_z: m.z,
        p_y: m.y,
        c: m.x * m.x + vx * m.z * m.z,
        h: m.eta * m.z + 0.5 * vx * m.z * m.z + 0.5 * m.x * m.x + 0.5 * m.y * m.y,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfinementReport {
    /// Bound on |x| along the geodesic: right edge of the barrier spike.
    pub d: f64,
    /// sup over |x| < D of |V|.
    pub e: f64,
    pub zdot_bound: f64,
    /// Barrier spike index on the negative and positive side.
    pub barrier_spikes: (usize, usize),
}

/// The first spike (in both directions from x) whose height n+1 exceeds C/p_z² and whose peak
/// lies beyond |x| confines the motion; V ≤ C/p_z² along the orbit forbids crossing the peak.
pub fn predict_barrier(v: &SpikeFamily, s: &PhasePoint) -> Result<ConfinementReport, GeodesicError> {
    let pz = s.momentum.z;
    if pz == 0.0 {
        return Err(GeodesicError::ZeroPz);
    }
    if !v.enabled() {
        return Err(GeodesicError::NoBarrier { cap: 0 });
    }
    let k = conserved(v, s).c / (pz * pz);
    let ax = s.point.x.abs();
    let mut n = ((k - 1.0).floor().max(0.0) as usize).max(last_index_below(ax)).max(1);
    let spec = loop {
        if n > BARRIER_SEARCH_CAP {
            return Err(GeodesicError::NoBarrier {
                cap: BARRIER_SEARCH_CAP,
            });
        }
        let sp = v
            .spike(n)
            .map_err(|_| GeodesicError::NoBarrier { cap: n })?;
        let peak_x = sp.center_left + sp.width * sp.peak_t;
        if ((n + 1) as f64) > k && peak_x > ax {
            break sp;
        }
        n += 1;
    };
    let d = spec.right_edge();
    // |V| ≤ max(x⁴, σₙ − x⁴) on each support, and −x⁴ elsewhere.
    let mut e = d.powi(4);
    for m in 1..=n {
        let sp = v.spike(m).map_err(|_| GeodesicError::NoBarrier { cap: m })?;
        e = e.max(sp.peak_excess());
    }
    Ok(ConfinementReport {
        d,
        e,
        zdot_bound: s.momentum.eta.abs() + e * pz.abs(),
        barrier_spikes: (spec.n, spec.n),
    })
}

/// Where x sits relative to the spike supports, seen from the direction of motion.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Region {
    Gap { lo: f64, hi: f64, tol_lo: f64, tol_hi: f64 },
    Spike { lo: f64, hi: f64, n: usize },
}

/// In-spike displacement per step, as a fraction of the distance to the nearest edge (in
/// units of the width), and its floor.
const SPIKE_STEP_FRACTION: f64 = 0.25;
const SPIKE_STEP_FLOOR: f64 = 0.004;

/// Allowed landing overshoot into a spike support, as a fraction of its width.
const LAND_FRACTION: f64 = 1e-3;

fn region(v: &SpikeFamily, x: f64, dir: f64) -> Region {
    if !v.enabled() {
        return Region::Gap {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            tol_lo: 0.0,
            tol_hi: 0.0,
        };
    }
    let probe = x + dir * 1e-14 * x.abs().max(1.0);
    if let Some(n) = v.spike_index_at(probe) {
        let (lo, hi) = v.support_at(probe).expect("index implies support");
        return Region::Spike { lo, hi, n };
    }
    let ap = probe.abs();
    let k = last_index_below(ap);
    let rule = v.rule();
    let (near, near_tol) = if k == 0 {
        (-spike_center(1), LAND_FRACTION * rule.width(1))
    } else {
        (spike_center(k) + rule.width(k), LAND_FRACTION * rule.width(k))
    };
    let far = spike_center(k + 1);
    let far_tol = LAND_FRACTION * rule.width(k + 1);
    if probe >= 0.0 {
        Region::Gap {
            lo: near,
            hi: far,
            tol_lo: near_tol,
            tol_hi: far_tol,
        }
    } else {
        Region::Gap {
            lo: -far,
            hi: -near,
            tol_lo: far_tol,
            tol_hi: near_tol,
        }
    }
}

/// Smallest h > 0 with x + v h + ½a h² = target, or ∞.
fn first_hit(x: f64, v: f64, a: f64, target: f64) -> f64 {
    let d = target - x;
    let mut best = f64::INFINITY;
    if a.abs() < 1e-300 || (a * d).abs() < 1e-14 * v * v {
        if v != 0.0 && d / v > 0.0 {
            best = d / v;
        }
        return best;
    }
    let disc = v * v + 2.0 * a * d;
    if disc < 0.0 {
        return best;
    }
    let sq = disc.sqrt();
    // roots of ½a h² + v h − d = 0 without cancellation: −d/(q/2) and q/a
    let q = -(v + v.signum() * sq);
    let r1 = if q != 0.0 { -2.0 * d / q } else { f64::INFINITY };
    let r2 = q / a;
    for r in [r1, r2] {
        if r > 0.0 && r < best {
            best = r;
        }
    }
    best
}

/// Step limits that keep steps from straddling spike supports, for motion with
/// ẍ = −`force`·V′(x).
struct SpikeGuard<'a> {
    v: &'a SpikeFamily,
    force: f64,
}

impl SpikeGuard<'_> {
    fn max_step(&self, x: f64, xdot: f64, xddot: f64, dir: f64) -> f64 {
        let vel = dir * xdot;
        let dirx = if vel != 0.0 { vel.signum() } else { xddot.signum() };
        match region(self.v, x, dirx) {
            Region::Spike { lo, hi, n } => {
                let sp = match self.v.spike(n) {
                    Ok(s) => s,
                    Err(_) => return f64::INFINITY,
                };
                let eps = hi - lo;
                // The bump is analytic in t only within a radius ~ min(t, 1−t) of the edges,
                // so the allowed displacement shrinks toward them; below t ≈ 0.004 the bump
                // and its derivatives are under e^(−70) and the floor applies.
                let t = (x.abs() - sp.center_left) / sp.width;
                let edge = t.min(1.0 - t).clamp(0.0, 0.5);
                let disp = eps * (SPIKE_STEP_FRACTION * edge).clamp(SPIKE_STEP_FLOOR, 0.125);
                let amax = self.force
                    * (sp.max_value() * BUMP_SLOPE_MAX / sp.width
                        + 4.0 * (x.abs() + eps).powi(3));
                let h1 = if vel != 0.0 { disp / vel.abs() } else { f64::INFINITY };
                let h2 = if amax > 0.0 { (2.0 * disp / amax).sqrt() } else { f64::INFINITY };
                h1.min(h2)
            }
            Region::Gap { lo, hi, tol_lo, tol_hi } => {
                let h_hi = first_hit(x, vel, xddot, hi + 0.5 * tol_hi);
                let h_lo = first_hit(x, vel, xddot, lo - 0.5 * tol_lo);
                h_hi.min(h_lo)
            }
        }
    }

    fn review(&self, x0: f64, xdot0: f64, x1: f64, h: f64) -> StepReview {
        let vel = h.signum() * xdot0;
        let dirx = if vel != 0.0 { vel.signum() } else { (x1 - x0).signum() };
        match region(self.v, x0, dirx) {
            Region::Spike { lo, hi, .. } => {
                if (x1 - x0).abs() > 0.5 * (hi - lo) {
                    StepReview::Shrink(0.5)
                } else {
                    StepReview::Accept
                }
            }
            Region::Gap { lo, hi, tol_lo, tol_hi } => {
                let target = if x1 > hi + tol_hi {
                    hi + 0.5 * tol_hi
                } else if x1 < lo - tol_lo {
                    lo - 0.5 * tol_lo
                } else {
                    return StepReview::Accept;
                };
                let frac = ((target - x0) / (x1 - x0)).clamp(0.05, 0.95);
                StepReview::Shrink(frac)
            }
        }
    }
}

/// Representation of the x coordinate. Inside spike n on side s the state carries
/// ξ = x − s·𝔵ₙ, so the bump argument t = sξ/εₙ keeps full precision even where ulp(x)/εₙ
/// would otherwise put roundoff noise of order x⁴·b″·ulp(x)/εₙ² into V′. Elsewhere ξ = x.
#[derive(Clone, Copy, Debug)]
enum Anchor {
    /// Inside a gap; V = −x⁴ on [lo, hi], which includes the landing tolerance into each
    /// neighbouring support (where the bump is below e^(−249)).
    Gap { lo: f64, hi: f64 },
    Spike { side: f64, spec: SpikeSpec },
}

struct Frame<'a> {
    v: &'a SpikeFamily,
    anchor: Cell<Anchor>,
}

fn quartic01(x: f64) -> (f64, f64) {
    let x2 = x * x;
    (-x2 * x2, -4.0 * x2 * x)
}

impl<'a> Frame<'a> {
    fn new(v: &'a SpikeFamily) -> Self {
        Frame {
            v,
            anchor: Cell::new(Anchor::Gap {
                lo: f64::NAN,
                hi: f64::NAN,
            }),
        }
    }

    fn origin(&self) -> f64 {
        match self.anchor.get() {
            Anchor::Gap { .. } => 0.0,
            Anchor::Spike { side, spec } => side * spec.center_left,
        }
    }

    fn x(&self, xi: f64) -> f64 {
        self.origin() + xi
    }

    /// (V, V′) at the point represented by ξ.
    fn pot01(&self, xi: f64) -> (f64, f64) {
        match self.anchor.get() {
            Anchor::Gap { lo, hi } => {
                if xi >= lo && xi <= hi {
                    quartic01(xi)
                } else {
                    (self.v.eval(xi, 0), self.v.eval(xi, 1))
                }
            }
            Anchor::Spike { side, spec } => {
                let (q0, q1) = quartic01(side * spec.center_left + xi);
                let (b0, b1) = spec.eval_offset01(side * xi);
                (q0 + b0, q1 + side * b1)
            }
        }
    }

    fn rebase(&self, xi: &mut f64) {
        let x = self.x(*xi);
        let next = match region(self.v, x, 0.0) {
            Region::Gap { lo, hi, tol_lo, tol_hi } => Anchor::Gap {
                lo: lo - tol_lo,
                hi: hi + tol_hi,
            },
            Region::Spike { n, .. } => match self.v.spike(n) {
                Ok(spec) => Anchor::Spike {
                    side: if x < 0.0 { -1.0 } else { 1.0 },
                    spec,
                },
                Err(_) => Anchor::Gap {
                    lo: f64::NAN,
                    hi: f64::NAN,
                },
            },
        };
        let old = self.origin();
        self.anchor.set(next);
        let new = self.origin();
        if new != old {
            *xi = (old - new) + *xi;
        }
    }
}

/// Error scales for the pair (ξ, w) so that a step error at the scale moves
/// C = w² + V(x)·q² by at most rtol·max(1, |C|). Scales never drop below a few ulps of the
/// component, where roundoff dominates anyway.
fn c_weighted_scales(frame: &Frame, xi: (f64, f64), w: (f64, f64), q: f64, c_scale: f64, rtol: f64) -> (f64, f64) {
    let floor = |a: f64, b: f64| 8.0 * f64::EPSILON * a.abs().max(b.abs());
    let budget = rtol * c_scale;
    let vp = frame.pot01(xi.0).1.abs().max(frame.pot01(xi.1).1.abs()) * q * q;
    let wmax = w.0.abs().max(w.1.abs());
    let sx = if vp > 0.0 { budget / vp } else { f64::INFINITY };
    let sw = if wmax > 0.0 { budget / (2.0 * wmax) } else { f64::INFINITY };
    (sx.max(floor(xi.0, xi.1)), sw.max(floor(w.0, w.1)))
}

/// Hamilton's equations on (η, z, ξ, y, p_η, p_z, p_x, p_y).
struct HamiltonFlow<'a> {
    guard: SpikeGuard<'a>,
    frame: Frame<'a>,
    /// max(1, |C|) at the start.
    c_scale: f64,
}

impl OdeSystem<8> for HamiltonFlow<'_> {
    fn rhs(&self, _t: f64, s: &[f64; 8], d: &mut [f64; 8]) {
        let pz = s[5];
        let (v0, v1) = self.frame.pot01(s[2]);
        d[0] = pz;
        d[1] = s[4] + v0 * pz;
        d[2] = s[6];
        d[3] = s[7];
        d[4] = 0.0;
        d[5] = 0.0;
        d[6] = -0.5 * v1 * pz * pz;
        d[7] = 0.0;
    }

    fn max_step(&self, _t: f64, s: &[f64; 8], d: &[f64; 8], dir: f64) -> f64 {
        self.guard.max_step(self.frame.x(s[2]), d[2], d[6], dir)
    }

    fn review_step(&self, _t: f64, y0: &[f64; 8], y1: &[f64; 8], h: f64) -> StepReview {
        let o = self.frame.origin();
        self.guard.review(o + y0[2], y0[6], o + y1[2], h)
    }

    fn error_scale(&self, y0: &[f64; 8], y1: &[f64; 8], rtol: f64, sc: &mut [f64; 8]) {
        let (sx, sw) = c_weighted_scales(&self.frame, (y0[2], y1[2]), (y0[6], y1[6]), y0[5], self.c_scale, rtol);
        sc[2] = sc[2].min(sx);
        sc[6] = sc[6].min(sw);
    }

    fn rebase(&self, _t: f64, y: &mut [f64; 8]) {
        self.frame.rebase(&mut y[2]);
    }
}

/// Second-order geodesic equations on (η, z, ξ, y, η̇, ż, ẋ, ẏ) with the only nonzero
/// Christoffel symbols Γ^x_ηη = ½V′ and Γ^z_ηx = Γ^z_xη = −½V′.
struct ChristoffelFlow<'a> {
    guard: SpikeGuard<'a>,
    frame: Frame<'a>,
    /// max(1, |ẋ² + Vη̇²|) at the start.
    c_scale: f64,
}

impl OdeSystem<8> for ChristoffelFlow<'_> {
    fn rhs(&self, _t: f64, s: &[f64; 8], d: &mut [f64; 8]) {
        let vp = self.frame.pot01(s[2]).1;
        d[0] = s[4];
        d[1] = s[5];
        d[2] = s[6];
        d[3] = s[7];
        d[4] = 0.0;
        d[5] = vp * s[4] * s[6];
        d[6] = -0.5 * vp * s[4] * s[4];
        d[7] = 0.0;
    }

    fn max_step(&self, _t: f64, s: &[f64; 8], d: &[f64; 8], dir: f64) -> f64 {
        self.guard.max_step(self.frame.x(s[2]), d[2], d[6], dir)
    }

    fn review_step(&self, _t: f64, y0: &[f64; 8], y1: &[f64; 8], h: f64) -> StepReview {
        let o = self.frame.origin();
        self.guard.review(o + y0[2], y0[6], o + y1[2], h)
    }

    fn error_scale(&self, y0: &[f64; 8], y1: &[f64; 8], rtol: f64, sc: &mut [f64; 8]) {
        let (sx, sw) = c_weighted_scales(&self.frame, (y0[2], y1[2]), (y0[6], y1[6]), y0[4], self.c_scale, rtol);
        sc[2] = sc[2].min(sx);
        sc[6] = sc[6].min(sw);
    }

    fn rebase(&self, _t: f64, y: &mut [f64; 8]) {
        self.frame.rebase(&mut y[2]);
    }
}

fn hamilton_flow<'a>(v: &'a SpikeFamily, s0: &PhasePoint) -> HamiltonFlow<'a> {
    let pz = s0.momentum.z;
    HamiltonFlow {
        c_scale: conserved(v, s0).c.abs().max(1.0),
        guard: SpikeGuard {
            v,
            force: 0.5 * pz * pz,
        },
        frame: Frame::new(v),
    }
}

fn christoffel_flow<'a>(v: &'a SpikeFamily, s0: &PhasePoint) -> ChristoffelFlow<'a> {
    let pz = s0.momentum.z;
    ChristoffelFlow {
        c_scale: conserved(v, s0).c.abs().max(1.0),
        guard: SpikeGuard {
            v,
            force: 0.5 * pz * pz,
        },
        frame: Frame::new(v),
    }
}

/// Christoffel state (positions and velocities) of a phase point.
fn christoffel_state(v: &SpikeFamily, s0: &PhasePoint) -> [f64; 8] {
    let vel = s0.velocity(v);
    let p = s0.point;
    [p.eta, p.z, p.x, p.y, vel.eta, vel.z, vel.x, vel.y]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// max |Q(λ) − Q(0)| / max(1, |Q(0)|) for p_η, p_z, p_y, C, H.
    pub max_drift: [f64; 5],
    pub max_abs_x: f64,
    /// Largest |ż| over the samples.
    pub max_abs_zdot: f64,
    pub reached_lambda_max: bool,
    pub all_finite: bool,
    pub steps: usize,
}

impl DriftReport {
    pub fn worst(&self) -> f64 {
        self.max_drift.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Samples ordered by increasing λ.
    pub samples: Vec<PhasePoint>,
}

impl Trajectory {
    /// Samples with their velocities, in increasing λ.
    pub fn with_velocities(&self, v: &SpikeFamily) -> Vec<(SpacetimePoint, TangentVector)> {
        self.samples.iter().map(|s| (s.point, s.velocity(v))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodesicOptions {
    pub tol: f64,
    pub lambda_max: f64,
    pub both_directions: bool,
    pub max_steps: usize,
    /// Keep every k-th accepted step (and the endpoints) in the trajectory. Drift, |x| and
    /// |ż| maxima always cover every step.
    pub sample_stride: usize,
}

impl GeodesicOptions {
    pub fn new(lambda_max: f64, tol: f64) -> Self {
        GeodesicOptions {
            tol,
            lambda_max,
            both_directions: true,
            max_steps: 20_000_000,
            sample_stride: 1,
        }
    }
}

/// Running maxima of conserved-quantity drift, |x| and |ż| along a trajectory.
struct Tracker {
    base: [f64; 5],
    drift: [f64; 5],
    max_x: f64,
    max_zdot: f64,
    finite: bool,
}

impl Tracker {
    fn new(q0: &ConservedSet) -> Self {
        Tracker {
            base: q0.as_array(),
            drift: [0.0; 5],
            max_x: 0.0,
            max_zdot: 0.0,
            finite: true,
        }
    }

    fn record(&mut self, s: &PhasePoint, vx: f64) {
        let q = conserved_with(&s.momentum, vx).as_array();
        for i in 0..5 {
            self.drift[i] = self.drift[i].max((q[i] - self.base[i]).abs() / self.base[i].abs().max(1.0));
        }
        self.max_x = self.max_x.max(s.point.x.abs());
        self.max_zdot = self.max_zdot.max((s.momentum.eta + vx * s.momentum.z).abs());
        self.finite &= s.to_state().iter().all(|c| c.is_finite()) && vx.is_finite();
    }
}

/// Integrates the geodesic to λ = ±lambda_max, recording every accepted step.
pub fn integrate(
    v: &SpikeFamily,
    s0: &PhasePoint,
    opts: &GeodesicOptions,
) -> Result<(Trajectory, DriftReport), GeodesicError> {
    if !(opts.tol > 0.0) {
        return Err(GeodesicError::BadTolerance(opts.tol));
    }
    let sys = hamilton_flow(v, s0);
    let ode = OdeOptions {
        max_steps: opts.max_steps,
        ..local_options(opts.tol)
    };
    let lam0 = s0.lambda;
    let mut tracker = Tracker::new(&conserved(v, s0));
    tracker.record(s0, v.eval(s0.point.x, 0));
    let mut steps = 0;
    let stride = opts.sample_stride.max(1);
    let mut run = |target: f64, out: &mut Vec<PhasePoint>| -> Result<(), GeodesicError> {
        let mut st = Dop853::new(&sys, lam0, s0.to_state(), ode);
        let mut k = 0usize;
        st.advance_to(&sys, target, |t, y| {
            let mut g = *y;
            g[2] = sys.frame.x(y[2]);
            let p = PhasePoint::from_state(t, &g);
            tracker.record(&p, sys.frame.pot01(y[2]).0);
            k += 1;
            if k % stride == 0 || t == target {
                out.push(p);
            }
        })?;
        steps += st.stats().accepted;
        Ok(())
    };
    let mut forward = vec![*s0];
    run(lam0 + opts.lambda_max, &mut forward)?;
    let mut samples = Vec::new();
    if opts.both_directions {
        let mut backward = Vec::new();
        run(lam0 - opts.lambda_max, &mut backward)?;
        backward.reverse();
        samples.extend(backward);
    }
    samples.extend(forward);
    let reached = samples
        .last()
        .is_some_and(|s| s.lambda == lam0 + opts.lambda_max)
        && (!opts.both_directions || samples[0].lambda == lam0 - opts.lambda_max);
    Ok((
        Trajectory { samples },
        DriftReport {
            max_drift: tracker.drift,
            max_abs_x: tracker.max_x,
            max_abs_zdot: tracker.max_zdot,
            reached_lambda_max: reached,
            all_finite: tracker.finite,
            steps,
        },
    ))
}

/// Integrates forward to `lambda_max`, flips all momenta, and integrates back for the same
/// affine length. Returns the maximum coordinate difference from the start.
pub fn reversal_error(v: &SpikeFamily, s0: &PhasePoint, lambda_max: f64, tol: f64) -> Result<f64, GeodesicError> {
    let opts = GeodesicOptions {
        both_directions: false,
        ..GeodesicOptions::new(lambda_max, tol)
    };
    let (t, _) = integrate(v, s0, &opts)?;
    let end = *t.samples.last().expect("nonempty trajectory");
    let m = end.momentum;
    let flipped = PhasePoint {
        point: end.point,
        momentum: Covector::new(-m.eta, -m.z, -m.x, -m.y),
        lambda: 0.0,
    };
    let (back, _) = integrate(v, &flipped, &opts)?;
    let fin = back.samples.last().expect("nonempty trajectory");
    let a = s0.point;
    let b = fin.point;
    Ok([(a.eta - b.eta), (a.z - b.z), (a.x - b.x), (a.y - b.y)]
        .iter()
        .map(|d| d.abs())
        .fold(0.0, f64::max))
}

/// Integrates the Hamiltonian and the Christoffel formulations side by side on a common
/// grid of unit spacing in λ and returns the maximum coordinate deviation.
pub fn christoffel_crosscheck(
    v: &SpikeFamily,
    s0: &PhasePoint,
    lambda_max: f64,
    tol: f64,
) -> Result<f64, GeodesicError> {
    if !(tol > 0.0) {
        return Err(GeodesicError::BadTolerance(tol));
    }
    let ham = hamilton_flow(v, s0);
    let chr = christoffel_flow(v, s0);
    let y_chr = christoffel_state(v, s0);
    let ode = local_options(tol);
    let mut dev = 0.0f64;
    for sign in [1.0, -1.0] {
        let mut a = Dop853::new(&ham, s0.lambda, s0.to_state(), ode);
        let mut b = Dop853::new(&chr, s0.lambda, y_chr, ode);
        let n = lambda_max.ceil() as usize;
        for k in 1..=n {
            let t = s0.lambda + sign * (k as f64).min(lambda_max);
            a.advance_to(&ham, t, |_, _| {})?;
            b.advance_to(&chr, t, |_, _| {})?;
            let (ya, yb) = (a.y(), b.y());
            for i in [0, 1, 3] {
                dev = dev.max((ya[i] - yb[i]).abs());
            }
            dev = dev.max((ham.frame.x(ya[2]) - chr.frame.x(yb[2])).abs());
        }
    }
    Ok(dev)
}

/// Hamiltonian value along the Christoffel formulation, computed from velocities:
/// H = ½ g(ẋ, ẋ). Returns the max |H(λ) − H(0)| over a unit grid.
pub fn christoffel_h_drift(v: &SpikeFamily, s0: &PhasePoint, lambda_max: f64, tol: f64) -> Result<f64, GeodesicError> {
    if !(tol > 0.0) {
        return Err(GeodesicError::BadTolerance(tol));
    }
    let chr = christoffel_flow(v, s0);
    let h_of = |y: &[f64; 8], vx: f64| 0.5 * (-vx * y[4] * y[4] + 2.0 * y[4] * y[5] + y[6] * y[6] + y[7] * y[7]);
    let y0 = christoffel_state(v, s0);
    let h0 = h_of(&y0, v.eval(y0[2], 0));
    let mut st = Dop853::new(&chr, s0.lambda, y0, local_options(tol));
    let mut worst = 0.0f64;
    st.advance_to(&chr, s0.lambda + lambda_max, |_, y| {
        worst = worst.max((h_of(y, chr.frame.pot01(y[2]).0) - h0).abs());
    })?;
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(x: f64, p: [f64; 4]) -> PhasePoint {
        PhasePoint::new(SpacetimePoint::new(0.0, 0.0, x, 0.0), Covector::new(p[0], p[1], p[2], p[3]))
    }

    #[test]
    fn hamiltonian_examples() {
        let v = SpikeFamily::standard();
        assert_eq!(hamiltonian(&v, &pp(0.0, [1.0, 1.0, 0.0, 0.0])), 1.0);
        assert_eq!(hamiltonian(&v, &pp(0.0, [0.0, 0.0, 1.0, 0.0])), 0.5);
        assert_eq!(hamiltonian(&v, &pp(1.0, [0.5, 1.0, 0.0, 0.0])), 0.0);
        assert_eq!(conserved(&v, &pp(0.0, [0.0, 1.0, 1.0, 0.0])).c, 1.0);
        assert_eq!(conserved(&v, &pp(2.0, [0.3, 0.0, 0.75, 0.0])).c, 0.5625);
    }

    #[test]
    fn conserved_at_first_peak() {
        let v = SpikeFamily::standard();
        let s = v.spike(1).unwrap();
        let x = s.center_left + s.width * s.peak_t;
        let c = conserved(&v, &pp(x, [0.0, 1.0, 0.0, 0.0])).c;
        assert!((c - 2.0).abs() < 1e-9);
    }

    #[test]
    fn barrier_examples() {
        let v = SpikeFamily::standard();
        // C/p_z² = 1.5 at x = 0: p_x² = 1.5
        let r = predict_barrier(&v, &pp(0.0, [0.0, 1.0, 1.5f64.sqrt(), 0.0])).unwrap();
        assert_eq!(r.barrier_spikes, (1, 1));
        assert!((r.d - 3.143_417_430_471_723).abs() < 1e-12);
        assert!((r.e - r.d.powi(4)).abs() < 1e-12);
        assert!((r.e - 97.7).abs() < 0.1);
        let r = predict_barrier(&v, &pp(0.0, [0.0, 1.0, 0.5f64.sqrt(), 0.0])).unwrap();
        assert_eq!(r.barrier_spikes, (1, 1));
        let r = predict_barrier(&v, &pp(0.0, [0.0, 1.0, 2.5f64.sqrt(), 0.0])).unwrap();
        assert_eq!(r.barrier_spikes, (2, 2));
        assert_eq!(predict_barrier(&v, &pp(0.0, [0.0, 0.0, 1.0, 0.0])), Err(GeodesicError::ZeroPz));
    }

    #[test]
    fn first_hit_roots() {
        assert!((first_hit(0.0, 1.0, 0.0, 2.0) - 2.0).abs() < 1e-15);
        assert_eq!(first_hit(0.0, 1.0, 0.0, -2.0), f64::INFINITY);
        // decelerating particle turning before the target
        assert_eq!(first_hit(0.0, 1.0, -1.0, 1.0), f64::INFINITY);
        let h = first_hit(0.0, 1.0, -1.0, 0.3);
        assert!((h - h * h * 0.5 - 0.3).abs() < 1e-14);
        // turning around and coming back to a target behind
        let h = first_hit(0.0, 1.0, -1.0, -1.0);
        assert!((h - 0.5 * h * h + 1.0).abs() < 1e-13 && h > 2.0);
    }
}
