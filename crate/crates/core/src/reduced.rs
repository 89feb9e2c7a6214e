//! The Fourier-reduced operator −∂² + W(x), the Liouville–Green frame for the base
//! −p_z²(x⁴+1), the U-matrix equation in that frame, direct integration of
//! −u″ + (W − λ)u = 0, and the L¹ conditions on the frame's coupling kernel.
//!
//! Both solvers integrate segment by segment: gaps in the global coordinate and each spike
//! support in a local offset from its inner edge, so the bump argument keeps full precision
//! even where εₙ is many orders below ulp(x).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{Dop853, OdeError, OdeOptions, OdeSystem};
use crate::potential::{spike_center, SpikeFamily, SpikeSpec};
use crate::quad::{Adaptive, GaussLegendre, QuadError, QuadOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReducedError {
    #[error("the reduced LG construction needs p_z != 0")]
    ZeroPz,
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("integration failed: {0}")]
    ToleranceFailure(#[from] OdeError),
    #[error("quadrature failed: {0}")]
    QuadratureFailure(#[from] QuadError),
}

/// Reduced momenta (p_y, p_z, p_η) of the Fourier-transformed operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedParams {
    pub p_y: f64,
    pub p_z: f64,
    pub p_eta: f64,
}

impl ReducedParams {
    pub fn new(p_y: f64, p_z: f64, p_eta: f64) -> Self {
        ReducedParams { p_y, p_z, p_eta }
    }

    /// 2p_η p_z + p_y², the constant part of W.
    pub fn offset(&self) -> f64 {
        2.0 * self.p_eta * self.p_z + self.p_y * self.p_y
    }

    /// c = 2p_η p_z + p_y² + p_z², the constant moved into the perturbation when the base is
    /// −p_z²(x⁴+1).
    pub fn lg_constant(&self) -> f64 {
        self.offset() + self.p_z * self.p_z
    }
}

/// W(x) = p_z²V(x) + 2p_η p_z + p_y².
pub fn reduced_potential(v: &SpikeFamily, rp: &ReducedParams, x: f64) -> f64 {
    rp.p_z * rp.p_z * v.eval(x, 0) + rp.offset()
}

/// W − λ = base + perturbation with base = −p_z²(x⁴+1) and
/// perturbation = p_z²·(spike part) + c − λ.
#[derive(Clone, Copy)]
pub struct ReducedPotentialSplit<'a> {
    v: &'a SpikeFamily,
    pub params: ReducedParams,
    pub lambda: Complex64,
}

impl ReducedPotentialSplit<'_> {
    pub fn base(&self, x: f64) -> f64 {
        let x2 = x * x;
        -self.params.p_z * self.params.p_z * (x2 * x2 + 1.0)
    }

    pub fn perturbation(&self, x: f64) -> Complex64 {
        let pz2 = self.params.p_z * self.params.p_z;
        Complex64::new(pz2 * self.v.spike_part(x, 0) + self.params.lg_constant(), 0.0) - self.lambda
    }

    /// W(x) − λ evaluated directly.
    pub fn full(&self, x: f64) -> Complex64 {
        Complex64::new(reduced_potential(self.v, &self.params, x), 0.0) - self.lambda
    }

    /// |base + perturbation − (W − λ)|.
    pub fn residual(&self, x: f64) -> f64 {
        (self.perturbation(x) + self.base(x) - self.full(x)).norm()
    }
}

pub fn split<'a>(
    v: &'a SpikeFamily,
    rp: &ReducedParams,
    lambda: Complex64,
) -> Result<ReducedPotentialSplit<'a>, ReducedError> {
    if rp.p_z == 0.0 {
        return Err(ReducedError::ZeroPz);
    }
    Ok(ReducedPotentialSplit {
        v,
        params: *rp,
        lambda,
    })
}

/// Spacing of the cumulative table for S.
const S_CELL: f64 = 0.125;

/// S(x) = |p_z|∫₀ˣ√(t⁴+1)dt with its derivatives and V₀ = (5V′² − 4V″V)/(16V²) for
/// V = −p_z²(x⁴+1). V₀ = (2x⁶ − 3x²)/(x⁴+1)² does not depend on p_z.
#[derive(Clone, Debug)]
pub struct LgFrame {
    p_z: f64,
    /// ∫₀^{k·S_CELL} √(t⁴+1) dt.
    cum: Vec<f64>,
    gl: GaussLegendre,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LgPoint {
    pub x: f64,
    pub s: f64,
    pub sp: f64,
    pub spp: f64,
    pub v0: f64,
}

fn unit_speed(t: f64) -> f64 {
    let t2 = t * t;
    (t2 * t2 + 1.0).sqrt()
}

impl LgFrame {
    /// Tabulates S on [0, x_extent]; evaluation beyond stays correct but slower.
    pub fn new(p_z: f64, x_extent: f64) -> Result<Self, ReducedError> {
        if p_z == 0.0 {
            return Err(ReducedError::ZeroPz);
        }
        let gl = GaussLegendre::new(8);
        let cells = (x_extent.abs() / S_CELL).ceil() as usize + 1;
        let mut cum = Vec::with_capacity(cells + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for k in 0..cells {
            let a = k as f64 * S_CELL;
            acc += gl.integrate(a, a + S_CELL, unit_speed);
            cum.push(acc);
        }
        Ok(LgFrame {
            p_z: p_z.abs(),
            cum,
            gl,
        })
    }

    pub fn p_z(&self) -> f64 {
        self.p_z
    }

    fn unit_s(&self, x: f64) -> f64 {
        let ax = x.abs();
        let k = ((ax / S_CELL).floor() as usize).min(self.cum.len() - 1);
        let mut a = k as f64 * S_CELL;
        let mut acc = self.cum[k];
        while ax - a > S_CELL {
            acc += self.gl.integrate(a, a + S_CELL, unit_speed);
            a += S_CELL;
        }
        acc += self.gl.integrate(a, ax, unit_speed);
        if x < 0.0 {
            -acc
        } else {
            acc
        }
    }

    pub fn s(&self, x: f64) -> f64 {
        self.p_z * self.unit_s(x)
    }

    pub fn sp(&self, x: f64) -> f64 {
        self.p_z * unit_speed(x)
    }

    pub fn spp(&self, x: f64) -> f64 {
        self.p_z * 2.0 * x * x * x / unit_speed(x)
    }

    pub fn v0(&self, x: f64) -> f64 {
        let x2 = x * x;
        let d = x2 * x2 + 1.0;
        (2.0 * x2 * x2 * x2 - 3.0 * x2) / (d * d)
    }

    /// −p_z²(x⁴+1).
    pub fn base(&self, x: f64) -> f64 {
        let x2 = x * x;
        -self.p_z * self.p_z * (x2 * x2 + 1.0)
    }

    pub fn point(&self, x: f64) -> LgPoint {
        LgPoint {
            x,
            s: self.s(x),
            sp: self.sp(x),
            spp: self.spp(x),
            v0: self.v0(x),
        }
    }

    pub fn tabulate(&self, xs: &[f64]) -> Vec<LgPoint> {
        xs.iter().map(|&x| self.point(x)).collect()
    }

    /// M = (1/√(2S′))·A·B with rows (Ψ₊, Ψ₋) and (Φ₊, Φ₋).
    pub fn m_matrix(&self, x: f64) -> [[Complex64; 2]; 2] {
        let sp = self.sp(x);
        let r = self.spp(x) / sp;
        let k = 1.0 / (2.0 * sp).sqrt();
        let e = Complex64::from_polar(1.0, self.s(x));
        let em = e.conj();
        let a00 = Complex64::new(-0.5 * r, sp);
        let a01 = Complex64::new(-0.5 * r, -sp);
        [[a00 * e * k, a01 * em * k], [e * k, em * k]]
    }

    /// M⁻¹ = −i·B⁻¹·(1/√(2S′))·C.
    pub fn m_inverse(&self, x: f64) -> [[Complex64; 2]; 2] {
        let sp = self.sp(x);
        let r = self.spp(x) / sp;
        let k = 1.0 / (2.0 * sp).sqrt();
        let e = Complex64::from_polar(1.0, self.s(x));
        let em = e.conj();
        let mi = Complex64::new(0.0, -k);
        let c01 = Complex64::new(0.5 * r, sp);
        let c11 = Complex64::new(-0.5 * r, sp);
        [[mi * em, mi * em * c01], [-mi * e, mi * e * c11]]
    }
}

pub fn lg_frame(rp: &ReducedParams, x_extent: f64) -> Result<LgFrame, ReducedError> {
    LgFrame::new(rp.p_z, x_extent)
}

/// One integration segment. Local time t maps to x = x0 + t; inside a spike on side `side`
/// the bump offset from 𝔵ₙ is side·t.
#[derive(Clone, Copy, Debug)]
struct Segment {
    x0: f64,
    side: f64,
    spike: Option<SpikeSpec>,
    t_from: f64,
    t_to: f64,
}

impl Segment {
    fn contains_x(&self, x: f64) -> bool {
        let t = x - self.x0;
        let (lo, hi) = if self.t_from <= self.t_to {
            (self.t_from, self.t_to)
        } else {
            (self.t_to, self.t_from)
        };
        t >= lo && t <= hi
    }
}

/// Gaps and spike supports covering the path from a to b, in order of travel.
fn segments(v: &SpikeFamily, a: f64, b: f64) -> Vec<Segment> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let mut out = Vec::new();
    let mut cursor = lo;
    for (side, spec) in v.active_spikes(lo, hi) {
        let c = spec.center_left;
        let w = spec.width;
        let (p, q, x0, t_p, t_q) = if side > 0.0 {
            (c, spec.right_edge(), c, 0.0, w)
        } else {
            (-spec.right_edge(), -c, -c, -w, 0.0)
        };
        let sp = p.max(lo);
        let sq = q.min(hi);
        if sq <= sp {
            continue;
        }
        if sp > cursor {
            out.push(Segment {
                x0: 0.0,
                side: 1.0,
                spike: None,
                t_from: cursor,
                t_to: sp,
            });
        }
        out.push(Segment {
            x0,
            side,
            spike: Some(spec),
            t_from: if sp == p { t_p } else { sp - x0 },
            t_to: if sq == q { t_q } else { sq - x0 },
        });
        cursor = sq;
    }
    if hi > cursor || out.is_empty() {
        out.push(Segment {
            x0: 0.0,
            side: 1.0,
            spike: None,
            t_from: cursor,
            t_to: hi,
        });
    }
    if a > b {
        out.reverse();
        for s in &mut out {
            std::mem::swap(&mut s.t_from, &mut s.t_to);
        }
    }
    out
}

/// W − λ along a segment, in its local time.
#[derive(Clone, Copy)]
struct SegmentPotential {
    pz2: f64,
    offset: f64,
    lambda: Complex64,
    seg: Segment,
    /// Sign of dt along the path; norm integrals use |dx|.
    dir: f64,
}

impl SegmentPotential {
    fn new(rp: &ReducedParams, lambda: Complex64, seg: Segment) -> Self {
        SegmentPotential {
            pz2: rp.p_z * rp.p_z,
            offset: rp.offset(),
            lambda,
            seg,
            dir: if seg.t_to >= seg.t_from { 1.0 } else { -1.0 },
        }
    }

    fn x(&self, t: f64) -> f64 {
        self.seg.x0 + t
    }

    fn spike(&self, t: f64) -> f64 {
        match self.seg.spike {
            Some(spec) => spec.eval_offset(self.seg.side * t, 0),
            None => 0.0,
        }
    }

    /// W − λ.
    fn q(&self, t: f64) -> Complex64 {
        let x = self.x(t);
        let x2 = x * x;
        let w = self.pz2 * (self.spike(t) - x2 * x2) + self.offset;
        Complex64::new(w - self.lambda.re, -self.lambda.im)
    }
}

/// Events reported by the segment driver.
enum Event {
    Step(f64),
    Stop(usize),
}

/// Integrates `make(segment)` across the segments with one state, stopping exactly at each
/// entry of `stops` (global x, listed in order of travel). Inside spikes the step is capped
/// at εₙ/8.
fn drive<const N: usize, S, M, F>(
    segs: &[Segment],
    make: M,
    mut y: [f64; N],
    opts: OdeOptions,
    stops: &[f64],
    mut report: F,
) -> Result<[f64; N], OdeError>
where
    S: OdeSystem<N>,
    M: Fn(Segment) -> S,
    F: FnMut(Event, &[f64; N]),
{
    let mut next_stop = 0usize;
    for seg in segs {
        let sys = make(*seg);
        let mut o = opts;
        if let Some(spec) = seg.spike {
            o.h_max = o.h_max.min(spec.width / 8.0);
        }
        let mut st = Dop853::new(&sys, seg.t_from, y, o);
        let x0 = seg.x0;
        while next_stop < stops.len() && seg.contains_x(stops[next_stop]) {
            let t = stops[next_stop] - x0;
            st.advance_to(&sys, t, |t, y| report(Event::Step(x0 + t), y))?;
            report(Event::Stop(next_stop), st.y());
            next_stop += 1;
        }
        st.advance_to(&sys, seg.t_to, |t, y| report(Event::Step(x0 + t), y))?;
        y = *st.y();
    }
    Ok(y)
}

fn check_tol(tol: f64) -> Result<(), ReducedError> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(ReducedError::BadTolerance(tol))
    }
}

fn c(y: &[f64], i: usize) -> Complex64 {
    Complex64::new(y[i], y[i + 1])
}

/// −u″ + (W − λ)u = 0 on [Re u, Im u, Re u′, Im u′, ∫|u|²].
struct Single {
    p: SegmentPotential,
}

impl OdeSystem<5> for Single {
    fn rhs(&self, t: f64, y: &[f64; 5], d: &mut [f64; 5]) {
        let u = c(y, 0);
        let upp = self.p.q(t) * u;
        d[0] = y[2];
        d[1] = y[3];
        d[2] = upp.re;
        d[3] = upp.im;
        d[4] = self.p.dir * u.norm_sqr();
    }
}

/// Two solutions θ, φ with ∫|θ|², ∫|φ|² and ∫θ̄φ.
pub(crate) struct Pair {
    p: SegmentPotential,
}

impl OdeSystem<12> for Pair {
    fn rhs(&self, t: f64, y: &[f64; 12], d: &mut [f64; 12]) {
        let q = self.p.q(t);
        let th = c(y, 0);
        let ph = c(y, 4);
        let a = q * th;
        let b = q * ph;
        d[0] = y[2];
        d[1] = y[3];
        d[2] = a.re;
        d[3] = a.im;
        d[4] = y[6];
        d[5] = y[7];
        d[6] = b.re;
        d[7] = b.im;
        d[8] = self.p.dir * th.norm_sqr();
        d[9] = self.p.dir * ph.norm_sqr();
        let x = self.p.dir * th.conj() * ph;
        d[10] = x.re;
        d[11] = x.im;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub u: Complex64,
    pub du: Complex64,
    /// ∫|u|² from the start of the interval (in the direction of travel).
    pub norm2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectSolution {
    /// Every accepted step when requested, in order of travel.
    pub steps: Vec<Sample>,
    /// Values at the requested stops, in the order given.
    pub stops: Vec<Sample>,
    pub end: Sample,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectOptions {
    pub tol: f64,
    pub record_steps: bool,
}

impl DirectOptions {
    pub fn new(tol: f64) -> Self {
        DirectOptions {
            tol,
            record_steps: true,
        }
    }
}

fn sample(x: f64, y: &[f64; 5]) -> Sample {
    Sample {
        x,
        u: c(y, 0),
        du: c(y, 2),
        norm2: y[4],
    }
}

/// Integrates −u″ + (W − λ)u = 0 from `interval.0` to `interval.1` with u = ic.0 and
/// u′ = ic.1 at the start. `stops` must be monotone in the direction of travel.
pub fn direct_solve(
    v: &SpikeFamily,
    rp: &ReducedParams,
    lambda: Complex64,
    interval: (f64, f64),
    ic: (Complex64, Complex64),
    opts: &DirectOptions,
    stops: &[f64],
) -> Result<DirectSolution, ReducedError> {
    check_tol(opts.tol)?;
    let (a, b) = interval;
    let segs = segments(v, a, b);
    let y0 = [ic.0.re, ic.0.im, ic.1.re, ic.1.im, 0.0];
    let mut steps = Vec::new();
    let mut at = vec![None; stops.len()];
    let start = sample(a, &y0);
    if opts.record_steps {
        steps.push(start);
    }
    let y = drive(
        &segs,
        |seg| Single {
            p: SegmentPotential::new(rp, lambda, seg),
        },
        y0,
        OdeOptions::with_tol(opts.tol),
        stops,
        |ev, y| match ev {
            Event::Step(x) => {
                if opts.record_steps {
                    steps.push(sample(x, y));
                }
            }
            Event::Stop(i) => at[i] = Some(sample(stops[i], y)),
        },
    )?;
    let end = sample(b, &y);
    let stops = at
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.unwrap_or_else(|| if stops[i] == a { start } else { end }))
        .collect();
    Ok(DirectSolution { steps, stops, end })
}

/// θ and φ sampled together.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairSample {
    pub x: f64,
    pub theta: Complex64,
    pub dtheta: Complex64,
    pub phi: Complex64,
    pub dphi: Complex64,
    pub norm_theta: f64,
    pub norm_phi: f64,
    /// ∫θ̄φ.
    pub cross: Complex64,
}

impl PairSample {
    fn from_state(x: f64, y: &[f64; 12]) -> Self {
        PairSample {
            x,
            theta: c(y, 0),
            dtheta: c(y, 2),
            phi: c(y, 4),
            dphi: c(y, 6),
            norm_theta: y[8],
            norm_phi: y[9],
            cross: c(y, 10),
        }
    }

    /// θφ′ − θ′φ.
    pub fn wronskian(&self) -> Complex64 {
        self.theta * self.dphi - self.dtheta * self.phi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSolution {
    pub stops: Vec<PairSample>,
    /// Largest |W(θ,φ)(x) − W(θ,φ)(0)| over accepted steps, relative to
    /// max(|W(θ,φ)(0)|, |θφ′| + |θ′φ|) so growing pairs are measured against their roundoff.
    pub wronskian_drift: f64,
}

/// Integrates the pair θ (θ(a)=1, θ′(a)=0) and φ (φ(a)=0, φ′(a)=1) from a to b.
pub fn direct_pair(
    v: &SpikeFamily,
    rp: &ReducedParams,
    lambda: Complex64,
    interval: (f64, f64),
    tol: f64,
    stops: &[f64],
) -> Result<PairSolution, ReducedError> {
    check_tol(tol)?;
    let (a, b) = interval;
    let segs = segments(v, a, b);
    let mut y0 = [0.0; 12];
    y0[0] = 1.0;
    y0[6] = 1.0;
    let w0 = PairSample::from_state(a, &y0).wronskian();
    let mut drift = 0.0f64;
    let mut at = vec![None; stops.len()];
    let y = drive(
        &segs,
        |seg| Pair {
            p: SegmentPotential::new(rp, lambda, seg),
        },
        y0,
        OdeOptions::with_tol(tol),
        stops,
        |ev, y| {
            let s = PairSample::from_state(0.0, y);
            let scale = w0.norm().max((s.theta * s.dphi).norm() + (s.dtheta * s.phi).norm());
            drift = drift.max((s.wronskian() - w0).norm() / scale);
            if let Event::Stop(i) = ev {
                at[i] = Some(PairSample::from_state(stops[i], y));
            }
        },
    )?;
    let start = PairSample::from_state(a, &y0);
    let end = PairSample::from_state(b, &y);
    let stops = at
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.unwrap_or(if stops[i] == a { start } else { end }))
        .collect();
    Ok(PairSolution {
        stops,
        wronskian_drift: drift,
    })
}

/// The perturbation V₂ entering the U equation.
pub enum Coupling<'f> {
    /// p_z²·(spike part) + c − λ.
    Physical,
    /// Replaces V₂ by the given function of x.
    Override(&'f dyn Fn(f64) -> Complex64),
}

/// U′ = K U with K = M⁻¹[[0, V₂−V₀],[0,0]]M = −i·g/(2S′)·[[1, e^{−2iS}], [−e^{2iS}, −1]],
/// g = V₂ − V₀. State: U row-major, 8 reals.
struct UFlow<'a, 'f> {
    p: SegmentPotential,
    frame: &'a LgFrame,
    coupling: &'a Coupling<'f>,
}

impl UFlow<'_, '_> {
    fn kernel(&self, t: f64) -> (Complex64, Complex64) {
        let x = self.p.x(t);
        let v2 = match self.coupling {
            Coupling::Physical => {
                Complex64::new(self.p.pz2 * self.p.spike(t) + self.p.offset + self.p.pz2, 0.0) - self.p.lambda
            }
            Coupling::Override(f) => f(x),
        };
        let g = v2 - self.frame.v0(x);
        let kappa = Complex64::new(0.0, -0.5) * g / self.frame.sp(x);
        (kappa, Complex64::from_polar(1.0, 2.0 * self.frame.s(x)))
    }
}

impl OdeSystem<8> for UFlow<'_, '_> {
    fn rhs(&self, t: f64, y: &[f64; 8], d: &mut [f64; 8]) {
        let (kappa, e) = self.kernel(t);
        let u = [[c(y, 0), c(y, 2)], [c(y, 4), c(y, 6)]];
        // K = κ·[[1, ē], [−e, −1]]
        for j in 0..2 {
            let top = kappa * (u[0][j] + e.conj() * u[1][j]);
            let bot = -kappa * (e * u[0][j] + u[1][j]);
            d[2 * j] = top.re;
            d[2 * j + 1] = top.im;
            d[4 + 2 * j] = bot.re;
            d[4 + 2 * j + 1] = bot.im;
        }
    }
}

pub type Mat2 = [[Complex64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut r = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    r
}

fn det(a: &Mat2) -> Complex64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// Spectral norm of a complex 2×2 matrix.
pub fn norm2(a: &Mat2) -> f64 {
    let f: f64 = a.iter().flatten().map(|z| z.norm_sqr()).sum();
    let d = det(a).norm_sqr();
    (0.5 * (f + (f * f - 4.0 * d).max(0.0).sqrt())).sqrt()
}

fn mat_sub(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut r = *a;
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] -= b[i][j];
        }
    }
    r
}

fn u_of(y: &[f64; 8]) -> Mat2 {
    [[c(y, 0), c(y, 2)], [c(y, 4), c(y, 6)]]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LgSample {
    pub x: f64,
    pub u: Mat2,
}

#[derive(Clone, Debug)]
pub struct LgSolution {
    pub frame: LgFrame,
    pub stops: Vec<LgSample>,
    pub end: LgSample,
    /// Largest |det U(x) − 1|; the LG Wronskian is W(φ₊, φ₋) = −i·det U.
    pub wronskian_drift: f64,
}

impl LgSolution {
    /// [[φ₊′, φ₋′], [φ₊, φ₋]] = M·U at a sample.
    pub fn phis(&self, s: &LgSample) -> Mat2 {
        mat_mul(&self.frame.m_matrix(s.x), &s.u)
    }

    /// Solution with (u′, u) = M(x)U(x)·coef, where coef = M(0)⁻¹·(u′(0), u(0)).
    pub fn combine(&self, s: &LgSample, coef: [Complex64; 2]) -> (Complex64, Complex64) {
        let r = self.phis(s);
        (
            r[1][0] * coef[0] + r[1][1] * coef[1],
            r[0][0] * coef[0] + r[0][1] * coef[1],
        )
    }

    /// Coefficients of the solution with u(0) = value, u′(0) = slope.
    pub fn coefficients(&self, value: Complex64, slope: Complex64) -> [Complex64; 2] {
        let mi = self.frame.m_inverse(0.0);
        [mi[0][0] * slope + mi[0][1] * value, mi[1][0] * slope + mi[1][1] * value]
    }
}

/// Integrates U from U(0) = I to x_end (either sign), stopping at `stops` (monotone in the
/// direction of travel).
pub fn lg_solve(
    v: &SpikeFamily,
    rp: &ReducedParams,
    lambda: Complex64,
    x_end: f64,
    tol: f64,
    stops: &[f64],
) -> Result<LgSolution, ReducedError> {
    lg_solve_with(v, rp, lambda, x_end, tol, stops, &Coupling::Physical)
}

pub fn lg_solve_with(
    v: &SpikeFamily,
    rp: &ReducedParams,
    lambda: Complex64,
    x_end: f64,
    tol: f64,
    stops: &[f64],
    coupling: &Coupling,
) -> Result<LgSolution, ReducedError> {
    check_tol(tol)?;
    let frame = lg_frame(rp, x_end.abs() + 1.0)?;
    let segs = segments(v, 0.0, x_end);
    let mut y0 = [0.0; 8];
    y0[0] = 1.0;
    y0[6] = 1.0;
    let mut drift = 0.0f64;
    let mut at = vec![None; stops.len()];
    let y = drive(
        &segs,
        |seg| UFlow {
            p: SegmentPotential::new(rp, lambda, seg),
            frame: &frame,
            coupling,
        },
        y0,
        OdeOptions::with_tol(tol),
        stops,
        |ev, y| {
            let u = u_of(y);
            drift = drift.max((det(&u) - 1.0).norm());
            if let Event::Stop(i) = ev {
                at[i] = Some(LgSample { x: stops[i], u });
            }
        },
    )?;
    let start = LgSample { x: 0.0, u: u_of(&y0) };
    let end = LgSample { x: x_end, u: u_of(&y) };
    let stops = at
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.unwrap_or(if stops[i] == 0.0 { start } else { end }))
        .collect();
    Ok(LgSolution {
        frame,
        stops,
        end,
        wronskian_drift: drift,
    })
}

/// ‖U(b) − U(a)‖₂.
pub fn cauchy_increment(a: &LgSample, b: &LgSample) -> f64 {
    norm2(&mat_sub(&b.u, &a.u))
}

/// ∫ₐᵇ f(x, σ(x)) dx for a ≤ b, one panel per segment. Spike panels are integrated in the
/// local offset so the bump argument carries no roundoff from x.
fn segment_integral<F: Fn(f64, f64) -> f64>(
    v: &SpikeFamily,
    q: &Adaptive,
    a: f64,
    b: f64,
    f: F,
) -> Result<f64, QuadError> {
    let mut acc = 0.0;
    for seg in segments(v, a, b) {
        let r = q.integrate(seg.t_from, seg.t_to, &[], |t| {
            let sigma = seg.spike.map_or(0.0, |spec| spec.eval_offset(seg.side * t, 0));
            f(seg.x0 + t, sigma)
        })?;
        acc += r.value;
    }
    Ok(acc)
}

/// ∫ₐᵇ ‖K‖₂ dx = ∫ |V₂ − V₀|/S′ dx.
pub fn kernel_norm_integral(
    v: &SpikeFamily,
    rp: &ReducedParams,
    lambda: Complex64,
    a: f64,
    b: f64,
) -> Result<f64, ReducedError> {
    let frame = LgFrame::new(rp.p_z, 1.0)?;
    let q = Adaptive::new(QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-10,
        max_intervals: 200_000,
    });
    let pz2 = rp.p_z * rp.p_z;
    let c = Complex64::new(rp.lg_constant(), 0.0) - lambda;
    let (lo, hi) = (a.min(b), a.max(b));
    let r = segment_integral(v, &q, lo, hi, |x, sigma| (c + pz2 * sigma - frame.v0(x)).norm() / frame.sp(x))?;
    Ok(r)
}

/// Domain ends for the L¹ doubling check.
pub const L1_LADDER: [f64; 3] = [40.0, 80.0, 160.0];
/// Largest admissible relative increment between successive ladder entries.
pub const L1_INCREMENT_TOL: f64 = 1e-3;
/// Number of terms of the spike-sum bound.
pub const SPIKE_SUM_TERMS: usize = 2560;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeSumReport {
    /// (N, Σ_{n≤N} sₙ) at N = 10·2^k.
    pub partial_sums: Vec<(usize, f64)>,
    /// Log-log slope of sₙ over the last doubling.
    pub tail_slope: f64,
    /// Σ_{n>N} sₙ ≤ s_N·N/(|slope| − 1) for a power-law tail.
    pub tail_estimate: f64,
    pub converges: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Report {
    pub params: ReducedParams,
    pub ladder: Vec<f64>,
    /// ∫₀^X (−base)^{−1/2} at each ladder entry.
    pub integral1: Vec<f64>,
    /// ∫₀^X (−base)^{−1/2}|V₀ − V₂| at each ladder entry, with λ = i (the modulus is the same
    /// for λ = −i).
    pub integral3: Vec<f64>,
    /// (I(X_{k+1}) − I(X_k))/I(X_{k+1}) for each integral.
    pub doubling_deltas: [Vec<f64>; 2],
    pub spike_sum: SpikeSumReport,
    /// Last doubling increments of both integrals below [`L1_INCREMENT_TOL`] and the spike sum
    /// converges.
    pub verdict: bool,
}

/// sₙ = εₙ·p_z²((𝔵ₙ+εₙ)⁴ + n + 1)/(|p_z|√(𝔵ₙ⁴+1)), which bounds ∫ over spike n of
/// (−base)^{−1/2}·p_z²σₙ.
pub fn spike_sum_term(v: &SpikeFamily, p_z: f64, n: usize) -> f64 {
    let e = v.rule().width(n);
    let c = spike_center(n);
    let r = c + e;
    let pz2 = p_z * p_z;
    e * pz2 * (r * r * r * r + (n + 1) as f64) / (p_z.abs() * (c * c * c * c + 1.0).sqrt())
}

pub fn spike_sum_report(v: &SpikeFamily, p_z: f64, terms: usize) -> SpikeSumReport {
    let mut acc = 0.0;
    let mut partial_sums = Vec::new();
    let mut mark = 10usize;
    let mut monotone = true;
    for n in 1..=terms {
        let s = spike_sum_term(v, p_z, n);
        monotone &= s >= 0.0;
        acc += s;
        if n == mark {
            partial_sums.push((n, acc));
            mark *= 2;
        }
    }
    let n1 = terms / 2;
    let s1 = spike_sum_term(v, p_z, n1);
    let s2 = spike_sum_term(v, p_z, terms);
    let tail_slope = (s2 / s1).ln() / ((terms as f64) / (n1 as f64)).ln();
    let tail_estimate = if tail_slope < -1.0 {
        s2 * terms as f64 / (-tail_slope - 1.0)
    } else {
        f64::INFINITY
    };
    let converges = monotone && tail_slope < -1.2 && tail_estimate.is_finite();
    SpikeSumReport {
        partial_sums,
        tail_slope,
        tail_estimate,
        converges,
    }
}

pub fn l1_condition_check(v: &SpikeFamily, rp: &ReducedParams) -> Result<L1Report, ReducedError> {
    let frame = LgFrame::new(rp.p_z, 1.0)?;
    let pz2 = rp.p_z * rp.p_z;
    let c = Complex64::new(rp.lg_constant(), -1.0);
    let q = Adaptive::new(QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-10,
        max_intervals: 400_000,
    });
    let w = |x: f64| 1.0 / frame.sp(x);
    let mut i1 = Vec::new();
    let mut i3 = Vec::new();
    let (mut acc1, mut acc3, mut prev) = (0.0, 0.0, 0.0);
    for &x in &L1_LADDER {
        acc1 += q.integrate(prev, x, &[], w)?.value;
        acc3 += segment_integral(v, &q, prev, x, |t, sigma| w(t) * (frame.v0(t) - c - pz2 * sigma).norm())?;
        i1.push(acc1);
        i3.push(acc3);
        prev = x;
    }
    let deltas = |v: &[f64]| v.windows(2).map(|p| (p[1] - p[0]) / p[1]).collect::<Vec<_>>();
    let d1 = deltas(&i1);
    let d3 = deltas(&i3);
    let spike_sum = spike_sum_report(v, rp.p_z, SPIKE_SUM_TERMS);
    let verdict = d1.last().is_some_and(|d| *d < L1_INCREMENT_TOL)
        && d3.last().is_some_and(|d| *d < L1_INCREMENT_TOL)
        && spike_sum.converges;
    Ok(L1Report {
        params: *rp,
        ladder: L1_LADDER.to_vec(),
        integral1: i1,
        integral3: i3,
        doubling_deltas: [d1, d3],
        spike_sum,
        verdict,
    })
}
