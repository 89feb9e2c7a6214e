//! Metric ds² = −V(x)dη² + 2dη dz + dx² + dy², its causal structure, cone inequalities,
//! and bounds on causal diamonds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::{spike_center, SpikeFamily};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("vector is not causal future directed")]
    NotCausalFuture,
    #[error("|x| = {x} exceeds the spike edge {edge} for index {n}")]
    OutsideRegion { x: f64, edge: f64, n: usize },
    #[error("sample {index} has a velocity that is not causal future directed")]
    NotCausal { index: usize },
    #[error("cone index must be at least 1")]
    BadIndex,
}

/// Coordinates (η, z, x, y).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub eta: f64,
    pub z: f64,
    pub x: f64,
    pub y: f64,
}

impl SpacetimePoint {
    pub fn new(eta: f64, z: f64, x: f64, y: f64) -> Self {
        SpacetimePoint { eta, z, x, y }
    }

    pub fn origin() -> Self {
        Self::default()
    }
}

/// Components in the coordinate basis (∂_η, ∂_z, ∂_x, ∂_y).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub eta: f64,
    pub z: f64,
    pub x: f64,
    pub y: f64,
}

impl TangentVector {
    pub fn new(eta: f64, z: f64, x: f64, y: f64) -> Self {
        TangentVector { eta, z, x, y }
    }

    pub fn neg(self) -> Self {
        TangentVector::new(-self.eta, -self.z, -self.x, -self.y)
    }

    pub fn is_zero(&self) -> bool {
        self.eta == 0.0 && self.z == 0.0 && self.x == 0.0 && self.y == 0.0
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.eta, self.z, self.x, self.y]
    }
}

/// Components in the dual basis (dη, dz, dx, dy).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Covector {
    pub eta: f64,
    pub z: f64,
    pub x: f64,
    pub y: f64,
}

impl Covector {
    pub fn new(eta: f64, z: f64, x: f64, y: f64) -> Self {
        Covector { eta, z, x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CausalKind {
    Timelike,
    Null,
    Spacelike,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Future,
    Past,
    NotApplicable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalClass {
    pub kind: CausalKind,
    pub orientation: Orientation,
}

impl CausalClass {
    pub fn is_causal_future(&self) -> bool {
        matches!(self.kind, CausalKind::Timelike | CausalKind::Null)
            && self.orientation == Orientation::Future
    }
}

/// Relative tolerance under which g(X, X) counts as zero.
pub const NULL_TOL: f64 = 1e-12;

pub struct Metric<'a> {
    potential: &'a SpikeFamily,
}

impl<'a> Metric<'a> {
    pub fn new(potential: &'a SpikeFamily) -> Self {
        Metric { potential }
    }

    pub fn potential(&self) -> &SpikeFamily {
        self.potential
    }

    /// Covariant components g_{μν} in the order (η, z, x, y).
    pub fn components(&self, p: &SpacetimePoint) -> [[f64; 4]; 4] {
        let v = self.potential.eval(p.x, 0);
        [
            [-v, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    /// Contravariant components g^{μν}.
    pub fn inverse_components(&self, p: &SpacetimePoint) -> [[f64; 4]; 4] {
        let v = self.potential.eval(p.x, 0);
        [
            [0.0, 1.0, 0.0, 0.0],
            [1.0, v, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    /// det g_{μν}; identically −1.
    pub fn determinant(&self, p: &SpacetimePoint) -> f64 {
        let g = self.components(p);
        // g_zz = 0, so the (η, z) block contributes −g_ηz² = −1 whatever V is.
        (g[0][0] * g[1][1] - g[0][1] * g[1][0]) * g[2][2] * g[3][3]
    }

    pub fn eval(&self, p: &SpacetimePoint, a: &TangentVector, b: &TangentVector) -> f64 {
        let v = self.potential.eval(p.x, 0);
        -v * a.eta * b.eta + a.eta * b.z + a.z * b.eta + a.x * b.x + a.y * b.y
    }

    pub fn inverse_eval(&self, p: &SpacetimePoint, a: &Covector, b: &Covector) -> f64 {
        let v = self.potential.eval(p.x, 0);
        a.eta * b.z + a.z * b.eta + v * a.z * b.z + a.x * b.x + a.y * b.y
    }

    pub fn classify(&self, p: &SpacetimePoint, x: &TangentVector) -> CausalClass {
        if x.is_zero() {
            return CausalClass {
                kind: CausalKind::Zero,
                orientation: Orientation::NotApplicable,
            };
        }
        let v = self.potential.eval(p.x, 0);
        let terms = [-v * x.eta * x.eta, 2.0 * x.eta * x.z, x.x * x.x, x.y * x.y];
        let q: f64 = terms.iter().sum();
        let scale: f64 = terms.iter().map(|t| t.abs()).sum();
        let kind = if q.abs() <= NULL_TOL * scale {
            CausalKind::Null
        } else if q < 0.0 {
            CausalKind::Timelike
        } else {
            CausalKind::Spacelike
        };
        let orientation = match kind {
            CausalKind::Timelike | CausalKind::Null => orientation_of(x),
            _ => Orientation::NotApplicable,
        };
        CausalClass { kind, orientation }
    }
}

/// Time orientation of a causal vector: future iff X^η > 0, or X^η = X^x = X^y = 0 with X^z < 0.
fn orientation_of(x: &TangentVector) -> Orientation {
    if x.eta > 0.0 || (x.eta == 0.0 && x.x == 0.0 && x.y == 0.0 && x.z < 0.0) {
        Orientation::Future
    } else if x.eta < 0.0 || (x.eta == 0.0 && x.x == 0.0 && x.y == 0.0 && x.z > 0.0) {
        Orientation::Past
    } else {
        // X^η = 0 with a spatial part is spacelike; reached only through the null tolerance.
        Orientation::NotApplicable
    }
}

/// Slacks of the four cone inequalities; each must be nonnegative, the first strictly positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub n: usize,
    pub slack: [f64; 4],
    pub pass: bool,
}

/// Checks, for a causal future X at a point with |x| ≤ 𝔵ₙ:
/// (1) √n X^η − X^z/√n > 0, (2) |X^x| ≤ √n X^η − X^z/√n, (3) the same for X^y,
/// (4) |X^z| ≤ n X^η − X^z.
pub fn cone_inequalities(
    metric: &Metric<'_>,
    p: &SpacetimePoint,
    x: &TangentVector,
    n: usize,
) -> Result<ConeReport, GeometryError> {
    if n < 1 {
        return Err(GeometryError::BadIndex);
    }
    let edge = spike_center(n);
    if p.x.abs() > edge {
        return Err(GeometryError::OutsideRegion { x: p.x, edge, n });
    }
    if !metric.classify(p, x).is_causal_future() {
        return Err(GeometryError::NotCausalFuture);
    }
    let sn = (n as f64).sqrt();
    let nf = n as f64;
    let bound = sn * x.eta - x.z / sn;
    let slack = [
        bound,
        bound - x.x.abs(),
        bound - x.y.abs(),
        nf * x.eta - x.z - x.z.abs(),
    ];
    // Rounding slack proportional to the magnitudes entering each inequality.
    let mag = sn * x.eta.abs() + x.z.abs() / sn + x.x.abs() + x.y.abs();
    let tol = 1e-12 * mag;
    let pass = slack[0] > 0.0 && slack[1..].iter().all(|&s| s >= -tol);
    Ok(ConeReport { n, slack, pass })
}

/// The flat comparison form h = −(√N dη − dz/√N)² + dz²/N + dx² + dy² on X.
pub fn minkowski_comparison(x: &TangentVector, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let a = sn * x.eta - x.z / sn;
    -a * a + x.z * x.z / n as f64 + x.x * x.x + x.y * x.y
}

/// Maps u ∈ [0,1)⁴ to a causal future vector at p: X^η ∈ (0, 1], spatial parts in
/// [−2, 2]·X^η, and X^z below the null bound solved from g(X, X) ≤ 0. When `u[0] == 0`
/// the vector is −(1 + u[3])∂_z. Not uniform in any natural measure.
pub fn causal_future_from_unit(metric: &Metric<'_>, p: &SpacetimePoint, u: [f64; 4]) -> TangentVector {
    if u[0] == 0.0 {
        return TangentVector::new(0.0, -(1.0 + u[3]), 0.0, 0.0);
    }
    let eta = 1.0 - u[0];
    let eta = if eta <= 0.0 { 1.0 } else { eta };
    let xx = (4.0 * u[1] - 2.0) * eta;
    let yy = (4.0 * u[2] - 2.0) * eta;
    let v = metric.potential().eval(p.x, 0);
    let zmax = (v * eta * eta - xx * xx - yy * yy) / (2.0 * eta);
    // u[3] < 0.05 lands exactly on the null cone.
    let z = if u[3] < 0.05 {
        zmax
    } else {
        zmax - (u[3] - 0.05) * 4.0 * (1.0 + zmax.abs())
    };
    TangentVector::new(eta, z, xx, yy)
}

/// Result of the causal-order check along a sampled causal curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalOrderReport {
    pub eta_monotone: bool,
    pub z_decreasing_if_flat: bool,
    pub endpoints_distinct: bool,
    pub pass: bool,
}

/// Verifies that η is nondecreasing along the samples, that z strictly decreases when η
/// does not advance, and that a nontrivial curve does not return to its start.
pub fn check_causal_order(
    metric: &Metric<'_>,
    samples: &[(SpacetimePoint, TangentVector)],
) -> Result<CausalOrderReport, GeometryError> {
    for (i, (p, v)) in samples.iter().enumerate() {
        if !metric.classify(p, v).is_causal_future() {
            return Err(GeometryError::NotCausal { index: i });
        }
    }
    let eta_monotone = samples.windows(2).all(|w| w[1].0.eta >= w[0].0.eta);
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => {
            return Ok(CausalOrderReport {
                eta_monotone: true,
                z_decreasing_if_flat: true,
                endpoints_distinct: true,
                pass: true,
            })
        }
    };
    let z_decreasing_if_flat = if last.eta == first.eta {
        samples.windows(2).all(|w| w[1].0.z < w[0].0.z)
    } else {
        true
    };
    let endpoints_distinct = samples.len() < 2 || first != last;
    Ok(CausalOrderReport {
        eta_monotone,
        z_decreasing_if_flat,
        endpoints_distinct,
        pass: eta_monotone && z_decreasing_if_flat && endpoints_distinct,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiamondBound {
    pub n: usize,
    pub x_max: f64,
    pub y_span: f64,
    pub z_span: f64,
    pub eta_range: [f64; 2],
}

impl DiamondBound {
    /// Whether `r` lies in the bounding box relative to the base point `p`.
    pub fn contains(&self, p: &SpacetimePoint, r: &SpacetimePoint, slack: f64) -> bool {
        r.x.abs() <= self.x_max + slack
            && (r.y - p.y).abs() <= self.y_span + slack
            && (r.z - p.z).abs() <= self.z_span + slack
            && r.eta >= self.eta_range[0] - slack
            && r.eta <= self.eta_range[1] + slack
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Diamond {
    Empty,
    Point(SpacetimePoint),
    Bounded(DiamondBound),
}

/// Bounding box for J⁺(p) ∩ J⁻(q): x within 𝔵_N, |y − y₀| ≤ N+1, |z − z₀| ≤ (N+1)√N,
/// η ∈ [η₀, η₁], with N the least positive integer satisfying |x₀|, |x₁|, Δη ≤ √N and Δz ≥ −√N.
pub fn diamond_bounds(p: &SpacetimePoint, q: &SpacetimePoint) -> Diamond {
    if p == q {
        return Diamond::Point(*p);
    }
    let d_eta = q.eta - p.eta;
    let d_z = q.z - p.z;
    if d_eta < 0.0 {
        return Diamond::Empty;
    }
    if d_eta == 0.0 {
        // With η frozen the only causal direction is −∂_z.
        if d_z >= 0.0 || q.x != p.x || q.y != p.y {
            return Diamond::Empty;
        }
    }
    let ok = |n: usize| {
        let s = (n as f64).sqrt();
        p.x.abs() <= s && q.x.abs() <= s && d_eta <= s && d_z >= -s
    };
    let need = [p.x * p.x, q.x * q.x, d_eta * d_eta, if d_z < 0.0 { d_z * d_z } else { 0.0 }]
        .into_iter()
        .fold(1.0f64, f64::max);
    let mut n = need.ceil().max(1.0) as usize;
    while n > 1 && ok(n - 1) {
        n -= 1;
    }
    while !ok(n) {
        n += 1;
    }
    let nf = n as f64;
    Diamond::Bounded(DiamondBound {
        n,
        x_max: spike_center(n),
        y_span: nf + 1.0,
        z_span: (nf + 1.0) * nf.sqrt(),
        eta_range: [p.eta, q.eta],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metric() -> SpikeFamily {
        SpikeFamily::standard()
    }

    #[test]
    fn basis_vector_examples() {
        let v = metric();
        let g = Metric::new(&v);
        let o = SpacetimePoint::origin();
        let e = TangentVector::new(1.0, 0.0, 0.0, 0.0);
        let z = TangentVector::new(0.0, 1.0, 0.0, 0.0);
        let x = TangentVector::new(0.0, 0.0, 1.0, 0.0);
        assert_eq!(g.eval(&o, &e, &e), 0.0);
        assert_eq!(g.eval(&o, &z, &z), 0.0);
        assert_eq!(g.eval(&o, &x, &x), 1.0);
        let c = Covector::new(1.0, 1.0, 0.0, 0.0);
        assert_eq!(g.inverse_eval(&o, &c, &c), 2.0);
        assert_eq!(g.determinant(&SpacetimePoint::new(0.0, 0.0, 3.13, 0.0)), -1.0);
    }

    #[test]
    fn basis_vector_orientation() {
        let v = metric();
        let g = Metric::new(&v);
        let o = SpacetimePoint::new(0.0, 0.0, 0.7, 0.0);
        let c = g.classify(&o, &TangentVector::new(0.0, -1.0, 0.0, 0.0));
        assert_eq!(c, CausalClass { kind: CausalKind::Null, orientation: Orientation::Future });
        let c = g.classify(&o, &TangentVector::new(0.0, 1.0, 0.0, 0.0));
        assert_eq!(c, CausalClass { kind: CausalKind::Null, orientation: Orientation::Past });
        let c = g.classify(&o, &TangentVector::new(0.0, 0.0, 1.0, 0.0));
        assert_eq!(c.kind, CausalKind::Spacelike);
        assert_eq!(c.orientation, Orientation::NotApplicable);
        // V(0.7) < 0 makes ∂_η spacelike there; at x = 0 it is null and future.
        let c = g.classify(&SpacetimePoint::origin(), &TangentVector::new(1.0, 0.0, 0.0, 0.0));
        assert_eq!(c, CausalClass { kind: CausalKind::Null, orientation: Orientation::Future });
        assert_eq!(g.classify(&o, &TangentVector::default()).kind, CausalKind::Zero);
    }

    #[test]
    fn cone_examples() {
        let v = metric();
        let g = Metric::new(&v);
        let o = SpacetimePoint::origin();
        for n in [1, 4, 9] {
            let r = cone_inequalities(&g, &o, &TangentVector::new(0.0, -1.0, 0.0, 0.0), n).unwrap();
            assert!(r.pass);
            assert!((r.slack[0] - 1.0 / (n as f64).sqrt()).abs() < 1e-15);
            assert_eq!(r.slack[3], 0.0);
        }
        let r = cone_inequalities(&g, &o, &TangentVector::new(1.0, 0.0, 0.0, 0.0), 1).unwrap();
        assert!(r.pass);
        assert_eq!(r.slack, [1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            cone_inequalities(&g, &SpacetimePoint::new(0.0, 0.0, 4.0, 0.0), &TangentVector::new(1.0, -1.0, 0.0, 0.0), 1),
            Err(GeometryError::OutsideRegion { .. })
        ));
        assert_eq!(
            cone_inequalities(&g, &o, &TangentVector::new(0.0, 0.0, 1.0, 0.0), 1),
            Err(GeometryError::NotCausalFuture)
        );
    }

    #[test]
    fn diamond_examples() {
        let o = SpacetimePoint::origin();
        match diamond_bounds(&o, &SpacetimePoint::new(1.0, 0.0, 0.0, 0.0)) {
            Diamond::Bounded(d) => {
                assert_eq!(d.n, 1);
                assert!((d.x_max - 3.121_320_343_559_643).abs() < 1e-12);
                assert_eq!(d.y_span, 2.0);
                assert_eq!(d.z_span, 2.0);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(diamond_bounds(&o, &o), Diamond::Point(o));
        assert_eq!(diamond_bounds(&o, &SpacetimePoint::new(-1.0, 0.0, 0.0, 0.0)), Diamond::Empty);
        assert_eq!(diamond_bounds(&o, &SpacetimePoint::new(0.0, 1.0, 0.0, 0.0)), Diamond::Empty);
        assert!(matches!(diamond_bounds(&o, &SpacetimePoint::new(0.0, -1.0, 0.0, 0.0)), Diamond::Bounded(_)));
        match diamond_bounds(&o, &SpacetimePoint::new(2.5, -3.0, 1.5, 0.0)) {
            // need N ≥ 6.25 (Δη²) and N ≥ 9 (Δz²)
            Diamond::Bounded(d) => assert_eq!(d.n, 9),
            other => panic!("{other:?}"),
        }
    }
}
