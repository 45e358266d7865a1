//! Closed loops in parameter space, Abelian loop phases, path-ordered
//! holonomies of the degenerate blocks, and the commuting closed form for
//! loops in the `(X₂, ln B)` plane.
//!
//! Convention: `U = Π exp(−A Δλ)` with later segments on the left, so an
//! Abelian loop gives `U = e^{iγ}`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connection::{self, Parameter};
use crate::error::{Error, Result};
use crate::flux::{self, GaussianFlux};
use crate::fock::{FockBasis, OperatorMatrix, ParameterPoint, Role};
use crate::linalg::{self, c, C64, Mat};
use crate::operators::GUARD_BAND;

/// Segments multiplied per parallel task; fixed so results do not depend on
/// the thread count.
const CHUNK: usize = 1024;
const PLANE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    X1X2,
    X2lnB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPath {
    points: Vec<ParameterPoint>,
    closed: bool,
}

/// Coordinates used for interpolation: `(X₁, X₂, ln B, r, θ)`.
fn coords(p: &ParameterPoint) -> [f64; 5] {
    [p.x1, p.x2, p.b.ln(), p.r, p.theta]
}

fn from_coords(q: [f64; 5]) -> ParameterPoint {
    ParameterPoint {
        x1: q[0],
        x2: q[1],
        b: q[2].exp(),
        r: q[3],
        theta: q[4],
    }
}

fn lerp(a: &[f64; 5], b: &[f64; 5], t: f64) -> [f64; 5] {
    std::array::from_fn(|k| a[k] + (b[k] - a[k]) * t)
}

impl ParameterPath {
    pub fn new(points: Vec<ParameterPoint>, closed: bool) -> Result<Self> {
        let min = if closed { 3 } else { 2 };
        if points.len() < min {
            return Err(Error::InvalidPath(format!("need at least {min} points, got {}", points.len())));
        }
        for p in &points {
            p.validate().map_err(|e| Error::InvalidPath(e.to_string()))?;
        }
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidPath("consecutive points coincide".into()));
        }
        if closed && points.first() == points.last() {
            return Err(Error::InvalidPath("closed paths store the first point once".into()));
        }
        Ok(Self { points, closed })
    }

    /// Counterclockwise (`ccw = true`) circle in the `(X₁, X₂)` plane.
    pub fn circle(center: (f64, f64), radius: f64, segments: usize, b: f64, ccw: bool) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidPath(format!("radius must be > 0, got {radius}")));
        }
        let sign = if ccw { 1.0 } else { -1.0 };
        let points = (0..segments)
            .map(|k| {
                let phi = sign * 2.0 * PI * k as f64 / segments as f64;
                ParameterPoint {
                    x1: center.0 + radius * phi.cos(),
                    x2: center.1 + radius * phi.sin(),
                    b,
                    r: 0.0,
                    theta: 0.0,
                }
            })
            .collect();
        Self::new(points, true)
    }

    /// Counterclockwise rectangle `X₂ ∈ [x2.0, x2.1] × ln B ∈ [ln_b.0, ln_b.1]`
    /// at fixed `X₁`.
    pub fn rectangle_x2_ln_b(x1: f64, x2: (f64, f64), ln_b: (f64, f64)) -> Result<Self> {
        let p = |u: f64, v: f64| ParameterPoint {
            x1,
            x2: u,
            b: v.exp(),
            r: 0.0,
            theta: 0.0,
        };
        Self::new(
            vec![p(x2.0, ln_b.0), p(x2.1, ln_b.0), p(x2.1, ln_b.1), p(x2.0, ln_b.1)],
            true,
        )
    }

    pub fn points(&self) -> &[ParameterPoint] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        if self.closed {
            points[1..].reverse();
        } else {
            points.reverse();
        }
        Self { points, closed: self.closed }
    }

    /// The loop traversed `times` times.
    pub fn repeated(&self, times: usize) -> Result<Self> {
        if !self.closed || times == 0 {
            return Err(Error::InvalidPath("only closed paths repeat, at least once".into()));
        }
        let mut points = Vec::with_capacity(self.points.len() * times);
        for _ in 0..times {
            points.extend_from_slice(&self.points);
        }
        // duplicates are allowed across laps since the edges differ
        Ok(Self { points, closed: true })
    }

    /// Straight edges in coordinate space, closing edge included.
    pub fn edges(&self) -> Vec<(ParameterPoint, ParameterPoint)> {
        let n = self.points.len();
        let count = if self.closed { n } else { n - 1 };
        (0..count).map(|k| (self.points[k], self.points[(k + 1) % n])).collect()
    }

    fn require_closed(&self) -> Result<()> {
        if !self.closed {
            return Err(Error::InvalidPath("path is not closed".into()));
        }
        Ok(())
    }

    fn require_constant(&self, what: &str, f: impl Fn(&ParameterPoint) -> f64) -> Result<()> {
        let first = f(&self.points[0]);
        if self.points.iter().any(|p| (f(p) - first).abs() > PLANE_TOL) {
            return Err(Error::InvalidPath(format!("{what} varies along the path")));
        }
        Ok(())
    }

    fn require_plane(&self, plane: Plane) -> Result<()> {
        self.require_constant("r", |p| p.r)?;
        self.require_constant("theta", |p| p.theta)?;
        match plane {
            Plane::X1X2 => self.require_constant("B", |p| p.b.ln()),
            Plane::X2lnB => self.require_constant("X1", |p| p.x1),
        }
    }

    fn plane_coords(&self, plane: Plane) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| match plane {
                Plane::X1X2 => (p.x1, p.x2),
                Plane::X2lnB => (p.x2, p.b.ln()),
            })
            .collect()
    }
}

/// Shoelace signed area, counterclockwise positive. Axes are `(X₁, X₂)` or
/// `(X₂, ln B)`; the latter makes the area equal `∮ X₂ d(ln B)`.
pub fn signed_area(path: &ParameterPath, plane: Plane) -> Result<f64> {
    path.require_closed()?;
    path.require_plane(plane)?;
    let q = path.plane_coords(plane);
    let n = q.len();
    let twice: f64 = (0..n)
        .map(|k| {
            let (a, b) = (q[k], q[(k + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    Ok(0.5 * twice)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolonomyResult {
    pub abelian_phase: Option<f64>,
    pub unitary: Option<OperatorMatrix>,
    /// Eigenphases of `unitary`, ascending.
    pub eigenphases: Option<Vec<f64>>,
    pub segments_used: usize,
    pub richardson_estimate: f64,
}

fn check_level(basis: &FockBasis, n: usize) -> Result<()> {
    let top = basis.n_max().saturating_sub(GUARD_BAND);
    if n > top {
        return Err(Error::InvalidArgument(format!(
            "level n = {n} lies in the guard band (n <= {top} required)"
        )));
    }
    Ok(())
}

/// `i Σ <n,0|A|n,0>·Δλ` over polygon edges with midpoint connections.
fn abelian_sum(points: &[ParameterPoint], n: usize) -> f64 {
    let k = points.len();
    (0..k)
        .map(|j| {
            let (a, b) = (points[j], points[(j + 1) % k]);
            let mid = ParameterPoint {
                x1: 0.5 * (a.x1 + b.x1),
                x2: 0.5 * (a.x2 + b.x2),
                ..a
            };
            let a1 = connection::entry(Parameter::X1, &mid, n, 0, n, 0);
            let a2 = connection::entry(Parameter::X2, &mid, n, 0, n, 0);
            (C64::i() * (a1 * (b.x1 - a.x1) + a2 * (b.x2 - a.x2))).re
        })
        .sum()
}

/// Abelian phase `γ = Σ [X₂ ΔX₁ − X₁ ΔX₂]` of level `n` around a loop in the
/// `(X₁, X₂)` plane.
///
/// The Richardson estimate compares against the loop through every other
/// vertex, which measures how well the polygon resolves a smooth curve.
pub fn abelian_phase(path: &ParameterPath, n: usize) -> Result<HolonomyResult> {
    path.require_closed()?;
    path.require_plane(Plane::X1X2)?;
    let pts = path.points();
    let gamma = abelian_sum(pts, n);
    let richardson = if pts.len().is_multiple_of(2) && pts.len() >= 6 {
        let coarse: Vec<ParameterPoint> = pts.iter().step_by(2).copied().collect();
        (gamma - abelian_sum(&coarse, n)).abs() / 3.0
    } else {
        0.0
    };
    Ok(HolonomyResult {
        abelian_phase: Some(gamma),
        unitary: None,
        eigenphases: None,
        segments_used: pts.len(),
        richardson_estimate: richardson,
    })
}

/// Segment counts per edge, proportional to edge length and summing to `k`.
fn allocate(lengths: &[f64], k: usize) -> Vec<usize> {
    let total: f64 = lengths.iter().sum();
    let shares: Vec<f64> = lengths.iter().map(|l| k as f64 * l / total).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())));
    let mut missing = k - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        counts[i] += 1;
        missing -= 1;
    }
    for (i, c) in counts.iter_mut().enumerate() {
        if *c == 0 && lengths[i] > 0.0 {
            *c = 1;
        }
    }
    counts
}

/// Midpoints and coordinate steps of the subdivided path.
fn segments(path: &ParameterPath, k: usize) -> Vec<([f64; 5], [f64; 5])> {
    let edges: Vec<([f64; 5], [f64; 5])> = path.edges().iter().map(|(a, b)| (coords(a), coords(b))).collect();
    let lengths: Vec<f64> = edges
        .iter()
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (v - u) * (v - u)).sum::<f64>().sqrt())
        .collect();
    let counts = allocate(&lengths, k);
    let mut out = Vec::with_capacity(counts.iter().sum());
    for ((a, b), &cnt) in edges.iter().zip(&counts) {
        let step: [f64; 5] = std::array::from_fn(|j| (b[j] - a[j]) / cnt as f64);
        for s in 0..cnt {
            out.push((lerp(a, b, (s as f64 + 0.5) / cnt as f64), step));
        }
    }
    out
}

/// `Σ_λ A_λ Δλ` on the degenerate block, with `B` entering through `ln B`.
fn segment_generator(mid: &[f64; 5], step: &[f64; 5], n: usize, m_max: usize) -> Result<Mat> {
    let point = from_coords(*mid);
    let params = [Parameter::X1, Parameter::X2, Parameter::B, Parameter::R, Parameter::Theta];
    let mut g = Mat::zeros(m_max + 1, m_max + 1);
    for (j, par) in params.into_iter().enumerate() {
        if step[j] == 0.0 {
            continue;
        }
        let weight = if par == Parameter::B { point.b * step[j] } else { step[j] };
        g += connection::degenerate_block_analytic(par, &point, n, m_max)? * c(weight);
    }
    Ok(g)
}

fn ordered_product(path: &ParameterPath, n: usize, m_max: usize, k: usize) -> Result<(Mat, usize)> {
    let segs = segments(path, k);
    let dim = m_max + 1;
    let chunks: Vec<Result<Mat>> = segs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut u = Mat::identity(dim, dim);
            for (mid, step) in chunk {
                let g = segment_generator(mid, step, n, m_max)?;
                u = linalg::expm(&(-g)) * u;
            }
            Ok(u)
        })
        .collect();
    let mut u = Mat::identity(dim, dim);
    for chunk in chunks {
        u = chunk? * u;
    }
    Ok((u, segs.len()))
}

/// Path-ordered holonomy of the degenerate block at level `n`, with
/// `k_segments` midpoint segments and a Richardson estimate from `2k`.
pub fn nonabelian_holonomy(
    basis: &FockBasis,
    path: &ParameterPath,
    n: usize,
    k_segments: usize,
) -> Result<HolonomyResult> {
    path.require_closed()?;
    check_level(basis, n)?;
    if k_segments < 100 {
        return Err(Error::InvalidArgument(format!("need >= 100 segments, got {k_segments}")));
    }
    let (u, used) = ordered_product(path, n, basis.m_max(), k_segments)?;
    let (u2, _) = ordered_product(path, n, basis.m_max(), 2 * k_segments)?;
    let richardson = 4.0 / 3.0 * linalg::max_abs_diff(&u, &u2);
    let phases = linalg::unitary_eigenphases(&u);
    Ok(HolonomyResult {
        abelian_phase: None,
        unitary: Some(OperatorMatrix::new(Role::Unitary, u)),
        eigenphases: Some(phases),
        segments_used: used,
        richardson_estimate: richardson,
    })
}

/// Tridiagonal `T` with `T_{m,m−1} = T_{m−1,m} = √m`.
pub fn field_block_matrix(m_max: usize) -> Mat {
    Mat::from_fn(m_max + 1, m_max + 1, |i, j| {
        if i.abs_diff(j) == 1 {
            c((i.max(j) as f64).sqrt())
        } else {
            linalg::ZERO
        }
    })
}

/// Holonomy `exp(−(i/2) σ T)` for loops in the `(X₂, ln B)` plane at
/// `X₁ = 0`, with `σ = ∮ X₂ d(ln B)`. Eigenphases are `−σ t/2` for the
/// eigenvalues `t` of `T`, listed in ascending `t`.
pub fn commuting_closed_form(basis: &FockBasis, path: &ParameterPath, n: usize) -> Result<HolonomyResult> {
    path.require_closed()?;
    check_level(basis, n)?;
    if path.points().iter().any(|p| p.x1.abs() > PLANE_TOL) {
        return Err(Error::InvalidPath(
            "X1 is nonzero on the path; the blocks do not commute, use nonabelian_holonomy".into(),
        ));
    }
    let sigma = signed_area(path, Plane::X2lnB)?;
    let t = field_block_matrix(basis.m_max());
    let u = linalg::expm(&(t.clone() * C64::new(0.0, -0.5 * sigma)));
    let phases = linalg::hermitian_eigenvalues(&t).iter().map(|e| -0.5 * sigma * e).collect();
    Ok(HolonomyResult {
        abelian_phase: None,
        unitary: Some(OperatorMatrix::new(Role::Unitary, u)),
        eigenphases: Some(phases),
        segments_used: 0,
        richardson_estimate: 0.0,
    })
}

/// `−Φ₀² (1 − e^{−R²/Δ²})² / (4π B R²)`.
pub fn flux_loop_phase_closed_form(phi0: f64, delta: f64, b: f64, radius: f64) -> f64 {
    let s = -(-(radius * radius) / (delta * delta)).exp_m1();
    -phi0 * phi0 * s * s / (4.0 * PI * b * radius * radius)
}

/// Drives the tube centre counterclockwise around the circle of radius
/// `radius` about the origin, maps each position through
/// [`flux::to_displacement`] and returns the signed loop phase.
///
/// The map sends the loop to a clockwise `(X₁, X₂)` circle, so the result is
/// `+|closed form|` for either sign of `Φ₀`. The tube's own `(x0, y0)` are
/// ignored.
pub fn flux_loop_phase(flux: &GaussianFlux, b: f64, radius: f64, segments: usize) -> Result<f64> {
    flux.validate()?;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidPath(format!("degenerate loop radius {radius}")));
    }
    if segments < 3 {
        return Err(Error::InvalidPath(format!("need >= 3 segments, got {segments}")));
    }
    if !b.is_finite() || b <= connection::B_GUARD {
        return Err(Error::FieldGuard(b));
    }
    if flux.phi0 == 0.0 {
        return Ok(0.0);
    }
    let mut points = Vec::with_capacity(segments);
    for k in 0..segments {
        let phi = 2.0 * PI * k as f64 / segments as f64;
        let (x1, x2) = flux::to_displacement(&flux.at(radius * phi.cos(), radius * phi.sin()), b)?;
        points.push(ParameterPoint { x1, x2, b, r: 0.0, theta: 0.0 });
    }
    let path = ParameterPath::new(points, true)?;
    Ok(abelian_phase(&path, 0)?.abelian_phase.unwrap_or_default())
}
