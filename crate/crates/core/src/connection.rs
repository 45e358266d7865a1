//! Berry connections `A_λ = <n(λ), m| ∂_λ |n′(λ), m′>` of the embedded frame
//! `K(B, B_ref) D(α) S(β) |n, m>`, in closed form and by central differences.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockBasis, OperatorMatrix, ParameterPoint, Role};
use crate::linalg::{self, c, C64, Mat, I, ZERO};
use crate::operators::{self, GUARD_BAND};

/// Fields at or below this value are rejected.
pub const B_GUARD: f64 = 1e-6;
pub const DEFAULT_FD_STEP: f64 = 1e-4;
pub const MIN_FD_STEP: f64 = 1e-6;
pub const MAX_FD_STEP: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parameter {
    X1,
    X2,
    B,
    #[serde(rename = "r")]
    R,
    #[serde(rename = "theta")]
    Theta,
}

impl Parameter {
    pub const ALL: [Parameter; 5] = [
        Parameter::X1,
        Parameter::X2,
        Parameter::B,
        Parameter::R,
        Parameter::Theta,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Parameter::X1 => "X1",
            Parameter::X2 => "X2",
            Parameter::B => "B",
            Parameter::R => "r",
            Parameter::Theta => "theta",
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Parameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Parameter::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter tag {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionMatrix {
    pub parameter: Parameter,
    pub point: ParameterPoint,
    pub full: OperatorMatrix,
}

fn check_field(b: f64) -> Result<()> {
    if b <= B_GUARD {
        return Err(Error::FieldGuard(b));
    }
    Ok(())
}

fn sq(k: usize) -> f64 {
    (k as f64).sqrt()
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

// Matrix elements <i| op |j> of the single-mode ladder monomials.
fn raise(i: usize, j: usize) -> f64 {
    if i == j + 1 {
        sq(j + 1)
    } else {
        0.0
    }
}

fn lower(i: usize, j: usize) -> f64 {
    if i + 1 == j {
        sq(j)
    } else {
        0.0
    }
}

fn raise2(i: usize, j: usize) -> f64 {
    if i == j + 2 {
        sq((j + 1) * (j + 2))
    } else {
        0.0
    }
}

fn lower2(i: usize, j: usize) -> f64 {
    if i + 2 == j {
        sq(j * (j - 1))
    } else {
        0.0
    }
}

/// Closed-form entry `<n, m| ∂_λ |n′, m′>`.
pub fn entry(parameter: Parameter, point: &ParameterPoint, n: usize, m: usize, np: usize, mp: usize) -> C64 {
    let (x1, x2) = (point.x1, point.x2);
    let alpha = point.alpha();
    let (ch, sh) = (point.r.cosh(), point.r.sinh());
    let phase = C64::from_polar(1.0, point.theta);
    let dn = delta(n, np);
    let dm = delta(m, mp);
    match parameter {
        Parameter::X1 => {
            let up = (c(ch) - phase * sh) * raise(n, np);
            let down = (c(ch) - phase.conj() * sh) * lower(n, np);
            (up - down - I * (x2 * dn)) * dm
        }
        Parameter::X2 => {
            let up = (c(ch) + phase * sh) * raise(n, np);
            let down = (c(ch) + phase.conj() * sh) * lower(n, np);
            (I * (up + down) + I * (x1 * dn)) * dm
        }
        Parameter::B => {
            let ab = lower(m, mp) * lower(n, np);
            let ad_bd = raise(m, mp) * raise(n, np);
            let a_bd = lower(m, mp) * raise(n, np);
            let ad_b = raise(m, mp) * lower(n, np);
            let shift = alpha * (lower(m, mp) * dn) - alpha.conj() * (raise(m, mp) * dn);
            let squeezed = c(ch * (ab - ad_bd)) + phase * (sh * a_bd) - phase.conj() * (sh * ad_b);
            (squeezed + shift) / (2.0 * point.b)
        }
        Parameter::R => (phase * raise2(n, np) - phase.conj() * lower2(n, np)) * (0.5 * dm),
        Parameter::Theta => {
            let diag = I * (sh * sh / 2.0 * (2.0 * np as f64 + 1.0) * dn);
            let off = I * (2.0 * point.r).sinh() / 4.0 * (phase * raise2(n, np) + phase.conj() * lower2(n, np));
            (diag + off) * dm
        }
    }
}

/// Analytic connection matrix on the full truncated basis.
pub fn connection_analytic(
    basis: &FockBasis,
    parameter: Parameter,
    point: &ParameterPoint,
) -> Result<ConnectionMatrix> {
    point.validate()?;
    check_field(point.b)?;
    let dim = basis.dimension();
    let mut full = Mat::zeros(dim, dim);
    for (row, (n, m)) in basis.states().enumerate() {
        for (col, (np, mp)) in basis.states().enumerate() {
            if n.abs_diff(np) <= 2 && m.abs_diff(mp) <= 1 {
                full[(row, col)] = entry(parameter, point, n, m, np, mp);
            }
        }
    }
    Ok(ConnectionMatrix {
        parameter,
        point: *point,
        full: OperatorMatrix::new(Role::AntiHermitian, full),
    })
}

/// Frame `K(B, B_ref) D(α) S(β)` for unvalidated shifted parameters.
fn raw_frame(basis: &FockBasis, alpha: C64, beta: C64, b: f64, b_ref: f64) -> Result<Mat> {
    let mut w = operators::displacement(basis, alpha)?.matrix;
    if beta != ZERO {
        w *= operators::squeeze(basis, beta)?.matrix;
    }
    if b != b_ref {
        w = operators::b_embedding(basis, b, b_ref)?.matrix * w;
    }
    Ok(w)
}

fn shifted_frame(basis: &FockBasis, parameter: Parameter, point: &ParameterPoint, d: f64) -> Result<Mat> {
    let (mut x1, mut x2, mut b, mut r, mut theta) = (point.x1, point.x2, point.b, point.r, point.theta);
    match parameter {
        Parameter::X1 => x1 += d,
        Parameter::X2 => x2 += d,
        Parameter::B => b += d,
        Parameter::R => r += d,
        Parameter::Theta => theta += d,
    }
    raw_frame(basis, C64::new(x1, x2), C64::from_polar(r, theta), b, point.b)
}

pub fn check_step(h: f64) -> Result<()> {
    if !h.is_finite() || h < MIN_FD_STEP {
        return Err(Error::FiniteDifferenceStep {
            step: h,
            reason: format!("below {MIN_FD_STEP:e}; cancellation dominates"),
        });
    }
    if h > MAX_FD_STEP {
        return Err(Error::FiniteDifferenceStep {
            step: h,
            reason: format!("above {MAX_FD_STEP:e}; truncation error dominates"),
        });
    }
    Ok(())
}

/// Central-difference connection `W(λ)† [W(λ+h) − W(λ−h)] / 2h`.
///
/// Only the block returned by [`oracle_window`] is free of truncation
/// artifacts.
pub fn connection_numeric(
    basis: &FockBasis,
    parameter: Parameter,
    point: &ParameterPoint,
    h: f64,
) -> Result<ConnectionMatrix> {
    point.validate()?;
    check_field(point.b)?;
    check_step(h)?;
    if parameter == Parameter::B && point.b - h <= 0.0 {
        return Err(Error::FiniteDifferenceStep {
            step: h,
            reason: format!("B - h must stay positive at B = {}", point.b),
        });
    }
    let w = shifted_frame(basis, parameter, point, 0.0)?;
    let wp = shifted_frame(basis, parameter, point, h)?;
    let wm = shifted_frame(basis, parameter, point, -h)?;
    let full = w.adjoint() * (wp - wm) * c(0.5 / h);
    Ok(ConnectionMatrix {
        parameter,
        point: *point,
        full: OperatorMatrix::new(Role::AntiHermitian, full),
    })
}

/// Basis indices whose frame columns stay clear of the truncation edge for
/// every shifted frame a central difference of size `h_max` touches.
pub fn oracle_window(basis: &FockBasis, point: &ParameterPoint, h_max: f64) -> Result<Vec<usize>> {
    let mut w_min = usize::MAX;
    for parameter in Parameter::ALL {
        for d in [-h_max, h_max] {
            let frame = shifted_frame(basis, parameter, point, d)?;
            let w = operators::occupied_window(&frame, basis).ok_or(Error::GuardBand {
                weight: 1.0,
                above: basis.n_max().saturating_sub(GUARD_BAND),
                limit: operators::OCCUPANCY_TOL,
            })?;
            w_min = w_min.min(w);
        }
    }
    Ok(basis.window(w_min, basis.m_max()))
}

/// `max |analytic − numeric|` restricted to `window`.
pub fn window_error(analytic: &ConnectionMatrix, numeric: &ConnectionMatrix, window: &[usize]) -> f64 {
    linalg::max_abs_diff(&analytic.full.restrict(window), &numeric.full.restrict(window))
}

/// The `(m_max+1) × (m_max+1)` block at `n = n′`.
pub fn degenerate_block(conn: &ConnectionMatrix, basis: &FockBasis, n: usize) -> Result<OperatorMatrix> {
    if conn.full.dim() != basis.dimension() {
        return Err(Error::DimensionMismatch {
            left: conn.full.dim(),
            right: basis.dimension(),
        });
    }
    check_level(basis, n)?;
    let idx: Vec<usize> = (0..=basis.m_max()).map(|m| basis.index(n, m)).collect();
    Ok(OperatorMatrix::new(Role::AntiHermitian, conn.full.restrict(&idx)))
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

/// Degenerate block at level `n` straight from [`entry`], without building
/// the full matrix.
pub fn degenerate_block_analytic(
    parameter: Parameter,
    point: &ParameterPoint,
    n: usize,
    m_max: usize,
) -> Result<Mat> {
    point.validate()?;
    check_field(point.b)?;
    Ok(Mat::from_fn(m_max + 1, m_max + 1, |m, mp| entry(parameter, point, n, m, n, mp)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{ladder_a, ladder_b};

    fn basis(n_max: usize, m_max: usize) -> FockBasis {
        FockBasis::new(n_max, m_max).unwrap()
    }

    fn close(z: C64, w: C64, tol: f64) -> bool {
        (z - w).norm() < tol
    }

    #[test]
    fn parameter_tags() {
        assert_eq!("theta".parse::<Parameter>().unwrap(), Parameter::Theta);
        assert_eq!("x2".parse::<Parameter>().unwrap(), Parameter::X2);
        assert!("phi".parse::<Parameter>().is_err());
        let json = serde_json::to_string(&Parameter::R).unwrap();
        assert_eq!(json, "\"r\"");
    }

    #[test]
    fn x1_diagonal() {
        let bs = basis(10, 2);
        let p = ParameterPoint::coherent(0.0, 0.7, 1.0).unwrap();
        let a = connection_analytic(&bs, Parameter::X1, &p).unwrap();
        for k in 0..bs.dimension() {
            assert_eq!(a.full.matrix[(k, k)], C64::new(0.0, -0.7));
        }
    }

    #[test]
    fn b_block_entry() {
        let p = ParameterPoint::coherent(0.0, 0.5, 2.0).unwrap();
        let blk = degenerate_block_analytic(Parameter::B, &p, 0, 1).unwrap();
        assert!(close(blk[(0, 1)], C64::new(0.0, 0.125), 1e-15));
    }

    #[allow(clippy::approx_constant)]
    #[test]
    fn r_and_theta_entries() {
        let p = ParameterPoint::new(0.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        let z = entry(Parameter::R, &p, 0, 0, 2, 0);
        assert!(close(z, c(-0.5 * 2f64.sqrt()), 1e-15));
        assert!((z.re + 0.70711).abs() < 1e-5);
        let p = ParameterPoint::new(0.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let z = entry(Parameter::Theta, &p, 0, 0, 0, 0);
        assert!(close(z, C64::new(0.0, 1f64.sinh().powi(2) / 2.0), 1e-15));
        assert!((z.im - 0.6905489).abs() < 1e-7);
    }

    #[test]
    fn degenerate_blocks() {
        let bs = basis(20, 1);
        let p = ParameterPoint::coherent(0.0, 1.0, 1.0).unwrap();
        let conn = connection_analytic(&bs, Parameter::B, &p).unwrap();
        let blk = degenerate_block(&conn, &bs, 3).unwrap();
        let expected = Mat::from_row_slice(2, 2, &[ZERO, c(1.0), c(1.0), ZERO]) * C64::new(0.0, 0.5);
        assert!(linalg::max_abs_diff(&blk.matrix, &expected) < 1e-15);

        let x1 = connection_analytic(&bs, Parameter::X1, &ParameterPoint::coherent(0.2, 0.7, 1.0).unwrap()).unwrap();
        let blk = degenerate_block(&x1, &bs, 2).unwrap();
        let eye = Mat::identity(2, 2) * C64::new(0.0, -0.7);
        assert!(linalg::max_abs_diff(&blk.matrix, &eye) < 1e-15);

        let zero = connection_analytic(&bs, Parameter::B, &ParameterPoint::coherent(0.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(linalg::max_abs(&degenerate_block(&zero, &bs, 0).unwrap().matrix), 0.0);
        assert!(degenerate_block(&conn, &bs, 16).is_err());
    }

    #[test]
    fn analytic_is_anti_hermitian() {
        let bs = basis(12, 3);
        let p = ParameterPoint::new(0.4, -0.3, 1.6, 0.5, 2.1).unwrap();
        for par in Parameter::ALL {
            let a = connection_analytic(&bs, par, &p).unwrap();
            assert!(a.full.anti_hermiticity_defect() < 1e-12, "{par}");
        }
    }

    #[test]
    fn analytic_matches_operator_algebra() {
        let bs = basis(10, 3);
        let p = ParameterPoint::new(0.4, -0.3, 1.6, 0.5, 2.1).unwrap();
        let b = ladder_b(&bs).matrix;
        let a = ladder_a(&bs).matrix;
        let (bd, ad) = (b.adjoint(), a.adjoint());
        let (ch, sh) = (p.r.cosh(), p.r.sinh());
        let e = C64::from_polar(1.0, p.theta);
        let alpha = p.alpha();
        let eye = Mat::identity(bs.dimension(), bs.dimension());
        let b_conn = (&a * &b * c(ch) - &ad * &bd * c(ch) + &a * &bd * (e * sh) - &ad * &b * (e.conj() * sh)
            + &a * alpha
            - &ad * alpha.conj())
            * c(0.5 / p.b);
        let r_conn = (&bd * &bd * e - &b * &b * e.conj()) * c(0.5);
        let n_op = &bd * &b;
        let th_conn = (n_op * c(2.0) + &eye) * (I * sh * sh / 2.0)
            + (&bd * &bd * e + &b * &b * e.conj()) * (I * (2.0 * p.r).sinh() / 4.0);
        for (par, op) in [(Parameter::B, b_conn), (Parameter::R, r_conn), (Parameter::Theta, th_conn)] {
            let conn = connection_analytic(&bs, par, &p).unwrap();
            assert!(linalg::max_abs_diff(&conn.full.matrix, &op) < 1e-14, "{par}");
        }
    }

    #[test]
    fn squeezed_b_connection_reduces_at_zero_r() {
        let p = ParameterPoint::new(0.3, 0.9, 1.4, 0.0, 0.7).unwrap();
        let q = ParameterPoint::coherent(0.3, 0.9, 1.4).unwrap();
        for n in 0..6 {
            for np in 0..6 {
                for m in 0..3 {
                    for mp in 0..3 {
                        let z = entry(Parameter::B, &p, n, m, np, mp);
                        let w = entry(Parameter::B, &q, n, m, np, mp);
                        assert_eq!(z, w);
                    }
                }
            }
        }
    }

    #[test]
    fn numeric_x1_matches() {
        let bs = basis(30, 2);
        let p = ParameterPoint::coherent(0.0, 0.7, 1.0).unwrap();
        let num = connection_numeric(&bs, Parameter::X1, &p, 1e-4).unwrap();
        let ana = connection_analytic(&bs, Parameter::X1, &p).unwrap();
        let win = oracle_window(&bs, &p, 1e-4).unwrap();
        for &k in &win {
            assert!(close(num.full.matrix[(k, k)], C64::new(0.0, -0.7), 1e-7));
        }
        let err = window_error(&ana, &num, &win);
        assert!(err < 1e-6, "{err} on {} states", win.len());
    }

    #[test]
    fn numeric_b_matches() {
        let bs = basis(30, 3);
        let p = ParameterPoint::coherent(0.0, 0.5, 2.0).unwrap();
        let num = connection_numeric(&bs, Parameter::B, &p, 1e-4).unwrap();
        let ana = connection_analytic(&bs, Parameter::B, &p).unwrap();
        let win = oracle_window(&bs, &p, 1e-4).unwrap();
        assert!(window_error(&ana, &num, &win) < 1e-6);
    }

    #[test]
    fn numeric_matches_all_parameters_squeezed() {
        let bs = basis(80, 2);
        let p = ParameterPoint::new(0.6, -0.4, 1.3, 0.4, 0.9).unwrap();
        let win = oracle_window(&bs, &p, 1e-3).unwrap();
        assert!(win.len() >= 3 * 6, "{}", win.len());
        for par in Parameter::ALL {
            let ana = connection_analytic(&bs, par, &p).unwrap();
            let e1 = window_error(&ana, &connection_numeric(&bs, par, &p, 1e-3).unwrap(), &win);
            let e2 = window_error(&ana, &connection_numeric(&bs, par, &p, 5e-4).unwrap(), &win);
            assert!(e1 < 1e3 * 1e-6, "{par}: {e1}");
            let ratio = e1 / e2;
            assert!((3.5..=4.5).contains(&ratio), "{par}: ratio {ratio}");
        }
    }

    #[test]
    fn step_and_field_guards() {
        let bs = basis(20, 1);
        let p = ParameterPoint::coherent(0.1, 0.1, 1.0).unwrap();
        assert!(matches!(
            connection_numeric(&bs, Parameter::X1, &p, 1e-8),
            Err(Error::FiniteDifferenceStep { .. })
        ));
        assert!(matches!(
            connection_numeric(&bs, Parameter::X1, &p, 0.1),
            Err(Error::FiniteDifferenceStep { .. })
        ));
        let tiny = ParameterPoint::coherent(0.1, 0.1, 1e-7).unwrap();
        assert!(matches!(
            connection_analytic(&bs, Parameter::B, &tiny),
            Err(Error::FieldGuard(_))
        ));
        let small = ParameterPoint::coherent(0.1, 0.1, 5e-3).unwrap();
        assert!(connection_numeric(&bs, Parameter::B, &small, 1e-2).is_err());
    }
}
