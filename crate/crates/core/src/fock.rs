//! Truncated two-mode Fock space for Landau levels.
//!
//! Basis states `|n, m>` carry the Landau index `n` (acted on by `b`, `b†`)
//! and the degeneracy label `m` (acted on by `a`, `a†`). Flat indices are
//! row-major in `n` then `m`.
//!
//! Units are natural throughout (`ħ = e = c = μ = 1`), so the cyclotron
//! frequency is `B` and the magnetic length is `1/√B`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, C64, Mat, Vector};

/// Default Landau-index cutoff.
pub const DEFAULT_N_MAX: usize = 40;
/// Default degeneracy-index cutoff.
pub const DEFAULT_M_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockBasis {
    n_max: usize,
    m_max: usize,
}

impl FockBasis {
    pub fn new(n_max: usize, m_max: usize) -> Result<Self> {
        if n_max < 1 || m_max < 1 {
            return Err(Error::InvalidArgument(format!(
                "cutoffs must be >= 1, got n_max = {n_max}, m_max = {m_max}"
            )));
        }
        Ok(Self { n_max, m_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn dimension(&self) -> usize {
        (self.n_max + 1) * (self.m_max + 1)
    }

    /// Size of one degenerate block (all `m` at fixed `n`).
    pub fn block_size(&self) -> usize {
        self.m_max + 1
    }

    pub fn index(&self, n: usize, m: usize) -> usize {
        debug_assert!(n <= self.n_max && m <= self.m_max);
        n * (self.m_max + 1) + m
    }

    pub fn unflat(&self, k: usize) -> (usize, usize) {
        (k / (self.m_max + 1), k % (self.m_max + 1))
    }

    pub fn states(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.dimension()).map(move |k| self.unflat(k))
    }

    /// Flat indices of states with `n <= n_hi` and `m <= m_hi`.
    pub fn window(&self, n_hi: usize, m_hi: usize) -> Vec<usize> {
        self.states()
            .enumerate()
            .filter(|(_, (n, m))| *n <= n_hi && *m <= m_hi)
            .map(|(k, _)| k)
            .collect()
    }

    /// States strictly inside both cutoffs, where ladder algebra is exact.
    pub fn interior(&self) -> Vec<usize> {
        self.window(self.n_max - 1, self.m_max - 1)
    }

    /// `|n, m>` as a state vector.
    pub fn basis_state(&self, n: usize, m: usize) -> StateVector {
        let mut v = Vector::zeros(self.dimension());
        v[self.index(n, m)] = linalg::ONE;
        StateVector::new(v)
    }
}

impl Default for FockBasis {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_N_MAX,
            m_max: DEFAULT_M_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Ladder,
    Unitary,
    Hermitian,
    AntiHermitian,
    Generic,
}

/// Dense operator on a truncated basis, tagged with its algebraic role.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub role: Role,
    pub matrix: Mat,
}

impl OperatorMatrix {
    pub fn new(role: Role, matrix: Mat) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "operators are square");
        Self { role, matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix::new(self.role, self.matrix.adjoint())
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: state.dim(),
            });
        }
        Ok(StateVector::new(&self.matrix * &state.amplitudes))
    }

    /// `max |H - H†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        linalg::max_abs_diff(&self.matrix, &self.matrix.adjoint())
    }

    /// `max |A + A†|`.
    pub fn anti_hermiticity_defect(&self) -> f64 {
        linalg::max_abs(&(&self.matrix + self.matrix.adjoint()))
    }

    pub fn unitarity_defect(&self) -> f64 {
        linalg::unitarity_defect(&self.matrix)
    }

    /// Sub-matrix on the given flat indices.
    pub fn restrict(&self, idx: &[usize]) -> Mat {
        linalg::submatrix(&self.matrix, idx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vector,
}

impl StateVector {
    pub fn new(amplitudes: Vector) -> Self {
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.amplitudes.unscale_mut(n);
        }
        self
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// Probability carried by states with Landau index above `n_cut`.
    pub fn weight_above(&self, basis: &FockBasis, n_cut: usize) -> f64 {
        basis
            .states()
            .enumerate()
            .filter(|(_, (n, _))| *n > n_cut)
            .map(|(k, _)| self.amplitudes[k].norm_sqr())
            .sum()
    }
}

/// A point in the five-dimensional parameter space `(X₁, X₂, B, r, θ)`.
///
/// `α = X₁ + iX₂` is the displacement and `β = r e^{iθ}` the squeeze.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterPoint {
    pub x1: f64,
    pub x2: f64,
    pub b: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub theta: f64,
}

impl ParameterPoint {
    pub fn new(x1: f64, x2: f64, b: f64, r: f64, theta: f64) -> Result<Self> {
        let p = Self { x1, x2, b, r, theta };
        p.validate()?;
        Ok(p)
    }

    /// Coherent-family point (`r = θ = 0`).
    pub fn coherent(x1: f64, x2: f64, b: f64) -> Result<Self> {
        Self::new(x1, x2, b, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.x1, self.x2, self.b, self.r, self.theta];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite parameter in {self:?}")));
        }
        if self.b <= 0.0 {
            return Err(Error::InvalidArgument(format!("B must be > 0, got {}", self.b)));
        }
        if self.r < 0.0 {
            return Err(Error::InvalidArgument(format!("r must be >= 0, got {}", self.r)));
        }
        Ok(())
    }

    pub fn alpha(&self) -> C64 {
        C64::new(self.x1, self.x2)
    }

    pub fn beta(&self) -> C64 {
        C64::from_polar(self.r, self.theta)
    }

    pub fn ln_b(&self) -> f64 {
        self.b.ln()
    }
}

fn ladder_on(basis: &FockBasis, on_n: bool) -> OperatorMatrix {
    let dim = basis.dimension();
    let mut m = Mat::zeros(dim, dim);
    for (col, (n, k)) in basis.states().enumerate() {
        if on_n && n > 0 {
            m[(basis.index(n - 1, k), col)] = c((n as f64).sqrt());
        }
        if !on_n && k > 0 {
            m[(basis.index(n, k - 1), col)] = c((k as f64).sqrt());
        }
    }
    OperatorMatrix::new(Role::Ladder, m)
}

/// Lowering operator between Landau levels: `b|n, m> = √n |n-1, m>`.
pub fn ladder_b(basis: &FockBasis) -> OperatorMatrix {
    ladder_on(basis, true)
}

/// Lowering operator inside a Landau level: `a|n, m> = √m |n, m-1>`.
pub fn ladder_a(basis: &FockBasis) -> OperatorMatrix {
    ladder_on(basis, false)
}

/// `max |[P, Q] - 1|` over the interior block (`n <= n_max-1`, `m <= m_max-1`).
///
/// Zero for canonical pairs; truncation artifacts live in the boundary rows
/// and are excluded.
pub fn commutator_defect(p: &OperatorMatrix, q: &OperatorMatrix, basis: &FockBasis) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            left: p.dim(),
            right: q.dim(),
        });
    }
    if p.dim() != basis.dimension() {
        return Err(Error::DimensionMismatch {
            left: p.dim(),
            right: basis.dimension(),
        });
    }
    let comm = linalg::commutator(&p.matrix, &q.matrix);
    let idx = basis.interior();
    let block = linalg::submatrix(&comm, &idx);
    let eye = Mat::identity(idx.len(), idx.len());
    Ok(linalg::max_abs_diff(&block, &eye))
}

/// `max |[P, Q]|` over the whole truncated space.
pub fn commutator_norm(p: &OperatorMatrix, q: &OperatorMatrix) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            left: p.dim(),
            right: q.dim(),
        });
    }
    Ok(linalg::max_abs(&linalg::commutator(&p.matrix, &q.matrix)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        assert_eq!(FockBasis::new(1, 1).unwrap().dimension(), 4);
        assert_eq!(FockBasis::new(40, 8).unwrap().dimension(), 369);
        assert!(matches!(FockBasis::new(0, 5), Err(Error::InvalidArgument(_))));
        assert!(FockBasis::new(3, 0).is_err());
    }

    #[test]
    fn index_round_trip() {
        let basis = FockBasis::new(7, 3).unwrap();
        for k in 0..basis.dimension() {
            let (n, m) = basis.unflat(k);
            assert_eq!(basis.index(n, m), k);
        }
        assert_eq!(basis.index(1, 0), 4);
    }

    #[allow(clippy::approx_constant)]
    #[test]
    fn b_lowers_landau_index() {
        let basis = FockBasis::new(4, 2).unwrap();
        let b = ladder_b(&basis);
        let out = b.apply(&basis.basis_state(2, 0)).unwrap();
        let expected = basis.basis_state(1, 0).amplitudes * c(2f64.sqrt());
        assert!((out.amplitudes - expected).norm() < 1e-15);
        for m in 0..=2 {
            assert_eq!(b.apply(&basis.basis_state(0, m)).unwrap().norm(), 0.0);
        }
        let e = b.matrix[(basis.index(1, 1), basis.index(2, 1))];
        assert!((e.re - 1.41421356).abs() < 1e-8 && e.im == 0.0);
    }

    #[test]
    fn a_lowers_degeneracy_index() {
        let basis = FockBasis::new(3, 4).unwrap();
        let a = ladder_a(&basis);
        let out = a.apply(&basis.basis_state(0, 3)).unwrap();
        let expected = basis.basis_state(0, 2).amplitudes * c(3f64.sqrt());
        assert!((out.amplitudes - expected).norm() < 1e-15);
        for n in 0..=3 {
            assert_eq!(a.apply(&basis.basis_state(n, 0)).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn canonical_commutators_on_interior() {
        let basis = FockBasis::new(6, 4).unwrap();
        let (a, b) = (ladder_a(&basis), ladder_b(&basis));
        assert!(commutator_defect(&b, &b.adjoint(), &basis).unwrap() < 1e-14);
        assert!(commutator_defect(&a, &a.adjoint(), &basis).unwrap() < 1e-14);
        assert_eq!(commutator_norm(&a, &b).unwrap(), 0.0);
        assert_eq!(commutator_norm(&a, &b.adjoint()).unwrap(), 0.0);
    }

    #[test]
    fn commutator_defect_is_confined_to_boundary_row() {
        let basis = FockBasis::new(5, 2).unwrap();
        let b = ladder_b(&basis);
        let comm = linalg::commutator(&b.matrix, &b.adjoint().matrix);
        for (k, (n, _)) in basis.states().enumerate() {
            let expected = if n == basis.n_max() { -(n as f64) } else { 1.0 };
            assert!((comm[(k, k)].re - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn number_operator_exact_below_cutoff() {
        let basis = FockBasis::new(6, 1).unwrap();
        let b = ladder_b(&basis);
        let num = b.adjoint().matrix * &b.matrix;
        for (k, (n, _)) in basis.states().enumerate() {
            assert!((num[(k, k)].re - n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let small = FockBasis::new(1, 1).unwrap();
        let large = FockBasis::new(2, 1).unwrap();
        let err = commutator_defect(&ladder_b(&small), &ladder_b(&large), &small).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn parameter_point_guards() {
        assert!(ParameterPoint::new(0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(ParameterPoint::new(0.0, 0.0, 1.0, -0.1, 0.0).is_err());
        assert!(ParameterPoint::new(f64::NAN, 0.0, 1.0, 0.0, 0.0).is_err());
        let p = ParameterPoint::new(0.3, -0.2, 2.0, 0.5, 1.0).unwrap();
        assert_eq!(p.alpha(), C64::new(0.3, -0.2));
        assert!((p.beta() - C64::from_polar(0.5, 1.0)).norm() < 1e-16);
    }
}
