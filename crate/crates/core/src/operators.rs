//! Displacement, squeeze and field-rescaling unitaries, and the Hamiltonian
//! forms of the coherent and squeezed Landau problems.
//!
//! Conventions:
//! - `D(α) = exp(α b† − α* b)`
//! - `S(β) = exp(½ β b†² − ½ β* b²)`
//! - `K(B, B_ref) = exp(½ ln(B/B_ref) (a b − a† b†))`, so that
//!   `dK/dB` at `B = B_ref` is `(1/2B)(a b − a† b†)`.
//!
//! All three are exponentials of exactly anti-Hermitian truncated generators
//! and are therefore exactly unitary on the truncated space; their agreement
//! with the infinite-dimensional operators is controlled by the cutoff checks
//! below and measured with [`occupied_window`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{ladder_a, ladder_b, FockBasis, OperatorMatrix, ParameterPoint, Role, StateVector};
use crate::linalg::{self, c, C64, Mat};

/// Levels at the top of the Landau ladder treated as untrusted.
pub const GUARD_BAND: usize = 5;
/// Maximum probability allowed inside the guard band for a constructed eigenstate.
pub const GUARD_WEIGHT: f64 = 1e-10;
/// Tail weight below which a column counts as unaffected by truncation when
/// comparing two truncated representations of the same operator.
pub const OCCUPANCY_TOL: f64 = 1e-14;

/// Smallest `n_max` accepted for a displacement by `α`.
pub fn required_n_max_displacement(alpha: C64) -> usize {
    let a = alpha.norm();
    (a * a + 6.0 * a + 10.0).ceil() as usize
}

/// Smallest `n_max` accepted for a squeeze of magnitude `r`.
///
/// The squeezed vacuum has weight `~tanh(r)^n` at level `n`; the cutoff must
/// push that below `1e-10` before the guard band starts.
pub fn required_n_max_squeeze(r: f64) -> usize {
    if r == 0.0 {
        return 0;
    }
    let decay = -r.tanh().ln();
    (10.0 * std::f64::consts::LN_10 / decay).ceil() as usize + GUARD_BAND
}

fn check_cutoff(basis: &FockBasis, what: &str, required: usize) -> Result<()> {
    if basis.n_max() < required {
        return Err(Error::TruncationRisk {
            what: what.to_string(),
            required,
            actual: basis.n_max(),
        });
    }
    Ok(())
}

/// `α b† − α* b` on the full basis.
pub fn displacement_generator(basis: &FockBasis, alpha: C64) -> Mat {
    let b = ladder_b(basis).matrix;
    b.adjoint() * alpha - b * alpha.conj()
}

/// `½ β b†² − ½ β* b²` on the full basis.
pub fn squeeze_generator(basis: &FockBasis, beta: C64) -> Mat {
    let b = ladder_b(basis).matrix;
    let b2 = &b * &b;
    b2.adjoint() * (beta * 0.5) - b2 * (beta.conj() * 0.5)
}

/// `a b − a† b†` on the full basis (real antisymmetric).
pub fn field_generator(basis: &FockBasis) -> Mat {
    let a = ladder_a(basis).matrix;
    let b = ladder_b(basis).matrix;
    let ab = &a * &b;
    &ab - ab.adjoint()
}

pub fn displacement(basis: &FockBasis, alpha: C64) -> Result<OperatorMatrix> {
    check_cutoff(basis, "displacement", required_n_max_displacement(alpha))?;
    let g = displacement_generator(basis, alpha);
    Ok(OperatorMatrix::new(Role::Unitary, linalg::expm_blockwise(&g)))
}

pub fn squeeze(basis: &FockBasis, beta: C64) -> Result<OperatorMatrix> {
    check_cutoff(basis, "squeeze", required_n_max_squeeze(beta.norm()))?;
    let g = squeeze_generator(basis, beta);
    Ok(OperatorMatrix::new(Role::Unitary, linalg::expm_blockwise(&g)))
}

/// Field-rescaling embedding `K(B, B_ref)`.
pub fn b_embedding(basis: &FockBasis, b: f64, b_ref: f64) -> Result<OperatorMatrix> {
    if !(b > 0.0 && b_ref > 0.0) || !b.is_finite() || !b_ref.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "fields must be positive, got B = {b}, B_ref = {b_ref}"
        )));
    }
    let s = 0.5 * (b / b_ref).ln();
    let g = field_generator(basis) * c(s);
    Ok(OperatorMatrix::new(Role::Unitary, linalg::expm_blockwise(&g)))
}

/// `dK/dB` at `B = B_ref`, i.e. `(1/2B)(a b − a† b†)`.
pub fn b_embedding_derivative(basis: &FockBasis, b: f64) -> Result<OperatorMatrix> {
    if !(b > 0.0) {
        return Err(Error::InvalidArgument(format!("field must be positive, got {b}")));
    }
    Ok(OperatorMatrix::new(
        Role::AntiHermitian,
        field_generator(basis) * c(0.5 / b),
    ))
}

/// The frame `K(B, B_ref) D(α) S(β)`; column `(n, m)` is the embedded state
/// `|n(α, β), m>`.
pub fn state_frame(basis: &FockBasis, point: &ParameterPoint, b_ref: f64) -> Result<Mat> {
    point.validate()?;
    let d = displacement(basis, point.alpha())?;
    let mut frame = if point.r == 0.0 {
        d.matrix
    } else {
        d.matrix * squeeze(basis, point.beta())?.matrix
    };
    if point.b != b_ref {
        frame = b_embedding(basis, point.b, b_ref)?.matrix * frame;
    }
    Ok(frame)
}

/// Largest `n_w` such that every column of `u` belonging to a state with
/// `n <= n_w` carries at most [`OCCUPANCY_TOL`] probability above
/// `n_max − GUARD_BAND`. `None` when even the `n = 0` columns leak.
pub fn occupied_window(u: &Mat, basis: &FockBasis) -> Option<usize> {
    let cut = basis.n_max().saturating_sub(GUARD_BAND);
    let mut window = None;
    for n in 0..=basis.n_max() {
        let leaks = (0..=basis.m_max()).any(|m| {
            let col = basis.index(n, m);
            let tail: f64 = basis
                .states()
                .enumerate()
                .filter(|(_, (k, _))| *k > cut)
                .map(|(row, _)| u[(row, col)].norm_sqr())
                .sum();
            tail > OCCUPANCY_TOL
        });
        if leaks {
            break;
        }
        window = Some(n);
    }
    window
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    /// `B (b†b + ½)`
    H0,
    /// `D(α) H₀ D†(α)`
    CoherentFock,
    /// `½[(π_x − √(2B) X₁)² + (π_y + √(2B) X₂)²]`
    CoherentPi,
    /// `D(α) S(β) H₀ S†(β) D†(α)`
    SqueezedFock,
    /// anisotropic kinetic form in the shifted `π′` operators
    SqueezedPi,
}

impl HamiltonianKind {
    pub const ALL: [HamiltonianKind; 5] = [
        HamiltonianKind::H0,
        HamiltonianKind::CoherentFock,
        HamiltonianKind::CoherentPi,
        HamiltonianKind::SqueezedFock,
        HamiltonianKind::SqueezedPi,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianForm {
    pub kind: HamiltonianKind,
    pub point: ParameterPoint,
    pub matrix: OperatorMatrix,
}

/// `B (b†b + ½)` on the full basis (diagonal).
pub fn h0_matrix(basis: &FockBasis, b: f64) -> Mat {
    let dim = basis.dimension();
    let mut h = Mat::zeros(dim, dim);
    for (k, (n, _)) in basis.states().enumerate() {
        h[(k, k)] = c(b * (n as f64 + 0.5));
    }
    h
}

/// Kinetic momenta `(π_x, π_y)` at field `B`, from `b = π₋/√(2B)`.
pub fn kinetic_momenta(basis: &FockBasis, b_field: f64) -> (Mat, Mat) {
    let b = ladder_b(basis).matrix;
    let bd = b.adjoint();
    let k = (b_field / 2.0).sqrt();
    let pi_x = (&b + &bd) * c(k);
    let pi_y = (&bd - &b) * C64::new(0.0, -k);
    (pi_x, pi_y)
}

/// Shifted momenta `π′_x = π_x − √(2B) X₁`, `π′_y = π_y + √(2B) X₂`.
fn shifted_momenta(basis: &FockBasis, point: &ParameterPoint) -> (Mat, Mat) {
    let (px, py) = kinetic_momenta(basis, point.b);
    let shift = (2.0 * point.b).sqrt();
    let eye = Mat::identity(basis.dimension(), basis.dimension());
    (px - &eye * c(shift * point.x1), py + &eye * c(shift * point.x2))
}

pub fn hamiltonian(
    basis: &FockBasis,
    kind: HamiltonianKind,
    point: &ParameterPoint,
) -> Result<HamiltonianForm> {
    point.validate()?;
    let displaced = point.x1 != 0.0 || point.x2 != 0.0;
    let squeezed = point.r != 0.0;
    let matrix = match kind {
        HamiltonianKind::H0 => {
            if displaced || squeezed {
                return Err(Error::InvalidArgument(
                    "h0 takes no displacement or squeeze".into(),
                ));
            }
            h0_matrix(basis, point.b)
        }
        HamiltonianKind::CoherentFock | HamiltonianKind::CoherentPi if squeezed => {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} requires r = 0, got r = {}",
                point.r
            )));
        }
        HamiltonianKind::CoherentFock => {
            let d = displacement(basis, point.alpha())?.matrix;
            &d * h0_matrix(basis, point.b) * d.adjoint()
        }
        HamiltonianKind::CoherentPi => {
            let (px, py) = shifted_momenta(basis, point);
            (&px * &px + &py * &py) * c(0.5)
        }
        HamiltonianKind::SqueezedFock => {
            let u = displacement(basis, point.alpha())?.matrix * squeeze(basis, point.beta())?.matrix;
            &u * h0_matrix(basis, point.b) * u.adjoint()
        }
        HamiltonianKind::SqueezedPi => {
            let (px, py) = shifted_momenta(basis, point);
            // principal axes rotated by −θ/2
            let (s, co) = (point.theta / 2.0).sin_cos();
            let u = &px * c(co) - &py * c(s);
            let v = &px * c(s) + &py * c(co);
            let squeeze_u = (-2.0 * point.r).exp();
            let squeeze_v = (2.0 * point.r).exp();
            (&u * &u * c(squeeze_u) + &v * &v * c(squeeze_v)) * c(0.5)
        }
    };
    Ok(HamiltonianForm {
        kind,
        point: *point,
        matrix: OperatorMatrix::new(Role::Hermitian, matrix),
    })
}

/// The squeezed coherent state `D(α) S(β) |n, m>`.
pub fn eigenstate(basis: &FockBasis, point: &ParameterPoint, n: usize, m: usize) -> Result<StateVector> {
    point.validate()?;
    let cut = basis.n_max().saturating_sub(GUARD_BAND);
    if n > cut || m > basis.m_max() {
        return Err(Error::GuardBand {
            weight: 1.0,
            above: cut,
            limit: GUARD_WEIGHT,
        });
    }
    let reference = basis.basis_state(n, m);
    let mut state = if point.r == 0.0 {
        reference
    } else {
        squeeze(basis, point.beta())?.apply(&reference)?
    };
    if point.alpha() != linalg::ZERO {
        state = displacement(basis, point.alpha())?.apply(&state)?;
    }
    let weight = state.weight_above(basis, cut);
    if weight > GUARD_WEIGHT {
        return Err(Error::GuardBand {
            weight,
            above: cut,
            limit: GUARD_WEIGHT,
        });
    }
    Ok(state)
}
