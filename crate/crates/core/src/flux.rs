//! Gaussian flux tube: field, nonsingular vector potential, the induced
//! displacement parameters and real-space shift, and the real-space
//! identification of the shifted ground state with a coherent state.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connection::B_GUARD;
use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};

/// Default "finitely far" factor in units of the cyclotron radius.
pub const DEFAULT_KAPPA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianFlux {
    pub x0: f64,
    pub y0: f64,
    pub phi0: f64,
    pub delta: f64,
}

impl GaussianFlux {
    pub fn new(x0: f64, y0: f64, phi0: f64, delta: f64) -> Result<Self> {
        let f = Self { x0, y0, phi0, delta };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x0, self.y0, self.phi0, self.delta].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite flux parameter in {self:?}")));
        }
        if self.delta <= 0.0 {
            return Err(Error::InvalidArgument(format!("spread must be > 0, got {}", self.delta)));
        }
        Ok(())
    }

    /// Same tube moved to `(x0, y0)`.
    pub fn at(&self, x0: f64, y0: f64) -> Self {
        Self { x0, y0, ..*self }
    }

    pub fn r0(&self) -> f64 {
        self.x0.hypot(self.y0)
    }

    /// `(e^{−u/Δ²} − 1) / u`, finite at `u = 0`.
    fn kernel(&self, u: f64) -> f64 {
        let d2 = self.delta * self.delta;
        if u < 1e-8 * d2 {
            -1.0 / d2 + u / (2.0 * d2 * d2)
        } else {
            (-u / d2).exp_m1() / u
        }
    }
}

/// `B′ = Φ₀/(πΔ²) exp(−ρ²/Δ²)`.
pub fn flux_field(flux: &GaussianFlux, x: f64, y: f64) -> f64 {
    let d2 = flux.delta * flux.delta;
    let rho2 = (x - flux.x0).powi(2) + (y - flux.y0).powi(2);
    flux.phi0 / (PI * d2) * (-rho2 / d2).exp()
}

/// Flux through the disk of radius `radius` about the tube centre.
pub fn enclosed_flux(flux: &GaussianFlux, radius: f64) -> f64 {
    -flux.phi0 * (-(radius * radius) / (flux.delta * flux.delta)).exp_m1()
}

/// Nonsingular vector potential `(A′_x, A′_y)` of the tube.
pub fn vector_potential(flux: &GaussianFlux, x: f64, y: f64) -> (f64, f64) {
    let (dx, dy) = (x - flux.x0, y - flux.y0);
    let f = flux.phi0 * flux.kernel(dx * dx + dy * dy) / (2.0 * PI);
    (f * dy, -f * dx)
}

/// `∮ A′·dl` around a circle centred on the tube, counterclockwise.
pub fn circulation(flux: &GaussianFlux, radius: f64, segments: usize) -> Result<f64> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("radius must be > 0, got {radius}")));
    }
    if segments < 3 {
        return Err(Error::InvalidArgument(format!("need >= 3 segments, got {segments}")));
    }
    let dphi = 2.0 * PI / segments as f64;
    let sum: f64 = (0..segments)
        .map(|k| {
            let phi = (k as f64 + 0.5) * dphi;
            let (s, c) = phi.sin_cos();
            let (ax, ay) = vector_potential(flux, flux.x0 + radius * c, flux.y0 + radius * s);
            radius * (-ax * s + ay * c)
        })
        .sum();
    Ok(sum * dphi)
}

fn check_inputs(flux: &GaussianFlux, b: f64) -> Result<()> {
    flux.validate()?;
    if !b.is_finite() || b <= B_GUARD {
        return Err(Error::FieldGuard(b));
    }
    if flux.x0 == 0.0 && flux.y0 == 0.0 {
        return Err(Error::InvalidArgument("flux centred at the origin".into()));
    }
    Ok(())
}

/// Displacement parameters `(X₁, X₂)` produced by the tube at `(x0, y0)`.
pub fn to_displacement(flux: &GaussianFlux, b: f64) -> Result<(f64, f64)> {
    check_inputs(flux, b)?;
    let r2 = flux.x0 * flux.x0 + flux.y0 * flux.y0;
    let k = (0.5 / b).sqrt() * flux.phi0 * flux.kernel(r2) / (2.0 * PI);
    Ok((k * flux.y0, k * flux.x0))
}

/// Real-space shift `(δx, δy)` of the ground state.
pub fn to_shift(flux: &GaussianFlux, b: f64) -> Result<(f64, f64)> {
    check_inputs(flux, b)?;
    let r2 = flux.x0 * flux.x0 + flux.y0 * flux.y0;
    let k = flux.phi0 * flux.kernel(r2) / (PI * b);
    Ok((k * flux.x0, k * flux.y0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityRatios {
    /// `Δ / √(2/B)`
    pub spread: f64,
    /// `r₀ / √(2/B)`
    pub distance: f64,
    /// `|δx/x₀| = |δy/y₀|`
    pub shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub spread_ok: bool,
    pub distance_ok: bool,
    pub shift_small: bool,
    pub kappa: f64,
    pub ratios: ValidityRatios,
}

pub fn validity(flux: &GaussianFlux, b: f64) -> ValidityReport {
    validity_with(flux, b, DEFAULT_KAPPA)
}

pub fn validity_with(flux: &GaussianFlux, b: f64, kappa: f64) -> ValidityReport {
    let radius = (2.0 / b).sqrt();
    let r2 = flux.x0 * flux.x0 + flux.y0 * flux.y0;
    let ratios = ValidityRatios {
        spread: flux.delta / radius,
        distance: r2.sqrt() / radius,
        shift: (flux.phi0 * flux.kernel(r2) / (PI * b)).abs(),
    };
    ValidityReport {
        spread_ok: ratios.spread > 1.0,
        distance_ok: ratios.distance >= kappa,
        shift_small: ratios.shift <= 0.1,
        kappa,
        ratios,
    }
}

/// `ψ₀₀(x, y) = √(B/2π) exp(−B(x² + y²)/4)`.
pub fn ground_state(b: f64, x: f64, y: f64) -> f64 {
    (b / (2.0 * PI)).sqrt() * (-b * (x * x + y * y) / 4.0).exp()
}

/// Real-space coherent state `D(α)|0,0>`:
/// `e^{−|α|²/2} exp(iα√(B/2) z) ψ₀₀`, `z = x + iy`.
///
/// Centred at `(−√(2/B) X₂, −√(2/B) X₁)`.
pub fn coherent_state(b: f64, alpha: C64, x: f64, y: f64) -> C64 {
    let z = C64::new(x, y);
    let arg = C64::new(0.0, (b / 2.0).sqrt()) * alpha * z - alpha.norm_sqr() / 2.0;
    arg.exp() * ground_state(b, x, y)
}

/// Uniform tensor-product trapezoid grid over `[−extent ℓ, extent ℓ]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureGrid {
    pub points: usize,
    /// Half-width in magnetic lengths.
    pub extent: f64,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self { points: 256, extent: 8.0 }
    }
}

impl QuadratureGrid {
    pub fn points_per_length(&self) -> f64 {
        self.points as f64 / (2.0 * self.extent)
    }

    pub fn check(&self) -> Result<()> {
        if self.extent < 8.0 {
            return Err(Error::Quadrature(format!("extent {} < 8 magnetic lengths", self.extent)));
        }
        if self.points < 2 || self.points_per_length() < 16.0 {
            return Err(Error::Quadrature(format!(
                "{:.2} points per magnetic length < 16",
                self.points_per_length()
            )));
        }
        Ok(())
    }

    /// `Σ w f(x, y)` with rows summed in parallel and reduced in order.
    pub fn integrate<F>(&self, b: f64, f: F) -> C64
    where
        F: Fn(f64, f64) -> C64 + Sync,
    {
        let ell = 1.0 / b.sqrt();
        let half = self.extent * ell;
        let n = self.points;
        let h = 2.0 * half / (n - 1) as f64;
        let weight = |k: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        let rows: Vec<C64> = (0..n)
            .into_par_iter()
            .map(|j| {
                let y = -half + j as f64 * h;
                (0..n).fold(ZERO, |acc, i| acc + f(-half + i as f64 * h, y) * weight(i)) * weight(j)
            })
            .collect();
        rows.into_iter().fold(ZERO, |acc, r| acc + r) * (h * h)
    }
}

/// `∫ conj(ψ₀₀(x + δx, y + δy)) ψ_α(x, y)` with `α` from [`to_displacement`].
pub fn shifted_ground_overlap(flux: &GaussianFlux, b: f64, grid: &QuadratureGrid) -> Result<C64> {
    grid.check()?;
    if flux.phi0 == 0.0 {
        flux.validate()?;
        if !b.is_finite() || b <= B_GUARD {
            return Err(Error::FieldGuard(b));
        }
        return Ok(grid.integrate(b, |x, y| C64::from(ground_state(b, x, y).powi(2))));
    }
    let (x1, x2) = to_displacement(flux, b)?;
    let (dx, dy) = to_shift(flux, b)?;
    let alpha = C64::new(x1, x2);
    Ok(grid.integrate(b, |x, y| coherent_state(b, alpha, x, y) * ground_state(b, x + dx, y + dy)))
}
