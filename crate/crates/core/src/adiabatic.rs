//! Time-dependent Schrödinger evolution along slow parameter schedules:
//! geometric phases, degenerate-population drift and the holonomy of an
//! evolved degenerate frame.
//!
//! States live in the fixed representation of the field `B_ref` at the start
//! of the schedule. The Hamiltonian is applied as `K(s) H_π(λ) K(s)†` with
//! `s = ½ ln(B/B_ref)`, where `H_π` is the squeezed kinetic form, a band
//! operator in `n` that acts identically on every `m`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockBasis, OperatorMatrix, ParameterPoint, Role, StateVector};
use crate::holonomy::ParameterPath;
use crate::linalg::{self, c, C64, Mat, Vector, ZERO};
use crate::operators::{self, GUARD_BAND, GUARD_WEIGHT};

/// Integrator stability target `dt ‖H‖ ≤ STEP_SAFETY`.
pub const STEP_SAFETY: f64 = 0.05;
/// Runs abort when the norm drifts further than this.
pub const NORM_ABORT: f64 = 1e-6;
pub const MONITOR_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeProfile {
    Linear,
    Smoothstep,
}

impl TimeProfile {
    /// Arclength fraction reached at time fraction `tau`.
    pub fn fraction(self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, 1.0);
        match self {
            TimeProfile::Linear => tau,
            TimeProfile::Smoothstep => tau * tau * (3.0 - 2.0 * tau),
        }
    }

    /// `d fraction / d tau`.
    pub fn rate(self, tau: f64) -> f64 {
        if !(0.0..=1.0).contains(&tau) {
            return 0.0;
        }
        match self {
            TimeProfile::Linear => 1.0,
            TimeProfile::Smoothstep => 6.0 * tau * (1.0 - tau),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Route {
    Fixed(ParameterPoint),
    Path {
        path: ParameterPath,
        /// cumulative arclength at each vertex, closing vertex included
        cumulative: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    route: Route,
    pub total_time: f64,
    pub time_profile: TimeProfile,
    /// Fixed step; `None` picks `min(T/10⁴, 0.05/‖H‖_max)`.
    pub dt: Option<f64>,
    /// Landau level carried along the path.
    pub level: usize,
}

fn coords(p: &ParameterPoint) -> [f64; 5] {
    [p.x1, p.x2, p.b.ln(), p.r, p.theta]
}

fn distance(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (v - u) * (v - u)).sum::<f64>().sqrt()
}

impl Schedule {
    pub fn new(path: ParameterPath, total_time: f64, time_profile: TimeProfile, level: usize) -> Result<Self> {
        check_time(total_time)?;
        let mut vertices: Vec<[f64; 5]> = path.points().iter().map(coords).collect();
        if path.is_closed() {
            vertices.push(vertices[0]);
        }
        let mut cumulative = vec![0.0];
        for w in vertices.windows(2) {
            cumulative.push(cumulative.last().unwrap() + distance(&w[0], &w[1]));
        }
        Ok(Self {
            route: Route::Path { path, cumulative },
            total_time,
            time_profile,
            dt: None,
            level,
        })
    }

    /// Parameters held at `point` for the whole run.
    pub fn stationary(point: ParameterPoint, total_time: f64, level: usize) -> Result<Self> {
        check_time(total_time)?;
        point.validate()?;
        Ok(Self {
            route: Route::Fixed(point),
            total_time,
            time_profile: TimeProfile::Linear,
            dt: None,
            level,
        })
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || dt > self.total_time {
            return Err(Error::InvalidArgument(format!("dt must lie in (0, T], got {dt}")));
        }
        self.dt = Some(dt);
        Ok(self)
    }

    pub fn is_closed_loop(&self) -> bool {
        match &self.route {
            Route::Fixed(_) => true,
            Route::Path { path, .. } => path.is_closed(),
        }
    }

    /// Edge endpoints, edge length and local position for arclength fraction `u`.
    fn locate(path: &ParameterPath, cumulative: &[f64], u: f64) -> ([f64; 5], [f64; 5], f64, f64) {
        let pts = path.points();
        let total = *cumulative.last().unwrap();
        let target = u.clamp(0.0, 1.0) * total;
        let k = cumulative.partition_point(|&s| s <= target).clamp(1, cumulative.len() - 1) - 1;
        let a = coords(&pts[k]);
        let b = coords(&pts[(k + 1) % pts.len()]);
        let len = cumulative[k + 1] - cumulative[k];
        let t = if len > 0.0 { (target - cumulative[k]) / len } else { 0.0 };
        (a, b, len, t)
    }

    /// Parameters at arclength fraction `u`.
    pub fn point_at_fraction(&self, u: f64) -> ParameterPoint {
        match &self.route {
            Route::Fixed(p) => *p,
            Route::Path { path, cumulative } => {
                let (a, b, _, t) = Self::locate(path, cumulative, u);
                let q: [f64; 5] = std::array::from_fn(|j| a[j] + (b[j] - a[j]) * t);
                ParameterPoint {
                    x1: q[0],
                    x2: q[1],
                    b: q[2].exp(),
                    r: q[3],
                    theta: q[4],
                }
            }
        }
    }

    pub fn point_at(&self, t: f64) -> ParameterPoint {
        self.point_at_fraction(self.time_profile.fraction(t / self.total_time))
    }

    /// `d ln B / dt` at time `t`.
    pub fn log_field_rate(&self, t: f64) -> f64 {
        match &self.route {
            Route::Fixed(_) => 0.0,
            Route::Path { path, cumulative } => {
                let tau = t / self.total_time;
                let (a, b, len, _) = Self::locate(path, cumulative, self.time_profile.fraction(tau));
                if len == 0.0 {
                    return 0.0;
                }
                let total = *cumulative.last().unwrap();
                (b[2] - a[2]) / len * total * self.time_profile.rate(tau) / self.total_time
            }
        }
    }
}

fn check_time(total_time: f64) -> Result<()> {
    if !(total_time > 0.0) || !total_time.is_finite() {
        return Err(Error::InvalidArgument(format!("total time must be > 0, got {total_time}")));
    }
    Ok(())
}

/// Pentadiagonal operator in `n` (offsets −2..=2), applied to every `m`.
#[derive(Debug, Clone)]
struct Band {
    /// Entry `(row, row + off)` lives in `rows[row][off + 2]`.
    rows: Vec<[C64; 5]>,
}

impl Band {
    fn zeros(len: usize) -> Self {
        Self { rows: vec![[ZERO; 5]; len] }
    }

    fn set(&mut self, row: usize, off: isize, v: C64) {
        self.rows[row][(off + 2) as usize] = v;
    }

    fn apply(&self, mw: usize, x: &[C64], y: &mut [C64]) {
        let len = self.rows.len();
        for (n, coeffs) in self.rows.iter().enumerate() {
            let row = &mut y[n * mw..(n + 1) * mw];
            row.iter_mut().for_each(|v| *v = ZERO);
            let lo = n.saturating_sub(2);
            let hi = (n + 2).min(len - 1);
            for np in lo..=hi {
                let w = coeffs[np + 2 - n];
                if w == ZERO {
                    continue;
                }
                let src = &x[np * mw..(np + 1) * mw];
                for (r, s) in row.iter_mut().zip(src) {
                    *r += w * s;
                }
            }
        }
    }
}

/// Fixed band operators `p_x², p_y², {p_x, p_y}, p_x, p_y, 1` at unit field.
#[derive(Debug, Clone)]
struct KineticOps {
    ops: [Band; 6],
    /// Nonzero `(op, row, slot, value)` entries of `ops`.
    entries: Vec<(usize, usize, usize, C64)>,
}

impl KineticOps {
    fn new(n_max: usize) -> Self {
        let len = n_max + 1;
        let s = |k: usize| (k as f64).sqrt();
        let [mut pxx, mut pyy, mut pxy, mut px, mut py, mut one] = std::array::from_fn(|_| Band::zeros(len));
        let r2 = 0.5f64.sqrt();
        for n in 0..len {
            // <n|b²|n+2> = √((n+1)(n+2)), <n|b†²|n−2> = √(n(n−1))
            let up2 = if n + 2 < len { s((n + 1) * (n + 2)) } else { 0.0 };
            let dn2 = if n >= 2 { s(n * (n - 1)) } else { 0.0 };
            let up1 = if n + 1 < len { s(n + 1) } else { 0.0 };
            let dn1 = if n >= 1 { s(n) } else { 0.0 };
            let nd = n as f64;
            // p_x² = (b² + b†² + 2N + 1)/2, p_y² = −(b² + b†² − 2N − 1)/2,
            // {p_x, p_y} = i(b² − b†²)
            pxx.set(n, 0, c(nd + 0.5));
            pyy.set(n, 0, c(nd + 0.5));
            if up2 != 0.0 {
                pxx.set(n, 2, c(0.5 * up2));
                pyy.set(n, 2, c(-0.5 * up2));
                pxy.set(n, 2, C64::new(0.0, up2));
            }
            if dn2 != 0.0 {
                pxx.set(n, -2, c(0.5 * dn2));
                pyy.set(n, -2, c(-0.5 * dn2));
                pxy.set(n, -2, C64::new(0.0, -dn2));
            }
            // p_x = (b + b†)/√2, p_y = i(b − b†)/√2
            if up1 != 0.0 {
                px.set(n, 1, c(r2 * up1));
                py.set(n, 1, C64::new(0.0, r2 * up1));
            }
            if dn1 != 0.0 {
                px.set(n, -1, c(r2 * dn1));
                py.set(n, -1, C64::new(0.0, -r2 * dn1));
            }
            one.set(n, 0, c(1.0));
        }
        let ops = [pxx, pyy, pxy, px, py, one];
        let mut entries = Vec::new();
        for (k, op) in ops.iter().enumerate() {
            for (n, row) in op.rows.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    if *v != ZERO {
                        entries.push((k, n, j, *v));
                    }
                }
            }
        }
        Self { ops, entries }
    }

    /// `H_π(λ) = (B/2)[A_xx q_x² + A_yy q_y² + A_xy {q_x, q_y}]` with
    /// `q_x = p_x − √2 X₁`, `q_y = p_y + √2 X₂`.
    fn hamiltonian_into(&self, p: &ParameterPoint, out: &mut Band) {
        let (s, co) = (p.theta / 2.0).sin_cos();
        let (em, ep) = ((-2.0 * p.r).exp(), (2.0 * p.r).exp());
        let axx = em * co * co + ep * s * s;
        let ayy = em * s * s + ep * co * co;
        let axy = co * s * (ep - em);
        let r8 = 8f64.sqrt();
        let (x1, x2) = (p.x1, p.x2);
        let half_b = 0.5 * p.b;
        let k = 2.0 * x1 * x1 * axx + 2.0 * x2 * x2 * ayy - 4.0 * x1 * x2 * axy;
        let w = [
            half_b * axx,
            half_b * ayy,
            half_b * axy,
            half_b * r8 * (x2 * axy - x1 * axx),
            half_b * r8 * (x2 * ayy - x1 * axy),
            half_b * k,
        ];
        for row in out.rows.iter_mut() {
            *row = [ZERO; 5];
        }
        for &(op, n, j, v) in &self.entries {
            out.rows[n][j] += v * w[op];
        }
    }

    fn hamiltonian(&self, p: &ParameterPoint) -> Band {
        let mut h = Band::zeros(self.ops[5].rows.len());
        self.hamiltonian_into(p, &mut h);
        h
    }
}

#[derive(Debug, Clone)]
struct Sector {
    idx: Vec<usize>,
    vals: Vec<f64>,
    /// Eigenvectors, row-major `idx.len() × idx.len()`.
    vecs: Vec<C64>,
    /// Offset of this sector in a flat phase buffer.
    offset: usize,
}

/// `K(s) = exp(s (ab − a†b†))` through per-sector spectral decompositions of
/// the Hermitian `i(ab − a†b†)`; sectors are the diagonals `n − m = const`.
#[derive(Debug, Clone)]
struct FieldRescaling {
    sectors: Vec<Sector>,
    phase_len: usize,
    max_len: usize,
}

impl FieldRescaling {
    fn new(basis: &FockBasis) -> Self {
        let g = operators::field_generator(basis) * C64::new(0.0, 1.0);
        let mut offset = 0;
        let mut max_len = 1;
        let sectors = linalg::components(&g)
            .into_iter()
            .filter(|idx| idx.len() > 1)
            .map(|idx| {
                let (vals, vecs) = linalg::hermitian_eigen(&linalg::submatrix(&g, &idx));
                let d = idx.len();
                let flat = (0..d * d).map(|k| vecs[(k / d, k % d)]).collect();
                let sector = Sector {
                    offset,
                    idx,
                    vals: vals.to_vec(),
                    vecs: flat,
                };
                offset += d;
                max_len = max_len.max(d);
                sector
            })
            .collect();
        Self {
            sectors,
            phase_len: offset,
            max_len,
        }
    }

    /// `e^{−iλ_j s}` for every sector eigenvalue.
    fn phases_into(&self, s: f64, out: &mut [C64]) {
        for sec in &self.sectors {
            for (j, lam) in sec.vals.iter().enumerate() {
                out[sec.offset + j] = C64::from_polar(1.0, -lam * s);
            }
        }
    }

    /// Applies `K(s)` (or `K(−s)` with `inverse`) given the phases for `s`.
    fn apply(&self, phases: &[C64], inverse: bool, x: &mut [C64], scratch: &mut [C64]) {
        for sec in &self.sectors {
            let d = sec.idx.len();
            let w = &mut scratch[..d];
            for (j, wj) in w.iter_mut().enumerate() {
                let mut acc = ZERO;
                for (i, &k) in sec.idx.iter().enumerate() {
                    acc += sec.vecs[i * d + j].conj() * x[k];
                }
                let ph = phases[sec.offset + j];
                *wj = acc * if inverse { ph.conj() } else { ph };
            }
            for (i, &k) in sec.idx.iter().enumerate() {
                let row = &sec.vecs[i * d..(i + 1) * d];
                x[k] = row.iter().zip(w.iter()).map(|(v, wj)| v * wj).sum();
            }
        }
    }
}

/// `H_π(λ) − i ṡ G` with `G = ab − a†b†`, the generator of the field-rotating
/// frame `ψ = K(s) φ`.
#[derive(Debug, Clone)]
struct RotatingPrepared {
    band: Band,
    drive: C64,
}

/// `H(λ)` in the fixed representation of field `b_ref`.
pub struct EvolutionModel {
    basis: FockBasis,
    ops: KineticOps,
    rescale: FieldRescaling,
    /// Nonzero `(row, col, value)` entries of `G = ab − a†b†`.
    generator: Vec<(usize, usize, f64)>,
    b_ref: f64,
}

impl EvolutionModel {
    pub fn new(basis: &FockBasis, b_ref: f64) -> Self {
        Self {
            basis: *basis,
            ops: KineticOps::new(basis.n_max()),
            rescale: FieldRescaling::new(basis),
            generator: sparse_real(&operators::field_generator(basis)),
            b_ref,
        }
    }

    /// Operator norm of `H(λ)`.
    pub fn norm_bound(&self, p: &ParameterPoint) -> f64 {
        let vals = linalg::hermitian_eigenvalues(&self.matrix(p));
        vals.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn generator_inf_norm(&self) -> f64 {
        let mut rows = vec![0.0; self.basis.dimension()];
        for &(r, _, v) in &self.generator {
            rows[r] += v.abs();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    fn rotating(&self) -> RotatingPrepared {
        RotatingPrepared {
            band: Band::zeros(self.basis.n_max() + 1),
            drive: ZERO,
        }
    }

    fn prepare_rotating(&self, schedule: &Schedule, t: f64, out: &mut RotatingPrepared) {
        self.ops.hamiltonian_into(&schedule.point_at(t), &mut out.band);
        out.drive = C64::new(0.0, -0.5 * schedule.log_field_rate(t));
    }

    fn apply_rotating(&self, h: &RotatingPrepared, x: &[C64], y: &mut [C64]) {
        h.band.apply(self.basis.m_max() + 1, x, y);
        if h.drive != ZERO {
            for &(r, col, v) in &self.generator {
                y[r] += h.drive * v * x[col];
            }
        }
    }

    /// `K(s) φ` for the field at `p`.
    fn to_fixed(&self, p: &ParameterPoint, phi: &[C64]) -> Vec<C64> {
        let s = 0.5 * (p.b / self.b_ref).ln();
        let mut out = phi.to_vec();
        if s != 0.0 {
            let mut phases = vec![ZERO; self.rescale.phase_len];
            self.rescale.phases_into(s, &mut phases);
            let mut scratch = vec![ZERO; self.rescale.max_len];
            self.rescale.apply(&phases, false, &mut out, &mut scratch);
        }
        out
    }

    /// `H(λ) x`.
    pub fn apply(&self, p: &ParameterPoint, x: &[C64]) -> Vec<C64> {
        let s = 0.5 * (p.b / self.b_ref).ln();
        let mut tmp = x.to_vec();
        let mut out = vec![ZERO; x.len()];
        let mut phases = vec![ZERO; self.rescale.phase_len];
        let mut scratch = vec![ZERO; self.rescale.max_len];
        if s != 0.0 {
            self.rescale.phases_into(s, &mut phases);
            self.rescale.apply(&phases, true, &mut tmp, &mut scratch);
        }
        self.ops.hamiltonian(p).apply(self.basis.m_max() + 1, &tmp, &mut out);
        if s != 0.0 {
            self.rescale.apply(&phases, false, &mut out, &mut scratch);
        }
        out
    }

    /// Dense `H(λ)`, for checks.
    pub fn matrix(&self, p: &ParameterPoint) -> Mat {
        let dim = self.basis.dimension();
        let mut m = Mat::zeros(dim, dim);
        let mut e = vec![ZERO; dim];
        for k in 0..dim {
            e[k] = c(1.0);
            let col = self.apply(p, &e);
            for (r, v) in col.into_iter().enumerate() {
                m[(r, k)] = v;
            }
            e[k] = ZERO;
        }
        m
    }
}

fn sparse_real(m: &Mat) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for r in 0..m.nrows() {
        for col in 0..m.ncols() {
            let v = m[(r, col)];
            if v != ZERO {
                out.push((r, col, v.re));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRecord {
    pub final_state: StateVector,
    /// `arg <initial|final>` on the branch fixed by `geometric_phase`.
    pub total_phase: f64,
    /// `∫ B(t)(n + ½) dt`.
    pub dynamical_phase: f64,
    /// `total + dynamical`, principal value.
    pub geometric_phase: f64,
    /// `max_t max_m | |f_m(t)| − |f_m(0)| |` over monitor samples.
    pub population_drift: f64,
    pub norm_drift: f64,
    /// `max_t |<ψ|H|ψ> − B(n+½)|` over monitor samples.
    pub energy_deviation: f64,
    pub steps: usize,
    pub dt: f64,
    /// `|<initial|final>|`.
    pub return_fidelity: f64,
}

fn wrap(phase: f64) -> f64 {
    let w = phase.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Columns of level `n` of the frame `K D S` at `p`.
fn level_frame(basis: &FockBasis, p: &ParameterPoint, b_ref: f64, n: usize) -> Result<Vec<StateVector>> {
    let w = operators::state_frame(basis, p, b_ref)?;
    let cut = basis.n_max().saturating_sub(GUARD_BAND);
    (0..=basis.m_max())
        .map(|m| {
            let col = StateVector::new(w.column(basis.index(n, m)).into_owned());
            let weight = col.weight_above(basis, cut);
            if weight > GUARD_WEIGHT {
                return Err(Error::GuardBand {
                    weight,
                    above: cut,
                    limit: GUARD_WEIGHT,
                });
            }
            Ok(col)
        })
        .collect()
}

fn choose_dt(model: &EvolutionModel, schedule: &Schedule) -> f64 {
    if let Some(dt) = schedule.dt {
        return dt;
    }
    let g = model.generator_inf_norm();
    let h_max = (0..=256)
        .map(|k| {
            let t = schedule.total_time * k as f64 / 256.0;
            model.norm_bound(&schedule.point_at(t)) + 0.5 * schedule.log_field_rate(t).abs() * g
        })
        .fold(0.0, f64::max);
    (schedule.total_time / 1e4).min(STEP_SAFETY / h_max.max(1e-300))
}

/// Integrates `i dψ/dt = H(t) ψ` with classical RK4, carried out on
/// `φ = K(s)† ψ` where the field dependence reduces to `−i ṡ G`.
pub fn propagate(basis: &FockBasis, schedule: &Schedule, initial: &StateVector) -> Result<EvolutionRecord> {
    if initial.dim() != basis.dimension() {
        return Err(Error::DimensionMismatch {
            left: initial.dim(),
            right: basis.dimension(),
        });
    }
    if (initial.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("initial state norm {} != 1", initial.norm())));
    }
    let n = schedule.level;
    let cut = basis.n_max().saturating_sub(GUARD_BAND);
    if n > cut {
        return Err(Error::GuardBand {
            weight: 1.0,
            above: cut,
            limit: GUARD_WEIGHT,
        });
    }
    let start = schedule.point_at(0.0);
    let b_ref = start.b;
    let model = EvolutionModel::new(basis, b_ref);
    let dt_target = choose_dt(&model, schedule);
    let steps = (schedule.total_time / dt_target).ceil() as usize;
    let dt = schedule.total_time / steps as f64;
    let mi = C64::new(0.0, -1.0);

    let project = |p: &ParameterPoint, psi: &[C64]| -> Result<Vec<f64>> {
        let frame = level_frame(basis, p, b_ref, n)?;
        let v = Vector::from_column_slice(psi);
        Ok(frame.iter().map(|f| (f.amplitudes.adjoint() * &v)[(0, 0)].norm()).collect())
    };
    let energy = |p: &ParameterPoint, psi: &[C64]| -> f64 {
        let hpsi = model.apply(p, psi);
        let e: C64 = psi.iter().zip(&hpsi).map(|(a, b)| a.conj() * b).sum();
        (e.re - p.b * (n as f64 + 0.5)).abs()
    };

    let mut psi: Vec<C64> = initial.amplitudes.iter().copied().collect();
    let f0 = project(&start, &psi)?;
    let mut population_drift: f64 = 0.0;
    let mut energy_deviation = energy(&start, &psi);
    let mut norm_drift: f64 = 0.0;
    let mut dynamical = 0.0;
    let monitor_every = (steps / MONITOR_SAMPLES).max(1);

    let dim = psi.len();
    let (mut h0, mut h1, mut h2) = (model.rotating(), model.rotating(), model.rotating());
    let mut work = vec![ZERO; dim];
    let mut kk = [vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim]];
    model.prepare_rotating(schedule, 0.0, &mut h0);

    for k in 0..steps {
        let t = k as f64 * dt;
        let (b0, b1, b2) = (
            schedule.point_at(t).b,
            schedule.point_at(t + 0.5 * dt).b,
            schedule.point_at(t + dt).b,
        );
        dynamical += dt / 6.0 * (b0 + 4.0 * b1 + b2) * (n as f64 + 0.5);
        if k > 0 {
            std::mem::swap(&mut h0, &mut h2);
        }
        model.prepare_rotating(schedule, t + 0.5 * dt, &mut h1);
        model.prepare_rotating(schedule, t + dt, &mut h2);
        let stages: [(&RotatingPrepared, f64); 4] = [(&h0, 0.0), (&h1, 0.5 * dt), (&h1, 0.5 * dt), (&h2, dt)];
        for (s, (h, a)) in stages.into_iter().enumerate() {
            if s == 0 {
                work.copy_from_slice(&psi);
            } else {
                let prev = &kk[s - 1];
                for j in 0..dim {
                    work[j] = psi[j] + prev[j] * a;
                }
            }
            let out = &mut kk[s];
            model.apply_rotating(h, &work, out);
            out.iter_mut().for_each(|v| *v *= mi);
        }
        for j in 0..dim {
            psi[j] += (kk[0][j] + (kk[1][j] + kk[2][j]) * 2.0 + kk[3][j]) * (dt / 6.0);
        }
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        norm_drift = norm_drift.max((norm - 1.0).abs());
        if norm_drift > NORM_ABORT {
            return Err(Error::NormDrift {
                drift: norm_drift,
                limit: NORM_ABORT,
                time: t + dt,
            });
        }
        if (k + 1) % monitor_every == 0 || k + 1 == steps {
            let p2 = schedule.point_at(t + dt);
            let fixed = model.to_fixed(&p2, &psi);
            let f = project(&p2, &fixed)?;
            for (a, b) in f.iter().zip(&f0) {
                population_drift = population_drift.max((a - b).abs());
            }
            energy_deviation = energy_deviation.max(energy(&p2, &fixed));
        }
    }
    let psi = model.to_fixed(&schedule.point_at(schedule.total_time), &psi);

    let final_state = StateVector::new(Vector::from_vec(psi));
    let overlap = initial.inner(&final_state);
    let geometric = wrap(overlap.arg() + dynamical);
    Ok(EvolutionRecord {
        final_state,
        total_phase: geometric - dynamical,
        dynamical_phase: dynamical,
        geometric_phase: geometric,
        population_drift,
        norm_drift,
        energy_deviation,
        steps,
        dt,
        return_fidelity: overlap.norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricPhase {
    pub value: f64,
    /// Multiple of 2π added to the principal value.
    pub branch: i64,
    /// `|<reference|final>|`.
    pub fidelity: f64,
}

/// `arg <reference|final> + dynamical`, on the branch nearest `prediction`
/// when one is given, otherwise the principal value.
pub fn extract_geometric_phase(
    record: &EvolutionRecord,
    reference: &StateVector,
    prediction: Option<f64>,
) -> Result<GeometricPhase> {
    let overlap = reference.inner(&record.final_state);
    if overlap.norm() < 0.5 {
        return Err(Error::LoopFidelity(overlap.norm()));
    }
    let principal = wrap(overlap.arg() + record.dynamical_phase);
    let branch = match prediction {
        Some(target) => ((target - principal) / (2.0 * PI)).round() as i64,
        None => 0,
    };
    Ok(GeometricPhase {
        value: principal + 2.0 * PI * branch as f64,
        branch,
        fidelity: overlap.norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// `max_t max_m | |f_m(t)| − |f_m(0)| |`.
    pub population_drift: f64,
    /// Largest spread of `arg(f_m(T)/f_m(0))` across occupied `m`.
    pub relative_phase_drift: f64,
    pub norm_drift: f64,
}

/// Evolves `Σ_m f_m |n(λ₀), m>` and reports how the degenerate amplitudes
/// change.
pub fn degenerate_drift(basis: &FockBasis, schedule: &Schedule, f: &[C64]) -> Result<DriftReport> {
    if f.len() != basis.m_max() + 1 {
        return Err(Error::DimensionMismatch {
            left: f.len(),
            right: basis.m_max() + 1,
        });
    }
    let fnorm = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (fnorm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("coefficients have norm {fnorm}")));
    }
    let start = schedule.point_at(0.0);
    let frame = level_frame(basis, &start, start.b, schedule.level)?;
    let mut init = Vector::zeros(basis.dimension());
    for (col, fm) in frame.iter().zip(f) {
        init += &col.amplitudes * *fm;
    }
    let rec = propagate(basis, schedule, &StateVector::new(init))?;
    let end = schedule.point_at(schedule.total_time);
    let final_frame = level_frame(basis, &end, start.b, schedule.level)?;
    let ratios: Vec<f64> = final_frame
        .iter()
        .zip(f)
        .filter(|(_, fm)| fm.norm() > 1e-8)
        .map(|(col, fm)| (col.inner(&rec.final_state) / fm).arg())
        .collect();
    let spread = ratios
        .iter()
        .map(|a| wrap(a - ratios[0]).abs())
        .fold(0.0, f64::max);
    Ok(DriftReport {
        population_drift: rec.population_drift,
        relative_phase_drift: spread,
        norm_drift: rec.norm_drift,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameHolonomy {
    /// `<n(λ₀), m| ψ_m′(T)> e^{i ∫E dt}`.
    pub unitary: OperatorMatrix,
    pub norm_drift: f64,
    pub population_drift: f64,
}

/// Evolves every column `|n(λ₀), m>` of the degenerate frame around a closed
/// schedule and returns the geometric part of the resulting block.
pub fn frame_holonomy(basis: &FockBasis, schedule: &Schedule) -> Result<FrameHolonomy> {
    if !schedule.is_closed_loop() {
        return Err(Error::InvalidPath("frame holonomy needs a closed schedule".into()));
    }
    let start = schedule.point_at(0.0);
    let frame = level_frame(basis, &start, start.b, schedule.level)?;
    let records: Vec<Result<EvolutionRecord>> =
        frame.par_iter().map(|col| propagate(basis, schedule, col)).collect();
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let k = frame.len();
    let mut u = Mat::zeros(k, k);
    for (j, rec) in records.iter().enumerate() {
        let undo = C64::from_polar(1.0, rec.dynamical_phase);
        for (i, col) in frame.iter().enumerate() {
            u[(i, j)] = col.inner(&rec.final_state) * undo;
        }
    }
    Ok(FrameHolonomy {
        unitary: OperatorMatrix::new(Role::Unitary, u),
        norm_drift: records.iter().map(|r| r.norm_drift).fold(0.0, f64::max),
        population_drift: records.iter().map(|r| r.population_drift).fold(0.0, f64::max),
    })
}

/// `|Tr(U† V)| / dim`.
pub fn fidelity(u: &Mat, v: &Mat) -> f64 {
    (u.adjoint() * v).trace().norm() / u.nrows() as f64
}
