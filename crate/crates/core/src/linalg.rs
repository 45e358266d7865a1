//! Dense complex linear algebra helpers.
//!
//! The matrix exponential uses scaling and squaring with a Padé approximant
//! whose degree (3, 5, 7, 9 or 13) is chosen from the 1-norm of the input,
//! following Higham's 2005 backward-error thresholds. Generators built from
//! ladder operators are very sparse and usually split into many decoupled
//! blocks, so [`expm_blockwise`] exponentiates each connected component of the
//! sparsity graph separately; the result is identical to exponentiating the
//! whole matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;
pub type Vector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Largest entry modulus.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entry modulus of `a - b`.
pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn one_norm(m: &Mat) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn commutator(p: &Mat, q: &Mat) -> Mat {
    p * q - q * p
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// `max |U^dagger U - I|` over all entries.
pub fn unitarity_defect(u: &Mat) -> f64 {
    let n = u.nrows();
    max_abs_diff(&(u.adjoint() * u), &Mat::identity(n, n))
}

const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE_9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Matrix exponential of a square complex matrix.
pub fn expm(a: &Mat) -> Mat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    match n {
        0 => return Mat::zeros(0, 0),
        1 => return Mat::from_element(1, 1, a[(0, 0)].exp()),
        _ => {}
    }
    let norm = one_norm(a);
    if norm == 0.0 {
        return Mat::identity(n, n);
    }
    let eye = Mat::identity(n, n);
    if norm <= THETA_9 {
        let coeffs: &[f64] = if norm <= THETA_3 {
            &PADE_3
        } else if norm <= THETA_5 {
            &PADE_5
        } else if norm <= THETA_7 {
            &PADE_7
        } else {
            &PADE_9
        };
        return pade_low(a, coeffs, &eye);
    }
    let squarings = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = a * c(0.5f64.powi(squarings));
    let mut r = pade_13(&scaled, &eye);
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn pade_low(a: &Mat, b: &[f64], eye: &Mat) -> Mat {
    let a2 = a * a;
    // even powers A^0, A^2, A^4, ...
    let mut powers = vec![eye.clone(), a2.clone()];
    while powers.len() * 2 < b.len() {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let mut u = Mat::zeros(a.nrows(), a.ncols());
    let mut v = Mat::zeros(a.nrows(), a.ncols());
    for (k, p) in powers.iter().enumerate() {
        if 2 * k + 1 < b.len() {
            u += p * c(b[2 * k + 1]);
        }
        v += p * c(b[2 * k]);
    }
    let u = a * u;
    solve_pade(&u, &v)
}

fn pade_13(a: &Mat, eye: &Mat) -> Mat {
    let b = &PADE_13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let w1 = &a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9]);
    let w2 = &a6 * c(b[7]) + &a4 * c(b[5]) + &a2 * c(b[3]) + eye * c(b[1]);
    let u = a * (&a6 * w1 + w2);
    let z1 = &a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8]);
    let v = &a6 * z1 + &a6 * c(b[6]) + &a4 * c(b[4]) + &a2 * c(b[2]) + eye * c(b[0]);
    solve_pade(&u, &v)
}

fn solve_pade(u: &Mat, v: &Mat) -> Mat {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .expect("Padé denominator is singular; input norm selection is broken")
}

/// Connected components of the undirected graph with an edge wherever
/// `a[(i, j)]` or `a[(j, i)]` is nonzero. Components are sorted by their
/// smallest index and each index list is ascending.
pub fn components(a: &Mat) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for j in 0..n {
        for i in 0..n {
            if i != j && a[(i, j)] != ZERO {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Gather the square sub-matrix on `idx`.
pub fn submatrix(a: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

/// `exp(a)` computed component by component. Exact rearrangement of
/// [`expm`]: a block-diagonal (after permutation) matrix exponentiates blockwise.
pub fn expm_blockwise(a: &Mat) -> Mat {
    let n = a.nrows();
    let mut out = Mat::zeros(n, n);
    for idx in components(a) {
        let e = expm(&submatrix(a, &idx));
        for (i, &gi) in idx.iter().enumerate() {
            for (j, &gj) in idx.iter().enumerate() {
                out[(gi, gj)] = e[(i, j)];
            }
        }
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(h: &Mat) -> (Vec<f64>, Mat) {
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(h.nrows(), h.ncols(), |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(h: &Mat) -> Vec<f64> {
    let mut v: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Eigenphases (arguments of eigenvalues) of a unitary matrix, ascending.
///
/// A unitary matrix is normal, so the eigenvectors of the Hermitian
/// combination `(U + U†)/2 + κ (U − U†)/2i` diagonalize it for generic `κ`;
/// the phases are read off as Rayleigh quotients.
pub fn unitary_eigenphases(u: &Mat) -> Vec<f64> {
    const KAPPA: f64 = 0.873_781_284_903_515_6;
    let re = (u + u.adjoint()) * c(0.5);
    let im = (u - u.adjoint()) * C64::new(0.0, -0.5);
    let (_, vecs) = hermitian_eigen(&(re + im * c(KAPPA)));
    let mut phases: Vec<f64> = (0..u.ncols())
        .map(|k| {
            let v = vecs.column(k);
            (v.adjoint() * u * v)[(0, 0)].arg()
        })
        .collect();
    phases.sort_by(f64::total_cmp);
    phases
}
