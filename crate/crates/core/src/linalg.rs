//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;

use crate::{CMatrix, CVector, C64};

/// Relative singular-value threshold that defines the numerical rank.
pub const RANK_REL_TOL: f64 = 1e-9;

/// Thin SVD with singular values sorted in nonincreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl ThinSvd {
    pub fn compute(m: &CMatrix) -> Self {
        let (rows, cols) = m.shape();
        let k = rows.min(cols);
        if k == 0 {
            return ThinSvd {
                u: CMatrix::zeros(rows, 0),
                sigma: Vec::new(),
                v: CMatrix::zeros(cols, 0),
            };
        }
        let svd = m.clone().svd(true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut su = CMatrix::zeros(rows, k);
        let mut sv = CMatrix::zeros(cols, k);
        let mut sigma = Vec::with_capacity(k);
        for (dst, &src) in order.iter().enumerate() {
            su.set_column(dst, &u.column(src));
            sv.set_column(dst, &v_t.row(src).adjoint());
            sigma.push(svd.singular_values[src].max(0.0));
        }
        ThinSvd { u: su, sigma, v: sv }
    }

    /// Number of singular values above `RANK_REL_TOL` times the largest.
    pub fn rank(&self) -> usize {
        let top = self.sigma.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        self.sigma.iter().filter(|&&s| s > RANK_REL_TOL * top).count()
    }

    pub fn reconstruct(&self) -> CMatrix {
        let mut scaled = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.v.adjoint()
    }
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// Entrywise product of two matrices of equal shape.
pub fn hadamard(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.zip_map(b, |x, y| x * y)
}

/// Least-squares solution of `a * x = b` for a tall or square `a`.
pub fn least_squares(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s)) * 1e-12;
    svd.solve(b, eps).expect("u and v_t were requested")
}

/// Unit-norm dominant left singular vector of `m`.
pub fn dominant_left_singular_vector(m: &CMatrix) -> CVector {
    let svd = ThinSvd::compute(m);
    if svd.sigma.is_empty() {
        let mut e = CVector::zeros(m.nrows());
        if m.nrows() > 0 {
            e[0] = C64::new(1.0, 0.0);
        }
        return e;
    }
    svd.u.column(0).into_owned()
}

/// Maximum entrywise deviation of `m` from its conjugate transpose.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_hermitian_eigenvalue(m: &CMatrix) -> f64 {
    let sym: CMatrix = (m + m.adjoint()).scale(0.5);
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &e| acc.min(e))
}

/// Horizontal concatenation of equally tall matrices.
pub fn hstack(blocks: &[&CMatrix]) -> CMatrix {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

pub fn identity(n: usize) -> CMatrix {
    DMatrix::identity(n, n)
}
