//! Dense helpers shared by the reduced-order pieces.

use nalgebra::{DMatrix, DMatrixView};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators so the loop vectorizes without -ffast-math
    let mut acc = [0.0_f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `‖a − b‖ / ‖b‖`.
pub fn relative_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    num.sqrt() / norm(b)
}

/// `‖AᵀA − I‖_max` for a matrix with (nominally) orthonormal columns.
pub fn orthonormality_defect(a: &DMatrix<f64>) -> f64 {
    let g = a.tr_mul(a);
    let mut worst = 0.0_f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// `Aᵀ B` without materializing the transpose.
pub fn gemm_tn(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    gemm_tn_view(a.as_view(), b.as_view())
}

/// [`gemm_tn`] on strided views (e.g. row blocks of tall matrices).
pub fn gemm_tn_view(a: DMatrixView<'_, f64>, b: DMatrixView<'_, f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "gemm_tn: inner dimensions differ");
    let (k, m) = a.shape();
    let n = b.ncols();
    let mut c = DMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    let (ars, acs) = a.strides();
    let (brs, bcs) = b.strides();
    // SAFETY: the strides come from live views covering every addressed
    // element, and `c` is an owned column-major m×n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            acs as isize,
            ars as isize,
            b.as_ptr(),
            brs as isize,
            bcs as isize,
            0.0,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
    c
}

/// Symmetric eigendecomposition with eigenpairs sorted by decreasing value.
pub fn sorted_symmetric_eigen(g: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = g.nrows();
    let eig = nalgebra::SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}
