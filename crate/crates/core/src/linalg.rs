use nalgebra::{DMatrix, DVector};

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `‖M − Mᵀ‖_F / (1 + ‖M‖_F)`.
pub(crate) fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm() / (1.0 + m.norm())
}

/// Eigenvalues of the symmetric part, ascending.
pub(crate) fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub(crate) fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Spectral norm of a symmetric matrix.
pub(crate) fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

pub(crate) fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().min()
}

/// `xᵀ W x`.
pub(crate) fn quad(x: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    x.dot(&(w * x))
}

/// Determinant by LU with partial pivoting. Pivots smaller than
/// `1e-12 · ‖M‖_F` are treated as exact zeros.
pub(crate) fn lu_determinant(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut a = m.clone();
    let floor = 1e-12 * m.norm();
    let mut det = 1.0;
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, a[(i, k)].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("nonempty column");
        if pivot <= floor {
            return 0.0;
        }
        if p != k {
            a.swap_rows(p, k);
            det = -det;
        }
        let akk = a[(k, k)];
        det *= akk;
        for i in (k + 1)..n {
            let factor = a[(i, k)] / akk;
            if factor != 0.0 {
                for j in (k + 1)..n {
                    a[(i, j)] -= factor * a[(k, j)];
                }
            }
        }
    }
    det
}
