//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub(crate) fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.nrows() == m.ncols() && m.clone().cholesky().is_some()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut vals: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}

pub(crate) fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let x = a.clone().lu().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Unit null vector of a `k × (k+1)` matrix, or `None` when its rank is below `k`.
///
/// Rows are normalized first so that badly scaled rows do not mask a rank drop.
pub(crate) fn null_vector(j: &DMatrix<f64>, rank_tol: f64) -> Option<DVector<f64>> {
    let k = j.nrows();
    debug_assert_eq!(j.ncols(), k + 1);
    let mut m = DMatrix::<f64>::zeros(k + 1, k + 1);
    for r in 0..k {
        let row = j.row(r);
        let scale = row.amax();
        if scale == 0.0 || !scale.is_finite() {
            return None;
        }
        m.row_mut(r).copy_from(&(row / scale));
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..=k).collect();
    order.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    let largest = sv[order[k]];
    if k > 0 && sv[order[1]] <= rank_tol * largest {
        return None;
    }
    let v = v_t.row(order[0]).transpose();
    Some(v.normalize())
}

/// Orthonormal basis (as columns) of the complement of `g` in `R^len(g)`.
pub(crate) fn orthogonal_complement(g: &DVector<f64>) -> DMatrix<f64> {
    let s = g.len();
    if s <= 1 {
        return DMatrix::zeros(s, 0);
    }
    let mut m = DMatrix::<f64>::zeros(s, s);
    m.set_column(0, g);
    let q = m.qr().q();
    q.columns(1, s - 1).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_vector_of_wide_matrix() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.0, 1.0, -1.0]);
        let v = null_vector(&j, 1e-12).unwrap();
        assert!((&j * &v).amax() < 1e-12);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_vector_detects_rank_drop() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(null_vector(&j, 1e-10).is_none());
    }

    #[test]
    fn complement_is_orthonormal() {
        let g = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let z = orthogonal_complement(&g);
        assert_eq!(z.ncols(), 2);
        assert!((z.transpose() * &g).amax() < 1e-12);
        let ztz = z.transpose() * &z;
        assert!((ztz - DMatrix::identity(2, 2)).amax() < 1e-12);
    }
}
