use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numcore::Tensor2D;

/// Representation drift between two feature snapshots of the same examples:
/// `1 − ‖V_kᵀ V'_k‖²_F / k`, where `V_k` spans the top-`k` eigenvectors of
/// the (optionally centered) covariance `FᵀF`.
///
/// The result lies in `[0, 1]`; values within a few ulps of either end are
/// snapped to it so that identical or orthogonal subspaces report exactly.
pub fn repre_drift(before: &Tensor2D, after: &Tensor2D, k: usize, centered: bool) -> Result<f64> {
    if before.rows() != after.rows() || before.cols() != after.cols() {
        return Err(Error::Shape(format!(
            "drift snapshots differ: {}x{} vs {}x{}",
            before.rows(),
            before.cols(),
            after.rows(),
            after.cols()
        )));
    }
    if k == 0 {
        return Err(Error::Config("drift needs k >= 1".into()));
    }
    let basis_a = top_subspace(before, k, centered)?;
    let basis_b = top_subspace(after, k, centered)?;
    let overlap = basis_a.transpose() * basis_b;
    let fro2: f64 = overlap.iter().map(|v| v * v).sum();
    let drift = 1.0 - fro2 / k as f64;
    let tol = 64.0 * f64::EPSILON;
    Ok(if drift.abs() <= tol {
        0.0
    } else if (drift - 1.0).abs() <= tol {
        1.0
    } else {
        drift.clamp(0.0, 1.0)
    })
}

/// Orthonormal `d×k` basis of the leading eigenvectors of `FᵀF`.
pub fn top_subspace(features: &Tensor2D, k: usize, centered: bool) -> Result<DMatrix<f64>> {
    let (n, d) = (features.rows(), features.cols());
    if k > d {
        return Err(Error::Rank(format!("k = {k} exceeds feature dimension {d}")));
    }
    let mut f = DMatrix::from_row_slice(n, d, features.data());
    if centered {
        for mut col in f.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
    }
    let cov = f.transpose() * &f;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = scale * d as f64 * 1e3 * f64::EPSILON;
    let kth = eig.eigenvalues[order[k - 1]];
    if scale == 0.0 || kth <= floor {
        return Err(Error::Rank(format!(
            "features have fewer than {k} non-degenerate directions"
        )));
    }
    let mut basis = DMatrix::zeros(d, k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(idx));
    }
    Ok(basis)
}
