use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Relative eigenvalue floor: anything in [-REL_EIG_TOL * ||M||, 0) is treated
/// as numerical noise and clamped to zero.
const REL_EIG_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn spectral_scale(eigs: &nalgebra::DVector<f64>) -> f64 {
    eigs.iter().fold(0.0_f64, |a, &e| a.max(e.abs())).max(1.0)
}

/// Symmetric PSD square root R with R R = M, after clamping eigenvalues in
/// the noise band to zero. Errors if M has a genuinely negative eigenvalue.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Domain("psd_sqrt needs a square matrix".into()));
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let scale = spectral_scale(&eig.eigenvalues);
    let tol = REL_EIG_TOL * scale;
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -tol {
            return Err(Error::Indefinite {
                min_eig: *v,
                tol: -tol,
            });
        }
        *v = v.max(0.0).sqrt();
    }
    let q = eig.eigenvectors;
    let root = &q * DMatrix::from_diagonal(&vals) * q.transpose();
    Ok(symmetrize(&root))
}

/// Projection onto the PSD cone by eigenvalue clamping (no error path; used
/// to repair noisy bootstrap covariance blocks before taking square roots).
pub fn nearest_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        *v = v.max(0.0);
    }
    let q = eig.eigenvectors;
    symmetrize(&(&q * DMatrix::from_diagonal(&vals) * q.transpose()))
}
