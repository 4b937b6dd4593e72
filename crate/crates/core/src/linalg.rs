//! Small dense linear-algebra helpers shared by the models, the filter and
//! the attack code.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Replace `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
///
/// Returns `None` when the factorisation fails.
pub fn spd_inverse(m: &Matrix) -> Option<Matrix> {
    let chol = m.clone().cholesky()?;
    let inv = chol.inverse();
    let mut inv = inv;
    symmetrize(&mut inv);
    Some(inv)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// A factor `F` with `F Fᵀ = m` for a symmetric positive-semidefinite `m`.
///
/// Eigen-based so that singular (e.g. zero) covariances are accepted.
pub fn psd_factor(m: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension(format!(
            "covariance must be square, got {}x{}",
            n,
            m.ncols()
        )));
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    let scale = s.amax().max(1.0);
    let eig = s.symmetric_eigen();
    let mut f = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -1e-9 * scale {
            return Err(Error::Input(format!(
                "covariance is not positive semidefinite (eigenvalue {lambda:e})"
            )));
        }
        let root = lambda.max(0.0).sqrt();
        for i in 0..n {
            f[(i, j)] *= root;
        }
    }
    Ok(f)
}

/// Draw `F·ξ` with `ξ ~ N(0, I)`.
pub fn sample_gaussian<R: Rng + ?Sized>(factor: &Matrix, rng: &mut R) -> Vector {
    let xi = Vector::from_iterator(
        factor.ncols(),
        (0..factor.ncols()).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    factor * xi
}

/// `xᵀ M x`.
pub fn quadratic_form(x: &Vector, m: &Matrix) -> f64 {
    x.dot(&(m * x))
}

/// Central finite-difference Jacobian of `f` at `x`.
pub fn numeric_jacobian<F>(f: F, x: &Vector, h: f64) -> Matrix
where
    F: Fn(&Vector) -> Vector,
{
    let y0 = f(x);
    let mut jac = Matrix::zeros(y0.len(), x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let orig = xp[j];
        xp[j] = orig + h;
        let fp = f(&xp);
        xp[j] = orig - h;
        let fm = f(&xp);
        xp[j] = orig;
        for i in 0..y0.len() {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

pub fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Parse a matrix written as rows separated by `;` and entries by whitespace
/// or commas, e.g. `"1.1 0; 0 0.9"`.
pub fn parse_matrix(text: &str) -> std::result::Result<Matrix, String> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(parse_list)
        .collect::<std::result::Result<_, _>>()?;
    let ncols = rows.first().map_or(0, Vec::len);
    if ncols == 0 {
        return Err("empty matrix".into());
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("rows have different lengths".into());
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Parse a whitespace- or comma-separated list of reals.
pub fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| format!("`{s}` is not a number"))
        })
        .collect()
}
