use super::matrix::{Matrix, Vector};
use crate::error::{Error, Result};

/// Largest tolerated `|a_ij - a_ji|` on input to [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Convergence threshold on the off-diagonal Frobenius norm, relative to `‖A‖_F`.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100;
/// Eigenvalues down to `-PSD_TOL` are clamped to zero by [`psd_sqrt`].
pub const PSD_TOL: f64 = 1e-10;

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Sorted in descending order.
    pub values: Vector,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps over every `(p, q)` pair with `p < q`, annihilating `a_pq` with a
/// plane rotation, until the off-diagonal Frobenius norm drops below
/// `OFF_DIAGONAL_TOL * ‖A‖_F`. Rotations follow the stable form
/// `t = sgn(θ) / (|θ| + sqrt(θ² + 1))` with `θ = (a_qq - a_pp) / 2a_pq`.
pub fn sym_eig(a: &Matrix) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    if let Some(bad) = a.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("eigen input entry {bad}")));
    }

    let n = a.rows();
    // work on the exactly symmetrized copy
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, 0.5 * (a.get(i, j) + a.get(j, i)));
        }
    }
    // rows of vt are the eigenvectors (columns of V)
    let mut vt = Matrix::identity(n);
    let scale = m.frobenius_norm();

    let mut converged = false;
    for _sweep in 0..=MAX_SWEEPS {
        let off = off_diagonal_norm(&m);
        if off <= OFF_DIAGONAL_TOL * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut m, &mut vt, p, q);
            }
        }
    }
    if !converged {
        return Err(Error::NotConverged(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)).then(i.cmp(&j)));

    let values: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, col, vt.get(src, r));
        }
    }
    if values.iter().any(|v| !v.is_finite()) || vectors.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition produced non-finite values".into()));
    }
    Ok(SymEigen {
        values: values.into(),
        vectors,
    })
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m.get(i, j) * m.get(i, j);
            }
        }
    }
    s.sqrt()
}

fn rotate(m: &mut Matrix, vt: &mut Matrix, p: usize, q: usize) {
    let apq = m.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = m.get(p, p);
    let aqq = m.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let n = m.rows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m.get(k, p);
        let akq = m.get(k, q);
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        m.set(k, p, new_kp);
        m.set(p, k, new_kp);
        m.set(k, q, new_kq);
        m.set(q, k, new_kq);
    }
    m.set(p, p, app - t * apq);
    m.set(q, q, aqq + t * apq);
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);

    for k in 0..n {
        let vp = vt.get(p, k);
        let vq = vt.get(q, k);
        vt.set(p, k, c * vp - s * vq);
        vt.set(q, k, s * vp + c * vq);
    }
}

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Eigenvalues in `[-PSD_TOL·max(1, |λ_max|), 0)` are clamped to zero; anything
/// more negative is reported as [`Error::NotPsd`].
pub fn psd_sqrt(a: &Matrix) -> Result<Matrix> {
    let eig = sym_eig(a)?;
    let n = a.rows();
    let largest = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = -PSD_TOL * largest.max(1.0);
    let mut roots = Vec::with_capacity(n);
    for &lambda in eig.values.iter() {
        if lambda < floor {
            return Err(Error::NotPsd(lambda));
        }
        roots.push(lambda.max(0.0).sqrt());
    }
    // S = V diag(sqrt λ) Vᵀ, accumulated over the upper triangle and mirrored
    let v = &eig.vectors;
    let mut s = Matrix::zeros(n, n);
    let vt = v.transpose();
    let cols = vt.data();
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for (k, &r) in roots.iter().enumerate() {
                if r != 0.0 {
                    acc += cols[k * n + i] * r * cols[k * n + j];
                }
            }
            s.set(i, j, acc);
            s.set(j, i, acc);
        }
    }
    Ok(s)
}
