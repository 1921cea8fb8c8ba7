//! Symmetric positive-definite solves.

use super::Mat;
use crate::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape(format!("cholesky of {}x{}", n, a.cols())));
    }
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut diag = a.get(j, j);
        for k in 0..j {
            diag -= l.get(j, k) * l.get(j, k);
        }
        if diag.is_nan() || diag <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solves `A X = B` for SPD `A` by forward and back substitution.
pub fn spd_solve(a: &Mat, b: &Mat) -> Result<Mat> {
    if b.rows() != a.rows() {
        return Err(Error::Shape(format!(
            "spd_solve {}x{} with right-hand side {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let l = cholesky(a)?;
    let n = a.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        // L y = b
        for i in 0..n {
            let mut s = x.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x.get(i, c);
            for k in i + 1..n {
                s -= l.get(k, i) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    Ok(x)
}
