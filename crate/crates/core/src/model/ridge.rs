use crate::nn::{spd_solve, Mat};
use crate::{Error, Result};

/// Per-episode linear classifier; the last row of `theta` multiplies the
/// constant-1 bias feature.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeClassifier {
    /// (p+1) x N
    pub theta: Mat,
    pub lambda: f64,
}

impl RidgeClassifier {
    pub fn n_classes(&self) -> usize {
        self.theta.cols()
    }

    pub fn predict(&self, s: &[f64]) -> Result<Vec<f64>> {
        ridge_predict(self, s)
    }
}

/// `n x N` one-hot matrix of local labels.
pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Mat> {
    let mut y = Mat::zeros(labels.len(), n_classes);
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::Invalid(format!("label {l} in a {n_classes}-way task")));
        }
        y.set(i, l, 1.0);
    }
    Ok(y)
}

/// Stacks feature rows and appends the bias column.
pub fn with_bias(rows: &[Vec<f64>]) -> Result<Mat> {
    let rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.push(1.0);
            r
        })
        .collect();
    Mat::from_rows(&rows)
}

/// Minimizer of `(1/2n)‖Xθ − Y‖² + (λ/2)‖θ‖²`, i.e.
/// `θ = (XᵀX + nλI)⁻¹ XᵀY`. When `n < p` the equivalent dual form
/// `Xᵀ(XXᵀ + nλI)⁻¹Y` is solved instead, which is much cheaper for
/// few-shot support sets.
pub fn ridge_fit(x: &Mat, y: &Mat, lambda: f64) -> Result<RidgeClassifier> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid(format!("ridge lambda must be positive, got {lambda}")));
    }
    let (n, p) = x.shape();
    if n == 0 {
        return Err(Error::Invalid("ridge fit on an empty support set".into()));
    }
    if y.rows() != n {
        return Err(Error::Shape(format!("{n} feature rows but {} label rows", y.rows())));
    }
    x.ensure_finite("ridge features")?;
    y.ensure_finite("ridge targets")?;
    let reg = n as f64 * lambda;
    let theta = if n < p {
        let mut gram = x.matmul(&x.transpose())?;
        for i in 0..n {
            gram.set(i, i, gram.get(i, i) + reg);
        }
        let alpha = spd_solve(&gram, y)?;
        x.t_matmul(&alpha)?
    } else {
        let mut gram = x.t_matmul(x)?;
        for i in 0..p {
            gram.set(i, i, gram.get(i, i) + reg);
        }
        spd_solve(&gram, &x.t_matmul(y)?)?
    };
    theta.ensure_finite("ridge solution")?;
    Ok(RidgeClassifier { theta, lambda })
}

/// The regularized squared loss the closed form minimizes.
pub fn ridge_loss(x: &Mat, y: &Mat, theta: &Mat, lambda: f64) -> Result<f64> {
    let n = x.rows() as f64;
    let r = residual(x, y, theta)?;
    Ok(r.frobenius_sq() / (2.0 * n) + 0.5 * lambda * theta.frobenius_sq())
}

fn residual(x: &Mat, y: &Mat, theta: &Mat) -> Result<Mat> {
    let mut r = x.matmul(theta)?;
    if r.shape() != y.shape() {
        return Err(Error::Shape(format!("predictions {:?} vs targets {:?}", r.shape(), y.shape())));
    }
    for (a, b) in r.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *a -= b;
    }
    Ok(r)
}

/// `(1/n) Xᵀ(Xθ − Y) + λθ`.
pub fn ridge_loss_grad(x: &Mat, y: &Mat, theta: &Mat, lambda: f64) -> Result<Mat> {
    let n = x.rows() as f64;
    let mut g = x.t_matmul(&residual(x, y, theta)?)?;
    for (gi, t) in g.as_mut_slice().iter_mut().zip(theta.as_slice()) {
        *gi = *gi / n + lambda * t;
    }
    Ok(g)
}

/// Scores `θᵀ s`; `s` carries the trailing bias entry.
pub fn ridge_predict(clf: &RidgeClassifier, s: &[f64]) -> Result<Vec<f64>> {
    clf.theta.t_matvec(s)
}
