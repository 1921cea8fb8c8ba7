//! LSTM cell and bidirectional encoder with hand-written BPTT.
//!
//! Gate blocks in the stacked weight matrices are ordered
//! `[input, forget, cell, output]`, each `H` rows tall.

use rand::Rng;

use super::{axpy, dot, sigmoid, Mat, Param, SentenceMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// 4H x d
    pub w_ih: Param,
    /// 4H x H
    pub w_hh: Param,
    /// 4H x 1
    pub b: Param,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_ih: Param::zeros(4 * hidden, input),
            w_hh: Param::zeros(4 * hidden, hidden),
            b: Param::zeros(4 * hidden, 1),
        }
    }

    /// Weights from `Uniform(-1/sqrt(H), 1/sqrt(H))`, forget-gate bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut p = LstmParams {
            w_ih: Param::uniform(4 * hidden, input, bound, rng),
            w_hh: Param::uniform(4 * hidden, hidden, bound, rng),
            b: Param::zeros(4 * hidden, 1),
        };
        for r in hidden..2 * hidden {
            p.b.value.set(r, 0, 1.0);
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.value.cols()
    }

    pub fn input(&self) -> usize {
        self.w_ih.value.cols()
    }

    pub fn params_mut(&mut self) -> [&mut Param; 3] {
        [&mut self.w_ih, &mut self.w_hh, &mut self.b]
    }

    pub fn named<'a>(&'a self, prefix: &str) -> Vec<(String, &'a Param)> {
        vec![
            (format!("{prefix}.w_ih"), &self.w_ih),
            (format!("{prefix}.w_hh"), &self.w_hh),
            (format!("{prefix}.b"), &self.b),
        ]
    }

    fn check(&self, x: usize, h: usize, c: usize) -> Result<()> {
        let hid = self.hidden();
        let ok = self.w_ih.value.rows() == 4 * hid
            && self.w_hh.value.rows() == 4 * hid
            && self.b.value.shape() == (4 * hid, 1)
            && x == self.input()
            && h == hid
            && c == hid;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "lstm with input {} hidden {hid} given x {x}, h {h}, c {c}",
                self.input()
            )))
        }
    }
}

/// Activations of one time step, kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct LstmStep {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One LSTM step: returns `(h, c)`.
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    p.check(x.len(), h_prev.len(), c_prev.len())?;
    let s = step(x, h_prev.to_vec(), c_prev.to_vec(), p);
    Ok((s.h, s.c))
}

fn step(x: &[f64], h_prev: Vec<f64>, c_prev: Vec<f64>, p: &LstmParams) -> LstmStep {
    let hid = p.hidden();
    let wi = &p.w_ih.value;
    let wh = &p.w_hh.value;
    let b = p.b.value.as_slice();
    let z: Vec<f64> = (0..4 * hid)
        .map(|r| b[r] + dot(wi.row(r), x) + dot(wh.row(r), &h_prev))
        .collect();
    let i: Vec<f64> = z[..hid].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[hid..2 * hid].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[2 * hid..3 * hid].iter().map(|v| v.tanh()).collect();
    let o: Vec<f64> = z[3 * hid..].iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<f64> = (0..hid).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..hid).map(|k| o[k] * tanh_c[k]).collect();
    LstmStep {
        h_prev,
        c_prev,
        i,
        f,
        g,
        o,
        tanh_c,
        c,
        h,
    }
}

/// Reverse of [`step`]. Accumulates into `p`'s grads and returns
/// `(dh_prev, dc_prev)`. Input gradients are not needed (word vectors are frozen).
fn step_backward(
    s: &LstmStep,
    x: &[f64],
    dh: &[f64],
    dc_next: &[f64],
    p: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>) {
    let hid = s.h.len();
    let mut dz = vec![0.0; 4 * hid];
    let mut dc_prev = vec![0.0; hid];
    for k in 0..hid {
        let d_o = dh[k] * s.tanh_c[k];
        let dc = dc_next[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
        let di = dc * s.g[k];
        let dg = dc * s.i[k];
        let df = dc * s.c_prev[k];
        dc_prev[k] = dc * s.f[k];
        dz[k] = di * s.i[k] * (1.0 - s.i[k]);
        dz[hid + k] = df * s.f[k] * (1.0 - s.f[k]);
        dz[2 * hid + k] = dg * (1.0 - s.g[k] * s.g[k]);
        dz[3 * hid + k] = d_o * s.o[k] * (1.0 - s.o[k]);
    }
    p.w_ih.grad.add_outer(1.0, &dz, x);
    p.w_hh.grad.add_outer(1.0, &dz, &s.h_prev);
    axpy(1.0, &dz, p.b.grad.as_mut_slice());
    let dh_prev = p.w_hh.value.t_matvec(&dz).expect("lstm shapes checked on forward");
    (dh_prev, dc_prev)
}

/// Cached activations of both directions over one sentence.
///
/// `bwd[t]` is the right-to-left step that consumed token `t`.
#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: Vec<LstmStep>,
    bwd: Vec<LstmStep>,
}

impl BiLstmCache {
    pub fn len(&self) -> usize {
        self.fwd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fwd.is_empty()
    }

    /// Contextual state of position `t`: forward then backward hidden state.
    pub fn context(&self, t: usize) -> Vec<f64> {
        let mut v = self.fwd[t].h.clone();
        v.extend_from_slice(&self.bwd[t].h);
        v
    }
}

/// BiLSTM over the sentence; column `t` of the `2H x m` result is
/// `[h_fwd(t); h_bwd(t)]`. Initial states are zero.
pub fn bilstm_forward(w: &SentenceMatrix, fwd: &LstmParams, bwd: &LstmParams) -> Result<Mat> {
    let cache = bilstm_forward_cached(w, fwd, bwd)?;
    let m = cache.len();
    let two_h = fwd.hidden() + bwd.hidden();
    let mut out = Mat::zeros(two_h, m);
    for t in 0..m {
        for (r, v) in cache.context(t).into_iter().enumerate() {
            out.set(r, t, v);
        }
    }
    Ok(out)
}

pub fn bilstm_forward_cached(
    w: &SentenceMatrix,
    fwd: &LstmParams,
    bwd: &LstmParams,
) -> Result<BiLstmCache> {
    let m = w.len();
    if m == 0 {
        return Err(Error::Invalid("bilstm over an empty sentence".into()));
    }
    fwd.check(w.dim(), fwd.hidden(), fwd.hidden())?;
    bwd.check(w.dim(), bwd.hidden(), bwd.hidden())?;

    let mut fwd_steps: Vec<LstmStep> = Vec::with_capacity(m);
    let (mut h, mut c) = (vec![0.0; fwd.hidden()], vec![0.0; fwd.hidden()]);
    for t in 0..m {
        let s = step(w.column(t), h, c, fwd);
        h = s.h.clone();
        c = s.c.clone();
        fwd_steps.push(s);
    }

    let mut bwd_steps: Vec<Option<LstmStep>> = vec![None; m];
    let (mut h, mut c) = (vec![0.0; bwd.hidden()], vec![0.0; bwd.hidden()]);
    for t in (0..m).rev() {
        let s = step(w.column(t), h, c, bwd);
        h = s.h.clone();
        c = s.c.clone();
        bwd_steps[t] = Some(s);
    }

    Ok(BiLstmCache {
        fwd: fwd_steps,
        bwd: bwd_steps.into_iter().map(Option::unwrap).collect(),
    })
}

/// Reverse pass of [`bilstm_forward_cached`] given `dL/d context(t)` for
/// every position. Accumulates into both parameter sets.
pub fn bilstm_backward(
    cache: &BiLstmCache,
    w: &SentenceMatrix,
    d_ctx: &[Vec<f64>],
    fwd: &mut LstmParams,
    bwd: &mut LstmParams,
) {
    let m = cache.len();
    debug_assert_eq!(d_ctx.len(), m);
    let hf = fwd.hidden();
    let hb = bwd.hidden();

    let (mut dh_carry, mut dc_carry) = (vec![0.0; hf], vec![0.0; hf]);
    for t in (0..m).rev() {
        let mut dh = d_ctx[t][..hf].to_vec();
        axpy(1.0, &dh_carry, &mut dh);
        let (dh_prev, dc_prev) = step_backward(&cache.fwd[t], w.column(t), &dh, &dc_carry, fwd);
        dh_carry = dh_prev;
        dc_carry = dc_prev;
    }

    let (mut dh_carry, mut dc_carry) = (vec![0.0; hb], vec![0.0; hb]);
    for t in 0..m {
        let mut dh = d_ctx[t][hf..hf + hb].to_vec();
        axpy(1.0, &dh_carry, &mut dh);
        let (dh_prev, dc_prev) = step_backward(&cache.bwd[t], w.column(t), &dh, &dc_carry, bwd);
        dh_carry = dh_prev;
        dc_carry = dc_prev;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn random_params(d: usize, h: usize, seed: u64) -> LstmParams {
        let mut rng = seeded_rng(seed, 7);
        let mut p = LstmParams::init(d, h, &mut rng);
        p.b = Param::uniform(4 * h, 1, 0.5, &mut rng);
        p
    }

    #[test]
    fn zero_params_zero_state() {
        let p = LstmParams::zeros(3, 2);
        let (h, c) = lstm_cell(&[1.0, -2.0, 0.5], &[0.0; 2], &[0.0; 2], &p).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
    }

    #[test]
    fn saturated_forget_gate_keeps_memory() {
        let mut p = random_params(3, 2, 1);
        for r in 2..4 {
            p.b.value.set(r, 0, 50.0);
        }
        let x = [0.3, -0.1, 0.7];
        let hp = [0.2, -0.4];
        let cp = [1.5, -0.8];
        let (_, c) = lstm_cell(&x, &hp, &cp, &p).unwrap();
        // independent recomputation of i and g
        for k in 0..2 {
            let zi = p.b.value.get(k, 0)
                + (0..3).map(|j| p.w_ih.value.get(k, j) * x[j]).sum::<f64>()
                + (0..2).map(|j| p.w_hh.value.get(k, j) * hp[j]).sum::<f64>();
            let zg = p.b.value.get(4 + k, 0)
                + (0..3).map(|j| p.w_ih.value.get(4 + k, j) * x[j]).sum::<f64>()
                + (0..2).map(|j| p.w_hh.value.get(4 + k, j) * hp[j]).sum::<f64>();
            let expect = cp[k] + 1.0 / (1.0 + (-zi).exp()) * zg.tanh();
            assert!((c[k] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_scalar_oracle() {
        let (d, hid) = (4, 3);
        let p = random_params(d, hid, 2);
        let x = [0.1, -0.7, 0.4, 0.9];
        let hp = [0.3, 0.0, -0.2];
        let cp = [-0.5, 0.6, 0.1];
        let (h, c) = lstm_cell(&x, &hp, &cp, &p).unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for k in 0..hid {
            let pre = |gate: usize| {
                let r = gate * hid + k;
                let mut s = p.b.value.get(r, 0);
                for j in 0..d {
                    s += p.w_ih.value.get(r, j) * x[j];
                }
                for j in 0..hid {
                    s += p.w_hh.value.get(r, j) * hp[j];
                }
                s
            };
            let ck = sig(pre(1)) * cp[k] + sig(pre(0)) * pre(2).tanh();
            let hk = sig(pre(3)) * ck.tanh();
            assert!((c[k] - ck).abs() < 1e-12);
            assert!((h[k] - hk).abs() < 1e-12);
        }
    }

    #[test]
    fn single_token_sentence() {
        let p = random_params(3, 2, 3);
        let q = random_params(3, 2, 4);
        let w = SentenceMatrix::from_columns(3, &[vec![0.2, 0.1, -0.3]]).unwrap();
        let out = bilstm_forward(&w, &p, &q).unwrap();
        assert_eq!(out.shape(), (4, 1));
        let (hf, _) = lstm_cell(w.column(0), &[0.0; 2], &[0.0; 2], &p).unwrap();
        let (hb, _) = lstm_cell(w.column(0), &[0.0; 2], &[0.0; 2], &q).unwrap();
        assert_eq!(out.col(0), [hf, hb].concat());
    }

    #[test]
    fn zero_params_zero_output() {
        let p = LstmParams::zeros(2, 3);
        let w = SentenceMatrix::from_columns(2, &[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let out = bilstm_forward(&w, &p, &p).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn palindrome_symmetry() {
        let p = random_params(3, 2, 5);
        let a = vec![0.5, -0.2, 0.1];
        let b = vec![-0.3, 0.8, 0.4];
        let c = vec![0.0, 0.3, -0.9];
        let w = SentenceMatrix::from_columns(3, &[a.clone(), b.clone(), c, b, a]).unwrap();
        let out = bilstm_forward(&w, &p, &p).unwrap();
        let m = 5;
        for k in 0..m {
            let top = &out.col(k)[..2];
            let bottom = &out.col(m - 1 - k)[2..];
            for (x, y) in top.iter().zip(bottom) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }
}
