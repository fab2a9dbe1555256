//! Scalar helpers shared by the estimators.

pub use libm::{exp, expm1, log, log1p, sqrt};

pub const LN_2: f64 = core::f64::consts::LN_2;

/// `ln Σ exp(v_i)` with the maximum subtracted first.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for &v in values {
        acc += exp(v - max);
    }
    max + log(acc)
}

/// Normalizes log-weights in place into probabilities.
pub fn softmax_in_place(values: &mut [f64]) {
    let lse = log_sum_exp(values);
    for v in values.iter_mut() {
        *v = exp(*v - lse);
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + exp(-z))
    } else {
        let e = exp(z);
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    log(p) - log1p(-p)
}

/// `-p ln p` with `0 ln 0 = 0`.
pub fn neg_xlogx(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * log(p)
    }
}

/// Shannon entropy (nats) of a probability vector.
pub fn entropy(probs: &[f64]) -> f64 {
    probs.iter().copied().map(neg_xlogx).sum()
}

/// Binary entropy `-(p ln p + (1-p) ln(1-p))` in nats.
pub fn binary_entropy(p: f64) -> f64 {
    neg_xlogx(p) + neg_xlogx(1.0 - p)
}

/// Binary entropy of `sigmoid(z)`, stable for large `|z|`.
pub fn binary_entropy_from_logit(z: f64) -> f64 {
    // H = ln(1 + e^{-|z|}) + |z| e^{-|z|} / (1 + e^{-|z|})
    let a = z.abs();
    let e = exp(-a);
    log1p(e) + a * e / (1.0 + e)
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn squared_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
