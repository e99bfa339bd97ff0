//! Scalar activations and their derivatives expressed via forward outputs.

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// d sigmoid / dx given y = sigmoid(x).
pub fn dsigmoid_from_y(y: f64) -> f64 {
    y * (1.0 - y)
}

/// d tanh / dx given y = tanh(x).
pub fn dtanh_from_y(y: f64) -> f64 {
    1.0 - y * y
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn drelu(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Numerically stable ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// d softplus / dx = sigmoid(x).
pub fn dsoftplus(x: f64) -> f64 {
    sigmoid(x)
}

/// In-place softmax over one row; returns the max logit for reuse.
pub fn softmax_row(row: &mut [f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    max
}
