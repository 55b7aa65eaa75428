//! Small dense-vector helpers and log-space utilities shared across modules.

/// Largest exponent passed to `exp` before clamping.
pub const EXP_CLAMP: f64 = 700.0;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(t)` with the exponent clamped at ±[`EXP_CLAMP`]; the flag reports clamping.
#[inline]
pub fn clamped_exp(t: f64) -> (f64, bool) {
    if t > EXP_CLAMP {
        (EXP_CLAMP.exp(), true)
    } else if t < -EXP_CLAMP {
        ((-EXP_CLAMP).exp(), t.is_finite())
    } else {
        (t.exp(), false)
    }
}

/// `u^γ = exp(γ log u)` with overflow guard. `γ = 0` returns exactly 1.
#[inline]
pub fn power_weight(log_u: f64, gamma: f64) -> (f64, bool) {
    if gamma == 0.0 {
        return (1.0, false);
    }
    let t = gamma * log_u;
    if t > EXP_CLAMP {
        (EXP_CLAMP.exp(), true)
    } else {
        (t.exp(), false)
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalized softmax of `scale * values`; returns uniform weights when `scale == 0`.
pub fn softmax_scaled(values: &[f64], scale: f64) -> Option<Vec<f64>> {
    let m = values.len();
    if m == 0 {
        return Some(Vec::new());
    }
    if scale == 0.0 {
        return Some(vec![1.0 / m as f64; m]);
    }
    let scaled: Vec<f64> = values.iter().map(|v| scale * v).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Some(w)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator; zero for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
}

/// Median of a slice (average of the middle pair for even length). NaNs sort last.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = step * (1.0 + x[k].abs());
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}
