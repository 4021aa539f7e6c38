//! Scalar helpers. All transcendental functions route through `libm` so
//! results are identical with and without `std`.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn lgamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

/// Overflow-safe logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

pub const PROB_FLOOR: f64 = 1e-12;

/// `ln(sigmoid(x))` with the sigmoid clamped to `[1e-12, 1 - 1e-12]`.
///
/// Returns the value and its derivative with respect to `x`; the derivative
/// is zero wherever the clamp is active.
#[inline]
pub fn log_sigmoid_clamped(x: f64) -> (f64, f64) {
    let s = sigmoid(x);
    if s < PROB_FLOOR {
        (ln(PROB_FLOOR), 0.0)
    } else if s > 1.0 - PROB_FLOOR {
        (ln(1.0 - PROB_FLOOR), 0.0)
    } else {
        (ln(s), 1.0 - s)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Softmax of `scale * x` into `out`, with max subtraction.
pub fn softmax_scaled(x: &[f64], scale: f64, out: &mut [f64]) {
    let max = x
        .iter()
        .map(|v| scale * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, v) in out.iter_mut().zip(x) {
        *o = exp(scale * v - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_symmetric_and_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(2.0) - 0.8808).abs() < 1e-4);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }

    #[test]
    fn log_sigmoid_floors() {
        let (v, g) = log_sigmoid_clamped(1e6);
        assert_eq!(v, ln(1.0 - PROB_FLOOR));
        assert_eq!(g, 0.0);
        let (v, _) = log_sigmoid_clamped(-1e6);
        assert_eq!(v, ln(PROB_FLOOR));
    }

    #[test]
    fn softmax_handles_large_inputs() {
        let mut out = [0.0; 3];
        softmax_scaled(&[1000.0, 999.0, -5.0], 1.0, &mut out);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out[0] > out[1] && out[1] > out[2]);
    }
}
