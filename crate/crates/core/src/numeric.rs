//! Small numerical helpers shared by the likelihood and sampling code.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(sum(exp(v)))` with max-subtraction. Empty input gives `-inf`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = out.iter().sum();
    for w in &mut out {
        *w /= total;
    }
    out
}

/// Zero-based index of the largest entry; ties go to the smallest index.
pub fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = k;
        }
    }
    best
}

pub(crate) fn ln_factorial(n: u64) -> f64 {
    statrs::function::factorial::ln_factorial(n)
}

/// `log(1 - exp(-x))` for `x > 0`.
pub(crate) fn ln_one_minus_exp_neg(x: f64) -> f64 {
    if x > std::f64::consts::LN_2 {
        (-(-x).exp()).ln_1p()
    } else {
        (-(-x).exp_m1()).ln()
    }
}

/// Log-density of `Gamma(shape, rate)`; falls back to the kernel when the
/// hyperparameters make the prior improper.
pub(crate) fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    let kernel = (shape - 1.0) * x.ln() - rate * x;
    if shape > 0.0 && rate > 0.0 {
        kernel + shape * rate.ln() - statrs::function::gamma::ln_gamma(shape)
    } else {
        kernel
    }
}

/// Log-density of `N(0, variance * I)` at `v`.
pub(crate) fn normal_ln_pdf_iso(v: &[f64], variance: f64) -> f64 {
    let ss: f64 = v.iter().map(|x| x * x).sum();
    -0.5 * v.len() as f64 * (2.0 * std::f64::consts::PI * variance).ln() - 0.5 * ss / variance
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_sum_exp(&[1000.0, 0.0]) - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_go_left() {
        assert_eq!(argmax_first(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax_first(&[0.5, 0.5]), 0);
    }

    #[test]
    fn log_one_minus_exp_neg_matches_naive() {
        for &x in &[1e-8_f64, 0.1, 0.69, 0.7, 5.0, 40.0] {
            let naive = (1.0 - (-x).exp()).ln();
            assert!((ln_one_minus_exp_neg(x) - naive).abs() < 1e-7 * naive.abs().max(1.0));
        }
    }
}
