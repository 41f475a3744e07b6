//! Log-domain arithmetic helpers.

/// `log(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// `log(exp(a) + exp(b))`.
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Running log-sum-exp accumulator.
#[derive(Clone, Copy, Debug)]
pub struct LogAcc(pub f64);

impl Default for LogAcc {
    fn default() -> Self {
        LogAcc(f64::NEG_INFINITY)
    }
}

impl LogAcc {
    pub fn add(&mut self, x: f64) {
        self.0 = log_add(self.0, x);
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Normalize log weights into probabilities.
pub fn normalize(log_w: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(log_w);
    log_w.iter().map(|&w| (w - z).exp()).collect()
}

/// Relative distance between two positive numbers given by their logs.
pub fn log_rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).exp_m1().abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_handles_huge_spread() {
        let v = log_sum_exp(&[207.7, 0.0, -2.76]);
        assert!((v - 207.7).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    }

    #[test]
    fn log_add_matches_direct() {
        let a = 0.3f64.ln();
        let b = 0.5f64.ln();
        assert!((log_add(a, b) - 0.8f64.ln()).abs() < 1e-15);
        assert_eq!(log_add(f64::NEG_INFINITY, b), b);
        let mut acc = LogAcc::default();
        for x in [0.1f64, 0.2, 0.7] {
            acc.add(x.ln());
        }
        assert!(acc.value().abs() < 1e-15);
    }
}
