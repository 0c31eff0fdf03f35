//! Monte Carlo summaries used by the contract checks.

use statrs::distribution::{Binomial, DiscreteCDF};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub se_mean: f64,
    /// Standard error of the sample variance, √((m₄ − s⁴)/n).
    pub se_variance: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    let variance = if n > 1 { m2 / (nf - 1.0) } else { 0.0 };
    let central4 = m4 / nf;
    let pop_var = m2 / nf;
    Summary {
        n,
        mean,
        variance,
        se_mean: (variance / nf).sqrt(),
        se_variance: ((central4 - pop_var * pop_var).max(0.0) / nf).sqrt(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frequency {
    pub trials: u64,
    pub hits: u64,
}

impl Frequency {
    pub fn new(trials: u64, hits: u64) -> Self {
        Self { trials, hits }
    }

    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.trials as f64
    }

    pub fn se(&self) -> f64 {
        let f = self.rate();
        (f * (1.0 - f) / self.trials as f64).sqrt()
    }

    /// Standard error under a hypothesized rate.
    pub fn se_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// P(Bin(n, p) ≥ k).
pub fn binomial_upper_tail(n: u64, p: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    Binomial::new(p, n).expect("valid binomial").sf(k - 1)
}

/// P(Bin(n, p) ≤ k).
pub fn binomial_lower_tail(n: u64, p: f64, k: u64) -> f64 {
    1.0 - binomial_upper_tail(n, p, k + 1)
}

/// One-sided exact binomial test of the claim "success rate ≥ `claim`".
/// Returns the p-value P(Bin(n, claim) ≤ hits); the claim is rejected when
/// it falls below `alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClaimTest {
    pub hits: u64,
    pub trials: u64,
    pub p_value: f64,
    pub passed: bool,
}

pub fn claim_test(hits: u64, trials: u64, claim: f64, alpha: f64) -> ClaimTest {
    let p_value = binomial_lower_tail(trials, claim, hits);
    ClaimTest { hits, trials, p_value, passed: p_value >= alpha }
}

/// Least-squares slope of log y against log x.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_sample() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn binomial_tails_are_complementary() {
        let up = binomial_upper_tail(20, 0.3, 7);
        let low = binomial_lower_tail(20, 0.3, 6);
        assert!((up + low - 1.0).abs() < 1e-12);
        assert_eq!(binomial_upper_tail(5, 0.5, 0), 1.0);
        assert_eq!(binomial_upper_tail(5, 0.5, 6), 0.0);
    }

    #[test]
    fn claim_test_thresholds() {
        assert!(claim_test(134, 200, 2.0 / 3.0, 0.01).passed);
        assert!(!claim_test(100, 200, 2.0 / 3.0, 0.01).passed);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((log_log_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }
}
