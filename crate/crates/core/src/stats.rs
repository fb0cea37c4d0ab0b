//! Order-fixed summation and Monte Carlo summary statistics.

/// Pairwise summation; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n > 0 && xs.iter().all(|x| *x == xs[0]) {
            return Self {
                mean: xs[0],
                stderr: 0.0,
                n,
            };
        }
        let m = mean(xs);
        let stderr = if n > 1 {
            let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean: m, stderr, n }
    }

    pub fn scaled(self, c: f64) -> Self {
        Self {
            mean: c * self.mean,
            stderr: c.abs() * self.stderr,
            n: self.n,
        }
    }

    /// `(self − other) / √(se₁² + se₂²)`, zero when both are exact and equal.
    pub fn z_against(&self, other: &MeanEstimate) -> f64 {
        z_score(self.mean - other.mean, self.stderr.hypot(other.stderr))
    }
}

/// `diff / se`, with `0/0 = 0` and `x/0 = ±∞`.
pub fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Sample covariance with the standard error of the centered-product mean.
pub fn covariance(a: &[f64], b: &[f64]) -> MeanEstimate {
    let ma = mean(a);
    let mb = mean(b);
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let n = prods.len();
    let est = MeanEstimate::from_samples(&prods);
    // unbiased normalization
    let c = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
    est.scaled(c)
}

/// Sample skewness and excess kurtosis.
pub fn skew_kurtosis(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let c2: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let c3: Vec<f64> = xs.iter().map(|x| (x - m).powi(3)).collect();
    let c4: Vec<f64> = xs.iter().map(|x| (x - m).powi(4)).collect();
    let v = mean(&c2);
    (mean(&c3) / v.powf(1.5), mean(&c4) / (v * v) - 3.0)
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn mean_estimate_of_known_sample() {
        let e = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert_abs_diff_eq!(e.stderr, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
        assert_eq!(MeanEstimate::from_samples(&[3.0; 10]).stderr, 0.0);
    }

    #[test]
    fn covariance_of_identical_samples_is_variance() {
        let xs = [1.0, 4.0, 2.0, 8.0];
        let c = covariance(&xs, &xs);
        let m = mean(&xs);
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(c.mean, var, epsilon = 1e-12);
    }

    #[test]
    fn z_score_edge_cases() {
        assert_eq!(z_score(0.0, 0.0), 0.0);
        assert_eq!(z_score(1.0, 0.0), f64::INFINITY);
        assert_eq!(z_score(-2.0, 1.0), -2.0);
    }

    #[test]
    fn slope_of_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        assert_abs_diff_eq!(ols_slope(&x, &y), 2.0, epsilon = 1e-14);
    }
}
