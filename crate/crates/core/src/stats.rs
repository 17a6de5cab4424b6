//! Monte Carlo summaries: compensated means, standard errors and the
//! two-sample Kolmogorov–Smirnov test.

use serde::{Deserialize, Serialize};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
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

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub se: f64,
}

impl MeanEstimate {
    /// Two-pass estimate; values are summed in slice order so the result
    /// only depends on the data.
    pub fn from_slice(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                variance: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = xs.iter().copied().collect::<KahanSum>().value() / n as f64;
        let ss = xs.iter().map(|x| (x - mean) * (x - mean)).collect::<KahanSum>().value();
        let variance = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        Self {
            n,
            mean,
            variance,
            se: (variance / n as f64).sqrt(),
        }
    }

    /// |mean − target| measured in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if self.se > 0.0 {
            d / self.se
        } else if d <= 1e-12 * target.abs().max(1.0) {
            // a degenerate sample that sits on the target up to rounding
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        self.z_score(target) <= k
    }
}

/// Difference of two independent estimates with combined SE.
pub fn difference(a: &MeanEstimate, b: &MeanEstimate) -> (f64, f64) {
    (a.mean - b.mean, (a.se * a.se + b.se * b.se).sqrt())
}

/// Variance of a sample together with a delta-method standard error,
/// SE² ≈ (m₄ − s⁴)/n.
pub fn variance_with_se(xs: &[f64]) -> (f64, f64) {
    let m = MeanEstimate::from_slice(xs);
    let n = xs.len() as f64;
    let m4 = xs.iter().map(|x| (x - m.mean).powi(4)).collect::<KahanSum>().value() / n;
    (m.variance, ((m4 - m.variance * m.variance).max(0.0) / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic Kolmogorov law
/// and Stephens' small-sample correction.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
    }
}

/// P(K > λ) for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}
