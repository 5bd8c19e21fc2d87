//! Small statistics toolkit: summaries, batch means, goodness-of-fit tests and
//! quadrature.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub err: f64,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Self { mean, err: 0.0 }
    }
}

/// Sample mean and standard error (`s / sqrt(n)`).
pub fn mean_se(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return Estimate { mean: f64::NAN, err: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return Estimate { mean, err: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate { mean, err: (var / n).sqrt() }
}

/// Batch-means estimate from a correlated series.
///
/// The series is cut into `batches` equal blocks (the tail remainder is
/// dropped) and the standard error is taken across block means.
pub fn batch_means(series: &[f64], batches: usize) -> Estimate {
    if batches < 2 || series.len() < batches {
        return mean_se(series);
    }
    let size = series.len() / batches;
    let means: Vec<f64> = series.chunks_exact(size).take(batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    mean_se(&means)
}

/// Asymptotic Kolmogorov tail `P(K > x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        // the alternating series converges slowly here; use the theta-function
        // form of the CDF instead
        let s: f64 = (1..=50)
            .map(|k| {
                let a = (2 * k - 1) as f64 * std::f64::consts::PI / x;
                (-a * a / 8.0).exp()
            })
            .sum();
        return 1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> TestOutcome {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    TestOutcome { statistic: d, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) }
}

/// Two-sample Kolmogorov-Smirnov test.
///
/// Ties are handled by advancing both samples past equal values, so
/// degenerate (constant) samples compare equal.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestOutcome {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.total_cmp(q));
    ys.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    TestOutcome { statistic: d, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) }
}

/// Pearson chi-squared goodness of fit.
///
/// `expected` holds expected counts; cells with expected count below
/// `min_expected` are pooled into one cell.
pub fn chi_squared(observed: &[u64], expected: &[f64], min_expected: f64) -> Result<TestOutcome> {
    if observed.len() != expected.len() {
        return Err(invalid("observed and expected lengths differ"));
    }
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e < min_expected {
            pool_o += o as f64;
            pool_e += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    }
    if cells < 2 {
        return Err(invalid("chi-squared test needs at least two cells"));
    }
    let dist = ChiSquared::new((cells - 1) as f64).map_err(|e| invalid(e.to_string()))?;
    Ok(TestOutcome { statistic: stat, p_value: dist.sf(stat) })
}

/// Composite Simpson rule on an increasing, not necessarily uniform grid.
///
/// Pairs of intervals are integrated with the three-point rule for unequal
/// spacing; a trailing odd interval uses the matching correction.
pub fn simpson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid("grid and values differ in length"));
    }
    if x.len() < 3 {
        return Err(invalid("Simpson integration needs at least three grid points"));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("grid must be strictly increasing"));
    }
    let pair = |i: usize| {
        let h0 = x[i + 1] - x[i];
        let h1 = x[i + 2] - x[i + 1];
        let s = h0 + h1;
        s / 6.0 * ((2.0 - h1 / h0) * y[i] + s * s / (h0 * h1) * y[i + 1] + (2.0 - h0 / h1) * y[i + 2])
    };
    let intervals = x.len() - 1;
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 <= intervals {
        total += pair(i);
        i += 2;
    }
    if intervals % 2 == 1 {
        // last interval from the quadratic through the final three points
        let k = x.len() - 3;
        let (h0, h1) = (x[k + 1] - x[k], x[k + 2] - x[k + 1]);
        let a = (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1));
        let b = (h1 * h1 + 3.0 * h0 * h1) / (6.0 * h0);
        let c = h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
        total += a * y[k + 2] + b * y[k + 1] - c * y[k];
    }
    Ok(total)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}
