//! Small statistical helpers used by the self-checks: goodness-of-fit
//! statistics and least-squares fits.

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

/// Pearson statistic for `counts` against cell probabilities `probs`.
/// Cells with expected count below 5 are merged into their neighbour.
/// Returns `(statistic, degrees of freedom)`.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> (f64, usize) {
    assert_eq!(counts.len(), probs.len());
    let n: u64 = counts.iter().sum();
    let total = n as f64;
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        obs += c as f64;
        exp += p * total;
        if exp >= 5.0 {
            merged.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 || obs > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => merged.push((obs, exp)),
        }
    }
    let stat = merged.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    (stat, merged.len().saturating_sub(1))
}

/// Upper `level` quantile of the chi-square law with `dof` degrees of freedom.
pub fn chi_square_critical(dof: usize, level: f64) -> f64 {
    ChiSquared::new(dof.max(1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - level)
}

/// `sup |F_n - F|` for a one-sample test. Sorts `samples` in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample statistic `sup |F_a - F_b|`. Sorts both inputs.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic Kolmogorov critical value at `level` for effective size `n`.
/// For two samples use `n = na nb / (na + nb)`.
pub fn ks_critical(n: f64, level: f64) -> f64 {
    (-(level / 2.0).ln() / 2.0).sqrt() / n.sqrt()
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Classical standard error of the slope.
    pub slope_se: f64,
    /// Newey–West standard error of the slope, robust to serial correlation
    /// in the residuals up to `lag`.
    pub slope_se_hac: f64,
    pub lag: usize,
}

impl LinearFit {
    /// Two-sided test of `slope == 0` at `level` using the HAC error and
    /// Student t quantiles with `n - 2` degrees of freedom.
    pub fn slope_is_zero(&self, n: usize, level: f64) -> bool {
        let t = StudentsT::new(0.0, 1.0, (n as f64 - 2.0).max(1.0)).expect("valid t law");
        let q = t.inverse_cdf(1.0 - level / 2.0);
        self.slope.abs() <= q * self.slope_se_hac
    }
}

/// Least-squares line through `(x, y)`. The HAC lag defaults to
/// `floor(4 (n/100)^(2/9))`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    assert!(n >= 3, "need at least three points");
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let s2 = resid.iter().map(|r| r * r).sum::<f64>() / (nf - 2.0);
    let slope_se = (s2 / sxx).sqrt();

    let lag = (4.0 * (nf / 100.0).powf(2.0 / 9.0)).floor() as usize;
    let u: Vec<f64> = x.iter().zip(&resid).map(|(a, r)| (a - mx) * r).collect();
    let mut s = u.iter().map(|v| v * v).sum::<f64>();
    for l in 1..=lag.min(n - 1) {
        let w = 1.0 - l as f64 / (lag as f64 + 1.0);
        let g: f64 = u[l..].iter().zip(&u[..n - l]).map(|(a, b)| a * b).sum();
        s += 2.0 * w * g;
    }
    let slope_se_hac = (s.max(0.0) * nf / (nf - 2.0)).sqrt() / sxx;
    LinearFit {
        slope,
        intercept,
        slope_se,
        slope_se_hac,
        lag,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-13);
        assert!(f.slope_se < 1e-12);
    }

    #[test]
    fn uniform_samples_pass() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(1);
        let mut u: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
        assert!(ks_statistic(&mut u, |x| x) < ks_critical(20_000.0, 0.01));
        let mut counts = [0u64; 10];
        for &x in &u {
            counts[(x * 10.0) as usize] += 1;
        }
        let (stat, dof) = chi_square(&counts, &[0.1; 10]);
        assert_eq!(dof, 9);
        assert!(stat < chi_square_critical(dof, 0.01));
        let mut v: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
        assert!(ks_two_sample(&mut u, &mut v) < ks_critical(10_000.0, 0.01));
        let mut w: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>().powf(1.2)).collect();
        assert!(ks_two_sample(&mut u, &mut w) > ks_critical(10_000.0, 0.01));
    }

    #[test]
    fn sparse_cells_merge() {
        let (_, dof) = chi_square(&[100, 1, 0, 99], &[0.5, 0.001, 0.001, 0.498]);
        assert_eq!(dof, 1);
    }

    #[test]
    fn hac_flags_trend_but_not_noise() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(2);
        let x: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let noise: Vec<f64> = (0..200).map(|_| rng.random::<f64>() - 0.5).collect();
        assert!(linear_fit(&x, &noise).slope_is_zero(200, 0.05));
        let trend: Vec<f64> = noise.iter().zip(&x).map(|(e, t)| e + 0.01 * t).collect();
        assert!(!linear_fit(&x, &trend).slope_is_zero(200, 0.05));
    }
}
