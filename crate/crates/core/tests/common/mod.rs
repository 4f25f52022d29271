//! Independent oracles shared by the integration tests.

/// Legendre polynomials `P_0..=P_lmax` at `x` by the three-term recurrence.
pub fn legendre_all(x: f64, lmax: usize) -> Vec<f64> {
    let mut p = vec![1.0, x];
    for l in 1..lmax {
        let lf = l as f64;
        p.push(((2.0 * lf + 1.0) * x * p[l] - lf * p[l - 1]) / (lf + 1.0));
    }
    p.truncate(lmax + 1);
    p
}

/// CDF of `cos(angle(Y_0, Y_tau))` for standard Brownian motion on S², from
/// the heat-kernel expansion
/// `F(x) = (1 + x)/2 + 1/2 sum_{l>=1} exp(-l(l+1) tau / 2) (P_{l+1}(x) - P_{l-1}(x))`.
pub fn heat_kernel_cos_cdf(x: f64, tau: f64) -> f64 {
    let lmax = ((60.0 / tau).sqrt() as usize + 10).min(4000);
    let p = legendre_all(x, lmax + 1);
    let mut f = 0.5 * (1.0 + x);
    for l in 1..=lmax {
        let w = (-((l * (l + 1)) as f64) * tau / 2.0).exp();
        if w < 1e-18 {
            break;
        }
        f += 0.5 * w * (p[l + 1] - p[l - 1]);
    }
    f.clamp(0.0, 1.0)
}
