//! Closed-form solutions and initial conditions.
//!
//! The BKW solutions for Maxwell molecules are mixtures of a centred Gaussian
//! with covariance `K I` and the `|v|^2`-weighted Gaussian, whose squared
//! radius is `Gamma(d/2 + 1, 2K)` distributed. Both pieces are sampled
//! exactly.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::{Error, Result, Velocity};

/// Start of the BKW family: `t = 0` in 2D and `t = -6 ln 0.4` (`K = 0.6`) in
/// 3D, where the Gaussian weight vanishes.
pub fn bkw_t_min(dim: usize) -> Result<f64> {
    crate::check_dim(dim)?;
    Ok(if dim == 2 { 0.0 } else { -6.0 * 0.4f64.ln() })
}

/// BKW solution at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BkwParams {
    dim: usize,
    t: f64,
}

impl BkwParams {
    pub fn new(dim: usize, t: f64) -> Result<Self> {
        let t_min = bkw_t_min(dim)?;
        if !(t.is_finite() && t >= t_min - 1e-12) {
            return Err(Error::InvalidTime { dim, time: t, t_min });
        }
        Ok(Self { dim, t: t.max(t_min) })
    }

    /// The initial datum of the family.
    pub fn initial(dim: usize) -> Result<Self> {
        Self::new(dim, bkw_t_min(dim)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `K(t) = 1 - exp(-t/8) / 2` in 2D, `1 - exp(-t/6)` in 3D.
    pub fn k(&self) -> f64 {
        if self.dim == 2 {
            1.0 - 0.5 * (-self.t / 8.0).exp()
        } else {
            1.0 - (-self.t / 6.0).exp()
        }
    }

    /// Weight of the centred Gaussian component.
    pub fn gaussian_weight(&self) -> f64 {
        let k = self.k();
        if self.dim == 2 {
            2.0 - 1.0 / k
        } else {
            2.5 - 1.5 / k
        }
    }

    pub fn density(&self, v: &[f64]) -> f64 {
        let k = self.k();
        let r2: f64 = v.iter().map(|x| x * x).sum();
        let tail = (1.0 - k) / (2.0 * k * k) * r2;
        let g = (-r2 / (2.0 * k)).exp();
        if self.dim == 2 {
            (2.0 - 1.0 / k + tail) * g / (2.0 * PI * k)
        } else {
            (2.5 - 1.5 / k + tail) * g / (2.0 * PI * k).powf(1.5)
        }
    }

    /// `E |v|^4`.
    pub fn fourth_moment(&self) -> f64 {
        let (d, k) = (self.dim as f64, self.k());
        let shape = d / 2.0 + 1.0;
        let w = self.gaussian_weight();
        w * d * (d + 2.0) * k * k + (1.0 - w) * shape * (shape + 1.0) * 4.0 * k * k
    }

    /// `int f log f`, by radial quadrature.
    pub fn entropy(&self) -> f64 {
        let surface = if self.dim == 2 { 2.0 * PI } else { 4.0 * PI };
        let r_max = 40.0 * self.k().sqrt();
        let integrand = |r: f64| {
            let mut v = [0.0; 3];
            v[0] = r;
            let f = self.density(&v[..self.dim]);
            if f > 0.0 {
                f * f.ln() * surface * r.powi(self.dim as i32 - 1)
            } else {
                0.0
            }
        };
        simpson(integrand, 0.0, r_max, 40_000)
    }

    pub fn sample<const D: usize, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Velocity<D>> {
        if D != self.dim {
            return Err(Error::invalid(
                "dim",
                format!("BKW solution is {}D, sampler asked for {D}D", self.dim),
            ));
        }
        let k = self.k();
        let gauss = Velocity::<D>::from_fn(|_, _| rng.sample(StandardNormal));
        if rng.random::<f64>() < self.gaussian_weight() {
            return Ok(gauss * k.sqrt());
        }
        let gamma = Gamma::new(D as f64 / 2.0 + 1.0, 2.0 * k).expect("positive shape and scale");
        let r = gamma.sample(rng).sqrt();
        Ok(gauss.normalize() * r)
    }
}

/// Standard Maxwellian `(2 pi)^(-d/2) exp(-|v|^2 / 2)`.
pub fn maxwellian(v: &[f64]) -> f64 {
    let r2: f64 = v.iter().map(|x| x * x).sum();
    (-r2 / 2.0).exp() / (2.0 * PI).powf(v.len() as f64 / 2.0)
}

/// Two unit-variance Gaussians in 2D with weights 0.2 and 0.8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiMaxwellian {
    pub weight1: f64,
    pub u1: Velocity<2>,
    pub u2: Velocity<2>,
}

impl Default for BiMaxwellian {
    fn default() -> Self {
        Self {
            weight1: 0.2,
            u1: Velocity::<2>::new(-2.0, 1.0),
            u2: Velocity::<2>::new(1.0, -1.0),
        }
    }
}

impl BiMaxwellian {
    pub fn density(&self, v: &[f64]) -> f64 {
        let v = Velocity::<2>::new(v[0], v[1]);
        let g = |u: &Velocity<2>| (-(v - u).norm_squared() / 2.0).exp() / (2.0 * PI);
        self.weight1 * g(&self.u1) + (1.0 - self.weight1) * g(&self.u2)
    }

    pub fn mean(&self) -> Velocity<2> {
        self.u1 * self.weight1 + self.u2 * (1.0 - self.weight1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Velocity<2> {
        let u = if rng.random::<f64>() < self.weight1 {
            self.u1
        } else {
            self.u2
        };
        u + Velocity::<2>::from_fn(|_, _| rng.sample(StandardNormal))
    }
}

/// `f(x, v) = (1 + alpha cos(k x)) / (2 pi) exp(-|v|^2 / 2)` on
/// `[0, 2 pi / k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandauDamping {
    pub alpha: f64,
    pub wavenumber: f64,
}

impl LandauDamping {
    pub fn new(alpha: f64, wavenumber: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 1), got {alpha}")));
        }
        if !(wavenumber > 0.0 && wavenumber.is_finite()) {
            return Err(Error::invalid(
                "wavenumber",
                format!("must be positive, got {wavenumber}"),
            ));
        }
        Ok(Self { alpha, wavenumber })
    }

    /// Domain length `2 pi / k`.
    pub fn length(&self) -> f64 {
        2.0 * PI / self.wavenumber
    }

    pub fn density(&self, x: f64, v: &[f64]) -> f64 {
        (1.0 + self.alpha * (self.wavenumber * x).cos()) * maxwellian(v)
    }

    /// Normalised spatial CDF `(x + (alpha/k) sin(k x)) / L`.
    pub fn position_cdf(&self, x: f64) -> f64 {
        (x + self.alpha / self.wavenumber * (self.wavenumber * x).sin()) / self.length()
    }

    /// Inverts [`Self::position_cdf`] by bisection to `1e-12`.
    pub fn position_quantile(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, self.length());
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.position_cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, Velocity<2>) {
        let x = self
            .position_quantile(rng.random::<f64>())
            .min(self.length() * (1.0 - f64::EPSILON));
        let v = Velocity::<2>::from_fn(|_, _| rng.sample(StandardNormal));
        (x, v)
    }
}

/// Composite Simpson rule with `n` (rounded up to even) panels.
pub(crate) fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use crate::stats;
    use rand::SeedableRng;

    /// Tensor Simpson quadrature over `[-l, l]^2`.
    fn integrate_2d(f: impl Fn(&[f64]) -> f64, l: f64, n: usize) -> f64 {
        simpson(|x| simpson(|y| f(&[x, y]), -l, l, n), -l, l, n)
    }

    fn integrate_3d_radial(f: impl Fn(&[f64]) -> f64) -> f64 {
        simpson(|r| 4.0 * PI * r * r * f(&[r, 0.0, 0.0]), 0.0, 30.0, 6000)
    }

    #[test]
    fn bkw_values() {
        let p = BkwParams::new(2, 0.0).unwrap();
        assert_eq!(p.k(), 0.5);
        assert_eq!(p.density(&[0.0, 0.0]), 0.0);
        assert!((p.density(&[1.0, 0.0]) - (-1.0f64).exp() / PI).abs() < 1e-15);
        assert!((p.density(&[1.0, 0.0]) - 0.11709966).abs() < 1e-8);
        let q = BkwParams::initial(3).unwrap();
        assert!((q.k() - 0.6).abs() < 1e-14);
        assert!(q.gaussian_weight().abs() < 1e-14);
        assert!(matches!(BkwParams::new(3, 1.0), Err(Error::InvalidTime { .. })));
        assert!(matches!(BkwParams::new(2, -0.1), Err(Error::InvalidTime { .. })));
        assert!(BkwParams::new(4, 1.0).is_err());
    }

    #[test]
    fn bkw_mass_energy_and_fourth_moment_by_quadrature() {
        for t in [0.0, 3.0, 40.0] {
            let p = BkwParams::new(2, t).unwrap();
            let mass = integrate_2d(|v| p.density(v), 12.0, 600);
            let energy = integrate_2d(|v| (v[0] * v[0] + v[1] * v[1]) * p.density(v), 12.0, 600);
            let m4 = integrate_2d(|v| (v[0] * v[0] + v[1] * v[1]).powi(2) * p.density(v), 12.0, 600);
            assert!((mass - 1.0).abs() < 1e-6, "{mass}");
            assert!((energy - 2.0).abs() < 1e-6, "{energy}");
            assert!((m4 - p.fourth_moment()).abs() < 1e-6, "{m4}");
            assert!((p.fourth_moment() - (16.0 * p.k() - 8.0 * p.k() * p.k())).abs() < 1e-12);
        }
        for t in [bkw_t_min(3).unwrap(), 8.0, 30.0] {
            let p = BkwParams::new(3, t).unwrap();
            assert!((integrate_3d_radial(|v| p.density(v)) - 1.0).abs() < 1e-6);
            let energy = integrate_3d_radial(|v| v[0] * v[0] * p.density(v));
            assert!((energy - 3.0).abs() < 1e-6);
            let m4 = integrate_3d_radial(|v| v[0].powi(4) * p.density(v));
            assert!((m4 - p.fourth_moment()).abs() < 1e-6);
        }
    }

    #[test]
    fn bkw_entropy_matches_grid_quadrature() {
        let p = BkwParams::new(2, 0.0).unwrap();
        let direct = integrate_2d(
            |v| {
                let f = p.density(v);
                if f > 0.0 {
                    f * f.ln()
                } else {
                    0.0
                }
            },
            12.0,
            800,
        );
        assert!((p.entropy() - direct).abs() < 1e-6, "{} vs {direct}", p.entropy());
        let late = BkwParams::new(2, 1e4).unwrap();
        assert!((late.entropy() + 1.0 + (2.0 * PI).ln()).abs() < 1e-6);
    }

    #[test]
    fn bkw_samples_energy_and_histogram() {
        let mut rng = StreamRng::seed_from_u64(12);
        for t in [0.0, 5.0] {
            let p = BkwParams::new(2, t).unwrap();
            let n = 1_000_000;
            let samples: Vec<Velocity<2>> = (0..n).map(|_| p.sample::<2, _>(&mut rng).unwrap()).collect();
            let e: Vec<f64> = samples.iter().map(|v| v.norm_squared()).collect();
            let mean = e.iter().sum::<f64>() / n as f64;
            let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            assert!((mean - 2.0).abs() < 3.0 * (var / n as f64).sqrt(), "{mean}");

            // 16 x 16 cells on [-4, 4]^2 plus one overflow cell; exact cell
            // probabilities by quadrature of the density.
            let (cells, l) = (16usize, 4.0);
            let h = 2.0 * l / cells as f64;
            let mut probs = Vec::with_capacity(cells * cells + 1);
            for i in 0..cells {
                for j in 0..cells {
                    let (x0, y0) = (-l + i as f64 * h, -l + j as f64 * h);
                    probs.push(simpson(
                        |x| simpson(|y| p.density(&[x, y]), y0, y0 + h, 16),
                        x0,
                        x0 + h,
                        16,
                    ));
                }
            }
            probs.push(1.0 - probs.iter().sum::<f64>());
            let mut counts = vec![0u64; probs.len()];
            for v in &samples {
                let (i, j) = (((v[0] + l) / h).floor(), ((v[1] + l) / h).floor());
                if (0.0..cells as f64).contains(&i) && (0.0..cells as f64).contains(&j) {
                    counts[i as usize * cells + j as usize] += 1;
                } else {
                    counts[cells * cells] += 1;
                }
            }
            let (stat, dof) = stats::chi_square(&counts, &probs);
            assert!(stat < stats::chi_square_critical(dof, 0.01), "t = {t}: {stat} on {dof}");
        }
        let p3 = BkwParams::initial(3).unwrap();
        let n = 200_000;
        let mean: f64 = (0..n)
            .map(|_| p3.sample::<3, _>(&mut rng).unwrap().norm_squared())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 3.0).abs() < 0.03);
        assert!(p3.sample::<2, _>(&mut rng).is_err());
    }

    #[test]
    fn bimaxwellian() {
        let b = BiMaxwellian::default();
        let expected = (0.4 + 1.6 * (-6.5f64).exp()) / (4.0 * PI);
        assert!((b.density(&[-2.0, 1.0]) - expected).abs() < 1e-15);
        assert!((integrate_2d(|v| b.density(v), 14.0, 700) - 1.0).abs() < 1e-6);
        let mut rng = StreamRng::seed_from_u64(3);
        let n = 400_000;
        let s: Velocity<2> = (0..n).map(|_| b.sample(&mut rng)).sum::<Velocity<2>>() / n as f64;
        assert!((b.mean() - Velocity::<2>::new(0.4, -0.6)).norm() < 1e-15);
        // Per-axis variance 1 + 0.2*0.8*|u1-u2|_a^2: 2.44 and 1.64.
        assert!((s[0] - 0.4).abs() < 3.0 * (2.44 / n as f64).sqrt());
        assert!((s[1] + 0.6).abs() < 3.0 * (1.64 / n as f64).sqrt());
    }

    #[test]
    fn landau_damping_initial_condition() {
        let ld = LandauDamping::new(0.5, 0.5).unwrap();
        assert!((ld.length() - 4.0 * PI).abs() < 1e-15);
        let total = simpson(|x| integrate_2d(|v| ld.density(x, v), 10.0, 200), 0.0, ld.length(), 200);
        assert!((total - 4.0 * PI).abs() < 1e-6);
        assert!(LandauDamping::new(1.0, 0.5).is_err());

        let flat = LandauDamping::new(0.0, 0.5).unwrap();
        assert!((flat.position_quantile(0.25) - PI).abs() < 1e-10);

        let mut rng = StreamRng::seed_from_u64(4);
        let bins = 50;
        let mut counts = vec![0u64; bins];
        let n = 1_000_000;
        for _ in 0..n {
            let (x, _) = ld.sample(&mut rng);
            assert!((0.0..ld.length()).contains(&x));
            counts[(x / ld.length() * bins as f64) as usize] += 1;
        }
        // Bin probabilities from the closed-form antiderivative of 1 + a cos(x/2).
        let anti = |x: f64| (x + 2.0 * 0.5 * (0.5 * x).sin()) / (4.0 * PI);
        let w = 4.0 * PI / bins as f64;
        let probs: Vec<f64> = (0..bins)
            .map(|b| anti((b + 1) as f64 * w) - anti(b as f64 * w))
            .collect();
        let (stat, dof) = stats::chi_square(&counts, &probs);
        assert!(stat < stats::chi_square_critical(dof, 0.01), "{stat}");
    }
}
