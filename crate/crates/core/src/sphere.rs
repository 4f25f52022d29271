//! Sampling spherical Brownian motion on S¹ and S².
//!
//! "Standard" spherical Brownian motion is the diffusion generated by half the
//! Laplace–Beltrami operator, i.e. the solution of the Stroock equation
//! `dY = (I - Y Y^T) o dW`. The samplers below return `Y_tau` given `Y_0`.
//!
//! * [`SamplerKind::Exact2D`]: on the circle `Y_tau` is a rotation of `Y_0`
//!   by a `N(0, tau)` angle.
//! * [`SamplerKind::RadialAngular3D`]: on S² the polar angle measured from
//!   `Y_0` and the azimuth are sampled separately. The azimuth is uniform.
//!   The cosine of the polar angle is drawn from the Kingman-coalescent
//!   mixture `1 - 2 Beta(1, 1 + A_tau)`, with `A_tau` the number of surviving
//!   lineages, for `tau >= RADIAL_SMALL_TIME`. Below that the angle is drawn
//!   from the small-time heat-kernel expansion by rejection (law error
//!   `O(tau^3)` in low moments).
//! * [`SamplerKind::TangentSubstep`]: Gaussian steps in the tangent plane
//!   followed by projection back to the sphere. Weak order one, works in any
//!   dimension.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Velocity};

/// Default substep of [`SamplerKind::TangentSubstep`].
pub const DEFAULT_SUBSTEP: f64 = 0.01;

/// Below this time the 3D radial sampler uses the small-time expansion; at
/// and above it the lineage-count mixture.
pub const RADIAL_SMALL_TIME: f64 = 0.1;

/// Unit vector in `R^D`; normalised on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec<const D: usize>(Velocity<D>);

impl<const D: usize> UnitVec<D> {
    pub fn new(v: Velocity<D>) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid(
                "unit vector",
                format!("cannot normalise vector of norm {n}"),
            ));
        }
        Ok(Self(v / n))
    }

    /// Renormalises `v`, which must already be close to unit length.
    pub(crate) fn renormalized(v: Velocity<D>) -> Self {
        Self(v / v.norm())
    }

    /// The last coordinate axis `e_D`.
    pub fn north_pole() -> Self {
        let mut v = Velocity::<D>::zeros();
        v[D - 1] = 1.0;
        Self(v)
    }

    pub fn as_vector(&self) -> &Velocity<D> {
        &self.0
    }

    pub fn into_vector(self) -> Velocity<D> {
        self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.dot(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    #[serde(rename = "exact-2d")]
    Exact2D,
    #[serde(rename = "radial-angular-3d")]
    RadialAngular3D,
    TangentSubstep {
        substep: f64,
    },
}

impl SamplerKind {
    /// Exact sampler for the dimension.
    pub fn default_for(dim: usize) -> Self {
        if dim == 2 {
            SamplerKind::Exact2D
        } else {
            SamplerKind::RadialAngular3D
        }
    }

    pub fn tangent() -> Self {
        SamplerKind::TangentSubstep {
            substep: DEFAULT_SUBSTEP,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Exact2D => "exact-2d",
            SamplerKind::RadialAngular3D => "radial-angular-3d",
            SamplerKind::TangentSubstep { .. } => "tangent-substep",
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            SamplerKind::Exact2D if dim != 2 => Err(Error::InvalidSamplerForDim { kind: self.name(), dim }),
            SamplerKind::RadialAngular3D if dim != 3 => Err(Error::InvalidSamplerForDim { kind: self.name(), dim }),
            SamplerKind::TangentSubstep { substep } if !(substep > 0.0 && substep.is_finite()) => {
                Err(Error::invalid("substep", format!("must be positive, got {substep}")))
            }
            _ => crate::check_dim(dim),
        }
    }
}

/// Position at time `tau` of a standard spherical Brownian motion started at
/// `start`.
pub fn sample_sbm<const D: usize, R: Rng + ?Sized>(
    start: &UnitVec<D>,
    tau: f64,
    kind: SamplerKind,
    rng: &mut R,
) -> Result<UnitVec<D>> {
    kind.validate(D)?;
    if !(tau >= 0.0) {
        return Err(Error::invalid("tau", format!("sampling time must be >= 0, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(*start);
    }
    Ok(match kind {
        SamplerKind::Exact2D => rotate_circle(start, tau, rng),
        SamplerKind::RadialAngular3D => {
            let cos_polar = sample_radial_cos(tau, rng);
            let sin_polar = (1.0 - cos_polar * cos_polar).max(0.0).sqrt();
            let azimuth = 2.0 * PI * rng.random::<f64>();
            let mut local = Velocity::<D>::zeros();
            local[0] = sin_polar * azimuth.cos();
            local[1] = sin_polar * azimuth.sin();
            local[2] = cos_polar;
            rotate_from_pole(start, &UnitVec::renormalized(local))
        }
        SamplerKind::TangentSubstep { substep } => tangent_walk(start, tau, substep, rng),
    })
}

fn rotate_circle<const D: usize, R: Rng + ?Sized>(start: &UnitVec<D>, tau: f64, rng: &mut R) -> UnitVec<D> {
    let angle = tau.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let (s, c) = angle.sin_cos();
    let y = start.as_vector();
    let mut out = Velocity::<D>::zeros();
    out[0] = c * y[0] - s * y[1];
    out[1] = s * y[0] + c * y[1];
    UnitVec::renormalized(out)
}

fn tangent_walk<const D: usize, R: Rng + ?Sized>(
    start: &UnitVec<D>,
    tau: f64,
    substep: f64,
    rng: &mut R,
) -> UnitVec<D> {
    let n = (tau / substep).ceil().max(1.0) as usize;
    let h = tau / n as f64;
    let sqrt_h = h.sqrt();
    let mut y = *start.as_vector();
    for _ in 0..n {
        let xi = Velocity::<D>::from_fn(|_, _| rng.sample(StandardNormal));
        let tangent = xi - y * xi.dot(&y);
        y += tangent * sqrt_h;
        y /= y.norm();
    }
    UnitVec(y)
}

/// Cosine of the angle between `Y_0` and `Y_tau` for standard spherical
/// Brownian motion on S².
pub fn sample_radial_cos<R: Rng + ?Sized>(tau: f64, rng: &mut R) -> f64 {
    if tau <= 0.0 {
        return 1.0;
    }
    if tau < RADIAL_SMALL_TIME {
        return small_time_radial_cos(tau, rng);
    }
    // Given A lineages, (1 - cos) / 2 ~ Beta(1, 1 + A), whose inverse CDF is
    // 1 - (1 - u)^(1 / (1 + A)).
    let lineages = sample_lineage_count(tau, 2.0, rng.random::<f64>());
    let u: f64 = rng.random();
    (2.0 * (1.0 - u).powf(1.0 / (1.0 + lineages as f64)) - 1.0).clamp(-1.0, 1.0)
}

/// Small-time heat kernel on S²: density of the polar angle proportional to
/// `theta exp(-theta^2 / 2 tau) sqrt(sin(theta) / theta)`. Rayleigh proposal,
/// accepted with probability `sqrt(sin(theta) / theta)`.
fn small_time_radial_cos<R: Rng + ?Sized>(tau: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        let theta = (-2.0 * tau * (1.0 - u).ln()).sqrt();
        if theta >= PI {
            continue;
        }
        let accept = if theta > 0.0 { theta.sin() / theta } else { 1.0 };
        let v: f64 = rng.random();
        if v * v <= accept {
            return theta.cos();
        }
    }
}

/// Inverts the distribution of the lineage count `A_t` of Kingman's
/// coalescent with mutation rate `theta` (deaths from `m` at rate
/// `m (m + theta - 1) / 2`, started from infinity) at the uniform `u`.
///
/// The point probabilities are the alternating series
/// `q_m = sum_{k >= m} (-1)^(k-m) b_k(m)`,
/// `b_k(m) = (theta + 2k - 1) (theta + m)_(k-1) / (m! (k-m)!) exp(-k (k + theta - 1) t / 2)`.
/// For `t >= RADIAL_SMALL_TIME` and `theta = 2` the largest term is below
/// `1e6`, so double precision still resolves `q_m` to about `1e-10`.
pub fn sample_lineage_count(t: f64, theta: f64, u: f64) -> u64 {
    let mean = lineage_mean(t, theta);
    let cap = (mean + 60.0 * mean.sqrt() + 200.0) as u64;
    let mut cumulative = 0.0;
    for m in 0..cap {
        let q = lineage_probability(m, t, theta);
        cumulative += q;
        if cumulative > u || (q < 1e-17 && m as f64 > mean) {
            return m;
        }
    }
    cap
}

/// `P(A_t = m)` via the alternating series.
pub fn lineage_probability(m: u64, t: f64, theta: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let mf = m as f64;
    // b_m(m) = (theta + 2m - 1) Gamma(theta + 2m - 1) / (Gamma(theta + m) m!) e^{-m (m + theta - 1) t / 2}
    let log_first = (theta + 2.0 * mf - 1.0).ln() + ln_gamma(theta + 2.0 * mf - 1.0)
        - ln_gamma(theta + mf)
        - ln_gamma(mf + 1.0)
        - mf * (mf + theta - 1.0) * t / 2.0;
    let mut term = log_first.exp();
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut k = mf;
    // exp(-(2k + theta) t / 2), advanced by exp(-t) per term
    let decay_step = (-t).exp();
    let mut decay = (-(2.0 * mf + theta) * t / 2.0).exp();
    loop {
        sum += sign * term;
        let ratio = (theta + 2.0 * k + 1.0) / (theta + 2.0 * k - 1.0) * (theta + mf + k - 1.0) / (k - mf + 1.0) * decay;
        decay *= decay_step;
        let next = term * ratio;
        if ratio < 1.0 && next < 1e-18 {
            break;
        }
        term = next;
        sign = -sign;
        k += 1.0;
    }
    sum.clamp(0.0, 1.0)
}

/// Mean of the lineage count, `2 eta / t` with `beta = (theta - 1) t / 2` and
/// `eta = beta / (e^beta - 1)`. Exact as `t -> 0`; used only to bound loops.
fn lineage_mean(t: f64, theta: f64) -> f64 {
    let beta = 0.5 * (theta - 1.0) * t;
    let eta = if beta.abs() < 1e-12 { 1.0 } else { beta / beta.exp_m1() };
    2.0 * eta / t
}

/// Rotation (in 3D) or isometry (in 2D) taking the north pole `e_D` to
/// `start`, applied to `local`. Identity when `start` is the north pole.
pub fn rotate_from_pole<const D: usize>(start: &UnitVec<D>, local: &UnitVec<D>) -> UnitVec<D> {
    let s = start.as_vector();
    let x = local.as_vector();
    let mut out = Velocity::<D>::zeros();
    match D {
        2 => {
            out[0] = s[1] * x[0] + s[0] * x[1];
            out[1] = -s[0] * x[0] + s[1] * x[1];
        }
        3 => {
            // Rodrigues: R x = x + k × x + k × (k × x) / (1 + c), k = e3 × s, c = s3.
            let c = s[2];
            let k2 = s[0] * s[0] + s[1] * s[1];
            if c < 0.0 && k2 == 0.0 {
                // start = -e3: rotate by pi about e1.
                out[0] = x[0];
                out[1] = -x[1];
                out[2] = -x[2];
            } else {
                let inv = if c >= 0.0 { 1.0 / (1.0 + c) } else { (1.0 - c) / k2 };
                let k = [-s[1], s[0], 0.0];
                let kx = cross(k, [x[0], x[1], x[2]]);
                let kkx = cross(k, kx);
                for i in 0..3 {
                    out[i] = x[i] + kx[i] + kkx[i] * inv;
                }
            }
        }
        _ => unreachable!("sphere samplers are only defined for D = 2, 3"),
    }
    UnitVec::renormalized(out)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
