//! Random pairing, the two pairwise collision steps and the homogeneous
//! simulation driver.
//!
//! Each step re-pairs the particles uniformly at random and updates every pair
//! independently. With an explicit [`Pairing`], a pair `(i, j)` with `i < j`
//! draws its randomness from `RngStream::new(seed, step, i)`. The driver
//! [`HomogeneousSim`] instead shuffles the stored velocities themselves and
//! pairs slots `(2k, 2k + 1)`, drawing from stream `k`; this keeps memory
//! access local for large ensembles. Either way trajectories are identical
//! however the pair updates are scheduled.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DensityGrid, DiagnosticsRecord, GridSpec};
use crate::kernels::{self, KernelParams, Z_FLOOR};
use crate::rng::{RngStream, PAIRING_STREAM};
use crate::sphere::{sample_sbm, SamplerKind, UnitVec};
use crate::{Error, Result, Velocity};

/// Particle velocities. At least two particles, all components finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble<const D: usize> {
    velocities: Vec<Velocity<D>>,
}

impl<const D: usize> ParticleEnsemble<D> {
    pub fn new(velocities: Vec<Velocity<D>>) -> Result<Self> {
        crate::check_dim(D)?;
        if velocities.len() < 2 {
            return Err(Error::invalid(
                "ensemble",
                format!("need at least 2 particles, got {}", velocities.len()),
            ));
        }
        if let Some(i) = velocities.iter().position(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFiniteState(format!("velocity of particle {i}")));
        }
        Ok(Self { velocities })
    }

    /// `n` independent draws; particle `i` uses the stream `(seed, step, i)`.
    pub fn sample(
        n: usize,
        seed: u64,
        step: u64,
        draw: impl Fn(&mut crate::rng::StreamRng) -> Result<Velocity<D>> + Sync,
    ) -> Result<Self> {
        let velocities = (0..n as u64)
            .into_par_iter()
            .map(|i| draw(&mut RngStream::new(seed, step, i).rng()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(velocities)
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn velocities(&self) -> &[Velocity<D>] {
        &self.velocities
    }

    pub fn into_velocities(self) -> Vec<Velocity<D>> {
        self.velocities
    }
}

/// A fixed-point-free involution `theta` on `0..N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    theta: Vec<usize>,
}

impl Pairing {
    pub fn new(theta: Vec<usize>) -> Result<Self> {
        let n = theta.len();
        for (i, &j) in theta.iter().enumerate() {
            if j >= n || j == i || theta[j] != i {
                return Err(Error::invalid(
                    "pairing",
                    format!("not a fixed-point-free involution at {i}"),
                ));
            }
        }
        Ok(Self { theta })
    }

    pub fn partner(&self, i: usize) -> usize {
        self.theta[i]
    }

    pub fn theta(&self) -> &[usize] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Pairs `(i, theta(i))` with `i < theta(i)`, in increasing `i`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.theta
            .iter()
            .enumerate()
            .filter(|(i, j)| i < j)
            .map(|(i, &j)| (i, j))
    }
}

/// Uniform perfect matching of `n` particles: a uniform shuffle consumed two
/// at a time.
pub fn random_pairing<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Pairing> {
    if n < 2 || n % 2 == 1 {
        return Err(Error::OddParticleCount(n));
    }
    let mut order = Vec::new();
    shuffled_order(&mut order, n, rng)?;
    let mut theta = vec![0; n];
    for p in order.chunks_exact(2) {
        theta[p[0] as usize] = p[1] as usize;
        theta[p[1] as usize] = p[0] as usize;
    }
    Ok(Pairing { theta })
}

/// Fills `order` with a uniform permutation of `0..n`; consecutive entries
/// are the pairs of [`random_pairing`].
fn shuffled_order<R: Rng + ?Sized>(order: &mut Vec<u32>, n: usize, rng: &mut R) -> Result<()> {
    if n < 2 || n % 2 == 1 {
        return Err(Error::OddParticleCount(n));
    }
    let n = u32::try_from(n).map_err(|_| Error::invalid("particles", "at most 2^32 - 1 supported"))?;
    order.clear();
    order.extend(0..n);
    order.shuffle(rng);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Exact spherical Brownian motion of the relative velocity.
    Sbm,
    /// Euler–Maruyama discretisation of the pair SDE.
    Em,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub kernel: KernelParams,
    pub sampler: SamplerKind,
    pub seed: u64,
}

impl SchemeConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.scheme == Scheme::Sbm {
            self.sampler.validate(dim)?;
        }
        self.kernel.warn_if_inadmissible(dim);
        Ok(())
    }
}

/// SBM collision of one pair over a window `dt`. Returns `false` (and leaves
/// the pair alone) when the pair is degenerate.
pub fn sbm_collide_pair<const D: usize, R: Rng + ?Sized>(
    vi: &mut Velocity<D>,
    vj: &mut Velocity<D>,
    kernel: &KernelParams,
    dt: f64,
    sampler: SamplerKind,
    rng: &mut R,
) -> Result<bool> {
    let z = *vi - *vj;
    let r = z.norm();
    if !(r >= Z_FLOOR) {
        return Ok(false);
    }
    let tau = kernels::time_scale_k(&z, kernel)? * dt;
    let dir = sample_sbm(&UnitVec::new(z)?, tau, sampler, rng)?;
    let s = *vi + *vj;
    let z_new = dir.into_vector() * r;
    *vi = (s + z_new) * 0.5;
    *vj = (s - z_new) * 0.5;
    Ok(true)
}

/// Euler–Maruyama velocity increment `Dv = K(z) dt + sqrt(A(z)) sqrt(dt) xi`
/// for a standard Gaussian `xi`. Particle `i` gains `Dv`, its partner loses it.
pub fn em_increment<const D: usize>(
    z: &Velocity<D>,
    kernel: &KernelParams,
    dt: f64,
    xi: &Velocity<D>,
) -> Result<Velocity<D>> {
    let drift = kernels::kernel_k(z, kernel)?;
    let sigma = kernels::kernel_sigma(z, kernel)?;
    Ok(drift * dt + sigma * xi * dt.sqrt())
}

/// EM collision of one pair. Returns `false` for a degenerate pair.
pub fn em_collide_pair<const D: usize, R: Rng + ?Sized>(
    vi: &mut Velocity<D>,
    vj: &mut Velocity<D>,
    kernel: &KernelParams,
    dt: f64,
    rng: &mut R,
) -> Result<bool> {
    let z = *vi - *vj;
    if !(z.norm() >= Z_FLOOR) {
        return Ok(false);
    }
    let xi = Velocity::<D>::from_fn(|_, _| rng.sample(StandardNormal));
    let dv = em_increment(&z, kernel, dt, &xi)?;
    *vi += dv;
    *vj -= dv;
    Ok(true)
}

fn pairwise_step<const D: usize>(
    ens: &mut ParticleEnsemble<D>,
    pairing: &Pairing,
    cfg: &SchemeConfig,
    step: u64,
) -> Result<usize> {
    if pairing.len() != ens.len() {
        return Err(Error::invalid(
            "pairing",
            format!("pairs {} particles, ensemble has {}", pairing.len(), ens.len()),
        ));
    }
    let flat: Vec<u32> = pairing.pairs().flat_map(|(i, j)| [i as u32, j as u32]).collect();
    update_pairs(ens, &flat, cfg, step)
}

/// Collides the disjoint pairs `(flat[2k], flat[2k + 1])`. A pair draws from
/// the stream of its smaller index, so the result does not depend on the
/// order of the pairs. Returns the number of pairs that moved.
fn update_pairs<const D: usize>(
    ens: &mut ParticleEnsemble<D>,
    flat: &[u32],
    cfg: &SchemeConfig,
    step: u64,
) -> Result<usize> {
    let ordered = |p: &[u32]| {
        let (a, b) = (p[0] as usize, p[1] as usize);
        (a.min(b), a.max(b))
    };
    let mut updated = vec![(Velocity::zeros(), Velocity::zeros()); flat.len() / 2];
    let vs = &ens.velocities;
    let moved = flat
        .par_chunks_exact(2)
        .zip(updated.par_iter_mut())
        .map(|(p, slot)| {
            let (i, j) = ordered(p);
            let (mut vi, mut vj) = (vs[i], vs[j]);
            let mut rng = RngStream::new(cfg.seed, step, i as u64).rng();
            let moved = match cfg.scheme {
                Scheme::Sbm => sbm_collide_pair(&mut vi, &mut vj, &cfg.kernel, cfg.dt, cfg.sampler, &mut rng)?,
                Scheme::Em => em_collide_pair(&mut vi, &mut vj, &cfg.kernel, cfg.dt, &mut rng)?,
            };
            *slot = (vi, vj);
            Ok(usize::from(moved))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    for (p, (vi, vj)) in flat.chunks_exact(2).zip(updated) {
        let (i, j) = ordered(p);
        ens.velocities[i] = vi;
        ens.velocities[j] = vj;
    }
    Ok(moved)
}

/// One SBM collision window applied in place. Returns the number of pairs
/// that collided; degenerate pairs are skipped.
pub fn sbm_collision_step<const D: usize>(
    ens: &mut ParticleEnsemble<D>,
    pairing: &Pairing,
    cfg: &SchemeConfig,
    step: u64,
) -> Result<usize> {
    pairwise_step(
        ens,
        pairing,
        &SchemeConfig {
            scheme: Scheme::Sbm,
            ..*cfg
        },
        step,
    )
}

/// One Euler–Maruyama collision window applied in place.
pub fn em_collision_step<const D: usize>(
    ens: &mut ParticleEnsemble<D>,
    pairing: &Pairing,
    cfg: &SchemeConfig,
    step: u64,
) -> Result<usize> {
    pairwise_step(
        ens,
        pairing,
        &SchemeConfig {
            scheme: Scheme::Em,
            ..*cfg
        },
        step,
    )
}

/// Particles per bucket of the pairing shuffle, so that a bucket stays cache
/// resident while it is shuffled.
const SHUFFLE_BUCKET: usize = 4096;

/// Puts `vs` in uniformly random order (Rao–Sandelius): iid uniform bucket
/// labels, a stable scatter by label, then a Fisher–Yates shuffle of each
/// bucket.
fn bucket_shuffle<const D: usize, R: Rng + ?Sized>(
    vs: &mut Vec<Velocity<D>>,
    spare: &mut Vec<Velocity<D>>,
    labels: &mut Vec<u32>,
    rng: &mut R,
    bucket: usize,
) {
    let n = vs.len();
    let buckets = n / bucket;
    if buckets < 2 {
        vs.shuffle(rng);
        return;
    }
    let mut starts = vec![0usize; buckets + 1];
    labels.clear();
    labels.extend((0..n).map(|_| {
        let b = rng.random_range(0..buckets as u32);
        starts[b as usize + 1] += 1;
        b
    }));
    for b in 0..buckets {
        starts[b + 1] += starts[b];
    }
    spare.resize(n, Velocity::zeros());
    let mut cursor = starts.clone();
    for (v, &b) in vs.iter().zip(labels.iter()) {
        spare[cursor[b as usize]] = *v;
        cursor[b as usize] += 1;
    }
    for b in 0..buckets {
        spare[starts[b]..starts[b + 1]].shuffle(rng);
    }
    std::mem::swap(vs, spare);
}

/// Space-homogeneous particle system advanced one window at a time. The
/// ensemble is stored in pairing order, so particle indices are not stable
/// across steps.
#[derive(Debug, Clone)]
pub struct HomogeneousSim<const D: usize> {
    cfg: SchemeConfig,
    ensemble: ParticleEnsemble<D>,
    step: u64,
    spare: Vec<Velocity<D>>,
    labels: Vec<u32>,
}

impl<const D: usize> HomogeneousSim<D> {
    pub fn new(cfg: SchemeConfig, ensemble: ParticleEnsemble<D>) -> Result<Self> {
        cfg.validate(D)?;
        if ensemble.len() % 2 == 1 {
            return Err(Error::OddParticleCount(ensemble.len()));
        }
        Ok(Self {
            cfg,
            ensemble,
            step: 0,
            spare: Vec::new(),
            labels: Vec::new(),
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn ensemble(&self) -> &ParticleEnsemble<D> {
        &self.ensemble
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    /// Re-pairs and collides once. Fails with [`Error::NonFiniteState`] if a
    /// velocity overflows.
    pub fn step(&mut self) -> Result<()> {
        let mut rng = RngStream::new(self.cfg.seed, self.step, PAIRING_STREAM).rng();
        bucket_shuffle(
            &mut self.ensemble.velocities,
            &mut self.spare,
            &mut self.labels,
            &mut rng,
            SHUFFLE_BUCKET,
        );
        let (cfg, step) = (&self.cfg, self.step);
        let finite = |v: &Velocity<D>| v.iter().all(|x| x.is_finite());
        let bad = self
            .ensemble
            .velocities
            .par_chunks_exact_mut(2)
            .enumerate()
            .map(|(k, pair)| {
                let (a, b) = pair.split_at_mut(1);
                let (vi, vj) = (&mut a[0], &mut b[0]);
                let mut rng = RngStream::new(cfg.seed, step, k as u64).rng();
                match cfg.scheme {
                    Scheme::Sbm => sbm_collide_pair(vi, vj, &cfg.kernel, cfg.dt, cfg.sampler, &mut rng)?,
                    Scheme::Em => em_collide_pair(vi, vj, &cfg.kernel, cfg.dt, &mut rng)?,
                };
                Ok((!(finite(vi) && finite(vj))).then_some(2 * k))
            })
            .try_reduce(
                || None,
                |x, y| {
                    Ok(match (x, y) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        _ => x.or(y),
                    })
                },
            )?;
        self.step += 1;
        if let Some(i) = bad {
            return Err(Error::NonFiniteState(format!(
                "particle {i} after step {} (t = {})",
                self.step,
                self.time()
            )));
        }
        Ok(())
    }
}

/// Reference density on a grid at a given time, if one is available then.
pub type ReferenceFn = dyn Fn(f64, &GridSpec) -> Result<Option<DensityGrid>> + Send + Sync;

/// What to record at each checkpoint.
pub struct DiagnosticsPlan {
    /// Grid for the mollified density; entropy and L2 error need it.
    pub grid: Option<GridSpec>,
    /// Mollifier variance.
    pub eps: f64,
    pub reference: Option<Box<ReferenceFn>>,
    /// Keep a copy of the ensemble at every checkpoint.
    pub snapshots: bool,
}

impl Default for DiagnosticsPlan {
    fn default() -> Self {
        Self {
            grid: None,
            eps: diagnostics::DEFAULT_EPS,
            reference: None,
            snapshots: false,
        }
    }
}

impl DiagnosticsPlan {
    pub fn record<const D: usize>(&self, time: f64, velocities: &[Velocity<D>]) -> Result<DiagnosticsRecord> {
        let m = diagnostics::moments(velocities);
        let (mut entropy, mut rel_l2_error) = (None, None);
        if let Some(spec) = &self.grid {
            let density = diagnostics::mollified_density(velocities, self.eps, spec)?;
            entropy = Some(diagnostics::entropy(&density));
            if let Some(reference) = self.reference.as_ref().map(|f| f(time, spec)).transpose()?.flatten() {
                rel_l2_error = Some(diagnostics::relative_l2_error(&reference, &density)?);
            }
        }
        Ok(DiagnosticsRecord {
            time,
            momentum: m.momentum.iter().copied().collect(),
            kinetic_energy: m.kinetic_energy,
            entropy,
            rel_l2_error,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint<const D: usize> {
    pub time: f64,
    pub snapshot: Option<ParticleEnsemble<D>>,
    pub record: DiagnosticsRecord,
}

/// Checkpoint times as step indices. Each time must be a multiple of `dt`
/// within `[0, t_end]`.
pub fn checkpoint_steps(checkpoints: &[f64], dt: f64, t_end: f64) -> Result<Vec<u64>> {
    let mut steps = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidCheckpoint {
                time: t,
                reason: "must be finite and >= 0",
            });
        }
        let k = t / dt;
        let rounded = k.round();
        if (k - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::InvalidCheckpoint {
                time: t,
                reason: "not a multiple of dt",
            });
        }
        if t > t_end * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::InvalidCheckpoint {
                time: t,
                reason: "beyond t_end",
            });
        }
        steps.push(rounded as u64);
    }
    steps.sort_unstable();
    steps.dedup();
    Ok(steps)
}

/// Runs `ceil(t_end / dt)` windows from `init`, recording diagnostics at the
/// requested checkpoint times.
pub fn simulate_homogeneous<const D: usize>(
    cfg: SchemeConfig,
    init: ParticleEnsemble<D>,
    t_end: f64,
    checkpoints: &[f64],
    plan: &DiagnosticsPlan,
) -> Result<Vec<Checkpoint<D>>> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("t_end", format!("must be finite and >= 0, got {t_end}")));
    }
    let mut sim = HomogeneousSim::new(cfg, init)?;
    let total = (t_end / cfg.dt - 1e-9).ceil().max(0.0) as u64;
    let wanted = checkpoint_steps(checkpoints, cfg.dt, t_end)?;

    let mut out = Vec::with_capacity(wanted.len());
    let mut next = wanted.iter().peekable();
    loop {
        if next.peek().is_some_and(|&&s| s == sim.steps_taken()) {
            next.next();
            let time = sim.time();
            let record = plan.record(time, sim.ensemble().velocities())?;
            log::debug!("checkpoint t = {time}: E = {}", record.kinetic_energy);
            out.push(Checkpoint {
                time,
                snapshot: plan.snapshots.then(|| sim.ensemble().clone()),
                record,
            });
        }
        if sim.steps_taken() >= total {
            break;
        }
        sim.step()?;
    }
    Ok(out)
}
