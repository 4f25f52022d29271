//! 1D-2V Vlasov–Poisson–Landau particle-in-cell solver.
//!
//! Particles carry charge `q = Q/N` and move on the periodic interval
//! `[0, L)` with velocities `(v_x, v_y)`. Each window first collides the
//! particles of every cell pairwise with the SBM step, then advances the
//! particles and the field with an implicit-midpoint Vlasov–Ampère step that
//! conserves `E_K + E_E` once the fixed-point iteration has converged.

mod pic;

pub use pic::{deposit_charge, deposit_current, interpolate_field, PicGrid, PoissonSolver};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::LandauDamping;
use crate::collision::sbm_collide_pair;
use crate::kernels::KernelParams;
use crate::rng::{RngStream, INIT_STEP};
use crate::sphere::SamplerKind;
use crate::{Error, Result, Velocity};

/// How many fixed-point refinements the field step performs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum FieldIterations {
    /// Exactly `n` refinements.
    Fixed { n: usize },
    /// Refine until the max-norm change of the field falls below `tol`, at
    /// most `max` times.
    Residual { tol: f64, max: usize },
}

impl Default for FieldIterations {
    fn default() -> Self {
        FieldIterations::Fixed { n: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VplConfig {
    pub alpha: f64,
    #[serde(default = "default_wavenumber")]
    pub wavenumber: f64,
    #[serde(default = "default_cells")]
    pub cells: usize,
    pub particles: usize,
    pub dt: f64,
    pub t_end: f64,
    pub kernel: KernelParams,
    #[serde(default)]
    pub iterations: FieldIterations,
    pub seed: u64,
    /// Total charge; defaults to the domain length (unit mean density).
    #[serde(default)]
    pub total_charge: Option<f64>,
}

fn default_wavenumber() -> f64 {
    0.5
}

fn default_cells() -> usize {
    128
}

impl VplConfig {
    /// Landau damping with `alpha` and collision strength `lambda` for the
    /// 2D Coulomb kernel (`gamma = -2`), 128 cells, `dt = 0.02`, five refinements.
    pub fn landau_damping(alpha: f64, lambda: f64, particles: usize, t_end: f64, seed: u64) -> Self {
        Self {
            alpha,
            wavenumber: default_wavenumber(),
            cells: default_cells(),
            particles,
            dt: 0.02,
            t_end,
            kernel: KernelParams { lambda, gamma: -2.0 },
            iterations: FieldIterations::default(),
            seed,
            total_charge: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        LandauDamping::new(self.alpha, self.wavenumber)?;
        KernelParams::new(self.kernel.lambda, self.kernel.gamma)?;
        if self.particles < 2 {
            return Err(Error::invalid("particles", "need at least 2"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("t_end", format!("must be >= 0, got {}", self.t_end)));
        }
        match self.iterations {
            FieldIterations::Fixed { n: 0 } => Err(Error::invalid("iterations", "need at least one")),
            FieldIterations::Residual { tol, max } if !(tol > 0.0) || max == 0 => {
                Err(Error::invalid("iterations", "need tol > 0 and max >= 1"))
            }
            _ => Ok(()),
        }?;
        if let Some(q) = self.total_charge {
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::invalid("total_charge", format!("must be positive, got {q}")));
            }
        }
        PicGrid::new(2.0 * std::f64::consts::PI / self.wavenumber, self.cells).map(|_| ())
    }

    pub fn grid(&self) -> Result<PicGrid> {
        PicGrid::new(2.0 * std::f64::consts::PI / self.wavenumber, self.cells)
    }
}

/// Particles and field at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct VplState {
    pub positions: Vec<f64>,
    pub velocities: Vec<Velocity<2>>,
    pub field: Vec<f64>,
    pub q: f64,
    pub time: f64,
}

impl VplState {
    /// Samples the perturbed Maxwellian and solves for the initial field.
    pub fn landau_damping(config: &VplConfig, solver: &PoissonSolver) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let ic = LandauDamping::new(config.alpha, config.wavenumber)?;
        let (positions, velocities): (Vec<f64>, Vec<Velocity<2>>) = (0..config.particles as u64)
            .into_par_iter()
            .map(|i| ic.sample(&mut RngStream::new(config.seed, INIT_STEP, i).rng()))
            .unzip();
        let q = config.total_charge.unwrap_or(grid.length()) / config.particles as f64;
        let rho = deposit_charge(&grid, &positions, q);
        let (_, field) = solver.solve(&rho)?;
        Ok(Self {
            positions,
            velocities,
            field,
            q,
            time: 0.0,
        })
    }
}

/// Outcome of one field step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldStepReport {
    pub iterations: usize,
    /// Max-norm change of the field in the last refinement.
    pub residual: f64,
}

/// Implicit-midpoint Vlasov–Ampère step by fixed-point iteration from an
/// explicit Euler predictor. Only `v_x` feels the field.
pub fn cn_va_step(
    state: &mut VplState,
    grid: &PicGrid,
    dt: f64,
    iterations: FieldIterations,
) -> Result<FieldStepReport> {
    let n = state.positions.len();
    if state.velocities.len() != n || state.field.len() != grid.cells() {
        return Err(Error::GridMismatch("state arrays do not match the grid".into()));
    }
    let (max_iters, tol) = match iterations {
        FieldIterations::Fixed { n } => (n, 0.0),
        FieldIterations::Residual { tol, max } => (max, tol),
    };
    let x0 = &state.positions;
    let vx0: Vec<f64> = state.velocities.iter().map(|v| v[0]).collect();
    let e0 = &state.field;

    let mut vx_new: Vec<f64> = x0
        .par_iter()
        .zip(&vx0)
        .map(|(&x, &v)| v + dt * interpolate_field(grid, e0, x))
        .collect();
    let mut e_new = e0.clone();
    let mut x_half = vec![0.0; n];
    let mut v_half = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut done = 0;
    while done < max_iters {
        x_half
            .par_iter_mut()
            .zip(v_half.par_iter_mut())
            .zip(x0.par_iter().zip(vx0.par_iter().zip(&vx_new)))
            .for_each(|((xh, vh), (&x, (&v, &vn)))| {
                *vh = 0.5 * (v + vn);
                *xh = grid.wrap(x + 0.5 * dt * *vh);
            });
        let (j, j_mean) = deposit_current(grid, &x_half, &v_half, state.q);
        let e_next: Vec<f64> = e0.iter().zip(&j).map(|(e, jk)| e - dt * (jk - j_mean)).collect();
        residual = e_next
            .iter()
            .zip(&e_new)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        e_new = e_next;
        vx_new
            .par_iter_mut()
            .zip(x_half.par_iter().zip(&vx0))
            .for_each(|(vn, (&xh, &v))| {
                let e_mid = 0.5 * (interpolate_field(grid, e0, xh) + interpolate_field(grid, &e_new, xh));
                *vn = v + dt * e_mid;
            });
        done += 1;
        if !residual.is_finite() {
            return Err(Error::NonFiniteState(format!(
                "field iteration diverged at t = {}",
                state.time
            )));
        }
        if residual < tol {
            break;
        }
    }
    if tol > 0.0 && residual >= tol {
        log::warn!("field iteration stopped at residual {residual:e} after {done} refinements");
    }

    state
        .positions
        .par_iter_mut()
        .zip(state.velocities.par_iter_mut())
        .zip(vx0.par_iter().zip(&vx_new))
        .for_each(|((x, v), (&v0, &vn))| {
            *x = grid.wrap(*x + dt * 0.5 * (v0 + vn));
            v[0] = vn;
        });
    state.field = e_new;
    Ok(FieldStepReport {
        iterations: done,
        residual,
    })
}

/// Pairwise SBM collisions inside every cell. A cell with an odd count lets
/// its leftover particle collide, with probability 1/2, with a uniformly
/// chosen already-collided particle of the same cell. Cell `c` draws from the
/// stream `(seed, step, c)`.
pub fn cell_collisions(
    state: &mut VplState,
    grid: &PicGrid,
    dt: f64,
    kernel: &KernelParams,
    seed: u64,
    step: u64,
) -> Result<()> {
    if kernel.lambda == 0.0 {
        return Ok(());
    }
    let cells = grid.cells();
    let cell_of: Vec<usize> = state.positions.iter().map(|&x| grid.cell_of(x)).collect();
    let mut offsets = vec![0usize; cells + 1];
    for &c in &cell_of {
        offsets[c + 1] += 1;
    }
    for c in 0..cells {
        offsets[c + 1] += offsets[c];
    }
    let mut order = vec![0usize; cell_of.len()];
    let mut fill = offsets.clone();
    for (i, &c) in cell_of.iter().enumerate() {
        order[fill[c]] = i;
        fill[c] += 1;
    }

    let velocities = &state.velocities;
    let updated: Vec<Vec<Velocity<2>>> = (0..cells)
        .into_par_iter()
        .map(|c| {
            let members = &order[offsets[c]..offsets[c + 1]];
            let mut local: Vec<Velocity<2>> = members.iter().map(|&i| velocities[i]).collect();
            collide_cell(&mut local, dt, kernel, &mut RngStream::new(seed, step, c as u64).rng())?;
            Ok(local)
        })
        .collect::<Result<_>>()?;
    for (c, local) in updated.into_iter().enumerate() {
        for (&i, v) in order[offsets[c]..offsets[c + 1]].iter().zip(local) {
            state.velocities[i] = v;
        }
    }
    Ok(())
}

fn collide_cell<R: Rng + ?Sized>(vs: &mut [Velocity<2>], dt: f64, kernel: &KernelParams, rng: &mut R) -> Result<()> {
    let m = vs.len();
    if m < 2 {
        return Ok(());
    }
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    for pair in perm.chunks_exact(2) {
        let (a, b) = pair_mut(vs, pair[0], pair[1]);
        sbm_collide_pair(a, b, kernel, dt, SamplerKind::Exact2D, rng)?;
    }
    if m % 2 == 1 && rng.random::<f64>() < 0.5 {
        let leftover = perm[m - 1];
        let partner = perm[rng.random_range(0..m - 1)];
        let (a, b) = pair_mut(vs, leftover, partner);
        sbm_collide_pair(a, b, kernel, dt, SamplerKind::Exact2D, rng)?;
    }
    Ok(())
}

fn pair_mut<T>(xs: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    debug_assert_ne!(i, j);
    if i < j {
        let (lo, hi) = xs.split_at_mut(j);
        (&mut lo[i], &mut hi[0])
    } else {
        let (lo, hi) = xs.split_at_mut(i);
        (&mut hi[0], &mut lo[j])
    }
}

/// One row of the VPL time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VplRecord {
    pub time: f64,
    /// `sqrt(sum E_k^2 dx)`.
    pub electric_l2: f64,
    /// `q/2 sum |v_i|^2`.
    pub kinetic: f64,
    /// `1/2 sum E_k^2 dx`.
    pub electric: f64,
    pub total: f64,
    pub momentum_x: f64,
    pub momentum_y: f64,
}

pub fn vpl_diagnostics(state: &VplState, grid: &PicGrid) -> VplRecord {
    let e2: f64 = state.field.iter().map(|e| e * e).sum::<f64>() * grid.dx();
    let m = crate::diagnostics::moments(&state.velocities);
    let kinetic = state.q * m.kinetic_energy;
    let electric = 0.5 * e2;
    VplRecord {
        time: state.time,
        electric_l2: e2.sqrt(),
        kinetic,
        electric,
        total: kinetic + electric,
        momentum_x: state.q * m.momentum[0],
        momentum_y: state.q * m.momentum[1],
    }
}

/// Runs the Landau damping problem, calling `observe` after initialisation
/// and after every window. Returns the full time series.
pub fn simulate_vpl(config: &VplConfig, mut observe: impl FnMut(&VplRecord, &VplState)) -> Result<Vec<VplRecord>> {
    config.validate()?;
    config.kernel.warn_if_inadmissible(2);
    let grid = config.grid()?;
    let solver = PoissonSolver::new(grid);
    let mut state = VplState::landau_damping(config, &solver)?;
    let steps = (config.t_end / config.dt - 1e-9).ceil().max(0.0) as u64;
    let mut series = Vec::with_capacity(steps as usize + 1);
    let first = vpl_diagnostics(&state, &grid);
    observe(&first, &state);
    series.push(first);
    for step in 0..steps {
        cell_collisions(&mut state, &grid, config.dt, &config.kernel, config.seed, step)?;
        cn_va_step(&mut state, &grid, config.dt, config.iterations)?;
        state.time = (step + 1) as f64 * config.dt;
        let record = vpl_diagnostics(&state, &grid);
        if !record.total.is_finite() {
            return Err(Error::NonFiniteState(format!("energy at t = {}", state.time)));
        }
        observe(&record, &state);
        series.push(record);
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small_config(alpha: f64, lambda: f64) -> VplConfig {
        VplConfig::landau_damping(alpha, lambda, 20_000, 1.0, 3)
    }

    fn init(cfg: &VplConfig) -> (PicGrid, VplState) {
        let grid = cfg.grid().unwrap();
        let state = VplState::landau_damping(cfg, &PoissonSolver::new(grid)).unwrap();
        (grid, state)
    }

    #[test]
    fn force_free_streaming() {
        let grid = PicGrid::new(4.0 * PI, 16).unwrap();
        let positions = vec![0.3, 5.0, 12.4];
        let velocities = vec![
            Velocity::<2>::new(1.0, 2.0),
            Velocity::<2>::new(-0.5, 0.0),
            Velocity::<2>::new(0.5, 1.0),
        ];
        let mut state = VplState {
            positions: positions.clone(),
            velocities: velocities.clone(),
            field: vec![0.0; 16],
            q: 0.0,
            time: 0.0,
        };
        cn_va_step(&mut state, &grid, 0.1, FieldIterations::Fixed { n: 3 }).unwrap();
        for i in 0..3 {
            assert_eq!(state.positions[i], grid.wrap(positions[i] + velocities[i][0] * 0.1));
            assert_eq!(state.velocities[i], velocities[i]);
        }
    }

    #[test]
    fn converged_step_conserves_energy_and_keeps_vy() {
        let cfg = small_config(0.5, 0.0);
        let (grid, mut state) = init(&cfg);
        let vy: Vec<f64> = state.velocities.iter().map(|v| v[1]).collect();
        for _ in 0..20 {
            let before = vpl_diagnostics(&state, &grid).total;
            let report = cn_va_step(
                &mut state,
                &grid,
                0.02,
                FieldIterations::Residual { tol: 1e-13, max: 100 },
            )
            .unwrap();
            assert!(report.residual < 1e-13);
            let after = vpl_diagnostics(&state, &grid).total;
            assert!(((after - before) / before).abs() <= 1e-10, "{before} -> {after}");
        }
        assert!(state.velocities.iter().zip(&vy).all(|(v, y)| v[1] == *y));
        assert!(state.positions.iter().all(|&x| (0.0..grid.length()).contains(&x)));
    }

    #[test]
    fn field_energy_of_sine() {
        let grid = PicGrid::new(4.0 * PI, 128).unwrap();
        let state = VplState {
            positions: vec![],
            velocities: vec![],
            field: (0..128).map(|k| 2.0 * (0.5 * grid.center(k)).sin()).collect(),
            q: 1.0,
            time: 0.0,
        };
        let d = vpl_diagnostics(&state, &grid);
        assert!((d.electric - 4.0 * PI).abs() < 1e-10);
        assert_eq!(d.kinetic, 0.0);
        let zero = VplState {
            field: vec![0.0; 128],
            ..state
        };
        assert_eq!(vpl_diagnostics(&zero, &grid).electric_l2, 0.0);
    }

    #[test]
    fn collisions_conserve_per_cell() {
        let cfg = small_config(0.1, 1.0);
        let (grid, mut state) = init(&cfg);
        // Make a few cells odd and one a singleton.
        state.positions.truncate(19_997);
        state.velocities.truncate(19_997);
        state.positions[0] = grid.center(5);
        let before = state.clone();
        cell_collisions(&mut state, &grid, 0.02, &cfg.kernel, 1, 0).unwrap();
        let mut p = vec![Velocity::<2>::zeros(); grid.cells()];
        let mut e = vec![0.0; grid.cells()];
        for (x, (a, b)) in before
            .positions
            .iter()
            .zip(before.velocities.iter().zip(&state.velocities))
        {
            let c = grid.cell_of(*x);
            p[c] += b - a;
            e[c] += b.norm_squared() - a.norm_squared();
        }
        let scale = before.velocities.iter().map(|v| v.norm_squared()).sum::<f64>() / grid.cells() as f64;
        for c in 0..grid.cells() {
            assert!(p[c].norm() <= 1e-12 * scale && e[c].abs() <= 1e-12 * scale, "cell {c}");
        }
        assert_eq!(state.positions, before.positions);
        assert_ne!(state.velocities, before.velocities);
    }

    #[test]
    fn collisionless_and_singleton_cells_are_unchanged() {
        let cfg = small_config(0.1, 0.0);
        let (grid, mut state) = init(&cfg);
        let before = state.clone();
        cell_collisions(&mut state, &grid, 0.02, &cfg.kernel, 1, 0).unwrap();
        assert_eq!(state, before);

        let mut one = vec![Velocity::<2>::new(1.0, 2.0)];
        collide_cell(
            &mut one,
            0.02,
            &KernelParams::new(1.0, -2.0).unwrap(),
            &mut RngStream::new(0, 0, 0).rng(),
        )
        .unwrap();
        assert_eq!(one[0], Velocity::<2>::new(1.0, 2.0));
    }

    #[test]
    fn odd_rule_fires_half_the_time() {
        let kernel = KernelParams::new(1.0, 0.0).unwrap();
        let mut touched = 0;
        let trials = 4000;
        for t in 0..trials {
            let mut vs = vec![
                Velocity::<2>::new(1.0, 0.0),
                Velocity::<2>::new(0.0, 1.0),
                Velocity::<2>::new(-1.0, -1.0),
            ];
            let mut rng = RngStream::new(9, t, 0).rng();
            let mut perm_rng = rng.clone();
            let mut perm: Vec<usize> = (0..3).collect();
            perm.shuffle(&mut perm_rng);
            let leftover = perm[2];
            let start = vs[leftover];
            collide_cell(&mut vs, 0.5, &kernel, &mut rng).unwrap();
            if vs[leftover] != start {
                touched += 1;
            }
        }
        let frac = touched as f64 / trials as f64;
        assert!((frac - 0.5).abs() < 4.0 * (0.25 / trials as f64).sqrt(), "{frac}");
    }

    #[test]
    fn runs_are_thread_independent() {
        let mut cfg = small_config(0.1, 1.0);
        cfg.particles = 4000;
        cfg.t_end = 0.2;
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_vpl(&cfg, |_, _| {}).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config(0.1, 1.0);
        assert!(cfg.validate().is_ok());
        cfg.iterations = FieldIterations::Fixed { n: 0 };
        assert!(cfg.validate().is_err());
        cfg = small_config(1.5, 1.0);
        assert!(cfg.validate().is_err());
    }
}
