use std::path::{Path, PathBuf};
use std::time::Instant;

use landau_core::analytic::{BiMaxwellian, BkwParams};
use landau_core::collision::{checkpoint_steps, DiagnosticsPlan, HomogeneousSim, ParticleEnsemble, SchemeConfig};
use landau_core::diagnostics::{self, DensityGrid, GridSpec};
use landau_core::rng::{RngStream, INIT_STEP};
use landau_core::sphere::{sample_radial_cos, sample_sbm, SamplerKind, UnitVec};
use landau_core::stats;
use landau_core::vpl::simulate_vpl;
use landau_core::Velocity;
use serde::Serialize;

use crate::config::{validate_sampler_test, ExperimentConfig, ExperimentKind, SamplerTestConfig};
use crate::output::{build_id, io_error, write_manifest, CsvWriter, Field, RunManifest};
use crate::{CliError, Result};

/// Runs the configured experiment and writes its outputs and manifest.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    let started = Instant::now();
    let mut outcome = match config.kind {
        ExperimentKind::Bkw3d => run_homogeneous::<3>(config)?,
        k if k.is_homogeneous() => run_homogeneous::<2>(config)?,
        ExperimentKind::VplDamping => run_vpl(config)?,
        ExperimentKind::ConvergenceStudy => run_convergence(config)?,
        ExperimentKind::CpuBench => run_bench(config)?,
        ExperimentKind::SamplerTest => run_sampler_test(config)?,
        _ => unreachable!(),
    };
    outcome.manifest.wall_seconds = started.elapsed().as_secs_f64();
    let path = write_manifest(dir, &outcome.manifest)?;
    outcome.manifest.outputs.push(path);
    Ok(outcome.manifest)
}

struct Outcome {
    manifest: RunManifest,
}

fn manifest(config: &ExperimentConfig, outputs: Vec<PathBuf>, conventions: &[&str]) -> Result<RunManifest> {
    Ok(RunManifest {
        config: serde_json::to_value(config)?,
        build: build_id(),
        seed: config.seed,
        threads: rayon::current_num_threads(),
        wall_seconds: 0.0,
        seconds_per_step: None,
        steps: 0,
        outputs,
        conventions: conventions.iter().map(|s| s.to_string()).collect(),
        summary: serde_json::Value::Null,
    })
}

fn config_error(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        message: message.into(),
    }
}

/// Loads an externally produced density grid and checks it: dimension
/// `dim`, finite and nonnegative values.
pub fn load_reference_density(path: &Path, dim: usize) -> Result<DensityGrid> {
    let grid = DensityGrid::load(path)?;
    if grid.spec.dim() != dim {
        return Err(config_error(
            "homogeneous.reference",
            format!(
                "{} holds a {}D grid, the experiment is {dim}D",
                path.display(),
                grid.spec.dim()
            ),
        ));
    }
    if let Some(i) = grid.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(landau_core::Error::Format {
            path: path.to_path_buf(),
            location: format!("value {i}"),
            message: format!("density value {} is not finite and nonnegative", grid.values[i]),
        }
        .into());
    }
    Ok(grid)
}

fn initial_ensemble<const D: usize>(kind: ExperimentKind, n: usize, seed: u64) -> Result<ParticleEnsemble<D>> {
    Ok(match kind {
        ExperimentKind::Coulomb2d => {
            let b = BiMaxwellian::default();
            ParticleEnsemble::sample(n, seed, INIT_STEP, |rng| {
                let v = b.sample(rng);
                Ok(Velocity::<D>::from_fn(|i, _| v[i]))
            })?
        }
        _ => {
            let p = BkwParams::initial(D)?;
            ParticleEnsemble::sample(n, seed, INIT_STEP, |rng| p.sample::<D, _>(rng))?
        }
    })
}

/// BKW density on `spec` at simulation time `t` (shifted by the family's
/// start time in 3D).
fn bkw_reference(dim: usize, t: f64, spec: &GridSpec) -> landau_core::Result<DensityGrid> {
    let p = BkwParams::new(dim, BkwParams::initial(dim)?.t() + t)?;
    Ok(DensityGrid::from_fn(spec.clone(), |v| p.density(v)))
}

fn run_homogeneous<const D: usize>(config: &ExperimentConfig) -> Result<Outcome> {
    let h = config.homogeneous_section()?;
    let scheme = SchemeConfig {
        dt: h.dt,
        scheme: h.scheme,
        kernel: config.kernel()?,
        sampler: config.sampler_kind(),
        seed: config.seed,
    };
    let mut spec = config.grid_spec()?;
    let mut plan = DiagnosticsPlan {
        eps: h.eps,
        ..Default::default()
    };
    match (&h.reference, config.kind) {
        (Some(path), _) => {
            let reference = load_reference_density(path, D)?;
            if h.grid.is_none() {
                spec = reference.spec.clone();
            } else if !reference.spec.is_congruent(&spec) {
                return Err(config_error(
                    "homogeneous.grid",
                    "does not match the reference density grid",
                ));
            }
            let at = h.reference_time.unwrap_or(h.t_end);
            let half = 0.5 * h.dt;
            plan.reference = Some(Box::new(move |t, _: &GridSpec| {
                Ok(((t - at).abs() < half).then(|| reference.clone()))
            }));
        }
        (None, ExperimentKind::Bkw2d | ExperimentKind::Bkw3d) => {
            plan.reference = Some(Box::new(|t, spec: &GridSpec| bkw_reference(D, t, spec).map(Some)));
        }
        (None, _) => {}
    }
    plan.grid = Some(spec.clone());

    let times = config.checkpoint_times()?;
    let wanted = checkpoint_steps(&times, h.dt, h.t_end)?;
    let total = (h.t_end / h.dt - 1e-9).ceil().max(0.0) as u64;
    let init = initial_ensemble::<D>(config.kind, h.particles, config.seed)?;
    let mut sim = HomogeneousSim::new(scheme, init)?;

    let dir = &config.output_dir;
    let mut header = vec!["time".to_string()];
    header.extend((1..=D).map(|a| format!("momentum_{a}")));
    header.extend(["kinetic_energy", "entropy", "rel_l2_error"].map(String::from));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvWriter::create(dir.join("diagnostics.csv"), &header_refs)?;
    let mut outputs = Vec::new();

    let mut stepping = 0.0;
    let (mut e0, mut p0) = (None, None);
    let (mut max_energy_drift, mut max_momentum_drift, mut last_error) = (0.0f64, 0.0f64, None);
    let mut next = wanted.iter().peekable();
    loop {
        if next.peek().is_some_and(|&&s| s == sim.steps_taken()) {
            next.next();
            let time = sim.time();
            let vs = sim.ensemble().velocities();
            let record = plan.record(time, vs)?;
            let e_ref = *e0.get_or_insert(record.kinetic_energy);
            let p_ref = p0.get_or_insert_with(|| record.momentum.clone()).clone();
            max_energy_drift = max_energy_drift.max(((record.kinetic_energy - e_ref) / e_ref).abs());
            for (p, q) in record.momentum.iter().zip(&p_ref) {
                max_momentum_drift = max_momentum_drift.max((p - q).abs() / e_ref);
            }
            last_error = record.rel_l2_error.or(last_error);
            let mut row: Vec<Field> = vec![time.into()];
            row.extend(record.momentum.iter().map(|&p| Field::from(p)));
            row.extend([
                record.kinetic_energy.into(),
                record.entropy.into(),
                record.rel_l2_error.into(),
            ]);
            csv.row(&row)?;
            if h.dump_densities {
                let path = dir.join(format!("density_{:06}.csv", sim.steps_taken()));
                diagnostics::mollified_density(vs, h.eps, &spec)?.write_csv(&path)?;
                outputs.push(path);
            }
            log::info!(
                "t = {time:.3}: E = {:.6e}, H = {:?}",
                record.kinetic_energy,
                record.entropy
            );
        }
        if sim.steps_taken() >= total {
            break;
        }
        let t = Instant::now();
        sim.step()?;
        stepping += t.elapsed().as_secs_f64();
    }
    outputs.insert(0, csv.finish()?);

    let mut m = manifest(
        config,
        outputs,
        &[
            "momentum and kinetic_energy are totals: sum v_i and 1/2 sum |v_i|^2",
            "entropy and rel_l2_error use the Gaussian mollifier with covariance eps I",
            "BKW reference times are offset by the earliest valid time of the family",
        ],
    )?;
    m.steps = total;
    m.seconds_per_step = (total > 0).then(|| stepping / total as f64);
    m.summary = serde_json::json!({
        "max_relative_energy_drift": max_energy_drift,
        "max_momentum_drift_over_energy": max_momentum_drift,
        "final_rel_l2_error": last_error,
    });
    Ok(Outcome { manifest: m })
}

fn run_vpl(config: &ExperimentConfig) -> Result<Outcome> {
    let vpl = config.vpl_config()?;
    let field_every = config.vpl.as_ref().map_or(0, |v| v.field_every);
    let dir = &config.output_dir;
    let grid = vpl.grid()?;
    let mut csv = CsvWriter::create(
        dir.join("timeseries.csv"),
        &[
            "time",
            "electric_l2",
            "E_K",
            "E_E",
            "E_total",
            "momentum_x",
            "momentum_y",
        ],
    )?;
    let mut outputs = Vec::new();
    let mut failure = None;
    let mut step = 0usize;
    let started = Instant::now();
    let series = simulate_vpl(&vpl, |r, state| {
        if failure.is_some() {
            return;
        }
        let row = [
            r.time,
            r.electric_l2,
            r.kinetic,
            r.electric,
            r.total,
            r.momentum_x,
            r.momentum_y,
        ];
        if let Err(e) = csv.row(&row.map(Field::from)) {
            failure = Some(e);
            return;
        }
        if field_every > 0 && step % field_every == 0 {
            let path = dir.join(format!("field_{step:06}.csv"));
            let written = CsvWriter::create(path, &["x", "E"]).and_then(|mut w| {
                for (k, e) in state.field.iter().enumerate() {
                    w.row(&[grid.center(k).into(), (*e).into()])?;
                }
                w.finish()
            });
            match written {
                Ok(p) => outputs.push(p),
                Err(e) => failure = Some(e),
            }
        }
        step += 1;
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let elapsed = started.elapsed().as_secs_f64();
    outputs.insert(0, csv.finish()?);
    let first = series.first().expect("initial record");
    let drift = series
        .iter()
        .map(|r| ((r.total - first.total) / first.total).abs())
        .fold(0.0, f64::max);
    let mut m = manifest(
        config,
        outputs,
        &[
            "total charge Q defaults to the domain length; each particle carries q = Q/N",
            "E_K = q/2 sum |v_i|^2, E_E = 1/2 sum E_k^2 dx, electric_l2 = sqrt(sum E_k^2 dx)",
            "momentum_x, momentum_y = q sum v_i",
        ],
    )?;
    m.steps = series.len() as u64 - 1;
    m.seconds_per_step = (m.steps > 0).then(|| elapsed / m.steps as f64);
    m.summary = serde_json::json!({ "max_relative_energy_drift": drift });
    Ok(Outcome { manifest: m })
}

/// Relative L2 errors of the 2D BKW problem at one time over sizes and seeds.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceResult {
    /// `(particles, seed, rel_l2_error)`.
    pub rows: Vec<(usize, u64, f64)>,
    /// `(particles, mean error, sample standard deviation)`.
    pub means: Vec<(usize, f64, f64)>,
    /// Least-squares slope of `ln(mean error)` against `ln N`.
    pub slope: f64,
}

/// For each `N`, runs `seeds` independent 2D BKW simulations (seeds
/// `base_seed..base_seed + seeds`) to `time` and records the relative L2
/// error of the mollified density.
pub fn convergence_study(
    scheme: SchemeConfig,
    particles: &[usize],
    seeds: usize,
    time: f64,
    eps: f64,
    spec: &GridSpec,
) -> Result<ConvergenceResult> {
    let reference = bkw_reference(2, time, spec)?;
    let steps = checkpoint_steps(&[time], scheme.dt, time)?[0];
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for &n in particles {
        let mut errs = Vec::with_capacity(seeds);
        for s in 0..seeds as u64 {
            let seed = scheme.seed.wrapping_add(s);
            let init = initial_ensemble::<2>(ExperimentKind::Bkw2d, n, seed)?;
            let mut sim = HomogeneousSim::new(SchemeConfig { seed, ..scheme }, init)?;
            for _ in 0..steps {
                sim.step()?;
            }
            let est = diagnostics::mollified_density(sim.ensemble().velocities(), eps, spec)?;
            let err = diagnostics::relative_l2_error(&reference, &est)?;
            rows.push((n, seed, err));
            errs.push(err);
        }
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let sd = if errs.len() > 1 {
            (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (errs.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        log::info!("N = {n}: mean rel-L2 = {mean:.4e} (sd {sd:.2e})");
        means.push((n, mean, sd));
    }
    let slope = log_log_slope(&means.iter().map(|&(n, m, _)| (n as f64, m)).collect::<Vec<_>>());
    Ok(ConvergenceResult { rows, means, slope })
}

/// Slope of the least-squares line through `(ln x, ln y)`.
fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    if x.len() >= 3 {
        stats::linear_fit(&x, &y).slope
    } else {
        (y[1] - y[0]) / (x[1] - x[0])
    }
}

fn scheme_for(config: &ExperimentConfig) -> Result<SchemeConfig> {
    let h = config.homogeneous.as_ref();
    Ok(SchemeConfig {
        dt: h.map_or(0.1, |h| h.dt),
        scheme: h.map_or(landau_core::collision::Scheme::Sbm, |h| h.scheme),
        kernel: config.kernel()?,
        sampler: config.sampler_kind(),
        seed: config.seed,
    })
}

fn run_convergence(config: &ExperimentConfig) -> Result<Outcome> {
    let c = config.convergence.as_ref().expect("validated");
    let h = config.homogeneous_section()?;
    let result = convergence_study(
        scheme_for(config)?,
        &c.particles,
        c.seeds,
        c.time,
        h.eps,
        &config.grid_spec()?,
    )?;
    let dir = &config.output_dir;
    let mut raw = CsvWriter::create(dir.join("convergence.csv"), &["particles", "seed", "rel_l2_error"])?;
    for &(n, seed, err) in &result.rows {
        raw.row(&[Field::Int(n as u64), Field::Int(seed), err.into()])?;
    }
    let mut summary = CsvWriter::create(
        dir.join("convergence_summary.csv"),
        &["particles", "mean_rel_l2_error", "std_rel_l2_error"],
    )?;
    for &(n, mean, sd) in &result.means {
        summary.row(&[Field::Int(n as u64), mean.into(), sd.into()])?;
    }
    println!("fitted log-log slope: {:.4}", result.slope);
    let mut m = manifest(
        config,
        vec![raw.finish()?, summary.finish()?],
        &["seeds are seed, seed + 1, ..."],
    )?;
    m.summary = serde_json::json!({ "slope": result.slope, "means": result.means });
    Ok(Outcome { manifest: m })
}

/// Mean wall time of one collision step (pairing included, diagnostics
/// excluded) for `n` particles of the 2D BKW initial state.
pub fn bench_per_step(scheme: SchemeConfig, n: usize, steps: usize, warmup: usize) -> Result<f64> {
    let init = initial_ensemble::<2>(ExperimentKind::Bkw2d, n, scheme.seed)?;
    let mut sim = HomogeneousSim::new(scheme, init)?;
    for _ in 0..warmup {
        sim.step()?;
    }
    let t = Instant::now();
    for _ in 0..steps {
        sim.step()?;
    }
    Ok(t.elapsed().as_secs_f64() / steps as f64)
}

fn run_bench(config: &ExperimentConfig) -> Result<Outcome> {
    let b = config.bench.as_ref().expect("validated");
    let scheme = scheme_for(config)?;
    let mut csv = CsvWriter::create(config.output_dir.join("bench.csv"), &["particles", "seconds_per_step"])?;
    let mut points = Vec::new();
    for &n in &b.particles {
        let secs = bench_per_step(scheme, n, b.steps, b.warmup)?;
        println!("N = {n}: {secs:.4e} s/step");
        csv.row(&[Field::Int(n as u64), secs.into()])?;
        points.push((n as f64, secs));
    }
    let slope = log_log_slope(&points);
    println!("fitted log-log slope: {slope:.4}");
    let mut m = manifest(config, vec![csv.finish()?], &["per-step time excludes diagnostics"])?;
    m.summary = serde_json::json!({ "slope": slope, "points": points });
    Ok(Outcome { manifest: m })
}

/// Statistics of one sampler run against the heat kernel.
#[derive(Debug, Clone, Serialize)]
pub struct SamplerReport {
    pub dim: usize,
    pub tau: f64,
    pub samples: usize,
    pub sampler: String,
    /// Sample mean of `Y_tau . Y_0`.
    pub mean_inner: f64,
    /// `exp(-(d - 1) tau / 2)`.
    pub exact_inner: f64,
    pub standard_error: f64,
    pub z_score: f64,
    /// 3D only: KS distance of the radial cosine to the series CDF.
    pub ks_statistic: Option<f64>,
    pub ks_critical_1pct: Option<f64>,
}

/// CDF of the cosine of the S² heat-kernel displacement from its Legendre
/// expansion.
fn series_cos_cdf(x: f64, tau: f64) -> f64 {
    let lmax = ((60.0 / tau.max(1e-6)).sqrt() as usize + 10).min(4000);
    let (mut p_prev, mut p) = (1.0, x);
    let mut f = 0.5 * (1.0 + x);
    for l in 1..=lmax {
        let p_next = ((2 * l + 1) as f64 * x * p - l as f64 * p_prev) / (l + 1) as f64;
        let w = (-((l * (l + 1)) as f64) * tau / 2.0).exp();
        if w < 1e-18 {
            break;
        }
        f += 0.5 * w * (p_next - p_prev);
        p_prev = p;
        p = p_next;
    }
    f.clamp(0.0, 1.0)
}

pub fn sampler_test(test: &SamplerTestConfig, seed: u64) -> Result<SamplerReport> {
    validate_sampler_test(test)?;
    let kind = test.sampler.unwrap_or_else(|| SamplerKind::default_for(test.dim));
    let (mean, se) = match test.dim {
        2 => inner_stats::<2>(test, kind, seed)?,
        _ => inner_stats::<3>(test, kind, seed)?,
    };
    let exact = (-((test.dim - 1) as f64) * test.tau / 2.0).exp();
    let (ks, crit) = if test.dim == 3 && kind == SamplerKind::RadialAngular3D && test.tau > 0.0 {
        let mut rng = RngStream::new(seed, 1, 0).rng();
        let mut xs: Vec<f64> = (0..test.samples)
            .map(|_| sample_radial_cos(test.tau, &mut rng))
            .collect();
        let d = stats::ks_statistic(&mut xs, |x| series_cos_cdf(x, test.tau));
        (Some(d), Some(stats::ks_critical(test.samples as f64, 0.01)))
    } else {
        (None, None)
    };
    Ok(SamplerReport {
        dim: test.dim,
        tau: test.tau,
        samples: test.samples,
        sampler: kind.name().to_string(),
        mean_inner: mean,
        exact_inner: exact,
        standard_error: se,
        z_score: if se > 0.0 { (mean - exact) / se } else { 0.0 },
        ks_statistic: ks,
        ks_critical_1pct: crit,
    })
}

fn inner_stats<const D: usize>(test: &SamplerTestConfig, kind: SamplerKind, seed: u64) -> Result<(f64, f64)> {
    let mut start = Velocity::<D>::from_element(1.0);
    start[0] = -0.5;
    let start = UnitVec::new(start)?;
    let mut rng = RngStream::new(seed, 0, 0).rng();
    let mut xs = Vec::with_capacity(test.samples);
    for _ in 0..test.samples {
        xs.push(sample_sbm(&start, test.tau, kind, &mut rng)?.dot(&start));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

fn run_sampler_test(config: &ExperimentConfig) -> Result<Outcome> {
    let test = config.sampler.as_ref().expect("validated");
    let report = sampler_test(test, config.seed)?;
    let path = config.output_dir.join("sampler_test.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(io_error(&path))?;
    let mut m = manifest(config, vec![path], &[])?;
    m.summary = serde_json::to_value(&report)?;
    Ok(Outcome { manifest: m })
}
