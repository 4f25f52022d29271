use std::path::{Path, PathBuf};

use landau_core::collision::Scheme;
use landau_core::diagnostics::{GridSpec, DEFAULT_EPS};
use landau_core::kernels::KernelParams;
use landau_core::sphere::SamplerKind;
use landau_core::vpl::{FieldIterations, VplConfig};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Bkw2d,
    Bkw3d,
    Coulomb2d,
    VplDamping,
    ConvergenceStudy,
    SamplerTest,
    CpuBench,
}

impl ExperimentKind {
    pub fn dim(&self) -> usize {
        match self {
            ExperimentKind::Bkw3d => 3,
            _ => 2,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(
            self,
            ExperimentKind::Bkw2d | ExperimentKind::Bkw3d | ExperimentKind::Coulomb2d
        )
    }
}

/// Top-level experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; results do not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub homogeneous: Option<HomogeneousConfig>,
    #[serde(default)]
    pub vpl: Option<VplSection>,
    #[serde(default)]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
    #[serde(default)]
    pub sampler: Option<SamplerTestConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogeneousConfig {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub particles: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Explicit checkpoint times (multiples of `dt`).
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    /// Adds checkpoints at every multiple of this interval up to `t_end`.
    #[serde(default)]
    pub checkpoint_every: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub sampler: Option<SamplerKind>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    /// Externally produced reference density (CSV or binary grid). Replaces
    /// the analytic BKW reference when set.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    /// Time at which `reference` applies; defaults to `t_end`.
    #[serde(default)]
    pub reference_time: Option<f64>,
    /// Write the mollified density at every checkpoint.
    #[serde(default)]
    pub dump_densities: bool,
}

fn default_scheme() -> Scheme {
    Scheme::Sbm
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VplSection {
    pub alpha: f64,
    #[serde(default = "default_wavenumber")]
    pub wavenumber: f64,
    #[serde(default = "default_cells")]
    pub cells: usize,
    pub particles: usize,
    pub dt: f64,
    pub t_end: f64,
    pub lambda: f64,
    #[serde(default = "default_vpl_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub iterations: FieldIterations,
    #[serde(default)]
    pub total_charge: Option<f64>,
    /// Dump the grid field every this many steps (0 = never).
    #[serde(default)]
    pub field_every: usize,
}

fn default_wavenumber() -> f64 {
    0.5
}

fn default_cells() -> usize {
    128
}

fn default_vpl_gamma() -> f64 {
    -2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub particles: Vec<usize>,
    pub seeds: usize,
    #[serde(default = "default_convergence_time")]
    pub time: f64,
}

fn default_convergence_time() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub particles: Vec<usize>,
    pub steps: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
}

fn default_warmup() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerTestConfig {
    pub dim: usize,
    pub tau: f64,
    pub samples: usize,
    #[serde(default)]
    pub sampler: Option<SamplerKind>,
}

fn config_error(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(config_error(field, format!("must be positive, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: Self = toml::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(config_error("threads", "must be at least 1"));
        }
        match self.kind {
            k if k.is_homogeneous() => {
                self.homogeneous_section()?;
            }
            ExperimentKind::VplDamping => {
                self.vpl_config()?
                    .validate()
                    .map_err(|e| config_error("vpl", e.to_string()))?;
            }
            ExperimentKind::ConvergenceStudy => {
                self.homogeneous_section()?;
                let c = self
                    .convergence
                    .as_ref()
                    .ok_or_else(|| config_error("convergence", "section missing"))?;
                if c.particles.len() < 2 {
                    return Err(config_error("convergence.particles", "need at least two sizes"));
                }
                if c.particles.iter().any(|&n| n < 2 || n % 2 == 1) {
                    return Err(config_error("convergence.particles", "sizes must be even and >= 2"));
                }
                if c.seeds == 0 {
                    return Err(config_error("convergence.seeds", "need at least one seed"));
                }
                positive("convergence.time", c.time)?;
            }
            ExperimentKind::CpuBench => {
                let b = self
                    .bench
                    .as_ref()
                    .ok_or_else(|| config_error("bench", "section missing"))?;
                if b.particles.len() < 2 || b.particles.iter().any(|&n| n < 2 || n % 2 == 1) {
                    return Err(config_error("bench.particles", "need two or more even sizes"));
                }
                if b.steps == 0 {
                    return Err(config_error("bench.steps", "must be at least 1"));
                }
                if let Some(h) = &self.homogeneous {
                    positive("homogeneous.dt", h.dt)?;
                }
            }
            ExperimentKind::SamplerTest => {
                let s = self
                    .sampler
                    .as_ref()
                    .ok_or_else(|| config_error("sampler", "section missing"))?;
                validate_sampler_test(s)?;
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    pub fn homogeneous_section(&self) -> Result<&HomogeneousConfig> {
        let h = self
            .homogeneous
            .as_ref()
            .ok_or_else(|| config_error("homogeneous", "section missing"))?;
        if h.particles < 2 || h.particles % 2 == 1 {
            return Err(config_error(
                "homogeneous.particles",
                format!("must be even and >= 2, got {}", h.particles),
            ));
        }
        positive("homogeneous.dt", h.dt)?;
        if !(h.t_end >= 0.0 && h.t_end.is_finite()) {
            return Err(config_error("homogeneous.t_end", "must be >= 0"));
        }
        positive("homogeneous.eps", h.eps)?;
        if let Some(every) = h.checkpoint_every {
            positive("homogeneous.checkpoint_every", every)?;
        }
        if let Some(g) = &h.grid {
            if g.cells == 0 || !(g.hi > g.lo) {
                return Err(config_error("homogeneous.grid", "need cells >= 1 and lo < hi"));
            }
        }
        if let Some(s) = &h.sampler {
            s.validate(self.kind.dim())
                .map_err(|e| config_error("homogeneous.sampler", e.to_string()))?;
        }
        self.kernel()?;
        Ok(h)
    }

    /// Kernel for the homogeneous kinds: the section's values, falling back to
    /// the kind's defaults (Maxwell BKW strength, or `1/8, -3` for coulomb2d).
    pub fn kernel(&self) -> Result<KernelParams> {
        let dim = self.kind.dim();
        let default = match self.kind {
            ExperimentKind::Coulomb2d => KernelParams {
                lambda: 0.125,
                gamma: -3.0,
            },
            _ => KernelParams::maxwell_bkw(dim),
        };
        let h = self.homogeneous.as_ref();
        let lambda = h.and_then(|h| h.lambda).unwrap_or(default.lambda);
        let gamma = h.and_then(|h| h.gamma).unwrap_or(default.gamma);
        KernelParams::new(lambda, gamma).map_err(|e| config_error("homogeneous.lambda/gamma", e.to_string()))
    }

    pub fn sampler_kind(&self) -> SamplerKind {
        self.homogeneous
            .as_ref()
            .and_then(|h| h.sampler)
            .unwrap_or_else(|| SamplerKind::default_for(self.kind.dim()))
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let dim = self.kind.dim();
        match self.homogeneous.as_ref().and_then(|h| h.grid.as_ref()) {
            Some(g) => GridSpec::cube(dim, g.lo, g.hi, g.cells),
            None => GridSpec::default_for(dim),
        }
        .map_err(|e| config_error("homogeneous.grid", e.to_string()))
    }

    /// Sorted, de-duplicated checkpoint times.
    pub fn checkpoint_times(&self) -> Result<Vec<f64>> {
        let h = self.homogeneous_section()?;
        let mut times = h.checkpoints.clone();
        if let Some(every) = h.checkpoint_every {
            let n = (h.t_end / every + 1e-9).floor() as usize;
            times.extend((0..=n).map(|i| i as f64 * every));
        }
        if times.is_empty() {
            times = vec![0.0, h.t_end];
        }
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * h.dt);
        Ok(times)
    }

    pub fn vpl_config(&self) -> Result<VplConfig> {
        let v = self
            .vpl
            .as_ref()
            .ok_or_else(|| config_error("vpl", "section missing"))?;
        Ok(VplConfig {
            alpha: v.alpha,
            wavenumber: v.wavenumber,
            cells: v.cells,
            particles: v.particles,
            dt: v.dt,
            t_end: v.t_end,
            kernel: KernelParams {
                lambda: v.lambda,
                gamma: v.gamma,
            },
            iterations: v.iterations,
            seed: self.seed,
            total_charge: v.total_charge,
        })
    }
}

pub fn validate_sampler_test(s: &SamplerTestConfig) -> Result<()> {
    if s.dim != 2 && s.dim != 3 {
        return Err(config_error("sampler.dim", format!("must be 2 or 3, got {}", s.dim)));
    }
    if !(s.tau >= 0.0 && s.tau.is_finite()) {
        return Err(config_error("sampler.tau", "must be >= 0"));
    }
    if s.samples < 2 {
        return Err(config_error("sampler.samples", "need at least 2"));
    }
    if let Some(kind) = &s.sampler {
        kind.validate(s.dim)
            .map_err(|e| config_error("sampler.sampler", e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Parse {
            path: "inline".into(),
            message: e.to_string(),
        })?;
        c.validate()?;
        Ok(c)
    }

    #[test]
    fn bkw_config_defaults() {
        let c = parse(
            r#"
            kind = "bkw2d"
            seed = 7
            output_dir = "out"
            [homogeneous]
            particles = 10000
            dt = 0.1
            t_end = 5.0
            checkpoint_every = 1.0
            "#,
        )
        .unwrap();
        assert_eq!(c.kernel().unwrap(), KernelParams::maxwell_bkw(2));
        assert_eq!(c.checkpoint_times().unwrap(), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(c.grid_spec().unwrap(), GridSpec::default_for(2).unwrap());
        assert_eq!(c.sampler_kind(), SamplerKind::Exact2D);
    }

    #[test]
    fn errors_name_the_field() {
        let odd = parse(
            r#"
            kind = "bkw2d"
            output_dir = "out"
            [homogeneous]
            particles = 101
            dt = 0.1
            t_end = 5.0
            "#,
        );
        assert!(matches!(odd, Err(CliError::Config { ref field, .. }) if field == "homogeneous.particles"));
        let unknown = parse("kind = \"bkw2d\"\noutput_dir = \"o\"\nbogus = 1\n");
        assert!(matches!(unknown, Err(CliError::Parse { .. })));
        let missing = parse("kind = \"vpl-damping\"\noutput_dir = \"o\"\n");
        assert!(matches!(missing, Err(CliError::Config { ref field, .. }) if field == "vpl"));
        let wrong_sampler = parse(
            r#"
            kind = "bkw3d"
            output_dir = "out"
            [homogeneous]
            particles = 100
            dt = 0.1
            t_end = 1.0
            sampler = "exact-2d"
            "#,
        );
        assert!(matches!(wrong_sampler, Err(CliError::Config { ref field, .. }) if field == "homogeneous.sampler"));
    }

    #[test]
    fn vpl_section() {
        let c = parse(
            r#"
            kind = "vpl-damping"
            seed = 3
            output_dir = "out"
            [vpl]
            alpha = 0.1
            particles = 1000
            dt = 0.02
            t_end = 1.0
            lambda = 1.0
            iterations = { mode = "residual", tol = 1e-10, max = 50 }
            "#,
        )
        .unwrap();
        let v = c.vpl_config().unwrap();
        assert_eq!(v.kernel.gamma, -2.0);
        assert_eq!(v.seed, 3);
        assert_eq!(v.iterations, FieldIterations::Residual { tol: 1e-10, max: 50 });
    }
}
