use landau_core::analytic::{BiMaxwellian, BkwParams};
use landau_core::collision::{
    em_increment, simulate_homogeneous, DiagnosticsPlan, ParticleEnsemble, Scheme, SchemeConfig,
};
use landau_core::kernels::KernelParams;
use landau_core::rng::{RngStream, INIT_STEP};
use landau_core::sphere::SamplerKind;
use landau_core::Velocity;
use rand::Rng;
use rand_distr::StandardNormal;

fn bkw_ensemble<const D: usize>(n: usize, seed: u64) -> ParticleEnsemble<D> {
    let p = BkwParams::initial(D).unwrap();
    ParticleEnsemble::sample(n, seed, INIT_STEP, |rng| p.sample::<D, _>(rng)).unwrap()
}

fn config(dim: usize, scheme: Scheme, seed: u64) -> SchemeConfig {
    SchemeConfig {
        dt: 0.1,
        scheme,
        kernel: KernelParams::maxwell_bkw(dim),
        sampler: SamplerKind::default_for(dim),
        seed,
    }
}

/// Mean and standard error of `|v|^4` over the ensemble.
fn fourth_moment<const D: usize>(vs: &[Velocity<D>]) -> (f64, f64) {
    let x: Vec<f64> = vs.iter().map(|v| v.norm_squared().powi(2)).collect();
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn fourth_moment_follows_bkw_in_2d_and_3d() {
    let times = [0.0, 2.0, 5.0, 10.0];
    let plan = DiagnosticsPlan {
        snapshots: true,
        ..Default::default()
    };
    let out = simulate_homogeneous(
        config(2, Scheme::Sbm, 1),
        bkw_ensemble::<2>(40_000, 1),
        10.0,
        &times,
        &plan,
    )
    .unwrap();
    for cp in &out {
        let (m, se) = fourth_moment(cp.snapshot.as_ref().unwrap().velocities());
        let exact = BkwParams::new(2, cp.time).unwrap().fourth_moment();
        assert!(
            (m - exact).abs() < 4.0 * se,
            "2D t={}: {m} vs {exact} (se {se})",
            cp.time
        );
    }

    let t0 = BkwParams::initial(3).unwrap().t();
    let out = simulate_homogeneous(
        config(3, Scheme::Sbm, 2),
        bkw_ensemble::<3>(40_000, 2),
        10.0,
        &[0.0, 5.0, 10.0],
        &plan,
    )
    .unwrap();
    for cp in &out {
        let (m, se) = fourth_moment(cp.snapshot.as_ref().unwrap().velocities());
        let exact = BkwParams::new(3, t0 + cp.time).unwrap().fourth_moment();
        assert!(
            (m - exact).abs() < 4.0 * se,
            "3D t={}: {m} vs {exact} (se {se})",
            cp.time
        );
    }
}

#[test]
fn sbm_conserves_momentum_and_energy_for_coulomb_kernel() {
    let b = BiMaxwellian::default();
    let init = ParticleEnsemble::sample(2000, 5, INIT_STEP, |rng| Ok(b.sample(rng))).unwrap();
    let mut cfg = config(2, Scheme::Sbm, 5);
    cfg.kernel = KernelParams::new(0.125, -3.0).unwrap();
    let times: Vec<f64> = (0..=10).map(|i| i as f64).collect();
    let out = simulate_homogeneous(cfg, init, 10.0, &times, &DiagnosticsPlan::default()).unwrap();
    let first = &out[0].record;
    for cp in &out {
        let r = &cp.record;
        assert!((r.kinetic_energy - first.kinetic_energy).abs() <= 1e-10 * first.kinetic_energy);
        for a in 0..2 {
            assert!((r.momentum[a] - first.momentum[a]).abs() <= 1e-10 * first.kinetic_energy);
        }
    }
}

#[test]
fn em_single_pair_energy_growth() {
    let kernel = KernelParams::new(0.125, 0.0).unwrap();
    let (dt, trials) = (0.1, 400_000u64);
    let z = Velocity::<2>::new(2.0, 0.0);
    let vi = Velocity::<2>::new(1.3, -0.2);
    let vj = vi - z;
    let e0 = vi.norm_squared() + vj.norm_squared();
    let gains: Vec<f64> = (0..trials)
        .map(|t| {
            let mut rng = RngStream::new(8, 0, t).rng();
            let xi = Velocity::<2>::from_fn(|_, _| rng.sample(StandardNormal));
            let dv = em_increment(&z, &kernel, dt, &xi).unwrap();
            (vi + dv).norm_squared() + (vj - dv).norm_squared() - e0
        })
        .collect();
    let n = trials as f64;
    let mean = gains.iter().sum::<f64>() / n;
    let se = (gains.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((mean - 0.00125).abs() < 3.0 * se, "{mean} (se {se})");
}

#[test]
fn runs_are_reproducible() {
    let cfg = config(3, Scheme::Sbm, 11);
    let plan = DiagnosticsPlan {
        snapshots: true,
        ..Default::default()
    };
    let a = simulate_homogeneous(cfg, bkw_ensemble::<3>(1000, 3), 1.0, &[1.0], &plan).unwrap();
    let b = simulate_homogeneous(cfg, bkw_ensemble::<3>(1000, 3), 1.0, &[1.0], &plan).unwrap();
    assert_eq!(a[0].snapshot, b[0].snapshot);
    let c = simulate_homogeneous(
        SchemeConfig { seed: 12, ..cfg },
        bkw_ensemble::<3>(1000, 3),
        1.0,
        &[1.0],
        &plan,
    )
    .unwrap();
    assert_ne!(a[0].snapshot, c[0].snapshot);
}
