use landau_core::vpl::{simulate_vpl, FieldIterations, VplConfig};

#[test]
fn equilibrium_stays_quiet_and_conserves_energy() {
    let mut cfg = VplConfig::landau_damping(0.0, 1.0, 20_000, 5.0, 4);
    cfg.iterations = FieldIterations::Residual { tol: 1e-10, max: 50 };
    let series = simulate_vpl(&cfg, |_, _| {}).unwrap();
    let e0 = series[0].total;
    let noise = series[0].electric_l2;
    for r in &series {
        assert!(((r.total - e0) / e0).abs() < 1e-6, "t={}: {}", r.time, r.total);
        assert!(r.electric_l2 < 5.0 * noise.max(0.01));
    }
}

#[test]
fn perturbation_decays() {
    let cfg = VplConfig::landau_damping(0.1, 0.0, 50_000, 12.0, 8);
    let series = simulate_vpl(&cfg, |_, _| {}).unwrap();
    let peak = |lo: f64, hi: f64| {
        series
            .iter()
            .filter(|r| r.time >= lo && r.time <= hi)
            .map(|r| r.electric_l2)
            .fold(0.0, f64::max)
    };
    // One oscillation period is about 2 pi / 1.4 ~ 4.4.
    assert!(peak(7.0, 12.0) < 0.6 * peak(0.0, 4.5));
}
