use fraclab_core::assembly::{FracParams, Variant};
use fraclab_core::domain::PeriodicWeight;
use fraclab_core::homogenize::{check_bounds, fit_rate, sweep, SweepConfig};
use fraclab_core::FracError;

fn config(variant: Variant, s: f64, weight: PeriodicWeight, k: usize) -> SweepConfig {
    SweepConfig::new(256, FracParams::new(s, 2.0).unwrap(), variant, weight, vec![0.25, 0.125, 0.0625], k)
}

#[test]
fn constant_weight_reproduces_mu_over_c() {
    let report = sweep(&config(Variant::DirichletExterior, 0.5, PeriodicWeight::constant(4.0).unwrap(), 6)).unwrap();
    for r in &report.records {
        let want = report.mu[r.k - 1] / 4.0;
        assert!((r.lambda_eps - want).abs() <= 1e-10 * want);
        assert!(r.error <= 1e-10 * want);
    }
    assert!(report.verdicts.envelope.spread.is_none());
}

#[test]
fn permuted_runs_give_identical_records() {
    let w = PeriodicWeight::sinusoid(2.0, 1.0).unwrap();
    let full = sweep(&config(Variant::DirichletExterior, 0.4, w.clone(), 3)).unwrap();
    let part = sweep(&SweepConfig { eps_list: vec![0.125], ..config(Variant::DirichletExterior, 0.4, w, 3) }).unwrap();
    for k in 1..=3 {
        assert_eq!(full.value(k, 0.125).unwrap().to_bits(), part.value(k, 0.125).unwrap().to_bits());
    }
}

#[test]
fn envelope_scales_inversely_with_weight() {
    let w = PeriodicWeight::sinusoid(2.0, 1.0).unwrap();
    let base = sweep(&config(Variant::DirichletExterior, 0.5, w.clone(), 4)).unwrap();
    let scaled = sweep(&config(Variant::DirichletExterior, 0.5, w.scaled(2.0).unwrap(), 4)).unwrap();
    let (c1, c2) = (base.verdicts.envelope.constant, scaled.verdicts.envelope.constant);
    assert!((c2 - 0.5 * c1).abs() <= 1e-9 * c1, "{c1} {c2}");
}

#[test]
fn sandwich_and_ordering_hold() {
    let w = PeriodicWeight::checkerboard(1.0, 3.0).unwrap();
    let dir = sweep(&config(Variant::DirichletExterior, 0.75, w.clone(), 8)).unwrap();
    assert!(dir.verdicts.sandwich.unwrap().passed);
    let neu = sweep(&config(Variant::RegionalNeumann, 0.75, w, 8)).unwrap();
    assert!(neu.verdicts.sandwich.is_none());
    let verdicts = check_bounds(&neu, &neu.mu, (1.0, 3.0), Some(&dir)).unwrap();
    assert!(verdicts.neumann_le_dirichlet.unwrap().passed);
    assert!(check_bounds(&dir, &dir.mu, (1.0, 3.0), Some(&dir)).is_err());
}

#[test]
fn dirichlet_errors_decay_at_least_like_eps_to_the_s() {
    let report = sweep(&config(Variant::DirichletExterior, 0.5, PeriodicWeight::sinusoid(2.0, 1.0).unwrap(), 3)).unwrap();
    for f in &report.fits {
        assert!(f.fit.unwrap().slope >= 0.4);
    }
}

#[test]
fn neumann_needs_trace_regime() {
    let cfg = SweepConfig::new(
        256,
        FracParams::new(0.3, 3.0).unwrap(),
        Variant::RegionalNeumann,
        PeriodicWeight::sinusoid(2.0, 1.0).unwrap(),
        vec![0.25, 0.125],
        1,
    );
    assert!(matches!(sweep(&cfg), Err(FracError::Hypothesis(_))));
}

#[test]
fn csv_is_deterministic() {
    let cfg = config(Variant::RegionalNeumann, 0.6, PeriodicWeight::sinusoid(2.0, 1.0).unwrap(), 2);
    let mut a = Vec::new();
    let mut b = Vec::new();
    sweep(&cfg).unwrap().write_csv(&mut a).unwrap();
    sweep(&cfg).unwrap().write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("variant,s,p,k,eps,lambda_eps,lambda_limit,error\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(!text.contains('\r'));
}

#[test]
fn rate_fit_recovers_known_slope() {
    let pairs: Vec<(f64, f64)> = [0.25f64, 0.125, 0.0625, 0.03125].iter().map(|&e| (e, 3.0 * e.powf(0.7))).collect();
    let fit = fit_rate(&pairs).unwrap();
    assert!((fit.slope - 0.7).abs() < 1e-12);
    assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
}
