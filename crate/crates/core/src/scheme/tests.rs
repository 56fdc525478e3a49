use super::*;
use crate::nonlin::{Coupling, SmoothPart};

fn point() -> Grid {
    Grid::line(1, 1.0).unwrap()
}

fn settings(beta: BetaMode, inertia: InertiaWeight) -> StepSettings {
    let mut c = DelayConfig::new(1.0, 1, 1);
    c.inertia = inertia;
    let mut s = c.settings();
    s.beta = beta;
    s
}

fn linear_spec(smooth: SmoothPart, coupling: Coupling) -> PotentialSpec {
    PotentialSpec::new(ScalarGraph::Zero, smooth, coupling).unwrap()
}

#[test]
fn rho_step_fixes_constants_of_the_heat_equation() {
    let grid = Grid::rect(6, 5, 1.0, 2.0).unwrap();
    let spec = linear_spec(SmoothPart::Zero, Coupling::Const { value: 0.3 });
    let rho = Field::constant(grid, 0.42);
    let mu = Field::constant(grid, 1.7);
    let out = rho_step(&rho, &mu, 0.05, &spec, &settings(BetaMode::Yosida { eps: 0.1 }, InertiaWeight::Previous), None).unwrap();
    for &r in out.rho.values() {
        assert!((r - 0.42).abs() < 1e-14);
    }
}

#[test]
fn rho_step_scalar_implicit_euler() {
    let spec = linear_spec(SmoothPart::Quadratic { a: 1.0 }, Coupling::Const { value: 0.0 });
    let grid = point();
    let out = rho_step(
        &Field::constant(grid, 1.0),
        &Field::zeros(grid),
        0.1,
        &spec,
        &settings(BetaMode::Yosida { eps: 0.01 }, InertiaWeight::Previous),
        None,
    )
    .unwrap();
    assert!((out.rho.values()[0] - 1.0 / 1.1).abs() < 1e-12);
    assert!((out.rho.values()[0] - 0.909_090_909_090_909).abs() < 1e-12);
}

#[test]
fn rho_step_residual_certificate_log_graph() {
    let grid = Grid::line(40, 1.0).unwrap();
    let spec = PotentialSpec::new(
        ScalarGraph::Log { c: 1.0 },
        SmoothPart::DoubleWell { a: 3.0 },
        Coupling::SmoothIdentity { delta: 0.1 },
    )
    .unwrap();
    let rho = Field::from_fn(grid, |x| 0.5 + 0.3 * libm::cos(3.0 * x[0]));
    let mu = Field::from_fn(grid, |x| 1.0 + x[0]);
    let h = 0.01;
    for beta in [BetaMode::Yosida { eps: 1e-3 }, BetaMode::Exact] {
        let s = settings(beta, InertiaWeight::Previous);
        let out = rho_step(&rho, &mu, h, &spec, &s, None).unwrap();
        assert!(out.residual <= s.newton.tol);
        // Independent re-evaluation of the residual with ξ⁺ as returned.
        let lap = crate::grid::laplacian_neumann(&out.rho);
        let mut sum = 0.0;
        for i in 0..grid.len() {
            let r = out.rho.values()[i];
            let v = (r - rho.values()[i]) / h - lap.values()[i] + out.xi.values()[i] + spec.smooth.pi(r)
                - mu.values()[i] * spec.coupling.gprime(r);
            sum += v * v;
        }
        assert!((grid.cell_volume() * sum).sqrt() <= 1e-9);
        if beta == BetaMode::Exact {
            assert!(out.rho.values().iter().all(|&r| r > 0.0 && r < 1.0));
        }
    }
}

#[test]
fn rho_step_rejects_nonpositive_step() {
    let spec = linear_spec(SmoothPart::Zero, Coupling::Const { value: 0.0 });
    let f = Field::zeros(point());
    let s = settings(BetaMode::Yosida { eps: 0.1 }, InertiaWeight::Previous);
    assert!(matches!(rho_step(&f, &f, 0.0, &spec, &s, None), Err(Error::InvalidParameter(_))));
}

#[test]
fn indefinite_jacobian_is_reported() {
    // π' = −20 against 1/h = 10 makes the scalar Jacobian negative.
    let spec = linear_spec(SmoothPart::DoubleWell { a: 10.0 }, Coupling::Const { value: 0.0 });
    let f = Field::constant(point(), 0.3);
    let s = settings(BetaMode::Yosida { eps: 0.1 }, InertiaWeight::Previous);
    assert_eq!(rho_step(&f, &f, 0.1, &spec, &s, None).unwrap_err(), Error::IndefiniteJacobian);
}

#[test]
fn solve_halves_step_on_indefinite_jacobian() {
    let spec = linear_spec(SmoothPart::DoubleWell { a: 10.0 }, Coupling::Const { value: 0.0 });
    let grid = point();
    let data = InitialData::new(Field::constant(grid, 1.0), Field::constant(grid, 0.3), &spec.graph).unwrap();
    let config = DelayConfig::new(0.2, 1, 2);
    let traj = solve(&config, &data, &spec, &ConductivitySpec::constant(1.0), None).unwrap();
    assert!(traj.records.iter().all(|r| r.substeps == 4));
    // Explicit oracle: four implicit steps of size 0.025 of ρ' = 20ρ − 10.
    let mut r = 0.3;
    for _ in 0..8 {
        r = (r / 0.025 - 10.0) / (1.0 / 0.025 - 20.0);
    }
    assert!((traj.rho[2].values()[0] - r).abs() < 1e-12);

    let mut strict = config;
    strict.max_halvings = 1;
    let err = solve(&strict, &data, &spec, &ConductivitySpec::constant(1.0), None).unwrap_err();
    assert_eq!(err.code(), "IndefiniteJacobian");
    assert!(matches!(err, Error::AtStep { step: 1, .. }));
}

/// g(ρ) = ½(ρ + √(ρ² + δ²)) inverted at the prescribed values.
fn rho_for_g(g: f64, delta: f64) -> f64 {
    g - delta * delta / (4.0 * g)
}

#[test]
fn mu_step_scalar_oracles() {
    let delta = 0.1;
    let spec = linear_spec(SmoothPart::Zero, Coupling::SmoothIdentity { delta });
    let grid = point();
    let rho = Field::constant(grid, rho_for_g(0.2, delta));
    let rho_next = Field::constant(grid, rho_for_g(0.25, delta));
    assert!((spec.coupling.g(rho.values()[0]) - 0.2).abs() < 1e-14);
    assert!((spec.coupling.g(rho_next.values()[0]) - 0.25).abs() < 1e-14);
    let mu = Field::constant(grid, 1.0);
    let cond = ConductivitySpec::demo();
    let beta = BetaMode::Yosida { eps: 0.1 };

    let current = mu_step(&mu, &rho, &rho_next, 0.1, &spec, &cond, &settings(beta, InertiaWeight::Current), None).unwrap();
    assert!((current.mu.values()[0] - 1.5 / 1.55).abs() < 1e-13);
    assert!((current.mu.values()[0] - 0.967_742).abs() < 1e-6);

    let previous = mu_step(&mu, &rho, &rho_next, 0.1, &spec, &cond, &settings(beta, InertiaWeight::Previous), None).unwrap();
    assert!((previous.mu.values()[0] - 1.4 / 1.45).abs() < 1e-13);
}

#[test]
fn mu_step_fixed_point_when_g_unchanged() {
    let grid = Grid::rect(7, 4, 1.0, 1.0).unwrap();
    let spec = linear_spec(SmoothPart::Zero, Coupling::SmoothIdentity { delta: 0.1 });
    let rho = Field::from_fn(grid, |x| x[0] * x[1]);
    let mu = Field::constant(grid, 2.5);
    for inertia in [InertiaWeight::Previous, InertiaWeight::Current] {
        let s = settings(BetaMode::Exact, inertia);
        let out = mu_step(&mu, &rho, &rho, 0.3, &spec, &ConductivitySpec::demo(), &s, None).unwrap();
        for &m in out.mu.values() {
            assert!((m - 2.5).abs() < 1e-12);
        }
    }
}

#[test]
fn mu_step_positivity_and_its_failure_mode() {
    let delta = 0.1;
    let spec = linear_spec(SmoothPart::Zero, Coupling::SmoothIdentity { delta });
    let grid = point();
    // g drops from 2 to 0.2: 1 + 3g⁺ − g = −0.4.
    let rho = Field::constant(grid, rho_for_g(2.0, delta));
    let rho_next = Field::constant(grid, rho_for_g(0.2, delta));
    let mu = Field::constant(grid, 1.0);
    let cond = ConductivitySpec::constant(1.0);
    let beta = BetaMode::Yosida { eps: 0.1 };
    let err = mu_step(&mu, &rho, &rho_next, 0.1, &spec, &cond, &settings(beta, InertiaWeight::Current), None).unwrap_err();
    assert!(matches!(err, Error::LostPositivity { cell: 0, .. }));
    let ok = mu_step(&mu, &rho, &rho_next, 0.1, &spec, &cond, &settings(beta, InertiaWeight::Previous), None).unwrap();
    assert!((ok.mu.values()[0] - 5.0 / 3.2).abs() < 1e-13);

    let negative = Field::constant(grid, -1e-6);
    assert!(matches!(
        mu_step(&negative, &rho, &rho, 0.1, &spec, &cond, &settings(beta, InertiaWeight::Previous), None),
        Err(Error::LostPositivity { .. })
    ));
}

fn small_default(n: usize) -> Scenario {
    let mut sc = Scenario::default_on(Grid::rect(n, n, 1.0, 1.0).unwrap()).unwrap();
    sc.config = DelayConfig::new(0.05, 4, 2);
    sc
}

#[test]
fn translate_examples() {
    let sc = small_default(4);
    let traj = solve(&sc.config, &sc.data, &sc.spec, &sc.cond, None).unwrap();
    let (tau, h) = (traj.tau(), traj.h());
    let mu0 = &sc.data.mu0;
    assert_eq!(&translate(&traj, tau, 0.3 * tau, mu0).unwrap(), mu0);
    assert_eq!(&translate(&traj, tau, tau, mu0).unwrap(), mu0);
    for k in 1..traj.levels() - 2 {
        let t = tau + k as f64 * h;
        assert_eq!(translate(&traj, tau, t, mu0).unwrap(), traj.mu[k]);
        // Off-grid times use the level at or below t − τ.
        assert_eq!(translate(&traj, tau, t + 0.5 * h, mu0).unwrap(), traj.mu[k]);
    }

    let mut partial = traj.clone();
    partial.mu.truncate(3);
    let err = translate(&partial, tau, tau + 5.0 * h, mu0).unwrap_err();
    assert_eq!(err, Error::HistoryGap { time: 5.0 * h + tau - tau, level: 5, stored: 3 });
}

#[test]
fn translate_of_constant_history() {
    let grid = Grid::line(3, 1.0).unwrap();
    let spec = linear_spec(SmoothPart::Zero, Coupling::Const { value: 0.5 });
    let c = Field::constant(grid, 0.8);
    let data = InitialData::new(c.clone(), Field::constant(grid, 0.1), &spec.graph).unwrap();
    let config = DelayConfig::new(1.0, 4, 3);
    let traj = solve(&config, &data, &spec, &ConductivitySpec::constant(2.0), None).unwrap();
    for i in 0..=40 {
        let t = i as f64 / 40.0;
        let v = translate(&traj, traj.tau(), t, &c).unwrap();
        assert!(v.values().iter().all(|&x| (x - 0.8).abs() < 1e-13));
    }
}

#[test]
fn constant_data_stays_constant() {
    let grid = Grid::rect(3, 3, 1.0, 1.0).unwrap();
    let spec = linear_spec(SmoothPart::Zero, Coupling::Const { value: 0.7 });
    let data = InitialData::new(Field::constant(grid, 1.3), Field::constant(grid, -0.4), &spec.graph).unwrap();
    let traj = solve(&DelayConfig::new(0.5, 5, 4), &data, &spec, &ConductivitySpec::demo(), None).unwrap();
    assert_eq!(traj.levels(), 21);
    for k in 0..traj.levels() {
        assert!(traj.mu[k].values().iter().all(|&m| (m - 1.3).abs() < 1e-12));
        assert!(traj.rho[k].values().iter().all(|&r| (r + 0.4).abs() < 1e-12));
    }
}

#[test]
fn default_scenario_certificates_positivity_and_determinism() {
    let sc = small_default(8);
    let a = solve(&sc.config, &sc.data, &sc.spec, &sc.cond, None).unwrap();
    let b = solve(&sc.config, &sc.data, &sc.spec, &sc.cond, None).unwrap();
    assert_eq!(a.times.len(), sc.config.steps() + 1);
    for k in 0..a.levels() {
        assert!((a.times[k] - k as f64 * a.h()).abs() < 1e-15);
        assert_eq!(a.mu[k], b.mu[k]);
        assert_eq!(a.rho[k], b.rho[k]);
        assert!(a.mu[k].min() >= -1e-12);
        // Yosida excursion bound with ε = τ.
        let eps = sc.config.eps();
        assert!(a.rho[k].min() > -5.0 * eps && a.rho[k].max() < 1.0 + 5.0 * eps);
    }
    for r in &a.records {
        assert!(r.newton_residual <= sc.config.newton.tol);
        assert!(r.picard_change <= sc.config.picard.tol);
        assert_eq!(r.substeps, 1);
    }
}

#[test]
fn exact_mode_keeps_rho_inside() {
    let mut sc = small_default(6);
    sc.config.exact_beta = true;
    let traj = solve(&sc.config, &sc.data, &sc.spec, &sc.cond, None).unwrap();
    for r in &traj.rho {
        assert!(r.values().iter().all(|&x| x > 0.0 && x < 1.0));
    }
    let obstacle = PotentialSpec { graph: ScalarGraph::Obstacle { lo: 0.0, hi: 1.0 }, ..sc.spec };
    let data = InitialData::new(sc.data.mu0.clone(), sc.data.rho0.clone(), &obstacle.graph).unwrap();
    assert!(matches!(
        solve(&sc.config, &data, &obstacle, &sc.cond, None),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn rho_step_uses_only_the_delayed_history() {
    // Perturbing the μ-history after level k − M must not change ρ^k.
    let sc = small_default(5);
    let traj = solve(&sc.config, &sc.data, &sc.spec, &sc.cond, None).unwrap();
    let settings = sc.config.settings();
    let m = sc.config.m_inner;
    for k in 1..traj.levels() {
        let delayed = &traj.mu[traj.delayed_level(k)];
        let step = rho_step(&traj.rho[k - 1], delayed, traj.h(), &sc.spec, &settings, None).unwrap();
        assert_eq!(step.rho, traj.rho[k]);
        assert!(traj.delayed_level(k) + m >= k || traj.delayed_level(k) == 0);
    }
}

#[test]
fn refine_study_without_delay_dependence() {
    let grid = Grid::line(16, 1.0).unwrap();
    let spec = linear_spec(SmoothPart::Zero, Coupling::Const { value: 0.5 });
    let data = InitialData::new(
        Field::from_fn(grid, |x| 1.0 + 0.2 * x[0]),
        Field::from_fn(grid, |x| libm::cos(core::f64::consts::PI * x[0])),
        &spec.graph,
    )
    .unwrap();
    let mut config = DelayConfig::new(0.2, 2, 1);
    // Freeze the time step so only τ changes between levels.
    config.m_inner = 1;
    let coarse = {
        let mut c = config;
        c.n_delays = 4;
        c.m_inner = 2;
        c
    };
    let fine = DelayConfig { n_delays: 8, m_inner: 1, ..coarse };
    let a = solve(&coarse, &data, &spec, &ConductivitySpec::constant(1.0), None).unwrap();
    let b = solve(&fine, &data, &spec, &ConductivitySpec::constant(1.0), None).unwrap();
    // Same h, different τ: the ρ-equation does not see μ when g is constant.
    for k in 0..a.levels() {
        for (x, y) in a.rho[k].values().iter().zip(b.rho[k].values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    let table = refine_study(&config, &data, &spec, &ConductivitySpec::constant(1.0), 3).unwrap();
    assert_eq!(table.levels.len(), 3);
    assert_eq!(table.pairs.len(), 2);
    assert_eq!(table.levels[2].n_delays, 8);
    assert!((table.levels[1].h - table.levels[0].h / 2.0).abs() < 1e-15);
    for p in &table.pairs {
        assert!(p.mu_l2q.is_finite() && p.rho_linfq.is_finite());
    }
    assert!(matches!(refine_study(&config, &data, &spec, &ConductivitySpec::constant(1.0), 1), Err(Error::InvalidParameter(_))));
}

#[test]
fn pairwise_difference_of_identical_runs_is_zero() {
    let sc = small_default(4);
    let a = solve(&sc.config, &sc.data, &sc.spec, &sc.cond, None).unwrap();
    assert!(pairwise_difference(&a, &a).is_err());
    let fine = solve(&sc.config.with_delays(2 * sc.config.n_delays), &sc.data, &sc.spec, &sc.cond, None).unwrap();
    let d = pairwise_difference(&a, &fine).unwrap();
    assert!(d.mu_l2q > 0.0 && d.rho_linfq > 0.0);
}

#[test]
fn manufactured_sources_vanish_on_their_own_residual() {
    // With exact β the sources reproduce the continuous residual; checking at
    // a point against a finite-difference evaluation of the PDE.
    let grid = Grid::line(50, 1.0).unwrap();
    let spec = PotentialSpec::new(
        ScalarGraph::Log { c: 1.0 },
        SmoothPart::DoubleWell { a: 3.0 },
        Coupling::SmoothIdentity { delta: 0.1 },
    )
    .unwrap();
    let ms = ManufacturedSolution::new(spec, ConductivitySpec::constant(1.0), BetaMode::Exact, 0.1);
    let t = 0.05;
    let mut s = alloc::vec![0.0; grid.len()];
    ms.mu_source(&grid, t, &mut s);
    let dt = 1e-6;
    let (a, b) = (ms.exact_mu(&grid, t + dt), ms.exact_mu(&grid, t - dt));
    let (ra, rb) = (ms.exact_rho(&grid, t + dt), ms.exact_rho(&grid, t - dt));
    let mu = ms.exact_mu(&grid, t);
    let rho = ms.exact_rho(&grid, t);
    let lap = crate::grid::laplacian_neumann(&mu);
    for i in 5..45 {
        let g = spec.coupling.g(rho.values()[i]);
        let dmu = (a.values()[i] - b.values()[i]) / (2.0 * dt);
        let drho = (ra.values()[i] - rb.values()[i]) / (2.0 * dt);
        let r = (1.0 + 2.0 * g) * dmu + mu.values()[i] * spec.coupling.gprime(rho.values()[i]) * drho - lap.values()[i];
        assert!((r - s[i]).abs() < 1e-2, "{i}: {r} vs {}", s[i]);
    }
}
