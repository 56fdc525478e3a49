//! The time-delay approximation: μ is replaced by its τ-delayed history in the
//! ρ-equation, which decouples each step into a ρ-solve followed by a μ-solve.
//!
//! Within the window structure t ∈ [0, nτ] the delayed data is always known, so
//! the scheme marches t⁰ → T with implicit Euler steps of size h = τ/M.

mod manufactured;
mod mu;
mod rho;
mod scenario;
mod study;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{CgOptions, Field, Grid};
use crate::nonlin::{BetaMode, ConductivitySpec, PotentialSpec, ScalarGraph};

pub use manufactured::{ManufacturedSolution, SourceTerms, TabulatedSources};
pub use mu::{mu_step, MuStep};
pub use rho::{rho_step, RhoStep};
pub use scenario::{Profile, Scenario, DEFAULT_MU0, DEFAULT_RHO0};
pub use study::{pairwise_difference, refine_study, ConvergenceTable, LevelRun, PairDifference};

/// Which level's 1 + 2g(ρ) multiplies (μ⁺ − μ)/h in the μ-step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InertiaWeight {
    /// 1 + 2g(ρᵏ): the weighted energy (1+2g(ρ))μ² telescopes exactly and the
    /// reaction diagonal 1 + g(ρᵏ) + g(ρᵏ⁺¹) is always positive.
    Previous,
    /// 1 + 2g(ρᵏ⁺¹): positivity requires 1 + 3g(ρᵏ⁺¹) − g(ρᵏ) > 0.
    Current,
}

/// Initial iterate of the Picard loop in the μ-step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PicardGuess {
    Previous,
    Zero,
    Scaled(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial step length tried by the line search, in (0, 1].
    pub damping: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub guess: PicardGuess,
}

/// Everything the per-step solvers need besides the fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSettings {
    pub beta: BetaMode,
    pub inertia: InertiaWeight,
    pub newton: NewtonOptions,
    pub picard: PicardOptions,
    pub cg: CgOptions,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayConfig {
    pub t_final: f64,
    /// τ = T/N.
    pub n_delays: usize,
    /// h = τ/M.
    pub m_inner: usize,
    /// Yosida parameter; `None` means ε = τ.
    pub eps: Option<f64>,
    pub exact_beta: bool,
    pub inertia: InertiaWeight,
    pub newton: NewtonOptions,
    pub picard: PicardOptions,
    pub cg: CgOptions,
    /// Step halvings tried when the Newton Jacobian is indefinite.
    pub max_halvings: usize,
}

impl DelayConfig {
    pub fn new(t_final: f64, n_delays: usize, m_inner: usize) -> DelayConfig {
        DelayConfig {
            t_final,
            n_delays,
            m_inner,
            eps: None,
            exact_beta: false,
            inertia: InertiaWeight::Previous,
            newton: NewtonOptions { tol: 1e-10, max_iter: 100, damping: 1.0 },
            picard: PicardOptions { tol: 1e-11, max_iter: 50, guess: PicardGuess::Previous },
            cg: CgOptions { tol: 1e-13, max_iter: 20_000, jacobi: false },
            max_halvings: 3,
        }
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.n_delays as f64
    }

    pub fn h(&self) -> f64 {
        self.tau() / self.m_inner as f64
    }

    pub fn steps(&self) -> usize {
        self.n_delays * self.m_inner
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or_else(|| self.tau())
    }

    pub fn beta_mode(&self) -> BetaMode {
        if self.exact_beta {
            BetaMode::Exact
        } else {
            BetaMode::Yosida { eps: self.eps() }
        }
    }

    pub fn settings(&self) -> StepSettings {
        StepSettings { beta: self.beta_mode(), inertia: self.inertia, newton: self.newton, picard: self.picard, cg: self.cg }
    }

    /// Same configuration with N replaced; ε follows τ unless it was pinned.
    pub fn with_delays(&self, n_delays: usize) -> DelayConfig {
        DelayConfig { n_delays, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(alloc::string::String::from(msg)));
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("final time must be positive");
        }
        if self.n_delays == 0 || self.m_inner == 0 {
            return bad("N and M must be at least 1");
        }
        if let Some(eps) = self.eps {
            if !(eps > 0.0) {
                return bad("eps must be positive");
            }
        }
        if !(self.newton.tol > 0.0 && self.picard.tol > 0.0 && self.cg.tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.newton.damping > 0.0 && self.newton.damping <= 1.0) {
            return bad("Newton damping must lie in (0, 1]");
        }
        if self.newton.max_iter == 0 || self.picard.max_iter == 0 {
            return bad("iteration budgets must be positive");
        }
        Ok(())
    }
}

/// (μ₀, ρ₀, ξ₀) with μ₀ ≥ 0, ρ₀ in the domain of β and ξ₀ ∈ β(ρ₀).
#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    pub mu0: Field,
    pub rho0: Field,
    pub xi0: Field,
}

impl InitialData {
    /// Picks ξ₀ as the minimal-norm section of β(ρ₀).
    pub fn new(mu0: Field, rho0: Field, graph: &ScalarGraph) -> Result<InitialData> {
        let mut xi = Vec::with_capacity(rho0.len());
        for (i, &r) in rho0.values().iter().enumerate() {
            match graph.min_section(r) {
                Some(v) => xi.push(v),
                None => {
                    return Err(Error::InvalidScenario(alloc::format!(
                        "rho0 = {r} at cell {i} has empty beta({r}) for graph {}",
                        graph.name()
                    )))
                }
            }
        }
        let xi0 = Field::new(*rho0.grid(), xi)?;
        let data = InitialData { mu0, rho0, xi0 };
        data.validate(graph)?;
        Ok(data)
    }

    pub fn grid(&self) -> &Grid {
        self.mu0.grid()
    }

    pub fn validate(&self, graph: &ScalarGraph) -> Result<()> {
        if self.mu0.grid() != self.rho0.grid() || self.mu0.grid() != self.xi0.grid() {
            return Err(Error::InvalidScenario("initial fields live on different grids".into()));
        }
        if !(self.mu0.is_finite() && self.rho0.is_finite() && self.xi0.is_finite()) {
            return Err(Error::InvalidScenario("initial data is not finite".into()));
        }
        if let Some(i) = self.mu0.values().iter().position(|&m| m < 0.0) {
            return Err(Error::InvalidScenario(alloc::format!("mu0 is negative at cell {i}")));
        }
        let (lo, hi) = graph.domain();
        for (i, (&r, &x)) in self.rho0.values().iter().zip(self.xi0.values()).enumerate() {
            if r < lo || r > hi {
                return Err(Error::InvalidScenario(alloc::format!("rho0 = {r} at cell {i} lies outside D(beta)")));
            }
            if let Some(b) = graph.beta(r) {
                if (b - x).abs() > 1e-9 * (1.0 + b.abs()) {
                    return Err(Error::InvalidScenario(alloc::format!("xi0 at cell {i} is not in beta(rho0)")));
                }
            } else if graph.min_section(r).is_none() {
                return Err(Error::InvalidScenario(alloc::format!("beta(rho0) is empty at cell {i}")));
            }
        }
        Ok(())
    }
}

/// Solver certificates for one accepted step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepRecord {
    pub newton_iterations: usize,
    pub newton_residual: f64,
    pub picard_iterations: usize,
    pub picard_change: f64,
    /// 1 unless the step was split after an indefinite Jacobian.
    pub substeps: usize,
}

/// Time levels 0 = t⁰ < … < t^{NM} = T with μ, ρ, ξ at each level.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: Grid,
    pub config: DelayConfig,
    pub times: Vec<f64>,
    pub mu: Vec<Field>,
    pub rho: Vec<Field>,
    pub xi: Vec<Field>,
    /// One record per step (`levels() - 1` entries).
    pub records: Vec<StepRecord>,
    /// Whether source terms were added to the equations.
    pub sourced: bool,
}

impl Trajectory {
    pub fn levels(&self) -> usize {
        self.times.len()
    }

    pub fn h(&self) -> f64 {
        self.config.h()
    }

    pub fn tau(&self) -> f64 {
        self.config.tau()
    }

    /// Level whose μ feeds the ρ-step ending at level `k`.
    pub fn delayed_level(&self, k: usize) -> usize {
        k.saturating_sub(self.config.m_inner)
    }
}

/// (T_τ μ)(t): μ₀ for t ≤ τ, otherwise the stored level at or below t − τ.
pub fn translate(traj: &Trajectory, tau: f64, t: f64, mu0: &Field) -> Result<Field> {
    delayed_index(traj.h(), tau, t, traj.mu.len()).map(|level| match level {
        None => mu0.clone(),
        Some(k) => traj.mu[k].clone(),
    })
}

fn delayed_index(h: f64, tau: f64, t: f64, stored: usize) -> Result<Option<usize>> {
    let s = (t - tau) / h;
    if s <= 1e-9 {
        return Ok(None);
    }
    let level = libm::floor(s + 1e-9) as usize;
    if level >= stored {
        return Err(Error::HistoryGap { time: t - tau, level, stored });
    }
    Ok(Some(level))
}

/// Marches the delayed system from the initial data to T.
pub fn solve(
    config: &DelayConfig,
    data: &InitialData,
    spec: &PotentialSpec,
    cond: &ConductivitySpec,
    sources: Option<&dyn SourceTerms>,
) -> Result<Trajectory> {
    config.validate()?;
    spec.validate()?;
    cond.validate()?;
    data.validate(&spec.graph)?;
    if config.exact_beta && !spec.graph.supports_exact() {
        return Err(Error::InvalidParameter(alloc::format!(
            "exact beta mode is not available for graph {}",
            spec.graph.name()
        )));
    }

    let grid = *data.grid();
    let (h, tau, steps) = (config.h(), config.tau(), config.steps());
    let mut traj = Trajectory {
        grid,
        config: *config,
        times: vec![0.0],
        mu: vec![data.mu0.clone()],
        rho: vec![data.rho0.clone()],
        xi: vec![data.xi0.clone()],
        records: Vec::with_capacity(steps),
        sourced: sources.is_some(),
    };
    let settings = config.settings();

    for k in 0..steps {
        let t_end = (k + 1) as f64 * h;
        let mut halving = 0;
        let (mu, rho, xi, record) = loop {
            match advance(&traj, k, halving, tau, spec, cond, &settings, sources) {
                Ok(out) => break out,
                Err(Error::IndefiniteJacobian) if halving < config.max_halvings => halving += 1,
                Err(e) => return Err(e.at_step(k + 1, t_end)),
            }
        };
        traj.times.push(t_end);
        traj.mu.push(mu);
        traj.rho.push(rho);
        traj.xi.push(xi);
        traj.records.push(record);
    }
    Ok(traj)
}

/// One step k → k+1, split into 2^halving equal sub-steps.
#[allow(clippy::too_many_arguments)]
fn advance(
    traj: &Trajectory,
    k: usize,
    halving: usize,
    tau: f64,
    spec: &PotentialSpec,
    cond: &ConductivitySpec,
    settings: &StepSettings,
    sources: Option<&dyn SourceTerms>,
) -> Result<(Field, Field, Field, StepRecord)> {
    let pieces = 1usize << halving;
    let h = traj.h() / pieces as f64;
    let t0 = k as f64 * traj.h();
    let n = traj.grid.len();
    let mut rho = traj.rho[k].clone();
    let mut mu = traj.mu[k].clone();
    let mut xi = traj.xi[k].clone();
    let mut record = StepRecord { substeps: pieces, ..StepRecord::default() };
    let (mut src_rho, mut src_mu) = (vec![0.0; n], vec![0.0; n]);

    for j in 1..=pieces {
        let t = if j == pieces { (k + 1) as f64 * traj.h() } else { t0 + j as f64 * h };
        let mu_delayed = match delayed_index(traj.h(), tau, t, traj.mu.len())? {
            None => &traj.mu[0],
            Some(level) => &traj.mu[level],
        };
        if let Some(s) = sources {
            s.rho_source(&traj.grid, t, &mut src_rho);
            s.mu_source(&traj.grid, t, &mut src_mu);
        }
        let step = rho_step(&rho, mu_delayed, h, spec, settings, sources.map(|_| src_rho.as_slice()))?;
        let next = mu_step(&mu, &rho, &step.rho, h, spec, cond, settings, sources.map(|_| src_mu.as_slice()))?;
        record.newton_iterations += step.iterations;
        record.newton_residual = record.newton_residual.max(step.residual);
        record.picard_iterations += next.iterations;
        record.picard_change = record.picard_change.max(next.change);
        rho = step.rho;
        xi = step.xi;
        mu = next.mu;
    }
    Ok((mu, rho, xi, record))
}

#[cfg(test)]
mod tests;
