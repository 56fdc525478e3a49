use alloc::vec::Vec;

use super::{solve, DelayConfig, InitialData, Trajectory};
use crate::error::{Error, Result};
use crate::nonlin::{ConductivitySpec, PotentialSpec};

/// One level of a τ-refinement study.
#[derive(Clone, Debug)]
pub struct LevelRun {
    pub n_delays: usize,
    pub tau: f64,
    pub h: f64,
    pub trajectory: Trajectory,
}

/// Differences between consecutive levels, measured on the coarse time levels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairDifference {
    pub tau_coarse: f64,
    /// Discrete L²(0,T; L²) norm of μ_{τ/2} − μ_τ.
    pub mu_l2q: f64,
    /// max over time levels and cells of |ρ_{τ/2} − ρ_τ|.
    pub rho_linfq: f64,
}

#[derive(Clone, Debug)]
pub struct ConvergenceTable {
    pub levels: Vec<LevelRun>,
    pub pairs: Vec<PairDifference>,
}

impl ConvergenceTable {
    /// μ-differences strictly decrease from pair to pair.
    pub fn mu_decreasing(&self) -> bool {
        self.pairs.windows(2).all(|w| w[1].mu_l2q < w[0].mu_l2q)
    }

    pub fn rho_decreasing(&self) -> bool {
        self.pairs.windows(2).all(|w| w[1].rho_linfq < w[0].rho_linfq)
    }
}

/// Compares a trajectory with one computed at half the step, same T and grid.
pub fn pairwise_difference(coarse: &Trajectory, fine: &Trajectory) -> Result<PairDifference> {
    if coarse.grid != fine.grid {
        return Err(Error::InvalidParameter("study levels must share a grid".into()));
    }
    let steps = coarse.levels() - 1;
    if fine.levels() - 1 != 2 * steps {
        return Err(Error::InvalidParameter("fine level must have exactly twice the steps".into()));
    }
    let vol = coarse.grid.cell_volume();
    let h = coarse.h();
    let mut l2 = 0.0;
    let mut linf: f64 = 0.0;
    for k in 1..=steps {
        let sq: f64 = coarse.mu[k].values().iter().zip(fine.mu[2 * k].values()).map(|(a, b)| (a - b) * (a - b)).sum();
        l2 += h * vol * sq;
        for (a, b) in coarse.rho[k].values().iter().zip(fine.rho[2 * k].values()) {
            linf = linf.max((a - b).abs());
        }
    }
    Ok(PairDifference { tau_coarse: coarse.tau(), mu_l2q: libm::sqrt(l2), rho_linfq: linf })
}

/// Solves with N, 2N, 4N, … delays (M fixed, so h halves with τ) and
/// tabulates the differences between consecutive levels.
pub fn refine_study(
    base: &DelayConfig,
    data: &InitialData,
    spec: &PotentialSpec,
    cond: &ConductivitySpec,
    levels: usize,
) -> Result<ConvergenceTable> {
    if levels < 2 {
        return Err(Error::InvalidParameter("a study needs at least 2 levels".into()));
    }
    let mut runs: Vec<LevelRun> = Vec::with_capacity(levels);
    for l in 0..levels {
        let config = base.with_delays(base.n_delays << l);
        let trajectory = solve(&config, data, spec, cond, None)?;
        runs.push(LevelRun { n_delays: config.n_delays, tau: config.tau(), h: config.h(), trajectory });
    }
    let pairs = runs
        .windows(2)
        .map(|w| pairwise_difference(&w[0].trajectory, &w[1].trajectory))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable { levels: runs, pairs })
}
