//! Audits of discrete a priori estimates along a computed trajectory.
//!
//! Every audit is a pure function of the trajectory, the nonlinearities and an
//! [`AuditConfig`]; running it twice on the same data gives the same verdict.
//! Series carry one entry per stored time level, level 0 included.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{lp_norm, FluxOperator, Grid};
use crate::nonlin::{BetaMode, ConductivitySpec, PotentialSpec};
use crate::scheme::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AuditKind {
    WeightedEnergy,
    PhaseEnergy,
    Nonnegativity,
    LinfTruncation,
    XiL6,
    GradK,
    HomogeneousInvariant,
}

impl AuditKind {
    pub const ALL: [AuditKind; 7] = [
        AuditKind::WeightedEnergy,
        AuditKind::PhaseEnergy,
        AuditKind::Nonnegativity,
        AuditKind::LinfTruncation,
        AuditKind::XiL6,
        AuditKind::GradK,
        AuditKind::HomogeneousInvariant,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AuditKind::WeightedEnergy => "weighted_energy",
            AuditKind::PhaseEnergy => "phase_energy",
            AuditKind::Nonnegativity => "nonnegativity",
            AuditKind::LinfTruncation => "linf_truncation",
            AuditKind::XiL6 => "xi_l6",
            AuditKind::GradK => "grad_k",
            AuditKind::HomogeneousInvariant => "homogeneous_invariant",
        }
    }

    pub fn from_name(name: &str) -> Option<AuditKind> {
        AuditKind::ALL.iter().copied().find(|k| k.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditConfig {
    /// W^k + 2D^k ≤ W⁰(1 + energy_rel_tol).
    pub energy_rel_tol: f64,
    pub nonneg_tol: f64,
    /// Gronwall constant of the phase-energy bound; `None` means ½T·Lip(g)².
    pub phase_cg: Option<f64>,
    /// Truncation levels k; empty means max μ₀ + {0, ¼, ½, ¾, 1}·Δ_cap.
    pub truncation_levels: Vec<f64>,
    /// ‖ξ‖₆ ≤ ‖h‖₆ + xi_rel_tol(1 + ‖h‖₆).
    pub xi_rel_tol: f64,
    /// ∇K identity tolerance is c_id times the largest spacing.
    pub c_id: f64,
    /// Homogeneous invariant drift must stay below c_drift · h.
    pub c_drift: f64,
    /// Relative stability across τ halvings for Δ_cap and the energy bound.
    pub cap_stability: f64,
    /// Relative stability across τ halvings for the time-derivative monitors.
    pub monitor_stability: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            energy_rel_tol: 1e-6,
            nonneg_tol: 1e-12,
            phase_cg: None,
            truncation_levels: Vec::new(),
            xi_rel_tol: 1e-8,
            c_id: 1.0,
            c_drift: 10.0,
            cap_stability: 0.10,
            monitor_stability: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        *self == Verdict::Pass
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }

    fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditResult {
    pub name: &'static str,
    pub verdict: Verdict,
    pub tolerance: f64,
    /// Step with the smallest margin (the first failing one on failure).
    pub worst_step: Option<usize>,
    pub series: Vec<(&'static str, Vec<f64>)>,
    pub detail: String,
}

impl AuditResult {
    /// `Err(AuditFailure)` unless the verdict is a pass.
    pub fn check(&self) -> Result<()> {
        match self.verdict {
            Verdict::Pass => Ok(()),
            Verdict::Fail => Err(Error::AuditFailure {
                audit: self.name,
                step: self.worst_step.unwrap_or(0),
                detail: self.detail.clone(),
            }),
        }
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|(n, _)| *n == name).map(|(_, v)| v.as_slice())
    }
}

/// Per-level quantities shared by the audits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepSeries {
    pub time: Vec<f64>,
    /// Σ (1 + 2g(ρ))μ² · vol.
    pub weighted_energy: Vec<f64>,
    /// Σ_j h ∫ κ|∇μ^j|², cumulative.
    pub dissipation: Vec<f64>,
    pub phase_energy: Vec<f64>,
    pub min_mu: Vec<f64>,
    pub max_mu: Vec<f64>,
    /// ‖(ρ^k − ρ^{k−1})/h‖₂.
    pub dtrho_l2: Vec<f64>,
    /// Σ_j h |(ρ^j − ρ^{j−1})/h|²_{H¹}, cumulative.
    pub dtrho_h1_cum: Vec<f64>,
    pub xi_l6: Vec<f64>,
    /// ‖h^k‖₆ with h^k = −(ρ^k − ρ^{k−1})/h − π(ρ^k) + μ_d g'(ρ^k).
    pub h_l6: Vec<f64>,
    pub grad_k_l2: Vec<f64>,
    /// ‖∇K − (κ̄∇μ + K̄₁∇ρ)‖₂ on faces.
    pub grad_k_identity: Vec<f64>,
    /// Σ_j h ‖(μ^j − μ^{j−1})/h‖², cumulative.
    pub dtmu_l2_cum: Vec<f64>,
    /// ‖μ^{delayed level}‖² feeding each step (level 0: ‖μ₀‖²).
    pub delayed_mu_sq: Vec<f64>,
}

fn weighted_l2_sq(grid: &Grid, values: impl Iterator<Item = f64>) -> f64 {
    grid.cell_volume() * values.map(|v| v * v).sum::<f64>()
}

fn phase_density(spec: &PotentialSpec, mode: BetaMode, r: f64) -> Result<f64> {
    let f1 = match mode {
        BetaMode::Yosida { eps } => spec.graph.moreau_envelope(eps, r)?,
        BetaMode::Exact => spec.f1(r),
    };
    Ok(f1 + spec.f2(r))
}

impl StepSeries {
    pub fn compute(traj: &Trajectory, spec: &PotentialSpec, cond: &ConductivitySpec) -> Result<StepSeries> {
        let grid = traj.grid;
        let vol = grid.cell_volume();
        let h = traj.h();
        let mode = traj.config.beta_mode();
        let unit = FluxOperator::unit(grid);
        let g = &spec.coupling;
        let n = traj.levels();
        let mut s = StepSeries { time: traj.times.clone(), ..StepSeries::default() };
        let mut diff = vec![0.0; grid.len()];
        let mut hk = vec![0.0; grid.len()];
        for k in 0..n {
            let (mu, rho) = (traj.mu[k].values(), traj.rho[k].values());
            s.weighted_energy.push(vol * mu.iter().zip(rho).map(|(&m, &r)| (1.0 + 2.0 * g.g(r)) * m * m).sum::<f64>());
            let mut density = 0.0;
            for &r in rho {
                density += phase_density(spec, mode, r)?;
            }
            s.phase_energy.push(0.5 * unit.dissipation(rho) + vol * density);
            s.min_mu.push(traj.mu[k].min());
            s.max_mu.push(traj.mu[k].max());
            s.xi_l6.push(lp_norm(&grid, traj.xi[k].values(), 6));
            let (gk, identity) = grad_k(&grid, cond, mu, rho)?;
            s.grad_k_l2.push(gk);
            s.grad_k_identity.push(identity);
            let delayed = traj.mu[traj.delayed_level(k)].values();
            s.delayed_mu_sq.push(weighted_l2_sq(&grid, delayed.iter().copied()));

            if k == 0 {
                s.dissipation.push(0.0);
                s.dtrho_l2.push(0.0);
                s.dtrho_h1_cum.push(0.0);
                s.h_l6.push(0.0);
                s.dtmu_l2_cum.push(0.0);
                continue;
            }
            let kappa: Vec<f64> = mu.iter().zip(rho).map(|(&m, &r)| cond.kappa(m.max(0.0), r)).collect();
            let flux = FluxOperator::from_cells(grid, &kappa)?;
            s.dissipation.push(s.dissipation[k - 1] + h * flux.dissipation(mu));

            let prev = traj.rho[k - 1].values();
            for i in 0..grid.len() {
                diff[i] = (rho[i] - prev[i]) / h;
                hk[i] = -diff[i] - spec.smooth.pi(rho[i]) + delayed[i] * g.gprime(rho[i]);
            }
            s.dtrho_l2.push(libm::sqrt(weighted_l2_sq(&grid, diff.iter().copied())));
            s.dtrho_h1_cum.push(s.dtrho_h1_cum[k - 1] + h * unit.dissipation(&diff));
            s.h_l6.push(lp_norm(&grid, &hk, 6));
            let mu_prev = traj.mu[k - 1].values();
            let dtmu = weighted_l2_sq(&grid, mu.iter().zip(mu_prev).map(|(a, b)| (a - b) / h));
            s.dtmu_l2_cum.push(s.dtmu_l2_cum[k - 1] + h * dtmu);
        }
        Ok(s)
    }
}

/// (‖∇K‖₂, ‖∇K − (κ̄∇μ + K̄₁∇ρ)‖₂) over interior faces, bars denoting
/// arithmetic means of the adjacent cell values.
fn grad_k(grid: &Grid, cond: &ConductivitySpec, mu: &[f64], rho: &[f64]) -> Result<(f64, f64)> {
    let mut k = Vec::with_capacity(mu.len());
    let mut k1 = Vec::with_capacity(mu.len());
    let mut kappa = Vec::with_capacity(mu.len());
    for (&m, &r) in mu.iter().zip(rho) {
        let m = m.max(0.0);
        let fam = cond.k_family(m, r)?;
        k.push(fam.k);
        k1.push(fam.k1);
        kappa.push(cond.kappa(m, r));
    }
    let (mut norm, mut residual) = (0.0, 0.0);
    grid.for_each_face(|i, j, d| {
        let gk = (k[j] - k[i]) / d;
        let model = 0.5 * (kappa[i] + kappa[j]) * (mu[j] - mu[i]) / d + 0.5 * (k1[i] + k1[j]) * (rho[j] - rho[i]) / d;
        norm += gk * gk;
        residual += (gk - model) * (gk - model);
    });
    let vol = grid.cell_volume();
    Ok((libm::sqrt(vol * norm), libm::sqrt(vol * residual)))
}

fn require_unsourced(traj: &Trajectory) -> Result<()> {
    if traj.sourced {
        return Err(Error::InvalidScenario("audits apply to source-free trajectories only".into()));
    }
    Ok(())
}

pub fn audit_weighted_energy(traj: &Trajectory, spec: &PotentialSpec, cond: &ConductivitySpec, cfg: &AuditConfig) -> Result<AuditResult> {
    require_unsourced(traj)?;
    Ok(judge_weighted_energy(&StepSeries::compute(traj, spec, cond)?, cfg))
}

fn judge_weighted_energy(s: &StepSeries, cfg: &AuditConfig) -> AuditResult {
    let w0 = s.weighted_energy[0];
    let tol = cfg.energy_rel_tol * w0;
    let excess: Vec<f64> = s.weighted_energy.iter().zip(&s.dissipation).map(|(w, d)| w + 2.0 * d - w0).collect();
    let first_bad = excess.iter().position(|&e| !(e <= tol));
    let worst = first_bad.or_else(|| argmax(&excess));
    let verdict = Verdict::from_bool(first_bad.is_none());
    let detail = match first_bad {
        Some(k) => format!("W + 2D exceeds W0 by {:e} at step {k} (tolerance {tol:e})", excess[k]),
        None => format!("max excess {:e}, W0 = {w0:e}", excess.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    };
    AuditResult {
        name: AuditKind::WeightedEnergy.name(),
        verdict,
        tolerance: tol,
        worst_step: worst,
        series: vec![("W", s.weighted_energy.clone()), ("D", s.dissipation.clone()), ("excess", excess)],
        detail,
    }
}

fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|b| x > v[b]) {
            best = Some(i);
        }
    }
    best
}

fn argmin(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|b| x < v[b]) {
            best = Some(i);
        }
    }
    best
}

/// E_bound = E⁰ + C_G (1 + sup_k ‖T_τ μ‖²).
pub fn phase_energy_bound(traj: &Trajectory, spec: &PotentialSpec, s: &StepSeries, cfg: &AuditConfig) -> f64 {
    let lip = spec.coupling.g_lipschitz();
    let cg = cfg.phase_cg.unwrap_or(0.5 * traj.config.t_final * lip * lip);
    let sup_mu = s.delayed_mu_sq.iter().copied().fold(0.0, f64::max);
    s.phase_energy[0] + cg * (1.0 + sup_mu)
}

pub fn audit_phase_energy(traj: &Trajectory, spec: &PotentialSpec, cond: &ConductivitySpec, cfg: &AuditConfig) -> Result<AuditResult> {
    require_unsourced(traj)?;
    let s = StepSeries::compute(traj, spec, cond)?;
    Ok(judge_phase_energy(traj, spec, &s, cfg))
}

fn judge_phase_energy(traj: &Trajectory, spec: &PotentialSpec, s: &StepSeries, cfg: &AuditConfig) -> AuditResult {
    let bound = phase_energy_bound(traj, spec, s, cfg);
    let first_bad = s.phase_energy.iter().position(|&e| !(e <= bound));
    let dtrho_sum: f64 = s.dtrho_l2.iter().skip(1).map(|v| traj.h() * v * v).sum();
    let mut detail = match first_bad {
        Some(k) => format!("E = {:e} exceeds the bound {bound:e} at step {k}", s.phase_energy[k]),
        None => format!("sup E = {:e} <= {bound:e}; sum h|dt rho|^2 = {dtrho_sum:e}", s.phase_energy.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    };
    let hl = traj.h() * spec.smooth.pi_lipschitz();
    if hl > 1.0 {
        detail.push_str(&format!("; h*Lip(pi) = {hl} > 1, bound not guaranteed"));
    }
    AuditResult {
        name: AuditKind::PhaseEnergy.name(),
        verdict: Verdict::from_bool(first_bad.is_none() && dtrho_sum.is_finite()),
        tolerance: bound,
        worst_step: first_bad.or_else(|| argmax(&s.phase_energy)),
        series: vec![("E", s.phase_energy.clone()), ("dtrho_L2", s.dtrho_l2.clone())],
        detail,
    }
}

pub fn audit_nonnegativity(traj: &Trajectory, cfg: &AuditConfig) -> AuditResult {
    let min_mu: Vec<f64> = traj.mu.iter().map(|m| m.min()).collect();
    let first_bad = min_mu.iter().position(|&m| !(m >= -cfg.nonneg_tol));
    let detail = match first_bad {
        Some(k) => {
            let cell = traj.mu[k].values().iter().position(|&m| m == min_mu[k]).unwrap_or(0);
            format!("mu = {:e} at step {k}, cell {cell}", min_mu[k])
        }
        None => format!("min mu = {:e}", min_mu.iter().copied().fold(f64::INFINITY, f64::min)),
    };
    AuditResult {
        name: AuditKind::Nonnegativity.name(),
        verdict: Verdict::from_bool(first_bad.is_none()),
        tolerance: cfg.nonneg_tol,
        worst_step: first_bad.or_else(|| argmin(&min_mu)),
        series: vec![("min_mu", min_mu)],
        detail,
    }
}

/// Nonnegativity verdict for a solve that stopped with an error: a
/// `LostPositivity` refusal is a failed audit, other errors are passed on.
pub fn nonnegativity_refusal(err: &Error, cfg: &AuditConfig) -> Result<AuditResult> {
    let step = match err {
        Error::AtStep { step, .. } => Some(*step),
        _ => None,
    };
    match err.root() {
        Error::LostPositivity { .. } => Ok(AuditResult {
            name: AuditKind::Nonnegativity.name(),
            verdict: Verdict::Fail,
            tolerance: cfg.nonneg_tol,
            worst_step: step,
            series: Vec::new(),
            detail: format!("solver refused the step: {err}"),
        }),
        _ => Err(err.clone()),
    }
}

/// y(k) = sup over steps of ∫ ((μ − k)⁺)².
pub fn truncation_profile(traj: &Trajectory, k: f64) -> f64 {
    let vol = traj.grid.cell_volume();
    traj.mu
        .iter()
        .map(|m| vol * m.values().iter().map(|&v| if v > k { (v - k) * (v - k) } else { 0.0 }).sum::<f64>())
        .fold(0.0, f64::max)
}

/// max over Q of μ minus max μ₀.
pub fn truncation_cap(traj: &Trajectory) -> f64 {
    let top = traj.mu.iter().map(|m| m.max()).fold(f64::NEG_INFINITY, f64::max);
    (top - traj.mu[0].max()).max(0.0)
}

pub fn audit_linf_truncation(traj: &Trajectory, cfg: &AuditConfig) -> Result<AuditResult> {
    let base = traj.mu[0].max();
    let cap = truncation_cap(traj);
    let levels: Vec<f64> = if cfg.truncation_levels.is_empty() {
        [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|f| base + f * cap).collect()
    } else {
        let mut l = cfg.truncation_levels.clone();
        l.sort_by(f64::total_cmp);
        l
    };
    if let Some(&k) = levels.iter().find(|&&k| k < base) {
        return Err(Error::InvalidParameter(format!("truncation level {k} lies below max mu0 = {base}")));
    }
    let y: Vec<f64> = levels.iter().map(|&k| truncation_profile(traj, k)).collect();
    let monotone = y.windows(2).all(|w| w[1] <= w[0]);
    let top = truncation_profile(traj, base + cap);
    let ok = monotone && top == 0.0;
    Ok(AuditResult {
        name: AuditKind::LinfTruncation.name(),
        verdict: Verdict::from_bool(ok),
        tolerance: cap,
        worst_step: None,
        series: vec![("k", levels), ("y", y)],
        detail: format!("delta_cap = {cap:e}, y(max mu0 + delta_cap) = {top:e}, monotone = {monotone}"),
    })
}

pub fn audit_xi_l6(traj: &Trajectory, spec: &PotentialSpec, cond: &ConductivitySpec, cfg: &AuditConfig) -> Result<AuditResult> {
    require_unsourced(traj)?;
    Ok(judge_xi_l6(&StepSeries::compute(traj, spec, cond)?, cfg))
}

/// Step 0 has no backward difference and is not judged.
fn judge_xi_l6(s: &StepSeries, cfg: &AuditConfig) -> AuditResult {
    let margin: Vec<f64> = s
        .xi_l6
        .iter()
        .zip(&s.h_l6)
        .enumerate()
        .map(|(k, (x, h))| if k == 0 { 0.0 } else { x - h - cfg.xi_rel_tol * (1.0 + h) })
        .collect();
    let first_bad = margin.iter().position(|&m| !(m <= 0.0));
    let detail = match first_bad {
        Some(k) => format!("|xi|_6 = {:e} > |h|_6 = {:e} at step {k}", s.xi_l6[k], s.h_l6[k]),
        None => format!("largest |xi|_6 - |h|_6 = {:e}", s.xi_l6.iter().zip(&s.h_l6).skip(1).map(|(x, h)| x - h).fold(f64::NEG_INFINITY, f64::max)),
    };
    AuditResult {
        name: AuditKind::XiL6.name(),
        verdict: Verdict::from_bool(first_bad.is_none()),
        tolerance: cfg.xi_rel_tol,
        worst_step: first_bad.or_else(|| argmax(&margin[1..]).map(|k| k + 1)),
        series: vec![("xi_L6", s.xi_l6.clone()), ("h_L6", s.h_l6.clone())],
        detail,
    }
}

pub fn audit_grad_k(traj: &Trajectory, spec: &PotentialSpec, cond: &ConductivitySpec, cfg: &AuditConfig) -> Result<AuditResult> {
    Ok(judge_grad_k(traj, &StepSeries::compute(traj, spec, cond)?, cfg))
}

fn judge_grad_k(traj: &Trajectory, s: &StepSeries, cfg: &AuditConfig) -> AuditResult {
    let tol = cfg.c_id * traj.grid.max_spacing();
    let first_bad = s.grad_k_identity.iter().position(|&r| !(r <= tol));
    let detail = match first_bad {
        Some(k) => format!("identity residual {:e} > {tol:e} at step {k}", s.grad_k_identity[k]),
        None => format!(
            "max identity residual {:e}; sup |grad K| = {:e}; sum h|dt mu|^2 = {:e}",
            s.grad_k_identity.iter().copied().fold(0.0, f64::max),
            s.grad_k_l2.iter().copied().fold(0.0, f64::max),
            s.dtmu_l2_cum.last().copied().unwrap_or(0.0)
        ),
    };
    AuditResult {
        name: AuditKind::GradK.name(),
        verdict: Verdict::from_bool(first_bad.is_none()),
        tolerance: tol,
        worst_step: first_bad.or_else(|| argmax(&s.grad_k_identity)),
        series: vec![
            ("gradK_L2", s.grad_k_l2.clone()),
            ("identity_residual", s.grad_k_identity.clone()),
            ("dtmu_L2_cum", s.dtmu_l2_cum.clone()),
        ],
        detail,
    }
}

/// Relative drift max_k |I^k − I⁰| / I⁰ of I = μ√(1 + 2g(ρ)), with its series.
pub fn invariant_drift(traj: &Trajectory, spec: &PotentialSpec) -> Result<(f64, Vec<f64>)> {
    let constant = |v: &[f64]| {
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        hi - lo <= 1e-14 * (1.0 + hi.abs())
    };
    if !constant(traj.mu[0].values()) || !constant(traj.rho[0].values()) {
        return Err(Error::InvalidScenario("homogeneous invariant needs spatially constant initial data".into()));
    }
    let series: Vec<f64> = traj
        .mu
        .iter()
        .zip(&traj.rho)
        .map(|(m, r)| m.values()[0] * libm::sqrt(1.0 + 2.0 * spec.coupling.g(r.values()[0])))
        .collect();
    let i0 = series[0];
    if !(i0 > 0.0) {
        return Err(Error::InvalidScenario("homogeneous invariant needs mu0 > 0".into()));
    }
    let drift = series.iter().map(|i| (i - i0).abs() / i0).fold(0.0, f64::max);
    Ok((drift, series))
}

pub fn audit_homogeneous_invariant(traj: &Trajectory, spec: &PotentialSpec, cfg: &AuditConfig) -> Result<AuditResult> {
    let (drift, series) = invariant_drift(traj, spec)?;
    let tol = cfg.c_drift * traj.h();
    let i0 = series[0];
    let rel: Vec<f64> = series.iter().map(|i| (i - i0).abs() / i0).collect();
    Ok(AuditResult {
        name: AuditKind::HomogeneousInvariant.name(),
        verdict: Verdict::from_bool(drift <= tol),
        tolerance: tol,
        worst_step: argmax(&rel),
        series: vec![("invariant", series), ("relative_drift", rel)],
        detail: format!("drift {drift:e} vs {tol:e}"),
    })
}

/// drift(h) / drift(h/2); close to 2 for a first-order scheme.
pub fn drift_ratio(coarse: &Trajectory, fine: &Trajectory, spec: &PotentialSpec) -> Result<f64> {
    Ok(invariant_drift(coarse, spec)?.0 / invariant_drift(fine, spec)?.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsReport {
    pub series: StepSeries,
    pub audits: Vec<AuditResult>,
}

impl DiagnosticsReport {
    pub fn passed(&self) -> bool {
        self.audits.iter().all(|a| a.verdict.passed())
    }

    pub fn audit(&self, name: &str) -> Option<&AuditResult> {
        self.audits.iter().find(|a| a.name == name)
    }

    pub fn first_failure(&self) -> Option<&AuditResult> {
        self.audits.iter().find(|a| !a.verdict.passed())
    }
}

/// Audits that apply to a trajectory when none are named: everything, with
/// the homogeneous invariant only for spatially constant data with μ₀ > 0.
pub fn default_audits(traj: &Trajectory) -> Vec<AuditKind> {
    let homogeneous = traj.mu[0].max() == traj.mu[0].min() && traj.rho[0].max() == traj.rho[0].min() && traj.mu[0].min() > 0.0;
    AuditKind::ALL.iter().copied().filter(|k| *k != AuditKind::HomogeneousInvariant || homogeneous).collect()
}

pub fn run_audits(
    traj: &Trajectory,
    spec: &PotentialSpec,
    cond: &ConductivitySpec,
    kinds: &[AuditKind],
    cfg: &AuditConfig,
) -> Result<DiagnosticsReport> {
    require_unsourced(traj)?;
    let series = StepSeries::compute(traj, spec, cond)?;
    let mut audits = Vec::with_capacity(kinds.len());
    for kind in kinds {
        audits.push(match kind {
            AuditKind::WeightedEnergy => judge_weighted_energy(&series, cfg),
            AuditKind::PhaseEnergy => judge_phase_energy(traj, spec, &series, cfg),
            AuditKind::Nonnegativity => audit_nonnegativity(traj, cfg),
            AuditKind::LinfTruncation => audit_linf_truncation(traj, cfg)?,
            AuditKind::XiL6 => judge_xi_l6(&series, cfg),
            AuditKind::GradK => judge_grad_k(traj, &series, cfg),
            AuditKind::HomogeneousInvariant => audit_homogeneous_invariant(traj, spec, cfg)?,
        });
    }
    Ok(DiagnosticsReport { series, audits })
}

/// Quantities expected to stay bounded uniformly in τ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelCaps {
    pub tau: f64,
    pub delta_cap: f64,
    pub energy_bound: f64,
    /// sup_k ‖(ρ^k − ρ^{k−1})/h‖₂.
    pub sup_dtrho: f64,
    /// Σ h |(ρ^k − ρ^{k−1})/h|²_{H¹}.
    pub dtrho_h1_sum: f64,
    pub sup_grad_k: f64,
    /// Σ h ‖(μ^k − μ^{k−1})/h‖².
    pub dtmu_sum: f64,
}

impl LevelCaps {
    pub fn compute(traj: &Trajectory, spec: &PotentialSpec, cond: &ConductivitySpec, cfg: &AuditConfig) -> Result<LevelCaps> {
        let s = StepSeries::compute(traj, spec, cond)?;
        Ok(LevelCaps::from_series(traj, spec, &s, cfg))
    }

    pub fn from_series(traj: &Trajectory, spec: &PotentialSpec, s: &StepSeries, cfg: &AuditConfig) -> LevelCaps {
        LevelCaps {
            tau: traj.tau(),
            delta_cap: truncation_cap(traj),
            energy_bound: phase_energy_bound(traj, spec, s, cfg),
            sup_dtrho: s.dtrho_l2.iter().copied().fold(0.0, f64::max),
            dtrho_h1_sum: s.dtrho_h1_cum.last().copied().unwrap_or(0.0),
            sup_grad_k: s.grad_k_l2.iter().copied().fold(0.0, f64::max),
            dtmu_sum: s.dtmu_l2_cum.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityCheck {
    pub quantity: &'static str,
    pub values: Vec<f64>,
    pub tolerance: f64,
    /// Largest relative change between consecutive levels.
    pub worst_change: f64,
    pub passed: bool,
}

/// Consecutive levels differ by at most `tolerance` relative to the finer one.
pub fn stability(quantity: &'static str, values: Vec<f64>, tolerance: f64) -> StabilityCheck {
    let worst_change = values
        .windows(2)
        .map(|w| {
            let scale = w[1].abs().max(w[0].abs());
            if scale < 1e-300 {
                0.0
            } else {
                (w[1] - w[0]).abs() / w[1].abs().max(1e-300)
            }
        })
        .fold(0.0, f64::max);
    StabilityCheck { quantity, values, tolerance, worst_change, passed: worst_change <= tolerance }
}

pub fn cap_stability(levels: &[LevelCaps], cfg: &AuditConfig) -> Vec<StabilityCheck> {
    let col = |f: fn(&LevelCaps) -> f64| levels.iter().map(f).collect::<Vec<_>>();
    vec![
        stability("delta_cap", col(|c| c.delta_cap), cfg.cap_stability),
        stability("energy_bound", col(|c| c.energy_bound), cfg.cap_stability),
        stability("sup_dtrho_L2", col(|c| c.sup_dtrho), cfg.monitor_stability),
        stability("dtrho_H1_sum", col(|c| c.dtrho_h1_sum), cfg.monitor_stability),
        stability("sup_gradK_L2", col(|c| c.sup_grad_k), cfg.monitor_stability),
        stability("dtmu_L2_sum", col(|c| c.dtmu_sum), cfg.monitor_stability),
    ]
}
