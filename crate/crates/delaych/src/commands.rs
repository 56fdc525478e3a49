use std::path::{Path, PathBuf};

use delaych_core::estimates::{
    cap_stability, default_audits, nonnegativity_refusal, run_audits, AuditKind, DiagnosticsReport, LevelCaps, StabilityCheck,
    StepSeries,
};
use delaych_core::scheme::{pairwise_difference, solve, DelayConfig, InitialData, ManufacturedSolution, SourceTerms, Trajectory};
use delaych_core::{Error as CoreError, Field, Grid};
use serde_json::Value;

use crate::config::{parse_config, InitialSpec, RunConfig, Sweep};
use crate::error::{CliError, Result};
use crate::formats::{
    create_dir, read_field, render_json, report_json, series_csv, stored_steps, table_csv, unix_timestamp, write_atomic, write_field,
    IndexGrid, SnapshotEntry, SnapshotIndex,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const INDEX_FILE: &str = "index.json";
pub const REPORT_FILE: &str = "report.json";
pub const SERIES_FILE: &str = "series.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const STUDY_FILE: &str = "study.csv";
pub const STABILITY_FILE: &str = "stability.csv";
const SNAPSHOT_DIR: &str = "snapshots";

/// Everything `solve` needs, resolved from a config.
struct Problem {
    config: RunConfig,
    delay: DelayConfig,
    data: InitialData,
    manufactured: Option<ManufacturedSolution>,
}

impl Problem {
    fn new(config: &RunConfig, grid: Grid, delay: DelayConfig) -> Result<Problem> {
        let mut problem = Problem::with_data(config, delay, None);
        problem.data = match &problem.manufactured {
            Some(ms) => ms.initial_data(&grid)?,
            None => {
                let mu0 = initial_field(config, &config.mu0, grid, "initial.mu")?;
                let rho0 = initial_field(config, &config.rho0, grid, "initial.rho")?;
                InitialData::new(mu0, rho0, &config.spec.graph)?
            }
        };
        Ok(problem)
    }

    /// A problem whose initial data is set by the caller (placeholder if `None`).
    fn with_data(config: &RunConfig, delay: DelayConfig, data: Option<InitialData>) -> Problem {
        let manufactured = config
            .manufactured
            .map(|_| ManufacturedSolution::new(config.spec, config.cond, delay.beta_mode(), delay.tau()));
        let data = data.unwrap_or_else(|| {
            let zero = Field::zeros(config.grid);
            InitialData { mu0: zero.clone(), rho0: zero.clone(), xi0: zero }
        });
        Problem { config: config.clone(), delay, data, manufactured }
    }

    fn from_config(config: &RunConfig) -> Result<Problem> {
        Problem::new(config, config.grid, config.delay)
    }

    fn run(&self) -> Result<Trajectory, CoreError> {
        let sources = self.manufactured.as_ref().map(|m| m as &dyn SourceTerms);
        solve(&self.delay, &self.data, &self.config.spec, &self.config.cond, sources)
    }

    fn audit_kinds(&self, traj: &Trajectory) -> Vec<AuditKind> {
        if self.manufactured.is_some() {
            return Vec::new();
        }
        self.config.audits.clone().unwrap_or_else(|| default_audits(traj))
    }

    fn report(&self, traj: &Trajectory, kinds: &[AuditKind]) -> Result<DiagnosticsReport> {
        if self.manufactured.is_some() {
            return Ok(DiagnosticsReport { series: StepSeries::default(), audits: Vec::new() });
        }
        Ok(run_audits(traj, &self.config.spec, &self.config.cond, kinds, &self.config.audit_config)?)
    }

    /// Per level: (‖μ − μ*‖₂, ‖ρ − ρ*‖₂) against the manufactured solution.
    fn errors(&self, traj: &Trajectory) -> Vec<(f64, f64)> {
        let Some(ms) = &self.manufactured else { return Vec::new() };
        let grid = traj.grid;
        let l2 = |a: &Field, b: &Field| {
            let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
            (grid.cell_volume() * s).sqrt()
        };
        (0..traj.levels())
            .map(|k| {
                let t = traj.times[k];
                (l2(&traj.mu[k], &ms.exact_mu(&grid, t)), l2(&traj.rho[k], &ms.exact_rho(&grid, t)))
            })
            .collect()
    }
}

fn initial_field(config: &RunConfig, spec: &InitialSpec, grid: Grid, key: &str) -> Result<Field> {
    match spec {
        InitialSpec::Profile(p) => Ok(p.field(&grid)),
        InitialSpec::File(file) => {
            let path = config.base_dir.join(file);
            let field = read_field(&path)?;
            if field.grid() != &grid {
                return Err(CliError::invalid(key, format!("{} is not on the configured grid", path.display())));
            }
            Ok(field)
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub dir: PathBuf,
    pub report: Value,
    pub passed: bool,
}

/// Solves, then writes the stored config, snapshots, index, report and series.
pub fn cmd_solve(config: &RunConfig) -> Result<SolveOutcome> {
    let problem = Problem::from_config(config)?;
    let dir = config.resolved_output_dir();
    create_dir(&dir.join(SNAPSHOT_DIR))?;
    write_atomic(&dir.join(CONFIG_FILE), config.source.as_bytes())?;

    let traj = match problem.run() {
        Ok(t) => t,
        Err(e) => {
            if let Ok(refusal) = nonnegativity_refusal(&e, &config.audit_config) {
                let report = DiagnosticsReport { series: StepSeries::default(), audits: vec![refusal] };
                write_atomic(&dir.join(REPORT_FILE), render_json(&report_json(&report, unix_timestamp())).as_bytes())?;
            }
            return Err(e.into());
        }
    };
    let kinds = problem.audit_kinds(&traj);
    let report = problem.report(&traj, &kinds)?;

    let index = write_snapshots(&dir, &traj, config.stride)?;
    write_atomic(&dir.join(INDEX_FILE), index.to_json().as_bytes())?;
    if problem.manufactured.is_some() {
        write_atomic(&dir.join(ERRORS_FILE), errors_csv(&traj, &problem.errors(&traj)).as_bytes())?;
    } else {
        write_atomic(&dir.join(SERIES_FILE), series_csv(&report).as_bytes())?;
    }
    let json = report_json(&report, unix_timestamp());
    write_atomic(&dir.join(REPORT_FILE), render_json(&json).as_bytes())?;
    if !report.passed() {
        return Err(failed_audits(&report));
    }
    Ok(SolveOutcome { dir, report: json, passed: true })
}

fn failed_audits(report: &DiagnosticsReport) -> CliError {
    CliError::Audit(report.audits.iter().filter(|a| !a.verdict.passed()).map(|a| a.name.to_string()).collect())
}

fn snapshot_name(kind: &str, step: usize) -> String {
    format!("{SNAPSHOT_DIR}/{kind}_{step:06}.csv")
}

fn write_snapshots(dir: &Path, traj: &Trajectory, stride: usize) -> Result<SnapshotIndex> {
    let steps = traj.levels() - 1;
    let mut snapshots = Vec::new();
    for k in stored_steps(steps, stride) {
        let entry = SnapshotEntry {
            step: k,
            time: traj.times[k],
            mu: snapshot_name("mu", k),
            rho: snapshot_name("rho", k),
            xi: snapshot_name("xi", k),
        };
        write_field(&dir.join(&entry.mu), &traj.mu[k])?;
        write_field(&dir.join(&entry.rho), &traj.rho[k])?;
        write_field(&dir.join(&entry.xi), &traj.xi[k])?;
        snapshots.push(entry);
    }
    Ok(SnapshotIndex {
        grid: IndexGrid { cells: traj.grid.cells().to_vec(), lengths: traj.grid.lengths().to_vec() },
        stride,
        h: traj.h(),
        tau: traj.tau(),
        steps,
        snapshots,
    })
}

fn errors_csv(traj: &Trajectory, errors: &[(f64, f64)]) -> String {
    let rows: Vec<Vec<String>> = errors
        .iter()
        .enumerate()
        .map(|(k, (m, r))| vec![k.to_string(), format!("{:?}", traj.times[k]), format!("{m:?}"), format!("{r:?}")])
        .collect();
    table_csv(&["step", "time", "mu_err_L2", "rho_err_L2"], &rows)
}

#[derive(Clone, Debug)]
pub struct VerifyOutcome {
    pub report: Value,
    pub passed: bool,
}

/// Recomputes the audits of a solve output directory.
///
/// With stride 1 the audits run on the stored fields. Otherwise the run is
/// repeated from the stored config and step-0 snapshots, every stored snapshot
/// must match it bit for bit, and the audits run on the repeated trajectory.
/// Nothing is reported unless every file reads cleanly.
pub fn cmd_verify(dir: &Path, audits: Option<&[String]>) -> Result<VerifyOutcome> {
    let index_path = dir.join(INDEX_FILE);
    let index = SnapshotIndex::read(&index_path)?;
    let config_path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&config_path).map_err(|e| CliError::io(&config_path, e))?;
    let mut config = parse_config(&text)?;
    config.base_dir = dir.to_path_buf();

    let grid = index.grid(&index_path)?;
    if grid != config.grid || index.steps != config.delay.steps() {
        return Err(CliError::format(&index_path, "index does not match the stored config"));
    }
    let mut stored: Vec<(usize, [(PathBuf, Field); 3])> = Vec::with_capacity(index.snapshots.len());
    for entry in &index.snapshots {
        let read = |name: &str| -> Result<(PathBuf, Field)> {
            let path = dir.join(name);
            let field = read_field(&path)?;
            if field.grid() != &grid {
                return Err(CliError::format(&path, "snapshot grid does not match the index"));
            }
            Ok((path, field))
        };
        stored.push((entry.step, [read(&entry.mu)?, read(&entry.rho)?, read(&entry.xi)?]));
    }

    let kinds = match audits {
        Some(names) => {
            let mut kinds = Vec::new();
            for n in names {
                kinds.push(AuditKind::from_name(n).ok_or_else(|| CliError::invalid("--audits", format!("unknown audit `{n}`")))?);
            }
            Some(kinds)
        }
        None => None,
    };

    let [(ref path0, ref mu0), (_, ref rho0), (_, ref xi0)] = stored[0].1;
    let data = InitialData { mu0: mu0.clone(), rho0: rho0.clone(), xi0: xi0.clone() };
    data.validate(&config.spec.graph).map_err(|e| CliError::format(path0, e.to_string()))?;
    let problem = Problem::with_data(&config, config.delay, Some(data));

    let traj = if index.stride == 1 {
        trajectory_from_disk(&config, &stored)
    } else {
        let traj = problem.run()?;
        for (step, files) in &stored {
            let fresh = [&traj.mu[*step], &traj.rho[*step], &traj.xi[*step]];
            for ((path, field), other) in files.iter().zip(fresh) {
                if !bitwise_equal(field, other) {
                    return Err(CliError::format(path, "snapshot differs from a re-run of the stored config"));
                }
            }
        }
        traj
    };
    let kinds = kinds.unwrap_or_else(|| problem.audit_kinds(&traj));
    let report = problem.report(&traj, &kinds)?;
    Ok(VerifyOutcome { report: report_json(&report, unix_timestamp()), passed: report.passed() })
}

fn bitwise_equal(a: &Field, b: &Field) -> bool {
    a.grid() == b.grid() && a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn trajectory_from_disk(config: &RunConfig, stored: &[(usize, [(PathBuf, Field); 3])]) -> Trajectory {
    let h = config.delay.h();
    let take = |i: usize| stored.iter().map(|(_, f)| f[i].1.clone()).collect::<Vec<_>>();
    Trajectory {
        grid: config.grid,
        config: config.delay,
        times: stored.iter().map(|(k, _)| if *k == 0 { 0.0 } else { *k as f64 * h }).collect(),
        mu: take(0),
        rho: take(1),
        xi: take(2),
        records: vec![Default::default(); stored.len() - 1],
        sourced: config.manufactured.is_some(),
    }
}

#[derive(Clone, Debug)]
pub struct StudyOutcome {
    pub dir: PathBuf,
    pub rows: Vec<Vec<String>>,
    pub passed: bool,
}

/// Runs `levels` refinements concurrently and tabulates them in `study.csv`.
///
/// Plain configs double N (τ and h halve together); differences between
/// consecutive levels must decrease and the per-level caps must be stable.
/// Manufactured configs refine in space or time and report errors against
/// the exact solution with observed orders; errors must decrease.
pub fn cmd_study(config: &RunConfig, levels: usize) -> Result<StudyOutcome> {
    if levels < 2 {
        return Err(CliError::invalid("--levels", "a study needs at least 2 levels"));
    }
    let dir = config.resolved_output_dir();
    create_dir(&dir)?;
    write_atomic(&dir.join(CONFIG_FILE), config.source.as_bytes())?;
    match config.manufactured {
        Some(sweep) => manufactured_study(config, levels, sweep, &dir),
        None => refinement_study(config, levels, &dir),
    }
}

fn run_levels(problems: Vec<Problem>) -> Result<Vec<(Problem, Trajectory)>> {
    let results: Vec<Result<Trajectory, CoreError>> = std::thread::scope(|s| {
        let handles: Vec<_> = problems.iter().map(|p| s.spawn(|| p.run())).collect();
        handles.into_iter().map(|h| h.join().expect("study level panicked")).collect()
    });
    problems
        .into_iter()
        .zip(results)
        .enumerate()
        .map(|(l, (p, r))| r.map(|t| (p, t)).map_err(|e| CliError::Study(format!("level {l}: {e}"))))
        .collect()
}

fn sci(x: f64) -> String {
    format!("{x:e}")
}

fn refinement_study(config: &RunConfig, levels: usize, dir: &Path) -> Result<StudyOutcome> {
    let problems = (0..levels)
        .map(|l| Problem::new(config, config.grid, config.delay.with_delays(config.delay.n_delays << l)))
        .collect::<Result<Vec<_>>>()?;
    let runs = run_levels(problems)?;
    let pairs = runs
        .windows(2)
        .map(|w| pairwise_difference(&w[0].1, &w[1].1))
        .collect::<Result<Vec<_>, CoreError>>()?;
    let caps = runs
        .iter()
        .map(|(p, t)| LevelCaps::compute(t, &p.config.spec, &p.config.cond, &config.audit_config))
        .collect::<Result<Vec<_>, CoreError>>()?;
    let checks = cap_stability(&caps, &config.audit_config);

    let mut rows = Vec::with_capacity(levels);
    for (l, ((p, _), c)) in runs.iter().zip(&caps).enumerate() {
        let (mu, rho) = match l.checked_sub(1).map(|i| &pairs[i]) {
            Some(d) => (sci(d.mu_l2q), sci(d.rho_linfq)),
            None => (String::new(), String::new()),
        };
        rows.push(vec![
            l.to_string(),
            p.delay.n_delays.to_string(),
            sci(p.delay.tau()),
            sci(p.delay.h()),
            mu,
            rho,
            sci(c.delta_cap),
            sci(c.energy_bound),
            sci(c.sup_dtrho),
            sci(c.dtrho_h1_sum),
            sci(c.sup_grad_k),
            sci(c.dtmu_sum),
        ]);
    }
    let header = [
        "level",
        "N",
        "tau",
        "h",
        "mu_L2Q_diff",
        "rho_LinfQ_diff",
        "delta_cap",
        "energy_bound",
        "sup_dtrho_L2",
        "dtrho_H1_sum",
        "sup_gradK_L2",
        "dtmu_L2_sum",
    ];
    write_atomic(&dir.join(STUDY_FILE), table_csv(&header, &rows).as_bytes())?;
    write_atomic(&dir.join(STABILITY_FILE), stability_csv(&checks).as_bytes())?;

    let floor = config.delay.newton.tol.max(config.delay.picard.tol);
    let mut problems = Vec::new();
    for (name, col) in [("mu_L2Q_diff", pairs.iter().map(|p| p.mu_l2q).collect::<Vec<_>>()), ("rho_LinfQ_diff", pairs.iter().map(|p| p.rho_linfq).collect())] {
        if let Some(i) = first_non_decrease(&col, floor) {
            problems.push(format!(
                "{name} between levels ({}, {}) is {:e}, not below {:e} for levels ({}, {})",
                i,
                i + 1,
                col[i],
                col[i - 1],
                i - 1,
                i
            ));
        }
    }
    for c in checks.iter().filter(|c| !c.passed) {
        let i = worst_pair(&c.values);
        problems.push(format!(
            "{} changes by {:.1}% between levels ({}, {}) (limit {:.0}%)",
            c.quantity,
            100.0 * c.worst_change,
            i,
            i + 1,
            100.0 * c.tolerance
        ));
    }
    finish_study(dir, rows, problems)
}

/// First pair index whose difference is not below its predecessor; values at
/// or below `floor` count as converged.
pub fn first_non_decrease(col: &[f64], floor: f64) -> Option<usize> {
    (1..col.len()).find(|&i| !(col[i] <= floor || col[i] < col[i - 1]))
}

fn worst_pair(values: &[f64]) -> usize {
    let change = |i: usize| (values[i + 1] - values[i]).abs() / values[i + 1].abs().max(1e-300);
    (0..values.len().saturating_sub(1)).max_by(|&a, &b| change(a).total_cmp(&change(b))).unwrap_or(0)
}

fn stability_csv(checks: &[StabilityCheck]) -> String {
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| vec![c.quantity.to_string(), sci(c.worst_change), sci(c.tolerance), if c.passed { "pass" } else { "fail" }.to_string()])
        .collect();
    table_csv(&["quantity", "worst_relative_change", "tolerance", "verdict"], &rows)
}

fn finish_study(dir: &Path, rows: Vec<Vec<String>>, problems: Vec<String>) -> Result<StudyOutcome> {
    if problems.is_empty() {
        Ok(StudyOutcome { dir: dir.to_path_buf(), rows, passed: true })
    } else {
        Err(CliError::Study(problems.join("; ")))
    }
}

fn manufactured_study(config: &RunConfig, levels: usize, sweep: Sweep, dir: &Path) -> Result<StudyOutcome> {
    let mut problems = Vec::with_capacity(levels);
    for l in 0..levels {
        let (grid, delay) = match sweep {
            Sweep::Spatial => {
                let cells: Vec<usize> = config.grid.cells().iter().map(|n| n << l).collect();
                (Grid::new(&cells, config.grid.lengths())?, config.delay)
            }
            Sweep::Temporal => {
                let mut d = config.delay;
                d.m_inner <<= l;
                (config.grid, d)
            }
        };
        problems.push(Problem::new(config, grid, delay)?);
    }
    let runs = run_levels(problems)?;
    let errors: Vec<(f64, f64)> = runs
        .iter()
        .map(|(p, t)| p.errors(t).into_iter().fold((0.0, 0.0), |a: (f64, f64), e| (a.0.max(e.0), a.1.max(e.1))))
        .collect();
    let combined: Vec<f64> = errors.iter().map(|(m, r)| (m * m + r * r).sqrt()).collect();

    let mut rows = Vec::with_capacity(levels);
    for (l, (p, t)) in runs.iter().enumerate() {
        let order = |e: &dyn Fn(usize) -> f64| if l == 0 { String::new() } else { format!("{:.4}", (e(l - 1) / e(l)).log2()) };
        rows.push(vec![
            l.to_string(),
            t.grid.cells().iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x"),
            p.delay.m_inner.to_string(),
            sci(p.delay.h()),
            sci(errors[l].0),
            sci(errors[l].1),
            sci(combined[l]),
            order(&|i| errors[i].0),
            order(&|i| errors[i].1),
            order(&|i| combined[i]),
        ]);
    }
    let order_col = match sweep {
        Sweep::Spatial => "spatial_order",
        Sweep::Temporal => "temporal_order",
    };
    let header = ["level", "cells", "M", "h", "mu_err", "rho_err", "err", "mu_order", "rho_order", order_col];
    write_atomic(&dir.join(STUDY_FILE), table_csv(&header, &rows).as_bytes())?;

    let mut problems = Vec::new();
    if let Some(i) = first_non_decrease(&combined, 0.0) {
        problems.push(format!("error at level {i} ({:e}) is not below level {} ({:e})", combined[i], i - 1, combined[i - 1]));
    }
    finish_study(dir, rows, problems)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_check_with_floor() {
        assert_eq!(first_non_decrease(&[3.0, 2.0, 1.0], 0.0), None);
        assert_eq!(first_non_decrease(&[3.0, 3.0, 1.0], 0.0), Some(1));
        assert_eq!(first_non_decrease(&[1.0, 2.0], 0.0), Some(1));
        assert_eq!(first_non_decrease(&[0.0, 0.0, 0.0], 1e-10), None);
        assert_eq!(first_non_decrease(&[1e-12, 5e-11], 1e-10), None);
        assert_eq!(first_non_decrease(&[1.0], 0.0), None);
    }

    #[test]
    fn worst_pair_finds_the_largest_relative_jump() {
        assert_eq!(worst_pair(&[1.0, 1.3, 1.35, 1.36]), 0);
        assert_eq!(worst_pair(&[1.0, 1.01, 2.0]), 1);
    }
}
