//! Run configuration: a TOML document with the sections `grid`, `physics`,
//! `delay`, `initial`, `audits`, `output` and optionally `manufactured`.
//! Every section and key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use delaych_core::estimates::{AuditConfig, AuditKind};
use delaych_core::nonlin::{ConductivitySpec, Coupling, PotentialSpec, ScalarGraph, SmoothPart};
use delaych_core::scheme::{DelayConfig, InertiaWeight, PicardGuess, Profile, DEFAULT_MU0, DEFAULT_RHO0};
use delaych_core::Grid;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result, Violation};

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub grid: RawGrid,
    #[serde(default)]
    pub physics: RawPhysics,
    #[serde(default)]
    pub delay: RawDelay,
    #[serde(default)]
    pub initial: RawInitial,
    #[serde(default)]
    pub audits: RawAudits,
    #[serde(default)]
    pub output: RawOutput,
    pub manufactured: Option<RawManufactured>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub dim: Option<usize>,
    pub cells: Option<Vec<usize>>,
    pub lengths: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawPhysics {
    pub graph: Option<String>,
    pub graph_param: Option<f64>,
    pub f2: Option<String>,
    pub f2_param: Option<f64>,
    pub coupling: Option<String>,
    pub coupling_param: Option<f64>,
    pub conductivity: Option<String>,
    pub conductivity_value: Option<f64>,
    pub kappa_bounds: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawDelay {
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    #[serde(rename = "N")]
    pub n: Option<i64>,
    #[serde(rename = "M")]
    pub m: Option<i64>,
    pub eps: Option<f64>,
    pub exact_beta: Option<bool>,
    pub inertia_weight: Option<String>,
    pub newton_tol: Option<f64>,
    pub newton_max: Option<usize>,
    pub newton_damping: Option<f64>,
    pub picard_tol: Option<f64>,
    pub picard_max: Option<usize>,
    pub picard_guess: Option<String>,
    pub cg_tol: Option<f64>,
    pub max_halvings: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitial {
    pub mu: Option<RawProfile>,
    pub rho: Option<RawProfile>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawProfile {
    /// `constant` or `cosine`; omitted when `file` is given.
    pub profile: Option<String>,
    pub value: Option<f64>,
    pub mean: Option<f64>,
    pub amp: Option<f64>,
    pub modes: Option<[u32; 2]>,
    /// Field CSV, relative to the config file.
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawAudits {
    pub names: Option<Vec<String>>,
    pub energy_rel_tol: Option<f64>,
    pub nonneg_tol: Option<f64>,
    pub phase_cg: Option<f64>,
    pub truncation_levels: Option<Vec<f64>>,
    pub xi_rel_tol: Option<f64>,
    pub c_id: Option<f64>,
    pub c_drift: Option<f64>,
    pub cap_stability: Option<f64>,
    pub monitor_stability: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
    pub stride: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawManufactured {
    /// `spatial` (study doubles the cells) or `temporal` (study doubles M).
    pub sweep: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialSpec {
    Profile(Profile),
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    Spatial,
    Temporal,
}

/// A validated configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub grid: Grid,
    pub spec: PotentialSpec,
    pub cond: ConductivitySpec,
    pub delay: DelayConfig,
    pub mu0: InitialSpec,
    pub rho0: InitialSpec,
    /// `None`: the audits that apply to the run.
    pub audits: Option<Vec<AuditKind>>,
    pub audit_config: AuditConfig,
    pub output_dir: PathBuf,
    pub stride: usize,
    pub manufactured: Option<Sweep>,
    /// Directory relative paths in the document are resolved against.
    pub base_dir: PathBuf,
    /// The document as given, stored next to the results.
    pub source: String,
}

pub const DEFAULT_OUTPUT_DIR: &str = "delaych-out";
pub const DEFAULT_STRIDE: usize = 8;

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut config = parse_config(&text)?;
    config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(config)
}

/// Parses and validates a document, reporting every violated constraint.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let mut v = Validator::default();
    let grid = v.grid(&raw.grid);
    let spec = v.physics(&raw.physics);
    let cond = v.conductivity(&raw.physics);
    let delay = v.delay(&raw.delay);
    let mu0 = v.profile("initial.mu", raw.initial.mu.as_ref(), DEFAULT_MU0);
    let rho0 = v.profile("initial.rho", raw.initial.rho.as_ref(), DEFAULT_RHO0);
    let (audits, audit_config) = v.audits(&raw.audits);
    let manufactured = raw.manufactured.as_ref().and_then(|m| match m.sweep.as_deref().unwrap_or("spatial") {
        "spatial" => Some(Sweep::Spatial),
        "temporal" => Some(Sweep::Temporal),
        other => {
            v.fail("manufactured.sweep", format!("unknown sweep `{other}` (expected spatial or temporal)"));
            None
        }
    });
    if raw.manufactured.is_some() && audits.as_ref().is_some_and(|a| !a.is_empty()) {
        v.fail("audits.names", "audits do not apply to manufactured (sourced) runs");
    }
    let stride = raw.output.stride.unwrap_or(DEFAULT_STRIDE);
    if stride == 0 {
        v.fail("output.stride", "must be at least 1");
    }
    if !v.violations.is_empty() {
        return Err(CliError::Validation(v.violations));
    }
    Ok(RunConfig {
        grid: grid.expect("validated"),
        spec: spec.expect("validated"),
        cond: cond.expect("validated"),
        delay,
        mu0: mu0.expect("validated"),
        rho0: rho0.expect("validated"),
        audits,
        audit_config,
        output_dir: raw.output.dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        stride,
        manufactured,
        base_dir: PathBuf::new(),
        source: text.to_string(),
    })
}

#[derive(Default)]
struct Validator {
    violations: Vec<Violation>,
}

impl Validator {
    fn fail(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(Violation { path: path.into(), message: message.into() });
    }

    fn positive(&mut self, path: &str, value: Option<f64>) {
        if let Some(x) = value {
            if !(x > 0.0 && x.is_finite()) {
                self.fail(path, format!("must be positive and finite, got {x}"));
            }
        }
    }

    fn grid(&mut self, raw: &RawGrid) -> Option<Grid> {
        let dim = raw.dim.unwrap_or_else(|| raw.cells.as_ref().map_or(2, Vec::len));
        if !(1..=2).contains(&dim) {
            self.fail("grid.dim", format!("must be 1 or 2, got {dim}"));
            return None;
        }
        let cells = raw.cells.clone().unwrap_or_else(|| vec![64; dim]);
        let lengths = raw.lengths.clone().unwrap_or_else(|| vec![1.0; dim]);
        let mut ok = true;
        if cells.len() != dim {
            self.fail("grid.cells", format!("needs {dim} entries, got {}", cells.len()));
            ok = false;
        } else if cells.contains(&0) {
            self.fail("grid.cells", "every axis needs at least one cell");
            ok = false;
        }
        if lengths.len() != dim {
            self.fail("grid.lengths", format!("needs {dim} entries, got {}", lengths.len()));
            ok = false;
        } else if lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            self.fail("grid.lengths", "lengths must be positive and finite");
            ok = false;
        }
        if !ok {
            return None;
        }
        match Grid::new(&cells, &lengths) {
            Ok(g) => Some(g),
            Err(e) => {
                self.fail("grid", e.to_string());
                None
            }
        }
    }

    fn physics(&mut self, raw: &RawPhysics) -> Option<PotentialSpec> {
        let graph_name = raw.graph.as_deref().unwrap_or("log");
        let graph = ScalarGraph::from_name(graph_name, raw.graph_param.unwrap_or(1.0));
        if graph.is_none() {
            self.fail("physics.graph", format!("unknown graph `{graph_name}` (expected log, obstacle, poly or zero)"));
        }
        if matches!(graph_name, "log" | "poly") {
            self.positive("physics.graph_param", raw.graph_param);
        }
        let f2_name = raw.f2.as_deref().unwrap_or("double_well");
        let a = raw.f2_param.unwrap_or(3.0);
        if !a.is_finite() {
            self.fail("physics.f2_param", "must be finite");
        }
        let smooth = match f2_name {
            "double_well" => Some(SmoothPart::DoubleWell { a }),
            "quadratic" => Some(SmoothPart::Quadratic { a }),
            "zero" => Some(SmoothPart::Zero),
            other => {
                self.fail("physics.f2", format!("unknown f2 `{other}` (expected double_well, quadratic or zero)"));
                None
            }
        };
        let coupling_name = raw.coupling.as_deref().unwrap_or("smooth_id");
        let coupling = Coupling::from_name(coupling_name, raw.coupling_param.unwrap_or(0.1));
        if coupling.is_none() {
            self.fail("physics.coupling", format!("unknown coupling `{coupling_name}` (expected smooth_id or const)"));
        }
        let (graph, smooth, coupling) = (graph?, smooth?, coupling?);
        match PotentialSpec::new(graph, smooth, coupling) {
            Ok(spec) => Some(spec),
            Err(e) => {
                self.fail("physics", e.to_string());
                None
            }
        }
    }

    fn conductivity(&mut self, raw: &RawPhysics) -> Option<ConductivitySpec> {
        let name = raw.conductivity.as_deref().unwrap_or("demo_exp_cos");
        self.positive("physics.conductivity_value", raw.conductivity_value);
        let mut cond = match ConductivitySpec::from_name(name, raw.conductivity_value.unwrap_or(1.0)) {
            Some(c) => c,
            None => {
                self.fail("physics.conductivity", format!("unknown conductivity `{name}` (expected const or demo_exp_cos)"));
                return None;
            }
        };
        if let Some([lo, hi]) = raw.kappa_bounds {
            cond.kmin = lo;
            cond.kmax = hi;
        }
        match cond.validate() {
            Ok(()) => Some(cond),
            Err(e) => {
                self.fail("physics.kappa_bounds", e.to_string());
                None
            }
        }
    }

    fn count(&mut self, path: &str, value: Option<i64>, default: usize) -> usize {
        match value {
            None => default,
            Some(n) if n >= 1 => n as usize,
            Some(n) => {
                self.fail(path, format!("must be at least 1, got {n}"));
                1
            }
        }
    }

    fn delay(&mut self, raw: &RawDelay) -> DelayConfig {
        self.positive("delay.T", raw.t_final);
        let n = self.count("delay.N", raw.n, 16);
        let m = self.count("delay.M", raw.m, 4);
        let mut c = DelayConfig::new(raw.t_final.unwrap_or(0.25), n, m);
        self.positive("delay.eps", raw.eps);
        c.eps = raw.eps;
        c.exact_beta = raw.exact_beta.unwrap_or(false);
        match raw.inertia_weight.as_deref().unwrap_or("previous") {
            "previous" => c.inertia = InertiaWeight::Previous,
            "current" => c.inertia = InertiaWeight::Current,
            other => self.fail("delay.inertia_weight", format!("unknown weight `{other}` (expected previous or current)")),
        }
        for (path, value) in [("delay.newton_tol", raw.newton_tol), ("delay.picard_tol", raw.picard_tol), ("delay.cg_tol", raw.cg_tol)] {
            self.positive(path, value);
        }
        c.newton.tol = raw.newton_tol.unwrap_or(c.newton.tol);
        c.picard.tol = raw.picard_tol.unwrap_or(c.picard.tol);
        c.cg.tol = raw.cg_tol.unwrap_or(c.cg.tol);
        if let Some(d) = raw.newton_damping {
            if !(d > 0.0 && d <= 1.0) {
                self.fail("delay.newton_damping", format!("must lie in (0, 1], got {d}"));
            }
            c.newton.damping = d;
        }
        for (path, value) in [("delay.newton_max", raw.newton_max), ("delay.picard_max", raw.picard_max)] {
            if value == Some(0) {
                self.fail(path, "must be at least 1");
            }
        }
        c.newton.max_iter = raw.newton_max.unwrap_or(c.newton.max_iter);
        c.picard.max_iter = raw.picard_max.unwrap_or(c.picard.max_iter);
        match raw.picard_guess.as_deref().unwrap_or("previous") {
            "previous" => c.picard.guess = PicardGuess::Previous,
            "zero" => c.picard.guess = PicardGuess::Zero,
            other => self.fail("delay.picard_guess", format!("unknown guess `{other}` (expected previous or zero)")),
        }
        c.max_halvings = raw.max_halvings.unwrap_or(c.max_halvings);
        c
    }

    fn profile(&mut self, path: &str, raw: Option<&RawProfile>, default: Profile) -> Option<InitialSpec> {
        let Some(raw) = raw else {
            return Some(InitialSpec::Profile(default));
        };
        if let Some(file) = &raw.file {
            if raw.profile.is_some() || raw.value.is_some() || raw.mean.is_some() || raw.amp.is_some() || raw.modes.is_some() {
                self.fail(path, "`file` excludes profile parameters");
            }
            return Some(InitialSpec::File(file.clone()));
        }
        let finite = |v: Option<f64>| v.is_none_or(f64::is_finite);
        if !(finite(raw.value) && finite(raw.mean) && finite(raw.amp)) {
            self.fail(path, "profile parameters must be finite");
            return None;
        }
        match raw.profile.as_deref() {
            Some("constant") => match raw.value {
                Some(v) => Some(InitialSpec::Profile(Profile::Constant(v))),
                None => {
                    self.fail(&format!("{path}.value"), "constant profile needs `value`");
                    None
                }
            },
            Some("cosine") => Some(InitialSpec::Profile(Profile::Cosine {
                mean: raw.mean.unwrap_or(0.0),
                amp: raw.amp.unwrap_or(0.0),
                modes: raw.modes.unwrap_or([1, 1]),
            })),
            Some(other) => {
                self.fail(&format!("{path}.profile"), format!("unknown profile `{other}` (expected constant or cosine)"));
                None
            }
            None => {
                self.fail(path, "needs `profile` or `file`");
                None
            }
        }
    }

    fn audits(&mut self, raw: &RawAudits) -> (Option<Vec<AuditKind>>, AuditConfig) {
        let kinds = raw.names.as_ref().map(|names| {
            let mut out = Vec::new();
            for name in names {
                match AuditKind::from_name(name) {
                    Some(k) => out.push(k),
                    None => self.fail("audits.names", format!("unknown audit `{name}`")),
                }
            }
            out
        });
        let mut cfg = AuditConfig::default();
        for (path, value, slot) in [
            ("audits.energy_rel_tol", raw.energy_rel_tol, &mut cfg.energy_rel_tol),
            ("audits.nonneg_tol", raw.nonneg_tol, &mut cfg.nonneg_tol),
            ("audits.xi_rel_tol", raw.xi_rel_tol, &mut cfg.xi_rel_tol),
            ("audits.c_id", raw.c_id, &mut cfg.c_id),
            ("audits.c_drift", raw.c_drift, &mut cfg.c_drift),
            ("audits.cap_stability", raw.cap_stability, &mut cfg.cap_stability),
            ("audits.monitor_stability", raw.monitor_stability, &mut cfg.monitor_stability),
        ] {
            match value {
                Some(x) if x >= 0.0 && x.is_finite() => *slot = x,
                Some(x) => self.violations.push(Violation { path: path.into(), message: format!("must be nonnegative and finite, got {x}") }),
                None => {}
            }
        }
        self.positive("audits.phase_cg", raw.phase_cg);
        cfg.phase_cg = raw.phase_cg;
        if let Some(levels) = &raw.truncation_levels {
            cfg.truncation_levels = levels.clone();
        }
        (kinds, cfg)
    }
}

impl RunConfig {
    /// The output directory, honoring the `DELAYCH_OUTPUT_DIR` override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }
}

pub const OUTPUT_DIR_ENV: &str = "DELAYCH_OUTPUT_DIR";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_materializes_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.grid.cells(), &[64, 64]);
        assert_eq!(c.grid.lengths(), &[1.0, 1.0]);
        assert_eq!((c.delay.n_delays, c.delay.m_inner), (16, 4));
        assert_eq!(c.delay.eps(), c.delay.tau());
        assert_eq!(c.delay.t_final, 0.25);
        assert_eq!(c.stride, 8);
        assert_eq!(c.cond.name(), "demo_exp_cos");
        assert_eq!(c.spec.graph.name(), "log");
        assert_eq!(c.mu0, InitialSpec::Profile(DEFAULT_MU0));
        assert!(c.audits.is_none());
        assert!(c.manufactured.is_none());
    }

    #[test]
    fn zero_delays_names_the_key() {
        let err = parse_config("[delay]\nN = 0\n").unwrap_err();
        match err {
            CliError::Validation(v) => assert!(v.iter().any(|x| x.path == "delay.N"), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn violations_are_aggregated() {
        let text = "[delay]\nN = 0\nM = -2\neps = -1.0\n[physics]\ngraph = \"nope\"\n[output]\nstride = 0\n";
        let CliError::Validation(v) = parse_config(text).unwrap_err() else { panic!() };
        let paths: Vec<&str> = v.iter().map(|x| x.path.as_str()).collect();
        for p in ["delay.N", "delay.M", "delay.eps", "physics.graph", "output.stride"] {
            assert!(paths.contains(&p), "{paths:?}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(parse_config("[delay]\nNN = 3\n"), Err(CliError::Parse(_))));
        assert!(matches!(parse_config("[nonsense]\n"), Err(CliError::Parse(_))));
        assert!(matches!(parse_config("[delay\n"), Err(CliError::Parse(_))));
    }

    #[test]
    fn log_graph_round_trips_to_the_registry() {
        let c = parse_config("[physics]\ngraph = \"log\"\ngraph_param = 1.0\n").unwrap();
        assert!(c.spec.graph.f1(0.5).abs() < 1e-15);
        let expected = 0.9 * 0.9f64.ln() + 0.1 * 0.1f64.ln() + 2f64.ln();
        assert!((c.spec.graph.f1(0.9) - expected).abs() < 1e-12);
        assert!((c.spec.graph.resolvent(1.0, 0.5).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(c.spec.graph.f1(-0.1), f64::INFINITY);
    }

    #[test]
    fn profiles_files_and_audits() {
        let text = r#"
[grid]
cells = [8]
lengths = [2.0]
[initial]
mu = { profile = "constant", value = 0.0 }
rho = { file = "rho0.csv" }
[audits]
names = ["nonnegativity", "xi_l6"]
c_id = 2.0
[manufactured]
sweep = "temporal"
"#;
        let err = parse_config(text).unwrap_err();
        assert!(matches!(err, CliError::Validation(ref v) if v[0].path == "audits.names"));
        let c = parse_config(&text.replace("names = [\"nonnegativity\", \"xi_l6\"]\n", "")).unwrap();
        assert_eq!(c.grid.dim(), 1);
        assert_eq!(c.mu0, InitialSpec::Profile(Profile::Constant(0.0)));
        assert_eq!(c.rho0, InitialSpec::File("rho0.csv".into()));
        assert_eq!(c.audit_config.c_id, 2.0);
        assert_eq!(c.manufactured, Some(Sweep::Temporal));
        let bad = parse_config("[audits]\nnames = [\"bogus\"]\n").unwrap_err();
        assert!(matches!(bad, CliError::Validation(ref v) if v[0].path == "audits.names"));
    }
}
