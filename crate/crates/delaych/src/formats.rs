//! On-disk formats: Field CSV snapshots, the JSON snapshot index, the JSON
//! audit report and the plot-ready `series.csv`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use delaych_core::estimates::DiagnosticsReport;
use delaych_core::{Field, Grid};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{CliError, Result};

/// Writes `bytes` to a temporary file next to `path`, then renames it over.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644)).map_err(|e| CliError::io(path, e))?;
    }
    tmp.write_all(bytes).and_then(|_| tmp.as_file().sync_all()).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn grid_header(grid: &Grid) -> String {
    let mut parts: Vec<String> = vec![grid.dim().to_string()];
    parts.extend(grid.cells().iter().map(|n| n.to_string()));
    parts.extend(grid.lengths().iter().map(|l| format!("{l:?}")));
    format!("# grid: {}", parts.join(","))
}

/// Field CSV: a `# grid: dim,nx[,ny],Lx[,Ly]` header, then one value per line
/// in row-major order, printed so that parsing returns the same bits.
pub fn field_to_csv(field: &Field) -> String {
    let mut out = grid_header(field.grid());
    out.push('\n');
    for v in field.values() {
        writeln!(out, "{v:?}").unwrap();
    }
    out
}

pub fn parse_field_csv(text: &str, file: &Path) -> Result<Field> {
    let bad = |msg: String| CliError::format(file, msg);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let spec = header
        .strip_prefix("# grid:")
        .ok_or_else(|| bad(format!("expected `# grid:` header, found `{header}`")))?;
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let dim: usize = parts.first().and_then(|d| d.parse().ok()).ok_or_else(|| bad("bad grid dimension".into()))?;
    if !(1..=2).contains(&dim) || parts.len() != 1 + 2 * dim {
        return Err(bad(format!("malformed grid header `{header}`")));
    }
    let cells: Vec<usize> = parts[1..=dim]
        .iter()
        .map(|s| s.parse().map_err(|_| bad(format!("bad cell count `{s}`"))))
        .collect::<Result<_>>()?;
    let lengths: Vec<f64> = parts[1 + dim..]
        .iter()
        .map(|s| s.parse().map_err(|_| bad(format!("bad length `{s}`"))))
        .collect::<Result<_>>()?;
    let grid = Grid::new(&cells, &lengths).map_err(|e| bad(e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| bad(format!("line {}: `{line}` is not a number", i + 2)))?;
        if !v.is_finite() {
            return Err(bad(format!("line {}: non-finite value `{line}`", i + 2)));
        }
        values.push(v);
    }
    if values.len() != grid.len() {
        return Err(bad(format!("expected {} values, found {}", grid.len(), values.len())));
    }
    Field::new(grid, values).map_err(|e| bad(e.to_string()))
}

pub fn read_field(path: &Path) -> Result<Field> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_field_csv(&text, path)
}

pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    write_atomic(path, field_to_csv(field).as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotEntry {
    pub step: usize,
    pub time: f64,
    pub mu: String,
    pub rho: String,
    pub xi: String,
}

/// `index.json`: which steps were stored and where.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotIndex {
    pub grid: IndexGrid,
    pub stride: usize,
    pub h: f64,
    pub tau: f64,
    /// Number of time steps; levels run from 0 to `steps`.
    pub steps: usize,
    pub snapshots: Vec<SnapshotEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexGrid {
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
}

/// Steps kept with a given stride: every `stride`-th one plus the last.
pub fn stored_steps(steps: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=steps).step_by(stride.max(1)).collect();
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

impl SnapshotIndex {
    pub fn read(path: &Path) -> Result<SnapshotIndex> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let index: SnapshotIndex = serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
        index.check(path)?;
        Ok(index)
    }

    fn check(&self, path: &Path) -> Result<()> {
        let steps: Vec<usize> = self.snapshots.iter().map(|s| s.step).collect();
        if self.stride == 0 || steps != stored_steps(self.steps, self.stride) {
            return Err(CliError::format(path, "snapshot list does not match steps and stride"));
        }
        Ok(())
    }

    pub fn grid(&self, path: &Path) -> Result<Grid> {
        Grid::new(&self.grid.cells, &self.grid.lengths).map_err(|e| CliError::format(path, e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("index serializes") + "\n"
    }
}

pub fn unix_timestamp() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// The audit report as JSON. `timestamp` is the only field that depends on
/// anything but the trajectory.
pub fn report_json(report: &DiagnosticsReport, timestamp: u64) -> Value {
    let audits: Vec<Value> = report
        .audits
        .iter()
        .map(|a| {
            let series: Map<String, Value> = a.series.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
            json!({
                "name": a.name,
                "verdict": a.verdict.name(),
                "tolerance": a.tolerance,
                "worst_step": a.worst_step,
                "detail": a.detail,
                "series": series,
            })
        })
        .collect();
    json!({ "timestamp": timestamp, "passed": report.passed(), "audits": audits })
}

pub fn render_json(value: &Value) -> String {
    serde_json::to_string_pretty(value).expect("json value serializes") + "\n"
}

pub const SERIES_COLUMNS: [&str; 15] = [
    "step",
    "time",
    "W",
    "D",
    "E",
    "min_mu",
    "max_mu",
    "dtrho_L2",
    "dtrho_H1_cum",
    "xi_L6",
    "h_L6",
    "gradK_L2",
    "gradK_identity",
    "dtmu_L2_cum",
    "delayed_mu_sq",
];

/// One row per time level, every step (independent of the snapshot stride).
///
/// W: Σ(1+2g(ρ))μ², D: cumulative h·∫κ|∇μ|², E: phase energy, dtrho_L2:
/// ‖Δρ/h‖₂, xi_L6 and h_L6: ‖ξ‖₆ and ‖h‖₆ of the ρ-step splitting, gradK_L2:
/// ‖∇K‖₂, gradK_identity: chain-rule residual of ∇K, *_cum: running sums.
pub fn series_csv(report: &DiagnosticsReport) -> String {
    let s = &report.series;
    let cols: [&[f64]; 13] = [
        &s.weighted_energy,
        &s.dissipation,
        &s.phase_energy,
        &s.min_mu,
        &s.max_mu,
        &s.dtrho_l2,
        &s.dtrho_h1_cum,
        &s.xi_l6,
        &s.h_l6,
        &s.grad_k_l2,
        &s.grad_k_identity,
        &s.dtmu_l2_cum,
        &s.delayed_mu_sq,
    ];
    let mut out = SERIES_COLUMNS.join(",");
    out.push('\n');
    for (k, t) in s.time.iter().enumerate() {
        write!(out, "{k},{t:?}").unwrap();
        for c in cols {
            match c.get(k) {
                Some(v) => write!(out, ",{v:?}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// A plain CSV table with a header row.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_csv_round_trips_bits() {
        let grid = Grid::rect(3, 2, 1.5, 0.1).unwrap();
        let vals = vec![0.1, 1.0 / 3.0, -2.5e-300, 1e22, 0.0, std::f64::consts::PI];
        let f = Field::new(grid, vals.clone()).unwrap();
        let text = field_to_csv(&f);
        assert!(text.starts_with("# grid: 2,3,2,1.5,0.1\n"));
        let back = parse_field_csv(&text, Path::new("x.csv")).unwrap();
        assert_eq!(back.grid(), &grid);
        for (a, b) in back.values().iter().zip(&vals) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn field_csv_rejects_bad_input() {
        let p = Path::new("snap.csv");
        for text in ["", "1\n2\n", "# grid: 1,2,1.0\n1\nNaN\n", "# grid: 1,2,1.0\n1\n", "# grid: 3,1,1,1,1,1,1\n", "# grid: 1,2,1.0\n1\nfoo\n"] {
            let err = parse_field_csv(text, p).unwrap_err();
            assert_eq!(err.code(), "FormatError", "{text:?}");
            assert!(err.to_string().contains("snap.csv"));
        }
    }

    #[test]
    fn stored_steps_keep_the_last() {
        assert_eq!(stored_steps(16, 8), vec![0, 8, 16]);
        assert_eq!(stored_steps(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(stored_steps(3, 1), vec![0, 1, 2, 3]);
        assert_eq!(stored_steps(0, 8), vec![0]);
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
