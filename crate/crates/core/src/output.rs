//! CSV/JSON renderings and atomic file output.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::drift::{DriftCurve, FixedPoint};
use crate::hypergeom::PmfTable;
use crate::ssa::Trajectory;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Renders a double with 17 significant digits. Negative zero prints as
/// zero.
pub fn fmt_float(x: f64) -> String {
    format!("{:.16e}", x + 0.0)
}

/// Run parameters echoed in the first line of every output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub n_agents: usize,
    pub group_size: usize,
    pub rules: String,
    pub epsilon: f64,
    pub seed: u64,
}

impl Provenance {
    pub fn header(&self) -> String {
        format!(
            "# swarmdec {VERSION} agents={} group={} rules={} epsilon={} seed={}\n",
            self.n_agents, self.group_size, self.rules, self.epsilon, self.seed
        )
    }
}

pub fn drift_csv(curve: &DriftCurve, prov: &Provenance) -> String {
    let mut out = prov.header();
    out.push_str("z,dzdt\n");
    for &(z, d) in &curve.points {
        let _ = writeln!(out, "{},{}", fmt_float(z), fmt_float(d));
    }
    out
}

/// One row per lattice point: `z`, the analytic `p0..pG` and, when given,
/// the sampled frequencies `f0..fG`.
pub fn probs_csv(
    rows: &[(f64, PmfTable, Option<Vec<f64>>)],
    group_size: usize,
    prov: &Provenance,
) -> String {
    let mut out = prov.header();
    out.push('z');
    for k in 0..=group_size {
        let _ = write!(out, ",p{k}");
    }
    if rows.first().is_some_and(|r| r.2.is_some()) {
        for k in 0..=group_size {
            let _ = write!(out, ",f{k}");
        }
    }
    out.push('\n');
    for (z, table, freq) in rows {
        out.push_str(&fmt_float(*z));
        for p in table.probabilities() {
            out.push(',');
            out.push_str(&fmt_float(*p));
        }
        for f in freq.iter().flatten() {
            out.push(',');
            out.push_str(&fmt_float(*f));
        }
        out.push('\n');
    }
    out
}

pub fn trajectory_csv(traj: &Trajectory, prov: &Provenance) -> String {
    let n = traj.initial_state.n_agents() as f64;
    let mut out = prov.header();
    let _ = writeln!(out, "# initial count_x1={}", traj.initial_state.count_x1());
    out.push_str("time,event,k,count_x1,z\n");
    for e in &traj.events {
        let k = e
            .event
            .composition()
            .map(|k| k.to_string())
            .unwrap_or_default();
        let z = 2.0 * e.count_x1_after as f64 / n - 1.0;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_float(e.time),
            e.event.label(),
            k,
            e.count_x1_after,
            fmt_float(z)
        );
    }
    out
}

/// Provenance comment line followed by a JSON array of fixed points.
pub fn fixed_points_json(points: &[FixedPoint], prov: &Provenance) -> String {
    let mut out = prov.header();
    out.push_str(&serde_json::to_string_pretty(points).expect("fixed points serialize"));
    out.push('\n');
    out
}

/// Minimal gnuplot script for a CSV written by this crate.
pub fn plot_script(data: &Path, columns: usize, title: &str) -> String {
    let data = data.display();
    let mut out = format!(
        "set datafile separator ','\nset key autotitle columnhead\nset title '{title}'\nset xlabel 'z'\nset xrange [-1:1]\n"
    );
    let plots: Vec<String> = (2..=columns)
        .map(|c| format!("'{data}' using 1:{c} with lines"))
        .collect();
    let _ = writeln!(out, "plot {}", plots.join(", \\\n     "));
    out
}

/// Path with `suffix` replacing the extension, e.g. `a.csv` -> `a.empirical.csv`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
