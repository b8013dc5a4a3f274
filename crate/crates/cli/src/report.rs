//! Run reports and deterministic CSV emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use resetsim_core::simulate::{Terminal, Trajectory};
use resetsim_core::{Error, Result};

/// Outcome of one command invocation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: String,
    /// Human-readable result lines, printed in order.
    pub lines: Vec<String>,
    /// Files written under the output directory.
    pub outputs: Vec<PathBuf>,
    pub duration_ms: u128,
    pub exit_code: i32,
}

impl RunReport {
    pub fn new(command: &str, hash: u64) -> Self {
        RunReport {
            command: command.to_string(),
            config_hash: format!("{hash:016x}"),
            lines: Vec::new(),
            outputs: Vec::new(),
            duration_ms: 0,
            exit_code: 0,
        }
    }

    pub fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    pub fn print(&self) {
        for l in &self.lines {
            println!("{l}");
        }
    }
}

/// 17 significant digits; bit-stable across platforms.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Precondition(format!("cannot write {}: {e}", path.display()))
}

/// Writes CSV rows with '\n' endings; all fields pre-formatted strings.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    w.write_record(header)
        .map_err(|e| Error::Precondition(format!("csv write failed: {e}")))?;
    for r in rows {
        w.write_record(r)
            .map_err(|e| Error::Precondition(format!("csv write failed: {e}")))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Trajectory CSV: t, x_1..x_n, segment_id, is_post_jump.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, dim: usize) -> Result<()> {
    let mut header: Vec<String> = vec!["t".into()];
    for i in 1..=dim {
        header.push(format!("x_{i}"));
    }
    header.push("segment_id".into());
    header.push("is_post_jump".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();

    let rows: Vec<Vec<String>> = traj
        .samples
        .iter()
        .map(|s| {
            let mut row = Vec::with_capacity(dim + 3);
            row.push(fmt_f64(s.t));
            for v in s.x.iter() {
                row.push(fmt_f64(*v));
            }
            row.push(s.segment_id.to_string());
            row.push(if s.is_post_jump { "1" } else { "0" }.to_string());
            row
        })
        .collect();
    write_csv(path, &header_refs, &rows)
}

/// Instants CSV: k, t_k, kind (reset|crossing). Crossings that coincide with
/// a reset instant are reported once, as resets.
pub fn write_instants_csv(path: &Path, traj: &Trajectory, time_tol: f64) -> Result<()> {
    let mut events: Vec<(f64, &str)> = traj
        .reset_instants
        .iter()
        .map(|t| (*t, "reset"))
        .collect();
    for t in &traj.crossing_instants {
        let coincides = traj
            .reset_instants
            .iter()
            .any(|tr| (tr - t).abs() <= time_tol.max(1e-9));
        if !coincides {
            events.push((*t, "crossing"));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rows: Vec<Vec<String>> = events
        .iter()
        .enumerate()
        .map(|(k, (t, kind))| vec![(k + 1).to_string(), fmt_f64(*t), kind.to_string()])
        .collect();
    write_csv(path, &["k", "t_k", "kind"], &rows)
}

/// Writes a serializable document as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, doc: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    let mut text = serde_json::to_string_pretty(doc)
        .map_err(|e| Error::Precondition(format!("json serialization failed: {e}")))?;
    text.push('\n');
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Short display of a terminal status.
pub fn terminal_line(t: &Terminal) -> String {
    match t {
        Terminal::Completed => "terminal: completed".into(),
        Terminal::EventBudgetExhausted => "terminal: event budget exhausted".into(),
        Terminal::Deadlock { t, state, reason } => {
            let coords: Vec<String> = state.iter().map(|v| format!("{v:.6}")).collect();
            format!(
                "terminal: deadlock at t = {t:.6} from state ({}) ({reason})",
                coords.join(", ")
            )
        }
    }
}
