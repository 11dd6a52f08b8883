//! CSV outputs. Every row goes out in a single `write_all` of a complete
//! line, so a file cut short by a crash still parses up to its last row.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use surgirl_core::learner::{EvalSummary, MetricsRow};

use crate::error::{HarnessError, Result};

/// Header of the metrics stream for a policy with `knowledge` external policies.
pub fn metrics_header(knowledge: usize) -> String {
    let mut cols = vec![
        "step".to_string(),
        "episode_return".into(),
        "success_rate".into(),
        "actor_loss".into(),
        "critic_loss".into(),
        "alpha".into(),
        "beta".into(),
        "mean_Hw".into(),
        "w_in".into(),
    ];
    cols.extend((1..=knowledge).map(|j| format!("w_g{j}")));
    cols.join(",")
}

pub fn metrics_line(row: &MetricsRow) -> String {
    let mut fields = vec![
        row.step.to_string(),
        row.episode_return.to_string(),
        row.success_rate.to_string(),
        row.actor_loss.to_string(),
        row.critic_loss.to_string(),
        row.alpha.to_string(),
        row.beta.to_string(),
        row.mean_hw.to_string(),
    ];
    fields.extend(row.weights.iter().map(|w| w.to_string()));
    fields.join(",")
}

/// Append-only metrics file.
#[derive(Debug)]
pub struct MetricsWriter {
    path: PathBuf,
    file: File,
}

impl MetricsWriter {
    /// Starts a fresh file with its header.
    pub fn create(path: &Path, knowledge: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            file,
        };
        w.write_line(&metrics_header(knowledge))?;
        Ok(w)
    }

    /// Continues an existing file after `step`. Rows logged past `step` by an
    /// interrupted run are dropped first, since the resumed run rewrites them.
    pub fn resume(path: &Path, knowledge: usize, step: u64) -> Result<Self> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(HarnessError::io(path, e)),
        };
        let mut kept = metrics_header(knowledge);
        kept.push('\n');
        for line in text.lines().skip(1) {
            let logged: Option<u64> = line.split(',').next().and_then(|s| s.parse().ok());
            match logged {
                Some(s) if s <= step => {
                    kept.push_str(line);
                    kept.push('\n');
                }
                _ => {}
            }
        }
        let tmp = path.with_extension("csv.tmp");
        fs::write(&tmp, kept).map_err(|e| HarnessError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| HarnessError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        self.write_line(&metrics_line(row))
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        let mut buf = String::with_capacity(line.len() + 1);
        buf.push_str(line);
        buf.push('\n');
        self.file
            .write_all(buf.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| HarnessError::io(&self.path, e))
    }
}

/// Parses a metrics file back into rows.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let bad = |n: usize| HarnessError::Malformed {
        path: path.to_path_buf(),
        reason: format!("metrics line {n}"),
    };
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 9 {
            return Err(bad(n + 1));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(n + 1));
        rows.push(MetricsRow {
            step: f[0].parse().map_err(|_| bad(n + 1))?,
            episode_return: num(1)?,
            success_rate: num(2)?,
            actor_loss: num(3)?,
            critic_loss: num(4)?,
            alpha: num(5)?,
            beta: num(6)?,
            mean_hw: num(7)?,
            weights: (8..f.len()).map(num).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

/// One row per evaluation episode.
pub fn write_episodes(path: &Path, summary: &EvalSummary) -> Result<()> {
    let mut out = String::from("episode,episode_return,success,length\n");
    for (i, e) in summary.episodes.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{}\n",
            e.episode_return, e.success as u8, e.length
        ));
    }
    fs::write(path, out).map_err(|e| HarnessError::io(path, e))
}

/// `(episode, step, state..., action..., reward)` of every recorded step.
pub fn write_trajectory(path: &Path, summary: &EvalSummary) -> Result<()> {
    let mut out = String::new();
    if let Some(first) = summary.trajectory.first() {
        let mut cols = vec!["episode".to_string(), "step".into()];
        cols.extend((0..first.state.len()).map(|i| format!("s{i}")));
        cols.extend((0..first.action.len()).map(|i| format!("a{i}")));
        cols.push("reward".into());
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    for t in &summary.trajectory {
        let mut f = vec![t.episode.to_string(), t.step.to_string()];
        f.extend(t.state.iter().map(|v| v.to_string()));
        f.extend(t.action.iter().map(|v| v.to_string()));
        f.push(t.reward.to_string());
        out.push_str(&f.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| HarnessError::io(path, e))
}
