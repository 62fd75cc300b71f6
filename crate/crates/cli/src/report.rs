use std::io::Write;
use std::path::{Path, PathBuf};

use asymkl::runtime::LogRow;

use crate::{Failure, Outcome};

/// A run directory stands for the `progress.csv` inside it.
fn progress_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join("progress.csv")
    } else {
        input.to_path_buf()
    }
}

fn read_rows(path: &Path) -> Result<Vec<LogRow>, Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .collect::<Result<Vec<LogRow>, _>>()
        .map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// One summary line per input: row count, the last row's step counts and
/// statistics, the best median return and optionally the first step at a
/// return threshold.
pub fn summarize<W: Write>(inputs: &[PathBuf], threshold: Option<f64>, mut out: W) -> Outcome {
    let io = |e: std::io::Error| Failure::Other(e.to_string());
    write!(
        out,
        "run,rows,learner_step,env_steps,final_return_mean,final_return_median,best_return_median,final_mean_kl,final_default_entropy"
    )
    .map_err(io)?;
    if threshold.is_some() {
        write!(out, ",steps_to_threshold").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for input in inputs {
        let path = progress_path(input);
        let rows = read_rows(&path)?;
        let last = rows.last();
        let best = rows.iter().map(|r| r.eval_return_median).reduce(f64::max);
        write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            input.display(),
            rows.len(),
            last.map_or(String::new(), |r| r.learner_step.to_string()),
            last.map_or(String::new(), |r| r.env_steps.to_string()),
            cell(last.map(|r| r.eval_return_mean)),
            cell(last.map(|r| r.eval_return_median)),
            cell(best),
            cell(last.map(|r| r.mean_kl)),
            cell(last.map(|r| r.default_entropy)),
        )
        .map_err(io)?;
        if let Some(t) = threshold {
            let hit = rows.iter().find(|r| r.eval_return_median >= t).map(|r| r.learner_step);
            write!(out, ",{}", hit.map_or(String::new(), |s| s.to_string())).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    Ok(())
}
