use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{run_scenario, KRecord, LabError, RunRecord, Scenario};
use crate::chain_engine::{write_class_csv, BoxGrid, ChainClass};
use crate::models::PresetLibrary;

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub k: u32,
    pub epsilon: f64,
    pub n: usize,
    pub tau: f64,
    pub start_distance: f64,
    pub end_distance: f64,
    pub bound: f64,
    pub margin: f64,
}

impl From<&KRecord> for StudyRow {
    fn from(r: &KRecord) -> Self {
        Self {
            k: r.k,
            epsilon: r.epsilon,
            n: r.steps,
            tau: r.tau,
            start_distance: r.start_distance,
            end_distance: r.end_distance,
            bound: r.bound,
            margin: r.margin(),
        }
    }
}

/// Table rows of a record, sorted by `k`.
pub fn study_rows(record: &RunRecord) -> Vec<StudyRow> {
    let mut rows: Vec<StudyRow> = record.results.iter().map(StudyRow::from).collect();
    rows.sort_by_key(|r| r.k);
    rows
}

/// Run a scenario with at least three values of `k` and tabulate it.
pub fn convergence_study(library: &PresetLibrary, scenario: &Scenario) -> Result<(RunRecord, Vec<StudyRow>), LabError> {
    let mut ks = scenario.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    if ks.len() < 3 {
        return Err(LabError::TooFewK(ks.len()));
    }
    let record = run_scenario(library, scenario)?;
    let rows = study_rows(&record);
    Ok((record, rows))
}

/// CSV columns `k,epsilon,n,tau,start_distance,end_distance,bound,margin`.
pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<(), LabError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub tau: PathBuf,
    pub distances: PathBuf,
    pub classes: Option<PathBuf>,
}

fn write_points(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<(), LabError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "# {header}")?;
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        writeln!(f, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Write plain point files into `dir`:
///
/// * `tau.dat`: `log10 k` and `log10 |τ_k|`
/// * `distances.dat`: `log10 k`, `log10 d(x, p_k)`, `log10 d(y, f^n(p_k))`
/// * `classes.csv` (when a cover is given): one row per box, see
///   [`crate::chain_engine::write_class_csv`]
///
/// `log10 0` is written as `-inf`.
pub fn emit_plot_data(
    record: &RunRecord,
    dir: &Path,
    cover: Option<(&BoxGrid, &[ChainClass])>,
) -> Result<PlotFiles, LabError> {
    fs::create_dir_all(dir)?;
    let rows = study_rows(record);
    let tau = dir.join("tau.dat");
    let distances = dir.join("distances.dat");
    write_points(
        &tau,
        "log10_k log10_tau",
        &rows.iter().map(|r| vec![(r.k as f64).log10(), r.tau.abs().log10()]).collect::<Vec<_>>(),
    )?;
    write_points(
        &distances,
        "log10_k log10_start_distance log10_end_distance",
        &rows
            .iter()
            .map(|r| vec![(r.k as f64).log10(), r.start_distance.log10(), r.end_distance.log10()])
            .collect::<Vec<_>>(),
    )?;
    let classes = match cover {
        Some((grid, classes)) => {
            let path = dir.join("classes.csv");
            write_class_csv(grid, classes, fs::File::create(&path)?)?;
            Some(path)
        }
        None => None,
    };
    Ok(PlotFiles {
        tau,
        distances,
        classes,
    })
}

/// Parse a point file: `#` lines are comments, other lines are
/// whitespace-separated floats.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>, LabError> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|e| LabError::Scenario {
                    id: path.display().to_string(),
                    reason: format!("bad number `{t}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(row);
    }
    Ok(out)
}
