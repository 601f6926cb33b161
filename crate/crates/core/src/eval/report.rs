use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalResult;
use crate::error::{LensError, Result};

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub model: String,
    pub condition_id: u8,
    pub auc_mean: f64,
    pub auc_stderr: f64,
    pub n_reps: usize,
    pub seed: u64,
}

impl From<&EvalResult> for ResultRow {
    fn from(r: &EvalResult) -> Self {
        ResultRow {
            dataset: r.dataset.clone(),
            model: r.model.clone(),
            condition_id: r.condition_id,
            auc_mean: r.auc_mean,
            auc_stderr: r.auc_stderr,
            n_reps: r.n_reps,
            seed: r.seed,
        }
    }
}

const CSV_HEADER: [&str; 7] = [
    "dataset",
    "model",
    "condition_id",
    "auc_mean",
    "auc_stderr",
    "n_reps",
    "seed",
];

pub fn write_results_csv(results: &[EvalResult], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| LensError::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    w.write_record(CSV_HEADER)?;
    for r in results {
        w.serialize(ResultRow::from(r))?;
    }
    w.flush().map_err(|e| LensError::io(path, e))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let file = File::open(path).map_err(|e| LensError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(LensError::Data(format!(
            "{} has an unexpected header",
            path.display()
        )));
    }
    r.deserialize().map(|row| Ok(row?)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub dataset: String,
    pub model: String,
    pub auc_mean: Vec<Option<f64>>,
    pub auc_stderr: Vec<Option<f64>>,
}

/// One panel of conditions sharing a query pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPanel {
    pub query: String,
    pub conditions: Vec<u8>,
    pub series: Vec<PlotSeries>,
}

/// Groups results into a seen-query panel (conditions 1-4) and an
/// unseen-query panel (5-8), one series per (dataset, model).
pub fn plot_data(results: &[EvalResult]) -> Vec<PlotPanel> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in results {
        let key = (r.dataset.clone(), r.model.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    [("seen", 1u8..=4), ("unseen", 5u8..=8)]
        .into_iter()
        .map(|(query, ids)| {
            let conditions: Vec<u8> = ids.collect();
            let series = keys
                .iter()
                .map(|(dataset, model)| {
                    let find = |c: u8| {
                        results.iter().find(|r| {
                            &r.dataset == dataset && &r.model == model && r.condition_id == c
                        })
                    };
                    PlotSeries {
                        dataset: dataset.clone(),
                        model: model.clone(),
                        auc_mean: conditions
                            .iter()
                            .map(|&c| find(c).map(|r| r.auc_mean))
                            .collect(),
                        auc_stderr: conditions
                            .iter()
                            .map(|&c| find(c).map(|r| r.auc_stderr))
                            .collect(),
                    }
                })
                .collect();
            PlotPanel {
                query: query.to_string(),
                conditions,
                series,
            }
        })
        .collect()
}

/// Writes `results.csv` and `plot_data.json` into `dir`.
pub fn report(results: &[EvalResult], dir: &Path) -> Result<()> {
    write_results_csv(results, &dir.join("results.csv"))?;
    let path = dir.join("plot_data.json");
    let mut file = File::create(&path).map_err(|e| LensError::io(&path, e))?;
    serde_json::to_writer_pretty(&mut file, &plot_data(results))?;
    file.write_all(b"\n").map_err(|e| LensError::io(&path, e))
}
