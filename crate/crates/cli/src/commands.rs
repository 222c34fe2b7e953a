use std::fs;
use std::path::Path;

use dams_core::data::{generate_synthetic, load_csv, LabeledDataset, SyntheticSpec};
use dams_core::eval::{evaluate, generate_eval_pairs, MetricReport};
use dams_core::numerics::load_model;

use crate::error::{CliError, Result};
use crate::run::EPOCHS_FILE;

pub use crate::run::cmd_train;
pub use crate::sweep::cmd_sweep;

/// `gen-data`: writes a synthetic Gaussian-cluster CSV.
pub fn cmd_gen_data(spec: &SyntheticSpec, seed: u64, out: &Path) -> Result<LabeledDataset> {
    let ds = generate_synthetic(spec, seed)?;
    ds.write_csv(out)?;
    Ok(ds)
}

/// `eval`: embeds a dataset with a saved model and computes the metric report.
pub fn cmd_eval(model_path: &Path, data_path: &Path, seed: u64, ks: &[usize]) -> Result<MetricReport> {
    let model = load_model(model_path)?;
    let ds = load_csv(data_path)?;
    if model.input_dim() != ds.dim() {
        return Err(CliError::Config(format!(
            "dimension mismatch: model {} expects {} input features, dataset {} has {}",
            model_path.display(),
            model.input_dim(),
            data_path.display(),
            ds.dim()
        )));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k >= ds.len()) {
        return Err(CliError::Config(format!(
            "Recall@{k} is undefined for {} samples (need 1 <= k < n)",
            ds.len()
        )));
    }
    let pairs = generate_eval_pairs(&ds, seed)?;
    Ok(evaluate(&model, &ds, &pairs, ks)?)
}

pub const REPORT_CURVES: [(&str, &str); 3] = [
    ("margin_curve.csv", "margin"),
    ("easy_proportion_curve.csv", "easy_proportion"),
    ("median_margin_curve.csv", "median_effective_margin"),
];

/// `report`: splits `epochs.csv` into two-column `epoch,value` curve files.
/// Values are copied verbatim.
pub fn cmd_report(run_dir: &Path, out_dir: &Path) -> Result<usize> {
    let epochs_path = run_dir.join(EPOCHS_FILE);
    let text = fs::read_to_string(&epochs_path).map_err(|e| CliError::io(&epochs_path, e))?;
    let malformed = |message: String| CliError::Malformed {
        path: epochs_path.clone(),
        message,
    };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| malformed(format!("missing column `{name}`")))
    };
    let epoch_col = column("epoch")?;
    let value_cols = REPORT_CURVES
        .iter()
        .map(|(_, name)| column(name))
        .collect::<Result<Vec<_>>>()?;

    let mut curves: Vec<String> = REPORT_CURVES
        .iter()
        .map(|(_, name)| format!("epoch,{name}\n"))
        .collect();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        for (curve, &col) in curves.iter_mut().zip(&value_cols) {
            curve.push_str(&format!("{},{}\n", &record[epoch_col], &record[col]));
        }
        rows += 1;
    }

    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    for ((file, _), curve) in REPORT_CURVES.iter().zip(&curves) {
        let path = out_dir.join(file);
        fs::write(&path, curve).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(rows)
}
