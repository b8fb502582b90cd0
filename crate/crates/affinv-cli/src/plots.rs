//! Gnuplot-ready data files derived from experiment records.
//!
//! Each supported record type maps to whitespace-separated column files
//! with a `#` header line, written into the requested directory:
//!
//! * sweep records → `defect_trend.dat` (log p vs median max defect),
//! * certificate records → `interval_mass.dat` (N vs μ(I)) and
//!   `certificate_q.dat` (per-prime dilation diagnostics),
//! * coupling sweep records → `coupling_ratio.dat` (n vs worst ratio).
//!
//! Records without plottable content produce no files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::canon::format_float;

/// Write the plot files for one record. Returns the file names written.
pub fn emit(record: &Value, dir: &Path) -> std::io::Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let command = record.get("command").and_then(Value::as_str).unwrap_or("");
    let outputs = record.get("outputs").cloned().unwrap_or(Value::Null);
    let mut written = Vec::new();
    match command {
        "sweep" => {
            let mut by_p: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            if let Some(runs) = outputs.get("runs").and_then(Value::as_array) {
                for run in runs {
                    let (Some(p), Some(defect)) = (
                        run.get("p").and_then(Value::as_u64),
                        run.get("max_defect").and_then(Value::as_f64),
                    ) else {
                        continue;
                    };
                    by_p.entry(p).or_default().push(defect);
                }
            }
            let mut text = String::from("# log_p median_max_defect\n");
            for (p, mut defects) in by_p {
                defects.sort_by(f64::total_cmp);
                let median = median_of_sorted(&defects);
                text.push_str(&format!(
                    "{} {}\n",
                    format_float((p as f64).ln()),
                    format_float(median)
                ));
            }
            written.push(write_file(dir, "defect_trend.dat", &text)?);
        }
        "certificate" => {
            let mut mass = String::from("# n_radius mass_in_interval\n");
            if let (Some(n), Some(m)) = (
                outputs.get("n_radius").and_then(Value::as_u64),
                outputs.get("mass_in_interval").and_then(Value::as_f64),
            ) {
                mass.push_str(&format!("{n} {}\n", format_float(m)));
            }
            written.push(write_file(dir, "interval_mass.dat", &mass)?);

            let mut rows = String::from("# q tv_mu tv_lambda e_valuation\n");
            if let Some(entries) = outputs.get("rows").and_then(Value::as_array) {
                for row in entries {
                    let (Some(q), Some(tm), Some(tl), Some(ev)) = (
                        row.get("q").and_then(Value::as_u64),
                        row.get("tv_mu").and_then(Value::as_f64),
                        row.get("tv_lambda").and_then(Value::as_f64),
                        row.get("e_valuation").and_then(Value::as_f64),
                    ) else {
                        continue;
                    };
                    rows.push_str(&format!(
                        "{q} {} {} {}\n",
                        format_float(tm),
                        format_float(tl),
                        format_float(ev)
                    ));
                }
            }
            written.push(write_file(dir, "certificate_q.dat", &rows)?);
        }
        "coupling" => {
            let Some(sweep) = outputs.get("sweep") else {
                return Ok(written);
            };
            let mut worst: BTreeMap<u64, f64> = BTreeMap::new();
            if let Some(rows) = sweep.get("rows").and_then(Value::as_array) {
                for row in rows {
                    let (Some(n), Some(ratio)) = (
                        row.get("n").and_then(Value::as_u64),
                        row.get("ratio").and_then(Value::as_f64),
                    ) else {
                        continue;
                    };
                    let entry = worst.entry(n).or_insert(f64::NEG_INFINITY);
                    if ratio > *entry {
                        *entry = ratio;
                    }
                }
            }
            let mut text = String::from("# n max_ratio\n");
            for (n, ratio) in worst {
                text.push_str(&format!("{n} {}\n", format_float(ratio)));
            }
            written.push(write_file(dir, "coupling_ratio.dat", &text)?);
        }
        _ => {}
    }
    Ok(written)
}

fn median_of_sorted(values: &[f64]) -> f64 {
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> std::io::Result<String> {
    fs::write(dir.join(name), text)?;
    Ok(name.to_string())
}
