use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// A parsed sweep CSV: header columns and rows of string fields.
struct Table {
    file: String,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .with_context(|| format!("{} is empty", path.display()))?;
    let columns: Vec<String> = header.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != columns.len() {
            bail!("{}: row has {} fields, header has {}", path.display(), fields.len(), columns.len());
        }
        rows.push(fields);
    }
    Ok(Table { file: path.display().to_string(), columns, rows })
}

fn column(table: &Table, name: &str) -> Result<usize> {
    table
        .columns
        .iter()
        .position(|c| c == name)
        .with_context(|| format!("{} is missing column {name:?}", table.file))
}

/// Merges every sweep CSV in `dir` into one tidy long-format CSV
/// (`axis,axis_value,estimator,metric,value`) plus a text summary with the
/// best entry per metric column marked.
pub fn build_report(dir: &Path) -> Result<(String, String)> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("cannot read results dir {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| {
                    n.ends_with(".csv")
                        && (n.starts_with("ope_") || n.starts_with("opl_") || n == "constrained.csv")
                })
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        bail!("no sweep results (ope_*.csv, opl_*.csv, constrained.csv) in {}", dir.display());
    }

    let mut tidy = String::from("axis,axis_value,estimator,metric,value\n");
    let mut summary = String::new();
    for path in &entries {
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        let table = read_table(path)?;
        if name.starts_with("ope_") {
            let axis = name.trim_start_matches("ope_").trim_end_matches(".csv").to_string();
            append_section(
                &mut tidy,
                &mut summary,
                &table,
                &axis,
                "estimator",
                &[("mse", Best::Min), ("squared_bias", Best::Min), ("variance", Best::Min)],
            )?;
        } else if name.starts_with("opl_") {
            let axis = name.trim_start_matches("opl_").trim_end_matches(".csv").to_string();
            append_section(
                &mut tidy,
                &mut summary,
                &table,
                &axis,
                "learner",
                &[("mean_ratio", Best::Max), ("std_ratio", Best::Min)],
            )?;
        } else {
            append_constrained(&mut tidy, &mut summary, &table)?;
        }
    }
    Ok((tidy, summary))
}

#[derive(Clone, Copy)]
enum Best {
    Min,
    Max,
}

fn append_section(
    tidy: &mut String,
    summary: &mut String,
    table: &Table,
    axis: &str,
    id_col: &str,
    metrics: &[(&str, Best)],
) -> Result<()> {
    let id = column(table, id_col)?;
    let axis_idx = column(table, axis)?;
    let metric_idx: Vec<usize> =
        metrics.iter().map(|(m, _)| column(table, m)).collect::<Result<_>>()?;

    for row in &table.rows {
        for (&(metric, _), &idx) in metrics.iter().zip(&metric_idx) {
            tidy.push_str(&format!(
                "{axis},{},{},{metric},{}\n",
                row[axis_idx], row[id], row[idx]
            ));
        }
    }

    summary.push_str(&format!("== {} by {axis} ==\n", table.file));
    let mut axis_values: Vec<String> = Vec::new();
    for row in &table.rows {
        if !axis_values.contains(&row[axis_idx]) {
            axis_values.push(row[axis_idx].clone());
        }
    }
    for value in &axis_values {
        summary.push_str(&format!("{axis} = {value}\n"));
        let group: Vec<&Vec<String>> =
            table.rows.iter().filter(|r| &r[axis_idx] == value).collect();
        for (&(metric, best), &idx) in metrics.iter().zip(&metric_idx) {
            let parsed: Vec<f64> = group
                .iter()
                .map(|r| r[idx].parse::<f64>().with_context(|| format!("{}: bad number in {metric}", table.file)))
                .collect::<Result<_>>()?;
            let best_idx = match best {
                Best::Min => parsed
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                    .map(|(i, _)| i),
                Best::Max => parsed
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                    .map(|(i, _)| i),
            }
            .unwrap();
            summary.push_str(&format!("  {metric:<13}"));
            for (i, row) in group.iter().enumerate() {
                let marker = if i == best_idx { "*" } else { "" };
                summary.push_str(&format!(" {}={:.4e}{marker}", row[id], parsed[i]));
            }
            summary.push('\n');
        }
    }
    summary.push('\n');
    Ok(())
}

fn append_constrained(tidy: &mut String, summary: &mut String, table: &Table) -> Result<()> {
    let learner = column(table, "learner")?;
    let budget = column(table, "budget")?;
    let metrics = [
        ("rmst_mean", Best::Max),
        ("rmst_std", Best::Min),
        ("cost_mean", Best::Min),
        ("cost_std", Best::Min),
        ("feasible_rate", Best::Max),
    ];
    let metric_idx: Vec<usize> =
        metrics.iter().map(|(m, _)| column(table, m)).collect::<Result<_>>()?;
    for row in &table.rows {
        for (&(metric, _), &idx) in metrics.iter().zip(&metric_idx) {
            tidy.push_str(&format!(
                "budget,{},{},{metric},{}\n",
                row[budget], row[learner], row[idx]
            ));
        }
    }
    summary.push_str(&format!("== {} ==\n", table.file));
    for (&(metric, best), &idx) in metrics.iter().zip(&metric_idx) {
        let parsed: Vec<f64> = table
            .rows
            .iter()
            .map(|r| r[idx].parse::<f64>().with_context(|| format!("{}: bad number in {metric}", table.file)))
            .collect::<Result<_>>()?;
        let best_idx = match best {
            Best::Min => parsed
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                .map(|(i, _)| i),
            Best::Max => parsed
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                .map(|(i, _)| i),
        }
        .unwrap();
        summary.push_str(&format!("  {metric:<13}"));
        for (i, row) in table.rows.iter().enumerate() {
            let marker = if i == best_idx { "*" } else { "" };
            summary.push_str(&format!(" {}={:.4}{marker}", row[learner], parsed[i]));
        }
        summary.push('\n');
    }
    summary.push_str("(* = best per column)\n\n");
    Ok(())
}
