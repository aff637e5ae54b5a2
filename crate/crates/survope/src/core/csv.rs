//! Dataset CSV format.
//!
//! First line is a metadata comment `# d=<d> K=<K>`, then the header
//! `context_0,..,context_{d-1},action,observed_time,event[,cost]`, then one
//! row per record with `event` encoded 0/1. The `cost` column is present
//! exactly when every record carries a cost. Floats are written with 17
//! significant digits so a round-trip reproduces every `f64` bit-exactly;
//! output is UTF-8 with LF line endings and deterministic byte-for-byte.

use std::fs;
use std::path::Path;

use crate::core::{Dataset, LoggedRecord};
use crate::error::{Error, Result};

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes `dataset` to its CSV text.
pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let with_cost = dataset.has_costs();
    let mut out = String::new();
    out.push_str(&format!("# d={} K={}\n", dataset.d(), dataset.n_actions()));
    for j in 0..dataset.d() {
        out.push_str(&format!("context_{j},"));
    }
    out.push_str("action,observed_time,event");
    if with_cost {
        out.push_str(",cost");
    }
    out.push('\n');
    for rec in dataset.records() {
        for v in &rec.context {
            out.push_str(&fmt_f64(*v));
            out.push(',');
        }
        out.push_str(&format!(
            "{},{},{}",
            rec.action,
            fmt_f64(rec.observed_time),
            u8::from(rec.event)
        ));
        if with_cost {
            out.push(',');
            out.push_str(&fmt_f64(rec.cost.expect("has_costs checked")));
        }
        out.push('\n');
    }
    out
}

pub fn save_dataset_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_csv(dataset))
        .map_err(|source| Error::Io { path: path.display().to_string(), source })
}

pub fn load_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    parse_dataset_csv(&text, &path.display().to_string())
}

pub fn parse_dataset_csv(text: &str, path: &str) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_string(), line, msg };

    let mut lines = text.lines().enumerate();
    let (_, meta) = lines
        .next()
        .ok_or_else(|| err(1, "empty file".into()))?;
    let (d, n_actions) = parse_meta(meta).map_err(|msg| err(1, msg))?;

    let (_, header) = lines.next().ok_or_else(|| err(2, "missing header row".into()))?;
    let with_cost = parse_header(header, d).map_err(|msg| err(2, msg))?;
    let ncols = d + 3 + usize::from(with_cost);

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != ncols {
            return Err(err(line_no, format!("expected {ncols} columns, found {}", fields.len())));
        }
        let mut context = Vec::with_capacity(d);
        for (j, f) in fields[..d].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| err(line_no, format!("context_{j} is not a number: {f:?}")))?;
            context.push(v);
        }
        let action: usize = fields[d]
            .parse()
            .map_err(|_| err(line_no, format!("action is not an integer: {:?}", fields[d])))?;
        if action >= n_actions {
            return Err(err(line_no, format!("action {action} outside [0, {n_actions})")));
        }
        let observed_time: f64 = fields[d + 1]
            .parse()
            .map_err(|_| err(line_no, format!("observed_time is not a number: {:?}", fields[d + 1])))?;
        if !(observed_time > 0.0) {
            return Err(err(line_no, format!("non-positive observed_time {observed_time}")));
        }
        let event = match fields[d + 2] {
            "0" => false,
            "1" => true,
            other => return Err(err(line_no, format!("event must be 0 or 1, found {other:?}"))),
        };
        let mut rec = LoggedRecord::new(context, action, observed_time, event);
        if with_cost {
            let cost: f64 = fields[d + 3]
                .parse()
                .map_err(|_| err(line_no, format!("cost is not a number: {:?}", fields[d + 3])))?;
            rec = rec.with_cost(cost);
        }
        records.push(rec);
    }
    Dataset::new(records, d, n_actions)
}

fn parse_meta(line: &str) -> std::result::Result<(usize, usize), String> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| format!("first line must be a `# d=<d> K=<K>` comment, found {line:?}"))?
        .trim();
    let mut d = None;
    let mut k = None;
    for part in body.split_whitespace() {
        if let Some(v) = part.strip_prefix("d=") {
            d = Some(v.parse::<usize>().map_err(|_| format!("bad d value {v:?}"))?);
        } else if let Some(v) = part.strip_prefix("K=") {
            k = Some(v.parse::<usize>().map_err(|_| format!("bad K value {v:?}"))?);
        }
    }
    match (d, k) {
        (Some(d), Some(k)) if d > 0 && k > 0 => Ok((d, k)),
        _ => Err(format!("metadata must declare positive d and K, found {body:?}")),
    }
}

fn parse_header(line: &str, d: usize) -> std::result::Result<bool, String> {
    let fields: Vec<&str> = line.split(',').collect();
    let mut expected: Vec<String> = (0..d).map(|j| format!("context_{j}")).collect();
    expected.extend(["action".into(), "observed_time".into(), "event".into()]);
    if fields.len() == expected.len() + 1 && fields[expected.len()] == "cost" {
        if fields[..expected.len()] == expected[..] {
            return Ok(true);
        }
    } else if fields.len() == expected.len() && fields[..] == expected[..] {
        return Ok(false);
    }
    Err(format!("header does not match the documented schema for d={d}"))
}
