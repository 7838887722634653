use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::{Format, SweepConfig};
use crate::table::Table;
use crate::{RunError, SUITE_VERSION};

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Columns in table order followed by `status`.
pub fn to_csv(table: &Table) -> String {
    let mut out = String::new();
    let header: Vec<&str> = table.columns.iter().copied().chain(["status"]).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in &table.rows {
        let fields: Vec<String> = row
            .cells
            .iter()
            .map(|c| csv_field(&c.to_string()))
            .chain([csv_field(&row.status())])
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// `{experiment, config, rows, suite_version}` with one object per row.
pub fn to_json(table: &Table, cfg: &SweepConfig) -> String {
    let rows: Vec<serde_json::Value> = table
        .rows
        .iter()
        .map(|row| {
            let mut obj = serde_json::Map::new();
            for (name, cell) in table.columns.iter().zip(&row.cells) {
                obj.insert((*name).to_string(), cell.to_json());
            }
            obj.insert("status".into(), row.status().into());
            serde_json::Value::Object(obj)
        })
        .collect();
    let doc = serde_json::json!({
        "experiment": table.experiment,
        "config": cfg.to_json(),
        "rows": rows,
        "suite_version": SUITE_VERSION,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("table serialises");
    s.push('\n');
    s
}

pub fn render(table: &Table, cfg: &SweepConfig) -> String {
    match cfg.format {
        Format::Csv => to_csv(table),
        Format::Json => to_json(table, cfg),
    }
}

/// `<out>.<series>.dat` beside the main output: a comment header, then
/// `x y` pairs.
pub fn plot_paths(out: &Path, table: &Table) -> Vec<(PathBuf, String)> {
    table
        .series
        .iter()
        .map(|(name, points)| {
            let mut path = out.as_os_str().to_owned();
            path.push(format!(".{name}.dat"));
            let mut body = format!("# n {name}\n");
            for (x, y) in points {
                body.push_str(&format!("{x} {y}\n"));
            }
            (PathBuf::from(path), body)
        })
        .collect()
}

/// Writes the table to `cfg.out` (plus plot files) or to stdout.
pub fn emit(table: &Table, cfg: &SweepConfig) -> Result<(), RunError> {
    let text = render(table, cfg);
    match &cfg.out {
        Some(path) => {
            fs::write(path, text)?;
            for (p, body) in plot_paths(path, table) {
                fs::write(p, body)?;
            }
        }
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;
    use crate::table::{Cell, Row};

    fn sample() -> Table {
        let mut t = Table::new("poisson_sweep", vec!["n", "p", "note"]);
        t.rows.push(Row::new(vec![Cell::Int(3), Cell::Num(0.1), "a,b".into()]).with_margin(0.5));
        t.rows.push(Row::new(vec![Cell::Int(4), Cell::Num(1e-9), Cell::Empty]).with_margin(-1.0));
        t
    }

    #[test]
    fn csv_layout() {
        let csv = to_csv(&sample());
        assert_eq!(csv, "n,p,note,status\n3,0.1,\"a,b\",ok\n4,1e-9,,FAIL\n");
    }

    #[test]
    fn json_layout() {
        let cfg = SweepConfig::defaults(Experiment::PoissonSweep);
        let v: serde_json::Value = serde_json::from_str(&to_json(&sample(), &cfg)).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["experiment", "config", "rows", "suite_version"]);
        assert_eq!(v["rows"][0]["note"], "a,b");
        assert_eq!(v["rows"][1]["status"], "FAIL");
        assert!(v["rows"][1]["note"].is_null());
        assert_eq!(v["config"]["seed"], cfg.seed);
    }
}
