//! File artifacts: Matrix Market matrices, JSON sidecars and CSV tables, each carrying a
//! JSON provenance header.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra_sparse::CscMatrix;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::sg::SGSystem;

pub const TOOL_NAME: &str = "phsg";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance record: tool identity plus an echo of the producing configuration.
pub fn provenance(command: &str, config: Value) -> Value {
    json!({ "tool": TOOL_NAME, "version": TOOL_VERSION, "command": command, "config": config })
}

/// Matrix Market coordinate format with the provenance as the comment line.
pub fn matrix_market_string(m: &CscMatrix<f64>, header: &Value) -> String {
    let body = nalgebra_sparse::io::save_to_matrix_market_str(m);
    let mut lines = body.splitn(3, '\n');
    let banner = lines.next().unwrap_or_default();
    let _generated_by = lines.next();
    let rest = lines.next().unwrap_or_default();
    format!("{banner}\n% {}\n{rest}", compact(header))
}

pub fn write_matrix_market(path: &Path, m: &CscMatrix<f64>, header: &Value) -> Result<()> {
    fs::write(path, matrix_market_string(m, header))?;
    Ok(())
}

pub fn read_matrix_market(path: &Path) -> Result<CscMatrix<f64>> {
    let coo = nalgebra_sparse::io::load_coo_from_matrix_market_file(path)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    Ok(CscMatrix::from(&coo))
}

/// Writes the SG matrices as `<prefix>_<name>.mtx`, the metadata sidecar `<prefix>.json` and
/// the validation report `<prefix>_validation.json`. Returns the written paths.
pub fn write_sg(dir: &Path, prefix: &str, sg: &SGSystem, header: &Value, tol: f64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut files = serde_json::Map::new();
    for (name, m) in sg.named_matrices() {
        let file = format!("{prefix}_{name}.mtx");
        let path = dir.join(&file);
        write_matrix_market(&path, m, header)?;
        files.insert(name.to_string(), Value::String(file));
        written.push(path);
    }
    let sidecar = json!({
        "provenance": header,
        "metadata": sg.metadata(),
        "matrices": files,
    });
    let path = dir.join(format!("{prefix}.json"));
    fs::write(&path, pretty(&sidecar))?;
    written.push(path);

    let report = sg.validate(tol)?;
    let path = dir.join(format!("{prefix}_validation.json"));
    fs::write(&path, pretty(&json!({ "provenance": header, "tol": tol, "report": report })))?;
    written.push(path);
    Ok(written)
}

/// 17 significant digits, round-trip exact.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV with a `# {provenance}` first line, then a header row and numeric rows.
pub fn csv_string(header: &Value, columns: &[String], rows: &[Vec<f64>]) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", compact(header));
    let _ = writeln!(out, "{}", columns.join(","));
    for (k, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(Error::Dimension(format!(
                "CSV row {k} has {} values for {} columns",
                row.len(),
                columns.len()
            )));
        }
        let cells: Vec<String> = row.iter().map(|&x| format_number(x)).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    Ok(out)
}

pub fn write_csv(path: &Path, header: &Value, columns: &[String], rows: &[Vec<f64>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, csv_string(header, columns, rows)?)?;
    Ok(())
}

/// `<command>_<model>_<d>_<variation>.csv`
pub fn csv_file_name(command: &str, model: &str, degree: usize, variation: f64) -> String {
    format!("{command}_{model}_{degree}_{variation}.csv")
}

fn compact(v: &Value) -> String {
    serde_json::to_string(v).expect("json value serializes")
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra_sparse::CooMatrix;

    fn sample() -> CscMatrix<f64> {
        let mut coo = CooMatrix::new(3, 4);
        coo.push(0, 0, 1.0 / 3.0);
        coo.push(2, 1, -2.5e-17);
        coo.push(1, 3, 7.0);
        CscMatrix::from(&coo)
    }

    #[test]
    fn matrix_market_round_trip_is_exact() {
        let m = sample();
        let header = provenance("test", json!({ "k": 1 }));
        let text = matrix_market_string(&m, &header);
        let second = text.lines().nth(1).unwrap();
        assert!(second.starts_with("% {"));
        let back: Value = serde_json::from_str(&second[2..]).unwrap();
        assert_eq!(back["config"]["k"], 1);
        let coo = nalgebra_sparse::io::load_coo_from_matrix_market_str::<f64>(&text).unwrap();
        assert_eq!(CscMatrix::from(&coo), m);
    }

    #[test]
    fn csv_numbers_round_trip() {
        let header = provenance("test", Value::Null);
        let xs = [0.1, -1.0 / 7.0, 6.02214076e23, 0.0, 5e-324];
        let text = csv_string(&header, &["x".into()], &xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
        let parsed: Vec<f64> = text.lines().skip(2).map(|l| l.parse().unwrap()).collect();
        assert_eq!(parsed, xs);
        assert_eq!(format_number(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let err = csv_string(&Value::Null, &["a".into(), "b".into()], &[vec![1.0]]).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn file_name_pattern() {
        assert_eq!(csv_file_name("mor", "ladder", 2, 10.0), "mor_ladder_2_10.csv");
    }
}
