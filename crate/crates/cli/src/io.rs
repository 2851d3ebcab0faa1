//! File formats: whitespace edge lists, covariate CSVs, labels and tables.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use casc::graph::{preprocess_covariates, PreprocessOptions, RawColumn};
use casc::{CovariateMatrix, SparseGraph};

use crate::CliError;

pub type Edges = Vec<(usize, usize, f64)>;

/// `i j [weight]` per line, `#` comments, blank lines skipped.
pub fn parse_edge_list(text: &str) -> Result<Edges, String> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(format!("line {}: expected `i j [weight]`", lineno + 1));
        }
        let index = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| format!("line {}: bad node index `{s}`", lineno + 1))
        };
        let weight = match fields.get(2) {
            Some(w) => w
                .parse::<f64>()
                .map_err(|_| format!("line {}: bad weight `{w}`", lineno + 1))?,
            None => 1.0,
        };
        edges.push((index(fields[0])?, index(fields[1])?, weight));
    }
    Ok(edges)
}

pub fn read_edge_list(path: &Path) -> Result<Edges, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_edge_list(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn edges_node_count(edges: &Edges) -> usize {
    edges.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0)
}

pub struct CovariateTable {
    pub names: Vec<String>,
    pub matrix: CovariateMatrix,
}

/// CSV with a header; first column `node_id` covering `0..N` exactly once.
/// Columns named in `categorical` are dummy coded, the rest must be numeric.
pub fn parse_covariates(
    text: &str,
    categorical: &[String],
    options: PreprocessOptions,
) -> Result<CovariateTable, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.first().map(String::as_str) != Some("node_id") {
        return Err("first column must be `node_id`".into());
    }
    if headers.len() < 2 {
        return Err("no covariate columns".into());
    }
    let known: HashSet<&str> = headers.iter().map(String::as_str).collect();
    if let Some(missing) = categorical.iter().find(|c| !known.contains(c.as_str())) {
        return Err(format!("categorical column `{missing}` not in header"));
    }

    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (lineno, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let id = record[0]
            .parse::<usize>()
            .map_err(|_| format!("row {}: bad node_id `{}`", lineno + 2, &record[0]))?;
        rows.push((id, record.iter().skip(1).map(str::to_string).collect()));
    }
    let n = rows.len();
    let mut ordered: Vec<Option<Vec<String>>> = vec![None; n];
    for (id, values) in rows {
        if id >= n {
            return Err(format!("node_id {id} outside 0..{n}"));
        }
        if ordered[id].replace(values).is_some() {
            return Err(format!("node_id {id} appears twice"));
        }
    }
    let ordered: Vec<Vec<String>> = ordered.into_iter().map(Option::unwrap).collect();

    let mut columns = Vec::new();
    for (c, name) in headers.iter().enumerate().skip(1) {
        let raw: Vec<String> = ordered.iter().map(|r| r[c - 1].clone()).collect();
        if categorical.contains(name) {
            columns.push(RawColumn::Categorical(raw));
        } else {
            let values = raw
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v.parse::<f64>()
                        .map_err(|_| format!("node {i}, column `{name}`: `{v}` is not numeric"))
                })
                .collect::<Result<Vec<f64>, String>>()?;
            columns.push(RawColumn::Numeric(values));
        }
    }
    let matrix = preprocess_covariates(&columns, options).map_err(|e| e.to_string())?;
    Ok(CovariateTable {
        names: headers[1..].to_vec(),
        matrix,
    })
}

pub fn read_covariates(
    path: &Path,
    categorical: &[String],
    options: PreprocessOptions,
) -> Result<CovariateTable, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_covariates(&text, categorical, options)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(io_error)?;
    w.write_record(["node_id", "cluster"]).map_err(io_error)?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()]).map_err(io_error)?;
    }
    w.flush().map_err(io_error)
}

pub fn write_edge_list(path: &Path, graph: &SparseGraph) -> Result<(), CliError> {
    let mut out = format!("# {} nodes\n", graph.n_nodes());
    for (i, j, w) in graph.edges() {
        if w == 1.0 {
            out.push_str(&format!("{i} {j}\n"));
        } else {
            out.push_str(&format!("{i} {j} {w}\n"));
        }
    }
    fs::write(path, out).map_err(io_error)
}

pub fn write_covariates(path: &Path, x: &CovariateMatrix) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(io_error)?;
    let mut header = vec!["node_id".to_string()];
    header.extend((0..x.n_covariates()).map(|c| format!("x{c}")));
    w.write_record(&header).map_err(io_error)?;
    for i in 0..x.n_nodes() {
        let mut row = vec![i.to_string()];
        row.extend((0..x.n_covariates()).map(|c| x.values()[(i, c)].to_string()));
        w.write_record(&row).map_err(io_error)?;
    }
    w.flush().map_err(io_error)
}

/// Serializes `rows` as CSV through serde; `Option` fields become empty cells.
pub fn write_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(io_error)?;
    for r in rows {
        w.serialize(r).map_err(io_error)?;
    }
    w.flush().map_err(io_error)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(io_error)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(io_error)?;
    f.write_all(b"\n").map_err(io_error)
}

fn io_error<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(format!("writing output: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_parsing() {
        let edges = parse_edge_list("# comment\n0 1\n\n1 2 0.5\n").unwrap();
        assert_eq!(edges, vec![(0, 1, 1.0), (1, 2, 0.5)]);
        assert_eq!(edges_node_count(&edges), 3);
        assert!(parse_edge_list("0 x\n").is_err());
        assert!(parse_edge_list("0 1 2 3\n").is_err());
        assert!(parse_edge_list("-1 2\n").is_err());
    }

    #[test]
    fn covariates_reordered_by_node_id() {
        let t = parse_covariates(
            "node_id,a,b\n1,2.0,x\n0,1.0,y\n",
            &["b".to_string()],
            PreprocessOptions::default(),
        )
        .unwrap();
        let v = t.matrix.values();
        assert_eq!((v.nrows(), v.ncols()), (2, 3));
        assert_eq!(v[(0, 0)], 1.0);
        assert_eq!(v[(1, 0)], 2.0);
        // levels sorted: x, y
        assert_eq!(v[(0, 2)], 1.0);
        assert_eq!(v[(1, 1)], 1.0);
    }

    #[test]
    fn covariate_errors() {
        let opts = PreprocessOptions::default();
        assert!(parse_covariates("id,a\n0,1\n", &[], opts).is_err());
        assert!(parse_covariates("node_id,a\n0,1\n0,2\n", &[], opts).is_err());
        assert!(parse_covariates("node_id,a\n0,1\n5,2\n", &[], opts).is_err());
        assert!(parse_covariates("node_id,a\n0,q\n", &[], opts).is_err());
        assert!(parse_covariates("node_id,a\n0,1\n", &["z".to_string()], opts).is_err());
    }
}
