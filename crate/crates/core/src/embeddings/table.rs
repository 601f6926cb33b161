use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LensError, Result};

/// Precomputed item vectors, e.g. from an external sentence encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    rows: BTreeMap<u32, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(rows: BTreeMap<u32, Vec<f64>>) -> Result<Self> {
        let dim = rows.values().next().map_or(0, Vec::len);
        if dim == 0 {
            return Err(LensError::Data("embedding table is empty".into()));
        }
        for (id, v) in &rows {
            if v.len() != dim {
                return Err(LensError::Data(format!(
                    "item {id} has {} components, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(LensError::Data(format!(
                    "item {id} has a non-finite component"
                )));
            }
        }
        Ok(EmbeddingTable { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, item_id: u32) -> Result<&[f64]> {
        self.rows
            .get(&item_id)
            .map(Vec::as_slice)
            .ok_or(LensError::Lookup(item_id))
    }

    pub fn contains(&self, item_id: u32) -> bool {
        self.rows.contains_key(&item_id)
    }
}

/// Reads a TSV table: `item_id<TAB>v_1<TAB>...<TAB>v_d`, one item per line.
pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LensError::io(path, e))?;
    let err = |line: usize, message: String| LensError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows = BTreeMap::new();
    let mut dim = None;
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|e| LensError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id: u32 = fields
            .next()
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|e| err(line_no, format!("bad item_id: {e}")))?;
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| err(line_no, format!("bad component: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err(
                line_no,
                format!("item {id} has a non-finite component"),
            ));
        }
        match dim {
            None if values.is_empty() => return Err(err(line_no, "row has no components".into())),
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(err(
                    line_no,
                    format!("row has {} components, expected {d}", values.len()),
                ))
            }
            Some(_) => {}
        }
        if rows.insert(id, values).is_some() {
            return Err(err(line_no, format!("duplicate item_id {id}")));
        }
    }
    EmbeddingTable::new(rows)
}

pub fn save_embedding_table(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<()> {
    let path = path.as_ref();
    let io = |e| LensError::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for (id, v) in &table.rows {
        write!(out, "{id}").map_err(io)?;
        for x in v {
            write!(out, "\t{x:?}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("emb.tsv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = BTreeMap::new();
        rows.insert(3, vec![0.1, -2.5e-9, 1.0 / 3.0]);
        rows.insert(7, vec![4.0, 5.0, 6.0]);
        let table = EmbeddingTable::new(rows).unwrap();
        let p = dir.path().join("t.tsv");
        save_embedding_table(&p, &table).unwrap();
        assert_eq!(load_embedding_table(&p).unwrap(), table);
    }

    #[test]
    fn nan_row_is_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "1\t0.5\t0.5\n2\tNaN\t1.0\n");
        assert!(matches!(
            load_embedding_table(&p),
            Err(LensError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn ragged_and_duplicate_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "1\t0.5\t0.5\n2\t1.0\n");
        assert!(matches!(
            load_embedding_table(&p),
            Err(LensError::Parse { line: 2, .. })
        ));
        let p = write(&dir, "1\t0.5\n1\t1.0\n");
        assert!(matches!(
            load_embedding_table(&p),
            Err(LensError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn missing_item_names_the_id() {
        let mut rows = BTreeMap::new();
        rows.insert(1, vec![1.0]);
        let table = EmbeddingTable::new(rows).unwrap();
        let err = table.get(42).unwrap_err();
        assert!(matches!(err, LensError::Lookup(42)));
        assert!(err.to_string().contains("42"));
    }
}
