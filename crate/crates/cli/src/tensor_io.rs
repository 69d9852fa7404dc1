//! Plain-text tensor format: a `shape d1,d2,...` header followed by one
//! `i1,i2,...,value` line per observed entry. Blank lines and lines starting
//! with `#` are ignored.

use std::io::{BufRead, Write};

use anyhow::{bail, Context, Result};
use lli_core::completion::CellIter;
use lli_core::{CompletedTensor, SparseTensor};

fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

pub fn read_tensor<R: BufRead>(reader: R) -> Result<SparseTensor> {
    let mut shape: Option<Vec<usize>> = None;
    let mut entries = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some(dims) = &shape else {
            let Some(rest) = line.strip_prefix("shape") else {
                bail!("line {lineno}: expected a `shape d1,d2,...` header");
            };
            let dims = parse_list(rest.trim()).with_context(|| format!("line {lineno}: bad shape {rest:?}"))?;
            shape = Some(dims);
            continue;
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dims.len() + 1 {
            bail!(
                "line {lineno}: expected {} indices and a value, got {} fields",
                dims.len(),
                fields.len()
            );
        }
        let index: Vec<usize> =
            parse_list(&fields[..dims.len()].join(",")).with_context(|| format!("line {lineno}: bad index"))?;
        let value: f64 = fields[dims.len()]
            .trim()
            .parse()
            .with_context(|| format!("line {lineno}: bad value {:?}", fields[dims.len()]))?;
        entries.push((index, value));
    }
    let shape = shape.context("missing `shape` header")?;
    Ok(SparseTensor::new(shape, entries)?)
}

fn join(index: &[usize]) -> String {
    index.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Every cell of the completion, row-major.
pub fn write_completed<W: Write>(mut out: W, completed: &CompletedTensor) -> Result<()> {
    writeln!(out, "shape {}", join(completed.shape()))?;
    let values = completed.materialize()?;
    for (index, v) in CellIter::new(completed.shape()).zip(values) {
        writeln!(out, "{},{v}", join(&index))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn reads_header_and_entries() {
        let t = read_tensor(Cursor::new("# toy\nshape 2,2\n0,0,2\n0,1,8\n\n1,0,4\n")).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.get(&[1, 0]), Some(4.0));
        assert_eq!(t.nnz(), 3);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(read_tensor(Cursor::new("0,0,1\n")).is_err());
        assert!(read_tensor(Cursor::new("shape 2,2\n0,1\n")).is_err());
        assert!(read_tensor(Cursor::new("shape 2,2\n0,0,-1\n")).is_err());
        assert!(read_tensor(Cursor::new("shape 2,x\n")).is_err());
    }
}
