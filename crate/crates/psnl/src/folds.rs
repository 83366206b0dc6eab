//! Fold file: `<fold>\t<label_a>\t<label_b>`, one line per undirected edge,
//! in the matrix's canonical edge order.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use psnl_core::{FoldSplit, ShdiMatrix};

use crate::error::FormatError;

pub fn write_folds<W: Write>(
    mut out: W,
    mat: &ShdiMatrix,
    split: &FoldSplit,
) -> std::io::Result<()> {
    let labels = mat.labels();
    for (e, &fold) in mat.edges().iter().zip(split.assignment()) {
        writeln!(
            out,
            "{}\t{}\t{}",
            fold,
            labels.label(e.m).unwrap_or_default(),
            labels.label(e.n).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Reads a fold file for `mat`; every edge must be listed exactly once.
pub fn read_folds<R: BufRead>(
    reader: R,
    mat: &ShdiMatrix,
    k: usize,
) -> Result<FoldSplit, FormatError> {
    let index: HashMap<(usize, usize), usize> = mat
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| ((e.m, e.n), i))
        .collect();
    let labels = mat.labels();
    let mut assignment: Vec<Option<usize>> = vec![None; mat.edge_count()];
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(FormatError::syntax(
                line_no,
                "expected <fold>\\t<label_a>\\t<label_b>",
            ));
        }
        let fold: usize = fields[0]
            .parse()
            .map_err(|_| FormatError::syntax(line_no, format!("bad fold index `{}`", fields[0])))?;
        if fold >= k {
            return Err(FormatError::syntax(
                line_no,
                format!("fold {fold} out of range 0..{k}"),
            ));
        }
        let node = |l: &str| {
            labels
                .index_of(l)
                .ok_or_else(|| FormatError::syntax(line_no, format!("unknown label `{l}`")))
        };
        let (a, b) = (node(fields[1])?, node(fields[2])?);
        let edge = *index
            .get(&(a.min(b), a.max(b)))
            .ok_or_else(|| FormatError::syntax(line_no, "pair is not an edge of the matrix"))?;
        if assignment[edge].replace(fold).is_some() {
            return Err(FormatError::syntax(line_no, "edge listed twice"));
        }
    }
    let assignment = assignment
        .into_iter()
        .enumerate()
        .map(|(e, f)| f.ok_or_else(|| FormatError::Header(format!("edge {e} has no fold"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FoldSplit::from_assignment(k, None, assignment)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let edges: Vec<_> = (0..30).map(|i| (i, (i * 7 + 3) % 31, 1.0)).collect();
        let mat = ShdiMatrix::from_edges(31, edges).unwrap();
        let split = mat.kfold_split(10, 5).unwrap();
        let mut buf = Vec::new();
        write_folds(&mut buf, &mat, &split).unwrap();
        let back = read_folds(buf.as_slice(), &mat, 10).unwrap();
        assert_eq!(back.assignment(), split.assignment());
    }

    #[test]
    fn missing_edge_rejected() {
        let mat = ShdiMatrix::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert!(read_folds("0\t0\t1\n".as_bytes(), &mat, 10).is_err());
        assert!(read_folds("0\t0\t1\n3\t2\t1\n".as_bytes(), &mat, 10).is_ok());
    }
}
