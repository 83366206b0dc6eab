//! Edge-list readers and writers.
//!
//! Two input formats are accepted:
//!
//! - TSV: `<label_a>\t<label_b>\t<weight>` per line, `#` comments.
//! - MatrixMarket `coordinate` with the `symmetric` qualifier; 1-based
//!   indices become 0-based labels and the declared dimension fixes `|U|`.
//!
//! Files that must share a node indexing (train/validation/test splits) are
//! read as [`RawEdges`] first and then built together with
//! [`build_shared`].

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use psnl_core::shdi::LabeledEntry;
use psnl_core::{LabelMap, ShdiMatrix};
use serde::{Deserialize, Serialize};

use crate::error::FormatError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Tsv,
    Mtx,
}

impl Format {
    /// `.mtx` / `.mm` files are MatrixMarket, everything else TSV.
    pub fn detect(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mtx") | Some("mm") => Format::Mtx,
            _ => Format::Tsv,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawEntry {
    pub a: String,
    pub b: String,
    pub y: f64,
    pub line: usize,
}

/// Entries of one file before label resolution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawEdges {
    pub entries: Vec<RawEntry>,
    /// Node count declared by the file (MatrixMarket only).
    pub declared_nodes: Option<usize>,
}

impl RawEdges {
    fn labeled(&self) -> impl Iterator<Item = LabeledEntry<'_>> + Clone {
        self.entries.iter().map(|e| LabeledEntry {
            a: &e.a,
            b: &e.b,
            y: e.y,
            line: Some(e.line),
        })
    }
}

fn parse_weight(field: &str, line: usize) -> Result<f64, FormatError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| FormatError::syntax(line, format!("cannot parse weight `{field}`")))
}

pub fn read_tsv<R: BufRead>(reader: R) -> Result<RawEdges, FormatError> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let text = line.strip_suffix('\r').unwrap_or(&line);
        if text.trim().is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 3 {
            return Err(FormatError::syntax(
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let (a, b) = (fields[0].trim(), fields[1].trim());
        if a.is_empty() || b.is_empty() {
            return Err(FormatError::syntax(line_no, "empty node label"));
        }
        entries.push(RawEntry {
            a: a.to_owned(),
            b: b.to_owned(),
            y: parse_weight(fields[2], line_no)?,
            line: line_no,
        });
    }
    Ok(RawEdges {
        entries,
        declared_nodes: None,
    })
}

pub fn read_mtx<R: BufRead>(reader: R) -> Result<RawEdges, FormatError> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(FormatError::Header("empty MatrixMarket file".into())),
    };
    let tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(FormatError::Header(format!(
            "not a MatrixMarket matrix header: `{header}`"
        )));
    }
    if tokens[2] != "coordinate" {
        return Err(FormatError::Header(format!(
            "unsupported layout `{}`",
            tokens[2]
        )));
    }
    let pattern = match tokens[3].as_str() {
        "real" | "integer" => false,
        "pattern" => true,
        other => return Err(FormatError::Header(format!("unsupported field `{other}`"))),
    };
    if tokens[4] != "symmetric" {
        return Err(FormatError::Header(format!(
            "matrix is `{}`, expected `symmetric`",
            tokens[4]
        )));
    }

    let mut size: Option<(usize, usize)> = None;
    let mut entries = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        let index = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| FormatError::syntax(line_no, format!("cannot parse index `{s}`")))
        };
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(FormatError::syntax(
                        line_no,
                        "size line needs rows, cols, nnz",
                    ));
                }
                let (rows, cols, nnz) = (index(fields[0])?, index(fields[1])?, index(fields[2])?);
                if rows != cols {
                    return Err(FormatError::syntax(
                        line_no,
                        format!("symmetric matrix must be square, got {rows}x{cols}"),
                    ));
                }
                size = Some((rows, nnz));
            }
            Some((rows, _)) => {
                let expected = if pattern { 2 } else { 3 };
                if fields.len() != expected {
                    return Err(FormatError::syntax(
                        line_no,
                        format!("expected {expected} fields, found {}", fields.len()),
                    ));
                }
                let (r, c) = (index(fields[0])?, index(fields[1])?);
                if r == 0 || c == 0 || r > rows || c > rows {
                    return Err(FormatError::syntax(
                        line_no,
                        format!("index ({r}, {c}) outside 1..={rows}"),
                    ));
                }
                let y = if pattern {
                    1.0
                } else {
                    parse_weight(fields[2], line_no)?
                };
                entries.push(RawEntry {
                    a: (r - 1).to_string(),
                    b: (c - 1).to_string(),
                    y,
                    line: line_no,
                });
            }
        }
    }
    let (rows, nnz) = size.ok_or_else(|| FormatError::Header("missing size line".into()))?;
    if entries.len() != nnz {
        return Err(FormatError::Header(format!(
            "size line announces {nnz} entries, file holds {}",
            entries.len()
        )));
    }
    Ok(RawEdges {
        entries,
        declared_nodes: Some(rows),
    })
}

pub fn read_raw<R: BufRead>(reader: R, format: Format) -> Result<RawEdges, FormatError> {
    match format {
        Format::Tsv => read_tsv(reader),
        Format::Mtx => read_mtx(reader),
    }
}

/// Reads a file, detecting the format from the extension unless given.
pub fn load_raw(path: &Path, format: Option<Format>) -> Result<RawEdges, FormatError> {
    let file = File::open(path).map_err(|e| FormatError::at_path(path, e))?;
    let format = format.unwrap_or_else(|| Format::detect(path));
    read_raw(BufReader::new(file), format)
}

/// Label map covering every file; MatrixMarket inputs contribute their whole
/// declared index range so isolated nodes keep their index.
pub fn shared_labels(raws: &[&RawEdges]) -> LabelMap {
    let declared = raws
        .iter()
        .filter_map(|r| r.declared_nodes)
        .max()
        .unwrap_or(0);
    let implicit: Vec<String> = (0..declared).map(|i| i.to_string()).collect();
    LabelMap::from_raw(
        raws.iter()
            .flat_map(|r| r.entries.iter().flat_map(|e| [e.a.as_str(), e.b.as_str()]))
            .chain(implicit.iter().map(String::as_str)),
    )
}

/// Builds one matrix per input over a common label map.
pub fn build_shared(raws: &[&RawEdges]) -> Result<Vec<ShdiMatrix>, FormatError> {
    let labels = Arc::new(shared_labels(raws));
    raws.iter()
        .map(|r| Ok(ShdiMatrix::from_labeled_with(labels.clone(), r.labeled())?))
        .collect()
}

/// Builds every input against an existing label map (e.g. a model's).
pub fn build_with(labels: &Arc<LabelMap>, raw: &RawEdges) -> Result<ShdiMatrix, FormatError> {
    Ok(ShdiMatrix::from_labeled_with(
        labels.clone(),
        raw.labeled(),
    )?)
}

/// Parses a single stream into a validated matrix.
pub fn parse_edges<R: BufRead>(reader: R, format: Format) -> Result<ShdiMatrix, FormatError> {
    let raw = read_raw(reader, format)?;
    Ok(build_shared(&[&raw])?.remove(0))
}

pub fn load_edges(path: &Path, format: Option<Format>) -> Result<ShdiMatrix, FormatError> {
    let raw = load_raw(path, format)?;
    Ok(build_shared(&[&raw])?.remove(0))
}

/// Writes the listed edges (all when `subset` is `None`) as TSV, using raw
/// labels and shortest round-trip weights.
pub fn write_tsv<W: Write>(
    mut out: W,
    mat: &ShdiMatrix,
    subset: Option<&[usize]>,
) -> std::io::Result<()> {
    let labels = mat.labels();
    let mut emit = |i: usize| {
        let e = mat.edges()[i];
        writeln!(
            out,
            "{}\t{}\t{}",
            labels.label(e.m).unwrap_or_default(),
            labels.label(e.n).unwrap_or_default(),
            e.y
        )
    };
    match subset {
        Some(idx) => idx.iter().try_for_each(|&i| emit(i)),
        None => (0..mat.edge_count()).try_for_each(emit),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use psnl_core::{Edge, ShdiError};

    #[test]
    fn tsv_mirror_dedup() {
        let m = parse_edges("0\t1\t0.5\n1\t0\t0.5\n".as_bytes(), Format::Tsv).unwrap();
        assert_eq!(m.node_count(), 2);
        assert_eq!(m.edges(), &[Edge { m: 0, n: 1, y: 0.5 }]);
    }

    #[test]
    fn tsv_self_loop() {
        let m = parse_edges("7\t7\t1.0\n".as_bytes(), Format::Tsv).unwrap();
        let u = m.labels().index_of("7").unwrap();
        assert_eq!(m.edges(), &[Edge { m: u, n: u, y: 1.0 }]);
        assert_eq!(m.neighbors(u).unwrap().len(), 1);
    }

    #[test]
    fn tsv_comments_and_scientific() {
        let text = "# header\n\na\tb\t1e-3\n# more\nb\tc\t2.5E1\n";
        let m = parse_edges(text.as_bytes(), Format::Tsv).unwrap();
        assert_eq!(m.edge_count(), 2);
        assert_eq!(m.weight(1, 2), Some(25.0));
    }

    #[test]
    fn tsv_negative_weight_line() {
        let err = parse_edges("0\t1\t0.5\n# c\n1\t2\t-1\n".as_bytes(), Format::Tsv).unwrap_err();
        assert!(matches!(
            err,
            FormatError::Data(ShdiError::NegativeWeight { line: Some(3), .. })
        ));
    }

    #[test]
    fn tsv_conflicting_duplicate() {
        let err = parse_edges("0\t1\t0.5\n1\t0\t0.6\n".as_bytes(), Format::Tsv).unwrap_err();
        assert!(matches!(
            err,
            FormatError::Data(ShdiError::ConflictingDuplicate { .. })
        ));
    }

    #[test]
    fn tsv_bad_field_count() {
        let err = parse_edges("0 1 0.5\n".as_bytes(), Format::Tsv).unwrap_err();
        assert!(matches!(err, FormatError::Syntax { line: 1, .. }));
    }

    #[test]
    fn mtx_symmetric() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% c\n4 4 3\n1 1 2.0\n3 1 0.5\n4 2 1.5\n";
        let m = parse_edges(text.as_bytes(), Format::Mtx).unwrap();
        assert_eq!(m.node_count(), 4);
        assert_eq!(
            m.edges(),
            &[
                Edge { m: 0, n: 0, y: 2.0 },
                Edge { m: 0, n: 2, y: 0.5 },
                Edge { m: 1, n: 3, y: 1.5 }
            ]
        );
    }

    #[test]
    fn mtx_pattern_and_isolated() {
        let text = "%%MatrixMarket matrix coordinate pattern symmetric\n5 5 1\n2 1\n";
        let m = parse_edges(text.as_bytes(), Format::Mtx).unwrap();
        assert_eq!(m.node_count(), 5);
        assert!(m.neighbors(4).unwrap().is_empty());
        assert_eq!(m.weight(0, 1), Some(1.0));
    }

    #[test]
    fn mtx_rejects_general() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 1.0\n";
        assert!(matches!(
            parse_edges(text.as_bytes(), Format::Mtx),
            Err(FormatError::Header(_))
        ));
    }

    #[test]
    fn mtx_rejects_wrong_count() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 2 1.0\n";
        assert!(matches!(
            parse_edges(text.as_bytes(), Format::Mtx),
            Err(FormatError::Header(_))
        ));
    }

    #[test]
    fn shared_labels_cover_all_files() {
        let a = read_tsv("x\ty\t1\n".as_bytes()).unwrap();
        let b = read_tsv("y\tz\t2\n".as_bytes()).unwrap();
        let mats = build_shared(&[&a, &b]).unwrap();
        assert_eq!(mats[0].node_count(), 3);
        assert!(Arc::ptr_eq(mats[0].labels(), mats[1].labels()));
        assert_eq!(mats[1].edges(), &[Edge { m: 1, n: 2, y: 2.0 }]);
    }

    #[test]
    fn detect_by_extension() {
        assert_eq!(Format::detect(Path::new("a/b.mtx")), Format::Mtx);
        assert_eq!(Format::detect(Path::new("a/b.tsv")), Format::Tsv);
    }
}
