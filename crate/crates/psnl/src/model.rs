//! Model file.
//!
//! ```text
//! PSNL\tv1\t<node_count>\t<rank>
//! <a_0,0>\t...\t<a_0,f-1>            node_count rows of A
//! #LABELS
//! <index>\t<raw label>               node_count rows
//! #CHECKPOINT                        optional
//! <x rows>                           node_count rows of X
//! <w rows>                           node_count rows of W
//! ```
//!
//! Values use Rust's shortest round-trip decimal formatting, so a
//! save/load cycle reproduces every factor bit for bit.

use std::io::{BufRead, Write};
use std::sync::Arc;

use psnl_core::{FactorState, LabelMap};

use crate::error::FormatError;

pub const MAGIC: &str = "PSNL";
pub const VERSION: &str = "v1";
const LABELS: &str = "#LABELS";
const CHECKPOINT: &str = "#CHECKPOINT";

/// A trained model as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub state: FactorState,
    pub labels: Arc<LabelMap>,
    /// Whether `X` and `W` were stored (otherwise `X = A`, `W = 0`).
    pub has_checkpoint: bool,
}

fn write_rows<W: Write>(out: &mut W, values: &[f64], rank: usize) -> std::io::Result<()> {
    for row in values.chunks(rank) {
        let mut first = true;
        for v in row {
            if !first {
                out.write_all(b"\t")?;
            }
            write!(out, "{v}")?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_model<W: Write>(
    mut out: W,
    state: &FactorState,
    labels: &LabelMap,
    checkpoint: bool,
) -> std::io::Result<()> {
    let (n, f) = (state.node_count(), state.rank());
    writeln!(out, "{MAGIC}\t{VERSION}\t{n}\t{f}")?;
    write_rows(&mut out, state.a(), f)?;
    writeln!(out, "{LABELS}")?;
    for (i, l) in labels.labels().iter().enumerate() {
        writeln!(out, "{i}\t{l}")?;
    }
    if checkpoint {
        writeln!(out, "{CHECKPOINT}")?;
        write_rows(&mut out, state.x(), f)?;
        write_rows(&mut out, state.w(), f)?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<Option<String>, FormatError> {
        self.line += 1;
        self.inner.next().transpose().map_err(FormatError::from)
    }

    fn expect(&mut self, what: &str) -> Result<String, FormatError> {
        self.next()?.ok_or_else(|| {
            FormatError::syntax(
                self.line,
                format!("unexpected end of file, expected {what}"),
            )
        })
    }

    fn rows(&mut self, n: usize, f: usize) -> Result<Vec<f64>, FormatError> {
        let mut out = Vec::with_capacity(n * f);
        for _ in 0..n {
            let text = self.expect("a factor row")?;
            let before = out.len();
            for field in text.split('\t') {
                let v: f64 = field
                    .parse()
                    .map_err(|_| FormatError::syntax(self.line, format!("bad value `{field}`")))?;
                out.push(v);
            }
            if out.len() - before != f {
                return Err(FormatError::syntax(
                    self.line,
                    format!("expected {f} values, found {}", out.len() - before),
                ));
            }
        }
        Ok(out)
    }
}

pub fn read_model<R: BufRead>(reader: R) -> Result<Model, FormatError> {
    let mut lines = Lines {
        inner: reader.lines(),
        line: 0,
    };
    let header = lines.expect("the header")?;
    let fields: Vec<&str> = header.split('\t').collect();
    if fields.len() != 4 || fields[0] != MAGIC {
        return Err(FormatError::Header("not a PSNL model file".into()));
    }
    if fields[1] != VERSION {
        return Err(FormatError::Header(format!(
            "unsupported model version `{}`",
            fields[1]
        )));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| FormatError::Header(format!("bad header number `{s}`")))
    };
    let (n, f) = (parse(fields[2])?, parse(fields[3])?);
    if f == 0 {
        return Err(FormatError::Header("rank must be at least 1".into()));
    }
    let a = lines.rows(n, f)?;
    if lines.expect(LABELS)? != LABELS {
        return Err(FormatError::syntax(
            lines.line,
            format!("expected {LABELS}"),
        ));
    }
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let text = lines.expect("a label line")?;
        let (idx, label) = text
            .split_once('\t')
            .ok_or_else(|| FormatError::syntax(lines.line, "expected <index>\\t<label>"))?;
        if idx.parse::<usize>().ok() != Some(i) {
            return Err(FormatError::syntax(
                lines.line,
                format!("expected label index {i}"),
            ));
        }
        labels.push(label.to_owned());
    }
    let labels = Arc::new(LabelMap::from_ordered(labels)?);
    let (x, w, has_checkpoint) = match lines.next()? {
        None => (None, None, false),
        Some(l) if l == CHECKPOINT => (Some(lines.rows(n, f)?), Some(lines.rows(n, f)?), true),
        Some(l) if l.is_empty() => (None, None, false),
        Some(_) => {
            return Err(FormatError::syntax(
                lines.line,
                format!("expected {CHECKPOINT}"),
            ))
        }
    };
    let state =
        FactorState::from_parts(n, f, a, x, w).map_err(|e| FormatError::Header(e.to_string()))?;
    Ok(Model {
        state,
        labels,
        has_checkpoint,
    })
}
