//! Trial log: `<index>\t<lambda>\t<gamma>\t<mu>\t<eta>\t<b>\t<status>`, one
//! line per trial, written as each trial is committed.

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use psnl_core::{HyperParams, Trial, TrialStatus};

use crate::error::FormatError;

pub fn format_trial(t: &Trial) -> String {
    let p = &t.params;
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
        t.index,
        p.lambda,
        p.gamma,
        p.mu,
        p.eta,
        t.loss,
        t.status.as_str()
    )
}

/// Appends trials to a log file, flushing after every line so an
/// interrupted search leaves a readable prefix.
pub struct TrialLog {
    out: BufWriter<File>,
}

impl TrialLog {
    /// Creates (or truncates) the log at `path`.
    pub fn create(path: &Path) -> Result<Self, FormatError> {
        let file = File::create(path).map_err(|e| FormatError::at_path(path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, t: &Trial) -> std::io::Result<()> {
        writeln!(self.out, "{}", format_trial(t))?;
        self.out.flush()
    }
}

pub fn parse_trial(line: &str, line_no: usize) -> Result<Trial, FormatError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 7 {
        return Err(FormatError::syntax(
            line_no,
            format!("expected 7 fields, found {}", fields.len()),
        ));
    }
    let num = |i: usize| {
        fields[i]
            .parse::<f64>()
            .map_err(|_| FormatError::syntax(line_no, format!("bad number `{}`", fields[i])))
    };
    let index = fields[0]
        .parse()
        .map_err(|_| FormatError::syntax(line_no, format!("bad trial index `{}`", fields[0])))?;
    let status = match fields[6] {
        "ok" => TrialStatus::Ok,
        "diverged" => TrialStatus::Diverged,
        other => {
            return Err(FormatError::syntax(
                line_no,
                format!("unknown status `{other}`"),
            ))
        }
    };
    Ok(Trial {
        index,
        params: HyperParams {
            lambda: num(1)?,
            gamma: num(2)?,
            mu: num(3)?,
            eta: num(4)?,
        },
        loss: num(5)?,
        status,
    })
}

pub fn read_trials<R: BufRead>(reader: R) -> Result<Vec<Trial>, FormatError> {
    let mut trials = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        trials.push(parse_trial(&line, i + 1)?);
    }
    Ok(trials)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip() {
        let t = Trial {
            index: 3,
            params: HyperParams {
                lambda: 0.0009765625,
                gamma: 0.1,
                mu: 2.5,
                eta: 1.0,
            },
            loss: 1000.0,
            status: TrialStatus::Diverged,
        };
        let line = format_trial(&t);
        assert_eq!(line, "3\t0.0009765625\t0.1\t2.5\t1\t1000\tdiverged");
        assert_eq!(parse_trial(&line, 1).unwrap(), t);
    }

    #[test]
    fn file_is_truncated_then_appended() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.tsv");
        std::fs::write(&path, "stale\n").unwrap();
        let mut log = TrialLog::create(&path).unwrap();
        let t = Trial {
            index: 0,
            params: HyperParams::default(),
            loss: 0.5,
            status: TrialStatus::Ok,
        };
        log.append(&t).unwrap();
        log.append(&Trial { index: 1, ..t }).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back = read_trials(text.as_bytes()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].index, 1);
    }
}
