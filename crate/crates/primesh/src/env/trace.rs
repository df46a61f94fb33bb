use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// One step of an episode trace. Primitive episodes carry
/// (global IoU, local IoU, deleted count) in `extra`; mesh episodes carry
/// (IoU,).
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub action: usize,
    pub reward: f64,
    pub extra: Vec<f64>,
}

/// Line-delimited tab-separated episode log with a named header.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, extra_columns: &[&str]) -> Result<Self> {
        write!(out, "step\taction\treward")?;
        for c in extra_columns {
            write!(out, "\t{c}")?;
        }
        writeln!(out)?;
        Ok(Self { out })
    }

    pub fn record(&mut self, row: &TraceRow) -> Result<()> {
        write!(self.out, "{}\t{}\t{:.12}", row.step, row.action, row.reward)?;
        for v in &row.extra {
            write!(self.out, "\t{v:.12}")?;
        }
        writeln!(self.out)?;
        Ok(())
    }
}

/// Parses a trace written by `TraceWriter`; returns (extra column names, rows).
pub fn parse_trace<R: BufRead>(input: R) -> Result<(Vec<String>, Vec<TraceRow>)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format("trace", "missing header"))??;
    let columns: Vec<&str> = header.split('\t').collect();
    if columns.len() < 3 || columns[0] != "step" || columns[1] != "action" || columns[2] != "reward" {
        return Err(Error::format("trace", "unexpected header"));
    }
    let extra_names: Vec<String> = columns[3..].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns.len() {
            return Err(Error::format("trace", format!("row {} width mismatch", lineno + 2)));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::format("trace", format!("bad number {s}")))
        };
        rows.push(TraceRow {
            step: fields[0].parse().map_err(|_| Error::format("trace", "bad step"))?,
            action: fields[1].parse().map_err(|_| Error::format("trace", "bad action"))?,
            reward: parse_f(fields[2])?,
            extra: fields[3..].iter().map(|s| parse_f(s)).collect::<Result<_>>()?,
        });
    }
    Ok((extra_names, rows))
}
