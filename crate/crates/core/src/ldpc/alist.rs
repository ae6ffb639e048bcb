//! MacKay alist text format for parity-check matrices.
//!
//! ```text
//! n m
//! max_col_weight max_row_weight
//! <n column weights>
//! <m row weights>
//! <n lines: 1-based row indices of each column, zero padded>
//! <m lines: 1-based column indices of each row, zero padded>
//! ```

use std::fmt::Write as _;

use super::ParityCheck;
use crate::error::{Error, Result};

/// Largest dimension accepted from a file; guards allocations on hostile input.
const MAX_DIM: usize = 1 << 20;

pub fn write_alist(parity: &ParityCheck) -> String {
    let cols = parity.columns();
    let rows = parity.rows();
    let max_c = cols.iter().map(Vec::len).max().unwrap_or(0);
    let max_r = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", parity.n(), parity.m());
    let _ = writeln!(out, "{max_c} {max_r}");
    let join =
        |v: &mut dyn Iterator<Item = usize>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "{}", join(&mut cols.iter().map(Vec::len)));
    let _ = writeln!(out, "{}", join(&mut rows.iter().map(Vec::len)));
    for (list, width) in cols
        .iter()
        .map(|c| (c, max_c))
        .chain(rows.iter().map(|r| (r, max_r)))
    {
        let padded = list
            .iter()
            .map(|&i| i + 1)
            .chain(std::iter::repeat_n(0, width - list.len()));
        let _ = writeln!(out, "{}", join(&mut padded.into_iter()));
    }
    out
}

struct Tokens<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    current: Vec<&'a str>,
    pos: usize,
    line_no: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate().peekable(),
            current: Vec::new(),
            pos: 0,
            line_no: 0,
        }
    }

    /// Reads the next non-empty line as a list of integers.
    fn line(&mut self) -> Result<Vec<usize>> {
        loop {
            let Some((i, raw)) = self.lines.next() else {
                return Err(Error::Parse {
                    line: self.line_no + 1,
                    msg: "unexpected end of file".into(),
                });
            };
            self.line_no = i + 1;
            self.current = raw.split_whitespace().collect();
            self.pos = 0;
            if !self.current.is_empty() {
                break;
            }
        }
        let line = self.line_no;
        std::mem::take(&mut self.current)
            .into_iter()
            .map(|t| {
                t.parse::<usize>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("'{t}' is not a non-negative integer"),
                })
            })
            .collect()
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line_no,
            msg: msg.into(),
        }
    }
}

fn expect_len(tokens: &Tokens<'_>, v: &[usize], len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(tokens.err(format!("{what}: expected {len} values, found {}", v.len())));
    }
    Ok(())
}

/// Parses an alist description, checking that the column and row lists agree.
pub fn parse_alist(text: &str) -> Result<ParityCheck> {
    let mut t = Tokens::new(text);
    let dims = t.line()?;
    expect_len(&t, &dims, 2, "dimensions")?;
    let (n, m) = (dims[0], dims[1]);
    if n == 0 || m == 0 || n > MAX_DIM || m > MAX_DIM {
        return Err(t.err(format!("unsupported dimensions {n}x{m}")));
    }
    let maxw = t.line()?;
    expect_len(&t, &maxw, 2, "maximum weights")?;
    let (max_c, max_r) = (maxw[0], maxw[1]);
    if max_c > m || max_r > n {
        return Err(t.err("maximum weight exceeds matrix dimension"));
    }
    let col_w = t.line()?;
    expect_len(&t, &col_w, n, "column weights")?;
    let row_w = t.line()?;
    expect_len(&t, &row_w, m, "row weights")?;
    if col_w.iter().any(|&w| w > max_c) || row_w.iter().any(|&w| w > max_r) {
        return Err(t.err("a weight exceeds the declared maximum"));
    }

    let mut cols: Vec<Vec<usize>> = Vec::with_capacity(n);
    for &w in &col_w {
        cols.push(read_list(&mut t, w, max_c, m)?);
    }
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(m);
    for &w in &row_w {
        rows.push(read_list(&mut t, w, max_r, n)?);
    }

    let parity = ParityCheck::from_rows(n, rows).map_err(|e| t.err(e.to_string()))?;
    for (c, list) in cols.iter_mut().enumerate() {
        list.sort_unstable();
        if parity.column(c) != list.as_slice() {
            return Err(t.err(format!("column {} disagrees with the row lists", c + 1)));
        }
    }
    Ok(parity)
}

/// Reads `weight` 1-based indices (≤ `bound`) followed by zero padding.
fn read_list(t: &mut Tokens<'_>, weight: usize, max: usize, bound: usize) -> Result<Vec<usize>> {
    let v = t.line()?;
    // some writers omit the zero padding
    if v.len() != max && v.len() != weight {
        return Err(t.err(format!("expected {max} entries, found {}", v.len())));
    }
    let (idx, pad) = v.split_at(weight.min(v.len()));
    if pad.iter().any(|&x| x != 0) {
        return Err(t.err("non-zero entry in padding"));
    }
    idx.iter()
        .map(|&i| {
            if i == 0 || i > bound {
                Err(t.err(format!("index {i} outside 1..={bound}")))
            } else {
                Ok(i - 1)
            }
        })
        .collect()
}
