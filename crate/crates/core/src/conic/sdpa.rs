//! Sparse SDPA text format.
//!
//! The SDPA primal `min c'x s.t. sum_k x_k F_k - F_0 PSD` is the dual of our
//! standard form once `F_0 = -C`, `F_k = A_k` and `c = b`; the objective is
//! therefore written with its sign flipped, which is also what CSDP expects
//! (it maximizes `tr(F_0 X)`). Comment lines start with `"` or `*`; the
//! program name and tag travel in `* name:` and `* tag:` comments.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{ConicProgram, ConicSolution, LinearFunctional, SolveStatus};
use crate::error::{Error, Result};

pub fn export_sdpa(prog: &ConicProgram) -> String {
    let prog = prog.canonical();
    let mut out = String::new();
    if !prog.name.is_empty() {
        let _ = writeln!(out, "* name: {}", prog.name.replace('\n', " "));
    }
    if !prog.tag.is_empty() {
        let _ = writeln!(out, "* tag: {}", prog.tag.replace('\n', " "));
    }
    let _ = writeln!(out, "{}", prog.num_equalities());
    let _ = writeln!(out, "{}", prog.block_sizes().len());
    let sizes: Vec<String> = prog.block_sizes().iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let rhs: Vec<String> = prog.equalities().iter().map(|e| format!("{}", e.rhs)).collect();
    let _ = writeln!(out, "{}", rhs.join(" "));
    for e in prog.objective().entries() {
        let _ = writeln!(out, "0 {} {} {} {}", e.block + 1, e.row + 1, e.col + 1, -e.value);
    }
    for (k, eq) in prog.equalities().iter().enumerate() {
        for e in eq.functional.entries() {
            let _ = writeln!(out, "{} {} {} {} {}", k + 1, e.block + 1, e.row + 1, e.col + 1, e.value);
        }
    }
    out
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Whitespace tokens of a line after treating `{ } ( ) ,` as separators.
fn tokens(line: &str, lineno: usize) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let is_sep = |c: char| c.is_whitespace() || matches!(c, '{' | '}' | '(' | ')' | ',' | '=');
    for (pos, c) in line.char_indices() {
        match (start, is_sep(c)) {
            (None, false) => start = Some(pos),
            (Some(s), true) => {
                out.push(Token {
                    text: &line[s..pos],
                    line: lineno,
                    column: line[..s].chars().count() + 1,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            line: lineno,
            column: line[..s].chars().count() + 1,
        });
    }
    out
}

fn int_token(t: &Token<'_>, what: &str) -> Result<i64> {
    t.text
        .parse::<i64>()
        .map_err(|_| parse_err(t.line, t.column, format!("expected integer {what}, found '{}'", t.text)))
}

fn float_token(t: &Token<'_>, what: &str) -> Result<f64> {
    // Fortran-style exponents appear in some published files
    t.text
        .replace(['D', 'd'], "e")
        .parse::<f64>()
        .map_err(|_| parse_err(t.line, t.column, format!("expected number {what}, found '{}'", t.text)))
}

pub fn import_sdpa(text: &str) -> Result<ConicProgram> {
    let mut name = String::new();
    let mut tag = String::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim_start();
        if let Some(rest) = trimmed.strip_prefix('*') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("name:") {
                name = v.trim().to_string();
            } else if let Some(v) = rest.strip_prefix("tag:") {
                tag = v.trim().to_string();
            }
            continue;
        }
        if trimmed.starts_with('"') || trimmed.is_empty() {
            continue;
        }
        lines.push((i + 1, raw));
    }
    let eof_line = text.lines().count().max(1);
    let mut cursor = lines.iter();

    let mut next_line = |what: &str| -> Result<Vec<Token<'_>>> {
        match cursor.next() {
            Some(&(no, raw)) => Ok(tokens(raw, no)),
            None => Err(parse_err(eof_line, 1, format!("unexpected end of input, expected {what}"))),
        }
    };

    let header = next_line("number of constraints")?;
    let m = int_token(&header[0], "constraint count")?;
    if m < 0 {
        return Err(parse_err(header[0].line, header[0].column, "negative constraint count"));
    }
    let m = m as usize;
    let header = next_line("number of blocks")?;
    let nblocks = int_token(&header[0], "block count")?;
    if nblocks <= 0 {
        return Err(parse_err(header[0].line, header[0].column, "block count must be positive"));
    }
    let nblocks = nblocks as usize;

    let mut sizes = Vec::with_capacity(nblocks);
    while sizes.len() < nblocks {
        for t in next_line("block sizes")? {
            if sizes.len() == nblocks {
                break;
            }
            let s = int_token(&t, "block size")?;
            if s == 0 {
                return Err(parse_err(t.line, t.column, "block size must be nonzero"));
            }
            // negative sizes mark diagonal blocks; they are stored densely
            sizes.push(s.unsigned_abs() as usize);
        }
    }

    let mut rhs = Vec::with_capacity(m);
    while rhs.len() < m {
        for t in next_line("right-hand side")? {
            if rhs.len() == m {
                break;
            }
            rhs.push(float_token(&t, "in right-hand side")?);
        }
    }

    let mut objective = LinearFunctional::new();
    let mut funcs = vec![LinearFunctional::new(); m];
    for &(no, raw) in cursor {
        let toks = tokens(raw, no);
        if toks.len() < 5 {
            let col = toks.last().map(|t| t.column + t.text.len()).unwrap_or(1);
            return Err(parse_err(no, col, format!("expected 5 fields, found {}", toks.len())));
        }
        let matno = int_token(&toks[0], "matrix number")?;
        let blk = int_token(&toks[1], "block number")?;
        let i = int_token(&toks[2], "row index")?;
        let j = int_token(&toks[3], "column index")?;
        let v = float_token(&toks[4], "entry value")?;
        if matno < 0 || matno as usize > m {
            return Err(parse_err(no, toks[0].column, format!("matrix number {matno} out of range 0..={m}")));
        }
        if blk < 1 || blk as usize > nblocks {
            return Err(parse_err(no, toks[1].column, format!("block number {blk} out of range 1..={nblocks}")));
        }
        let size = sizes[blk as usize - 1] as i64;
        for (idx, t) in [(i, &toks[2]), (j, &toks[3])] {
            if idx < 1 || idx > size {
                return Err(parse_err(no, t.column, format!("index {idx} out of range 1..={size}")));
            }
        }
        let (b, r, c) = (blk as usize - 1, i as usize - 1, j as usize - 1);
        if matno == 0 {
            objective.add(b, r, c, -v);
        } else {
            funcs[matno as usize - 1].add(b, r, c, v);
        }
    }

    let mut prog = ConicProgram::new(sizes).with_name(name, tag);
    prog.set_objective(objective);
    for (f, r) in funcs.into_iter().zip(rhs) {
        prog.add_equality(f, r);
    }
    Ok(prog.canonical())
}

/// Reads a CSDP solution file (`y` on the first line, then `1 blk i j v`
/// entries of the dual slack and `2 blk i j v` entries of the primal matrix)
/// for a program exported by [`export_sdpa`]. The status is left `Optimal`;
/// callers are expected to verify it.
pub fn read_csdp_solution(text: &str, prog: &ConicProgram) -> Result<ConicSolution> {
    let sizes = prog.block_sizes();
    let m = prog.num_equalities();
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l));

    let mut y = Vec::with_capacity(m);
    while y.len() < m {
        let Some((no, raw)) = lines.next() else {
            return Err(parse_err(text.lines().count().max(1), 1, "solution ends before the dual vector"));
        };
        for t in tokens(raw, no) {
            // CSDP's multipliers are those of the sign-flipped objective
            y.push(-float_token(&t, "in dual vector")?);
        }
    }
    if y.len() != m {
        return Err(parse_err(1, 1, format!("dual vector has {} entries, expected {m}", y.len())));
    }

    let mut x: Vec<DMatrix<f64>> = sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let mut s: Vec<DMatrix<f64>> = sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    for (no, raw) in lines {
        let toks = tokens(raw, no);
        if toks.len() < 5 {
            return Err(parse_err(no, 1, format!("expected 5 fields, found {}", toks.len())));
        }
        let which = int_token(&toks[0], "matrix selector")?;
        let blk = int_token(&toks[1], "block number")? as usize;
        let i = int_token(&toks[2], "row index")? as usize;
        let j = int_token(&toks[3], "column index")? as usize;
        let v = float_token(&toks[4], "entry value")?;
        if blk < 1 || blk > sizes.len() || i < 1 || j < 1 || i > sizes[blk - 1] || j > sizes[blk - 1] {
            return Err(parse_err(no, toks[1].column, "coordinate out of range"));
        }
        let target = match which {
            1 => &mut s[blk - 1],
            2 => &mut x[blk - 1],
            _ => return Err(parse_err(no, toks[0].column, format!("unknown matrix selector {which}"))),
        };
        target[(i - 1, j - 1)] = v;
        target[(j - 1, i - 1)] = v;
    }

    Ok(ConicSolution {
        status: SolveStatus::Optimal,
        primal_objective: prog.objective().apply(&x),
        dual_objective: prog.equalities().iter().zip(&y).map(|(e, v)| e.rhs * v).sum(),
        x,
        y,
        s,
        iterations: 0,
    })
}
