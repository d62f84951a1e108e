//! Sparse SDPA text (`.dat-s`) for cross-checking against external solvers.
//!
//! Our primal `min <C,X> s.t. <A_k,X> = b_k` is the SDPA dual
//! `max <F_0,Y> s.t. <F_k,Y> = c_k`, so `F_0 = -C`, `F_k = A_k`, `c = b`.
//! Free variables are split `u = u+ - u-` into one trailing diagonal block.
//! Indices are 1-based; every float is written with 17 significant digits.

use std::fmt::Write;

use vecstab_core::sdp::{LinearForm, SdpConstraint, SdpProblem, Sense, SymEntry};

use crate::{Error, Result};

pub fn export(p: &SdpProblem) -> String {
    let mut s = String::new();
    let nfree = p.free_vars;
    let nblocks = p.blocks.len() + usize::from(nfree > 0);
    let _ = writeln!(s, "\"sparse SDPA written by vecstab");
    let _ = writeln!(s, "{} = constraints", p.constraints.len());
    let _ = writeln!(s, "{nblocks} = blocks");
    let mut sizes: Vec<String> = p.blocks.iter().map(|b| b.to_string()).collect();
    if nfree > 0 {
        sizes.push(format!("-{}", 2 * nfree));
    }
    let _ = writeln!(s, "{}", sizes.join(" "));
    let b: Vec<String> = p.constraints.iter().map(|c| format!("{:.16e}", c.rhs)).collect();
    let _ = writeln!(s, "{}", b.join(" "));
    let free_block = p.blocks.len() + 1;
    let mut form = |mat: usize, f: &LinearForm, sign: f64| {
        for e in &f.entries {
            let _ = writeln!(s, "{mat} {} {} {} {:.16e}", e.block + 1, e.row + 1, e.col + 1, sign * e.value);
        }
        for &(v, c) in &f.free {
            let _ = writeln!(s, "{mat} {free_block} {} {} {:.16e}", 2 * v + 1, 2 * v + 1, sign * c);
            let _ = writeln!(s, "{mat} {free_block} {} {} {:.16e}", 2 * v + 2, 2 * v + 2, -sign * c);
        }
    };
    form(0, &p.objective, -1.0);
    for (k, c) in p.constraints.iter().enumerate() {
        form(k + 1, &c.form, 1.0);
    }
    s
}

fn numbers(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || "{}(),".contains(c)).filter(|t| !t.is_empty())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(format!("sparse SDPA: {}", msg.into()))
}

fn int<T: std::str::FromStr>(t: Option<&str>, what: &str) -> Result<T> {
    t.and_then(|t| t.parse().ok()).ok_or_else(|| bad(format!("expected {what}")))
}

/// Reads a sparse SDPA problem. Diagonal (negative-size) blocks become runs
/// of 1x1 blocks, so a file written by [`export`] with free variables comes
/// back as the equivalent split problem.
pub fn import(text: &str) -> Result<SdpProblem> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));
    let m: usize = int(lines.next().and_then(|l| numbers(l).next()), "constraint count")?;
    let nb: usize = int(lines.next().and_then(|l| numbers(l).next()), "block count")?;
    let mut sizes: Vec<i64> = Vec::with_capacity(nb);
    while sizes.len() < nb {
        let l = lines.next().ok_or_else(|| bad("missing block sizes"))?;
        for t in numbers(l) {
            if sizes.len() < nb {
                sizes.push(int(Some(t), "block size")?);
            }
        }
    }
    let mut rhs = Vec::with_capacity(m);
    while rhs.len() < m {
        let l = lines.next().ok_or_else(|| bad("missing right-hand side"))?;
        for t in numbers(l) {
            rhs.push(t.parse::<f64>().map_err(|_| bad(format!("bad number `{t}`")))?);
        }
    }
    if rhs.len() != m {
        return Err(bad("right-hand side length"));
    }
    // Block k of the file maps to `start[k]` in ours; diagonal blocks expand.
    let mut blocks = Vec::new();
    let mut start = Vec::with_capacity(nb);
    for &sz in &sizes {
        start.push(blocks.len());
        match sz {
            0 => return Err(bad("zero block size")),
            n if n > 0 => blocks.push(n as usize),
            n => blocks.extend(std::iter::repeat_n(1, n.unsigned_abs() as usize)),
        }
    }
    let mut forms = vec![LinearForm::default(); m + 1];
    for l in lines {
        let mut t = numbers(l);
        let mat: usize = int(t.next(), "matrix number")?;
        let blk: usize = int(t.next(), "block number")?;
        let i: usize = int(t.next(), "row")?;
        let j: usize = int(t.next(), "column")?;
        let v: f64 = int(t.next(), "value")?;
        if mat > m || blk == 0 || blk > nb || i == 0 || j == 0 {
            return Err(bad(format!("entry `{l}` out of range")));
        }
        let sz = sizes[blk - 1];
        let (block, row, col) = if sz > 0 {
            if i > sz as usize || j > sz as usize {
                return Err(bad(format!("entry `{l}` out of range")));
            }
            (start[blk - 1], i - 1, j - 1)
        } else {
            if i != j || i > sz.unsigned_abs() as usize {
                return Err(bad(format!("entry `{l}` is not on the diagonal block")));
            }
            (start[blk - 1] + i - 1, 0, 0)
        };
        let v = if mat == 0 { -v } else { v };
        forms[mat].entries.push(SymEntry::new(block, row, col, v));
    }
    let mut forms = forms.into_iter();
    let objective = forms.next().expect("objective form");
    let sense = if objective.entries.is_empty() { Sense::Feasibility } else { Sense::Minimize };
    let p = SdpProblem {
        blocks,
        free_vars: 0,
        constraints: forms.zip(rhs).map(|(form, rhs)| SdpConstraint { form, rhs }).collect(),
        objective,
        sense,
    };
    p.validate().map_err(|e| bad(e.to_string()))?;
    Ok(p)
}
