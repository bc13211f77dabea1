//! SDPA sparse format (`.dat-s`): a comment line, `m`, the number of
//! blocks, the block sizes, the objective vector, then one
//! `matrix block row col value` line per upper-triangular nonzero.

use std::path::Path;

use lieccm::sdpa::SdpaProblem;
use lieccm::Matrix;

use crate::csvio::format_float;
use crate::error::{Result, ToolError};

pub fn write_sdpa(problem: &SdpaProblem, comment: &str) -> String {
    let mut out = String::new();
    out.push('"');
    out.push_str(&comment.replace('\n', " "));
    out.push('\n');
    out.push_str(&format!("{} = mDIM\n", problem.n_vars()));
    out.push_str(&format!("{} = nBLOCK\n", problem.n_blocks()));
    let sizes: Vec<String> = problem.block_sizes.iter().map(|s| s.to_string()).collect();
    out.push_str(&format!("{} = bLOCKsTRUCT\n", sizes.join(" ")));
    let c: Vec<String> = problem.c.iter().map(|v| format_float(*v)).collect();
    out.push_str(&c.join(" "));
    out.push('\n');
    for (mat, blocks) in problem.matrices.iter().enumerate() {
        for (b, block) in blocks.iter().enumerate() {
            for i in 0..block.nrows() {
                for j in i..block.ncols() {
                    let v = block[(i, j)];
                    if v != 0.0 {
                        out.push_str(&format!(
                            "{} {} {} {} {}\n",
                            mat,
                            b + 1,
                            i + 1,
                            j + 1,
                            format_float(v)
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Numeric tokens of a line, with the punctuation SDPA files may use as
/// separators removed and anything after the first non-number dropped.
fn numbers(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || ",{}()".contains(c))
        .filter(|t| !t.is_empty())
        .take_while(|t| t.parse::<f64>().is_ok())
        .collect()
}

pub fn parse_sdpa(text: &str, path: &Path) -> Result<SdpaProblem> {
    let err = |line: usize, msg: String| ToolError::parse(path, Some(line), msg);
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim_start().starts_with(['"', '*']) && !l.trim().is_empty());

    let mut header = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(text.lines().count(), format!("missing {what}")))
    };
    let (ln, l) = header("mDIM")?;
    let m: usize = numbers(l)
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| err(ln, "bad mDIM".into()))?;
    let (ln, l) = header("nBLOCK")?;
    let n_blocks: usize = numbers(l)
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| err(ln, "bad nBLOCK".into()))?;
    let (ln, l) = header("bLOCKsTRUCT")?;
    let raw: Vec<i64> = numbers(l).iter().filter_map(|t| t.parse().ok()).collect();
    if raw.len() != n_blocks || raw.contains(&0) {
        return Err(err(ln, format!("expected {n_blocks} nonzero block sizes")));
    }
    // Negative sizes denote diagonal blocks; stored densely here.
    let block_sizes: Vec<usize> = raw.iter().map(|s| s.unsigned_abs() as usize).collect();
    let (ln, l) = header("objective")?;
    let c: Vec<f64> = numbers(l).iter().filter_map(|t| t.parse().ok()).collect();
    if c.len() != m {
        return Err(err(ln, format!("expected {m} objective entries, found {}", c.len())));
    }

    let mut matrices: Vec<Vec<Matrix>> = (0..=m)
        .map(|_| block_sizes.iter().map(|&s| Matrix::zeros(s, s)).collect())
        .collect();
    for (ln, l) in lines {
        let t = numbers(l);
        if t.len() < 5 {
            return Err(err(ln, "entry needs `matrix block row col value`".into()));
        }
        let idx: Vec<usize> = t[..4]
            .iter()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(ln, "entry indices must be non-negative integers".into()))?;
        let v: f64 = t[4].parse().map_err(|_| err(ln, "bad value".into()))?;
        let (mat, b, i, j) = (idx[0], idx[1], idx[2], idx[3]);
        if mat > m || b == 0 || b > n_blocks {
            return Err(err(ln, format!("matrix {mat} block {b} out of range")));
        }
        let size = block_sizes[b - 1];
        if i == 0 || j == 0 || i > size || j > size || (raw[b - 1] < 0 && i != j) {
            return Err(err(ln, format!("entry ({i}, {j}) outside block {b}")));
        }
        let block = &mut matrices[mat][b - 1];
        block[(i - 1, j - 1)] = v;
        block[(j - 1, i - 1)] = v;
    }
    Ok(SdpaProblem {
        block_sizes,
        c,
        matrices,
    })
}
