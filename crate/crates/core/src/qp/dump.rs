//! Plain-text QP dump for offline debugging.
//!
//! ```text
//! # clfqp qp v1
//! H <rows> <cols>
//! <row-major values, one matrix row per line>
//! f <n> 1
//! ...
//! ```
//!
//! Blocks appear in the order `H f A_eq b_eq A_in b_in lower upper`. Values
//! use `{:.17e}`; infinite bounds are written `inf` / `-inf`. Lines starting
//! with `#` are comments.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use super::QpProblem;
use crate::{Error, Real, Result};

const HEADER: &str = "# clfqp qp v1";
const BLOCKS: [&str; 8] = ["H", "f", "A_eq", "b_eq", "A_in", "b_in", "lower", "upper"];

fn write_block<T: Real, W: Write>(out: &mut W, name: &str, rows: usize, cols: usize, at: impl Fn(usize, usize) -> T) -> std::io::Result<()> {
    writeln!(out, "{name} {rows} {cols}")?;
    for i in 0..rows {
        let line: Vec<String> = (0..cols).map(|j| format!("{:.17e}", at(i, j).as_f64())).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_dump<T: Real, W: Write>(p: &QpProblem<T>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{HEADER}")?;
    let mats = [&p.h, &p.a_eq, &p.a_in];
    let vecs = [&p.f, &p.b_eq, &p.b_in, &p.lower, &p.upper];
    for name in BLOCKS {
        match name {
            "H" | "A_eq" | "A_in" => {
                let m = mats[["H", "A_eq", "A_in"].iter().position(|n| *n == name).unwrap()];
                write_block(&mut out, name, m.nrows(), m.ncols(), |i, j| m[(i, j)])?;
            }
            _ => {
                let v = vecs[["f", "b_eq", "b_in", "lower", "upper"].iter().position(|n| *n == name).unwrap()];
                write_block(&mut out, name, v.len(), 1, |i, _| v[i])?;
            }
        }
    }
    Ok(())
}

pub fn read_dump<T: Real, R: BufRead>(input: R) -> Result<QpProblem<T>> {
    let mut lines = input
        .lines()
        .map(|l| l.map_err(|e| Error::Problem(format!("reading QP dump: {e}"))))
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#')));
    let mut blocks: Vec<DMatrix<T>> = Vec::new();
    for name in BLOCKS {
        let head = lines
            .next()
            .ok_or_else(|| Error::Problem(format!("QP dump ends before block {name}")))??;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != name {
            return Err(Error::Problem(format!("QP dump: expected header '{name} <rows> <cols>', got {head:?}")));
        }
        let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::Problem(format!("QP dump: bad dimension {s:?} in block {name}")));
        let (rows, cols) = (dim(parts[1])?, dim(parts[2])?);
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::Problem(format!("QP dump: block {name} truncated at row {i}")))??;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != cols {
                return Err(Error::Problem(format!("QP dump: block {name} row {i} has {} values, expected {cols}", vals.len())));
            }
            for (j, v) in vals.iter().enumerate() {
                let x: f64 = v.parse().map_err(|_| Error::Problem(format!("QP dump: bad value {v:?} in block {name}")))?;
                m[(i, j)] = T::lit(x);
            }
        }
        blocks.push(m);
    }
    let col = |m: &DMatrix<T>| DVector::from_column_slice(m.as_slice());
    let p = QpProblem {
        h: blocks[0].clone(),
        f: col(&blocks[1]),
        a_eq: blocks[2].clone(),
        b_eq: col(&blocks[3]),
        a_in: blocks[4].clone(),
        b_in: col(&blocks[5]),
        lower: col(&blocks[6]),
        upper: col(&blocks[7]),
    };
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let p = QpProblem::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0 / 3.0]),
            DVector::from_vec(vec![-1.0, std::f64::consts::PI]),
        )
        .with_inequalities(DMatrix::from_row_slice(1, 2, &[1.0, -1.0]), DVector::from_vec(vec![0.25]))
        .with_bounds(
            DVector::from_vec(vec![f64::NEG_INFINITY, -1.0]),
            DVector::from_vec(vec![1e-300, f64::INFINITY]),
        );
        let mut buf = Vec::new();
        write_dump(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(HEADER));
        assert!(text.contains("A_eq 0 2"));
        let back: QpProblem<f64> = read_dump(buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let text = "# clfqp qp v1\nH 1 1\n2.0\nf 1 1\n";
        assert!(read_dump::<f64, _>(text.as_bytes()).is_err());
    }
}
