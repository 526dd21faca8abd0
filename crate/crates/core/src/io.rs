//! Coordinate text format for sparse tensors.
//!
//! ```text
//! # comment
//! l m n nnz
//! i j k value      (nnz lines, 1-based indices)
//! ```
//!
//! The writer emits entries sorted by `(k, j, i)` and values in shortest
//! round-trip exponent form, so write followed by read is bit-exact.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Dims, DuplicatePolicy, SparseTensor3, TensorOp};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| parse_err(line, format!("{what} '{tok}' is not a non-negative integer")))
}

/// Reads a tensor; `policy` decides whether repeated coordinates are summed
/// or rejected.
pub fn read_coordinate<R: BufRead>(reader: R, policy: DuplicatePolicy) -> Result<SparseTensor3> {
    let mut header: Option<(Dims, usize)> = None;
    let mut triplets = Vec::new();
    let mut seen = HashSet::new();
    let mut last_line = 0;

    for (no, line) in reader.lines().enumerate() {
        let no = no + 1;
        last_line = no;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = text.split_whitespace().collect();
        match header {
            None => {
                if toks.len() != 4 {
                    return Err(parse_err(no, "header must be 'l m n nnz'"));
                }
                let l = parse_usize(toks[0], no, "l")?;
                let m = parse_usize(toks[1], no, "m")?;
                let n = parse_usize(toks[2], no, "n")?;
                let nnz = parse_usize(toks[3], no, "nnz")?;
                if l == 0 || m == 0 || n == 0 {
                    return Err(parse_err(no, "dimensions must be positive"));
                }
                header = Some((Dims::new(l, m, n), nnz));
            }
            Some((dims, nnz)) => {
                if toks.len() != 4 {
                    return Err(parse_err(no, "entry must be 'i j k value'"));
                }
                if triplets.len() == nnz {
                    return Err(parse_err(no, format!("more than the declared {nnz} entries")));
                }
                let mut idx = [0usize; 3];
                for (d, name) in ["i", "j", "k"].iter().enumerate() {
                    let v = parse_usize(toks[d], no, name)?;
                    if v == 0 || v > dims.0[d] {
                        return Err(parse_err(
                            no,
                            format!("index {name} = {v} outside 1..={}", dims.0[d]),
                        ));
                    }
                    idx[d] = v - 1;
                }
                let value: f64 = toks[3]
                    .parse()
                    .map_err(|_| parse_err(no, format!("value '{}' is not a number", toks[3])))?;
                if !value.is_finite() {
                    return Err(parse_err(no, format!("value '{}' is not finite", toks[3])));
                }
                if policy == DuplicatePolicy::Reject && !seen.insert(idx) {
                    return Err(parse_err(
                        no,
                        format!("duplicate coordinate ({}, {}, {})", idx[0] + 1, idx[1] + 1, idx[2] + 1),
                    ));
                }
                triplets.push((idx[0], idx[1], idx[2], value));
            }
        }
    }

    let (dims, nnz) = header.ok_or_else(|| parse_err(last_line.max(1), "missing header 'l m n nnz'"))?;
    if triplets.len() != nnz {
        return Err(parse_err(
            last_line,
            format!("declared {nnz} entries but found {}", triplets.len()),
        ));
    }
    SparseTensor3::from_triplets(dims, triplets, policy)
}

pub fn write_coordinate<W: Write>(mut w: W, t: &SparseTensor3) -> Result<()> {
    let d = t.dims();
    writeln!(w, "{} {} {} {}", d.0[0], d.0[1], d.0[2], t.nnz())?;
    for (i, j, k, v) in t.entries() {
        writeln!(w, "{} {} {} {:e}", i + 1, j + 1, k + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_coordinate_file(path: impl AsRef<Path>, policy: DuplicatePolicy) -> Result<SparseTensor3> {
    read_coordinate(BufReader::new(File::open(path)?), policy)
}

pub fn write_coordinate_file(path: impl AsRef<Path>, t: &SparseTensor3) -> Result<()> {
    write_coordinate(BufWriter::new(File::create(path)?), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor3;

    fn read(s: &str) -> Result<SparseTensor3> {
        read_coordinate(s.as_bytes(), DuplicatePolicy::Sum)
    }

    #[test]
    fn single_entry() {
        let t = read("# one entry\n2 2 2 1\n1 1 1 2.0\n").unwrap();
        assert_eq!(t.nnz(), 1);
        assert_eq!(t.norm_sq().sqrt(), 2.0);
    }

    #[test]
    fn out_of_range_cites_line() {
        match read("2 2 2 1\n3 1 1 1.0\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_summed_or_rejected() {
        let s = "2 2 2 2\n1 2 1 1.5\n1 2 1 2.5\n";
        assert_eq!(read(s).unwrap().get(0, 1, 0), 4.0);
        match read_coordinate(s.as_bytes(), DuplicatePolicy::Reject) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let t = SparseTensor3::from_triplets(
            Dims::new(3, 2, 4),
            vec![(0, 0, 3, 0.1), (2, 1, 0, -1e-300), (1, 1, 2, 1.0 / 3.0)],
            DuplicatePolicy::Reject,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_coordinate(&mut buf, &t).unwrap();
        let back = read_coordinate(buf.as_slice(), DuplicatePolicy::Reject).unwrap();
        assert_eq!(back, t);
    }
}
