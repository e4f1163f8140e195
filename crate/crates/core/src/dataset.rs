//! Binary classification data: LIBSVM text files and a synthetic stand-in.

use std::io::BufRead;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{input, BundleError, Result};
use crate::oracle::SvmProblem;

/// Rows of `x` are samples; labels are ±1.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn svm(&self, lambda: f64) -> Result<SvmProblem> {
        SvmProblem::new(self.x.clone(), self.y.clone(), lambda)
    }
}

/// Parse `label idx:value ...` lines (1-based indices). Positive labels map
/// to `+1`, everything else to `−1`.
pub fn parse_libsvm<R: BufRead>(reader: R, name: &str) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| BundleError::Parse(format!("{name}:{}: {what}", lineno + 1));
        let mut parts = line.split_whitespace();
        let label: f64 = parts.next().unwrap_or("").parse().map_err(|_| bad("bad label"))?;
        let mut row = Vec::new();
        for tok in parts {
            let (i, v) = tok.split_once(':').ok_or_else(|| bad("expected index:value"))?;
            let i: usize = i.parse().map_err(|_| bad("bad feature index"))?;
            if i == 0 {
                return Err(bad("feature indices are 1-based"));
            }
            let v: f64 = v.parse().map_err(|_| bad("bad feature value"))?;
            dim = dim.max(i);
            row.push((i - 1, v));
        }
        labels.push(if label > 0.0 { 1.0 } else { -1.0 });
        rows.push(row);
    }
    if rows.is_empty() {
        return input(format!("{name}: no samples"));
    }
    let mut x = DMatrix::zeros(rows.len(), dim);
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            x[(r, c)] = v;
        }
    }
    Ok(Dataset { name: name.to_string(), x, y: DVector::from_vec(labels) })
}

pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    parse_libsvm(std::io::BufReader::new(file), name)
}

/// Drop all-zero features, scale every feature to max-abs 1 and append a
/// constant feature for the bias.
pub fn preprocess(ds: &Dataset) -> Dataset {
    let keep: Vec<usize> = (0..ds.d()).filter(|&j| ds.x.column(j).amax() > 0.0).collect();
    let n = ds.n();
    let mut x = DMatrix::from_element(n, keep.len() + 1, 1.0);
    for (c, &j) in keep.iter().enumerate() {
        let col = ds.x.column(j);
        let s = col.amax();
        for i in 0..n {
            x[(i, c)] = col[i] / s;
        }
    }
    Dataset { name: ds.name.clone(), x, y: ds.y.clone() }
}

/// Deterministic non-separable stand-in: Gaussian features, labels from a
/// random hyperplane with `flip` of them flipped.
pub fn synthetic_classification(n: usize, d: usize, flip: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 || !(0.0..=0.5).contains(&flip) {
        return input(format!("synthetic data needs n, d >= 1 and flip in [0, 0.5] (got {n}, {d}, {flip})"));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit std");
    let mut rng = crate::rng::stream(seed, "svm-synthetic/w");
    let w = DVector::from_fn(d, |_, _| normal.sample(&mut rng));
    let mut rng = crate::rng::stream(seed, "svm-synthetic/x");
    let x = DMatrix::from_fn(n, d, |_, _| normal.sample(&mut rng));
    let mut rng = crate::rng::stream(seed, "svm-synthetic/flip");
    let scores = &x * &w;
    let y = DVector::from_fn(n, |i, _| {
        let s = if scores[i] >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < flip {
            -s
        } else {
            s
        }
    });
    Ok(preprocess(&Dataset { name: format!("synthetic-{n}x{d}"), x, y }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sparse_lines() {
        let text = "+1 1:0.5 3:-2\n-1 2:1 # comment\n\n0 3:4\n";
        let ds = parse_libsvm(text.as_bytes(), "toy").unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.d(), 3);
        assert_eq!(ds.y.as_slice(), &[1.0, -1.0, -1.0]);
        assert_eq!(ds.x[(0, 2)], -2.0);
        assert_eq!(ds.x[(1, 0)], 0.0);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_libsvm("1 0:1\n".as_bytes(), "t").is_err());
        assert!(parse_libsvm("1 a:1\n".as_bytes(), "t").is_err());
        assert!(parse_libsvm("x 1:1\n".as_bytes(), "t").is_err());
        assert!(parse_libsvm("".as_bytes(), "t").is_err());
    }

    #[test]
    fn preprocessing_scales_and_adds_bias() {
        let ds = parse_libsvm("1 1:2 3:-4\n-1 1:1\n".as_bytes(), "t").unwrap();
        let p = preprocess(&ds);
        // Feature 2 is all zero and dropped.
        assert_eq!(p.d(), 3);
        assert_eq!(p.x.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, -1.0, 1.0]);
        assert_eq!(p.x[(1, 0)], 0.5);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = synthetic_classification(30, 5, 0.1, 3).unwrap();
        let b = synthetic_classification(30, 5, 0.1, 3).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.d(), 6);
        assert!(a.x.amax() <= 1.0);
    }
}
