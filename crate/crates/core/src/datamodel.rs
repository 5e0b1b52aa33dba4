//! Column-major sparse storage, column partitions and dense vector helpers.
//!
//! `A` is `d × n`: columns are the optimization variables `α_i`, rows index the
//! entries of the shared vector `v = Aα`. Only column access is ever needed on the
//! solver path, so the matrix is stored in compressed sparse column form.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ColMatrix {
    n_rows: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    sq_norms: Vec<f64>,
}

impl ColMatrix {
    /// Builds a matrix from per-column `(row, value)` lists. Entries within a column
    /// may arrive in any order; duplicates, out-of-range rows and non-finite values
    /// are rejected.
    pub fn from_columns(n_rows: usize, columns: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut col_ptr = Vec::with_capacity(columns.len() + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for (c, mut col) in columns.into_iter().enumerate() {
            col.sort_by_key(|&(r, _)| r);
            for (pos, &(r, x)) in col.iter().enumerate() {
                if r >= n_rows {
                    return Err(Error::IndexOutOfRange { index: r, len: n_rows });
                }
                if pos > 0 && col[pos - 1].0 == r {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate row {r} in column {c}"
                    )));
                }
                if !x.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite value at ({r}, {c})"
                    )));
                }
                row_idx.push(r);
                values.push(x);
            }
            col_ptr.push(row_idx.len());
        }
        let mut m = ColMatrix { n_rows, col_ptr, row_idx, values, sq_norms: Vec::new() };
        m.refresh_norms();
        Ok(m)
    }

    /// Builds a matrix from dense rows, dropping exact zeros.
    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::new(); n_cols];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch { expected: n_cols, got: row.len() });
            }
            for (c, &x) in row.iter().enumerate() {
                if x != 0.0 {
                    columns[c].push((r, x));
                }
            }
        }
        Self::from_columns(n_rows, columns)
    }

    fn refresh_norms(&mut self) {
        self.sq_norms = (0..self.n_cols())
            .map(|i| self.column(i).1.iter().map(|x| x * x).sum())
            .collect();
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row indices and values of column `i`. Panics if `i` is out of range.
    #[inline]
    pub fn column(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.col_ptr[i], self.col_ptr[i + 1]);
        (&self.row_idx[lo..hi], &self.values[lo..hi])
    }

    #[inline]
    pub fn col_sq_norm(&self, i: usize) -> f64 {
        self.sq_norms[i]
    }

    pub fn col_norm(&self, i: usize) -> f64 {
        self.sq_norms[i].sqrt()
    }

    fn check_col(&self, i: usize) -> Result<()> {
        if i >= self.n_cols() {
            return Err(Error::IndexOutOfRange { index: i, len: self.n_cols() });
        }
        Ok(())
    }

    fn check_rows(&self, len: usize) -> Result<()> {
        if len != self.n_rows {
            return Err(Error::DimensionMismatch { expected: self.n_rows, got: len });
        }
        Ok(())
    }

    /// `x_iᵀ u`.
    pub fn col_dot(&self, i: usize, u: &[f64]) -> Result<f64> {
        self.check_col(i)?;
        self.check_rows(u.len())?;
        Ok(self.col_dot_unchecked(i, u))
    }

    #[inline]
    pub(crate) fn col_dot_unchecked(&self, i: usize, u: &[f64]) -> f64 {
        let (rows, vals) = self.column(i);
        rows.iter().zip(vals).map(|(&r, &x)| x * u[r]).sum()
    }

    /// `u += s · x_i`, touching stored entries only.
    pub fn axpy_column(&self, i: usize, s: f64, u: &mut [f64]) -> Result<()> {
        self.check_col(i)?;
        self.check_rows(u.len())?;
        self.axpy_column_unchecked(i, s, u);
        Ok(())
    }

    #[inline]
    pub(crate) fn axpy_column_unchecked(&self, i: usize, s: f64, u: &mut [f64]) {
        if s == 0.0 {
            return;
        }
        let (rows, vals) = self.column(i);
        for (&r, &x) in rows.iter().zip(vals) {
            u[r] += s * x;
        }
    }

    /// `Aα`.
    pub fn mat_vec(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.n_cols() {
            return Err(Error::DimensionMismatch { expected: self.n_cols(), got: a.len() });
        }
        let mut out = vec![0.0; self.n_rows];
        for (i, &ai) in a.iter().enumerate() {
            self.axpy_column_unchecked(i, ai, &mut out);
        }
        Ok(out)
    }

    /// `Aᵀw`.
    pub fn transpose_mat_vec(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_rows(w.len())?;
        Ok((0..self.n_cols()).map(|i| self.col_dot_unchecked(i, w)).collect())
    }

    /// Rescales every nonzero column to unit Euclidean norm and returns the
    /// original norms. Zero columns are left as they are.
    pub fn normalize_columns(&mut self) -> Vec<f64> {
        let norms: Vec<f64> = (0..self.n_cols()).map(|i| self.col_norm(i)).collect();
        for (i, &nrm) in norms.iter().enumerate() {
            if nrm > 0.0 {
                let (lo, hi) = (self.col_ptr[i], self.col_ptr[i + 1]);
                for x in &mut self.values[lo..hi] {
                    *x /= nrm;
                }
            }
        }
        self.refresh_norms();
        norms
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; self.n_cols()]; self.n_rows];
        for i in 0..self.n_cols() {
            let (rs, vs) = self.column(i);
            for (&r, &x) in rs.iter().zip(vs) {
                rows[r][i] = x;
            }
        }
        rows
    }
}

pub fn mat_vec(m: &ColMatrix, a: &[f64]) -> Result<Vec<f64>> {
    m.mat_vec(a)
}

pub fn normalize_columns(m: &mut ColMatrix) -> Vec<f64> {
    m.normalize_columns()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PartitionStrategy {
    Contiguous,
    RoundRobin,
}

/// Disjoint assignment of column indices to `K` workers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    owner: Vec<usize>,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Validates an explicit block assignment of `0..n`.
    pub fn from_blocks(n: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidArgument("partition needs at least one block".into()));
        }
        let mut owner = vec![usize::MAX; n];
        for (k, block) in blocks.iter_mut().enumerate() {
            block.sort_unstable();
            for &i in block.iter() {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, len: n });
                }
                if owner[i] != usize::MAX {
                    return Err(Error::InvalidArgument(format!("column {i} assigned twice")));
                }
                owner[i] = k;
            }
        }
        if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InvalidArgument(format!("column {i} not assigned")));
        }
        Ok(Partition { owner, blocks })
    }

    pub fn k_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.owner.len()
    }

    pub fn owner(&self, i: usize) -> usize {
        self.owner[i]
    }

    pub fn block(&self, k: usize) -> &[usize] {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }
}

/// Splits `0..n` into `k` balanced blocks (sizes differ by at most one).
///
/// `Contiguous` ignores the seed. `RoundRobin` deals a seeded permutation of the
/// columns to the workers in turn.
pub fn partition_columns(
    n: usize,
    k: usize,
    strategy: PartitionStrategy,
    seed: u64,
) -> Result<Partition> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds n = {n}")));
    }
    let blocks = match strategy {
        PartitionStrategy::Contiguous => {
            let (base, extra) = (n / k, n % k);
            let mut start = 0;
            (0..k)
                .map(|b| {
                    let len = base + usize::from(b < extra);
                    let block: Vec<usize> = (start..start + len).collect();
                    start += len;
                    block
                })
                .collect()
        }
        PartitionStrategy::RoundRobin => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng::seeded(seed));
            let mut blocks = vec![Vec::with_capacity(n / k + 1); k];
            for (pos, i) in perm.into_iter().enumerate() {
                blocks[pos % k].push(i);
            }
            blocks
        }
    };
    Partition::from_blocks(n, blocks)
}

/// Euclidean norm.
pub fn norm2(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub(crate) fn check_len(u: &[f64], expected: usize) -> Result<()> {
    if u.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: u.len() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn dense_mv(rows: &[Vec<f64>], a: &[f64]) -> Vec<f64> {
        rows.iter().map(|r| r.iter().zip(a).map(|(x, y)| x * y).sum()).collect()
    }

    #[test]
    fn col_dot_examples() {
        let m = ColMatrix::from_columns(2, vec![vec![(0, 1.0)]]).unwrap();
        assert_eq!(m.col_dot(0, &[2.0, 5.0]).unwrap(), 2.0);

        let m = ColMatrix::from_columns(3, vec![vec![], vec![(2, -1.0), (0, 0.5)]]).unwrap();
        assert_eq!(m.col_dot(0, &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(m.col_dot(1, &[2.0, 9.0, 3.0]).unwrap(), -2.0);
        assert!(matches!(m.col_dot(2, &[0.0; 3]), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(m.col_dot(1, &[0.0; 2]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn construction_rejects_bad_entries() {
        assert!(ColMatrix::from_columns(2, vec![vec![(2, 1.0)]]).is_err());
        assert!(ColMatrix::from_columns(2, vec![vec![(1, 1.0), (1, 2.0)]]).is_err());
        assert!(ColMatrix::from_columns(2, vec![vec![(0, f64::NAN)]]).is_err());
    }

    #[test]
    fn mat_vec_identity_and_zero() {
        let eye = ColMatrix::from_columns(3, (0..3).map(|i| vec![(i, 1.0)]).collect()).unwrap();
        let a = [1.5, -2.0, 7.25];
        assert_eq!(eye.mat_vec(&a).unwrap(), a.to_vec());
        assert_eq!(eye.mat_vec(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(eye.mat_vec(&[0.0; 2]).is_err());
    }

    #[test]
    fn mat_vec_matches_dense_3x4() {
        let rows = vec![
            vec![0.0, 1.5, 0.0, -2.0],
            vec![0.25, 0.0, 0.0, 1.0],
            vec![0.0, -3.0, 4.0, 0.0],
        ];
        let m = ColMatrix::from_dense_rows(&rows).unwrap();
        let a = [1.0, -2.0, 0.5, 3.0];
        let got = m.mat_vec(&a).unwrap();
        assert_eq!(got, dense_mv(&rows, &a));
        assert_eq!(got, vec![-9.0, 3.25, 8.0]);
    }

    #[test]
    fn axpy_examples() {
        let m = ColMatrix::from_columns(2, vec![vec![(0, 1.0)], vec![(0, 2.0), (1, 3.0)]]).unwrap();
        let mut u = vec![1.0, 1.0];
        m.axpy_column(1, 0.0, &mut u).unwrap();
        assert_eq!(u, vec![1.0, 1.0]);
        m.axpy_column(0, 1.0, &mut u).unwrap();
        assert_eq!(u, vec![2.0, 1.0]);
        assert!(m.axpy_column(5, 1.0, &mut u).is_err());
    }

    #[test]
    fn incremental_residual_matches_batch() {
        let mut rng = rng::seeded(3);
        let (d, n) = (12, 20);
        let cols = (0..n)
            .map(|_| {
                (0..d)
                    .filter_map(|r| (rng.random::<f64>() < 0.4).then(|| (r, rng.random_range(-1.0..1.0))))
                    .collect()
            })
            .collect();
        let m = ColMatrix::from_columns(d, cols).unwrap();
        let mut z = vec![0.0; d];
        let mut acc = vec![0.0; n];
        for _ in 0..1000 {
            let i = rng.random_range(0..n);
            let s = rng.random_range(-1.0..1.0);
            m.axpy_column(i, s, &mut z).unwrap();
            acc[i] += s;
        }
        let batch = m.mat_vec(&acc).unwrap();
        for (a, b) in z.iter().zip(&batch) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn partition_examples() {
        let p = partition_columns(4, 2, PartitionStrategy::Contiguous, 0).unwrap();
        assert_eq!(p.blocks(), &[vec![0, 1], vec![2, 3]]);
        let p = partition_columns(5, 2, PartitionStrategy::RoundRobin, 9).unwrap();
        let mut sizes: Vec<usize> = p.blocks().iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 3]);
        assert!(partition_columns(3, 4, PartitionStrategy::Contiguous, 0).is_err());
        assert!(partition_columns(3, 0, PartitionStrategy::Contiguous, 0).is_err());
    }

    #[test]
    fn partition_round_robin_n100_k7() {
        let p = partition_columns(100, 7, PartitionStrategy::RoundRobin, 1).unwrap();
        let mut seen = vec![0usize; 100];
        for (k, b) in p.blocks().iter().enumerate() {
            for &i in b {
                seen[i] += 1;
                assert_eq!(p.owner(i), k);
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(p, partition_columns(100, 7, PartitionStrategy::RoundRobin, 1).unwrap());
    }

    #[test]
    fn partition_exhaustive_sweep() {
        for n in 1..=64 {
            for k in 1..=n {
                for strategy in [PartitionStrategy::Contiguous, PartitionStrategy::RoundRobin] {
                    let p = partition_columns(n, k, strategy, n as u64).unwrap();
                    assert_eq!(p.k_count(), k);
                    let mut all: Vec<usize> = p.blocks().concat();
                    all.sort_unstable();
                    assert_eq!(all, (0..n).collect::<Vec<_>>());
                    let sizes: Vec<usize> = p.blocks().iter().map(Vec::len).collect();
                    let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                    assert!(hi - lo <= 1, "n={n} k={k} sizes={sizes:?}");
                }
            }
        }
    }

    #[test]
    fn normalize_examples() {
        let mut m = ColMatrix::from_columns(2, vec![vec![(0, 1.0)], vec![(1, 2.0)], vec![]]).unwrap();
        let norms = m.normalize_columns();
        assert_eq!(norms, vec![1.0, 2.0, 0.0]);
        assert_eq!(m.column(0).1, &[1.0]);
        assert_eq!(m.column(1).1, &[1.0]);
        assert_eq!(m.col_norm(2), 0.0);
    }

    proptest! {
        #[test]
        fn mat_vec_agrees_with_dense(
            d in 1usize..=8, n in 1usize..=8,
            entries in proptest::collection::vec(-5.0f64..5.0, 64),
            mask in proptest::collection::vec(proptest::bool::ANY, 64),
            a in proptest::collection::vec(-3.0f64..3.0, 8),
        ) {
            let rows: Vec<Vec<f64>> = (0..d)
                .map(|r| (0..n).map(|c| if mask[r * 8 + c] { entries[r * 8 + c] } else { 0.0 }).collect())
                .collect();
            let m = ColMatrix::from_dense_rows(&rows).unwrap();
            let got = m.mat_vec(&a[..n]).unwrap();
            let want = dense_mv(&rows, &a[..n]);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-12);
            }
        }

        #[test]
        fn normalized_columns_have_unit_norm(
            entries in proptest::collection::vec(-10.0f64..10.0, 30),
            mask in proptest::collection::vec(proptest::bool::ANY, 30),
        ) {
            let rows: Vec<Vec<f64>> = (0..5)
                .map(|r| (0..6).map(|c| if mask[r * 6 + c] { entries[r * 6 + c] } else { 0.0 }).collect())
                .collect();
            let mut m = ColMatrix::from_dense_rows(&rows).unwrap();
            m.normalize_columns();
            for i in 0..m.n_cols() {
                let direct: f64 = m.column(i).1.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!(direct == 0.0 || (direct - 1.0).abs() <= 1e-12);
            }
        }
    }
}
