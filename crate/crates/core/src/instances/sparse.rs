use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, unique column indices per row
/// and no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// An all-zero `rows x cols` matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from coordinate triplets. Repeated coordinates are
    /// summed and exact zeros are dropped.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for (k, &(i, j, v)) in triplets.iter().enumerate() {
            if i >= rows || j >= cols {
                return Err(Error::invalid(
                    format!("triplets[{k}]"),
                    format!("coordinate ({i}, {j}) outside a {rows}x{cols} matrix"),
                ));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("triplets[{k}]"), "value is not finite"));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut rows_of = Vec::with_capacity(sorted.len());
        for (i, j, v) in sorted {
            if let (Some(&last_row), Some(&last_col)) = (rows_of.last(), indices.last()) {
                if last_row == i && last_col == j {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows_of.push(i);
            indices.push(j);
            values.push(v);
        }
        let mut keep_indices = Vec::with_capacity(indices.len());
        let mut keep_values = Vec::with_capacity(values.len());
        for ((i, j), v) in rows_of.into_iter().zip(indices).zip(values) {
            if v != 0.0 {
                indptr[i + 1] += 1;
                keep_indices.push(j);
                keep_values.push(v);
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(SparseMatrix {
            rows,
            cols,
            indptr,
            indices: keep_indices,
            values: keep_values,
        })
    }

    /// Dense row-major input, mostly for tests and small examples.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let triplets: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &v)| (i, j, v)))
            .collect();
        SparseMatrix::from_triplets(rows.len(), cols, &triplets).expect("dense input is in range")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[range.clone()], &self.values[range])
    }

    /// Stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let slot = next[j];
                indices[slot] = i;
                values[slot] = v;
                next[j] += 1;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    /// Exact entry-wise symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    /// `out = self * x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *o = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `out += scale * self * x`.
    pub fn mul_vec_add(&self, scale: f64, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let dot: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
            *o += scale * dot;
        }
    }

    /// `x^T self x` for a square matrix.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                let dot: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
                x[i] * dot
            })
            .sum()
    }

    /// Keeps the rows listed in `rows` and the columns listed in `cols`, in
    /// the given order. Both lists must be strictly increasing.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> SparseMatrix {
        let mut col_map = vec![usize::MAX; self.cols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for &i in rows {
            let (cs, vs) = self.row(i);
            for (&j, &v) in cs.iter().zip(vs) {
                if col_map[j] != usize::MAX {
                    indices.push(col_map[j]);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            rows: rows.len(),
            cols: cols.len(),
            indptr,
            indices,
            values,
        }
    }

    /// Squared 2-norm of every column.
    pub fn column_sq_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            out[j] += v * v;
        }
        out
    }

    /// Diagonal entries of a square matrix.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }
}
