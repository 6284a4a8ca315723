//! Compressed sparse row storage assembled from triplets.

use nalgebra::DMatrix;

/// Coordinate-format accumulator. Duplicate entries are summed when
/// converted, in insertion order, so the result is independent of thread
/// scheduling as long as triplets are pushed in a fixed order.
#[derive(Debug, Clone, Default)]
pub struct TripletList {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletList {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, capacity: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = (usize, usize, f64)>) {
        for (r, c, v) in entries {
            self.push(r, c, v);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn into_csr(mut self) -> CsrMatrix {
        // stable: equal keys keep insertion order
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry present") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        TripletList::new(nrows, ncols).into_csr()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn transpose_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows, "dimension mismatch");
        let mut out = vec![0.0; self.ncols];
        for (i, yi) in y.iter().enumerate() {
            for (j, v) in self.row(i) {
                out[j] += v * yi;
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletList::with_capacity(self.ncols, self.nrows, self.nnz());
        t.extend(self.triplets().map(|(i, j, v)| (j, i, v)));
        t.into_csr()
    }

    /// Keeps rows and columns with a `Some` entry in the maps, renumbered.
    pub fn select(
        &self,
        row_map: &[Option<usize>],
        n_rows: usize,
        col_map: &[Option<usize>],
        n_cols: usize,
    ) -> CsrMatrix {
        let mut t = TripletList::with_capacity(n_rows, n_cols, self.nnz());
        for (i, j, v) in self.triplets() {
            if let (Some(r), Some(c)) = (row_map[i], col_map[j]) {
                t.push(r, c, v);
            }
        }
        t.into_csr()
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut t = TripletList::new(2, 3);
        t.push(1, 2, 1.0);
        t.push(0, 0, 2.0);
        t.push(1, 2, 0.5);
        t.push(0, 1, -1.0);
        let a = t.into_csr();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(1, 2), 1.5);
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.mul_vec(&[1.0, 1.0, 2.0]), vec![1.0, 3.0]);
        assert_eq!(a.transpose_mul_vec(&[1.0, 2.0]), vec![2.0, -1.0, 3.0]);
        assert_eq!(a.transpose().get(2, 1), 1.5);
    }

    #[test]
    fn selection_renumbers() {
        let mut t = TripletList::new(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                t.push(i, j, (3 * i + j) as f64);
            }
        }
        let a = t.into_csr();
        let map = [Some(0), None, Some(1)];
        let s = a.select(&map, 2, &map, 2);
        assert_eq!(
            s.to_dense(),
            DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 6.0, 8.0])
        );
        assert_eq!(a.max_asymmetry(), 4.0);
    }
}
