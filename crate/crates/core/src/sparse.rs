//! Compressed sparse row storage.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

pub type Triplet = (usize, usize, f64);

impl CsrMatrix {
    /// Builds a matrix from unordered triplets. Duplicates are summed in input
    /// order, so the result is deterministic for a given triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[Triplet]) -> CsrMatrix {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut order = vec![0usize; triplets.len()];
        let mut next = counts.clone();
        for (k, &(r, _, _)) in triplets.iter().enumerate() {
            order[next[r]] = k;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend(order[counts[r]..counts[r + 1]].iter().map(|&k| (triplets[k].1, triplets[k].2)));
            // stable: equal columns keep input order
            row.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut v = 0.0;
                while i < row.len() && row[i].0 == c {
                    v += row[i].1;
                    i += 1;
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    /// Largest relative deviation between two rows, normalised by the row's
    /// largest magnitude.
    pub fn row_deviation(a: (&[usize], &[f64]), b: (&[usize], &[f64])) -> f64 {
        let scale = a.1.iter().chain(b.1).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let (mut i, mut j) = (0, 0);
        let mut dev = 0.0f64;
        while i < a.0.len() || j < b.0.len() {
            let ca = a.0.get(i).copied().unwrap_or(usize::MAX);
            let cb = b.0.get(j).copied().unwrap_or(usize::MAX);
            let d = if ca == cb {
                i += 1;
                j += 1;
                a.1[i - 1] - b.1[j - 1]
            } else if ca < cb {
                i += 1;
                a.1[i - 1]
            } else {
                j += 1;
                b.1[j - 1]
            };
            dev = dev.max(d.abs() / scale);
        }
        dev
    }
}
