//! Sparse storage for nodal 2x2 block matrices.

/// Row-major 2x2 block: [xx, xy, yx, yy].
pub type Block = [f64; 4];

/// Symmetric-pattern block CSR matrix with one 2x2 block per node pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCsr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    pub vals: Vec<Block>,
}

impl BlockCsr {
    /// Builds the pattern from per-row neighbour lists (diagonal added).
    pub fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for (i, r) in rows.iter().enumerate() {
            let mut r = r.clone();
            r.push(i);
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        let vals = vec![[0.0; 4]; cols.len()];
        BlockCsr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Block rows.
    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn nnz_blocks(&self) -> usize {
        self.cols.len()
    }

    /// Storage index of block (i, j). Panics if outside the pattern.
    pub fn index(&self, i: usize, j: usize) -> usize {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        lo + self.cols[lo..hi]
            .binary_search(&j)
            .unwrap_or_else(|_| panic!("block ({i}, {j}) not in pattern"))
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, &Block)> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[lo..hi].iter().copied().zip(self.vals[lo..hi].iter())
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|b| *b = [0.0; 4]);
    }

    pub fn add(&mut self, idx: usize, b: Block) {
        let v = &mut self.vals[idx];
        for k in 0..4 {
            v[k] += b[k];
        }
    }

    pub fn add_diagonal(&mut self, i: usize, b: Block) {
        let idx = self.index(i, i);
        self.add(idx, b);
    }

    /// `self = a * self + b * other` on the same pattern.
    pub fn axpby(&mut self, a: f64, b: f64, other: &BlockCsr) {
        debug_assert_eq!(self.cols.len(), other.cols.len());
        for (v, o) in self.vals.iter_mut().zip(&other.vals) {
            for k in 0..4 {
                v[k] = a * v[k] + b * o[k];
            }
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let (mut s0, mut s1) = (0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let b = &self.vals[k];
                let (x0, x1) = (x[2 * j], x[2 * j + 1]);
                s0 += b[0] * x0 + b[1] * x1;
                s1 += b[2] * x0 + b[3] * x1;
            }
            y[2 * i] = s0;
            y[2 * i + 1] = s1;
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(2 * self.n, 2 * self.n);
        for i in 0..self.n {
            for (j, b) in self.row(i) {
                m[(2 * i, 2 * j)] = b[0];
                m[(2 * i, 2 * j + 1)] = b[1];
                m[(2 * i + 1, 2 * j)] = b[2];
                m[(2 * i + 1, 2 * j + 1)] = b[3];
            }
        }
        m
    }

    /// Scalar CSR restricted to the DOFs with `map[d] != usize::MAX`,
    /// renumbered by `map`.
    pub fn restrict(&self, map: &[usize], count: usize) -> Csr {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); count];
        for i in 0..self.n {
            for (j, b) in self.row(i) {
                for (r, c, v) in [(0, 0, b[0]), (0, 1, b[1]), (1, 0, b[2]), (1, 1, b[3])] {
                    let (gr, gc) = (map[2 * i + r], map[2 * j + c]);
                    if gr != usize::MAX && gc != usize::MAX {
                        rows[gr].push((gc, v));
                    }
                }
            }
        }
        Csr::from_rows(rows)
    }
}

/// Precomputed scatter from a block matrix into its free-DOF scalar CSR.
#[derive(Debug, Clone)]
pub struct Restriction {
    template: Csr,
    slots: Vec<[usize; 4]>,
}

impl Restriction {
    /// `map[d]` is the free index of DOF `d`, or `usize::MAX` if prescribed.
    pub fn new(pattern: &BlockCsr, map: &[usize], count: usize) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); count];
        for i in 0..pattern.n {
            for (j, _) in pattern.row(i) {
                for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let (gr, gc) = (map[2 * i + r], map[2 * j + c]);
                    if gr != usize::MAX && gc != usize::MAX {
                        rows[gr].push((gc, 0.0));
                    }
                }
            }
        }
        let template = Csr::from_rows(rows);
        let mut slots = vec![[usize::MAX; 4]; pattern.cols.len()];
        for i in 0..pattern.n {
            for k in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
                let j = pattern.cols[k];
                for (q, (r, c)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let (gr, gc) = (map[2 * i + r], map[2 * j + c]);
                    if gr != usize::MAX && gc != usize::MAX {
                        let lo = template.row_ptr[gr];
                        let hi = template.row_ptr[gr + 1];
                        slots[k][q] = lo + template.cols[lo..hi].binary_search(&gc).unwrap();
                    }
                }
            }
        }
        Restriction { template, slots }
    }

    pub fn dim(&self) -> usize {
        self.template.n
    }

    /// Scalar matrix with the values of `m`, which must share the pattern.
    pub fn apply(&self, m: &BlockCsr) -> Csr {
        let mut out = self.template.clone();
        for (b, slot) in m.vals.iter().zip(&self.slots) {
            for q in 0..4 {
                if slot[q] != usize::MAX {
                    out.vals[slot[q]] = b[q];
                }
            }
        }
        out
    }
}

/// Scalar CSR matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn from_rows(mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in rows.iter_mut() {
            r.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for &(c, v) in r.iter() {
                if c == last {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = c;
                }
            }
            row_ptr.push(cols.len());
        }
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.cols[k] == i)
                    .map_or(0.0, |k| self.vals[k])
            })
            .collect()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }
}
