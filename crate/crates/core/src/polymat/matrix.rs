//! Polynomial matrices over ℚ[ξ], stored as ascending coefficient blocks.

use super::poly::Poly;
use super::rational::{format_rational, parse_rational, to_f64, RMat, Rat};
use crate::numkernel::CMat;
use num_complex::Complex64;
use num_traits::Zero;

#[derive(Clone, PartialEq, Eq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    coeffs: Vec<RMat>,
}

impl std::fmt::Debug for PolyMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PolyMatrix{}x{}[", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            let row: Vec<String> = (0..self.cols)
                .map(|j| format!("{:?}", self.entry(i, j)))
                .collect();
            write!(f, "{}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl PolyMatrix {
    pub fn new(rows: usize, cols: usize, mut coeffs: Vec<RMat>) -> Self {
        assert!(
            coeffs.iter().all(|c| c.shape() == (rows, cols)),
            "coefficient block shape"
        );
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { rows, cols, coeffs }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            coeffs: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(RMat::identity(n))
    }

    pub fn constant(m: RMat) -> Self {
        let (r, c) = m.shape();
        Self::new(r, c, vec![m])
    }

    /// `ξI − A`.
    pub fn pencil(a: &RMat) -> Self {
        let n = a.nrows();
        Self::new(n, n, vec![a.neg(), RMat::identity(n)])
    }

    pub fn from_entries(rows: usize, cols: usize, entries: &[Poly]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        let deg = entries.iter().filter_map(|p| p.degree()).max();
        let Some(deg) = deg else {
            return Self::zeros(rows, cols);
        };
        let coeffs = (0..=deg)
            .map(|k| RMat::from_fn(rows, cols, |i, j| entries[i * cols + j].coeff(k)))
            .collect();
        Self::new(rows, cols, coeffs)
    }

    pub fn from_grid(grid: &[Vec<Poly>], cols: usize) -> Self {
        let rows = grid.len();
        let flat: Vec<Poly> = grid.iter().flat_map(|r| r.iter().cloned()).collect();
        Self::from_entries(rows, cols, &flat)
    }

    pub fn scalar(p: Poly) -> Self {
        Self::from_entries(1, 1, &[p])
    }

    /// Entries as `[row][col][coefficient]` rational strings, ascending degree.
    pub fn to_strings(&self) -> Vec<Vec<Vec<String>>> {
        self.grid()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|p| p.coeffs().iter().map(format_rational).collect())
                    .collect()
            })
            .collect()
    }

    /// Inverse of [`PolyMatrix::to_strings`]; `cols` is needed when there are no rows.
    pub fn from_strings(rows: &[Vec<Vec<String>>], cols: usize) -> Result<Self, String> {
        let mut grid = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                ));
            }
            let mut out = Vec::with_capacity(cols);
            for (j, entry) in row.iter().enumerate() {
                let coeffs = entry
                    .iter()
                    .map(|c| {
                        parse_rational(c)
                            .ok_or_else(|| format!("entry ({i},{j}): bad rational {c:?}"))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                out.push(Poly::new(coeffs));
            }
            grid.push(out);
        }
        Ok(PolyMatrix::from_grid(&grid, cols))
    }

    pub fn grid(&self) -> Vec<Vec<Poly>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    pub fn entry(&self, i: usize, j: usize) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c[(i, j)].clone()).collect())
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn coefficients(&self) -> &[RMat] {
        &self.coeffs
    }

    pub fn coefficient(&self, k: usize) -> RMat {
        self.coeffs
            .get(k)
            .cloned()
            .unwrap_or_else(|| RMat::zeros(self.rows, self.cols))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn add(&self, o: &PolyMatrix) -> PolyMatrix {
        assert_eq!(self.shape(), o.shape(), "PolyMatrix sum dimensions");
        let n = self.coeffs.len().max(o.coeffs.len());
        Self::new(
            self.rows,
            self.cols,
            (0..n)
                .map(|k| self.coefficient(k).add(&o.coefficient(k)))
                .collect(),
        )
    }

    pub fn sub(&self, o: &PolyMatrix) -> PolyMatrix {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> PolyMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            coeffs: self.coeffs.iter().map(|c| c.neg()).collect(),
        }
    }

    pub fn scale(&self, s: &Rat) -> PolyMatrix {
        Self::new(
            self.rows,
            self.cols,
            self.coeffs.iter().map(|c| c.scale(s)).collect(),
        )
    }

    pub fn mul(&self, o: &PolyMatrix) -> PolyMatrix {
        assert_eq!(self.cols, o.rows, "PolyMatrix product dimensions");
        if self.is_zero() || o.is_zero() {
            return Self::zeros(self.rows, o.cols);
        }
        let mut out = vec![RMat::zeros(self.rows, o.cols); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].add(&a.mul(b));
            }
        }
        Self::new(self.rows, o.cols, out)
    }

    pub fn mul_const(&self, m: &RMat) -> PolyMatrix {
        self.mul(&Self::constant(m.clone()))
    }

    pub fn const_mul(m: &RMat, p: &PolyMatrix) -> PolyMatrix {
        Self::constant(m.clone()).mul(p)
    }

    pub fn transpose(&self) -> PolyMatrix {
        Self {
            rows: self.cols,
            cols: self.rows,
            coeffs: self.coeffs.iter().map(|c| c.transpose()).collect(),
        }
    }

    /// `M*(ξ) = M(−ξ)ᵀ`.
    pub fn para(&self) -> PolyMatrix {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if k % 2 == 0 {
                    c.transpose()
                } else {
                    c.transpose().neg()
                }
            })
            .collect();
        Self {
            rows: self.cols,
            cols: self.rows,
            coeffs,
        }
    }

    pub fn eval_rat(&self, x: &Rat) -> RMat {
        self.coeffs
            .iter()
            .rev()
            .fold(RMat::zeros(self.rows, self.cols), |acc, c| {
                acc.scale(x).add(c)
            })
    }

    pub fn eval_c(&self, z: Complex64) -> CMat {
        let mut acc = CMat::zeros(self.rows, self.cols);
        for c in self.coeffs.iter().rev() {
            acc *= z;
            for i in 0..self.rows {
                for j in 0..self.cols {
                    acc[(i, j)] += to_f64(&c[(i, j)]);
                }
            }
        }
        acc
    }

    pub fn sub_matrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> PolyMatrix {
        Self::new(
            rows,
            cols,
            self.coeffs
                .iter()
                .map(|c| c.sub_matrix(r0, c0, rows, cols))
                .collect(),
        )
    }

    pub fn select_rows(&self, idx: &[usize]) -> PolyMatrix {
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| RMat::from_fn(idx.len(), self.cols, |i, j| c[(idx[i], j)].clone()))
            .collect();
        Self::new(idx.len(), self.cols, coeffs)
    }

    pub fn select_cols(&self, idx: &[usize]) -> PolyMatrix {
        Self::new(
            self.rows,
            idx.len(),
            self.coeffs.iter().map(|c| c.select_columns(idx)).collect(),
        )
    }

    pub fn hstack(blocks: &[&PolyMatrix]) -> PolyMatrix {
        let rows = blocks.first().map_or(0, |b| b.rows);
        let cols = blocks.iter().map(|b| b.cols).sum();
        let n = blocks.iter().map(|b| b.coeffs.len()).max().unwrap_or(0);
        let coeffs = (0..n)
            .map(|k| {
                let cs: Vec<RMat> = blocks.iter().map(|b| b.coefficient(k)).collect();
                RMat::hstack(&cs.iter().collect::<Vec<_>>())
            })
            .collect();
        Self::new(rows, cols, coeffs)
    }

    pub fn vstack(blocks: &[&PolyMatrix]) -> PolyMatrix {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let rows = blocks.iter().map(|b| b.rows).sum();
        let n = blocks.iter().map(|b| b.coeffs.len()).max().unwrap_or(0);
        let coeffs = (0..n)
            .map(|k| {
                let cs: Vec<RMat> = blocks.iter().map(|b| b.coefficient(k)).collect();
                RMat::vstack(&cs.iter().collect::<Vec<_>>())
            })
            .collect();
        Self::new(rows, cols, coeffs)
    }

    /// Determinant by fraction-free (Bareiss) elimination over ℚ[ξ].
    pub fn det(&self) -> Poly {
        assert_eq!(self.rows, self.cols, "determinant of non-square PolyMatrix");
        det_grid(self.grid())
    }

    /// Adjugate, `adj(M)·M = det(M)·I`.
    pub fn adjugate(&self) -> PolyMatrix {
        let n = self.rows;
        assert_eq!(n, self.cols);
        if n == 0 {
            return Self::zeros(0, 0);
        }
        if n == 1 {
            return Self::identity(1);
        }
        let g = self.grid();
        let mut out = vec![Poly::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let minor: Vec<Vec<Poly>> = (0..n)
                    .filter(|&r| r != i)
                    .map(|r| {
                        (0..n)
                            .filter(|&c| c != j)
                            .map(|c| g[r][c].clone())
                            .collect()
                    })
                    .collect();
                let d = det_grid(minor);
                // adj[j][i] = (−1)^{i+j} det(minor_ij)
                out[j * n + i] = if (i + j) % 2 == 0 { d } else { d.neg() };
            }
        }
        Self::from_entries(n, n, &out)
    }

    /// Exact inverse when the determinant is a nonzero constant.
    pub fn unimodular_inverse(&self) -> Option<PolyMatrix> {
        if self.rows != self.cols {
            return None;
        }
        let d = self.det();
        if d.is_zero() || !d.is_constant() {
            return None;
        }
        Some(self.adjugate().scale(&d.coeff(0).recip()))
    }

    /// Exact `A·B⁻¹` as a polynomial matrix, when it is one.
    pub fn right_divide(&self, b: &PolyMatrix) -> Option<PolyMatrix> {
        let d = b.det();
        if d.is_zero() {
            return None;
        }
        let num = self.mul(&b.adjugate());
        let mut out = Vec::with_capacity(num.rows * num.cols);
        for p in num.grid().into_iter().flatten() {
            out.push(p.exact_div(&d)?);
        }
        Some(Self::from_entries(num.rows, num.cols, &out))
    }

    pub fn row_degrees(&self) -> Vec<Option<usize>> {
        (0..self.rows)
            .map(|i| {
                (0..self.coeffs.len())
                    .rev()
                    .find(|&k| (0..self.cols).any(|j| !self.coeffs[k][(i, j)].is_zero()))
            })
            .collect()
    }

    /// Leading row-coefficient matrix with respect to the given row degrees.
    pub fn leading_row_coefficients(&self, degs: &[usize]) -> RMat {
        RMat::from_fn(self.rows, self.cols, |i, j| {
            self.coefficient(degs[i])[(i, j)].clone()
        })
    }

    /// All `k×k` minors taken over column subsets (rows fixed, `k = rows`).
    pub fn maximal_minors(&self) -> Vec<Poly> {
        let k = self.rows;
        let mut out = Vec::new();
        let g = self.grid();
        for cols in combinations(self.cols, k) {
            let sub: Vec<Vec<Poly>> = g
                .iter()
                .map(|r| cols.iter().map(|&c| r[c].clone()).collect())
                .collect();
            out.push(det_grid(sub));
        }
        out
    }

    /// Row `dst` += p · row `src`.
    fn add_row_multiple(grid: &mut [Vec<Poly>], dst: usize, src: usize, p: &Poly) {
        for j in 0..grid[dst].len() {
            let v = grid[src][j].mul(p);
            grid[dst][j] = grid[dst][j].add(&v);
        }
    }
}

/// Whether `V` is square with a nonzero constant determinant.
pub fn is_unimodular(v: &PolyMatrix) -> bool {
    if v.rows != v.cols {
        return false;
    }
    let d = v.det();
    !d.is_zero() && d.is_constant()
}

pub(crate) fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn det_grid(mut m: Vec<Vec<Poly>>) -> Poly {
    let n = m.len();
    if n == 0 {
        return Poly::one();
    }
    let mut sign = false;
    let mut prev = Poly::one();
    for k in 0..n - 1 {
        let Some(p) = (k..n).find(|&i| !m[i][k].is_zero()) else {
            return Poly::zero();
        };
        if p != k {
            m.swap(p, k);
            sign = !sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = m[k][k].mul(&m[i][j]).sub(&m[i][k].mul(&m[k][j]));
                m[i][j] = v.exact_div(&prev).expect("Bareiss division is exact");
            }
            m[i][k] = Poly::zero();
        }
        prev = m[k][k].clone();
    }
    let d = m[n - 1][n - 1].clone();
    if sign {
        d.neg()
    } else {
        d
    }
}

/// Result of unimodular row reduction `Y·M = H` with `H` in row echelon form.
#[derive(Clone, Debug)]
pub struct Echelon {
    pub y: PolyMatrix,
    pub h: PolyMatrix,
    /// `(row, col)` of each pivot; rows past the last pivot of `H` are zero.
    pub pivots: Vec<(usize, usize)>,
}

impl Echelon {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Rows of `Y` annihilating `M` from the left; a left-prime basis of the
    /// left kernel because they are rows of a unimodular matrix.
    pub fn left_kernel(&self) -> PolyMatrix {
        let idx: Vec<usize> = (self.rank()..self.y.nrows()).collect();
        self.y.select_rows(&idx)
    }
}

/// Unimodular row reduction to echelon form via polynomial Euclid steps.
pub fn row_echelon(m: &PolyMatrix) -> Echelon {
    let (r, c) = m.shape();
    let mut h = m.grid();
    let mut y = PolyMatrix::identity(r).grid();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..c {
        if row == r {
            break;
        }
        loop {
            let piv = (row..r)
                .filter(|&i| !h[i][col].is_zero())
                .min_by_key(|&i| h[i][col].degree().unwrap_or(0));
            let Some(piv) = piv else { break };
            h.swap(piv, row);
            y.swap(piv, row);
            let mut done = true;
            for i in row + 1..r {
                if h[i][col].is_zero() {
                    continue;
                }
                let (q, rem) = h[i][col].div_rem(&h[row][col]);
                let q = q.neg();
                PolyMatrix::add_row_multiple(&mut h, i, row, &q);
                PolyMatrix::add_row_multiple(&mut y, i, row, &q);
                if !rem.is_zero() {
                    done = false;
                }
            }
            if done {
                // Normalize the pivot to be monic (constant row scaling is unimodular).
                let s = h[row][col].lc().recip();
                for v in h[row].iter_mut().chain(y[row].iter_mut()) {
                    *v = v.scale(&s);
                }
                pivots.push((row, col));
                row += 1;
                break;
            }
        }
    }
    Echelon {
        y: PolyMatrix::from_grid(&y, r),
        h: PolyMatrix::from_grid(&h, c),
        pivots,
    }
}

/// Makes `q` row-reduced by unimodular row operations applied to `(q, p)`.
/// Returns `(q', p', row degrees)`; fails if `q` is singular.
pub fn row_reduce(q: &PolyMatrix, p: &PolyMatrix) -> Option<(PolyMatrix, PolyMatrix, Vec<usize>)> {
    let n = q.nrows();
    let mut qg = q.grid();
    let mut pg = p.grid();
    loop {
        let qm = PolyMatrix::from_grid(&qg, q.ncols());
        let degs: Option<Vec<usize>> = qm.row_degrees().into_iter().collect();
        let degs = degs?;
        let lead = qm.leading_row_coefficients(&degs);
        let left_null = lead.transpose().nullspace();
        if left_null.ncols() == 0 {
            let pm = PolyMatrix::from_grid(&pg, p.ncols());
            return Some((qm, pm, degs));
        }
        let alpha = left_null.column(0);
        let r = (0..n)
            .filter(|&i| !alpha[(i, 0)].is_zero())
            .max_by_key(|&i| degs[i])?;
        let ar = alpha[(r, 0)].clone();
        for i in 0..n {
            if i == r || alpha[(i, 0)].is_zero() {
                continue;
            }
            let f = Poly::monomial(&alpha[(i, 0)] / &ar, degs[r] - degs[i]);
            PolyMatrix::add_row_multiple(&mut qg, r, i, &f);
            PolyMatrix::add_row_multiple(&mut pg, r, i, &f);
        }
    }
}

impl PolyMatrix {
    pub fn is_constant(&self) -> bool {
        self.coeffs.len() <= 1
    }

    pub fn one_by_one(&self) -> Option<Poly> {
        (self.shape() == (1, 1)).then(|| self.entry(0, 0))
    }

    pub fn trace_degree_sum(&self) -> usize {
        self.row_degrees().into_iter().map(|d| d.unwrap_or(0)).sum()
    }
}

#[cfg(test)]
impl PolyMatrix {
    fn kron_identity(&self, n: usize) -> PolyMatrix {
        let p = self.entry(0, 0);
        let mut e = vec![Poly::zero(); n * n];
        for i in 0..n {
            e[i * n + i] = p.clone();
        }
        PolyMatrix::from_entries(n, n, &e)
    }
}
