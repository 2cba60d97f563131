//! Exact rational scalars and dense rational matrices.

use crate::numkernel::Mat;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;

pub type Rat = BigRational;

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Denominator bound used when floating inputs enter exact arithmetic.
pub const RATIONALIZE_BOUND: i64 = 1_000_000;

/// Best rational approximation of `x` with denominator at most `max_den`
/// (continued-fraction convergents and semiconvergents).
pub fn rationalize(x: f64, max_den: i64) -> Option<Rat> {
    if !x.is_finite() {
        return None;
    }
    if x == x.trunc() && x.abs() < 9.0e15 {
        return Some(rat(x as i64));
    }
    let neg = x < 0.0;
    let x = x.abs();
    if x > 9.0e15 {
        return None;
    }
    let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
    let mut frac = x;
    let max_den = max_den as i128;
    loop {
        let a = frac.floor();
        let ai = a as i128;
        let p2 = ai * p1 + p0;
        let q2 = ai * q1 + q0;
        if q2 > max_den {
            // Best semiconvergent within the bound.
            let k = (max_den - q0) / q1;
            let ps = k * p1 + p0;
            let qs = k * q1 + q0;
            let e1 = (x - p1 as f64 / q1 as f64).abs();
            let e2 = (x - ps as f64 / qs as f64).abs();
            let (p, q) = if qs > 0 && e2 < e1 {
                (ps, qs)
            } else {
                (p1, q1)
            };
            return Some(make(neg, p, q));
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        let rem = frac - a;
        if rem.abs() < 1e-300 || (x - p1 as f64 / q1 as f64).abs() <= f64::EPSILON * x {
            return Some(make(neg, p1, q1));
        }
        frac = 1.0 / rem;
    }
}

fn make(neg: bool, p: i128, q: i128) -> Rat {
    let r = Rat::new(BigInt::from(p), BigInt::from(q));
    if neg {
        -r
    } else {
        r
    }
}

/// Parses `"p/q"`, integers and finite decimals exactly.
pub fn parse_rational(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n = parse_rational(n)?;
        let d = parse_rational(d)?;
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: BigInt = format!("{int}{frac}0").parse::<BigInt>().ok()? / BigInt::from(10);
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut r = Rat::from_integer(all);
    if scale >= 0 {
        r *= Rat::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= Rat::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

pub fn format_rational(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Dense matrix of exact rationals, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RMat {
    rows: usize,
    cols: usize,
    data: Vec<Rat>,
}

impl fmt::Debug for RMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RMat{}x{}[", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            let row: Vec<String> = (0..self.cols)
                .map(|j| format_rational(&self[(i, j)]))
                .collect();
            write!(f, "{}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

impl std::ops::Index<(usize, usize)> for RMat {
    type Output = Rat;
    fn index(&self, (i, j): (usize, usize)) -> &Rat {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rat {
        &mut self.data[i * self.cols + j]
    }
}

impl RMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Rat::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Rat::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Rat) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_i64(rows: usize, cols: usize, v: &[i64]) -> Self {
        assert_eq!(v.len(), rows * cols);
        Self::from_fn(rows, cols, |i, j| rat(v[i * cols + j]))
    }

    /// Exact rationalization of a floating matrix (denominators ≤ `max_den`).
    pub fn from_f64(m: &Mat, max_den: i64) -> Option<Self> {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out[(i, j)] = rationalize(m[(i, j)], max_den)?;
            }
        }
        Some(out)
    }

    pub fn to_f64(&self) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| to_f64(&self[(i, j)]))
    }

    pub fn to_strings(&self) -> Vec<Vec<String>> {
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| format_rational(&self[(i, j)]))
                    .collect()
            })
            .collect()
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

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn scale(&self, s: &Rat) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub_matrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)].clone())
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &RMat) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)].clone();
            }
        }
    }

    pub fn hstack(blocks: &[&RMat]) -> Self {
        let rows = blocks.iter().map(|b| b.rows).max().unwrap_or(0);
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut c = 0;
        for b in blocks {
            out.set_block(0, c, b);
            c += b.cols;
        }
        out
    }

    pub fn vstack(blocks: &[&RMat]) -> Self {
        let cols = blocks.iter().map(|b| b.cols).max().unwrap_or(0);
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut out = Self::zeros(rows, cols);
        let mut r = 0;
        for b in blocks {
            out.set_block(r, 0, b);
            r += b.rows;
        }
        out
    }

    pub fn mul(&self, o: &RMat) -> Self {
        assert_eq!(self.cols, o.rows, "RMat product dimensions");
        let mut out = Self::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    if !o[(k, j)].is_zero() {
                        out[(i, j)] += a * &o[(k, j)];
                    }
                }
            }
        }
        out
    }

    pub fn add(&self, o: &RMat) -> Self {
        assert_eq!(self.shape(), o.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &RMat) -> Self {
        assert_eq!(self.shape(), o.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(&-Rat::one())
    }

    /// Reduced row echelon form and the pivot columns.
    pub fn rref(&self) -> (Self, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..m.cols {
            if row == m.rows {
                break;
            }
            let Some(p) = (row..m.rows).find(|&i| !m[(i, col)].is_zero()) else {
                continue;
            };
            m.swap_rows(row, p);
            let inv = m[(row, col)].recip();
            for j in 0..m.cols {
                let v = &m[(row, j)] * &inv;
                m[(row, j)] = v;
            }
            for i in 0..m.rows {
                if i != row && !m[(i, col)].is_zero() {
                    let f = m[(i, col)].clone();
                    for j in 0..m.cols {
                        let v = &m[(row, j)] * &f;
                        m[(i, j)] -= v;
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        (m, pivots)
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.cols {
                self.data.swap(a * self.cols + j, b * self.cols + j);
            }
        }
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Basis of the right nullspace as columns.
    pub fn nullspace(&self) -> Self {
        let (r, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut out = Self::zeros(self.cols, free.len());
        for (k, &f) in free.iter().enumerate() {
            out[(f, k)] = Rat::one();
            for (i, &p) in pivots.iter().enumerate() {
                out[(p, k)] = -r[(i, f)].clone();
            }
        }
        out
    }

    pub fn inverse(&self) -> Option<Self> {
        if self.rows != self.cols {
            return None;
        }
        let n = self.rows;
        if n == 0 {
            return Some(RMat::zeros(0, 0));
        }
        let aug = RMat::hstack(&[self, &RMat::identity(n)]);
        let (r, pivots) = aug.rref();
        if pivots.len() < n || pivots[n - 1] != n - 1 {
            return None;
        }
        Some(r.sub_matrix(0, n, n, n))
    }

    pub fn det(&self) -> Rat {
        assert_eq!(self.rows, self.cols);
        let mut m = self.clone();
        let n = self.rows;
        let mut det = Rat::one();
        for col in 0..n {
            let Some(p) = (col..n).find(|&i| !m[(i, col)].is_zero()) else {
                return Rat::zero();
            };
            if p != col {
                m.swap_rows(p, col);
                det = -det;
            }
            let piv = m[(col, col)].clone();
            det *= &piv;
            for i in col + 1..n {
                if !m[(i, col)].is_zero() {
                    let f = &m[(i, col)] / &piv;
                    for j in col..n {
                        let v = &m[(col, j)] * &f;
                        m[(i, j)] -= v;
                    }
                }
            }
        }
        det
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    /// Completes the columns of `basis` (full column rank) to a nonsingular
    /// square matrix by appending unit vectors.
    pub fn complete_with_units(basis: &RMat) -> RMat {
        let n = basis.rows;
        let mut cur = basis.clone();
        for i in 0..n {
            if cur.cols == n {
                break;
            }
            let mut e = RMat::zeros(n, 1);
            e[(i, 0)] = Rat::one();
            let trial = RMat::hstack(&[&cur, &e]);
            if trial.rank() == trial.cols {
                cur = trial;
            }
        }
        cur
    }

    /// Congruence `Tᵀ S T = diag(δ)` for symmetric `S` with `T` unit lower
    /// triangular up to a permutation. Returns `(T, δ)`; the caller orders.
    pub fn symmetric_congruence(&self) -> Option<(RMat, Vec<Rat>)> {
        if !self.is_symmetric() {
            return None;
        }
        let n = self.rows;
        let mut s = self.clone();
        let mut t = RMat::identity(n);
        let mut diag = Vec::with_capacity(n);
        for k in 0..n {
            // Make s[k][k] nonzero if the trailing block is not zero.
            if s[(k, k)].is_zero() {
                if let Some(p) = (k + 1..n).find(|&i| !s[(i, i)].is_zero()) {
                    s.swap_rows(p, k);
                    s.swap_cols(p, k);
                    t.swap_cols(p, k);
                } else if let Some(p) = (k + 1..n).find(|&i| !s[(i, k)].is_zero()) {
                    // Add column/row p to k: s[k][k] becomes 2 s[p][k] + s[p][p] = 2 s[p][k].
                    s.add_col(k, p, &Rat::one());
                    s.add_row(k, p, &Rat::one());
                    t.add_col(k, p, &Rat::one());
                }
            }
            let piv = s[(k, k)].clone();
            diag.push(piv.clone());
            if piv.is_zero() {
                continue;
            }
            for i in k + 1..n {
                if !s[(i, k)].is_zero() {
                    let f = -(&s[(i, k)] / &piv);
                    s.add_col(i, k, &f);
                    s.add_row(i, k, &f);
                    t.add_col(i, k, &f);
                }
            }
        }
        Some((t, diag))
    }

    pub fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            for i in 0..self.rows {
                self.data.swap(i * self.cols + a, i * self.cols + b);
            }
        }
    }

    /// Column `dst` += f · column `src`.
    pub fn add_col(&mut self, dst: usize, src: usize, f: &Rat) {
        for i in 0..self.rows {
            let v = &self[(i, src)] * f;
            self[(i, dst)] += v;
        }
    }

    /// Row `dst` += f · row `src`.
    pub fn add_row(&mut self, dst: usize, src: usize, f: &Rat) {
        for j in 0..self.cols {
            let v = &self[(src, j)] * f;
            self[(dst, j)] += v;
        }
    }

    pub fn column(&self, j: usize) -> RMat {
        self.sub_matrix(0, j, self.rows, 1)
    }

    pub fn select_columns(&self, cols: &[usize]) -> RMat {
        RMat::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])].clone())
    }

    pub fn max_abs(&self) -> Rat {
        self.data
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(Rat::zero)
    }
}
