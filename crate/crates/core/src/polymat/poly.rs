//! Univariate polynomials in ξ with exact rational coefficients.

use super::rational::{rat, to_f64, Rat};
use crate::numkernel::{eigenvalues, Mat};
use num_complex::Complex64;
use num_traits::{One, Signed, Zero};
use std::fmt;

/// Coefficients ascending by degree; no trailing zeros.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Poly {
    coeffs: Vec<Rat>,
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, c)| match k {
                0 => super::rational::format_rational(c),
                1 => format!("{}ξ", super::rational::format_rational(c)),
                _ => format!("{}ξ^{k}", super::rational::format_rational(c)),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

impl Poly {
    pub fn new(mut coeffs: Vec<Rat>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn from_i64(c: &[i64]) -> Self {
        Self::new(c.iter().map(|&v| rat(v)).collect())
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(Rat::one())
    }

    pub fn constant(c: Rat) -> Self {
        Self::new(vec![c])
    }

    /// The indeterminate ξ.
    pub fn xi() -> Self {
        Self::new(vec![Rat::zero(), Rat::one()])
    }

    pub fn monomial(c: Rat, k: usize) -> Self {
        let mut v = vec![Rat::zero(); k + 1];
        v[k] = c;
        Self::new(v)
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> Rat {
        self.coeffs.get(k).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn lc(&self) -> Rat {
        self.coeffs.last().cloned().unwrap_or_else(Rat::zero)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.len() <= 1
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + o.coeff(k)).collect())
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - o.coeff(k)).collect())
    }

    pub fn neg(&self) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }

    pub fn scale(&self, s: &Rat) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![Rat::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    pub fn pow(&self, k: usize) -> Poly {
        (0..k).fold(Poly::one(), |acc, _| acc.mul(self))
    }

    /// Euclidean division `self = q·d + r`, `deg r < deg d`.
    pub fn div_rem(&self, d: &Poly) -> (Poly, Poly) {
        assert!(!d.is_zero(), "polynomial division by zero");
        let dd = d.coeffs.len() - 1;
        let lc = d.lc();
        let mut r = self.coeffs.clone();
        if r.len() <= dd {
            return (Poly::zero(), self.clone());
        }
        let mut q = vec![Rat::zero(); r.len() - dd];
        for k in (0..q.len()).rev() {
            let c = &r[k + dd] / &lc;
            if !c.is_zero() {
                for (j, dc) in d.coeffs.iter().enumerate() {
                    let v = &c * dc;
                    r[k + j] -= v;
                }
            }
            q[k] = c;
        }
        r.truncate(dd);
        (Poly::new(q), Poly::new(r))
    }

    /// Exact quotient; `None` if the division leaves a remainder.
    pub fn exact_div(&self, d: &Poly) -> Option<Poly> {
        let (q, r) = self.div_rem(d);
        r.is_zero().then_some(q)
    }

    pub fn monic(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        self.scale(&self.lc().recip())
    }

    /// Monic gcd (zero if both are zero).
    pub fn gcd(&self, o: &Poly) -> Poly {
        let (mut a, mut b) = (self.clone(), o.clone());
        while !b.is_zero() {
            let r = a.div_rem(&b).1;
            a = b;
            // Keep coefficients small.
            b = r.monic();
        }
        a.monic()
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * rat(k as i64))
                .collect(),
        )
    }

    pub fn eval(&self, x: &Rat) -> Rat {
        self.coeffs
            .iter()
            .rev()
            .fold(Rat::zero(), |acc, c| acc * x + c)
    }

    pub fn eval_c(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + to_f64(c))
    }

    /// `p(−ξ)`.
    pub fn reflect(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| if k % 2 == 0 { c.clone() } else { -c })
                .collect(),
        )
    }

    /// Splits `p(jω) = re(ω) + j·im(ω)` into real polynomials in ω.
    pub fn on_imaginary_axis(&self) -> (Poly, Poly) {
        let mut re = vec![Rat::zero(); self.coeffs.len()];
        let mut im = vec![Rat::zero(); self.coeffs.len()];
        for (k, c) in self.coeffs.iter().enumerate() {
            match k % 4 {
                0 => re[k] = c.clone(),
                1 => im[k] = c.clone(),
                2 => re[k] = -c,
                _ => im[k] = -c,
            }
        }
        (Poly::new(re), Poly::new(im))
    }

    /// Complex roots via companion-matrix eigenvalues.
    pub fn roots(&self) -> Vec<Complex64> {
        let Some(n) = self.degree() else {
            return Vec::new();
        };
        if n == 0 {
            return Vec::new();
        }
        let m = self.monic();
        let mut comp = Mat::zeros(n, n);
        for i in 1..n {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            comp[(i, n - 1)] = -to_f64(&m.coeff(i));
        }
        eigenvalues(&comp).unwrap_or_default()
    }

    /// Square-free part `p / gcd(p, p')`.
    pub fn square_free(&self) -> Poly {
        if self.degree().unwrap_or(0) == 0 {
            return self.clone();
        }
        let g = self.gcd(&self.derivative());
        self.exact_div(&g).expect("gcd divides").monic()
    }

    /// Cauchy bound on the moduli of the roots.
    pub fn root_bound(&self) -> Rat {
        let lc = self.lc().abs();
        let n = self.coeffs.len().saturating_sub(1);
        let max = self.coeffs[..n]
            .iter()
            .map(|c| c.abs() / &lc)
            .max()
            .unwrap_or_else(Rat::zero);
        Rat::one() + max
    }
}

/// Sturm sequence of a square-free polynomial.
pub struct Sturm {
    chain: Vec<Poly>,
}

impl Sturm {
    pub fn new(p: &Poly) -> Self {
        let p0 = p.square_free();
        let mut chain = vec![p0.clone(), p0.derivative()];
        while let Some(last) = chain.last() {
            if last.degree().unwrap_or(0) == 0 && !last.is_zero() {
                break;
            }
            if last.is_zero() {
                chain.pop();
                break;
            }
            let prev = &chain[chain.len() - 2];
            let r = prev.div_rem(last).1.neg();
            if r.is_zero() {
                break;
            }
            // Positive rescaling keeps the sign pattern.
            let r = r.scale(&r.lc().abs().recip());
            chain.push(r);
        }
        Self { chain }
    }

    fn sign_changes(&self, x: &Rat) -> usize {
        let mut last = 0i8;
        let mut changes = 0;
        for p in &self.chain {
            let v = p.eval(x);
            let s = if v.is_positive() {
                1
            } else if v.is_negative() {
                -1
            } else {
                0
            };
            if s != 0 {
                if last != 0 && s != last {
                    changes += 1;
                }
                last = s;
            }
        }
        changes
    }

    /// Number of distinct real roots in `(a, b]`.
    pub fn count(&self, a: &Rat, b: &Rat) -> usize {
        self.sign_changes(a).saturating_sub(self.sign_changes(b))
    }

    /// Disjoint intervals `(a, b]` inside `(lo, hi]` each containing exactly one root.
    pub fn isolate(&self, lo: &Rat, hi: &Rat) -> Vec<(Rat, Rat)> {
        let mut out = Vec::new();
        let mut stack = vec![(lo.clone(), hi.clone())];
        let two = rat(2);
        while let Some((a, b)) = stack.pop() {
            match self.count(&a, &b) {
                0 => {}
                1 => out.push((a, b)),
                _ => {
                    let mid = (&a + &b) / &two;
                    stack.push((a, mid.clone()));
                    stack.push((mid, b));
                }
            }
        }
        out.sort_by(|x, y| x.0.cmp(&y.0));
        out
    }
}
