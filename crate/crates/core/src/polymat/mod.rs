//! Exact polynomial-matrix algebra for behavioral pairs `P(d/dt)u = Q(d/dt)y`:
//! extraction from and realization of state-space systems, positive-real and
//! bounded-real pair tests, and the signature transform between them.

mod matrix;
mod pairtest;
mod poly;
mod rational;

pub use matrix::{is_unimodular, row_echelon, row_reduce, Echelon, PolyMatrix};
pub use pairtest::{
    eval_row, is_bounded_real_pair, is_positive_real_pair, Condition, PairVerdict, SampleEntry,
    Verdict, Witness,
};
pub use poly::{Poly, Sturm};
pub use rational::{
    format_rational, parse_rational, rat, ratio, rationalize, to_f64, RMat, Rat, RATIONALIZE_BOUND,
};

use crate::statespace::StateSpaceSystem;
use num_traits::{One, Zero};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Q is singular")]
    SingularQ,
    #[error("Q⁻¹P is not proper")]
    Improper,
    #[error("value {0} cannot be rationalized within the denominator bound")]
    Rationalization(f64),
    #[error("exact verification failed: {0}")]
    Verification(String),
}

pub type Result<T> = std::result::Result<T, PolyError>;

/// The pair `(P, Q)` with `P` m×n and `Q` m×m.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyPair {
    pub p: PolyMatrix,
    pub q: PolyMatrix,
}

impl PolyPair {
    pub fn new(p: PolyMatrix, q: PolyMatrix) -> Result<Self> {
        if p.nrows() != q.nrows() || q.nrows() != q.ncols() {
            return Err(PolyError::Dimension(format!(
                "P is {}x{}, Q is {}x{}",
                p.nrows(),
                p.ncols(),
                q.nrows(),
                q.ncols()
            )));
        }
        Ok(Self { p, q })
    }

    /// Scalar pair from ascending integer coefficients.
    pub fn scalar(p: &[i64], q: &[i64]) -> Self {
        Self {
            p: PolyMatrix::scalar(Poly::from_i64(p)),
            q: PolyMatrix::scalar(Poly::from_i64(q)),
        }
    }

    pub fn outputs(&self) -> usize {
        self.q.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.p.ncols()
    }

    /// `[P  −Q]`.
    pub fn kernel_matrix(&self) -> PolyMatrix {
        PolyMatrix::hstack(&[&self.p, &self.q.neg()])
    }

    /// `deg det Q`, the McMillan degree of an observable realization.
    pub fn order(&self) -> Option<usize> {
        self.q.det().degree()
    }

    /// `U·(P, Q)`.
    pub fn left_multiply(&self, u: &PolyMatrix) -> PolyPair {
        PolyPair {
            p: u.mul(&self.p),
            q: u.mul(&self.q),
        }
    }

    /// Whether `other = U·self` for a unimodular `U`.
    pub fn equivalent(&self, other: &PolyPair) -> bool {
        if self.p.shape() != other.p.shape() || self.q.shape() != other.q.shape() {
            return false;
        }
        let Some(u) = other.q.right_divide(&self.q) else {
            return false;
        };
        is_unimodular(&u) && u.mul(&self.p) == other.p
    }

    /// Transfer matrix `Q(s)⁻¹P(s)` at a rational point.
    pub fn transfer_at(&self, s: &Rat) -> Option<RMat> {
        Some(self.q.eval_rat(s).inverse()?.mul(&self.p.eval_rat(s)))
    }
}

/// State-space system with exact rational matrices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactSystem {
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub d: RMat,
}

impl ExactSystem {
    pub fn new(a: RMat, b: RMat, c: RMat, d: RMat) -> Result<Self> {
        let n = a.nrows();
        let ok = a.ncols() == n
            && b.nrows() == n
            && c.ncols() == n
            && d.nrows() == c.nrows()
            && d.ncols() == b.ncols();
        if !ok {
            return Err(PolyError::Dimension(format!(
                "A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// Rationalizes a floating system; `Ok((sys, exact))` where `exact` says
    /// whether every entry was already representable without rounding.
    pub fn from_float(sys: &StateSpaceSystem) -> Result<(Self, bool)> {
        let conv = |m: &crate::numkernel::Mat| -> Result<RMat> {
            match RMat::from_f64(m, RATIONALIZE_BOUND) {
                Some(r) => Ok(r),
                None => {
                    let bad = m
                        .iter()
                        .copied()
                        .find(|v| rationalize(*v, RATIONALIZE_BOUND).is_none())
                        .unwrap_or(f64::NAN);
                    Err(PolyError::Rationalization(bad))
                }
            }
        };
        let s = Self::new(conv(&sys.a)?, conv(&sys.b)?, conv(&sys.c)?, conv(&sys.d)?)?;
        let exact = [
            (&s.a, &sys.a),
            (&s.b, &sys.b),
            (&s.c, &sys.c),
            (&s.d, &sys.d),
        ]
        .iter()
        .all(|(r, f)| r.to_f64() == **f);
        Ok((s, exact))
    }

    pub fn to_float(&self) -> StateSpaceSystem {
        StateSpaceSystem {
            a: self.a.to_f64(),
            b: self.b.to_f64(),
            c: self.c.to_f64(),
            d: self.d.to_f64(),
            label: String::new(),
        }
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn observability_matrix(&self) -> RMat {
        let n = self.states();
        let mut blocks = Vec::with_capacity(n);
        let mut cur = self.c.clone();
        for _ in 0..n {
            blocks.push(cur.clone());
            cur = cur.mul(&self.a);
        }
        RMat::vstack(&blocks.iter().collect::<Vec<_>>())
    }

    pub fn is_observable(&self) -> bool {
        self.states() == 0 || self.observability_matrix().rank() == self.states()
    }

    /// Exact `T` with `other = (T A T⁻¹, T B, C T⁻¹, D)`, or `None` when the
    /// two are not similar observable realizations.
    pub fn similarity_to(&self, other: &ExactSystem) -> Option<RMat> {
        let n = self.states();
        if other.states() != n
            || other.b.ncols() != self.b.ncols()
            || other.c.nrows() != self.c.nrows()
        {
            return None;
        }
        // V_other·T = V_self; any n independent rows of V_other determine T.
        let (v1, v2) = (self.observability_matrix(), other.observability_matrix());
        let (_, rows) = v2.transpose().rref();
        if rows.len() < n {
            return None;
        }
        let pick = |v: &RMat| {
            RMat::vstack(
                &rows
                    .iter()
                    .map(|&i| v.sub_matrix(i, 0, 1, n))
                    .collect::<Vec<_>>()
                    .iter()
                    .collect::<Vec<_>>(),
            )
        };
        let t = pick(&v2).inverse()?.mul(&pick(&v1));
        let t_inv = t.inverse()?;
        let ok = t.mul(&self.a).mul(&t_inv) == other.a
            && t.mul(&self.b) == other.b
            && self.c.mul(&t_inv) == other.c
            && self.d == other.d;
        ok.then_some(t)
    }

    /// `D + C(sI − A)⁻¹B` at a rational point.
    pub fn transfer_at(&self, s: &Rat) -> Option<RMat> {
        let n = self.states();
        if n == 0 {
            return Some(self.d.clone());
        }
        let pencil = RMat::identity(n).scale(s).sub(&self.a);
        Some(self.d.add(&self.c.mul(&pencil.inverse()?.mul(&self.b))))
    }

    /// Exact observer staircase: `(observable part, T)` with `T x` splitting
    /// into observable coordinates first. `T` is returned as `(T, T⁻¹)`.
    pub fn observable_part(&self) -> (ExactSystem, RMat, RMat) {
        let n = self.states();
        let null = self.observability_matrix().nullspace();
        if null.ncols() == 0 {
            return (self.clone(), RMat::identity(n), RMat::identity(n));
        }
        let completed = RMat::complete_with_units(&null);
        let k = null.ncols();
        let order: Vec<usize> = (k..n).chain(0..k).collect();
        let s = completed.select_columns(&order);
        let t = s.inverse().expect("completion is nonsingular");
        let no = n - k;
        let at = t.mul(&self.a).mul(&s);
        let bt = t.mul(&self.b);
        let ct = self.c.mul(&s);
        let part = ExactSystem {
            a: at.sub_matrix(0, 0, no, no),
            b: bt.sub_matrix(0, 0, no, bt.ncols()),
            c: ct.sub_matrix(0, 0, ct.nrows(), no),
            d: self.d.clone(),
        };
        (part, t, s)
    }
}

/// Unimodular completion certifying `(P, Q)` as the external behavior of a
/// realization: `[M N; U V]·[−D I −C; −B 0 ξI−A] = [−P Q 0; −E −F I]`.
#[derive(Clone, Debug)]
pub struct BehaviorCertificate {
    pub m: PolyMatrix,
    pub n: PolyMatrix,
    pub u: PolyMatrix,
    pub v: PolyMatrix,
    pub e: PolyMatrix,
    pub f: PolyMatrix,
    /// Observable part the pair was extracted from.
    pub observable: ExactSystem,
    /// True if the floating input had to be rounded to rationals.
    pub rationalized: bool,
}

/// Pair of a floating realization, rationalized once at the boundary.
pub fn behavior_from_realization(
    sys: &StateSpaceSystem,
) -> Result<(PolyPair, BehaviorCertificate)> {
    let (exact, was_exact) = ExactSystem::from_float(sys)?;
    let (pair, mut cert) = behavior_from_exact(&exact)?;
    cert.rationalized = !was_exact;
    Ok((pair, cert))
}

pub fn behavior_from_exact(sys: &ExactSystem) -> Result<(PolyPair, BehaviorCertificate)> {
    let (obs, _, _) = sys.observable_part();
    let (p_out, n_in) = (obs.c.nrows(), obs.b.ncols());
    let d = obs.states();
    if d == 0 {
        let pair = PolyPair::new(
            PolyMatrix::constant(obs.d.clone()),
            PolyMatrix::identity(p_out),
        )?;
        let cert = BehaviorCertificate {
            m: PolyMatrix::identity(p_out),
            n: PolyMatrix::zeros(p_out, 0),
            u: PolyMatrix::zeros(0, p_out),
            v: PolyMatrix::zeros(0, 0),
            e: PolyMatrix::zeros(0, n_in),
            f: PolyMatrix::zeros(0, p_out),
            observable: obs,
            rationalized: false,
        };
        return Ok((pair, cert));
    }
    // Row-reduce col(−C, ξI−A) to col(R, 0); R is unimodular by observability.
    let k = PolyMatrix::vstack(&[
        &PolyMatrix::constant(obs.c.neg()),
        &PolyMatrix::pencil(&obs.a),
    ]);
    let ech = row_echelon(&k);
    if ech.rank() != d {
        return Err(PolyError::Verification(
            "observable part lost column rank".into(),
        ));
    }
    let r = ech.h.sub_matrix(0, 0, d, d);
    let r_inv = r.unimodular_inverse().ok_or_else(|| {
        PolyError::Verification("reduced observer pencil is not unimodular".into())
    })?;
    let top = r_inv.mul(&ech.y.sub_matrix(0, 0, d, p_out + d));
    let bottom = ech.y.sub_matrix(d, 0, p_out, p_out + d);
    let mut m = bottom.sub_matrix(0, 0, p_out, p_out);
    let mut nn = bottom.sub_matrix(0, p_out, p_out, d);
    // Scalar pairs are normalized to monic Q; unimodular 1×1 factors are constants.
    if let Some(q) = m.one_by_one().filter(|q| !q.is_zero()) {
        let s = q.lc().recip();
        m = m.scale(&s);
        nn = nn.scale(&s);
    }
    let u = top.sub_matrix(0, 0, d, p_out);
    let v = top.sub_matrix(0, p_out, d, d);
    let dm = PolyMatrix::constant(obs.d.clone());
    let bm = PolyMatrix::constant(obs.b.clone());
    let p = m.mul(&dm).add(&nn.mul(&bm));
    let e = u.mul(&dm).add(&v.mul(&bm));
    let f = u.neg();
    let pair = PolyPair::new(p, m.clone())?;
    let cert = BehaviorCertificate {
        m,
        n: nn,
        u,
        v,
        e,
        f,
        observable: obs,
        rationalized: false,
    };
    verify_certificate(&pair, &cert)?;
    Ok((pair, cert))
}

fn verify_certificate(pair: &PolyPair, c: &BehaviorCertificate) -> Result<()> {
    let sys = &c.observable;
    let (p_out, d) = (sys.c.nrows(), sys.states());
    let y = PolyMatrix::vstack(&[
        &PolyMatrix::hstack(&[&c.m, &c.n]),
        &PolyMatrix::hstack(&[&c.u, &c.v]),
    ]);
    if !is_unimodular(&y) {
        return Err(PolyError::Verification(
            "completion is not unimodular".into(),
        ));
    }
    let cst = |m: RMat| PolyMatrix::constant(m);
    let lhs_r = PolyMatrix::vstack(&[
        &PolyMatrix::hstack(&[
            &cst(sys.d.neg()),
            &PolyMatrix::identity(p_out),
            &cst(sys.c.neg()),
        ]),
        &PolyMatrix::hstack(&[
            &cst(sys.b.neg()),
            &PolyMatrix::zeros(d, p_out),
            &PolyMatrix::pencil(&sys.a),
        ]),
    ]);
    let rhs = PolyMatrix::vstack(&[
        &PolyMatrix::hstack(&[&pair.p.neg(), &pair.q, &PolyMatrix::zeros(p_out, d)]),
        &PolyMatrix::hstack(&[&c.e.neg(), &c.f.neg(), &PolyMatrix::identity(d)]),
    ]);
    if y.mul(&lhs_r) != rhs {
        return Err(PolyError::Verification(
            "behavior identity does not hold".into(),
        ));
    }
    let mut checked = 0;
    for s in sample_points() {
        let (Some(h), Some(qs)) = (sys.transfer_at(&s), pair.q.eval_rat(&s).inverse()) else {
            continue;
        };
        if qs.mul(&pair.p.eval_rat(&s)) != h {
            return Err(PolyError::Verification(
                "Q⁻¹P differs from the transfer matrix".into(),
            ));
        }
        checked += 1;
        if checked == 3 {
            break;
        }
    }
    Ok(())
}

fn sample_points() -> impl Iterator<Item = Rat> {
    [(7, 3), (11, 5), (13, 1), (-17, 7), (29, 11), (101, 3)]
        .into_iter()
        .map(|(a, b)| ratio(a, b))
}

/// Feedthrough `D = lim Q⁻¹P` at infinity; errors if `Q⁻¹P` is improper.
pub fn feedthrough(pair: &PolyPair) -> Result<RMat> {
    let (q, p, degs) = row_reduce(&pair.q, &pair.p).ok_or(PolyError::SingularQ)?;
    let pdegs = p.row_degrees();
    for (i, pd) in pdegs.iter().enumerate() {
        if pd.is_some_and(|pd| pd > degs[i]) {
            return Err(PolyError::Improper);
        }
    }
    let qh = q.leading_row_coefficients(&degs);
    let ph = p.leading_row_coefficients(&degs);
    Ok(qh.inverse().ok_or(PolyError::SingularQ)?.mul(&ph))
}

/// Observable realization of `Q⁻¹P` in observer-companion form.
pub fn realize_observable_exact(pair: &PolyPair) -> Result<ExactSystem> {
    let (m, n) = (pair.outputs(), pair.inputs());
    if pair.q.det().is_zero() {
        return Err(PolyError::SingularQ);
    }
    let (q, p, degs) = row_reduce(&pair.q, &pair.p).ok_or(PolyError::SingularQ)?;
    for (i, pd) in p.row_degrees().iter().enumerate() {
        if pd.is_some_and(|pd| pd > degs[i]) {
            return Err(PolyError::Improper);
        }
    }
    let qh = q.leading_row_coefficients(&degs);
    let qh_inv = qh.inverse().ok_or(PolyError::SingularQ)?;
    let d = qh_inv.mul(&p.leading_row_coefficients(&degs));
    let r = p.sub(&q.mul_const(&d));
    let total: usize = degs.iter().sum();
    let offsets: Vec<usize> = degs
        .iter()
        .scan(0, |acc, &k| {
            let o = *acc;
            *acc += k;
            Some(o)
        })
        .collect();
    // Lower coefficients of Q and R stacked per row block, the shift A₀ and the selector E.
    let mut q_low = RMat::zeros(total, m);
    let mut r_low = RMat::zeros(total, n);
    let mut a0 = RMat::zeros(total, total);
    let mut e = RMat::zeros(m, total);
    for i in 0..m {
        let (o, k) = (offsets[i], degs[i]);
        for t in 0..k {
            let qc = q.coefficient(t);
            let rc = r.coefficient(t);
            for j in 0..m {
                q_low[(o + t, j)] = qc[(i, j)].clone();
            }
            for j in 0..n {
                r_low[(o + t, j)] = rc[(i, j)].clone();
            }
            if t + 1 < k {
                a0[(o + t + 1, o + t)] = Rat::one();
            }
        }
        if k > 0 {
            e[(i, o + k - 1)] = Rat::one();
        }
    }
    let c = qh_inv.mul(&e);
    let a = a0.sub(&q_low.mul(&c));
    let sys = ExactSystem::new(a, r_low, c, d)?;
    // Exact check of Q(s)·H(s) = P(s).
    let mut checked = 0;
    for s in sample_points() {
        let Some(h) = sys.transfer_at(&s) else {
            continue;
        };
        if pair.q.eval_rat(&s).mul(&h) != pair.p.eval_rat(&s) {
            return Err(PolyError::Verification(
                "realization does not reproduce Q⁻¹P".into(),
            ));
        }
        checked += 1;
        if checked == 3 {
            break;
        }
    }
    if !sys.is_observable() {
        return Err(PolyError::Verification(
            "observer-form realization is not observable".into(),
        ));
    }
    Ok(sys)
}

pub fn realize_observable(pair: &PolyPair) -> Result<StateSpaceSystem> {
    Ok(realize_observable_exact(pair)?.to_float())
}

/// Signature `Σ = S₂ − S₁` maximizing `deg det(P̃S₁ + Q̃S₂)`; ties go to the
/// lexicographically smallest `Σ` (so `−1` entries are preferred from the first channel on).
pub fn select_signature(pair: &PolyPair) -> Result<Vec<i8>> {
    let n = pair.inputs();
    if n != pair.outputs() {
        return Err(PolyError::Dimension(
            "signature selection needs square P".into(),
        ));
    }
    if n > 16 {
        return Err(PolyError::Dimension(
            "too many channels for signature enumeration".into(),
        ));
    }
    let mut best: Option<(usize, u32, Vec<i8>)> = None;
    for mask in 0u32..(1 << n) {
        // Bit i (from the most significant channel) set means channel i in S₁ (Σᵢ = −1).
        let sigma: Vec<i8> = (0..n)
            .map(|i| {
                if mask & (1 << (n - 1 - i)) != 0 {
                    -1
                } else {
                    1
                }
            })
            .collect();
        let hat = br_to_pr(pair, &sigma)?;
        let Some(deg) = hat.q.det().degree() else {
            continue;
        };
        if best.as_ref().is_none_or(|b| (b.0, b.1) < (deg, mask)) {
            best = Some((deg, mask, sigma));
        }
    }
    let (_, _, sigma) = best.ok_or(PolyError::SingularQ)?;
    feedthrough(&br_to_pr(pair, &sigma)?)?;
    Ok(sigma)
}

pub fn signature_matrix(sigma: &[i8]) -> RMat {
    let n = sigma.len();
    RMat::from_fn(n, n, |i, j| {
        if i == j {
            rat(sigma[i] as i64)
        } else {
            Rat::zero()
        }
    })
}

/// `(P̂, Q̂) = (½(PΣ + Q), ½(Q − PΣ))`.
pub fn br_to_pr(pair: &PolyPair, sigma: &[i8]) -> Result<PolyPair> {
    if sigma.len() != pair.inputs() || pair.inputs() != pair.outputs() {
        return Err(PolyError::Dimension("Σ must match square P".into()));
    }
    let half = ratio(1, 2);
    let ps = pair.p.mul_const(&signature_matrix(sigma));
    PolyPair::new(ps.add(&pair.q).scale(&half), pair.q.sub(&ps).scale(&half))
}

/// Inverse of [`br_to_pr`]: `P = (P̂ − Q̂)Σ`, `Q = P̂ + Q̂`.
pub fn pr_to_br(pair: &PolyPair, sigma: &[i8]) -> Result<PolyPair> {
    if sigma.len() != pair.inputs() {
        return Err(PolyError::Dimension("Σ must match P".into()));
    }
    let p = pair.p.sub(&pair.q).mul_const(&signature_matrix(sigma));
    PolyPair::new(p, pair.p.add(&pair.q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn sp(p: &[i64], q: &[i64]) -> PolyPair {
        PolyPair::scalar(p, q)
    }

    #[test]
    fn behavior_of_circuit1_observable_part() {
        let (pair, cert) = behavior_from_realization(&fixtures::circuit1()).unwrap();
        assert_eq!(cert.observable.states(), 1);
        assert!(pair.equivalent(&sp(&[1, 1], &[1, 1])), "{pair:?}");
        assert!(!cert.rationalized);
    }

    #[test]
    fn behavior_of_memoryless_and_first_order() {
        let sys = StateSpaceSystem::static_gain(crate::numkernel::Mat::from_element(1, 1, 2.5));
        let (pair, _) = behavior_from_realization(&sys).unwrap();
        assert_eq!(
            pair,
            PolyPair::new(
                PolyMatrix::constant(RMat::from_fn(1, 1, |_, _| ratio(5, 2))),
                PolyMatrix::identity(1)
            )
            .unwrap()
        );
        let (pair, _) = behavior_from_realization(&fixtures::scalar(-1.0, 1.0, 1.0, 0.0)).unwrap();
        assert_eq!(pair, sp(&[1], &[1, 1]));
    }

    #[test]
    fn behavior_of_circuit2() {
        let (pair, cert) = behavior_from_realization(&fixtures::circuit2()).unwrap();
        assert_eq!(cert.observable.states(), 2);
        assert!(pair.equivalent(&sp(&[0, 2], &[1, 0, 1])), "{pair:?}");
    }

    #[test]
    fn realize_examples() {
        let sys = realize_observable_exact(&sp(&[1, 1], &[1, 1])).unwrap();
        assert_eq!(sys.a, RMat::from_i64(1, 1, &[-1]));
        assert!(sys.b.is_zero());
        assert!(!sys.c.is_zero());
        assert_eq!(sys.d, RMat::from_i64(1, 1, &[1]));

        let sys = realize_observable_exact(&sp(&[1], &[1, 1])).unwrap();
        assert_eq!(sys.a, RMat::from_i64(1, 1, &[-1]));
        assert_eq!(sys.c.mul(&sys.b), RMat::from_i64(1, 1, &[1]));
        assert!(sys.d.is_zero());

        let d = RMat::from_i64(2, 2, &[1, 2, 3, 4]);
        let sys = realize_observable_exact(
            &PolyPair::new(PolyMatrix::constant(d.clone()), PolyMatrix::identity(2)).unwrap(),
        )
        .unwrap();
        assert_eq!(sys.states(), 0);
        assert_eq!(sys.d, d);
    }

    #[test]
    fn improper_pair_is_rejected() {
        assert_eq!(
            realize_observable_exact(&sp(&[0, 0, 1], &[1, 1])),
            Err(PolyError::Improper)
        );
        assert_eq!(
            realize_observable_exact(&sp(&[1], &[])),
            Err(PolyError::SingularQ)
        );
    }

    #[test]
    fn signature_examples() {
        assert_eq!(select_signature(&sp(&[1], &[2, 1])).unwrap(), vec![-1]);
        assert_eq!(select_signature(&sp(&[1], &[1, 1, 1])).unwrap(), vec![-1]);
        let zero = PolyPair::new(PolyMatrix::zeros(2, 2), PolyMatrix::identity(2)).unwrap();
        let s = select_signature(&zero).unwrap();
        assert!(br_to_pr(&zero, &s).unwrap().q.det().degree() == Some(0));
    }

    #[test]
    fn br_to_pr_examples() {
        let hat = br_to_pr(&sp(&[1], &[2, 1]), &[1]).unwrap();
        assert_eq!(
            hat.p,
            PolyMatrix::scalar(Poly::new(vec![ratio(3, 2), ratio(1, 2)]))
        );
        assert_eq!(
            hat.q,
            PolyMatrix::scalar(Poly::new(vec![ratio(1, 2), ratio(1, 2)]))
        );
        let q = PolyMatrix::scalar(Poly::from_i64(&[3, 1, 2]));
        let z = PolyPair::new(PolyMatrix::zeros(1, 1), q.clone()).unwrap();
        for s in [1, -1] {
            let h = br_to_pr(&z, &[s]).unwrap();
            assert_eq!(h.p, q.scale(&ratio(1, 2)));
            assert_eq!(h.q, q.scale(&ratio(1, 2)));
            assert_eq!(pr_to_br(&h, &[s]).unwrap(), z);
        }
    }

    #[test]
    fn feedthrough_via_row_reduction() {
        assert_eq!(
            feedthrough(&sp(&[1, 3], &[2, 2])).unwrap(),
            RMat::from_fn(1, 1, |_, _| ratio(3, 2))
        );
        assert!(feedthrough(&sp(&[1], &[1, 1])).unwrap().is_zero());
    }

    /// Integer system whose last `hidden` states are invisible in `y`.
    fn arb_exact_system() -> impl Strategy<Value = ExactSystem> {
        (1usize..4, 0usize..2, 1usize..3, 1usize..3).prop_flat_map(|(d, hidden, n, p)| {
            let size = d + hidden;
            proptest::collection::vec(-2i64..=2, size * size + size * n + p * d + p * n).prop_map(
                move |v| {
                    let (a, rest) = v.split_at(size * size);
                    let (b, rest) = rest.split_at(size * n);
                    let (c, dd) = rest.split_at(p * d);
                    let mut a = RMat::from_i64(size, size, a);
                    for i in 0..d {
                        for j in d..size {
                            a[(i, j)] = Rat::zero();
                        }
                    }
                    let c = RMat::from_fn(p, size, |i, j| {
                        if j < d {
                            rat(c[i * d + j])
                        } else {
                            Rat::zero()
                        }
                    });
                    ExactSystem::new(a, RMat::from_i64(size, n, b), c, RMat::from_i64(p, n, dd))
                        .unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn observable_part_round_trips_through_its_pair(sys in arb_exact_system()) {
            let (pair, cert) = behavior_from_exact(&sys).unwrap();
            let canonical = realize_observable_exact(&pair).unwrap();
            prop_assert!(cert.observable.similarity_to(&canonical).is_some());
            let float = realize_observable(&pair).unwrap();
            prop_assert!(crate::statespace::realization_similarity(&cert.observable.to_float(), &float).is_ok());
        }
    }

    #[test]
    fn exact_similarity_recovers_the_transform() {
        let sys = ExactSystem::new(
            RMat::from_i64(2, 2, &[0, 1, -2, -3]),
            RMat::from_i64(2, 1, &[0, 1]),
            RMat::from_i64(1, 2, &[1, 0]),
            RMat::from_i64(1, 1, &[0]),
        )
        .unwrap();
        let t = RMat::from_i64(2, 2, &[1, 2, 0, 1]);
        let ti = t.inverse().unwrap();
        let moved = ExactSystem::new(
            t.mul(&sys.a).mul(&ti),
            t.mul(&sys.b),
            sys.c.mul(&ti),
            sys.d.clone(),
        )
        .unwrap();
        assert_eq!(sys.similarity_to(&moved), Some(t));
        let other = ExactSystem::new(
            sys.a.clone(),
            sys.b.scale(&rat(2)),
            sys.c.clone(),
            sys.d.clone(),
        )
        .unwrap();
        assert_eq!(sys.similarity_to(&other), None);
    }
}
