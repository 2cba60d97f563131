//! Positive-real and bounded-real pair tests.
//!
//! Both share one shape: a para-Hermitian form `Φ` that must be ⪰ 0 on a
//! half-plane, `[P −Q]` of full row rank there, and a compatibility check
//! between the Smith zeros of `Bann·[P −Q]` and the left kernel `Bann` of `Φ`.

use super::matrix::{row_echelon, PolyMatrix};
use super::poly::{Poly, Sturm};
use super::rational::{rat, to_f64, Rat};
use super::PolyPair;
use crate::numkernel::{jacobi_svd, symmetric_eig, CMat, Mat, BOUNDARY_TOL};
use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    BoundaryInconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    A,
    B,
    C,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Witness {
    /// `vector` is an eigenvector (condition a) or a left null vector of `[P −Q](λ)` (condition b).
    Point {
        lambda: Complex64,
        vector: Vec<Complex64>,
    },
    /// Row `p(ξ)` with `p·Φ = 0` and `p(λ)[P −Q](λ) = 0` but `p(λ) ≠ 0`;
    /// coefficient rows ascending by degree.
    PolynomialRow {
        lambda: Complex64,
        coeffs: Vec<Vec<Complex64>>,
    },
}

impl Witness {
    pub fn lambda(&self) -> Complex64 {
        match self {
            Witness::Point { lambda, .. } | Witness::PolynomialRow { lambda, .. } => *lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub omega: f64,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub verdict: Verdict,
    pub failed_condition: Condition,
    pub witness: Option<Witness>,
    pub sample_log: Vec<SampleEntry>,
}

impl PairVerdict {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    PositiveReal,
    BoundedReal,
}

const GRID_POINTS: usize = 257;
const MAX_ISOLATION_DEGREE: usize = 64;

/// Positive-real pair test: `PQ* + QP* ⪰ 0` on ℂ₊, `[P −Q]` full row rank on ℂ̄₊,
/// and the left-kernel compatibility condition.
pub fn is_positive_real_pair(pair: &PolyPair) -> PairVerdict {
    assert_eq!(
        pair.inputs(),
        pair.outputs(),
        "positive-real pair test needs square P"
    );
    run(pair, Kind::PositiveReal)
}

/// Bounded-real pair test: the same three conditions with `QQ* − PP*` in
/// place of `PQ* + QP*`.
pub fn is_bounded_real_pair(pair: &PolyPair) -> PairVerdict {
    run(pair, Kind::BoundedReal)
}

fn run(pair: &PolyPair, kind: Kind) -> PairVerdict {
    let (p, q) = (&pair.p, &pair.q);
    let phi = match kind {
        Kind::PositiveReal => p.mul(&q.para()).add(&q.mul(&p.para())),
        Kind::BoundedReal => q.mul(&q.para()).sub(&p.mul(&p.para())),
    };
    // The form with the magnitude of its summands: rounding error scales with
    // ‖P‖‖Q‖ even when the form itself cancels (lossless directions).
    let form = |z: Complex64| -> (CMat, f64) {
        let (pz, qz) = (p.eval_c(z), q.eval_c(z));
        let (np, nq) = (cnorm_max(&pz), cnorm_max(&qz));
        match kind {
            Kind::PositiveReal => (&pz * qz.adjoint() + &qz * pz.adjoint(), np * nq),
            Kind::BoundedReal => (&qz * qz.adjoint() - &pz * pz.adjoint(), np * np + nq * nq),
        }
    };
    let mut log = Vec::new();
    let a = condition_a(&phi, q, &form, &mut log);
    let fail = |cond, w: Witness, log: Vec<SampleEntry>| PairVerdict {
        verdict: Verdict::Fail,
        failed_condition: cond,
        witness: Some(w),
        sample_log: log,
    };
    let inconclusive = match a {
        AxisOutcome::Negative(w) => return fail(Condition::A, w, log),
        AxisOutcome::Unresolved => true,
        AxisOutcome::Clear => false,
    };
    let ker = pair.kernel_matrix();
    if let Some(w) = condition_b(&ker) {
        return fail(Condition::B, w, log);
    }
    if let Some(w) = condition_c(&phi, &ker) {
        return fail(Condition::C, w, log);
    }
    PairVerdict {
        verdict: if inconclusive {
            Verdict::BoundaryInconclusive
        } else {
            Verdict::Pass
        },
        failed_condition: Condition::None,
        witness: None,
        sample_log: log,
    }
}

enum AxisOutcome {
    Clear,
    Negative(Witness),
    Unresolved,
}

/// Smallest eigenvalue of a Hermitian matrix with its eigenvector.
fn hermitian_min(h: &CMat) -> (f64, Vec<Complex64>) {
    let n = h.nrows();
    if n == 0 {
        return (f64::INFINITY, Vec::new());
    }
    let mut r = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            r[(i, j)] = v.re;
            r[(i + n, j + n)] = v.re;
            r[(i, j + n)] = -v.im;
            r[(i + n, j)] = v.im;
        }
    }
    let (vals, vecs) = symmetric_eig(&r).expect("finite Hermitian form");
    let k = vals.len() - 1;
    let v = (0..n)
        .map(|i| Complex64::new(vecs[(i, k)], vecs[(i + n, k)]))
        .collect();
    (vals[k], v)
}

fn cnorm_max(h: &CMat) -> f64 {
    h.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn condition_a(
    phi: &PolyMatrix,
    q: &PolyMatrix,
    form: &dyn Fn(Complex64) -> (CMat, f64),
    log: &mut Vec<SampleEntry>,
) -> AxisOutcome {
    let n = phi.nrows();
    if n == 0 {
        return AxisOutcome::Clear;
    }
    let tol = |h: &CMat, scale: f64| 1e-9 * (1.0 + cnorm_max(h).max(scale));
    let det_axis = phi.det().on_imaginary_axis().0;
    let mut omegas: Vec<f64> = (0..GRID_POINTS)
        .map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / (GRID_POINTS - 1) as f64))
        .collect();
    omegas.push(0.0);
    let mut unresolved = false;
    match det_axis.degree() {
        Some(deg) if deg <= MAX_ISOLATION_DEGREE => omegas.extend(isolation_points(&det_axis)),
        Some(_) => unresolved = true,
        None => {}
    }
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();
    let mut prev_sign = 0i8;
    let mut sign_changes = false;
    for &w in &omegas {
        let z = Complex64::new(0.0, w);
        let (h, scale) = form(z);
        let (min, vec) = hermitian_min(&h);
        log.push(SampleEntry {
            omega: w,
            min_eigenvalue: min,
        });
        if min < -tol(&h, scale) {
            return AxisOutcome::Negative(interior_witness(form, z, vec));
        }
        let sign = if det_axis.is_zero() {
            0
        } else if det_axis.eval_c(Complex64::new(w, 0.0)).re >= 0.0 {
            1
        } else {
            -1
        };
        if prev_sign != 0 && sign != prev_sign {
            sign_changes = true;
        }
        prev_sign = sign;
    }
    // Interior: a full circle around each ℂ̄₊ root of det Q (near an uncancelled
    // pole the form changes sign with the direction of approach) and a coarse grid.
    let mut interior = Vec::new();
    for root in q.det().roots() {
        if root.re >= -BOUNDARY_TOL {
            let r = 1e-3 * (1.0 + root.norm());
            for k in 0..16 {
                let th = k as f64 * std::f64::consts::PI / 8.0;
                interior.push(root + Complex64::from_polar(r, th));
            }
        }
    }
    for s in [1e-2, 1e-1, 1.0, 10.0] {
        for w in [0.0, 0.5, 1.0, 2.0, 5.0] {
            interior.push(Complex64::new(s, w));
        }
    }
    for z in interior.into_iter().filter(|z| z.re > 0.0) {
        let (h, scale) = form(z);
        let (min, vec) = hermitian_min(&h);
        if min < -tol(&h, scale) {
            return AxisOutcome::Negative(Witness::Point {
                lambda: z,
                vector: vec.into_iter().collect(),
            });
        }
    }
    if unresolved && sign_changes {
        AxisOutcome::Unresolved
    } else {
        AxisOutcome::Clear
    }
}

/// Moves an axis witness into the open right half-plane when the form stays negative there.
fn interior_witness(
    form: &dyn Fn(Complex64) -> (CMat, f64),
    z: Complex64,
    vec: Vec<Complex64>,
) -> Witness {
    for delta in [1e-2, 1e-3, 1e-4, 1e-6] {
        let zi = z + delta;
        let (h, scale) = form(zi);
        let (min, v) = hermitian_min(&h);
        if min < -1e-9 * (1.0 + cnorm_max(&h).max(scale)) {
            return Witness::Point {
                lambda: zi,
                vector: v.into_iter().collect(),
            };
        }
    }
    Witness::Point {
        lambda: z,
        vector: vec.into_iter().collect(),
    }
}

/// Sample frequencies, one in every gap between consecutive nonnegative real
/// roots of `p` and one beyond the last, so the inertia of the form is
/// sampled on every root-free interval of `[0, ∞)`.
fn isolation_points(p: &Poly) -> Vec<f64> {
    let sturm = Sturm::new(p);
    let bound = p.root_bound();
    let zero = Rat::zero();
    let mut intervals = sturm.isolate(&zero, &bound);
    let mut out = Vec::new();
    for iv in intervals.iter_mut() {
        // Endpoints must not be roots; lower endpoint 0 is refined away from a root at 0.
        while p.eval(&iv.0).is_zero() || p.eval(&iv.1).is_zero() {
            let mid = (&iv.0 + &iv.1) / rat(2);
            if p.eval(&iv.1).is_zero() && sturm.count(&iv.0, &mid) == 0 {
                // Root sits exactly at the upper endpoint: extend past it.
                let w = &iv.1 - &iv.0;
                let mut ext = &iv.1 + &w;
                while sturm.count(&iv.0, &ext) > 1 {
                    ext = (&iv.1 + &ext) / rat(2);
                }
                *iv = (iv.0.clone(), ext);
                if p.eval(&iv.1).is_zero() {
                    continue;
                }
                break;
            }
            if sturm.count(&iv.0, &mid) == 1 {
                iv.1 = mid;
            } else {
                iv.0 = mid;
            }
        }
        out.push(to_f64(&iv.0));
        out.push(to_f64(&iv.1));
    }
    let last = intervals
        .last()
        .map_or(bound.clone(), |iv| iv.1.clone().max(bound.clone()));
    out.push(to_f64(&last) + 1.0);
    out
}

/// Left null vectors `v` (`vᵀM ≈ 0`) of a complex matrix, relative tolerance `rel`.
fn left_null(m: &CMat, rel: f64) -> Vec<Vec<Complex64>> {
    let (r, c) = (m.nrows(), m.ncols());
    if r == 0 {
        return Vec::new();
    }
    // vᵀM = 0  ⟺  Mᵀv = 0, realified.
    let mut big = Mat::zeros(2 * c, 2 * r);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            big[(j, i)] = z.re;
            big[(j + c, i + r)] = z.re;
            big[(j, i + r)] = -z.im;
            big[(j + c, i)] = z.im;
        }
    }
    let svd = jacobi_svd(&big);
    let smax = svd.sigma.iter().copied().fold(0.0, f64::max).max(1e-300);
    let mut out = Vec::new();
    for k in 0..2 * r {
        let s = svd.sigma.get(k).copied().unwrap_or(0.0);
        if s <= rel * smax || c == 0 {
            out.push(
                (0..r)
                    .map(|i| Complex64::new(svd.v[(i, k)], svd.v[(i + r, k)]))
                    .collect(),
            );
        }
    }
    out
}

fn condition_b(ker: &PolyMatrix) -> Option<Witness> {
    let g = ker
        .maximal_minors()
        .into_iter()
        .fold(Poly::zero(), |acc, m| acc.gcd(&m));
    let point = |z: Complex64| {
        let v = left_null(&ker.eval_c(z), 1e-6)
            .into_iter()
            .next()
            .unwrap_or_default();
        Witness::Point {
            lambda: z,
            vector: v.into_iter().collect(),
        }
    };
    if g.is_zero() {
        return Some(point(Complex64::new(1.0, 0.0)));
    }
    g.roots()
        .into_iter()
        .find(|z| z.re >= -BOUNDARY_TOL)
        .map(point)
}

fn condition_c(phi: &PolyMatrix, ker: &PolyMatrix) -> Option<Witness> {
    let bann = row_echelon(phi).left_kernel();
    let k = bann.nrows();
    if k == 0 {
        return None;
    }
    debug_assert!(bann.mul(phi).is_zero());
    let xi = bann.mul(ker);
    let g = xi
        .maximal_minors()
        .into_iter()
        .fold(Poly::zero(), |acc, m| acc.gcd(&m));
    let zeros = if g.is_zero() {
        vec![Complex64::new(1.0, 0.0)]
    } else {
        g.roots()
    };
    for z in zeros {
        let bz = bann.eval_c(z);
        let scale = 1.0 + cnorm_max(&bz);
        for a in left_null(&xi.eval_c(z), 1e-6) {
            let row: Vec<Complex64> = (0..bz.ncols())
                .map(|j| (0..k).map(|i| a[i] * bz[(i, j)]).sum())
                .collect();
            let norm = row.iter().map(|v| v.norm()).fold(0.0, f64::max);
            if norm > 1e-6 * scale {
                let coeffs = bann
                    .coefficients()
                    .iter()
                    .map(|c| {
                        (0..c.ncols())
                            .map(|j| (0..k).map(|i| a[i] * to_f64(&c[(i, j)])).sum())
                            .collect()
                    })
                    .collect();
                return Some(Witness::PolynomialRow { lambda: z, coeffs });
            }
        }
    }
    None
}

/// `Σ_k coeffs[k]·λᵏ` for a polynomial-row witness.
pub fn eval_row(coeffs: &[Vec<Complex64>], z: Complex64) -> Vec<Complex64> {
    let width = coeffs.first().map_or(0, |c| c.len());
    let mut out = vec![Complex64::zero(); width];
    for c in coeffs.iter().rev() {
        for (o, v) in out.iter_mut().zip(c) {
            *o = *o * z + v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polymat::{
        br_to_pr, realize_observable, select_signature, Poly, PolyMatrix, PolyPair,
    };
    use crate::statespace::transfer_eval;
    use proptest::prelude::*;

    fn sp(p: &[i64], q: &[i64]) -> PolyPair {
        PolyPair::scalar(p, q)
    }

    #[test]
    fn positive_real_examples() {
        assert!(is_positive_real_pair(&sp(&[1, 1], &[1, 1])).passed());
        assert!(is_positive_real_pair(&sp(&[1], &[1, 1])).passed());
        let v = is_positive_real_pair(&sp(&[1], &[-1, 1]));
        assert_eq!(v.verdict, Verdict::Fail);
        assert_eq!(v.failed_condition, Condition::A);
        let z = v.witness.unwrap().lambda();
        assert!(z.re > 0.0);
        // Re H(λ) < 0 at the witness.
        let h = Complex64::new(1.0, 0.0) / (z - 1.0);
        assert!(h.re < 0.0);
    }

    #[test]
    fn lossless_pair_passes() {
        assert!(is_positive_real_pair(&sp(&[0, 2], &[1, 0, 1])).passed());
        // Negative residue at a boundary pole is caught inside ℂ₊.
        let v = is_positive_real_pair(&sp(&[-1], &[0, 1]));
        assert_eq!(v.failed_condition, Condition::A);
    }

    #[test]
    fn rank_condition_fails_on_common_rhp_factor() {
        // (ξ−1, (ξ−1)(ξ+1)) cancels at λ = 1.
        let v = is_positive_real_pair(&sp(&[-1, 1], &[-1, 0, 1]));
        assert_eq!(v.failed_condition, Condition::B);
        let w = v.witness.unwrap();
        assert!((w.lambda() - Complex64::new(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn bounded_real_examples() {
        let v = is_bounded_real_pair(&sp(&[1, 1], &[1, 1]));
        assert_eq!(v.verdict, Verdict::Fail);
        assert_eq!(v.failed_condition, Condition::C);
        let Some(Witness::PolynomialRow { lambda, coeffs }) = v.witness else {
            panic!("row witness")
        };
        let pz = eval_row(&coeffs, lambda);
        assert!(pz.iter().any(|c| c.norm() > 1e-6));
        assert!(is_bounded_real_pair(&sp(&[1], &[2, 1])).passed());
        assert!(is_bounded_real_pair(&sp(&[], &[1])).passed());
        assert_eq!(
            is_bounded_real_pair(&sp(&[2], &[1, 1])).failed_condition,
            Condition::A
        );
    }

    #[test]
    fn singular_form_with_compatible_kernel_passes_c() {
        // Φ ≡ 0 for a lossless scalar pair; Bann = 1, Ξ = [P −Q] has no zeros.
        assert!(is_positive_real_pair(&sp(&[0, 1], &[1])).passed());
    }

    fn small_pair() -> impl Strategy<Value = PolyPair> {
        (
            prop::collection::vec(-3i64..=3, 1..3),
            prop::collection::vec(-3i64..=3, 1..3),
            1i64..=3,
        )
            .prop_map(|(p, mut q, lead)| {
                // Keep Q⁻¹P proper: deg P ≤ deg Q with a nonzero leading Q coefficient.
                q.push(lead);
                let mut p = p;
                p.truncate(q.len());
                sp(&p, &q)
            })
    }

    fn pair_2x2() -> impl Strategy<Value = PolyPair> {
        // Q = ξI + Q₀ and P = P₀ + P₁ξ: row-reduced Q, so Q⁻¹P is proper.
        (
            prop::collection::vec(-2i64..=2, 4),
            prop::collection::vec(-2i64..=2, 8),
        )
            .prop_map(|(q0, p)| {
                let q = PolyMatrix::from_entries(
                    2,
                    2,
                    &[
                        Poly::from_i64(&[q0[0], 1]),
                        Poly::from_i64(&[q0[1]]),
                        Poly::from_i64(&[q0[2]]),
                        Poly::from_i64(&[q0[3], 1]),
                    ],
                );
                let p = PolyMatrix::from_entries(
                    2,
                    2,
                    &(0..4)
                        .map(|k| Poly::from_i64(&p[2 * k..2 * k + 2]))
                        .collect::<Vec<_>>(),
                );
                PolyPair::new(p, q).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn bounded_real_matches_transformed_positive_real(pair in prop_oneof![small_pair(), pair_2x2()]) {
            let sigma = select_signature(&pair).unwrap();
            let hat = br_to_pr(&pair, &sigma).unwrap();
            prop_assert_eq!(is_bounded_real_pair(&pair).passed(), is_positive_real_pair(&hat).passed());
        }

        #[test]
        fn positive_real_pairs_have_positive_real_transfer(pair in small_pair()) {
            if is_positive_real_pair(&pair).passed() {
                let sys = realize_observable(&pair).unwrap();
                for s in [0.1, 0.5, 1.0, 3.0, 10.0] {
                    let h = transfer_eval(&sys, Complex64::new(s, 0.0)).unwrap();
                    let herm = &h + h.adjoint();
                    prop_assert!(hermitian_min(&herm).0 >= -1e-9);
                }
            }
        }
    }
}
