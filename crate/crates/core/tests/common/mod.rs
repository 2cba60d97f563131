//! Seeded system generators with known dissipation certificates, and an
//! independent finite-horizon oracle for the available storage.

#![allow(dead_code)]

use passivity::numkernel::{
    min_eigenvalue, norm2, rank_tol, sqrt_psd, symmetric_eig, symmetrize, Mat, Vector,
};
use passivity::statespace::observability_matrix;
use passivity::statespace::StateSpaceSystem;
use passivity::storage::{available_energy, lmi_matrix, SupplyRate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generated system together with an `X ≻ 0` that satisfies its LMI.
pub struct Generated {
    pub sys: StateSpaceSystem,
    pub certificate: Mat,
    /// `D + Dᵀ ≻ 0` (passive) or `I − DᵀD ≻ 0` (gain).
    pub regular: bool,
}

fn dyadic(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half_range: i32, den: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| {
        rng.random_range(-half_range..=half_range) as f64 / den
    })
}

fn skew(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let m = dyadic(rng, n, n, 2, 2.0);
    &m - m.transpose()
}

/// Inverse of a unit lower-triangular integer matrix by forward substitution
/// (exact in floating point for small entries).
fn unit_lower_inverse(l: &Mat) -> Mat {
    let n = l.nrows();
    let mut inv = Mat::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let s: f64 = (j..i).map(|k| l[(i, k)] * inv[(k, j)]).sum();
            inv[(i, j)] = -s;
        }
    }
    inv
}

/// Integer matrix with determinant 1 and its exact inverse.
pub fn unimodular(rng: &mut ChaCha8Rng, n: usize) -> (Mat, Mat) {
    let lower = Mat::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => rng.random_range(-1..=1) as f64,
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Less => 0.0,
    });
    let upper_t = Mat::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => rng.random_range(-1..=1) as f64,
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Less => 0.0,
    });
    let upper = upper_t.transpose();
    let t = &lower * &upper;
    let t_inv = unit_lower_inverse(&upper_t).transpose() * unit_lower_inverse(&lower);
    (t, t_inv)
}

/// `X = UᵀΛU` with dyadic `Λ`, returned with its exact inverse.
fn certificate(rng: &mut ChaCha8Rng, d: usize) -> (Mat, Mat) {
    let (u, u_inv) = unimodular(rng, d);
    let lam: Vec<f64> = (0..d)
        .map(|_| [0.5, 1.0, 2.0][rng.random_range(0..3)])
        .collect();
    let l = Mat::from_diagonal(&Vector::from_vec(lam.clone()));
    let l_inv = Mat::from_diagonal(&Vector::from_vec(lam.iter().map(|v| 1.0 / v).collect()));
    (u.transpose() * l * &u, &u_inv * l_inv * u_inv.transpose())
}

/// Passive system with `Ω(X) = [Lᵀ; Wᵀ][L W]` for an `X ≻ 0`, `r` factor rows.
/// Entries are dyadic rationals, so exact-arithmetic paths see the data unrounded.
/// `r < n` makes `D + Dᵀ = WᵀW` singular.
pub fn passive_system(rng: &mut ChaCha8Rng, d: usize, n: usize, r: usize) -> Generated {
    let (x, x_inv) = certificate(rng, d);
    let l = dyadic(rng, r, d, 2, 2.0);
    let w = dyadic(rng, r, n, 2, 2.0);
    let b = dyadic(rng, d, n, 2, 2.0);
    let a = &x_inv * (l.transpose() * &l * -0.5 + skew(rng, d));
    let c = w.transpose() * &l + b.transpose() * &x;
    let dd = w.transpose() * &w * 0.5 + skew(rng, n) * 0.5;
    let regular = passivity::numkernel::min_eigenvalue(&(&dd + dd.transpose())) > 1e-9;
    let sys = StateSpaceSystem::new(a, b, c, dd).expect("consistent dimensions");
    Generated {
        sys,
        certificate: x,
        regular,
    }
}

/// Non-expansive system with `Λ(X) = [Lᵀ; Wᵀ][L W]`, `‖D‖ ≤ ½`.
pub fn nonexpansive_system(rng: &mut ChaCha8Rng, d: usize, p: usize, n: usize) -> Generated {
    let (x, x_inv) = certificate(rng, d);
    let b = dyadic(rng, d, n, 2, 2.0);
    let c = dyadic(rng, p, d, 2, 2.0);
    let dd = dyadic(rng, p, n, 1, 4.0);
    let w = sqrt_psd(&(Mat::identity(n, n) - dd.transpose() * &dd)).expect("psd");
    let w_inv_t = passivity::numkernel::inverse(&w)
        .expect("invertible")
        .transpose();
    let l = -(w_inv_t * (dd.transpose() * &c + b.transpose() * &x));
    let a = &x_inv * ((c.transpose() * &c + l.transpose() * &l) * -0.5 + skew(rng, d));
    let sys = StateSpaceSystem::new(a, b, c, dd).expect("consistent dimensions");
    Generated {
        sys,
        certificate: x,
        regular: true,
    }
}

/// Mixed suite used by the randomized checks: one system per index, `d ≤ 4`.
/// Every third passive system has a singular feedthrough weight.
pub fn passive_suite(seed: u64, count: usize) -> Vec<Generated> {
    let mut rng = rng(seed);
    (0..count)
        .map(|i| {
            let d = rng.random_range(1..=4);
            let n = rng.random_range(1..=2);
            let r = if i % 3 == 2 {
                rng.random_range(0..n)
            } else {
                n
            };
            passive_system(&mut rng, d, n, r)
        })
        .collect()
}

pub fn gain_suite(seed: u64, count: usize) -> Vec<Generated> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let d = rng.random_range(1..=4);
            let p = rng.random_range(1..=2);
            let n = rng.random_range(1..=2);
            nonexpansive_system(&mut rng, d, p, n)
        })
        .collect()
}

pub fn random_state(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
}

/// `ker X = ker V_o`: the rank of `X` equals that of `V_o` and `V_o` kills `ker X`.
fn kernels_agree(sys: &StateSpaceSystem, x: &Mat) -> bool {
    let vo = observability_matrix(sys);
    let ro = rank_tol(&vo, None);
    let rx = rank_tol(x, Some(1e-7 * (1.0 + norm2(x))));
    if ro.rank != rx.rank {
        return false;
    }
    let (_, vecs) = symmetric_eig(x).unwrap();
    let d = x.nrows();
    d == rx.rank || norm2(&(&vo * vecs.columns(rx.rank, d - rx.rank))) <= 1e-6 * (1.0 + norm2(&vo))
}

/// Available storage succeeds, satisfies the LMI, lies below the generator's
/// certificate and has the kernel of `V_o`.
pub fn check_storage_invariants(g: &Generated, supply: SupplyRate) -> Result<(), String> {
    let (st, _) = available_energy(&g.sys, supply).map_err(|e| format!("available_energy: {e}"))?;
    let x = &st.x;
    let lmi = min_eigenvalue(&symmetrize(&lmi_matrix(&g.sys, x, supply).unwrap()));
    if lmi < -1e-7 {
        return Err(format!("LMI min eigenvalue {lmi:.3e}"));
    }
    let gap = min_eigenvalue(&symmetrize(&(&g.certificate - x)));
    if gap < -1e-7 {
        return Err(format!("X₋ not below certificate: {gap:.3e}"));
    }
    if !kernels_agree(&g.sys, x) {
        return Err("ker X₋ ≠ ker V_o".into());
    }
    Ok(())
}

/// Finite-horizon extraction oracle for the passive supply. Over
/// piecewise-constant inputs on `segments` intervals, the extracted energy
/// `−∫uᵀy` is a concave quadratic in the input values; its maximum is the
/// quadratic form `x₀ᵀF_Tx₀`, kept for each horizon `T`.
pub struct FiniteHorizonOracle {
    pub forms: Vec<Mat>,
}

impl FiniteHorizonOracle {
    pub fn new(sys: &StateSpaceSystem, horizons: &[f64], segments: usize) -> Self {
        Self {
            forms: horizons
                .iter()
                .map(|&t| horizon_form(sys, t, segments))
                .collect(),
        }
    }

    /// Best extracted energy over the scanned horizons.
    pub fn value(&self, x0: &Vector) -> f64 {
        self.forms
            .iter()
            .map(|f| x0.dot(&(f * x0)))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn horizon_form(sys: &StateSpaceSystem, horizon: f64, segments: usize) -> Mat {
    let (d, n) = (sys.states(), sys.inputs());
    let h = horizon / segments as f64;
    // Van Loan block: state, held input, integrated state.
    let size = 2 * d + n;
    let mut m = Mat::zeros(size, size);
    m.view_mut((0, 0), (d, d)).copy_from(&sys.a);
    m.view_mut((0, d), (d, n)).copy_from(&sys.b);
    m.view_mut((d + n, 0), (d, d))
        .copy_from(&Mat::identity(d, d));
    let e = (m * h).exp();
    let phi = e.view((0, 0), (d, d)).into_owned();
    let gamma = e.view((0, d), (d, n)).into_owned();
    let psi_x = e.view((d + n, 0), (d, d)).into_owned();
    let psi_u = e.view((d + n, d), (d, n)).into_owned();
    let c_psi_x = &sys.c * psi_x;
    let direct = &sys.c * psi_u + &sys.d * h;

    // Supplied energy Σ u_kᵀ(CΨₓx_k + (CΨᵤ + hD)u_k) = UᵀQU + UᵀGx₀.
    let dim = segments * n;
    let mut q = Mat::zeros(dim, dim);
    let mut g = Mat::zeros(dim, d);
    let mut p_k = Mat::identity(d, d);
    let mut r_k = Mat::zeros(d, dim);
    for k in 0..segments {
        let rows = k * n;
        let coupling = &c_psi_x * &r_k;
        let mut qv = q.view_mut((rows, 0), (n, dim));
        qv += coupling;
        let mut qd = q.view_mut((rows, rows), (n, n));
        qd += &direct;
        g.view_mut((rows, 0), (n, d)).copy_from(&(&c_psi_x * &p_k));
        r_k = &phi * r_k;
        let mut rv = r_k.view_mut((0, rows), (d, n));
        rv += &gamma;
        p_k = &phi * p_k;
    }
    let qs = (&q + q.transpose()) * 0.5;
    // Extracted −UᵀQ_sU − UᵀGx₀ peaks at U = −½Q_s⁻¹Gx₀ with value ¼x₀ᵀGᵀQ_s⁻¹Gx₀.
    let chol = qs
        .cholesky()
        .expect("regular case: input weight is positive definite");
    let sol = chol.solve(&g);
    let f = g.transpose() * sol * 0.25;
    (&f + f.transpose()) * 0.5
}
