//! Dissipation inequalities and their minimal solutions.
//!
//! Both supply rates fit one Kalman–Yakubovich–Popov shape: with weights
//! `(Q_c, S, R)` the Riccati operator is
//! `F(X) = −AᵀX − XA − Q_c − (S − XB)R⁻¹(Sᵀ − BᵀX)` and the closed loop is
//! `A − BR⁻¹(Sᵀ − BᵀX)`. For `uᵀy`: `Q_c = 0, S = Cᵀ, R = D + Dᵀ` (Γ, A_Γ).
//! For `uᵀu − yᵀy`: `Q_c = CᵀC, S = −CᵀD, R = I − DᵀD` (Π, A_Π).

use crate::numkernel::{
    self as nk, block, complex_schur, eigenvalues, jacobi_svd, min_eigenvalue, norm2, pinv_sym,
    rank_tol, realify_basis, reorder_schur, solve_lyapunov, solve_sylvester, symmetrize,
    to_complex, CMat, KernelError, Mat, Vector,
};
use crate::statespace::{
    controller_staircase, observability_matrix, observer_staircase, uncontrollable_modes,
    StateSpaceSystem, SystemError,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupplyRate {
    /// `uᵀy`
    Passive,
    /// `uᵀu − yᵀy`
    Gain,
}

impl SupplyRate {
    pub fn rate(&self, u: &Vector, y: &Vector) -> f64 {
        match self {
            SupplyRate::Passive => u.dot(y),
            SupplyRate::Gain => u.dot(u) - y.dot(y),
        }
    }

    /// Factor in front of `x₀ᵀXx₀` in the storage value.
    pub fn value_scale(&self) -> f64 {
        match self {
            SupplyRate::Passive => 0.5,
            SupplyRate::Gain => 1.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular weight ({which}, min eigenvalue {min_eig:.3e}); use the reduction chain")]
    SingularWeight { which: &'static str, min_eig: f64 },
    #[error("not {}: {reason}", match .supply { SupplyRate::Passive => "passive", SupplyRate::Gain => "non-expansive" })]
    NotDissipative { supply: SupplyRate, reason: String },
    #[error("Hamiltonian has semisimple imaginary-axis eigenvalues near {0:?}; the stable subspace is ambiguous")]
    BoundaryAmbiguous(Vec<Complex64>),
    #[error("reduction chain: {0}")]
    Chain(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    System(#[from] SystemError),
}

pub type Result<T> = std::result::Result<T, StorageError>;

/// `½x₀ᵀXx₀` (passive) or `x₀ᵀXx₀` (gain).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticStorage {
    pub x: Mat,
    pub supply: SupplyRate,
}

impl QuadraticStorage {
    pub fn value(&self, x0: &Vector) -> f64 {
        self.supply.value_scale() * x0.dot(&(&self.x * x0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnboundedWitness {
    pub lambda: Complex64,
    pub z: Vec<Complex64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub min_eig_x: f64,
    pub min_eig_lmi: f64,
    pub riccati_residual: f64,
    pub closed_loop_spectrum: Vec<Complex64>,
    /// Hamiltonian eigenvalues on the imaginary axis were present (Jordan case, resolved).
    pub hamiltonian_boundary: bool,
    /// `‖V_o·ker X‖` and the smallest nonzero eigenvalue of `X` relative to `‖X‖`.
    pub kernel_margin: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiReport {
    pub feasible: bool,
    pub x_min: Option<QuadraticStorage>,
    pub bounded_above: bool,
    pub unbounded_witness: Option<UnboundedWitness>,
    pub diagnostics: Diagnostics,
}

struct Kyp {
    qc: Mat,
    s: Mat,
    r_inv: Mat,
}

fn weights(sys: &StateSpaceSystem, supply: SupplyRate) -> Result<Kyp> {
    let (qc, s, r, which) = match supply {
        SupplyRate::Passive => {
            if sys.inputs() != sys.outputs() {
                return Err(StorageError::Dimension(format!(
                    "passive supply needs m = n, got {} outputs and {} inputs",
                    sys.outputs(),
                    sys.inputs()
                )));
            }
            let n = sys.states();
            (
                Mat::zeros(n, n),
                sys.c.transpose(),
                &sys.d + sys.d.transpose(),
                "D + Dᵀ",
            )
        }
        SupplyRate::Gain => {
            let n = sys.inputs();
            (
                sys.c.transpose() * &sys.c,
                -(sys.c.transpose() * &sys.d),
                Mat::identity(n, n) - sys.d.transpose() * &sys.d,
                "I − DᵀD",
            )
        }
    };
    let min_eig = if r.is_empty() {
        f64::INFINITY
    } else {
        min_eigenvalue(&r)
    };
    if min_eig <= 1e-10 {
        return Err(StorageError::SingularWeight { which, min_eig });
    }
    let r_inv = nk::inverse(&r)?;
    Ok(Kyp { qc, s, r_inv })
}

fn check_x(sys: &StateSpaceSystem, x: &Mat) -> Result<()> {
    let d = sys.states();
    if x.shape() != (d, d) {
        return Err(StorageError::Dimension(format!(
            "X is {:?}, state dimension {d}",
            x.shape()
        )));
    }
    Ok(())
}

/// `Ω(X) = [−AᵀX − XA, Cᵀ − XB; C − BᵀX, D + Dᵀ]`.
pub fn omega(sys: &StateSpaceSystem, x: &Mat) -> Result<Mat> {
    check_x(sys, x)?;
    if sys.inputs() != sys.outputs() {
        return Err(StorageError::Dimension("Ω needs m = n".into()));
    }
    let tl = -(sys.a.transpose() * x) - x * &sys.a;
    let tr = sys.c.transpose() - x * &sys.b;
    let br = &sys.d + sys.d.transpose();
    Ok(block(&[&[&tl, &tr], &[&tr.transpose(), &br]]))
}

/// `Λ(X) = [−AᵀX − XA − CᵀC, −CᵀD − XB; −DᵀC − BᵀX, I − DᵀD]`.
pub fn lambda_lmi(sys: &StateSpaceSystem, x: &Mat) -> Result<Mat> {
    check_x(sys, x)?;
    let n = sys.inputs();
    let tl = -(sys.a.transpose() * x) - x * &sys.a - sys.c.transpose() * &sys.c;
    let tr = -(sys.c.transpose() * &sys.d) - x * &sys.b;
    let br = Mat::identity(n, n) - sys.d.transpose() * &sys.d;
    Ok(block(&[&[&tl, &tr], &[&tr.transpose(), &br]]))
}

pub fn lmi_matrix(sys: &StateSpaceSystem, x: &Mat, supply: SupplyRate) -> Result<Mat> {
    match supply {
        SupplyRate::Passive => omega(sys, x),
        SupplyRate::Gain => lambda_lmi(sys, x),
    }
}

/// Riccati operator `F(X)` for the supply rate (Γ or Π).
pub fn riccati(sys: &StateSpaceSystem, x: &Mat, supply: SupplyRate) -> Result<Mat> {
    check_x(sys, x)?;
    let k = weights(sys, supply)?;
    let g = &k.s - x * &sys.b;
    Ok(symmetrize(
        &(-(sys.a.transpose() * x) - x * &sys.a - &k.qc - &g * &k.r_inv * g.transpose()),
    ))
}

/// Closed loop `A − BR⁻¹(Sᵀ − BᵀX)` (A_Γ or A_Π).
pub fn closed_loop(sys: &StateSpaceSystem, x: &Mat, supply: SupplyRate) -> Result<Mat> {
    check_x(sys, x)?;
    let k = weights(sys, supply)?;
    Ok(&sys.a - &sys.b * &k.r_inv * (k.s.transpose() - sys.b.transpose() * x))
}

/// Feedback gain `R⁻¹(Sᵀ − BᵀX)`, so that the closed loop is `A − B·gain`.
pub fn feedback_gain(sys: &StateSpaceSystem, x: &Mat, supply: SupplyRate) -> Result<Mat> {
    check_x(sys, x)?;
    let k = weights(sys, supply)?;
    Ok(&k.r_inv * (k.s.transpose() - sys.b.transpose() * x))
}

/// `Γ(X) = −AᵀX − XA − (Cᵀ − XB)(D + Dᵀ)⁻¹(C − BᵀX)`.
pub fn gamma_are(sys: &StateSpaceSystem, x: &Mat) -> Result<Mat> {
    riccati(sys, x, SupplyRate::Passive)
}

/// `A_Γ(X) = A − B(D + Dᵀ)⁻¹(C − BᵀX)`.
pub fn a_gamma(sys: &StateSpaceSystem, x: &Mat) -> Result<Mat> {
    closed_loop(sys, x, SupplyRate::Passive)
}

/// `Π(X) = −AᵀX − XA − CᵀC − (CᵀD + XB)(I − DᵀD)⁻¹(DᵀC + BᵀX)`.
pub fn pi_are(sys: &StateSpaceSystem, x: &Mat) -> Result<Mat> {
    riccati(sys, x, SupplyRate::Gain)
}

/// `A_Π(X) = A + B(I − DᵀD)⁻¹(DᵀC + BᵀX)`.
pub fn a_pi(sys: &StateSpaceSystem, x: &Mat) -> Result<Mat> {
    closed_loop(sys, x, SupplyRate::Gain)
}

/// Rank-revealing Gram–Schmidt with column pivoting; first `k` directions.
fn complex_range(m: &CMat, k: usize) -> CMat {
    let n = m.nrows();
    let mut cols: Vec<Vec<Complex64>> = (0..m.ncols())
        .map(|j| m.column(j).iter().copied().collect())
        .collect();
    let mut out = CMat::zeros(n, k);
    for t in 0..k {
        let (best, _) = cols
            .iter()
            .enumerate()
            .map(|(j, c)| (j, c.iter().map(|v| v.norm_sqr()).sum::<f64>()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let v = cols.swap_remove(best);
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let q: Vec<Complex64> = v.iter().map(|z| z / nrm).collect();
        for c in cols.iter_mut() {
            let proj: Complex64 = q.iter().zip(c.iter()).map(|(a, b)| a.conj() * b).sum();
            for (ci, qi) in c.iter_mut().zip(&q) {
                *ci -= proj * qi;
            }
        }
        for (i, z) in q.into_iter().enumerate() {
            out[(i, t)] = z;
        }
    }
    out
}

/// Numerical rank of a complex matrix via its real embedding.
fn complex_rank(m: &CMat, rel: f64) -> usize {
    let (r, c) = m.shape();
    let mut big = Mat::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            big[(i, j)] = z.re;
            big[(i + r, j + c)] = z.re;
            big[(i, j + c)] = -z.im;
            big[(i + r, j)] = z.im;
        }
    }
    let sv = jacobi_svd(&big).sigma;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > rel * smax.max(1.0)).count() / 2
}

/// Basis of the `d`-dimensional ℂ̄₋ invariant subspace of a `2d×2d`
/// Hamiltonian. Eigenvalues on the imaginary axis must come in Jordan pairs;
/// for each such cluster the half-dimensional subspace `range(N^p)` of
/// `N = T_cc − μI` is used. Returns `(basis, boundary_seen)`.
pub fn hamiltonian_stable_subspace(h: &Mat, d: usize) -> Result<(Mat, bool)> {
    // Diagonal balancing first: observer-form realizations give badly scaled
    // Hamiltonians, and the axis tolerance below is relative to ‖H‖.
    let mut hb = h.clone();
    let scaling = nalgebra::linalg::balancing::balance_parlett_reinsch(&mut hb);
    let (basis, boundary) = balanced_stable_subspace(&hb, d)?;
    let back = Mat::from_diagonal(&scaling) * basis;
    Ok((back.qr().q(), boundary))
}

fn balanced_stable_subspace(h: &Mat, d: usize) -> Result<(Mat, bool)> {
    let tau = 1e-6 * (1.0 + norm2(h));
    let (q0, t0) = complex_schur(&to_complex(h))?;
    let eigs: Vec<Complex64> = (0..t0.nrows()).map(|i| t0[(i, i)]).collect();
    let mut axis: Vec<Complex64> = eigs.iter().copied().filter(|z| z.re.abs() <= tau).collect();
    let stable = eigs.iter().filter(|z| z.re < -tau).count();
    if axis.is_empty() {
        if stable != d {
            return Err(StorageError::NotDissipative {
                supply: SupplyRate::Passive,
                reason: format!("Hamiltonian has {stable} stable eigenvalues, expected {d}"),
            });
        }
        let (mut q, mut t) = (q0, t0);
        reorder_schur(&mut q, &mut t, |z| usize::from(z.re >= -tau));
        return Ok((realify_basis(&q.columns(0, d).into_owned()), false));
    }
    // Cluster axis eigenvalues by imaginary part.
    axis.sort_by(|a, b| a.im.total_cmp(&b.im));
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for z in axis {
        match clusters.last_mut() {
            Some(c) if (z.im - c.last().unwrap().im).abs() <= 10.0 * tau => c.push(z),
            _ => clusters.push(vec![z]),
        }
    }
    let mut pieces: Vec<CMat> = Vec::new();
    let mut total = stable;
    for (ci, cluster) in clusters.iter().enumerate() {
        let size = cluster.len();
        if size % 2 == 1 {
            return Err(StorageError::BoundaryAmbiguous(cluster.clone()));
        }
        let lo = cluster.first().unwrap().im - 5.0 * tau;
        let hi = cluster.last().unwrap().im + 5.0 * tau;
        let in_cluster = |z: Complex64| z.re.abs() <= tau && z.im >= lo && z.im <= hi;
        let (mut q, mut t) = (q0.clone(), t0.clone());
        reorder_schur(&mut q, &mut t, |z| {
            if z.re < -tau {
                0
            } else if in_cluster(z) {
                1
            } else {
                2
            }
        });
        if ci == 0 && stable > 0 {
            pieces.push(q.columns(0, stable).into_owned());
        }
        let tcc = t.view((stable, stable), (size, size)).into_owned();
        let mu = (0..size).map(|i| tcc[(i, i)]).sum::<Complex64>() / size as f64;
        let n = &tcc - CMat::identity(size, size) * mu;
        let mut power = n.clone();
        let mut found = None;
        for _ in 0..size {
            if complex_rank(&power, 1e-6) == size / 2 {
                found = Some(power.clone());
                break;
            }
            power = &power * &n;
        }
        let Some(np) = found else {
            return Err(StorageError::BoundaryAmbiguous(cluster.clone()));
        };
        let w = complex_range(&np, size / 2);
        pieces.push(q.columns(stable, size).into_owned() * w);
        total += size / 2;
    }
    if total != d {
        return Err(StorageError::NotDissipative {
            supply: SupplyRate::Passive,
            reason: format!(
                "Hamiltonian splits as {total} + {} instead of {d} + {d}",
                2 * d - total
            ),
        });
    }
    let cols: usize = pieces.iter().map(|p| p.ncols()).sum();
    let mut v = CMat::zeros(2 * d, cols);
    let mut c0 = 0;
    for p in &pieces {
        v.view_mut((0, c0), (2 * d, p.ncols())).copy_from(p);
        c0 += p.ncols();
    }
    Ok((realify_basis(&v), true))
}

/// Solution of `ĀᵀX + XĀ + XGX + Q₀ = 0` with `spec(Ā + GX) ⊆ ℂ̄₋`.
fn stabilizing_are(abar: &Mat, g: &Mat, q0: &Mat, supply: SupplyRate) -> Result<(Mat, bool)> {
    let d = abar.nrows();
    if d == 0 {
        return Ok((Mat::zeros(0, 0), false));
    }
    let h = block(&[&[abar, g], &[&-q0, &-abar.transpose()]]);
    let (basis, boundary) = hamiltonian_stable_subspace(&h, d).map_err(|e| match e {
        StorageError::NotDissipative { reason, .. } => {
            StorageError::NotDissipative { supply, reason }
        }
        other => other,
    })?;
    let x1 = basis.rows(0, d).into_owned();
    let x2 = basis.rows(d, d).into_owned();
    let info = rank_tol(&x1, Some(1e-10 * norm2(&basis).max(1.0)));
    if info.rank < d {
        return Err(StorageError::NotDissipative {
            supply,
            reason: "stable Hamiltonian subspace is not a graph subspace".into(),
        });
    }
    let x = &x2 * nk::inverse(&x1)?;
    let asym = (&x - x.transpose()).norm();
    if asym > 1e-6 * (1.0 + x.norm()) {
        return Err(StorageError::NotDissipative {
            supply,
            reason: format!("Riccati solution is not symmetric (asymmetry {asym:.2e})"),
        });
    }
    Ok((symmetrize(&x), boundary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinAreSolution {
    pub x: Mat,
    pub residual: f64,
    pub closed_loop_spectrum: Vec<Complex64>,
    pub hamiltonian_boundary: bool,
}

/// Minimal solution by the controller-staircase chain: Riccati on the
/// controllable part, a Sylvester equation for the coupling block and a
/// Lyapunov equation for the uncontrollable block.
pub fn solve_min_are(sys: &StateSpaceSystem, supply: SupplyRate) -> Result<MinAreSolution> {
    sys.validate()?;
    // Solve in diagonally balanced coordinates x̂ = D⁻¹x (realizations from
    // polynomial data can span many orders of magnitude), then pull back.
    let mut ab = sys.a.clone();
    let scaling = nalgebra::linalg::balancing::balance_parlett_reinsch(&mut ab);
    let t = Mat::from_diagonal(&scaling.map(|v| 1.0 / v));
    let t_inv = Mat::from_diagonal(&scaling);
    let mut sol = solve_min_are_in(&sys.transform_with(&t, &t_inv), supply)?;
    sol.x = symmetrize(&(&t * &sol.x * &t));
    sol.residual = riccati(sys, &sol.x, supply)?.norm();
    Ok(sol)
}

fn solve_min_are_in(sys: &StateSpaceSystem, supply: SupplyRate) -> Result<MinAreSolution> {
    let k = weights(sys, supply)?;
    let d = sys.states();
    if d == 0 {
        return Ok(MinAreSolution {
            x: Mat::zeros(0, 0),
            residual: 0.0,
            closed_loop_spectrum: Vec::new(),
            hamiltonian_boundary: false,
        });
    }
    let cs = controller_staircase(sys);
    let st = &cs.transformed;
    let kt = weights(st, supply)?;
    let d1 = cs.retained;
    let d2 = d - d1;
    let (a11, a12, a22, b1) = (cs.a11(), cs.a12(), cs.a22(), cs.b1());
    let s1 = kt.s.rows(0, d1).into_owned();
    let s2 = kt.s.rows(d1, d2).into_owned();
    let q11 = kt.qc.view((0, 0), (d1, d1)).into_owned();
    let q12 = kt.qc.view((0, d1), (d1, d2)).into_owned();
    let q21 = q12.transpose();
    let q22 = kt.qc.view((d1, d1), (d2, d2)).into_owned();
    let ri = &k.r_inv;

    let abar = &a11 - &b1 * ri * s1.transpose();
    let g = &b1 * ri * b1.transpose();
    let q0 = &q11 + &s1 * ri * s1.transpose();
    let (x11, boundary) = stabilizing_are(&abar, &g, &q0, supply)?;

    let xt = if d2 == 0 {
        x11
    } else {
        let k1 = ri * (s1.transpose() - b1.transpose() * &x11);
        let rhs = -(a12.transpose() * &x11) - &q21 - &s2 * &k1;
        let x21 = solve_sylvester(&a22.transpose(), &(&a11 - &b1 * &k1), &rhs)?;
        let x12 = x21.transpose();
        let m = pinv_sym(&x11, 1e-10)? * &x12;
        let s2p = &s2 - m.transpose() * &s1;
        let q22p = m.transpose() * &q11 * &m - m.transpose() * &q12 - &q21 * &m + &q22;
        let z = solve_lyapunov(&a22, &symmetrize(&(q22p + &s2p * ri * s2p.transpose())))?;
        let x22 = z + x12.transpose() * &m;
        block(&[&[&x11, &x12], &[&x21, &x22]])
    };
    let x = symmetrize(&(cs.t.transpose() * xt * &cs.t));

    let f = riccati(sys, &x, supply)?;
    let residual = f.norm();
    let scale =
        1.0 + norm2(&sys.a) * norm2(&x) + norm2(&k.qc) + norm2(&k.s).powi(2) * norm2(&k.r_inv);
    if residual > 1e-7 * scale {
        return Err(StorageError::NotDissipative {
            supply,
            reason: format!("Riccati residual {residual:.2e} exceeds tolerance"),
        });
    }
    let min_x = min_eigenvalue(&x);
    if min_x < -1e-7 * (1.0 + norm2(&x)) {
        return Err(StorageError::NotDissipative {
            supply,
            reason: format!("minimal Riccati solution is indefinite (min eigenvalue {min_x:.3e})"),
        });
    }
    let acl = closed_loop(sys, &x, supply)?;
    let closed_loop_spectrum = eigenvalues(&acl)?;
    let tol = 1e-6 * (1.0 + norm2(&acl));
    if let Some(z) = closed_loop_spectrum.iter().find(|z| z.re > tol) {
        return Err(StorageError::NotDissipative {
            supply,
            reason: format!("closed loop has eigenvalue {z} in the open right half-plane"),
        });
    }
    Ok(MinAreSolution {
        x,
        residual,
        closed_loop_spectrum,
        hamiltonian_boundary: boundary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmiCheck {
    pub pass: bool,
    pub min_eig_x: f64,
    pub min_eig_lmi: f64,
}

/// `X ⪰ 0` and `Ω(X) ⪰ 0` (or `Λ(X) ⪰ 0`) to within `−1e-9`.
pub fn lmi_feasibility_check(
    sys: &StateSpaceSystem,
    x: &Mat,
    supply: SupplyRate,
) -> Result<LmiCheck> {
    let lmi = lmi_matrix(sys, x, supply)?;
    let min_eig_x = if x.is_empty() {
        0.0
    } else {
        min_eigenvalue(&symmetrize(x))
    };
    let min_eig_lmi = if lmi.is_empty() {
        0.0
    } else {
        min_eigenvalue(&symmetrize(&lmi))
    };
    Ok(LmiCheck {
        pass: min_eig_x >= -1e-9 && min_eig_lmi >= -1e-9,
        min_eig_x,
        min_eig_lmi,
    })
}

/// Regular-case available storage: observer staircase, minimal Riccati
/// solution on the observable part, embedding `X₋ = T₁ᵀX̂₋T₁`, kernel check
/// and the bounded-above diagnostic. A singular weight hands over to the
/// reduction chain.
pub fn available_energy(
    sys: &StateSpaceSystem,
    supply: SupplyRate,
) -> Result<(QuadraticStorage, LmiReport)> {
    sys.validate()?;
    match weights(sys, supply) {
        Err(StorageError::SingularWeight { .. }) => return singular_energy(sys, supply),
        other => {
            other?;
        }
    }
    let obs = observer_staircase(sys);
    let sol = solve_min_are(&obs.retained_system(), supply)?;
    let t1 = obs.t1();
    let x = symmetrize(&(t1.transpose() * &sol.x * &t1));
    finish_report(
        sys,
        x,
        supply,
        sol.residual,
        sol.closed_loop_spectrum,
        sol.hamiltonian_boundary,
    )
}

fn singular_energy(
    sys: &StateSpaceSystem,
    supply: SupplyRate,
) -> Result<(QuadraticStorage, LmiReport)> {
    use crate::reduction::{factor_residual, run_chain, ReductionError};
    let (storage, factor, _) = run_chain(sys, supply).map_err(|e| match e {
        ReductionError::Storage(e) => e,
        e @ (ReductionError::NotPassive(_) | ReductionError::NotNonExpansive(_)) => {
            StorageError::NotDissipative {
                supply,
                reason: e.to_string(),
            }
        }
        e => StorageError::Chain(e.to_string()),
    })?;
    let residual = factor_residual(sys, &storage.x, &factor, supply)
        .map_err(|e| StorageError::Chain(e.to_string()))?;
    finish_report(sys, storage.x, supply, residual, Vec::new(), false)
}

/// Fills the report for an already computed `X₋` on the full state space.
pub fn finish_report(
    sys: &StateSpaceSystem,
    x: Mat,
    supply: SupplyRate,
    riccati_residual: f64,
    closed_loop_spectrum: Vec<Complex64>,
    hamiltonian_boundary: bool,
) -> Result<(QuadraticStorage, LmiReport)> {
    let check = lmi_feasibility_check(sys, &x, supply)?;
    let kernel_margin = kernel_agreement(sys, &x)?;
    let scale = 1.0 + norm2(&x);
    if kernel_margin.0 > 1e-6 * scale {
        return Err(StorageError::NotDissipative {
            supply,
            reason: format!("ker X₋ ⊄ ker V_o (margin {:.2e})", kernel_margin.0),
        });
    }
    let (bounded_above, unbounded_witness) = bounded_above(sys)?;
    let storage = QuadraticStorage { x, supply };
    let report = LmiReport {
        feasible: true,
        x_min: Some(storage.clone()),
        bounded_above,
        unbounded_witness,
        diagnostics: Diagnostics {
            min_eig_x: check.min_eig_x,
            min_eig_lmi: check.min_eig_lmi,
            riccati_residual,
            closed_loop_spectrum,
            hamiltonian_boundary,
            kernel_margin,
        },
    };
    Ok((storage, report))
}

/// `(‖V_o·N‖, σ_min⁺(X)/‖X‖)` where `N` spans `ker X` with the rank of `V_o`.
fn kernel_agreement(sys: &StateSpaceSystem, x: &Mat) -> Result<(f64, f64)> {
    let d = sys.states();
    if d == 0 {
        return Ok((0.0, 1.0));
    }
    let vo = observability_matrix(sys);
    let r = rank_tol(&vo, None).rank;
    let (vals, vecs) = nk::symmetric_eig(x)?;
    // The d − r smallest eigenvectors span ker X when the kernels agree.
    let kernel = vecs.columns(r, d - r).into_owned();
    let leak = if d > r {
        norm2(&(&vo * &kernel)) / (1.0 + norm2(&vo))
    } else {
        0.0
    };
    let top = vals.first().copied().unwrap_or(0.0).abs().max(1e-300);
    let gap = if r > 0 { vals[r - 1] / top } else { 1.0 };
    Ok((leak, gap))
}

/// Bounded above iff no uncontrollable mode lies in ℂ̄₋.
pub fn bounded_above(sys: &StateSpaceSystem) -> Result<(bool, Option<UnboundedWitness>)> {
    let modes = uncontrollable_modes(sys)?;
    let tol = nk::BOUNDARY_TOL * (1.0 + norm2(&sys.a));
    Ok(match modes.into_iter().find(|m| m.lambda.re <= tol) {
        Some(m) => (
            false,
            Some(UnboundedWitness {
                lambda: m.lambda,
                z: m.z,
            }),
        ),
        None => (true, None),
    })
}
