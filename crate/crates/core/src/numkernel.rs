//! Dense linear-algebra kernels shared by the rest of the crate.
//!
//! Everything here works on `nalgebra` dynamic matrices. Invariant subspaces
//! are computed from a complex Schur form reordered with Givens swaps, and the
//! Sylvester/Lyapunov solvers are Bartels–Stewart on the same complex Schur
//! factors, so real and complex spectra are handled by one code path.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type Vector = DVector<f64>;

/// Default tolerance for classifying eigenvalues against a half-plane boundary.
pub const BOUNDARY_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular equation: {0}")]
    Singular(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("integration diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("Schur decomposition did not converge")]
    NoConvergence,
}

pub type Result<T> = std::result::Result<T, KernelError>;

/// Half-plane selector used for invariant subspaces and spectrum checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RegionKind {
    ClosedLeft,
    OpenLeft,
    ClosedRight,
    OpenRight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRegion {
    pub kind: RegionKind,
    pub tol: f64,
}

impl SpectralRegion {
    pub fn new(kind: RegionKind) -> Self {
        Self {
            kind,
            tol: BOUNDARY_TOL,
        }
    }

    pub fn with_tol(kind: RegionKind, tol: f64) -> Self {
        assert!(
            (0.0..1.0).contains(&tol),
            "region tolerance must lie in [0, 1)"
        );
        Self { kind, tol }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        match self.kind {
            RegionKind::ClosedLeft => z.re <= self.tol,
            RegionKind::OpenLeft => z.re < -self.tol,
            RegionKind::ClosedRight => z.re >= -self.tol,
            RegionKind::OpenRight => z.re > self.tol,
        }
    }

    /// True when `z` is within tolerance of the imaginary axis.
    pub fn on_boundary(&self, z: Complex64) -> bool {
        z.re.abs() <= self.tol
    }
}

pub fn check_square(m: &Mat) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(KernelError::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

pub fn check_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(KernelError::NonFinite(what.to_string()))
    }
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest singular value; zero for empty matrices.
pub fn norm2(m: &Mat) -> f64 {
    jacobi_svd(m).sigma.first().copied().unwrap_or(0.0)
}

/// Spectral norm of a complex matrix via its real embedding `[[X, −Y], [Y, X]]`.
pub fn cnorm2(m: &CMat) -> f64 {
    let re = m.map(|z| z.re);
    let im = m.map(|z| z.im);
    norm2(&block(&[&[&re, &(-&im)], &[&im, &re]]))
}

/// Singular value decomposition `M V = U Σ` from one-sided Jacobi rotations.
#[derive(Debug, Clone)]
pub struct Svd {
    /// Descending singular values, `min(rows, cols)` of them.
    pub sigma: Vec<f64>,
    /// Left singular vectors for the nonzero singular values (`rows × k`).
    pub u: Mat,
    /// Complete orthogonal right factor (`cols × cols`), columns ordered like `sigma`
    /// followed by the remaining nullspace directions.
    pub v: Mat,
}

// nalgebra's bidiagonal SVD mis-factors some matrices with exactly zero
// columns, so the kernels use this rotation-based variant instead.
pub fn jacobi_svd(m: &Mat) -> Svd {
    let (r, c) = m.shape();
    let mut a = m.clone();
    let mut v = Mat::identity(c, c);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let x = mat[(i, p)];
                        let y = mat[(i, q)];
                        mat[(i, p)] = cs * x - sn * y;
                        mat[(i, q)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..c).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let k = r.min(c);
    let sigma: Vec<f64> = order.iter().take(k).map(|&j| norms[j]).collect();
    let v_sorted = Mat::from_fn(c, c, |i, j| v[(i, order[j])]);
    let nonzero = sigma.iter().filter(|&&s| s > 0.0).count();
    let u = Mat::from_fn(r, nonzero, |i, j| a[(i, order[j])] / norms[order[j]]);
    Svd {
        sigma,
        u,
        v: v_sorted,
    }
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Eigen-decomposition of the symmetric part of `m`, eigenvalues descending.
pub fn symmetric_eig(m: &Mat) -> Result<(Vec<f64>, Mat)> {
    check_square(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok((vec![], Mat::zeros(0, 0)));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Mat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((vals, vecs))
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    symmetric_eig(m)
        .map(|(v, _)| *v.last().unwrap())
        .unwrap_or(f64::NAN)
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_fn(m: &Mat, f: impl Fn(f64) -> f64) -> Result<Mat> {
    let (vals, vecs) = symmetric_eig(m)?;
    let d = Mat::from_diagonal(&Vector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| f(v)),
    ));
    Ok(symmetrize(&(&vecs * d * vecs.transpose())))
}

/// Symmetric PSD square root; eigenvalues below `1e-12` are clipped to zero.
pub fn sqrt_psd(m: &Mat) -> Result<Mat> {
    sym_fn(m, |v| if v > 1e-12 { v.sqrt() } else { 0.0 })
}

/// Pseudo-inverse of a symmetric matrix with relative eigenvalue threshold.
pub fn pinv_sym(m: &Mat, threshold: f64) -> Result<Mat> {
    let scale = norm2(m).max(1.0);
    sym_fn(m, |v| {
        if v.abs() > threshold * scale {
            1.0 / v
        } else {
            0.0
        }
    })
}

pub fn inverse(m: &Mat) -> Result<Mat> {
    check_square(m)?;
    if m.is_empty() {
        return Ok(Mat::zeros(0, 0));
    }
    m.clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| KernelError::Singular("matrix inverse".into()))
}

/// Solves `m x = rhs` for complex data.
pub fn csolve(m: &CMat, rhs: &CMat) -> Result<CMat> {
    if m.is_empty() {
        return Ok(CMat::zeros(0, rhs.ncols()));
    }
    let lu = m.clone().lu();
    lu.solve(rhs)
        .filter(|x| x.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
        .ok_or_else(|| KernelError::Singular("complex linear solve".into()))
}

#[derive(Debug, Clone)]
pub struct RankInfo {
    pub rank: usize,
    /// Orthonormal basis of the right nullspace.
    pub nullspace: Mat,
    /// Orthonormal basis of the column space.
    pub range: Mat,
    pub singular_values: Vec<f64>,
}

pub fn default_rank_tol(m: &Mat) -> f64 {
    1e-9 * m.nrows().max(m.ncols()) as f64 * norm2(m)
}

/// Numerical rank with complete right and column-space bases.
///
/// `tol = None` uses `1e-9·max(rows, cols)·‖M‖`.
pub fn rank_tol(m: &Mat, tol: Option<f64>) -> RankInfo {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return RankInfo {
            rank: 0,
            nullspace: Mat::identity(c, c),
            range: Mat::zeros(r, 0),
            singular_values: vec![],
        };
    }
    let svd = jacobi_svd(m);
    let tol = tol.unwrap_or(1e-9 * r.max(c) as f64 * svd.sigma[0]);
    let rank = svd.sigma.iter().filter(|&&s| s > tol).count();
    let nullspace = svd.v.columns(rank, c - rank).into_owned();
    let range = if rank <= svd.u.ncols() {
        svd.u.columns(0, rank).into_owned()
    } else {
        Mat::zeros(r, 0)
    };
    RankInfo {
        rank,
        nullspace,
        range,
        singular_values: svd.sigma,
    }
}

/// Orthonormal completion: returns `[basis, complement]` as a square orthogonal matrix.
pub fn orthonormal_completion(basis: &Mat) -> Mat {
    let n = basis.nrows();
    let k = basis.ncols();
    let info = rank_tol(&basis.transpose(), Some(1e-12));
    let mut out = Mat::zeros(n, n);
    out.view_mut((0, 0), (n, k)).copy_from(basis);
    out.view_mut((0, k), (n, n - k))
        .copy_from(&info.nullspace.columns(0, n - k));
    out
}

pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    check_square(m)?;
    if m.is_empty() {
        return Ok(vec![]);
    }
    let (_, t) = complex_schur(&to_complex(m))?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Complex Schur form `M = Q T Qᴴ` with `T` upper triangular.
pub fn complex_schur(m: &CMat) -> Result<(CMat, CMat)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((CMat::zeros(0, 0), CMat::zeros(0, 0)));
    }
    let schur =
        Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(KernelError::NoConvergence)?;
    let (q, mut t) = schur.unpack();
    for j in 0..n {
        for i in j + 1..n {
            t[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }
    Ok((q, t))
}

/// Swaps diagonal entries `k` and `k+1` of an upper-triangular `t`, updating `q`.
fn swap_adjacent(q: &mut CMat, t: &mut CMat, k: usize) {
    let a = t[(k, k)];
    let b = t[(k + 1, k + 1)];
    let c = t[(k, k + 1)];
    // First column of the rotation is the eigenvector of the 2x2 block for `b`.
    let v0 = c;
    let v1 = b - a;
    let nrm = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
    if nrm == 0.0 {
        return;
    }
    let (v0, v1) = (v0 / nrm, v1 / nrm);
    let z = [[v0, -v1.conj()], [v1, v0.conj()]];
    let n = t.nrows();
    // t <- Zᴴ t on rows k, k+1
    for j in 0..n {
        let x = t[(k, j)];
        let y = t[(k + 1, j)];
        t[(k, j)] = z[0][0].conj() * x + z[1][0].conj() * y;
        t[(k + 1, j)] = z[0][1].conj() * x + z[1][1].conj() * y;
    }
    // t <- t Z and q <- q Z on columns k, k+1
    for m in [&mut *t, &mut *q] {
        for i in 0..m.nrows() {
            let x = m[(i, k)];
            let y = m[(i, k + 1)];
            m[(i, k)] = x * z[0][0] + y * z[1][0];
            m[(i, k + 1)] = x * z[0][1] + y * z[1][1];
        }
    }
    t[(k + 1, k)] = Complex64::new(0.0, 0.0);
    t[(k, k)] = b;
    t[(k + 1, k + 1)] = a;
}

/// Reorders a complex Schur form so that eigenvalues with `rank(λ) = 0` come
/// first, then rank 1, and so on (stable within a rank).
pub fn reorder_schur(q: &mut CMat, t: &mut CMat, rank: impl Fn(Complex64) -> usize) {
    let n = t.nrows();
    // Bubble sort by rank; n is small and swaps must be adjacent anyway.
    for pass in 0..n {
        let mut swapped = false;
        for k in 0..n.saturating_sub(1 + pass) {
            if rank(t[(k, k)]) > rank(t[(k + 1, k + 1)]) {
                swap_adjacent(q, t, k);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
}

/// Ordered complex Schur form with the selected eigenvalues leading.
pub fn ordered_complex_schur(
    m: &CMat,
    select: impl Fn(Complex64) -> bool,
) -> Result<(CMat, CMat, usize)> {
    let (mut q, mut t) = complex_schur(m)?;
    reorder_schur(&mut q, &mut t, |z| usize::from(!select(z)));
    let k = (0..t.nrows()).filter(|&i| select(t[(i, i)])).count();
    Ok((q, t, k))
}

/// Real orthonormal basis for a conjugation-invariant complex subspace.
pub fn realify_basis(v: &CMat) -> Mat {
    let (n, k) = v.shape();
    if k == 0 {
        return Mat::zeros(n, 0);
    }
    let mut stacked = Mat::zeros(n, 2 * k);
    for j in 0..k {
        for i in 0..n {
            stacked[(i, j)] = v[(i, j)].re;
            stacked[(i, k + j)] = v[(i, j)].im;
        }
    }
    let info = rank_tol(&stacked, Some(0.0));
    info.range.columns(0, k.min(info.rank)).into_owned()
}

#[derive(Debug, Clone)]
pub struct OrderedSchur {
    /// Orthonormal real basis of the invariant subspace for the selected eigenvalues.
    pub basis: Mat,
    pub in_region_count: usize,
    /// Set when some eigenvalue sits within tolerance of the region boundary.
    pub boundary: bool,
    pub eigenvalues: Vec<Complex64>,
}

/// Invariant subspace of a real matrix for the eigenvalues in `region`.
pub fn ordered_schur(m: &Mat, region: SpectralRegion) -> Result<OrderedSchur> {
    check_square(m)?;
    check_finite(m, "ordered_schur input")?;
    let (q, t, k) = ordered_complex_schur(&to_complex(m), |z| region.contains(z))?;
    let eigenvalues: Vec<Complex64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    let boundary = eigenvalues.iter().any(|&z| region.on_boundary(z));
    let basis = realify_basis(&q.columns(0, k).into_owned());
    Ok(OrderedSchur {
        basis,
        in_region_count: k,
        boundary,
        eigenvalues,
    })
}

/// Solves the triangular Sylvester equation `ta y + y tb = f`.
fn triangular_sylvester(ta: &CMat, tb: &CMat, f: &CMat, sep_tol: f64) -> Result<CMat> {
    let (m, n) = f.shape();
    let mut y = CMat::zeros(m, n);
    for k in 0..n {
        let mut rhs: Vec<Complex64> = (0..m).map(|i| f[(i, k)]).collect();
        for j in 0..k {
            let c = tb[(j, k)];
            for (i, r) in rhs.iter_mut().enumerate() {
                *r -= y[(i, j)] * c;
            }
        }
        let shift = tb[(k, k)];
        for i in (0..m).rev() {
            let mut s = rhs[i];
            for j in i + 1..m {
                s -= ta[(i, j)] * y[(j, k)];
            }
            let piv = ta[(i, i)] + shift;
            if piv.norm() <= sep_tol {
                return Err(KernelError::Singular(format!(
                    "eigenvalues {:.3e}{:+.3e}i and {:.3e}{:+.3e}i sum to zero",
                    ta[(i, i)].re,
                    ta[(i, i)].im,
                    shift.re,
                    shift.im
                )));
            }
            y[(i, k)] = s / piv;
        }
    }
    Ok(y)
}

/// Solves `A X + X B = C` (Bartels–Stewart on complex Schur factors).
pub fn solve_sylvester(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    check_square(a)?;
    check_square(b)?;
    if c.nrows() != a.nrows() || c.ncols() != b.nrows() {
        return Err(KernelError::Dimension(format!(
            "sylvester: A {}x{}, B {}x{}, C {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if c.is_empty() {
        return Ok(c.clone());
    }
    let (ua, ta) = complex_schur(&to_complex(a))?;
    let (ub, tb) = complex_schur(&to_complex(b))?;
    let f = ua.adjoint() * to_complex(c) * &ub;
    let scale = 1.0 + norm2(a) + norm2(b);
    let y = triangular_sylvester(&ta, &tb, &f, 1e-11 * scale)?;
    let x = (&ua * y * ub.adjoint()).map(|z| z.re);
    let resid = norm2(&(a * &x + &x * b - c));
    // Backward-stable bound: the residual scales with ‖X‖ as well as ‖C‖.
    if resid > 1e-9 * (1.0 + norm2(c) + scale * norm2(&x)) {
        return Err(KernelError::Singular(format!(
            "sylvester residual {resid:.3e}"
        )));
    }
    Ok(x)
}

/// Solves `Aᵀ Z + Z A = −Q` and returns the symmetrized solution.
pub fn solve_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    let z = solve_sylvester(&a.transpose(), a, &(-q))?;
    Ok(symmetrize(&z))
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
}

fn step_count(horizon: f64, step: f64) -> Result<(usize, f64)> {
    let valid = step > 0.0 && horizon >= 0.0 && horizon.is_finite();
    if !valid {
        return Err(KernelError::Dimension(format!(
            "invalid horizon {horizon} / step {step}"
        )));
    }
    let n = (horizon / step - 1e-9).ceil().max(0.0) as usize;
    let h = if n == 0 { 0.0 } else { horizon / n as f64 };
    Ok((n, h))
}

/// Classical RK4 on `x' = f(t, x)` with a fixed step that divides the horizon.
pub fn integrate_ode(
    f: impl Fn(f64, &Vector) -> Vector,
    x0: &Vector,
    horizon: f64,
    step: f64,
) -> Result<Trajectory> {
    let (n, h) = step_count(horizon, step)?;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut x = x0.clone();
    times.push(0.0);
    states.push(x.clone());
    for k in 0..n {
        let t = k as f64 * h;
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
        let k3 = f(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
        let k4 = f(t + h, &(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(KernelError::Divergence { t: t + h });
        }
        times.push((k + 1) as f64 * h);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

/// RK4 trajectory of `x' = A x`.
pub fn integrate_linear_ode(a: &Mat, x0: &Vector, horizon: f64, step: f64) -> Result<Trajectory> {
    check_square(a)?;
    if a.nrows() != x0.len() {
        return Err(KernelError::Dimension("initial state length".into()));
    }
    integrate_ode(|_, x| a * x, x0, horizon, step)
}

/// Composite Simpson rule on uniformly spaced samples; a trailing odd
/// interval is closed with the 3/8 rule.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ => {
            let intervals = n - 1;
            let (simpson_end, tail) = if intervals.is_multiple_of(2) {
                (n - 1, false)
            } else {
                (n - 4, true)
            };
            let mut s = values[0] + values[simpson_end];
            for (i, v) in values.iter().enumerate().take(simpson_end).skip(1) {
                s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = h / 3.0 * s;
            if tail {
                let v = &values[n - 4..];
                total += 3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3]);
            }
            total
        }
    }
}

/// Running integral at every sample: Simpson panels over completed interval
/// pairs, plus a trapezoid for a trailing odd interval.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..values.len() {
        if i % 2 == 0 {
            // Replace the trapezoid added at i-1 by a Simpson panel over [i-2, i].
            let prev_trap = 0.5 * h * (values[i - 2] + values[i - 1]);
            acc += -prev_trap + h / 3.0 * (values[i - 2] + 4.0 * values[i - 1] + values[i]);
        } else {
            acc += 0.5 * h * (values[i - 1] + values[i]);
        }
        out.push(acc);
    }
    out
}

pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).max().unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), b.shape()).copy_from(b);
        c += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.iter().map(|b| b.ncols()).max().unwrap_or(0);
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), b.shape()).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Block matrix from a row-major grid of blocks; block sizes must agree.
pub fn block(rows: &[&[&Mat]]) -> Mat {
    let row_mats: Vec<Mat> = rows.iter().map(|r| hstack(r)).collect();
    vstack(&row_mats.iter().collect::<Vec<_>>())
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, data)
    }

    #[test]
    fn symmetric_eig_examples() {
        let (v, _) = symmetric_eig(&Mat::identity(3, 3)).unwrap();
        assert_eq!(v, vec![1.0, 1.0, 1.0]);
        let (v, _) = symmetric_eig(&m(2, 2, &[2.0, 0.0, 0.0, -1.0])).unwrap();
        assert_eq!(v, vec![2.0, -1.0]);
        let (v, vecs) = symmetric_eig(&m(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!((v[0] - 3.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
        assert!((vecs.transpose() * &vecs - Mat::identity(2, 2)).norm() < 1e-10);
        assert!(symmetric_eig(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn ordered_schur_examples() {
        let s = ordered_schur(
            &m(2, 2, &[-1.0, 0.0, 0.0, 2.0]),
            SpectralRegion::new(RegionKind::ClosedLeft),
        )
        .unwrap();
        assert_eq!(s.in_region_count, 1);
        assert!((s.basis[(0, 0)].abs() - 1.0).abs() < 1e-12 && s.basis[(1, 0)].abs() < 1e-12);
        assert!(!s.boundary);

        let s = ordered_schur(
            &m(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            SpectralRegion::new(RegionKind::ClosedLeft),
        )
        .unwrap();
        assert_eq!(s.in_region_count, 2);
        assert!(s.boundary);

        let s = ordered_schur(
            &(-Mat::identity(2, 2)),
            SpectralRegion::new(RegionKind::OpenLeft),
        )
        .unwrap();
        assert_eq!(s.in_region_count, 2);
    }

    #[test]
    fn ordered_schur_complex_pair_stays_real() {
        // Eigenvalues -1 ± 2i and 3: the stable subspace is two-dimensional and real.
        let a = m(3, 3, &[-1.0, 2.0, 0.5, -2.0, -1.0, 1.0, 0.0, 0.0, 3.0]);
        let s = ordered_schur(&a, SpectralRegion::new(RegionKind::OpenLeft)).unwrap();
        assert_eq!(s.in_region_count, 2);
        let b = &s.basis;
        let resid = &a * b - b * (b.transpose() * &a * b);
        assert!(resid.norm() < 1e-10);
    }

    #[test]
    fn lyapunov_examples() {
        let z = solve_lyapunov(&m(1, 1, &[-1.0]), &m(1, 1, &[2.0])).unwrap();
        assert!((z[(0, 0)] - 1.0).abs() < 1e-12);
        let z = solve_lyapunov(&(-Mat::identity(2, 2)), &Mat::zeros(2, 2)).unwrap();
        assert!(z.norm() < 1e-14);
        let z = solve_lyapunov(
            &m(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
            &m(2, 2, &[2.0, 0.0, 0.0, 4.0]),
        )
        .unwrap();
        assert!((z - Mat::identity(2, 2)).norm() < 1e-12);
        // Resonant spectrum: λ = ±1 gives λᵢ+λⱼ = 0.
        assert!(solve_lyapunov(&m(2, 2, &[1.0, 0.0, 0.0, -1.0]), &Mat::identity(2, 2)).is_err());
    }

    #[test]
    fn sylvester_examples() {
        let x = solve_sylvester(&m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[2.0])).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-12);
        let x = solve_sylvester(&m(1, 1, &[1.0]), &m(1, 1, &[2.0]), &m(1, 1, &[0.0])).unwrap();
        assert_eq!(x[(0, 0)], 0.0);
        let x = solve_sylvester(
            &m(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            &m(1, 1, &[3.0]),
            &m(2, 1, &[4.0, 5.0]),
        )
        .unwrap();
        assert!((x - m(2, 1, &[1.0, 1.0])).norm() < 1e-12);
        assert!(solve_sylvester(&m(1, 1, &[1.0]), &m(1, 1, &[-1.0]), &m(1, 1, &[1.0])).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_tol(&Mat::zeros(2, 2), None).rank, 0);
        let r = rank_tol(&Mat::identity(3, 3), None);
        assert_eq!((r.rank, r.nullspace.ncols()), (3, 0));
        let r = rank_tol(&m(2, 2, &[1.0, 1.0, 1.0, 1.0]), None);
        assert_eq!(r.rank, 1);
        let v = r.nullspace.column(0);
        assert!((v[0] + v[1]).abs() < 1e-12 && (v[0].abs() - 0.5f64.sqrt()).abs() < 1e-12);
        // Wide matrices still get a full nullspace basis.
        let r = rank_tol(&m(1, 3, &[1.0, 0.0, 0.0]), None);
        assert_eq!((r.rank, r.nullspace.ncols()), (1, 2));
    }

    #[test]
    fn ode_examples() {
        let v = Vector::from_vec(vec![1.0, -2.0]);
        let tr = integrate_linear_ode(&Mat::zeros(2, 2), &v, 1.0, 0.1).unwrap();
        assert!(tr.states.iter().all(|s| s == &v));
        let tr = integrate_linear_ode(&m(1, 1, &[-1.0]), &Vector::from_element(1, 1.0), 1.0, 1e-3)
            .unwrap();
        assert!((tr.states.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-6);
        let tr = integrate_linear_ode(
            &m(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            &Vector::from_vec(vec![1.0, 0.0]),
            std::f64::consts::FRAC_PI_2,
            1e-3,
        )
        .unwrap();
        let x = tr.states.last().unwrap();
        assert!(x[0].abs() < 1e-6 && (x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |h: f64| {
            let tr = integrate_linear_ode(&m(1, 1, &[-1.0]), &Vector::from_element(1, 1.0), 1.0, h)
                .unwrap();
            (tr.states.last().unwrap()[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        for n in [3usize, 4, 5, 8, 11] {
            let h = 2.0 / (n - 1) as f64;
            let vals: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
            assert!((simpson(&vals, h) - 4.0).abs() < 1e-12, "n = {n}");
        }
        let vals: Vec<f64> = (0..9).map(|i| (i as f64 * 0.25).powi(2)).collect();
        let cum = cumulative_simpson(&vals, 0.25);
        assert!((cum[8] - 8.0 / 3.0).abs() < 1e-12);
    }

    fn arb_matrix(n: usize) -> impl Strategy<Value = Mat> {
        proptest::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| Mat::from_vec(n, n, v))
    }

    proptest! {
        #[test]
        fn eig_reconstructs(a in arb_matrix(4)) {
            let s = symmetrize(&a);
            let (vals, vecs) = symmetric_eig(&s).unwrap();
            let d = Mat::from_diagonal(&Vector::from_vec(vals));
            prop_assert!((&vecs * d * vecs.transpose() - &s).norm() < 1e-9);
        }

        #[test]
        fn ordered_schur_basis_is_invariant(a in arb_matrix(5)) {
            let s = ordered_schur(&a, SpectralRegion::new(RegionKind::OpenLeft)).unwrap();
            let b = &s.basis;
            prop_assert_eq!(b.ncols(), s.in_region_count);
            let resid = &a * b - b * (b.transpose() * &a * b);
            prop_assert!(resid.norm() < 1e-9 * (1.0 + a.norm()));
            prop_assert!((b.transpose() * b - Mat::identity(b.ncols(), b.ncols())).norm() < 1e-10);
        }

        #[test]
        fn lyapunov_residual(a in arb_matrix(3), q in arb_matrix(3)) {
            // Shift to make A stable so the equation is regular.
            let shift = norm2(&a) + 0.5;
            let a = a - Mat::identity(3, 3) * shift;
            let q = symmetrize(&q);
            let z = solve_lyapunov(&a, &q).unwrap();
            let r = a.transpose() * &z + &z * &a + &q;
            prop_assert!(r.norm() < 1e-9 * (1.0 + q.norm()));
        }
    }
}
