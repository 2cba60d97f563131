//! State-space systems `x' = Ax + Bu, y = Cx + Du` and their structural
//! decompositions.

use crate::numkernel::{self as nk, CMat, KernelError, Mat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("system is not observable (rank {rank} < {d})")]
    NotObservable { rank: usize, d: usize },
    #[error("not equivalent realizations: {0}")]
    NotEquivalent(String),
    #[error("evaluation point {0} is too close to a pole")]
    PoleProximity(Complex64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T> = std::result::Result<T, SystemError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceSystem {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub label: String,
}

impl StateSpaceSystem {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let sys = Self {
            a,
            b,
            c,
            d,
            label: String::new(),
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn from_rows(
        d: usize,
        n: usize,
        m: usize,
        a: &[f64],
        b: &[f64],
        c: &[f64],
        dd: &[f64],
    ) -> Result<Self> {
        Self::new(
            Mat::from_row_slice(d, d, a),
            Mat::from_row_slice(d, n, b),
            Mat::from_row_slice(m, d, c),
            Mat::from_row_slice(m, n, dd),
        )
    }

    /// Memoryless system `y = D u`.
    pub fn static_gain(d: Mat) -> Self {
        let (m, n) = d.shape();
        Self {
            a: Mat::zeros(0, 0),
            b: Mat::zeros(0, n),
            c: Mat::zeros(m, 0),
            d,
            label: String::new(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.a.nrows();
        if self.a.ncols() != d
            || self.b.nrows() != d
            || self.c.ncols() != d
            || self.d.nrows() != self.c.nrows()
            || self.d.ncols() != self.b.ncols()
        {
            return Err(SystemError::Dimension(format!(
                "A {:?}, B {:?}, C {:?}, D {:?}",
                self.a.shape(),
                self.b.shape(),
                self.c.shape(),
                self.d.shape()
            )));
        }
        for (m, name) in [
            (&self.a, "A"),
            (&self.b, "B"),
            (&self.c, "C"),
            (&self.d, "D"),
        ] {
            if !m.iter().all(|v| v.is_finite()) {
                return Err(SystemError::NonFinite(name));
            }
        }
        Ok(())
    }

    /// State dimension.
    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    /// Number of inputs.
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Number of outputs.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// The system in coordinates `x̂ = T x`: `(TAT⁻¹, TB, CT⁻¹, D)`.
    pub fn transform(&self, t: &Mat) -> Result<Self> {
        let t_inv = nk::inverse(t)?;
        Ok(self.transform_with(t, &t_inv))
    }

    pub fn transform_with(&self, t: &Mat, t_inv: &Mat) -> Self {
        Self {
            a: t * &self.a * t_inv,
            b: t * &self.b,
            c: &self.c * t_inv,
            d: self.d.clone(),
            label: self.label.clone(),
        }
    }

    pub fn scale(&self) -> f64 {
        nk::norm2(&self.a)
            .max(nk::norm2(&self.b))
            .max(nk::norm2(&self.c))
            .max(1.0)
    }
}

/// `V_o = col(C, CA, …, CA^{d−1})`.
pub fn observability_matrix(sys: &StateSpaceSystem) -> Mat {
    let d = sys.states();
    let m = sys.outputs();
    let mut vo = Mat::zeros(m * d, d);
    let mut block = sys.c.clone();
    for k in 0..d {
        vo.view_mut((k * m, 0), (m, d)).copy_from(&block);
        block = &block * &sys.a;
    }
    vo
}

/// `(Aᵀ, Cᵀ)` as a system, so observability questions reuse the Krylov deflation.
fn dual(sys: &StateSpaceSystem) -> StateSpaceSystem {
    StateSpaceSystem {
        a: sys.a.transpose(),
        b: sys.c.transpose(),
        c: sys.b.transpose(),
        d: sys.d.transpose(),
        label: String::new(),
    }
}

/// Orthonormal basis of the row space of `V_o` (the orthogonal complement of
/// the unobservable subspace).
pub fn observable_subspace(sys: &StateSpaceSystem) -> Mat {
    controllable_subspace(&dual(sys))
}

pub fn is_observable(sys: &StateSpaceSystem) -> bool {
    observable_subspace(sys).ncols() == sys.states()
}

/// `col(C, CA/α, …, C(A/α)^{d−1})`: the row space of `V_o` with the power
/// blocks kept comparable in size.
fn scaled_observability(sys: &StateSpaceSystem, alpha: f64) -> Mat {
    let mut s = sys.clone();
    s.a /= alpha;
    observability_matrix(&s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StaircaseKind {
    Observer,
    Controller,
}

/// Orthogonal staircase decomposition. The transformed system is
/// `(TAT⁻¹, TB, CT⁻¹, D)`; the first `retained` coordinates are the
/// observable (observer kind) or controllable (controller kind) part.
#[derive(Debug, Clone)]
pub struct Staircase {
    pub kind: StaircaseKind,
    pub t: Mat,
    pub t_inv: Mat,
    pub retained: usize,
    pub transformed: StateSpaceSystem,
}

impl Staircase {
    fn from_basis(sys: &StateSpaceSystem, kind: StaircaseKind, basis: &Mat) -> Self {
        let s = nk::orthonormal_completion(basis);
        let t = s.transpose();
        let mut transformed = sys.transform_with(&t, &s);
        let k = basis.ncols();
        let d = sys.states();
        // Zero the blocks that vanish in exact arithmetic.
        match kind {
            StaircaseKind::Observer => {
                transformed.a.view_mut((0, k), (k, d - k)).fill(0.0);
                transformed
                    .c
                    .view_mut((0, k), (sys.outputs(), d - k))
                    .fill(0.0);
            }
            StaircaseKind::Controller => {
                transformed.a.view_mut((k, 0), (d - k, k)).fill(0.0);
                transformed
                    .b
                    .view_mut((k, 0), (d - k, sys.inputs()))
                    .fill(0.0);
            }
        }
        Staircase {
            kind,
            t,
            t_inv: s,
            retained: k,
            transformed,
        }
    }

    pub fn a11(&self) -> Mat {
        let k = self.retained;
        self.transformed.a.view((0, 0), (k, k)).into_owned()
    }

    pub fn a12(&self) -> Mat {
        let k = self.retained;
        let d = self.transformed.states();
        self.transformed.a.view((0, k), (k, d - k)).into_owned()
    }

    pub fn a21(&self) -> Mat {
        let k = self.retained;
        let d = self.transformed.states();
        self.transformed.a.view((k, 0), (d - k, k)).into_owned()
    }

    pub fn a22(&self) -> Mat {
        let k = self.retained;
        let d = self.transformed.states();
        self.transformed.a.view((k, k), (d - k, d - k)).into_owned()
    }

    pub fn b1(&self) -> Mat {
        self.transformed.b.rows(0, self.retained).into_owned()
    }

    pub fn b2(&self) -> Mat {
        let d = self.transformed.states();
        self.transformed
            .b
            .rows(self.retained, d - self.retained)
            .into_owned()
    }

    pub fn c1(&self) -> Mat {
        self.transformed.c.columns(0, self.retained).into_owned()
    }

    pub fn c2(&self) -> Mat {
        let d = self.transformed.states();
        self.transformed
            .c
            .columns(self.retained, d - self.retained)
            .into_owned()
    }

    /// Rows of `T` for the retained coordinates (`T₁`).
    pub fn t1(&self) -> Mat {
        self.t.rows(0, self.retained).into_owned()
    }

    /// The retained subsystem `(A₁₁, B₁, C₁, D)`.
    pub fn retained_system(&self) -> StateSpaceSystem {
        StateSpaceSystem {
            a: self.a11(),
            b: self.b1(),
            c: self.c1(),
            d: self.transformed.d.clone(),
            label: self.transformed.label.clone(),
        }
    }
}

/// Observable part first; the discarded columns of `T⁻¹` span `null(V_o)`.
pub fn observer_staircase(sys: &StateSpaceSystem) -> Staircase {
    let d = sys.states();
    let obs = observable_subspace(sys);
    let basis = if obs.ncols() == d {
        Mat::identity(d, d)
    } else {
        obs
    };
    Staircase::from_basis(sys, StaircaseKind::Observer, &basis)
}

/// Orthonormal basis of the controllable subspace by Krylov deflation.
pub fn controllable_subspace(sys: &StateSpaceSystem) -> Mat {
    let d = sys.states();
    let tol = 1e-9 * (d + sys.inputs()).max(1) as f64 * sys.scale();
    let mut basis = nk::rank_tol(&sys.b, Some(tol)).range;
    let mut frontier = basis.clone();
    while basis.ncols() < d && frontier.ncols() > 0 {
        let av = &sys.a * &frontier;
        let residual = &av - &basis * (basis.transpose() * &av);
        let fresh = nk::rank_tol(&residual, Some(tol)).range;
        if fresh.ncols() == 0 {
            break;
        }
        // Re-orthogonalize against the current basis before appending.
        let fresh = &fresh - &basis * (basis.transpose() * &fresh);
        let fresh = nk::rank_tol(&fresh, Some(1e-12)).range;
        basis = nk::hstack(&[&basis, &fresh]);
        frontier = fresh;
    }
    basis
}

/// Controllable part first: `TAT⁻¹ = [A₁₁ A₁₂; 0 A₂₂]`, `TB = col(B₁, 0)`.
pub fn controller_staircase(sys: &StateSpaceSystem) -> Staircase {
    let basis = controllable_subspace(sys);
    Staircase::from_basis(sys, StaircaseKind::Controller, &basis)
}

/// `T` with `sys2 = (T A₁ T⁻¹, T B₁, C₁ T⁻¹, D₁)` for two observable
/// realizations of the same behavior, verified on all four matrices.
pub fn realization_similarity(sys1: &StateSpaceSystem, sys2: &StateSpaceSystem) -> Result<Mat> {
    if sys1.inputs() != sys2.inputs() || sys1.outputs() != sys2.outputs() {
        return Err(SystemError::Dimension("input/output counts differ".into()));
    }
    for s in [sys1, sys2] {
        let rank = observable_subspace(s).ncols();
        if rank < s.states() {
            return Err(SystemError::NotObservable {
                rank,
                d: s.states(),
            });
        }
    }
    if sys1.states() != sys2.states() {
        return Err(SystemError::NotEquivalent(format!(
            "state dimensions {} and {}",
            sys1.states(),
            sys2.states()
        )));
    }
    let d = sys1.states();
    if d == 0 {
        if (&sys1.d - &sys2.d).norm() > 1e-8 * (1.0 + sys1.d.norm()) {
            return Err(SystemError::NotEquivalent("feedthrough differs".into()));
        }
        return Ok(Mat::zeros(0, 0));
    }
    // V_o2·T = V_o1 survives the common 1/α scaling of A. The solve goes
    // through the SVD; the normal equations would square the conditioning.
    let alpha = nk::norm2(&sys1.a).max(nk::norm2(&sys2.a)).max(1.0);
    let (vo1, vo2) = (
        scaled_observability(sys1, alpha),
        scaled_observability(sys2, alpha),
    );
    let svd = nk::jacobi_svd(&vo2);
    let v = svd.v.columns(0, d);
    let inv_sigma = Mat::from_diagonal(&nk::Vector::from_iterator(
        d,
        svd.sigma.iter().map(|s| 1.0 / s),
    ));
    let t = v * inv_sigma * svd.u.transpose() * vo1;
    let t_inv = nk::inverse(&t)?;
    let mapped = sys1.transform_with(&t, &t_inv);
    let scale = sys1.scale().max(sys2.scale());
    let tol = 1e-8 * scale;
    for (x, y, name) in [
        (&mapped.a, &sys2.a, "A"),
        (&mapped.b, &sys2.b, "B"),
        (&mapped.c, &sys2.c, "C"),
        (&mapped.d, &sys2.d, "D"),
    ] {
        let err = (x - y).norm();
        if err > tol {
            return Err(SystemError::NotEquivalent(format!(
                "{name} mismatch {err:.3e}"
            )));
        }
    }
    Ok(t)
}

/// `H(s) = D + C (sI − A)⁻¹ B`.
pub fn transfer_eval(sys: &StateSpaceSystem, s: Complex64) -> Result<CMat> {
    let d = sys.states();
    let dc = nk::to_complex(&sys.d);
    if d == 0 {
        return Ok(dc);
    }
    let eigs = nk::eigenvalues(&sys.a)?;
    let scale = 1.0 + nk::norm2(&sys.a);
    if eigs.iter().any(|&l| (l - s).norm() <= 1e-10 * scale) {
        return Err(SystemError::PoleProximity(s));
    }
    let resolvent = CMat::identity(d, d) * s - nk::to_complex(&sys.a);
    let x = nk::csolve(&resolvent, &nk::to_complex(&sys.b))?;
    Ok(dc + nk::to_complex(&sys.c) * x)
}

/// An eigenvalue of `A` that no input reaches, with a left-null witness
/// `zᵀ [λI − A, B] = 0` (plain transpose, no conjugation).
#[derive(Debug, Clone, PartialEq)]
pub struct UncontrollableMode {
    pub lambda: Complex64,
    pub z: Vec<Complex64>,
}

impl UncontrollableMode {
    /// `‖zᵀ[λI − A, B]‖` for the stored witness.
    pub fn residual(&self, sys: &StateSpaceSystem) -> f64 {
        let d = sys.states();
        let z = CMat::from_row_slice(1, d, &self.z);
        let pencil = nk::hstack(&[&(-&sys.a), &sys.b]);
        let mut m = nk::to_complex(&pencil);
        for i in 0..d {
            m[(i, i)] += self.lambda;
        }
        (z * m).norm()
    }
}

/// Eigenvector of `m` for the eigenvalue `lambda` by shifted inverse iteration.
pub(crate) fn eigenvector(m: &CMat, lambda: Complex64) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    let scale = 1.0 + nk::cnorm2(m);
    let shift = lambda + Complex64::new(1e-10 * scale, 1e-10 * scale);
    let shifted = m - CMat::identity(n, n) * shift;
    let mut w = CMat::from_fn(n, 1, |i, _| {
        Complex64::new(1.0 + 0.37 * i as f64, 0.11 * i as f64)
    });
    for _ in 0..4 {
        w = nk::csolve(&shifted, &w)?;
        let nrm = w.norm();
        w /= Complex64::new(nrm, 0.0);
    }
    Ok(w.column(0).iter().copied().collect())
}

/// Eigenvalues of the uncontrollable block `A₂₂` with left-null witnesses
/// expressed in the original coordinates.
pub fn uncontrollable_modes(sys: &StateSpaceSystem) -> Result<Vec<UncontrollableMode>> {
    let st = controller_staircase(sys);
    let d = sys.states();
    let k = st.retained;
    if k == d {
        return Ok(vec![]);
    }
    let a22 = st.a22();
    let a22t = nk::to_complex(&a22.transpose());
    let mut modes = Vec::new();
    for lambda in nk::eigenvalues(&a22)? {
        let w = eigenvector(&a22t, lambda)?;
        // zᵀ = [0, wᵀ] T, i.e. z = Tᵀ col(0, w).
        let mut padded = CMat::zeros(d, 1);
        for (i, wi) in w.iter().enumerate() {
            padded[(k + i, 0)] = *wi;
        }
        let z = nk::to_complex(&st.t.transpose()) * padded;
        let nrm = z.norm();
        let z: Vec<Complex64> = z.iter().map(|v| v / nrm).collect();
        modes.push(UncontrollableMode { lambda, z });
    }
    Ok(modes)
}

/// Spectrum of `A` for a system (complex, unordered).
pub fn spectrum(sys: &StateSpaceSystem) -> Result<Vec<Complex64>> {
    Ok(nk::eigenvalues(&sys.a)?)
}
