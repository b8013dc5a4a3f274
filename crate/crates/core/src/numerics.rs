//! Dense real linear algebra and scalar root location shared by the rest of
//! the crate: matrix exponential, tolerance-aware rank/null-space, observability
//! stacks, eigenvalue clustering with multiplicity chains, and first-zero
//! location of output functions t -> C e^{At} x0.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

/// Default relative rank tolerance (singular values below `tol * sigma_max`
/// are treated as zero).
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Default eigenvalue clustering tolerance.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-7;

type CMatrix = DMatrix<Complex<f64>>;

// ---------------------------------------------------------------------------
// matrix exponential
// ---------------------------------------------------------------------------

/// Computes `e^{At}` by scaling-and-squaring with a degree-13 Pade core.
///
/// Relative error is below 1e-12 for `||At|| <= 50`.
pub fn expm(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    assert!(a.is_square(), "expm: matrix must be square");
    assert!(t.is_finite(), "expm: time must be finite");
    let n = a.nrows();
    let at = a * t;

    // 1-norm of At drives the scaling power.
    let norm = one_norm(&at);
    const THETA13: f64 = 5.371920351148152;
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scaled = &at / 2f64.powi(s as i32);

    let mut f = pade13(&scaled, n);
    for _ in 0..s {
        f = &f * &f;
    }
    f
}

fn pade13(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9])
        + &a6 * B[7]
        + &a4 * B[5]
        + &a2 * B[3]
        + &id * B[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8])
        + &a6 * B[6]
        + &a4 * B[4]
        + &a2 * B[2]
        + &id * B[0];

    let lhs = &v - &u;
    let rhs = &v + &u;
    lhs.lu()
        .solve(&rhs)
        .expect("expm: Pade denominator is singular")
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest eigenvalue modulus of `a`.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// subspaces
// ---------------------------------------------------------------------------

/// A linear subspace of R^n carried by an orthonormal basis.
///
/// `dim() == 0` encodes the zero subspace.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: DMatrix<f64>,
    ambient: usize,
}

impl Subspace {
    /// Zero subspace of the given ambient dimension.
    pub fn zero(ambient: usize) -> Self {
        Subspace {
            basis: DMatrix::zeros(ambient, 0),
            ambient,
        }
    }

    /// Full ambient space.
    pub fn full(ambient: usize) -> Self {
        Subspace {
            basis: DMatrix::identity(ambient, ambient),
            ambient,
        }
    }

    /// Builds a subspace from a (not necessarily orthonormal or independent)
    /// spanning set given as matrix columns.
    pub fn from_span(cols: &DMatrix<f64>, tol: f64) -> Self {
        let ambient = cols.nrows();
        if cols.ncols() == 0 || cols.amax() == 0.0 {
            return Subspace::zero(ambient);
        }
        let svd = svd_of(cols);
        let sigma_max = svd.singular_values.amax();
        let r = svd
            .singular_values
            .iter()
            .filter(|&&s| s > tol * sigma_max)
            .count();
        let u = svd.u.expect("svd: U requested");
        Subspace {
            basis: u.columns(0, r.min(u.ncols())).into_owned(),
            ambient,
        }
    }

    /// Orthonormal basis (ambient x dim).
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    /// Orthogonal projection of `x` onto the subspace.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.dim() == 0 {
            return DVector::zeros(self.ambient);
        }
        &self.basis * (self.basis.transpose() * x)
    }

    /// Relative membership test: distance to the subspace below `tol * ||x||`.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let nx = x.norm();
        if nx == 0.0 {
            return true;
        }
        (x - self.project(x)).norm() <= tol * nx
    }

    /// True when every basis vector of `other` lies in `self`.
    pub fn contains_subspace(&self, other: &Subspace, tol: f64) -> bool {
        (0..other.dim()).all(|j| self.contains(&other.basis.column(j).into_owned(), tol))
    }

    /// Largest principal angle (radians) between two subspaces of equal
    /// dimension; returns `None` when the dimensions differ.
    pub fn max_principal_angle(&self, other: &Subspace) -> Option<f64> {
        if self.dim() != other.dim() {
            return None;
        }
        if self.dim() == 0 {
            return Some(0.0);
        }
        let m = self.basis.transpose() * &other.basis;
        let sv = svd_of(&m).singular_values;
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(smin.clamp(-1.0, 1.0).acos())
    }

    /// Intersection of two subspaces of the same ambient space.
    pub fn intersect(&self, other: &Subspace, tol: f64) -> Subspace {
        assert_eq!(self.ambient, other.ambient);
        let n = self.ambient;
        let p1 = DMatrix::identity(n, n) - &self.basis * self.basis.transpose();
        let p2 = DMatrix::identity(n, n) - &other.basis * other.basis.transpose();
        let mut stacked = DMatrix::zeros(2 * n, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&p1);
        stacked.view_mut((n, 0), (n, n)).copy_from(&p2);
        null_space(&stacked, tol)
    }

    /// Image of the subspace under `a`, as a subspace.
    pub fn map(&self, a: &DMatrix<f64>, tol: f64) -> Subspace {
        Subspace::from_span(&(a * &self.basis), tol)
    }
}

fn svd_of(m: &DMatrix<f64>) -> nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn> {
    m.clone().svd(true, true)
}

/// Orthonormal basis of `{x : Mx = 0}` with singular values thresholded at
/// `tol * sigma_max`.
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> Subspace {
    let n = m.ncols();
    // SVD of a wide matrix only exposes min(rows, cols) right singular
    // vectors; pad with zero rows so V^T is square.
    let work = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    if work.amax() == 0.0 {
        return Subspace::full(n);
    }
    let svd = svd_of(&work);
    let sv = &svd.singular_values;
    let sigma_max = sv.amax();
    let v_t = svd.v_t.expect("svd: V^T requested");
    let mut cols: Vec<usize> = Vec::new();
    for (i, &s) in sv.iter().enumerate() {
        if s <= tol * sigma_max {
            cols.push(i);
        }
    }
    // rows of V^T beyond the singular value count (none after padding).
    let mut basis = DMatrix::zeros(n, cols.len());
    for (k, &i) in cols.iter().enumerate() {
        basis.set_column(k, &v_t.row(i).transpose());
    }
    Subspace { basis, ambient: n }
}

/// Numerical rank with the same thresholding convention as [`null_space`].
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.amax() == 0.0 {
        return 0;
    }
    let svd = svd_of(m);
    let sigma_max = svd.singular_values.amax();
    svd.singular_values
        .iter()
        .filter(|&&s| s > tol * sigma_max)
        .count()
}

/// Vertical stack of two matrices with equal column counts.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(top.ncols(), bottom.ncols(), "vstack: column mismatch");
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), (top.nrows(), top.ncols())).copy_from(top);
    out.view_mut((top.nrows(), 0), (bottom.nrows(), bottom.ncols()))
        .copy_from(bottom);
    out
}

/// Observability stack `[C; CA; ...; CA^{n-1}]` for a SISO output row.
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || c.nrows() != 1 || c.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "observability_matrix",
            expected: format!("A n x n, C 1 x {n}"),
            got: format!("A {}x{}, C {}x{}", a.nrows(), a.ncols(), c.nrows(), c.ncols()),
        });
    }
    let mut out = DMatrix::zeros(n, n);
    let mut row = c.clone();
    for k in 0..n {
        out.row_mut(k).copy_from(&row.row(0));
        row = &row * a;
    }
    Ok(out)
}

/// Result of an invariance test, with a certificate on failure.
#[derive(Debug, Clone)]
pub struct InvarianceCheck {
    pub invariant: bool,
    /// `A v` for the worst-offending basis vector `v` (normalized), present
    /// exactly when `invariant` is false.
    pub witness: Option<DVector<f64>>,
    /// Largest relative residual over basis vectors.
    pub residual: f64,
}

/// Tests whether `a` maps the subspace into itself: for each basis column `v`,
/// the distance from `Av` to the subspace must be below `tol * ||A|| * ||v||`.
pub fn is_invariant(a: &DMatrix<f64>, v: &Subspace, tol: f64) -> InvarianceCheck {
    if v.dim() == 0 {
        return InvarianceCheck {
            invariant: true,
            witness: None,
            residual: 0.0,
        };
    }
    let scale = one_norm(a).max(1e-300);
    let mut worst = 0.0_f64;
    let mut witness: Option<DVector<f64>> = None;
    for j in 0..v.dim() {
        let col = v.basis().column(j).into_owned();
        let image = a * &col;
        let res = (&image - v.project(&image)).norm() / scale;
        if res > worst {
            worst = res;
            witness = Some(image.normalize());
        }
    }
    if worst <= tol {
        InvarianceCheck {
            invariant: true,
            witness: None,
            residual: worst,
        }
    } else {
        InvarianceCheck {
            invariant: false,
            witness,
            residual: worst,
        }
    }
}

// ---------------------------------------------------------------------------
// eigenstructure
// ---------------------------------------------------------------------------

/// One clustered eigenvalue with its multiplicity chain.
#[derive(Debug, Clone)]
pub struct EigenCluster {
    pub value: Complex<f64>,
    pub algebraic: usize,
    pub geometric: usize,
    /// `dim N((lambda I - A)^k)` for `k = 1..=algebraic`.
    pub chain_dims: Vec<usize>,
}

/// Clustered eigenvalues of `a` with geometric multiplicities and null-chain
/// dimensions. Complex-conjugate pairing is enforced for the real input.
pub fn eigen_structure(a: &DMatrix<f64>, cluster_tol: f64) -> Result<Vec<EigenCluster>> {
    let n = a.nrows();
    assert!(a.is_square());
    let scale = one_norm(a).max(1.0);
    let abs_tol = cluster_tol * scale;

    let mut eigs: Vec<Complex<f64>> = a.clone().complex_eigenvalues().iter().cloned().collect();
    eigs.sort_by(|p, q| {
        (p.re, p.im)
            .partial_cmp(&(q.re, q.im))
            .expect("eigenvalues are finite")
    });

    // greedy clustering
    let mut clusters: Vec<(Complex<f64>, usize)> = Vec::new();
    for e in eigs {
        match clusters
            .iter_mut()
            .find(|(c, _)| (e - *c).norm() <= abs_tol)
        {
            Some((c, count)) => {
                *c = (*c * (*count as f64) + e) / (*count as f64 + 1.0);
                *count += 1;
            }
            None => clusters.push((e, 1)),
        }
    }

    // snap near-real eigenvalues and enforce exact conjugate symmetry
    for (c, _) in clusters.iter_mut() {
        if c.im.abs() <= abs_tol {
            c.im = 0.0;
        }
    }
    let snapshot = clusters.clone();
    for (c, _) in clusters.iter_mut() {
        if c.im > 0.0 {
            if let Some((cc, _)) = snapshot
                .iter()
                .find(|(z, _)| (z.conj() - *c).norm() <= 2.0 * abs_tol && z.im < 0.0)
            {
                let avg = (*c + cc.conj()) / 2.0;
                *c = avg;
            }
        } else if c.im < 0.0 {
            if let Some((cc, _)) = snapshot
                .iter()
                .find(|(z, _)| (z.conj() - *c).norm() <= 2.0 * abs_tol && z.im > 0.0)
            {
                let avg = (*c + cc.conj()) / 2.0;
                *c = avg;
            }
        }
    }

    // ambiguity diagnostic
    for i in 0..clusters.len() {
        for j in (i + 1)..clusters.len() {
            if (clusters[i].0 - clusters[j].0).norm() < 2.0 * abs_tol {
                return Err(Error::AmbiguousClustering {
                    lambda_a: clusters[i].0,
                    lambda_b: clusters[j].0,
                });
            }
        }
    }

    let ac: CMatrix = a.map(|x| Complex::new(x, 0.0));
    let id: CMatrix = CMatrix::identity(n, n);
    let mut out = Vec::with_capacity(clusters.len());
    for (lambda, ma) in clusters {
        let shifted = &id * lambda - &ac;
        let mut chain_dims = Vec::with_capacity(ma);
        let mut power = id.clone();
        for _ in 0..ma {
            power = &power * &shifted;
            chain_dims.push(n - complex_rank(&power, DEFAULT_RANK_TOL));
        }
        let geometric = chain_dims[0];
        out.push(EigenCluster {
            value: lambda,
            algebraic: ma,
            geometric,
            chain_dims,
        });
    }
    Ok(out)
}

fn complex_rank(m: &CMatrix, tol: f64) -> usize {
    if m.iter().all(|z| z.norm() == 0.0) {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let sigma_max = svd.singular_values.amax();
    svd.singular_values
        .iter()
        .filter(|&&s| s > tol * sigma_max)
        .count()
}

/// Largest A-invariant subspace contained in `v`, by the standard fixed-point
/// iteration V <- V meet A^{-1}(V).
pub fn max_invariant_in(a: &DMatrix<f64>, v: &Subspace, tol: f64) -> Subspace {
    let n = a.nrows();
    let mut cur = v.clone();
    loop {
        if cur.dim() == 0 {
            return cur;
        }
        let p = DMatrix::identity(n, n) - cur.basis() * cur.basis().transpose();
        let preimage = null_space(&(p * a), tol);
        let next = cur.intersect(&preimage, tol);
        if next.dim() == cur.dim() {
            return next;
        }
        cur = next;
    }
}

/// Real carrier of the root space `N((lambda I - A)^k)`; for a complex
/// `lambda` the conjugate pair is combined through the real quadratic factor
/// `(A^2 - 2 Re(lambda) A + |lambda|^2 I)^k`, so the result covers both
/// conjugate root spaces.
pub fn real_root_space(a: &DMatrix<f64>, lambda: Complex<f64>, k: usize, tol: f64) -> Subspace {
    let n = a.nrows();
    let factor = if lambda.im == 0.0 {
        DMatrix::identity(n, n) * lambda.re - a
    } else {
        a * a - a * (2.0 * lambda.re) + DMatrix::identity(n, n) * lambda.norm_sqr()
    };
    let mut power = DMatrix::identity(n, n);
    for _ in 0..k {
        power = &power * &factor;
    }
    null_space(&power, tol)
}

// ---------------------------------------------------------------------------
// first zero of t -> C e^{At} x0
// ---------------------------------------------------------------------------

/// Options for [`first_zero`] and the simulation engine built on it.
#[derive(Debug, Clone)]
pub struct RootOpts {
    /// Dense sampling step; `None` selects
    /// `min(0.01, 0.1 / max(1, spectral_radius(A)))`.
    pub sample_step: Option<f64>,
    /// Relative magnitude below which `g` counts as zero.
    pub value_tol: f64,
    /// Root refinement resolution in time.
    pub time_tol: f64,
    /// Relative derivative magnitude below which a root counts as tangential.
    pub deriv_tol: f64,
    /// Relative rank tolerance for the structural identically-zero test.
    pub rank_tol: f64,
}

impl Default for RootOpts {
    fn default() -> Self {
        RootOpts {
            sample_step: None,
            value_tol: 1e-9,
            time_tol: 1e-12,
            deriv_tol: 1e-6,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// Classification of a located zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroKind {
    Transversal,
    Tangential,
}

/// Outcome of a first-zero search.
#[derive(Debug, Clone)]
pub enum FirstZero {
    /// No zero in the window.
    None,
    /// `x0` lies in the unobservable subspace: `g` vanishes identically.
    IdenticallyZero,
    /// Isolated zero at `time` with the flowed state attached.
    Zero {
        time: f64,
        kind: ZeroKind,
        state: DVector<f64>,
    },
}

/// Flows `x0` under `e^{At}` on a fixed grid with power-of-two refinement
/// propagators, so event times can be bisected without fresh `expm` calls.
pub struct FlowSampler {
    pub a: DMatrix<f64>,
    step: f64,
    coarse: DMatrix<f64>,
    halvings: Vec<DMatrix<f64>>,
}

impl FlowSampler {
    pub fn new(a: &DMatrix<f64>, step: f64, time_tol: f64) -> Self {
        let levels = ((step / time_tol.max(1e-15)).log2().ceil() as usize).clamp(20, 52);
        let coarse = expm(a, step);
        let mut halvings = Vec::with_capacity(levels);
        for k in 1..=levels {
            halvings.push(expm(a, step / 2f64.powi(k as i32)));
        }
        FlowSampler {
            a: a.clone(),
            step,
            coarse,
            halvings,
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// One coarse step forward.
    pub fn advance(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.coarse * x
    }

    /// Refines a sign change of `f` inside `(0, step]` starting from `x` at
    /// the left endpoint, where `f(x)` has sign `sign_left`. Returns the
    /// offset and flowed state at the located root.
    pub fn bisect<F: Fn(&DVector<f64>) -> f64>(
        &self,
        x: &DVector<f64>,
        sign_left: f64,
        f: F,
    ) -> (f64, DVector<f64>) {
        let mut cur = x.clone();
        let mut offset = 0.0;
        for (k, p) in self.halvings.iter().enumerate() {
            let trial = p * &cur;
            if f(&trial).signum() == sign_left {
                cur = trial;
                offset += self.step / 2f64.powi(k as i32 + 1);
            }
        }
        let last = self.halvings.last().expect("at least one halving level");
        let refined = last * &cur;
        (offset + self.step / 2f64.powi(self.halvings.len() as i32), refined)
    }
}

/// Default dense-sampling step for event location on `A`.
pub fn default_sample_step(a: &DMatrix<f64>) -> f64 {
    (0.1 / spectral_radius(a).max(1.0)).min(0.01)
}

/// Locates the smallest `t` in `(t_start, t_max]` with `C e^{At} x0 = 0`,
/// subject to an optional acceptance predicate on the flowed state (used by
/// the simulator to skip zeros landing inside the jump-map fixed-point set).
///
/// Sign changes are found by dense sampling plus bisection; even-order
/// (tangential) zeros by a local-minimum scan of `|g|` refined on the
/// derivative `C A e^{At} x0`. When `x0` lies in the unobservable subspace of
/// `(A, C)` the function is identically zero (a Bohl function either vanishes
/// everywhere or has isolated zeros) and `IdenticallyZero` is returned.
pub fn first_zero(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    x0: &DVector<f64>,
    t_start: f64,
    t_max: f64,
    opts: &RootOpts,
    accept: Option<&dyn Fn(&DVector<f64>) -> bool>,
) -> Result<FirstZero> {
    let obs = observability_matrix(a, c)?;
    let unobservable = null_space(&obs, opts.rank_tol);
    first_zero_with(a, c, x0, t_start, t_max, opts, accept, &unobservable, None)
}

/// [`first_zero`] with a precomputed unobservable subspace and optional shared
/// sampler, for callers issuing many searches on the same system.
#[allow(clippy::too_many_arguments)]
pub fn first_zero_with(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    x0: &DVector<f64>,
    t_start: f64,
    t_max: f64,
    opts: &RootOpts,
    accept: Option<&dyn Fn(&DVector<f64>) -> bool>,
    unobservable: &Subspace,
    sampler: Option<&FlowSampler>,
) -> Result<FirstZero> {
    if t_start >= t_max {
        return Err(Error::Precondition(
            "first_zero: t_start must be below t_max".into(),
        ));
    }
    if unobservable.contains(x0, opts.value_tol.max(opts.rank_tol)) {
        return Ok(FirstZero::IdenticallyZero);
    }

    let h = opts.sample_step.unwrap_or_else(|| default_sample_step(a));
    let owned;
    let sampler = match sampler {
        Some(s) if (s.step() - h).abs() < 1e-15 => s,
        _ => {
            owned = FlowSampler::new(a, h, opts.time_tol);
            &owned
        }
    };

    let c_row = c.row(0).into_owned();
    let ca_row = (c * a).row(0).into_owned();
    let g = |x: &DVector<f64>| c_row.dot(&x.transpose().row(0).into_owned());
    let gp = |x: &DVector<f64>| ca_row.dot(&x.transpose().row(0).into_owned());
    let c_norm = c_row.norm().max(1e-300);
    let ca_norm = ca_row.norm().max(1e-300);
    let accept_state = |x: &DVector<f64>| accept.map(|f| f(x)).unwrap_or(true);

    // flow to the window start
    let mut x = if t_start > 0.0 { expm(a, t_start) * x0 } else { x0.clone() };
    let mut t = t_start;
    let mut g_prev = g(&x);
    // starting exactly on the surface: take the output derivative as the
    // sign proxy so the departing branch is not mistaken for a new crossing
    if g_prev.abs() <= opts.value_tol * c_norm * x.norm().max(1e-300) {
        let d = gp(&x);
        if d != 0.0 {
            g_prev = d;
        }
    }
    // window of the last three |g| samples for the local-minimum scan
    let mut window: Vec<(f64, DVector<f64>, f64)> = vec![(t, x.clone(), g_prev)];

    let classify = |state: &DVector<f64>| -> ZeroKind {
        let scale = ca_norm * state.norm().max(1e-300);
        if gp(state).abs() <= opts.deriv_tol * scale {
            ZeroKind::Tangential
        } else {
            ZeroKind::Transversal
        }
    };

    while t < t_max {
        let x_next = sampler.advance(&x);
        let t_next = t + h;
        let g_next = g(&x_next);

        let sign_change = g_prev != 0.0 && g_next != 0.0 && g_prev.signum() != g_next.signum();
        if sign_change {
            let (dt, state) = sampler.bisect(&x, g_prev.signum(), g);
            let t_root = t + dt;
            if t_root > t_start && t_root <= t_max && accept_state(&state) {
                return Ok(FirstZero::Zero {
                    time: t_root,
                    kind: classify(&state),
                    state,
                });
            }
        } else if window.len() >= 2 {
            // interior minimum of |g| without a sign change: candidate
            // even-order zero. refine on the derivative sign change.
            let (t0, x0w, g0) = window[window.len() - 2].clone();
            let (t1, x1w, g1) = window[window.len() - 1].clone();
            let scale1 = c_norm * x1w.norm().max(1e-300);
            let shallow = g1.abs() < g0.abs() && g1.abs() < g_next.abs();
            if shallow && g1.abs() <= 1e-3 * scale1 && gp(&x0w) * gp(&x_next) < 0.0 {
                // the derivative changes sign in exactly one of the two
                // subintervals around the sampled minimum; bisect in that one
                let (t_base, x_base) = if gp(&x0w) * gp(&x1w) < 0.0 {
                    (t0, &x0w)
                } else {
                    (t1, &x1w)
                };
                let (dt, state) = sampler.bisect(x_base, gp(x_base).signum(), gp);
                let t_root = t_base + dt;
                let scale = c_norm * state.norm().max(1e-300);
                if g(&state).abs() <= opts.value_tol.max(1e-9) * scale
                    && t_root > t_start
                    && t_root <= t_max
                    && accept_state(&state)
                {
                    return Ok(FirstZero::Zero {
                        time: t_root,
                        kind: ZeroKind::Tangential,
                        state,
                    });
                }
            }
        }

        x = x_next;
        t = t_next;
        g_prev = g_next;
        window.push((t, x.clone(), g_next));
        if window.len() > 3 {
            window.remove(0);
        }
    }
    Ok(FirstZero::None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            rows.len(),
            rows[0].len(),
            &rows.iter().flat_map(|r| r.iter().cloned()).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn expm_identity_at_zero() {
        let a = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let e = expm(&a, 0.0);
        assert_relative_eq!(e, DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn expm_rotation_closed_form() {
        let w = 1.7;
        let a = mat(&[&[0.0, -w], &[w, 0.0]]);
        for &t in &[0.1, 1.0, 3.5, -2.0] {
            let e = expm(&a, t);
            let (s, c) = (w * t).sin_cos();
            let expect = mat(&[&[c, -s], &[s, c]]);
            assert_relative_eq!(e, expect, epsilon = 1e-13);
        }
    }

    #[test]
    fn expm_inverse_pairs() {
        let a = mat(&[&[0.3, -1.2, 0.5], &[2.0, 0.1, -0.7], &[0.0, 1.1, -0.4]]);
        let prod = expm(&a, 1.3) * expm(&a, -1.3);
        assert_relative_eq!(prod, DMatrix::identity(3, 3), epsilon = 1e-10);
    }

    #[test]
    fn expm_large_norm_accuracy() {
        // diagonalizable matrix with a known exponential: D = diag(3, -4)
        let a = mat(&[&[3.0, 0.0], &[0.0, -4.0]]);
        let e = expm(&a, 10.0);
        assert_relative_eq!(e[(0, 0)], (30.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(e[(1, 1)], (-40.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn null_space_line() {
        let m = mat(&[&[1.0, -1.0]]);
        let ns = null_space(&m, 1e-10);
        assert_eq!(ns.dim(), 1);
        let v = ns.basis().column(0);
        assert_relative_eq!(v[0], v[1], epsilon = 1e-12);
        assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn null_space_identity_is_zero() {
        assert_eq!(null_space(&DMatrix::identity(2, 2), 1e-10).dim(), 0);
    }

    #[test]
    fn null_space_zero_matrix_is_full() {
        assert_eq!(null_space(&DMatrix::zeros(2, 3), 1e-10).dim(), 3);
    }

    #[test]
    fn observability_rank_one() {
        let a = DMatrix::identity(2, 2);
        let c = mat(&[&[1.0, 0.0]]);
        let o = observability_matrix(&a, &c).unwrap();
        assert_eq!(o, mat(&[&[1.0, 0.0], &[1.0, 0.0]]));
        assert_eq!(rank(&o, 1e-9), 1);
    }

    #[test]
    fn invariance_of_zero_subspace() {
        let a = mat(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!(is_invariant(&a, &Subspace::zero(2), 1e-9).invariant);
    }

    #[test]
    fn invariance_witness_direction() {
        // x2-axis is not invariant for this flow; its image tilts into
        // direction (0, -1, 1).
        let a = mat(&[&[-1.0, 0.0, 0.0], &[0.0, -1.0, -1.0], &[0.0, 1.0, -1.0]]);
        let v = Subspace::from_span(&mat(&[&[0.0], &[1.0], &[0.0]]), 1e-9);
        let check = is_invariant(&a, &v, 1e-9);
        assert!(!check.invariant);
        let w = check.witness.unwrap();
        let expect = DVector::from_vec(vec![0.0, -1.0, 1.0]).normalize();
        assert!((w.clone() - &expect).norm().min((w + expect).norm()) < 1e-12);
    }

    #[test]
    fn eigen_structure_rotation() {
        let a = mat(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let cl = eigen_structure(&a, 1e-7).unwrap();
        assert_eq!(cl.len(), 2);
        for c in &cl {
            assert_eq!(c.algebraic, 1);
            assert_eq!(c.geometric, 1);
            assert_relative_eq!(c.value.im.abs(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn eigen_structure_jordan_block() {
        let a = mat(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let cl = eigen_structure(&a, 1e-7).unwrap();
        assert_eq!(cl.len(), 1);
        assert_eq!(cl[0].algebraic, 2);
        assert_eq!(cl[0].geometric, 1);
        assert_eq!(cl[0].chain_dims, vec![1, 2]);
    }

    #[test]
    fn first_zero_rotation_example() {
        // first zero of (x1 - x2) along a unit-speed rotation started at
        // (0.75, 0.25): t = pi/4 - atan(1/3).
        let a = mat(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let c = mat(&[&[1.0, -1.0]]);
        let x0 = DVector::from_vec(vec![0.75, 0.25]);
        match first_zero(&a, &c, &x0, 0.0, 10.0, &RootOpts::default(), None).unwrap() {
            FirstZero::Zero { time, kind, .. } => {
                assert_relative_eq!(
                    time,
                    std::f64::consts::FRAC_PI_4 - (1.0f64 / 3.0).atan(),
                    epsilon = 1e-9
                );
                assert_eq!(kind, ZeroKind::Transversal);
            }
            other => panic!("expected a zero, got {other:?}"),
        }
    }

    #[test]
    fn first_zero_identically_zero_branch() {
        let a = mat(&[&[-1.0, 0.0, 0.0], &[0.0, -1.0, -1.0], &[0.0, 1.0, -1.0]]);
        let c = mat(&[&[1.0, 0.0, 0.0]]);
        let x0 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        // dense-grid cross-check of the structural decision
        for k in 0..100 {
            let t = 0.1 * k as f64;
            let val = (c.clone() * expm(&a, t) * &x0)[(0, 0)];
            assert!(val.abs() <= 1e-12);
        }
        assert!(matches!(
            first_zero(&a, &c, &x0, 0.0, 5.0, &RootOpts::default(), None).unwrap(),
            FirstZero::IdenticallyZero
        ));
    }

    #[test]
    fn first_zero_tangential_double_zero() {
        // Jordan-chain flow giving g(t) = (t - 1)^2 e^{-t}: an even-order
        // zero at t = 1 with no sign change, reachable only through the
        // local-minimum scan.
        let a = mat(&[&[-1.0, 1.0, 0.0], &[0.0, -1.0, 1.0], &[0.0, 0.0, -1.0]]);
        let c = mat(&[&[1.0, 0.0, 0.0]]);
        let x0 = DVector::from_vec(vec![1.0, -2.0, 2.0]);
        match first_zero(&a, &c, &x0, 0.0, 3.0, &RootOpts::default(), None).unwrap() {
            FirstZero::Zero { time, kind, .. } => {
                assert_relative_eq!(time, 1.0, epsilon = 1e-6);
                assert_eq!(kind, ZeroKind::Tangential);
            }
            other => panic!("expected tangential zero, got {other:?}"),
        }
    }

    #[test]
    fn first_zero_shallow_dip_located() {
        // a trajectory grazing the surface so closely that the dip through
        // zero is only ~1e-7 deep; the zero must still be located near the
        // graze even though its classification is borderline
        let a = mat(&[&[0.0, -3.0, 1.0], &[1.0, -1.0, 0.0], &[0.0, -1.0, -1.0]]);
        let c = mat(&[&[0.0, 1.0, 0.0]]);
        let x0 = DVector::from_vec(vec![-0.3794, 0.2, 1.0]);
        match first_zero(&a, &c, &x0, 0.0, 2.0, &RootOpts::default(), None).unwrap() {
            FirstZero::Zero { time, .. } => {
                assert!((time - 0.79).abs() < 0.03, "time = {time}");
            }
            other => panic!("expected a zero, got {other:?}"),
        }
    }

    #[test]
    fn subspace_angle_and_intersection() {
        let e1 = Subspace::from_span(&mat(&[&[1.0], &[0.0]]), 1e-9);
        let diag = Subspace::from_span(&mat(&[&[1.0], &[1.0]]), 1e-9);
        let angle = e1.max_principal_angle(&diag).unwrap();
        assert_relative_eq!(angle, std::f64::consts::FRAC_PI_4, epsilon = 1e-12);
        let meet = e1.intersect(&diag, 1e-9);
        assert_eq!(meet.dim(), 0);
    }
}
