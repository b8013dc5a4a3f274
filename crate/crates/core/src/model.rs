//! Reset system construction and closed-loop assembly: the triple (A, C, n_r)
//! with its derived jump map and set machinery, plant/compensator/exosystem
//! models, and the block assembly of the feedback loop into canonical form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{null_space, observability_matrix, vstack, Subspace};

/// A reset system (A, C, n_r): flow `x' = Ax`, jump `x(t+) = A_R x` whenever
/// the state crosses the reset set `M = N(C) \ F_R`. The last `n_r` state
/// components are zeroed by the jump.
#[derive(Debug, Clone)]
pub struct ResetSystem {
    pub a: DMatrix<f64>,
    /// Reset-surface normal, 1 x n.
    pub c: DMatrix<f64>,
    /// Number of resetting (trailing) states, 1 <= n_r < n.
    pub n_r: usize,
    /// Jump map, the block projector diag(I_{n - n_r}, 0).
    pub a_r: DMatrix<f64>,
    /// Reset surface N(C).
    pub h_c: Subspace,
    /// Fixed points of the jump map, N(I - A_R).
    pub h_r: Subspace,
    /// Fixed points on the surface, H_C intersect H_R.
    pub f_r: Subspace,
    /// Fixed points unobservable for the base system (N(I - A_R) meet N(O)).
    pub f_ru: Subspace,
    /// Linear carrier of the after-reset set, A_R(H_C).
    pub m_r_carrier: Subspace,
    /// Unobservable subspace N(O) of the base pair (A, C).
    pub unobservable: Subspace,
    pub tol: f64,
}

/// Builds a [`ResetSystem`] from the base dynamics, surface normal, and reset
/// state count, deriving the jump map and all set carriers.
pub fn build_reset_system(
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    n_r: usize,
    tol: f64,
) -> Result<ResetSystem> {
    let n = a.nrows();
    if !a.is_square() || c.nrows() != 1 || c.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "build_reset_system",
            expected: format!("A n x n, C 1 x {n}"),
            got: format!("A {}x{}, C {}x{}", a.nrows(), a.ncols(), c.nrows(), c.ncols()),
        });
    }
    if a.iter().any(|x| !x.is_finite()) || c.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("build_reset_system"));
    }
    if c.amax() == 0.0 {
        return Err(Error::DegenerateSurface);
    }
    if n < 2 || n_r == 0 || n_r >= n {
        return Err(Error::InvalidResetCount { n_r, n });
    }

    let mut a_r = DMatrix::zeros(n, n);
    for i in 0..(n - n_r) {
        a_r[(i, i)] = 1.0;
    }
    let eye = DMatrix::identity(n, n);
    let i_minus_ar = &eye - &a_r;

    let h_c = null_space(&c, tol);
    let h_r = null_space(&i_minus_ar, tol);
    let f_r = null_space(&vstack(&i_minus_ar, &c), tol);
    let obs = observability_matrix(&a, &c)?;
    let unobservable = null_space(&obs, tol);
    let f_ru = null_space(&vstack(&i_minus_ar, &obs), tol);
    let m_r_carrier = h_c.map(&a_r, tol);

    Ok(ResetSystem {
        a,
        c,
        n_r,
        a_r,
        h_c,
        h_r,
        f_r,
        f_ru,
        m_r_carrier,
        unobservable,
        tol,
    })
}

impl ResetSystem {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Output value C x.
    pub fn output(&self, x: &DVector<f64>) -> f64 {
        (&self.c * x)[(0, 0)]
    }

    /// Output derivative C A x.
    pub fn output_rate(&self, x: &DVector<f64>) -> f64 {
        (&self.c * (&self.a * x))[(0, 0)]
    }

    /// Applies the jump map.
    pub fn jump(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a_r * x
    }

    /// Membership in the reset set M = N(C) \ F_R, tolerance-relative:
    /// on the surface but not fixed by the jump.
    pub fn in_m(&self, x: &DVector<f64>) -> bool {
        let nx = x.norm();
        if nx == 0.0 {
            return false;
        }
        self.output(x).abs() <= self.tol * nx && ((x - self.jump(x)).norm() > self.tol * nx)
    }

    /// Membership in the after-reset set M_R = A_R(M). A state belongs to it
    /// exactly when the jump fixes it and some surface preimage with nonzero
    /// resetting part maps onto it: when the surface normal has weight on the
    /// resetting coordinates any output value can be matched by a preimage;
    /// otherwise the preimage must differ from x inside the jump kernel while
    /// staying on the surface.
    pub fn in_mr(&self, x: &DVector<f64>) -> bool {
        let nx = x.norm();
        if nx == 0.0 {
            // the origin is an after-reset point iff some nonzero surface
            // direction lives entirely in the jump kernel
            return self.kernel_meets_surface();
        }
        if !self.h_r.contains(x, self.tol) {
            return false;
        }
        if self.output(x).abs() > self.tol * nx {
            self.c_weight_on_kernel()
        } else {
            self.kernel_meets_surface()
        }
    }

    /// Whether the surface normal has nonzero weight on resetting states.
    fn c_weight_on_kernel(&self) -> bool {
        let n = self.dim();
        (n - self.n_r..n).any(|j| self.c[(0, j)] != 0.0)
    }

    /// Whether the jump kernel contains a nonzero surface direction.
    fn kernel_meets_surface(&self) -> bool {
        if self.c_weight_on_kernel() {
            self.n_r >= 2
        } else {
            true
        }
    }

    /// True when the reset set is empty (every surface point is fixed by the
    /// jump), which makes the system trivial: no jump ever fires.
    pub fn m_is_empty(&self) -> bool {
        self.h_c.dim() == self.f_r.dim()
    }
}

/// Strictly proper SISO plant.
#[derive(Debug, Clone)]
pub struct Plant {
    pub a_p: DMatrix<f64>,
    pub b_p: DMatrix<f64>,
    pub c_p: DMatrix<f64>,
}

impl Plant {
    pub fn new(a_p: DMatrix<f64>, b_p: DMatrix<f64>, c_p: DMatrix<f64>) -> Result<Self> {
        let n = a_p.nrows();
        if !a_p.is_square() || b_p.nrows() != n || b_p.ncols() != 1 || c_p.nrows() != 1 || c_p.ncols() != n
        {
            return Err(Error::DimensionMismatch {
                context: "Plant::new",
                expected: format!("A_p {n}x{n}, B_p {n}x1, C_p 1x{n}"),
                got: format!(
                    "A_p {}x{}, B_p {}x{}, C_p {}x{}",
                    a_p.nrows(),
                    a_p.ncols(),
                    b_p.nrows(),
                    b_p.ncols(),
                    c_p.nrows(),
                    c_p.ncols()
                ),
            });
        }
        Ok(Plant { a_p, b_p, c_p })
    }

    pub fn order(&self) -> usize {
        self.a_p.nrows()
    }
}

/// A SISO state-space block used as a series factor inside a compensator.
#[derive(Debug, Clone)]
pub struct LinearSiso {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl LinearSiso {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || b.ncols() != 1 || c.nrows() != 1 || c.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "LinearSiso::new",
                expected: format!("A {n}x{n}, B {n}x1, C 1x{n}"),
                got: format!(
                    "A {}x{}, B {}x{}, C {}x{}",
                    a.nrows(),
                    a.ncols(),
                    b.nrows(),
                    b.ncols(),
                    c.nrows(),
                    c.ncols()
                ),
            });
        }
        Ok(LinearSiso { a, b, c })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Controllable canonical realization of num(s)/den(s), denominator
    /// monic, coefficients in ascending powers of s, deg num < deg den.
    pub fn from_transfer(num: &[f64], den: &[f64]) -> Result<Self> {
        let n = den.len() - 1;
        if n == 0 || num.len() > n {
            return Err(Error::Precondition(
                "from_transfer: need strictly proper num/den with monic den".into(),
            ));
        }
        if (den[n] - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition("from_transfer: denominator must be monic".into()));
        }
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = -den[j];
        }
        let mut b = DMatrix::zeros(n, 1);
        b[(n - 1, 0)] = 1.0;
        let mut c = DMatrix::zeros(1, n);
        for (j, &v) in num.iter().enumerate() {
            c[(0, j)] = v;
        }
        LinearSiso::new(a, b, c)
    }
}

/// Series factorization of a compensator into a linear block followed by a
/// fully resetting block, recorded for cancellation analysis.
#[derive(Debug, Clone)]
pub struct SeriesParts {
    /// The linear (non-resetting) series factor.
    pub linear: LinearSiso,
    /// Base dynamics of the fully resetting series factor.
    pub reset_base: LinearSiso,
}

/// SISO reset compensator with `n_rho` resetting states stored last.
#[derive(Debug, Clone)]
pub struct Compensator {
    pub a_r: DMatrix<f64>,
    pub b_r: DMatrix<f64>,
    pub c_r: DMatrix<f64>,
    pub d_r: f64,
    pub n_rho: usize,
    /// Present when the compensator was built as linear block -> reset block.
    pub series: Option<SeriesParts>,
}

impl Compensator {
    pub fn new(
        a_r: DMatrix<f64>,
        b_r: DMatrix<f64>,
        c_r: DMatrix<f64>,
        d_r: f64,
        n_rho: usize,
    ) -> Result<Self> {
        let n = a_r.nrows();
        if !a_r.is_square() || b_r.nrows() != n || b_r.ncols() != 1 || c_r.nrows() != 1 || c_r.ncols() != n
        {
            return Err(Error::DimensionMismatch {
                context: "Compensator::new",
                expected: format!("A_r {n}x{n}, B_r {n}x1, C_r 1x{n}"),
                got: format!(
                    "A_r {}x{}, B_r {}x{}, C_r {}x{}",
                    a_r.nrows(),
                    a_r.ncols(),
                    b_r.nrows(),
                    b_r.ncols(),
                    c_r.nrows(),
                    c_r.ncols()
                ),
            });
        }
        if n_rho == 0 || n_rho > n {
            return Err(Error::InvalidResetCount { n_r: n_rho, n });
        }
        Ok(Compensator {
            a_r,
            b_r,
            c_r,
            d_r,
            n_rho,
            series: None,
        })
    }

    pub fn order(&self) -> usize {
        self.a_r.nrows()
    }

    /// Count of non-resetting compensator states.
    pub fn n_linear(&self) -> usize {
        self.order() - self.n_rho
    }

    /// Off-diagonal block coupling resetting into non-resetting states
    /// (top-right of the partitioned A_r).
    pub fn a_r12(&self) -> DMatrix<f64> {
        let k = self.n_linear();
        self.a_r.view((0, k), (k, self.n_rho)).into_owned()
    }

    /// Off-diagonal block coupling non-resetting into resetting states
    /// (bottom-left of the partitioned A_r).
    pub fn a_r21(&self) -> DMatrix<f64> {
        let k = self.n_linear();
        self.a_r.view((k, 0), (self.n_rho, k)).into_owned()
    }

    /// Series connection: input drives `linear`, whose output drives the
    /// fully resetting block realized from `reset_base`. The resetting states
    /// cannot feed back into the linear ones, which makes this a left
    /// compensator.
    pub fn left_series(linear: LinearSiso, reset_base: LinearSiso) -> Result<Self> {
        let (ng, np) = (linear.order(), reset_base.order());
        let n = ng + np;
        let mut a_r = DMatrix::zeros(n, n);
        a_r.view_mut((0, 0), (ng, ng)).copy_from(&linear.a);
        a_r.view_mut((ng, ng), (np, np)).copy_from(&reset_base.a);
        a_r.view_mut((ng, 0), (np, ng))
            .copy_from(&(&reset_base.b * &linear.c));
        let mut b_r = DMatrix::zeros(n, 1);
        b_r.view_mut((0, 0), (ng, 1)).copy_from(&linear.b);
        let mut c_r = DMatrix::zeros(1, n);
        c_r.view_mut((0, ng), (1, np)).copy_from(&reset_base.c);
        let mut out = Compensator::new(a_r, b_r, c_r, 0.0, np)?;
        out.series = Some(SeriesParts { linear, reset_base });
        Ok(out)
    }

    /// Series connection: input drives the fully resetting block realized
    /// from `reset_base`, whose output drives `linear`. The non-resetting
    /// states cannot feed back into the resetting ones, which makes this a
    /// right compensator.
    pub fn right_series(reset_base: LinearSiso, linear: LinearSiso) -> Result<Self> {
        let (ng, np) = (linear.order(), reset_base.order());
        let n = ng + np;
        let mut a_r = DMatrix::zeros(n, n);
        a_r.view_mut((0, 0), (ng, ng)).copy_from(&linear.a);
        a_r.view_mut((ng, ng), (np, np)).copy_from(&reset_base.a);
        a_r.view_mut((0, ng), (ng, np))
            .copy_from(&(&linear.b * &reset_base.c));
        let mut b_r = DMatrix::zeros(n, 1);
        b_r.view_mut((ng, 0), (np, 1)).copy_from(&reset_base.b);
        let mut c_r = DMatrix::zeros(1, n);
        c_r.view_mut((0, 0), (1, ng)).copy_from(&linear.c);
        Compensator::new(a_r, b_r, c_r, 0.0, np)
    }
}

/// Structural class of a reset compensator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompensatorClass {
    /// Every compensator state resets.
    Full,
    /// Non-resetting states do not drive resetting ones (A_r21 = 0).
    Right,
    /// Resetting states do not drive non-resetting ones (A_r12 = 0).
    Left,
    /// Both couplings present.
    General,
}

impl std::fmt::Display for CompensatorClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CompensatorClass::Full => "full",
            CompensatorClass::Right => "right",
            CompensatorClass::Left => "left",
            CompensatorClass::General => "general",
        };
        f.write_str(s)
    }
}

/// Classifies a compensator from its partition blocks. When both couplings
/// vanish the tie resolves to `Right`, which carries the stronger
/// well-posedness guarantee.
pub fn classify_compensator(comp: &Compensator, tol: f64) -> CompensatorClass {
    if comp.n_rho == comp.order() {
        return CompensatorClass::Full;
    }
    let scale = comp.a_r.amax().max(1.0);
    let right = comp.a_r21().amax() <= tol * scale;
    let left = comp.a_r12().amax() <= tol * scale;
    match (right, left) {
        (true, _) => CompensatorClass::Right,
        (false, true) => CompensatorClass::Left,
        (false, false) => CompensatorClass::General,
    }
}

/// Autonomous signal generator (references, disturbances, noise).
#[derive(Debug, Clone)]
pub struct Exosystem {
    pub a_w: DMatrix<f64>,
    pub c_w: DMatrix<f64>,
    pub w0: DVector<f64>,
}

impl Exosystem {
    pub fn new(a_w: DMatrix<f64>, c_w: DMatrix<f64>, w0: DVector<f64>) -> Result<Self> {
        let m = a_w.nrows();
        if !a_w.is_square() || c_w.nrows() != 1 || c_w.ncols() != m || w0.len() != m {
            return Err(Error::DimensionMismatch {
                context: "Exosystem::new",
                expected: format!("A_w {m}x{m}, C_w 1x{m}, w0 len {m}"),
                got: format!(
                    "A_w {}x{}, C_w {}x{}, w0 len {}",
                    a_w.nrows(),
                    a_w.ncols(),
                    c_w.nrows(),
                    c_w.ncols(),
                    w0.len()
                ),
            });
        }
        Ok(Exosystem { a_w, c_w, w0 })
    }

    pub fn order(&self) -> usize {
        self.a_w.nrows()
    }
}

/// Index ranges of the closed-loop state blocks (reference exostate,
/// disturbance exostate, plant state, compensator state).
#[derive(Debug, Clone)]
pub struct Partition {
    pub w1: std::ops::Range<usize>,
    pub w2: std::ops::Range<usize>,
    pub xp: std::ops::Range<usize>,
    pub xr: std::ops::Range<usize>,
}

/// A closed-loop reset control system assembled into (A, C, n_rho) form with
/// block-partition metadata.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub system: ResetSystem,
    pub partition: Partition,
    pub compensator_class: CompensatorClass,
    pub plant: Plant,
    pub compensator: Compensator,
    pub exo_reference: Option<Exosystem>,
    pub exo_disturbance: Option<Exosystem>,
}

/// Assembles the feedback loop `e = r - y`, `u = v + d` of a plant, a reset
/// compensator, and optional reference/disturbance generators into a reset
/// system over the state (w1, w2, xp, xr); absent generators drop their
/// blocks. The resetting states are the trailing n_rho compensator states.
pub fn assemble_closed_loop(
    plant: Plant,
    comp: Compensator,
    exo_reference: Option<Exosystem>,
    exo_disturbance: Option<Exosystem>,
    tol: f64,
) -> Result<ClosedLoop> {
    let m1 = exo_reference.as_ref().map_or(0, |e| e.order());
    let m2 = exo_disturbance.as_ref().map_or(0, |e| e.order());
    let np = plant.order();
    let nr = comp.order();
    let n = m1 + m2 + np + nr;
    if np + nr < 2 {
        return Err(Error::InvalidResetCount { n_r: comp.n_rho, n });
    }

    let partition = Partition {
        w1: 0..m1,
        w2: m1..m1 + m2,
        xp: m1 + m2..m1 + m2 + np,
        xr: m1 + m2 + np..n,
    };

    let mut a = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(1, n);

    if let Some(exo) = &exo_reference {
        a.view_mut((partition.w1.start, partition.w1.start), (m1, m1))
            .copy_from(&exo.a_w);
        // error channel e = r - y drives both plant (through D_r) and
        // compensator input
        a.view_mut((partition.xp.start, partition.w1.start), (np, m1))
            .copy_from(&(&plant.b_p * comp.d_r * &exo.c_w));
        a.view_mut((partition.xr.start, partition.w1.start), (nr, m1))
            .copy_from(&(&comp.b_r * &exo.c_w));
        c.view_mut((0, partition.w1.start), (1, m1)).copy_from(&exo.c_w);
    }
    if let Some(exo) = &exo_disturbance {
        a.view_mut((partition.w2.start, partition.w2.start), (m2, m2))
            .copy_from(&exo.a_w);
        // disturbance enters at the plant input, u = v + d
        a.view_mut((partition.xp.start, partition.w2.start), (np, m2))
            .copy_from(&(&plant.b_p * &exo.c_w));
    }
    a.view_mut((partition.xp.start, partition.xp.start), (np, np))
        .copy_from(&(&plant.a_p - &plant.b_p * comp.d_r * &plant.c_p));
    a.view_mut((partition.xp.start, partition.xr.start), (np, nr))
        .copy_from(&(&plant.b_p * &comp.c_r));
    a.view_mut((partition.xr.start, partition.xp.start), (nr, np))
        .copy_from(&(-&comp.b_r * &plant.c_p));
    a.view_mut((partition.xr.start, partition.xr.start), (nr, nr))
        .copy_from(&comp.a_r);
    c.view_mut((0, partition.xp.start), (1, np))
        .copy_from(&(-&plant.c_p));

    let compensator_class = classify_compensator(&comp, tol);
    let system = build_reset_system(a, c, comp.n_rho, tol)?;
    Ok(ClosedLoop {
        system,
        partition,
        compensator_class,
        plant,
        compensator: comp,
        exo_reference,
        exo_disturbance,
    })
}

impl ClosedLoop {
    /// The open loop seen from the compensator output v to the error e:
    /// exosystems stacked with the plant, state (w1, w2, xp).
    pub fn combined_plant(&self) -> LinearSiso {
        let m1 = self.partition.w1.len();
        let m2 = self.partition.w2.len();
        let np = self.partition.xp.len();
        let n = m1 + m2 + np;
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, 1);
        let mut c = DMatrix::zeros(1, n);
        if let Some(exo) = &self.exo_reference {
            a.view_mut((0, 0), (m1, m1)).copy_from(&exo.a_w);
            c.view_mut((0, 0), (1, m1)).copy_from(&exo.c_w);
        }
        if let Some(exo) = &self.exo_disturbance {
            a.view_mut((m1, m1), (m2, m2)).copy_from(&exo.a_w);
            a.view_mut((m1 + m2, m1), (np, m2))
                .copy_from(&(&self.plant.b_p * &exo.c_w));
        }
        a.view_mut((m1 + m2, m1 + m2), (np, np)).copy_from(&self.plant.a_p);
        b.view_mut((m1 + m2, 0), (np, 1)).copy_from(&self.plant.b_p);
        c.view_mut((0, m1 + m2), (1, np)).copy_from(&(-&self.plant.c_p));
        LinearSiso { a, b, c }
    }

    /// Builds the full closed-loop initial state from plant and compensator
    /// initial conditions, taking exosystem initial states as configured.
    pub fn initial_state(&self, xp0: &DVector<f64>, xr0: &DVector<f64>) -> Result<DVector<f64>> {
        if xp0.len() != self.partition.xp.len() || xr0.len() != self.partition.xr.len() {
            return Err(Error::DimensionMismatch {
                context: "ClosedLoop::initial_state",
                expected: format!("xp0 len {}, xr0 len {}", self.partition.xp.len(), self.partition.xr.len()),
                got: format!("xp0 len {}, xr0 len {}", xp0.len(), xr0.len()),
            });
        }
        let mut x = DVector::zeros(self.system.dim());
        if let Some(exo) = &self.exo_reference {
            x.rows_mut(self.partition.w1.start, exo.order()).copy_from(&exo.w0);
        }
        if let Some(exo) = &self.exo_disturbance {
            x.rows_mut(self.partition.w2.start, exo.order()).copy_from(&exo.w0);
        }
        x.rows_mut(self.partition.xp.start, xp0.len()).copy_from(xp0);
        x.rows_mut(self.partition.xr.start, xr0.len()).copy_from(xr0);
        Ok(x)
    }
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

    fn rotation_reset() -> ResetSystem {
        // planar rotation with surface x1 = x2 and one resetting state
        build_reset_system(
            mat(&[&[0.0, -1.0], &[1.0, 0.0]]),
            mat(&[&[1.0, -1.0]]),
            1,
            1e-9,
        )
        .unwrap()
    }

    fn third_order_example() -> ResetSystem {
        build_reset_system(
            mat(&[&[-1.0, 0.0, 0.0], &[0.0, -1.0, -1.0], &[0.0, 1.0, -1.0]]),
            mat(&[&[1.0, 0.0, 0.0]]),
            1,
            1e-9,
        )
        .unwrap()
    }

    #[test]
    fn projector_properties() {
        let sys = rotation_reset();
        assert_eq!(sys.a_r, mat(&[&[1.0, 0.0], &[0.0, 0.0]]));
        assert_relative_eq!(&sys.a_r * &sys.a_r, sys.a_r.clone(), epsilon = 0.0);
    }

    #[test]
    fn rotation_sets() {
        let sys = rotation_reset();
        // no fixed points on the surface: F_R = {0}, H_R = x1-axis
        assert_eq!(sys.f_r.dim(), 0);
        assert_eq!(sys.h_r.dim(), 1);
        assert!(sys
            .h_r
            .contains(&DVector::from_vec(vec![1.0, 0.0]), 1e-12));
        assert!(sys.in_m(&DVector::from_vec(vec![1.0, 1.0])));
        assert!(sys.in_mr(&DVector::from_vec(vec![1.0, 0.0])));
        assert!(!sys.in_m(&DVector::from_vec(vec![1.0, 0.0])));
    }

    #[test]
    fn third_order_fixed_surface_points() {
        let sys = third_order_example();
        // F_R = M_R carrier = span{(0,1,0)}
        assert_eq!(sys.f_r.dim(), 1);
        assert!(sys.f_r.contains(&DVector::from_vec(vec![0.0, 1.0, 0.0]), 1e-12));
        // F_RU is the x2-axis
        assert_eq!(sys.f_ru.dim(), 1);
        assert!(sys.f_ru.contains(&DVector::from_vec(vec![0.0, 1.0, 0.0]), 1e-12));
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let a = mat(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(
            build_reset_system(a.clone(), mat(&[&[0.0, 0.0]]), 1, 1e-9),
            Err(Error::DegenerateSurface)
        ));
        assert!(matches!(
            build_reset_system(a, mat(&[&[1.0, 0.0]]), 2, 1e-9),
            Err(Error::InvalidResetCount { .. })
        ));
    }

    #[test]
    fn trivial_surface_flagged() {
        // surface normal hits only resetting states that are already fixed:
        // C = (0, c2) makes every surface point a fixed point of the jump
        let sys = build_reset_system(
            mat(&[&[0.0, 1.0], &[-1.0, 0.0]]),
            mat(&[&[0.0, 2.0]]),
            1,
            1e-9,
        )
        .unwrap();
        assert!(sys.m_is_empty());
    }

    #[test]
    fn clegg_full_classification() {
        let ci = Compensator::new(mat(&[&[0.0]]), mat(&[&[1.0]]), mat(&[&[1.0]]), 0.0, 1).unwrap();
        assert_eq!(classify_compensator(&ci, 1e-12), CompensatorClass::Full);
    }

    #[test]
    fn series_classification() {
        let g1 = LinearSiso::from_transfer(&[1.0], &[0.0, 1.0]).unwrap(); // 1/s
        let r2 = LinearSiso::from_transfer(&[1.0], &[0.0, 1.0]).unwrap();
        let left = Compensator::left_series(g1.clone(), r2.clone()).unwrap();
        assert_eq!(classify_compensator(&left, 1e-12), CompensatorClass::Left);
        let right = Compensator::right_series(r2, g1).unwrap();
        assert_eq!(classify_compensator(&right, 1e-12), CompensatorClass::Right);
    }

    #[test]
    fn diagonal_coupling_tie_resolves_right() {
        let comp = Compensator::new(
            mat(&[&[-1.0, 0.0], &[0.0, -2.0]]),
            mat(&[&[1.0], &[1.0]]),
            mat(&[&[1.0, 1.0]]),
            0.0,
            1,
        )
        .unwrap();
        assert_eq!(classify_compensator(&comp, 1e-12), CompensatorClass::Right);
    }

    #[test]
    fn closed_loop_blocks_round_trip() {
        // integrator plant, Clegg integrator, sinusoidal reference
        let plant = Plant::new(mat(&[&[0.0]]), mat(&[&[1.0]]), mat(&[&[1.0]])).unwrap();
        let comp = Compensator::new(mat(&[&[0.0]]), mat(&[&[1.0]]), mat(&[&[1.0]]), 0.0, 1).unwrap();
        let omega = 1.0;
        let exo = Exosystem::new(
            mat(&[&[0.0, omega], &[-omega, 0.0]]),
            mat(&[&[1.0, 0.0]]),
            DVector::from_vec(vec![0.0, 1.0]),
        )
        .unwrap();
        let cl = assemble_closed_loop(plant.clone(), comp.clone(), Some(exo.clone()), None, 1e-9)
            .unwrap();
        let a = &cl.system.a;
        assert_eq!(cl.system.dim(), 4);
        let expect = mat(&[
            &[0.0, omega, 0.0, 0.0],
            &[-omega, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
            &[1.0, 0.0, -1.0, 0.0],
        ]);
        assert_relative_eq!(a.clone(), expect, epsilon = 0.0);
        assert_eq!(cl.system.c, mat(&[&[1.0, 0.0, -1.0, 0.0]]));
        assert_eq!(cl.compensator_class, CompensatorClass::Full);

        // block extraction recovers the inputs exactly
        let p = &cl.partition;
        assert_eq!(
            a.view((p.xp.start, p.xp.start), (1, 1)).into_owned(),
            plant.a_p
        );
        assert_eq!(
            a.view((p.xr.start, p.xr.start), (1, 1)).into_owned(),
            comp.a_r
        );
        assert_eq!(a.view((p.w1.start, p.w1.start), (2, 2)).into_owned(), exo.a_w);
    }

    #[test]
    fn closed_loop_surface_orthogonal_to_jump() {
        let plant = Plant::new(mat(&[&[-1.0]]), mat(&[&[1.0]]), mat(&[&[1.0]])).unwrap();
        let comp = Compensator::new(mat(&[&[0.0]]), mat(&[&[1.0]]), mat(&[&[1.0]]), 0.0, 1).unwrap();
        let cl = assemble_closed_loop(plant, comp, None, None, 1e-9).unwrap();
        // trailing n_rho entries of C vanish, so C (I - A_R) = 0
        let residual = &cl.system.c
            * (DMatrix::<f64>::identity(cl.system.dim(), cl.system.dim()) - &cl.system.a_r);
        assert_eq!(residual.amax(), 0.0);
    }

    #[test]
    fn combined_plant_includes_disturbance_path() {
        let plant = Plant::new(mat(&[&[-1.0]]), mat(&[&[1.0]]), mat(&[&[1.0]])).unwrap();
        let comp = Compensator::new(mat(&[&[0.0]]), mat(&[&[1.0]]), mat(&[&[1.0]]), 0.0, 1).unwrap();
        let exo = Exosystem::new(
            mat(&[&[0.0, 1.0], &[-1.0, 0.0]]),
            mat(&[&[1.0, 0.0]]),
            DVector::from_vec(vec![0.0, 1.0]),
        )
        .unwrap();
        let cl = assemble_closed_loop(plant, comp, None, Some(exo), 1e-9).unwrap();
        let gp = cl.combined_plant();
        assert_eq!(gp.order(), 3);
        let expect = mat(&[&[0.0, 1.0, 0.0], &[-1.0, 0.0, 0.0], &[1.0, 0.0, -1.0]]);
        assert_relative_eq!(gp.a, expect, epsilon = 0.0);
        assert_eq!(gp.c, mat(&[&[0.0, 0.0, -1.0]]));
    }
}
