//! Well-posedness of reset instants: the invariance criterion on the
//! unobservable jump-fixed subspace, structural shortcuts for full and right
//! compensators, the pole/zero cancellation count for series left
//! compensators, and supporting eigenstructure diagnostics.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::{ClosedLoop, CompensatorClass, LinearSiso, ResetSystem};
use crate::numerics::{
    eigen_structure, is_invariant, rank, real_root_space, Subspace, DEFAULT_CLUSTER_TOL,
    DEFAULT_RANK_TOL,
};

/// Relative tolerance for the integer multiplicity decisions.
const MULT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    WellPosed,
    IllPosed,
}

/// Which criterion produced the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Invariance,
    FullReset,
    RightReset,
    CancellationCount,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Invariance => "invariance",
            Method::FullReset => "full-reset",
            Method::RightReset => "right-reset",
            Method::CancellationCount => "cancellation-count",
        };
        f.write_str(s)
    }
}

/// One candidate unobservable mode with its multiplicity bookkeeping:
/// pole multiplicities in the two series factors, zero multiplicity of the
/// combined open loop, and the resulting cancellation count.
#[derive(Debug, Clone)]
pub struct CancellationRow {
    pub lambda: Complex<f64>,
    /// Pole multiplicity in the linear series factor.
    pub q: usize,
    /// Pole multiplicity in the resetting factor's base dynamics.
    pub r: usize,
    /// Zero multiplicity of the combined exosystem+plant open loop.
    pub m: usize,
    /// min(q + r, m).
    pub d: usize,
}

/// Verdict plus certificate for a well-posedness decision.
#[derive(Debug, Clone)]
pub struct WellPosednessReport {
    pub verdict: Verdict,
    pub method: Method,
    pub f_ru: Subspace,
    /// Direction violating invariance, present when ill-posed by the
    /// invariance method.
    pub witness: Option<DVector<f64>>,
    pub cancellation_table: Option<Vec<CancellationRow>>,
    /// Total cancellation count (sum of d over the table).
    pub s: Option<usize>,
    pub n_rho: usize,
}

/// Orthonormal basis of the jump-fixed unobservable subspace
/// N(I - A_R) meet N(O).
pub fn compute_f_ru(sys: &ResetSystem) -> Subspace {
    sys.f_ru.clone()
}

/// Decides well-posedness by testing A-invariance of the jump-fixed
/// unobservable subspace; on failure the report carries the image of the
/// worst-offending basis vector as a witness.
pub fn check_well_posed(sys: &ResetSystem) -> WellPosednessReport {
    let check = is_invariant(&sys.a, &sys.f_ru, sys.tol.max(DEFAULT_RANK_TOL));
    WellPosednessReport {
        verdict: if check.invariant {
            Verdict::WellPosed
        } else {
            Verdict::IllPosed
        },
        method: Method::Invariance,
        f_ru: sys.f_ru.clone(),
        witness: check.witness,
        cancellation_table: None,
        s: None,
        n_rho: sys.n_r,
    }
}

/// Structural shortcut: full and right compensators always give well-posed
/// reset instants. Returns `None` for other classes.
pub fn check_structural(cl: &ClosedLoop) -> Option<WellPosednessReport> {
    let method = match cl.compensator_class {
        CompensatorClass::Full => Method::FullReset,
        CompensatorClass::Right => Method::RightReset,
        _ => return None,
    };
    Some(WellPosednessReport {
        verdict: Verdict::WellPosed,
        method,
        f_ru: cl.system.f_ru.clone(),
        witness: None,
        cancellation_table: None,
        s: None,
        n_rho: cl.system.n_r,
    })
}

/// Cancellation-count criterion for a series left compensator (linear factor
/// driving a fully resetting factor): well-posed exactly when the number of
/// resetting states covers the total cancellation count s.
///
/// Preconditions: the compensator must carry its series factorization, both
/// factors must be minimal realizations, and the combined exosystem+plant
/// open loop must be observable; violations are reported as errors rather
/// than verdicts.
pub fn cancellation_analysis(cl: &ClosedLoop) -> Result<WellPosednessReport> {
    let table = cancellation_rows(cl)?;
    let s: usize = table.iter().map(|row| row.d).sum();
    let n_rho = cl.system.n_r;
    Ok(WellPosednessReport {
        verdict: if n_rho >= s {
            Verdict::WellPosed
        } else {
            Verdict::IllPosed
        },
        method: Method::CancellationCount,
        f_ru: cl.system.f_ru.clone(),
        witness: None,
        cancellation_table: Some(table),
        s: Some(s),
        n_rho,
    })
}

fn series_parts(cl: &ClosedLoop) -> Result<(&LinearSiso, &LinearSiso)> {
    let parts = cl.compensator.series.as_ref().ok_or_else(|| {
        Error::Precondition(
            "cancellation analysis requires a compensator built as a series \
             linear factor followed by a fully resetting factor"
                .into(),
        )
    })?;
    if cl.compensator_class != CompensatorClass::Left {
        return Err(Error::Precondition(format!(
            "cancellation analysis applies to left compensators, got {}",
            cl.compensator_class
        )));
    }
    Ok((&parts.linear, &parts.reset_base))
}

fn cancellation_rows(cl: &ClosedLoop) -> Result<Vec<CancellationRow>> {
    let (g1, r2) = series_parts(cl)?;
    check_minimal(g1, "linear series factor")?;
    check_minimal(r2, "resetting series factor")?;
    let combined = cl.combined_plant();
    if !is_observable(&combined.a, &combined.c) {
        return Err(Error::MinimalityViolated(
            "combined exosystem+plant open loop is not observable".into(),
        ));
    }

    // candidate unobservable modes: poles of either series factor
    let num = numerator_coeffs(&combined);
    let mut rows: Vec<CancellationRow> = Vec::new();
    let mut lambdas: Vec<Complex<f64>> = Vec::new();
    for factor in [g1, r2] {
        for cluster in eigen_structure(&factor.a, DEFAULT_CLUSTER_TOL)? {
            if !lambdas
                .iter()
                .any(|l| (l - cluster.value).norm() <= DEFAULT_CLUSTER_TOL * 10.0)
            {
                lambdas.push(cluster.value);
            }
        }
    }
    lambdas.sort_by(|p, q| (p.re, p.im).partial_cmp(&(q.re, q.im)).unwrap());

    for lambda in lambdas {
        let q = pole_multiplicity(&g1.a, lambda)?;
        let r = pole_multiplicity(&r2.a, lambda)?;
        let m = zero_multiplicity(&num, lambda)?;
        rows.push(CancellationRow {
            lambda,
            q,
            r,
            m,
            d: (q + r).min(m),
        });
    }
    Ok(rows)
}

fn check_minimal(block: &LinearSiso, name: &str) -> Result<()> {
    if !is_controllable(&block.a, &block.b) {
        return Err(Error::MinimalityViolated(format!("{name} is not controllable")));
    }
    if !is_observable(&block.a, &block.c) {
        return Err(Error::MinimalityViolated(format!("{name} is not observable")));
    }
    Ok(())
}

fn is_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let mut stack = DMatrix::zeros(n, n);
    let mut col = b.column(0).into_owned();
    for k in 0..n {
        stack.set_column(k, &col);
        col = a * &col;
    }
    rank(&stack, DEFAULT_RANK_TOL) == n
}

fn is_observable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    match crate::numerics::observability_matrix(a, c) {
        Ok(o) => rank(&o, DEFAULT_RANK_TOL) == a.nrows(),
        Err(_) => false,
    }
}

fn pole_multiplicity(a: &DMatrix<f64>, lambda: Complex<f64>) -> Result<usize> {
    if a.nrows() == 0 {
        return Ok(0);
    }
    Ok(eigen_structure(a, DEFAULT_CLUSTER_TOL)?
        .into_iter()
        .find(|c| (c.value - lambda).norm() <= DEFAULT_CLUSTER_TOL * 10.0)
        .map_or(0, |c| c.algebraic))
}

/// Coefficients (ascending powers of s) of C adj(sI - A) B, the transfer
/// numerator of a SISO realization, by the Faddeev-LeVerrier recursion.
fn numerator_coeffs(block: &LinearSiso) -> Vec<f64> {
    let n = block.a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut m = id.clone();
    // adj(sI - A) = sum_{k=0}^{n-1} M_{k+1} s^{n-1-k}
    let mut coeffs = vec![0.0; n];
    for k in 0..n {
        coeffs[n - 1 - k] = (&block.c * &m * &block.b)[(0, 0)];
        if k + 1 < n {
            let am = &block.a * &m;
            let c = -am.trace() / (k as f64 + 1.0);
            m = am + &id * c;
        }
    }
    coeffs
}

/// Multiplicity of `lambda` as a root of the real polynomial `coeffs`
/// (ascending powers), decided with a relative tolerance; a value in the
/// ambiguous band around the threshold is reported as an error instead of
/// silently rounded.
fn zero_multiplicity(coeffs: &[f64], lambda: Complex<f64>) -> Result<usize> {
    let base_scale = coeffs.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    if base_scale == 0.0 {
        return Err(Error::MinimalityViolated(
            "combined open loop has a zero transfer numerator".into(),
        ));
    }
    let mut current: Vec<f64> = coeffs.to_vec();
    let mut k = 0usize;
    loop {
        if current.is_empty() {
            return Ok(k);
        }
        let deg = current.len() - 1;
        let scale = base_scale * lambda.norm().max(1.0).powi(deg as i32);
        let value = poly_eval(&current, lambda).norm();
        if value > MULT_TOL * scale {
            if value < 10.0 * MULT_TOL * scale {
                return Err(Error::Precondition(format!(
                    "zero multiplicity at {lambda} is numerically ambiguous (residual {value:.3e})"
                )));
            }
            return Ok(k);
        }
        current = poly_derivative(&current);
        k += 1;
    }
}

fn poly_eval(coeffs: &[f64], z: Complex<f64>) -> Complex<f64> {
    coeffs
        .iter()
        .rev()
        .fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| c * i as f64)
        .collect()
}

/// Eigenstructure facts backing the cancellation criterion, verified
/// numerically on a concrete closed loop.
#[derive(Debug, Clone)]
pub struct AppendixDiagnostics {
    /// Every unobservable mode of the closed loop has geometric multiplicity 1.
    pub geo_mult_all_one: bool,
    /// The jump-fixed unobservable subspace is A-invariant exactly when it is
    /// trivial.
    pub m_ru_trivial_iff_invariant: bool,
    /// The unobservable subspace decomposes as the direct sum of the root
    /// spaces N((lambda I - A)^d) over the unobservable modes.
    pub unobs_decomposition_ok: bool,
    /// Modes violating any of the checks.
    pub offending: Vec<Complex<f64>>,
}

/// Runs the three eigenstructure checks on a series left closed loop.
pub fn appendix_diagnostics(cl: &ClosedLoop) -> Result<AppendixDiagnostics> {
    let rows = cancellation_rows(cl)?;
    let a = &cl.system.a;
    let clusters = eigen_structure(a, DEFAULT_CLUSTER_TOL)?;
    let mut offending = Vec::new();

    // (a) geometric multiplicity 1 for each unobservable mode
    let mut geo_ok = true;
    for row in rows.iter().filter(|r| r.d > 0) {
        let geo = clusters
            .iter()
            .find(|c| (c.value - row.lambda).norm() <= DEFAULT_CLUSTER_TOL * 10.0)
            .map_or(0, |c| c.geometric);
        if geo != 1 {
            geo_ok = false;
            offending.push(row.lambda);
        }
    }

    // (b) invariance exactly at triviality
    let inv = is_invariant(a, &cl.system.f_ru, DEFAULT_RANK_TOL).invariant;
    let iff_ok = inv == cl.system.f_ru.is_zero();

    // (c) N(O) is the direct sum of the root spaces N((lambda I - A)^d);
    // conjugate pairs are handled jointly through their real carrier.
    let unobs = &cl.system.unobservable;
    let mut complex_dim_sum = 0usize;
    let mut combined = DMatrix::<f64>::zeros(cl.system.dim(), 0);
    let mut seen: Vec<Complex<f64>> = Vec::new();
    let mut decomp_ok = true;
    for row in rows.iter().filter(|r| r.d > 0) {
        complex_dim_sum += row.d;
        let key = Complex::new(row.lambda.re, row.lambda.im.abs());
        if seen
            .iter()
            .any(|l| (l - key).norm() <= DEFAULT_CLUSTER_TOL * 10.0)
        {
            continue;
        }
        seen.push(key);
        let carrier = real_root_space(a, key, row.d, DEFAULT_RANK_TOL);
        if !unobs.contains_subspace(&carrier, 1e-7) {
            decomp_ok = false;
            offending.push(row.lambda);
        }
        let mut wider = DMatrix::zeros(cl.system.dim(), combined.ncols() + carrier.dim());
        wider.view_mut((0, 0), (cl.system.dim(), combined.ncols())).copy_from(&combined);
        wider
            .view_mut((0, combined.ncols()), (cl.system.dim(), carrier.dim()))
            .copy_from(carrier.basis());
        combined = wider;
    }
    let span = Subspace::from_span(&combined, DEFAULT_RANK_TOL);
    if span.dim() != unobs.dim() || complex_dim_sum != unobs.dim() {
        decomp_ok = false;
    }

    Ok(AppendixDiagnostics {
        geo_mult_all_one: geo_ok,
        m_ru_trivial_iff_invariant: iff_ok,
        unobs_decomposition_ok: decomp_ok,
        offending,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        assemble_closed_loop, build_reset_system, Compensator, Exosystem, LinearSiso, Plant,
    };
    use nalgebra::{DMatrix, DVector};

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            rows.len(),
            rows[0].len(),
            &rows.iter().flat_map(|r| r.iter().cloned()).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn ill_posed_third_order_with_witness() {
        let sys = build_reset_system(
            mat(&[&[-1.0, 0.0, 0.0], &[0.0, -1.0, -1.0], &[0.0, 1.0, -1.0]]),
            mat(&[&[1.0, 0.0, 0.0]]),
            1,
            1e-9,
        )
        .unwrap();
        let report = check_well_posed(&sys);
        assert_eq!(report.verdict, Verdict::IllPosed);
        let w = report.witness.unwrap();
        let expect = DVector::from_vec(vec![0.0, -1.0, 1.0]).normalize();
        assert!((w.clone() - &expect).norm().min((w + expect).norm()) < 1e-10);
    }

    #[test]
    fn trivial_f_ru_is_well_posed() {
        let sys = build_reset_system(
            mat(&[&[0.0, -1.0], &[1.0, 0.0]]),
            mat(&[&[1.0, -1.0]]),
            1,
            1e-9,
        )
        .unwrap();
        assert_eq!(sys.f_ru.dim(), 0);
        assert_eq!(check_well_posed(&sys).verdict, Verdict::WellPosed);
    }

    #[test]
    fn numerator_by_adjugate_matches_transfer() {
        // (s + 1)/(s^2 + 5 s + 6) realized canonically: numerator C adj(sI-A) B
        let block = LinearSiso::from_transfer(&[1.0, 1.0], &[6.0, 5.0, 1.0]).unwrap();
        assert_eq!(numerator_coeffs(&block), vec![1.0, 1.0]);
    }

    #[test]
    fn zero_multiplicity_counts_repeated_roots() {
        // (s^2 + 1)^1 at +-j, s^2 at 0
        assert_eq!(
            zero_multiplicity(&[1.0, 0.0, 1.0], Complex::new(0.0, 1.0)).unwrap(),
            1
        );
        assert_eq!(
            zero_multiplicity(&[0.0, 0.0, 1.0], Complex::new(0.0, 0.0)).unwrap(),
            2
        );
        assert_eq!(
            zero_multiplicity(&[1.0, 0.0, 1.0], Complex::new(1.0, 0.0)).unwrap(),
            0
        );
    }

    fn oscillator_cancellation_loop() -> ClosedLoop {
        // plant 1/(s+1), disturbance generator 1/(s^2+1), series compensator:
        // linear factor 1/(s^2+1) driving a one-state resetting integrator
        let plant = Plant::new(mat(&[&[-1.0]]), mat(&[&[1.0]]), mat(&[&[1.0]])).unwrap();
        let g1 = LinearSiso::from_transfer(&[1.0], &[1.0, 0.0, 1.0]).unwrap();
        let r2 = LinearSiso::from_transfer(&[1.0], &[0.0, 1.0]).unwrap();
        let comp = Compensator::left_series(g1, r2).unwrap();
        let exo = Exosystem::new(
            mat(&[&[0.0, 1.0], &[-1.0, 0.0]]),
            mat(&[&[1.0, 0.0]]),
            DVector::from_vec(vec![0.0, 1.0]),
        )
        .unwrap();
        assemble_closed_loop(plant, comp, None, Some(exo), 1e-9).unwrap()
    }

    #[test]
    fn oscillator_cancellation_is_ill_posed() {
        let cl = oscillator_cancellation_loop();
        let report = cancellation_analysis(&cl).unwrap();
        assert_eq!(report.verdict, Verdict::IllPosed);
        assert_eq!(report.s, Some(2));
        assert_eq!(report.n_rho, 1);
        let table = report.cancellation_table.unwrap();
        // +-j rows: q = 1, r = 0, m = 1, d = 1 each; 0 row: q = 0, r = 1, m = 0
        for row in &table {
            if row.lambda.im.abs() > 0.5 {
                assert_eq!((row.q, row.r, row.m, row.d), (1, 0, 1, 1));
            } else {
                assert_eq!((row.q, row.r, row.d), (0, 1, 0));
            }
        }
        // the invariance route must agree
        assert_eq!(check_well_posed(&cl.system).verdict, Verdict::IllPosed);
    }

    #[test]
    fn appendix_diagnostics_on_cancellation_loop() {
        let cl = oscillator_cancellation_loop();
        let diag = appendix_diagnostics(&cl).unwrap();
        assert!(diag.geo_mult_all_one, "offending: {:?}", diag.offending);
        assert!(diag.m_ru_trivial_iff_invariant);
        assert!(diag.unobs_decomposition_ok, "offending: {:?}", diag.offending);
        assert!(!cl.system.f_ru.is_zero());
    }

    #[test]
    fn structural_shortcut_for_full_reset() {
        let plant = Plant::new(mat(&[&[0.0]]), mat(&[&[1.0]]), mat(&[&[1.0]])).unwrap();
        let ci = Compensator::new(mat(&[&[0.0]]), mat(&[&[1.0]]), mat(&[&[1.0]]), 0.0, 1).unwrap();
        let cl = assemble_closed_loop(plant, ci, None, None, 1e-9).unwrap();
        let report = check_structural(&cl).unwrap();
        assert_eq!(report.verdict, Verdict::WellPosed);
        assert_eq!(report.method, Method::FullReset);
        assert_eq!(check_well_posed(&cl.system).verdict, Verdict::WellPosed);
    }

    #[test]
    fn minimality_violation_reported() {
        // non-observable linear factor: two-state block with output seeing
        // only one state and no coupling
        let plant = Plant::new(mat(&[&[-1.0]]), mat(&[&[1.0]]), mat(&[&[1.0]])).unwrap();
        let g1 = LinearSiso::new(
            mat(&[&[-1.0, 0.0], &[0.0, -2.0]]),
            mat(&[&[1.0], &[1.0]]),
            mat(&[&[1.0, 0.0]]),
        )
        .unwrap();
        let r2 = LinearSiso::from_transfer(&[1.0], &[0.0, 1.0]).unwrap();
        let comp = Compensator::left_series(g1, r2).unwrap();
        let cl = assemble_closed_loop(plant, comp, None, None, 1e-9).unwrap();
        assert!(matches!(
            cancellation_analysis(&cl),
            Err(Error::MinimalityViolated(_))
        ));
    }
}
