//! Continuous-dependence and robustness analyses: Hausdorff distance between
//! sampled trajectories, perturbation probes, the tangential-crossing set,
//! backward-reachable polytope enclosures, safe-set membership, and sensor
//! noise sensitivity experiments.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ClosedLoop, CompensatorClass, Exosystem, ResetSystem};
use crate::numerics::{expm, null_space, spectral_radius, vstack, Subspace};
use crate::simulate::{reset_instants, simulate, SimOptions, Trajectory};

/// The point set of a sampled trajectory over a time window.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<DVector<f64>>,
    pub t_horizon: f64,
    pub source_x0: DVector<f64>,
}

impl PointCloud {
    /// Collects the sample states of a trajectory, which already include both
    /// one-sided limits at every jump.
    pub fn from_trajectory(traj: &Trajectory, source_x0: DVector<f64>) -> Self {
        PointCloud {
            points: traj.samples.iter().map(|s| s.x.clone()).collect(),
            t_horizon: traj.segments.last().map_or(0.0, |s| s.t_end),
            source_x0,
        }
    }

    /// Same, keeping only the given index range of each state (used to
    /// project extended states back onto the original coordinates).
    pub fn from_trajectory_block(
        traj: &Trajectory,
        range: std::ops::Range<usize>,
        source_x0: DVector<f64>,
    ) -> Self {
        PointCloud {
            points: traj
                .samples
                .iter()
                .map(|s| s.x.rows(range.start, range.len()).into_owned())
                .collect(),
            t_horizon: traj.segments.last().map_or(0.0, |s| s.t_end),
            source_x0,
        }
    }
}

/// Exact Hausdorff distance between two finite point sets. The inner scan
/// breaks early once a neighbor closer than the running maximum is found,
/// which prunes most pairs while returning the same value as the full
/// O(|A| |B|) scan.
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.points.is_empty() || b.points.is_empty() {
        return Err(Error::Precondition("hausdorff: point clouds must be nonempty".into()));
    }
    let d2 = directed_sq(&a.points, &b.points).max(directed_sq(&b.points, &a.points));
    Ok(d2.sqrt())
}

fn directed_sq(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let mut cmax = 0.0f64;
    for p in a {
        let mut cmin = f64::INFINITY;
        for q in b {
            let mut d = 0.0;
            for (x, y) in p.iter().zip(q.iter()) {
                d += (x - y) * (x - y);
            }
            if d <= cmax {
                cmin = d;
                break;
            }
            if d < cmin {
                cmin = d;
            }
        }
        if cmin > cmax && cmin.is_finite() {
            cmax = cmin;
        }
    }
    cmax
}

/// Upper bound on the Hausdorff error introduced by sampling a flow at step
/// `dt`: largest speed times the step.
pub fn discretization_bound(sys: &ResetSystem, cloud: &PointCloud, dt: f64) -> f64 {
    let speed = cloud
        .points
        .iter()
        .map(|x| (&sys.a * x).norm())
        .fold(0.0, f64::max);
    speed * dt
}

/// One row of a perturbation probe.
#[derive(Debug, Clone)]
pub struct ProbeRow {
    pub delta: f64,
    pub worst_dh: f64,
    pub argmax_direction: DVector<f64>,
    /// Sampling-induced error bound for this row's distances.
    pub discretization_bound: f64,
}

/// Deterministic, reproducible unit directions: equal angles in the plane, a
/// Fibonacci spiral on the 2-sphere, and a fixed-seed normal scheme above.
pub fn unit_sphere_directions(dim: usize, count: usize) -> Vec<DVector<f64>> {
    assert!(dim >= 1 && count >= 1);
    match dim {
        1 => (0..count)
            .map(|k| DVector::from_vec(vec![if k % 2 == 0 { 1.0 } else { -1.0 }]))
            .collect(),
        2 => (0..count)
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                DVector::from_vec(vec![phi.cos(), phi.sin()])
            })
            .collect(),
        3 => {
            let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = 2.0 * std::f64::consts::PI * k as f64 / golden;
                    DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
                })
                .collect()
        }
        _ => {
            // fixed-seed linear congruential stream through Box-Muller
            let mut state = 0x2545F4914F6CDD1Du64;
            let mut uniform = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64).clamp(1e-16, 1.0 - 1e-16)
            };
            (0..count)
                .map(|_| {
                    let mut v = DVector::zeros(dim);
                    for i in 0..dim {
                        let (u1, u2) = (uniform(), uniform());
                        v[i] = (-2.0 * u1.ln()).sqrt()
                            * (2.0 * std::f64::consts::PI * u2).cos();
                    }
                    v.normalize()
                })
                .collect()
        }
    }
}

/// Probes continuous dependence on the initial condition: for each radius in
/// `deltas`, perturbs `x0` along `n_dirs` deterministic unit directions,
/// simulates over `[0, T]`, and reports the worst Hausdorff distance to the
/// nominal trajectory. `T` must not be one of the nominal reset instants.
pub fn continuous_dependence_probe(
    sys: &ResetSystem,
    x0: &DVector<f64>,
    t_horizon: f64,
    deltas: &[f64],
    n_dirs: usize,
    opts: &SimOptions,
) -> Result<Vec<ProbeRow>> {
    let run_opts = SimOptions {
        t_max: t_horizon,
        ..opts.clone()
    };
    // search slightly past T so an instant landing exactly on the horizon is
    // still seen by the precondition check
    let check_opts = SimOptions {
        t_max: t_horizon + 1e-6,
        ..opts.clone()
    };
    let nominal_resets = reset_instants(sys, x0, &check_opts)?;
    if let Some(tk) = nominal_resets
        .times
        .iter()
        .find(|tk| (*tk - t_horizon).abs() <= run_opts.time_tol.max(1e-9))
    {
        return Err(Error::Precondition(format!(
            "probe horizon T = {t_horizon} coincides with the reset instant t = {tk}"
        )));
    }
    let nominal = PointCloud::from_trajectory(&simulate(sys, x0, &run_opts)?, x0.clone());
    let bound_dt = run_opts.output_sample_dt;

    let dirs = unit_sphere_directions(sys.dim(), n_dirs);
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mut worst = -1.0;
        let mut argmax = dirs[0].clone();
        let mut bound = discretization_bound(sys, &nominal, bound_dt);
        for d in &dirs {
            let xp = x0 + d * delta;
            let traj = simulate(sys, &xp, &run_opts)?;
            let cloud = PointCloud::from_trajectory(&traj, xp.clone());
            let dh = hausdorff(&cloud, &nominal)?;
            if dh > worst {
                worst = dh;
                argmax = d.clone();
            }
            bound = bound.max(discretization_bound(sys, &cloud, bound_dt));
        }
        rows.push(ProbeRow {
            delta,
            worst_dh: worst,
            argmax_direction: argmax,
            discretization_bound: bound,
        });
    }
    Ok(rows)
}

/// Linear carrier of the tangential crossing set (surface points with zero
/// output rate) and its excluded part.
#[derive(Debug, Clone)]
pub struct TangentialSet {
    /// N(C) meet N(CA): states where a crossing is tangential.
    pub carrier: Subspace,
    /// The subspace to subtract (unobservable jump-fixed states).
    pub excluded: Subspace,
    /// True when the tangential set itself is empty.
    pub is_empty: bool,
}

/// Computes the tangential-crossing set carrier null(stack(C, CA)); the set
/// is empty exactly when the carrier sits inside the excluded subspace.
pub fn tangential_set(sys: &ResetSystem) -> TangentialSet {
    let ca = &sys.c * &sys.a;
    let carrier = null_space(&vstack(&sys.c, &ca), sys.tol.max(1e-12));
    let is_empty = sys.f_ru.contains_subspace(&carrier, 1e-9);
    TangentialSet {
        carrier,
        excluded: sys.f_ru.clone(),
        is_empty,
    }
}

/// True when every surface point has nonzero output rate
/// (N(C) meet N(CA) = {0}); then the safe initial set is simply the
/// complement of the reset set and no reachability analysis is needed.
pub fn output_rate_nonzero_on_surface(sys: &ResetSystem) -> bool {
    tangential_set(sys).carrier.is_zero()
}

/// A halfspace `normal . x <= offset` with a unit normal.
#[derive(Debug, Clone)]
pub struct Halfspace {
    pub normal: DVector<f64>,
    pub offset: f64,
}

/// Intersection of halfspaces.
#[derive(Debug, Clone)]
pub struct Polytope {
    pub halfspaces: Vec<Halfspace>,
}

impl Polytope {
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.halfspaces
            .iter()
            .all(|h| h.normal.dot(x) <= h.offset + tol)
    }
}

/// Cone enclosure of the backward-reachable set of a one-dimensional
/// tangential carrier in a third-order system.
///
/// Builds `n_normals` unit normals fanned around the carrier direction v:
/// azimuths spread over the full circle in the plane orthogonal to v, polar
/// angle per normal pushed as far from v as the constraint allows, namely
/// that the normal keeps a strict sign against the whole backward orbit
/// e^{-At} v. The first polytope P collects `normal . x <= 0`, the mirror
/// polytope uses the negated normals; the orbit lies in the mirror, its
/// antipode in P, so the union encloses the full backward-reachable cone.
pub fn backward_reach_polytopes(
    sys: &ResetSystem,
    n_normals: usize,
    t_horizon: f64,
) -> Result<(Polytope, Polytope)> {
    if sys.dim() != 3 {
        return Err(Error::NotSupported(format!(
            "backward-reach enclosure is implemented for third-order systems, got n = {}",
            sys.dim()
        )));
    }
    let tset = tangential_set(sys);
    if tset.carrier.dim() != 1 {
        return Err(Error::NotSupported(format!(
            "backward-reach enclosure needs a one-dimensional tangential carrier, got dim {}",
            tset.carrier.dim()
        )));
    }
    let v = tset.carrier.basis().column(0).into_owned();

    // orthonormal frame (u1, u2, v)
    let seed = if v[0].abs() < 0.9 {
        DVector::from_vec(vec![1.0, 0.0, 0.0])
    } else {
        DVector::from_vec(vec![0.0, 1.0, 0.0])
    };
    let u1 = (&seed - &v * v.dot(&seed)).normalize();
    let u2 = DVector::from_vec(vec![
        v[1] * u1[2] - v[2] * u1[1],
        v[2] * u1[0] - v[0] * u1[2],
        v[0] * u1[1] - v[1] * u1[0],
    ]);

    // backward orbit samples over a horizon extended until the constraint
    // ratio stabilizes
    let minus_a = -&sys.a;
    let dt = (0.1 / spectral_radius(&minus_a).max(1.0)).min(0.01);
    let mut horizon = t_horizon.max(1.0);
    let mut orbit = sample_orbit(&minus_a, &v, dt, horizon);
    for _ in 0..6 {
        let doubled = sample_orbit(&minus_a, &v, dt, horizon * 2.0);
        let r1 = worst_ratios(&orbit, &u1, &u2, &v, n_normals)?;
        let r2 = worst_ratios(&doubled, &u1, &u2, &v, n_normals)?;
        let drift = r1
            .iter()
            .zip(&r2)
            .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
            .fold(0.0, f64::max);
        orbit = doubled;
        horizon *= 2.0;
        if drift < 1e-9 {
            break;
        }
    }

    let ratios = worst_ratios(&orbit, &u1, &u2, &v, n_normals)?;
    let mut halves = Vec::with_capacity(n_normals);
    let margin = 1e-6;
    for (i, &m) in ratios.iter().enumerate() {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / n_normals as f64;
        // largest polar tilt keeping normal . e^{-At} v > 0 for all t
        let theta = if m > 0.0 {
            (1.0 / (m * (1.0 + margin))).atan()
        } else {
            std::f64::consts::FRAC_PI_2 * (1.0 - margin)
        };
        let azimuth = &u1 * phi.cos() + &u2 * phi.sin();
        let normal = (&azimuth * theta.sin() + &v * theta.cos()).normalize();
        halves.push(Halfspace { normal, offset: 0.0 });
    }
    let p = Polytope {
        halfspaces: halves
            .iter()
            .map(|h| Halfspace {
                normal: h.normal.clone(),
                offset: 0.0,
            })
            .collect(),
    };
    let p_hat = Polytope {
        halfspaces: halves
            .into_iter()
            .map(|h| Halfspace {
                normal: -h.normal,
                offset: 0.0,
            })
            .collect(),
    };
    Ok((p, p_hat))
}

fn sample_orbit(minus_a: &DMatrix<f64>, v: &DVector<f64>, dt: f64, horizon: f64) -> Vec<DVector<f64>> {
    let step = expm(minus_a, dt);
    let n_steps = (horizon / dt).ceil() as usize;
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut x = v.clone();
    out.push(x.clone());
    for _ in 0..n_steps {
        x = &step * &x;
        out.push(x.clone());
    }
    out
}

/// For each azimuth, the largest value of (negative azimuthal component) over
/// (carrier component) along the orbit; the polar tilt must stay below
/// atan(1 / ratio) for the halfspace to keep a strict sign on the orbit.
fn worst_ratios(
    orbit: &[DVector<f64>],
    u1: &DVector<f64>,
    u2: &DVector<f64>,
    v: &DVector<f64>,
    n_normals: usize,
) -> Result<Vec<f64>> {
    let mut ratios = vec![0.0f64; n_normals];
    for x in orbit {
        let c3 = v.dot(x);
        if c3 <= 0.0 {
            return Err(Error::NotSupported(
                "backward orbit loses its component along the tangential carrier; \
                 the cone enclosure construction does not apply"
                    .into(),
            ));
        }
        let (a1, a2) = (u1.dot(x), u2.dot(x));
        for (i, r) in ratios.iter_mut().enumerate() {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / n_normals as f64;
            let a = a1 * phi.cos() + a2 * phi.sin();
            if a < 0.0 {
                *r = r.max(-a / c3);
            }
        }
    }
    Ok(ratios)
}

/// Whether no nonzero after-reset state lies in either polytope, sampled over
/// unit directions of the after-reset carrier (membership is scale-free since
/// the halfspaces pass through the origin).
pub fn polytopes_exclude_after_reset_set(
    sys: &ResetSystem,
    p: &Polytope,
    p_hat: &Polytope,
    n_samples: usize,
) -> bool {
    let carrier = &sys.m_r_carrier;
    if carrier.is_zero() {
        return true;
    }
    let dirs = unit_sphere_directions(carrier.dim(), n_samples);
    dirs.iter().all(|d| {
        let x = carrier.basis() * d;
        if !sys.in_mr(&x) {
            return true;
        }
        !p.contains(&x, 0.0) && !p_hat.contains(&x, 0.0)
    })
}

/// Safe-set membership: `x0` must avoid the reset set, and when tangential
/// crossings are possible it must also avoid the backward-reach enclosure,
/// whose polytopes must exclude the after-reset set.
pub fn check_d_membership(
    sys: &ResetSystem,
    x0: &DVector<f64>,
    reach: Option<(&Polytope, &Polytope)>,
) -> Result<bool> {
    if sys.in_m(x0) {
        return Ok(false);
    }
    if output_rate_nonzero_on_surface(sys) {
        return Ok(true);
    }
    let tset = tangential_set(sys);
    if tset.is_empty {
        return Ok(true);
    }
    let (p, p_hat) = reach.ok_or_else(|| {
        Error::Precondition(
            "tangential crossings are possible: a backward-reach enclosure is required".into(),
        )
    })?;
    if !polytopes_exclude_after_reset_set(sys, p, p_hat, 100) {
        return Err(Error::Precondition(
            "backward-reach enclosure intersects the after-reset set; \
             the safe-set certificate does not apply"
                .into(),
        ));
    }
    Ok(!p.contains(x0, 0.0) && !p_hat.contains(x0, 0.0))
}

/// A closed loop extended with a sensor-noise generator. The noise states are
/// stored first so the resetting states stay trailing; `x_range` recovers the
/// original closed-loop coordinates.
#[derive(Debug, Clone)]
pub struct NoisyLoop {
    pub system: ResetSystem,
    pub noise_range: std::ops::Range<usize>,
    pub x_range: std::ops::Range<usize>,
}

/// Wires a noise generator into the error channel of an assembled loop
/// (the measured output becomes y + noise, so the noise enters exactly where
/// the reference does, with opposite sign). The noise states are untouched by
/// the jump map.
pub fn extend_with_noise(cl: &ClosedLoop, noise: &Exosystem) -> Result<NoisyLoop> {
    if noise.c_w.nrows() != 1 {
        return Err(Error::DimensionMismatch {
            context: "extend_with_noise",
            expected: "scalar noise output".into(),
            got: format!("{} rows", noise.c_w.nrows()),
        });
    }
    let mn = noise.order();
    let n = cl.system.dim();
    let nz = mn + n;
    let mut a = DMatrix::zeros(nz, nz);
    let mut c = DMatrix::zeros(1, nz);
    a.view_mut((0, 0), (mn, mn)).copy_from(&noise.a_w);
    a.view_mut((mn, mn), (n, n)).copy_from(&cl.system.a);
    // injection: the error channel sees -noise, through the same paths as
    // the reference
    let np = cl.partition.xp.len();
    let nr = cl.partition.xr.len();
    a.view_mut((mn + cl.partition.xp.start, 0), (np, mn))
        .copy_from(&(-&cl.plant.b_p * cl.compensator.d_r * &noise.c_w));
    a.view_mut((mn + cl.partition.xr.start, 0), (nr, mn))
        .copy_from(&(-&cl.compensator.b_r * &noise.c_w));
    c.view_mut((0, 0), (1, mn)).copy_from(&(-&noise.c_w));
    c.view_mut((0, mn), (1, n)).copy_from(&cl.system.c);

    let system = crate::model::build_reset_system(a, c, cl.system.n_r, cl.system.tol)?;
    Ok(NoisyLoop {
        system,
        noise_range: 0..mn,
        x_range: mn..nz,
    })
}

/// Result of a noise-sensitivity sweep.
#[derive(Debug, Clone)]
pub struct NoiseExperiment {
    pub magnitudes: Vec<f64>,
    /// Hausdorff distance between the projected noisy trajectory and the
    /// noise-free one, per magnitude.
    pub distances: Vec<f64>,
    /// First reset instant of the noisy system, per magnitude.
    pub first_resets: Vec<Option<f64>>,
    pub t_horizon: f64,
}

/// Runs the noise sweep: for each magnitude the noise initial state is scaled
/// along the configured direction, the extended loop is simulated, and the
/// projected trajectory is compared to the noise-free one. Requires a safe
/// initial state and a full or right compensator.
pub fn noise_sensitivity_experiment(
    cl: &ClosedLoop,
    noise: &Exosystem,
    x0: &DVector<f64>,
    magnitudes: &[f64],
    opts: &SimOptions,
    reach: Option<(&Polytope, &Polytope)>,
) -> Result<NoiseExperiment> {
    if !matches!(
        cl.compensator_class,
        CompensatorClass::Full | CompensatorClass::Right
    ) {
        return Err(Error::Precondition(format!(
            "noise sensitivity guarantee needs a full or right compensator, got {}",
            cl.compensator_class
        )));
    }
    if !check_d_membership(&cl.system, x0, reach)? {
        return Err(Error::Precondition(
            "initial state is outside the safe set for the noise guarantee".into(),
        ));
    }
    if magnitudes.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition(
            "noise magnitudes must be strictly decreasing".into(),
        ));
    }

    let nominal = PointCloud::from_trajectory(&simulate(&cl.system, x0, opts)?, x0.clone());
    let extended = extend_with_noise(cl, noise)?;
    let n_hat = if noise.w0.norm() == 0.0 {
        return Err(Error::Precondition("noise direction w0 must be nonzero".into()));
    } else {
        noise.w0.normalize()
    };

    let mut distances = Vec::with_capacity(magnitudes.len());
    let mut first_resets = Vec::with_capacity(magnitudes.len());
    for &m in magnitudes {
        let mut z0 = DVector::zeros(extended.system.dim());
        z0.rows_mut(0, noise.order()).copy_from(&(&n_hat * m));
        z0.rows_mut(extended.x_range.start, x0.len()).copy_from(x0);
        let traj = simulate(&extended.system, &z0, opts)?;
        first_resets.push(traj.reset_instants.first().copied());
        let cloud = PointCloud::from_trajectory_block(&traj, extended.x_range.clone(), z0);
        distances.push(hausdorff(&cloud, &nominal)?);
    }
    Ok(NoiseExperiment {
        magnitudes: magnitudes.to_vec(),
        distances,
        first_resets,
        t_horizon: opts.t_max,
    })
}

/// Transversality of each computed surface crossing: true entries certify a
/// nonzero output rate at that crossing.
#[derive(Debug, Clone)]
pub struct CrossingRegularity {
    pub times: Vec<f64>,
    pub transversal: Vec<bool>,
    pub all_transversal: bool,
}

/// Evaluates the output rate at every crossing of the solution from `x0`;
/// all-transversal is the sufficient condition for continuous dependence at
/// initial states off the reset set.
pub fn crossing_regularity(
    sys: &ResetSystem,
    x0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<CrossingRegularity> {
    let crossings = crate::simulate::crossing_instants(sys, x0, opts)?;
    let ca_norm = (&sys.c * &sys.a).norm().max(1e-300);
    let transversal: Vec<bool> = crossings
        .states
        .iter()
        .map(|x| sys.output_rate(x).abs() > opts.deriv_tol * ca_norm * x.norm().max(1e-300))
        .collect();
    let all_transversal = transversal.iter().all(|&b| b);
    Ok(CrossingRegularity {
        times: crossings.times,
        transversal,
        all_transversal,
    })
}
