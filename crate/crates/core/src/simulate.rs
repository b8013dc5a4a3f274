//! Event-driven solution generation for reset systems: left-continuous
//! trajectories with jumps at reset instants, the reset-instant and
//! crossing-instant sequence procedures, and the return-time map on the
//! after-reset sphere.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::ResetSystem;
use crate::numerics::{
    default_sample_step, expm, first_zero_with, max_invariant_in, FirstZero, FlowSampler,
    RootOpts, Subspace,
};

/// Simulation and event-location options.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub t_max: f64,
    pub max_events: usize,
    /// Relative magnitude threshold for surface membership.
    pub value_tol: f64,
    /// Event-time refinement resolution.
    pub time_tol: f64,
    /// Relative derivative threshold separating tangential from transversal.
    pub deriv_tol: f64,
    /// Dense event-scan step; `None` picks a spectral-radius based default.
    pub sample_step: Option<f64>,
    /// Output sampling period for trajectory points.
    pub output_sample_dt: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            t_max: 10.0,
            max_events: 10_000,
            value_tol: 1e-9,
            time_tol: 1e-12,
            deriv_tol: 1e-6,
            sample_step: None,
            output_sample_dt: 1e-3,
        }
    }
}

impl SimOptions {
    pub fn root_opts(&self) -> RootOpts {
        RootOpts {
            sample_step: self.sample_step,
            value_tol: self.value_tol,
            time_tol: self.time_tol,
            deriv_tol: self.deriv_tol,
            ..RootOpts::default()
        }
    }
}

/// How a generated sequence or trajectory ended.
#[derive(Debug, Clone)]
pub enum Terminal {
    /// Horizon reached (or no further events can occur).
    Completed,
    /// `max_events` hit before the horizon.
    EventBudgetExhausted,
    /// The next reset instant does not exist: the state enters the reset set
    /// on a left-open interval, so the defining minimum is not attained.
    Deadlock {
        t: f64,
        state: DVector<f64>,
        reason: String,
    },
}

impl Terminal {
    pub fn is_deadlock(&self) -> bool {
        matches!(self, Terminal::Deadlock { .. })
    }
}

/// Reset-instant sequence with the surrounding states.
#[derive(Debug, Clone)]
pub struct ResetSequence {
    pub times: Vec<f64>,
    /// State just before each jump (on the reset set).
    pub pre_states: Vec<DVector<f64>>,
    /// State just after each jump.
    pub post_states: Vec<DVector<f64>>,
    pub terminal: Terminal,
}

/// Crossing-instant sequence: every intersection with the surface N(C),
/// including non-resetting ones.
#[derive(Debug, Clone)]
pub struct CrossingSequence {
    pub times: Vec<f64>,
    /// State at each crossing (pre-jump when the crossing resets).
    pub states: Vec<DVector<f64>>,
    pub terminal: Terminal,
}

struct Engine<'a> {
    sys: &'a ResetSystem,
    root_opts: RootOpts,
    sampler: FlowSampler,
    /// Largest A-invariant subspace inside F_RU: states from which the flow
    /// never produces another isolated surface event.
    v_star: Subspace,
}

impl<'a> Engine<'a> {
    fn new(sys: &'a ResetSystem, opts: &SimOptions) -> Self {
        let root_opts = opts.root_opts();
        let h = root_opts
            .sample_step
            .unwrap_or_else(|| default_sample_step(&sys.a));
        let sampler = FlowSampler::new(&sys.a, h, root_opts.time_tol);
        let v_star = max_invariant_in(&sys.a, &sys.f_ru, sys.tol.max(1e-12));
        Engine {
            sys,
            root_opts,
            sampler,
            v_star,
        }
    }

    fn next_zero(
        &self,
        x: &DVector<f64>,
        window: f64,
        accept: Option<&dyn Fn(&DVector<f64>) -> bool>,
    ) -> Result<FirstZero> {
        first_zero_with(
            &self.sys.a,
            &self.sys.c,
            x,
            0.0,
            window,
            &self.root_opts,
            accept,
            &self.sys.unobservable,
            Some(&self.sampler),
        )
    }
}

/// Generates the reset-instant sequence from `x0`: the first instant is 0
/// when `x0` already lies in the reset set, otherwise the first positive time
/// the flow enters it; afterwards the recursion continues from each
/// after-jump state. Surface hits inside the jump's fixed-point set are
/// skipped (they are not reset-set points). A deadlock is reported when a
/// state flows along the surface unobservably but leaves the fixed-point set,
/// so the minimum defining the next instant is not attained.
pub fn reset_instants(
    sys: &ResetSystem,
    x0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<ResetSequence> {
    let engine = Engine::new(sys, opts);
    let mut times = Vec::new();
    let mut pre_states = Vec::new();
    let mut post_states = Vec::new();
    let mut x = x0.clone();
    let mut t = 0.0;

    if sys.in_m(&x) {
        let post = sys.jump(&x);
        times.push(0.0);
        pre_states.push(x.clone());
        post_states.push(post.clone());
        x = post;
    }

    let terminal = loop {
        if times.len() >= opts.max_events {
            break Terminal::EventBudgetExhausted;
        }
        if t >= opts.t_max {
            break Terminal::Completed;
        }
        let accept = |state: &DVector<f64>| sys.in_m(state);
        match engine.next_zero(&x, opts.t_max - t, Some(&accept))? {
            FirstZero::None => break Terminal::Completed,
            FirstZero::IdenticallyZero => {
                if engine.v_star.contains(&x, sys.tol.max(1e-9)) {
                    // flow stays in the invariant unobservable fixed set
                    break Terminal::Completed;
                }
                break Terminal::Deadlock {
                    t,
                    state: x.clone(),
                    reason: "state flows along the reset surface on a left-open interval; \
                             the next reset instant has no minimum"
                        .into(),
                };
            }
            FirstZero::Zero { time, state, .. } => {
                t += time;
                let post = sys.jump(&state);
                times.push(t);
                pre_states.push(state);
                post_states.push(post.clone());
                x = post;
            }
        }
    };

    Ok(ResetSequence {
        times,
        pre_states,
        post_states,
        terminal,
    })
}

/// Generates the crossing-instant sequence from `x0`: every time the
/// solution meets the surface N(C). Crossings inside the reset set apply the
/// jump before continuing. The sequence stops early once a post-crossing
/// state lies in the unobservable fixed set: from there the flow stays on the
/// surface forever and no further isolated crossings exist.
pub fn crossing_instants(
    sys: &ResetSystem,
    x0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<CrossingSequence> {
    let engine = Engine::new(sys, opts);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut x = x0.clone();
    let mut t = 0.0;
    let on_surface = |state: &DVector<f64>| {
        let n = state.norm();
        n == 0.0 || sys.output(state).abs() <= sys.tol.max(opts.value_tol) * n
    };

    if on_surface(&x) {
        times.push(0.0);
        states.push(x.clone());
        if sys.in_m(&x) {
            x = sys.jump(&x);
        }
        if sys.f_ru.contains(&x, sys.tol.max(1e-9)) {
            return Ok(CrossingSequence {
                times,
                states,
                terminal: Terminal::Completed,
            });
        }
    }

    let terminal = loop {
        if times.len() >= opts.max_events {
            break Terminal::EventBudgetExhausted;
        }
        if t >= opts.t_max {
            break Terminal::Completed;
        }
        match engine.next_zero(&x, opts.t_max - t, None)? {
            FirstZero::None => break Terminal::Completed,
            FirstZero::IdenticallyZero => break Terminal::Completed,
            FirstZero::Zero { time, state, .. } => {
                t += time;
                times.push(t);
                states.push(state.clone());
                x = if sys.in_m(&state) {
                    sys.jump(&state)
                } else {
                    state
                };
                if sys.f_ru.contains(&x, sys.tol.max(1e-9)) {
                    break Terminal::Completed;
                }
            }
        }
    };

    Ok(CrossingSequence {
        times,
        states,
        terminal,
    })
}

/// One maximal flow interval of a trajectory.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    /// State opening the segment; the state at `t` inside the segment is
    /// `e^{A (t - t_start)} x_start`.
    pub x_start: DVector<f64>,
}

/// One sampled trajectory point.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub segment_id: usize,
    pub is_post_jump: bool,
}

/// A left-continuous piecewise solution.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    pub reset_instants: Vec<f64>,
    pub crossing_instants: Vec<f64>,
    pub terminal: Terminal,
    /// Dense samples, including both one-sided limits at every jump.
    pub samples: Vec<Sample>,
}

/// Simulates the reset system from `x0` over `[0, opts.t_max]`, producing
/// flow segments between resets and dense samples (with both one-sided jump
/// limits) every `opts.output_sample_dt`.
pub fn simulate(sys: &ResetSystem, x0: &DVector<f64>, opts: &SimOptions) -> Result<Trajectory> {
    let resets = reset_instants(sys, x0, opts)?;
    let crossings = crossing_instants(sys, x0, opts)?;

    let end_time = match &resets.terminal {
        Terminal::Deadlock { t, .. } => *t,
        _ => opts.t_max,
    };

    // segment boundaries: start at 0, break at each positive reset instant
    let mut segments = Vec::new();
    let mut samples = Vec::new();
    let mut cursor = 0.0;
    let mut x_open = x0.clone();
    let mut event_idx = 0;

    // a reset exactly at t = 0 jumps before any flow
    if resets.times.first() == Some(&0.0) {
        samples.push(Sample {
            t: 0.0,
            x: resets.pre_states[0].clone(),
            segment_id: 0,
            is_post_jump: false,
        });
        x_open = resets.post_states[0].clone();
        event_idx = 1;
    }

    let step = expm(&sys.a, opts.output_sample_dt);
    loop {
        let seg_id = segments.len();
        let seg_end = if event_idx < resets.times.len() {
            resets.times[event_idx]
        } else {
            end_time
        };
        // dense samples across [cursor, seg_end)
        let mut x = x_open.clone();
        let mut t = cursor;
        samples.push(Sample {
            t,
            x: x.clone(),
            segment_id: seg_id,
            is_post_jump: seg_id > 0 || event_idx > 0,
        });
        while t + opts.output_sample_dt < seg_end - opts.time_tol {
            x = &step * &x;
            t += opts.output_sample_dt;
            samples.push(Sample {
                t,
                x: x.clone(),
                segment_id: seg_id,
                is_post_jump: false,
            });
        }
        segments.push(Segment {
            t_start: cursor,
            t_end: seg_end,
            x_start: x_open.clone(),
        });
        if event_idx < resets.times.len() {
            // close with the exact pre-jump state, reopen with the post state
            samples.push(Sample {
                t: seg_end,
                x: resets.pre_states[event_idx].clone(),
                segment_id: seg_id,
                is_post_jump: false,
            });
            x_open = resets.post_states[event_idx].clone();
            cursor = seg_end;
            event_idx += 1;
        } else {
            // final point of the horizon
            let rem = seg_end - cursor;
            let x_end = expm(&sys.a, rem) * &x_open;
            samples.push(Sample {
                t: seg_end,
                x: x_end,
                segment_id: seg_id,
                is_post_jump: false,
            });
            break;
        }
    }

    Ok(Trajectory {
        segments,
        reset_instants: resets.times,
        crossing_instants: crossings.times,
        terminal: resets.terminal,
        samples,
    })
}

/// Return time of a unit after-reset state: the least positive time its flow
/// re-enters the reset set, `None` when it never does within `t_horizon`.
/// By linearity the value is shared by the antipode, so the map need only be
/// evaluated on a hemisphere.
pub fn tau_of_state(sys: &ResetSystem, x: &DVector<f64>, opts: &SimOptions) -> Result<Option<f64>> {
    if (x.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::Precondition(
            "tau_of_state: state must lie on the unit sphere".into(),
        ));
    }
    if !sys.m_r_carrier.contains(x, 1e-6) {
        return Err(Error::Precondition(
            "tau_of_state: state must lie in the closure of the after-reset set".into(),
        ));
    }
    let engine = Engine::new(sys, opts);
    let accept = |state: &DVector<f64>| sys.in_m(state);
    match engine.next_zero(x, opts.t_max, Some(&accept))? {
        FirstZero::Zero { time, .. } => Ok(Some(time)),
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_reset_system;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            rows.len(),
            rows[0].len(),
            &rows.iter().flat_map(|r| r.iter().cloned()).collect::<Vec<_>>(),
        )
    }

    fn rotation_system() -> ResetSystem {
        build_reset_system(
            mat(&[&[0.0, -1.0], &[1.0, 0.0]]),
            mat(&[&[1.0, -1.0]]),
            1,
            1e-9,
        )
        .unwrap()
    }

    fn ill_posed_system() -> ResetSystem {
        build_reset_system(
            mat(&[&[-1.0, 0.0, 0.0], &[0.0, -1.0, -1.0], &[0.0, 1.0, -1.0]]),
            mat(&[&[1.0, 0.0, 0.0]]),
            1,
            1e-9,
        )
        .unwrap()
    }

    #[test]
    fn rotation_reset_sequence_periodic() {
        let sys = rotation_system();
        let x0 = DVector::from_vec(vec![0.75, 0.25]);
        let opts = SimOptions {
            t_max: 8.0,
            ..SimOptions::default()
        };
        let seq = reset_instants(&sys, &x0, &opts).unwrap();
        let expected_first = std::f64::consts::FRAC_PI_4 - (1.0f64 / 3.0).atan();
        assert_relative_eq!(seq.times[0], expected_first, epsilon = 1e-8);
        for pair in seq.times.windows(2) {
            assert_relative_eq!(pair[1] - pair[0], std::f64::consts::FRAC_PI_4, epsilon = 1e-8);
        }
        assert!(seq.times.len() > 5);
        // jumps land on the non-resetting axis
        for post in &seq.post_states {
            assert_eq!(post[1], 0.0);
        }
    }

    #[test]
    fn zero_state_has_no_events() {
        let sys = rotation_system();
        let seq = reset_instants(&sys, &DVector::zeros(2), &SimOptions::default()).unwrap();
        assert!(seq.times.is_empty());
        assert!(matches!(seq.terminal, Terminal::Completed));
    }

    #[test]
    fn deadlock_from_unobservable_fixed_state() {
        let sys = ill_posed_system();
        let x0 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let seq = reset_instants(&sys, &x0, &SimOptions::default()).unwrap();
        assert!(seq.terminal.is_deadlock());
        assert!(seq.times.is_empty());
    }

    #[test]
    fn initial_state_in_reset_set_jumps_at_zero() {
        let sys = rotation_system();
        let x0 = DVector::from_vec(vec![1.0, 1.0]);
        let seq = reset_instants(&sys, &x0, &SimOptions::default()).unwrap();
        assert_eq!(seq.times[0], 0.0);
        assert_eq!(seq.post_states[0], DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn resets_are_subsequence_of_crossings() {
        let sys = rotation_system();
        let x0 = DVector::from_vec(vec![0.75, 0.25]);
        let opts = SimOptions {
            t_max: 6.0,
            ..SimOptions::default()
        };
        let resets = reset_instants(&sys, &x0, &opts).unwrap();
        let crossings = crossing_instants(&sys, &x0, &opts).unwrap();
        for t in &resets.times {
            assert!(
                crossings.times.iter().any(|c| (c - t).abs() < 1e-8),
                "reset at {t} missing from crossings"
            );
        }
    }

    #[test]
    fn trajectory_jump_consistency() {
        let sys = rotation_system();
        let x0 = DVector::from_vec(vec![0.75, 0.25]);
        let opts = SimOptions {
            t_max: 4.0,
            ..SimOptions::default()
        };
        let traj = simulate(&sys, &x0, &opts).unwrap();
        assert!(traj.segments.len() >= 2);
        for (i, &tk) in traj.reset_instants.iter().enumerate() {
            let seg = &traj.segments[i];
            assert_relative_eq!(seg.t_end, tk, epsilon = 1e-10);
            let pre = expm(&sys.a, seg.t_end - seg.t_start) * &seg.x_start;
            let post = &traj.segments[i + 1].x_start;
            assert!((post - sys.jump(&pre)).norm() <= 1e-10 * pre.norm().max(1.0));
            // surface membership at the instant
            assert!(sys.output(&pre).abs() <= 1e-8 * pre.norm());
        }
        // samples include both one-sided limits at the first jump
        let t1 = traj.reset_instants[0];
        let at_t1: Vec<_> = traj
            .samples
            .iter()
            .filter(|s| (s.t - t1).abs() < 1e-12)
            .collect();
        assert_eq!(at_t1.len(), 2);
        assert_ne!(at_t1[0].is_post_jump, at_t1[1].is_post_jump);
    }

    #[test]
    fn tau_on_after_reset_ray() {
        let sys = rotation_system();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let tau = tau_of_state(&sys, &x, &SimOptions::default())
            .unwrap()
            .unwrap();
        assert_relative_eq!(tau, std::f64::consts::FRAC_PI_4, epsilon = 1e-8);
        // antipodal symmetry
        let tau_neg = tau_of_state(&sys, &(-x), &SimOptions::default())
            .unwrap()
            .unwrap();
        assert_relative_eq!(tau, tau_neg, epsilon = 1e-10);
    }

    #[test]
    fn scale_equivariance_of_instants() {
        let sys = rotation_system();
        let x0 = DVector::from_vec(vec![0.75, 0.25]);
        let opts = SimOptions {
            t_max: 5.0,
            ..SimOptions::default()
        };
        let base = reset_instants(&sys, &x0, &opts).unwrap();
        for alpha in [0.1, 3.7, 10.0] {
            let scaled = reset_instants(&sys, &(&x0 * alpha), &opts).unwrap();
            assert_eq!(base.times.len(), scaled.times.len());
            for (a, b) in base.times.iter().zip(&scaled.times) {
                assert_relative_eq!(a, b, epsilon = 1e-8);
            }
            for (p, q) in base.pre_states.iter().zip(&scaled.pre_states) {
                assert!((q - p * alpha).norm() <= 1e-7 * alpha * p.norm().max(1.0));
            }
        }
    }
}
