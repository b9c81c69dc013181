//! Experiment harness: measured distances between finite-steepness states or
//! evolutions and their limit objects, organized along two parameter axes
//! (absorption steepness `p` and time), plus a two-route commutation check
//! that runs both limits in either order and compares the terminal fields.
//!
//! Reports are built deterministically in parameter order; wall-clock
//! timings are carried in memory for diagnostics but never serialized, so
//! emitted artifacts are reproducible byte for byte.

use std::time::Instant;

use serde::Serialize;

use crate::core::{Field, ProblemSpec};
use crate::elliptic::{
    solve_logistic, solve_obstacle_elliptic_with_warm, SolveStatus,
};
use crate::fracop::{assemble_operator, DiscreteOperator};
use crate::parabolic::{evolve_logistic, evolve_obstacle, ObstacleMode};
use crate::spectral::{eigen_on_subdomain, principal_eigen};
use crate::{Error, Result};

/// Steepest absorption exponent the elliptic solver is certified for.
pub const MAX_EXPONENT: f64 = 128.0;

/// Horizon of the matched-time parabolic comparison.
const PARABOLIC_HORIZON: f64 = 1.0;

/// Snapshot spacing of the matched-time parabolic comparison.
const SNAPSHOT_SPACING: f64 = 0.1;

/// Default time step when the caller does not supply one.
const DEFAULT_DT: f64 = 1e-3;

/// One measured point of a limit experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentPoint {
    pub axis_value: f64,
    pub sup_distance: f64,
    pub energy_distance: f64,
    /// Wall-clock seconds spent producing this point; diagnostics only,
    /// deliberately kept out of serialized artifacts.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Distances against a limit object along one parameter axis.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    /// Name of the parameter axis ("p" or "t").
    pub axis: String,
    /// Human-readable description of the reference (limit) object.
    pub reference: String,
    pub resolution: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub points: Vec<ExperimentPoint>,
    /// Whether the sup distances are non-increasing along the axis.
    /// `None` when fewer than two points were measured.
    pub sup_non_increasing: Option<bool>,
    /// Same flag for the energy distances.
    pub energy_non_increasing: Option<bool>,
    /// Exponential decay rate fitted on the tail (second half) of a time
    /// experiment; absent for steepness experiments.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_rate: Option<f64>,
}

/// Which evolution family a steepness experiment compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PLimitMode {
    /// Steady states against the steady obstacle solution.
    Elliptic,
    /// Evolutions against the obstacle evolution at matched times.
    Parabolic,
}

/// Which dynamics a large-time experiment follows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TLimitMode {
    /// Finite-steepness dynamics with exponent `p`, against its steady state.
    Logistic { p: f64 },
    /// Obstacle dynamics against the steady equilibrium.
    Obstacle,
}

/// Terminal fields of the two limit routes and their distance.
#[derive(Debug, Clone, Serialize)]
pub struct CommuteReport {
    pub resolution: usize,
    pub p_max: f64,
    pub t_max: f64,
    pub dt: f64,
    /// Principal rate of the full domain (lower end of the window).
    pub lambda_full: f64,
    /// Principal rate of the refuge (upper end of the window).
    pub lambda_refuge: f64,
    /// Terminal field of the route that takes the steep limit first and then
    /// runs the obstacle dynamics to `t_max`.
    pub steep_first: Field,
    /// Terminal field of the route that takes time to infinity first
    /// (steady states) and then the steep limit (the equilibrium).
    pub large_time_first: Field,
    pub sup_distance: f64,
    pub energy_distance: f64,
}

/// Sup-norm distance between two fields of equal length.
pub fn sup_distance(u: &Field, v: &Field) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension { expected: u.len(), got: v.len() });
    }
    Ok(u.as_slice()
        .iter()
        .zip(v.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Energy-norm distance `sqrt(<L(u - v), u - v>)`.
pub fn energy_distance(op: &DiscreteOperator, u: &Field, v: &Field) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension { expected: u.len(), got: v.len() });
    }
    let diff = Field::new(
        u.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a - b).collect(),
    );
    Ok(op.energy(&diff)?.max(0.0).sqrt())
}

fn non_increasing(values: &[f64]) -> Option<bool> {
    if values.len() < 2 {
        return None;
    }
    Some(values.windows(2).all(|w| w[1] <= w[0] + 1e-12))
}

fn check_p_list(p_list: &[f64]) -> Result<()> {
    if p_list.is_empty() {
        return Err(Error::Parameter("the exponent list must not be empty".into()));
    }
    for &p in p_list {
        if !(p > 1.0 && p <= MAX_EXPONENT) || !p.is_finite() {
            return Err(Error::Parameter(format!(
                "exponents must lie in (1, {MAX_EXPONENT}]; got {p}"
            )));
        }
    }
    if p_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("the exponent list must be strictly increasing".into()));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Parameter(format!("time step must be positive and finite; got {dt}")));
    }
    Ok(())
}

/// Distances between finite-steepness objects and the steep-limit object,
/// for the exponents in `p_list` (strictly increasing, each in (1, 128]).
///
/// In elliptic mode each steady state is compared against the steady
/// obstacle solution.  In parabolic mode each evolution is compared against
/// the obstacle evolution at matched snapshot times (spacing 0.1 up to
/// horizon 1; the initial snapshot contributes distance zero since both
/// evolutions share the datum), and the reported distances are the maxima
/// over those times.
pub fn run_p_limit(
    problem: &ProblemSpec,
    mode: PLimitMode,
    p_list: &[f64],
    resolution: usize,
    dt: Option<f64>,
) -> Result<ExperimentReport> {
    check_p_list(p_list)?;
    let grid = problem.grid(resolution)?;
    let op = assemble_operator(&grid, problem.alpha)?;
    let a = problem.growth_a;

    match mode {
        PLimitMode::Elliptic => {
            let mut states = Vec::with_capacity(p_list.len());
            let mut times = Vec::with_capacity(p_list.len());
            for &p in p_list {
                let t0 = Instant::now();
                let report = solve_logistic(problem, &op, a, p)?;
                if report.status != SolveStatus::Converged {
                    return Err(Error::Numerical {
                        what: format!(
                            "the steady solve at exponent {p} ended as {:?}",
                            report.status
                        ),
                        residual: Some(report.residual),
                    });
                }
                times.push(t0.elapsed().as_secs_f64());
                states.push(report.u);
            }
            let t0 = Instant::now();
            let reference =
                solve_obstacle_elliptic_with_warm(problem, &op, a, states.last().unwrap())?;
            let reference_time = t0.elapsed().as_secs_f64();
            let mut points = Vec::with_capacity(p_list.len());
            for ((&p, u), wall) in p_list.iter().zip(&states).zip(&times) {
                points.push(ExperimentPoint {
                    axis_value: p,
                    sup_distance: sup_distance(u, &reference.u)?,
                    energy_distance: energy_distance(&op, u, &reference.u)?,
                    wall_time_s: *wall,
                });
            }
            let sups: Vec<f64> = points.iter().map(|q| q.sup_distance).collect();
            let energies: Vec<f64> = points.iter().map(|q| q.energy_distance).collect();
            Ok(ExperimentReport {
                axis: "p".into(),
                reference: format!(
                    "steady obstacle solution (active-set solve, {reference_time:.2}s)"
                ),
                resolution,
                dt: None,
                points,
                sup_non_increasing: non_increasing(&sups),
                energy_non_increasing: non_increasing(&energies),
                tail_rate: None,
            })
        }
        PLimitMode::Parabolic => {
            let dt = dt.unwrap_or(DEFAULT_DT);
            check_dt(dt)?;
            let phi = problem.phi_field(&grid);
            let snapshots =
                (PARABOLIC_HORIZON / SNAPSHOT_SPACING).round() as usize;
            // Obstacle evolution snapshots at matched times.
            let mut reference_fields = vec![phi.clone()];
            let mut state = phi.clone();
            for _ in 0..snapshots {
                let traj = evolve_obstacle(
                    problem,
                    &op,
                    a,
                    &state,
                    SNAPSHOT_SPACING,
                    dt,
                    ObstacleMode::Complementarity,
                )?;
                state = traj.final_field().clone();
                reference_fields.push(state.clone());
            }
            let mut points = Vec::with_capacity(p_list.len());
            for &p in p_list {
                let t0 = Instant::now();
                let mut state = phi.clone();
                let mut sup = 0.0f64;
                let mut energy = 0.0f64;
                for reference in reference_fields.iter().skip(1) {
                    let traj =
                        evolve_logistic(problem, &op, a, p, &state, SNAPSHOT_SPACING, dt)?;
                    state = traj.final_field().clone();
                    sup = sup.max(sup_distance(&state, reference)?);
                    energy = energy.max(energy_distance(&op, &state, reference)?);
                }
                points.push(ExperimentPoint {
                    axis_value: p,
                    sup_distance: sup,
                    energy_distance: energy,
                    wall_time_s: t0.elapsed().as_secs_f64(),
                });
            }
            let sups: Vec<f64> = points.iter().map(|q| q.sup_distance).collect();
            let energies: Vec<f64> = points.iter().map(|q| q.energy_distance).collect();
            Ok(ExperimentReport {
                axis: "p".into(),
                reference: format!(
                    "obstacle evolution, snapshots every {SNAPSHOT_SPACING} up to {PARABOLIC_HORIZON}"
                ),
                resolution,
                dt: Some(dt),
                points,
                sup_non_increasing: non_increasing(&sups),
                energy_non_increasing: non_increasing(&energies),
                tail_rate: None,
            })
        }
    }
}

/// Distances between an evolution and its large-time limit at the times in
/// `t_list` (strictly increasing, positive), starting from the configured
/// datum.
pub fn run_t_limit(
    problem: &ProblemSpec,
    mode: TLimitMode,
    t_list: &[f64],
    resolution: usize,
    dt: f64,
) -> Result<ExperimentReport> {
    run_t_limit_from(problem, mode, t_list, resolution, dt, None)
}

/// As [`run_t_limit`], but optionally starting the evolution from `start`
/// instead of the configured datum (used to verify that a run started at the
/// limit object never leaves it).
pub fn run_t_limit_from(
    problem: &ProblemSpec,
    mode: TLimitMode,
    t_list: &[f64],
    resolution: usize,
    dt: f64,
    start: Option<&Field>,
) -> Result<ExperimentReport> {
    if t_list.is_empty() {
        return Err(Error::Parameter("the time list must not be empty".into()));
    }
    if t_list[0] <= 0.0 || t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter(
            "the time list must be strictly increasing and positive".into(),
        ));
    }
    check_dt(dt)?;
    let grid = problem.grid(resolution)?;
    let op = assemble_operator(&grid, problem.alpha)?;
    let a = problem.growth_a;
    let phi = match start {
        Some(f) => {
            if f.len() != resolution {
                return Err(Error::Dimension { expected: resolution, got: f.len() });
            }
            f.clone()
        }
        None => problem.phi_field(&grid),
    };

    // The limit object is computed before any distances are measured.
    let (reference, reference_label) = match mode {
        TLimitMode::Logistic { p } => {
            check_p_list(&[p])?;
            let report = solve_logistic(problem, &op, a, p)?;
            if report.status != SolveStatus::Converged {
                return Err(Error::Numerical {
                    what: format!(
                        "the steady solve at exponent {p} ended as {:?}",
                        report.status
                    ),
                    residual: Some(report.residual),
                });
            }
            (report.u, format!("steady state at exponent {p}"))
        }
        TLimitMode::Obstacle => {
            // Warm the active-set solve from a short complementarity run so
            // the contact set is seeded near its final shape.
            let warm =
                evolve_obstacle(problem, &op, a, &phi, 5.0, dt, ObstacleMode::Complementarity)?;
            let report =
                solve_obstacle_elliptic_with_warm(problem, &op, a, warm.final_field())?;
            (report.u, "steady obstacle equilibrium".to_string())
        }
    };

    let mut points = Vec::with_capacity(t_list.len());
    let mut state = phi;
    let mut reached = 0.0f64;
    for &t in t_list {
        let t0 = Instant::now();
        let span = t - reached;
        let traj = match mode {
            TLimitMode::Logistic { p } => evolve_logistic(problem, &op, a, p, &state, span, dt)?,
            TLimitMode::Obstacle => evolve_obstacle(
                problem,
                &op,
                a,
                &state,
                span,
                dt,
                ObstacleMode::Complementarity,
            )?,
        };
        state = traj.final_field().clone();
        reached = t;
        points.push(ExperimentPoint {
            axis_value: t,
            sup_distance: sup_distance(&state, &reference)?,
            energy_distance: energy_distance(&op, &state, &reference)?,
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
    }

    let sups: Vec<f64> = points.iter().map(|q| q.sup_distance).collect();
    let energies: Vec<f64> = points.iter().map(|q| q.energy_distance).collect();
    let tail_rate = fit_tail_rate(t_list, &sups);
    Ok(ExperimentReport {
        axis: "t".into(),
        reference: reference_label,
        resolution,
        dt: Some(dt),
        points,
        sup_non_increasing: non_increasing(&sups),
        energy_non_increasing: non_increasing(&energies),
        tail_rate,
    })
}

/// Exponential decay rate fitted by least squares on `ln d` over the second
/// half of the points (those with strictly positive distance).
fn fit_tail_rate(ts: &[f64], ds: &[f64]) -> Option<f64> {
    let start = ts.len() / 2;
    let tail: Vec<(f64, f64)> = ts[start..]
        .iter()
        .zip(&ds[start..])
        .filter(|(_, &d)| d > 0.0)
        .map(|(&t, &d)| (t, d.ln()))
        .collect();
    if tail.len() < 2 {
        return None;
    }
    let n = tail.len() as f64;
    let mt = tail.iter().map(|(t, _)| t).sum::<f64>() / n;
    let my = tail.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in &tail {
        num += (t - mt) * (y - my);
        den += (t - mt) * (t - mt);
    }
    (den > 0.0).then(|| -(num / den))
}

/// Run both limits in the two possible orders and compare the terminal
/// fields.
///
/// The steep-first route takes the obstacle dynamics (the steep limit of the
/// finite-steepness dynamics) and runs it to `t_max`.  The large-time-first
/// route takes steady states (the large-time limits) up to exponent `p_max`
/// and then their steep limit, the steady equilibrium.  Requires the growth
/// rate to lie strictly inside the window between the principal rates of the
/// full domain and of the refuge.
pub fn commuting_limits(
    problem: &ProblemSpec,
    p_max: f64,
    t_max: f64,
    resolution: usize,
    dt: f64,
) -> Result<CommuteReport> {
    check_p_list(&[p_max])?;
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::Parameter(format!("t_max must be positive and finite; got {t_max}")));
    }
    check_dt(dt)?;
    let grid = problem.grid(resolution)?;
    let op = assemble_operator(&grid, problem.alpha)?;
    let a = problem.growth_a;

    let lambda_full = principal_eigen(&op, &Field::zeros(resolution))?.lambda;
    let (l, r) = match problem.d0 {
        Some(pair) => pair,
        None => {
            return Err(Error::Precondition(
                "the commutation check needs a refuge subinterval".into(),
            ))
        }
    };
    let zeros = Field::zeros(resolution);
    let (refuge_pair, _) = eigen_on_subdomain(&op, l, r, &zeros)?;
    let lambda_refuge = refuge_pair.lambda;
    if !(a > lambda_full && a < lambda_refuge) {
        return Err(Error::Precondition(format!(
            "growth rate {a} must lie strictly between the domain principal rate \
             {lambda_full} and the refuge principal rate {lambda_refuge}"
        )));
    }

    let phi = problem.phi_field(&grid);
    let steep_traj =
        evolve_obstacle(problem, &op, a, &phi, t_max, dt, ObstacleMode::Complementarity)?;
    let steep_first = steep_traj.final_field().clone();

    let steady = solve_logistic(problem, &op, a, p_max)?;
    if steady.status != SolveStatus::Converged {
        return Err(Error::Numerical {
            what: format!(
                "the steady solve at exponent {p_max} ended as {:?}",
                steady.status
            ),
            residual: Some(steady.residual),
        });
    }
    let equilibrium = solve_obstacle_elliptic_with_warm(problem, &op, a, &steady.u)?;
    let large_time_first = equilibrium.u;

    let sup = sup_distance(&steep_first, &large_time_first)?;
    let energy = energy_distance(&op, &steep_first, &large_time_first)?;
    Ok(CommuteReport {
        resolution,
        p_max,
        t_max,
        dt,
        lambda_full,
        lambda_refuge,
        steep_first,
        large_time_first,
        sup_distance: sup,
        energy_distance: energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{canonical_problem, validate_problem};
    use proptest::prelude::*;

    const N: usize = 256;

    fn canonical() -> ProblemSpec {
        canonical_problem()
    }

    fn op_for(n: usize) -> DiscreteOperator {
        let problem = canonical();
        let grid = problem.grid(n).unwrap();
        assemble_operator(&grid, problem.alpha).unwrap()
    }

    fn field(values: Vec<f64>) -> Field {
        Field::new(values)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn distances_satisfy_the_norm_axioms(
            u in proptest::collection::vec(-10.0f64..10.0, 32),
            v in proptest::collection::vec(-10.0f64..10.0, 32),
            w in proptest::collection::vec(-10.0f64..10.0, 32),
        ) {
            let op = op_for(32);
            let (u, v, w) = (field(u), field(v), field(w));
            for dist in [
                |a: &Field, b: &Field| sup_distance(a, b).unwrap(),
                |a: &Field, b: &Field| energy_distance(&op_for(32), a, b).unwrap(),
            ] {
                let duu = dist(&u, &u);
                prop_assert!(duu.abs() <= 1e-12, "identity: {duu}");
                let duv = dist(&u, &v);
                let dvu = dist(&v, &u);
                prop_assert!((duv - dvu).abs() <= 1e-12, "symmetry: {duv} vs {dvu}");
                let duw = dist(&u, &w);
                let dvw = dist(&v, &w);
                let slack = 1e-12 * (1.0 + duv + dvw);
                prop_assert!(duw <= duv + dvw + slack, "triangle: {duw} > {duv} + {dvw}");
                prop_assert!(duv >= 0.0);
            }
            let _ = op;
        }
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let op = op_for(32);
        let u = field(vec![1.0; 32]);
        let v = field(vec![1.0; 16]);
        assert!(matches!(sup_distance(&u, &v), Err(Error::Dimension { .. })));
        assert!(matches!(energy_distance(&op, &u, &v), Err(Error::Dimension { .. })));
    }

    #[test]
    fn malformed_exponent_lists_are_rejected() {
        let problem = canonical();
        for p_list in [vec![], vec![2.0, 2.0], vec![4.0, 2.0], vec![1.0], vec![200.0]] {
            let err = run_p_limit(&problem, PLimitMode::Elliptic, &p_list, N, None);
            assert!(
                matches!(err, Err(Error::Parameter(_))),
                "list {p_list:?} should be rejected"
            );
        }
    }

    #[test]
    fn malformed_time_lists_are_rejected() {
        let problem = canonical();
        for t_list in [vec![], vec![0.0, 1.0], vec![2.0, 1.0], vec![-1.0]] {
            let err = run_t_limit(
                &problem,
                TLimitMode::Logistic { p: 2.0 },
                &t_list,
                N,
                1e-3,
            );
            assert!(
                matches!(err, Err(Error::Parameter(_))),
                "list {t_list:?} should be rejected"
            );
        }
    }

    #[test]
    fn single_exponent_reports_one_row_without_flags() {
        let problem = canonical();
        let report = run_p_limit(&problem, PLimitMode::Elliptic, &[2.0], 128, None).unwrap();
        assert_eq!(report.points.len(), 1);
        assert_eq!(report.sup_non_increasing, None);
        assert_eq!(report.energy_non_increasing, None);
        assert!(report.points[0].sup_distance > 0.0);
    }

    #[test]
    fn steady_distances_shrink_with_steepness() {
        let problem = canonical();
        let report =
            run_p_limit(&problem, PLimitMode::Elliptic, &[2.0, 4.0, 8.0], 128, None).unwrap();
        assert_eq!(report.points.len(), 3);
        assert_eq!(report.sup_non_increasing, Some(true));
        assert_eq!(report.energy_non_increasing, Some(true));
    }

    #[test]
    fn matched_time_distances_collapse_with_steepness() {
        // Over short horizons the sup metric ticks up slightly (under 1%) on the
        // first rung before collapsing: near the absorption interface the p = 2
        // flow is dragged below the constrained flow even under the ceiling,
        // while at p = 4 that drag is already gone but the overshoot above the
        // ceiling is still wide.  The energy metric decreases at every rung.
        let problem = canonical();
        let report = run_p_limit(
            &problem,
            PLimitMode::Parabolic,
            &[2.0, 4.0, 64.0],
            128,
            Some(1e-3),
        )
        .unwrap();
        assert_eq!(report.points.len(), 3);
        assert_eq!(report.energy_non_increasing, Some(true));
        let sups: Vec<f64> = report.points.iter().map(|q| q.sup_distance).collect();
        assert!(
            sups[1] <= sups[0] * 1.02,
            "first-rung up-tick should stay under 2%: {sups:?}"
        );
        assert!(
            sups[2] < 0.5 * sups[0],
            "the distance should collapse by p = 64: {sups:?}"
        );
    }

    #[test]
    fn evolution_approaches_the_steady_state() {
        let problem = canonical();
        let report = run_t_limit(
            &problem,
            TLimitMode::Logistic { p: 3.0 },
            &[1.0, 2.0, 5.0, 10.0, 20.0],
            N,
            1e-3,
        )
        .unwrap();
        let sups: Vec<f64> = report.points.iter().map(|q| q.sup_distance).collect();
        assert!(sups.windows(2).all(|w| w[1] < w[0]), "distances {sups:?}");
        assert!(
            *sups.last().unwrap() <= 1e-3,
            "distance at t=20 was {}",
            sups.last().unwrap()
        );
        let rate = report.tail_rate.expect("a tail rate should be fitted");
        assert!(
            (0.3..=1.0).contains(&rate),
            "fitted relaxation rate {rate} should sit near the spectral gap"
        );
    }

    #[test]
    fn obstacle_evolution_approaches_the_equilibrium() {
        let problem = canonical();
        let report = run_t_limit(
            &problem,
            TLimitMode::Obstacle,
            &[1.0, 2.0, 5.0],
            N,
            1e-3,
        )
        .unwrap();
        let sups: Vec<f64> = report.points.iter().map(|q| q.sup_distance).collect();
        assert!(sups.windows(2).all(|w| w[1] < w[0]), "distances {sups:?}");
        assert!(*sups.last().unwrap() <= 1e-3, "distance at t=5 was {}", sups.last().unwrap());
    }

    #[test]
    fn runs_started_at_the_limit_stay_there() {
        let problem = canonical();
        let grid = problem.grid(N).unwrap();
        let op = assemble_operator(&grid, problem.alpha).unwrap();
        let steady = solve_logistic(&problem, &op, problem.growth_a, 3.0).unwrap();
        let report = run_t_limit_from(
            &problem,
            TLimitMode::Logistic { p: 3.0 },
            &[1.0, 2.0],
            N,
            1e-3,
            Some(&steady.u),
        )
        .unwrap();
        for point in &report.points {
            assert!(
                point.sup_distance <= 1e-6,
                "t {}: distance {}",
                point.axis_value,
                point.sup_distance
            );
        }
    }

    #[test]
    fn growth_rates_outside_the_window_are_rejected() {
        let mut raw = canonical().to_raw();
        raw.a = 0.58;
        let problem = validate_problem(&raw).unwrap();
        let err = commuting_limits(&problem, 64.0, 1.0, N, 1e-3).unwrap_err();
        match err {
            Error::Precondition(msg) => {
                assert!(
                    msg.contains("must lie strictly between"),
                    "message should explain the admissible window: {msg}"
                );
                assert!(msg.contains("0.58"), "message should carry the offending rate: {msg}");
            }
            other => panic!("expected a precondition error, got {other:?}"),
        }
        raw.d0 = None;
        raw.b = crate::core::Profile::Constant { value: 1.0 };
        let problem = validate_problem(&raw).unwrap();
        assert!(matches!(
            commuting_limits(&problem, 64.0, 1.0, N, 1e-3),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn the_two_limit_routes_agree() {
        let problem = canonical();
        let report = commuting_limits(&problem, 64.0, 10.0, N, 1e-3).unwrap();
        assert!(
            report.sup_distance <= 0.05,
            "route distance {} should be small",
            report.sup_distance
        );
        assert!(report.lambda_full < 2.0 && 2.0 < report.lambda_refuge);
        assert!(report.steep_first.sup_norm() > 1.0);
    }
}
