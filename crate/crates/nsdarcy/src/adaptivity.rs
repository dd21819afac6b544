//! Marking strategies and the solve–estimate–mark–refine loop.

use crate::dofs::{DiscreteSolution, DofMap};
use crate::estimator::{assemble_indicators, EstimatorSummary, IndicatorField, WeightMode};
use crate::mesh::{Mesh, MeshError};
use crate::model::ProblemData;
use crate::solver::{solve_stationary, SolveError, SolveReport, SolverConfig};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarkingStrategy {
    /// Mark a minimal set carrying at least the fraction θ² of the total
    /// squared estimate (bulk chasing).
    Dorfler,
    /// Mark every element whose indicator reaches θ times the largest one.
    Maximum,
}

#[derive(Clone, Copy, Debug)]
pub struct MarkingConfig {
    /// Marking fraction in (0, 1].
    pub theta: f64,
    pub strategy: MarkingStrategy,
    /// Refine at most this many times; the trace then has max_levels + 1 rows.
    pub max_levels: usize,
    /// Stop as soon as the global estimate drops to this value.
    pub stop_theta: f64,
}

impl Default for MarkingConfig {
    fn default() -> Self {
        MarkingConfig {
            theta: 0.5,
            strategy: MarkingStrategy::Dorfler,
            max_levels: 10,
            stop_theta: 0.0,
        }
    }
}

/// One row of the adaptive history.
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveLevel {
    pub level: usize,
    pub nelem: usize,
    pub ndof: usize,
    pub theta: f64,
    pub zeta: f64,
    /// Number of elements marked at this level (0 on the final level).
    pub marked: usize,
}

/// Final state of a completed adaptive run.
pub struct AdaptiveOutcome {
    pub trace: Vec<AdaptiveLevel>,
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub solution: DiscreteSolution,
    pub indicators: IndicatorField,
    pub summary: EstimatorSummary,
    pub report: SolveReport,
    /// True when the loop ended because the estimate reached `stop_theta`.
    pub reached_tolerance: bool,
}

#[derive(Debug, Error)]
pub enum AdaptiveError {
    #[error("solver failed on level {level}: {source}")]
    Solve {
        level: usize,
        source: SolveError,
        /// History of the levels completed before the failure.
        trace: Vec<AdaptiveLevel>,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Select the elements to refine from squared indicators.
///
/// All-zero indicators give an empty set. Ties are broken by ascending
/// element id, so the choice is deterministic.
pub fn mark(theta_sq: &[f64], config: &MarkingConfig) -> Vec<usize> {
    assert!(
        config.theta > 0.0 && config.theta <= 1.0,
        "marking fraction must lie in (0, 1], got {}",
        config.theta
    );
    assert!(theta_sq.iter().all(|v| v.is_finite()), "indicators must be finite");
    let mut order: Vec<usize> = (0..theta_sq.len()).collect();
    order.sort_by(|&a, &b| {
        theta_sq[b]
            .partial_cmp(&theta_sq[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    match config.strategy {
        MarkingStrategy::Dorfler => {
            // accumulate the total in the same (sorted) order as the greedy
            // sweep so θ = 1 selects exactly the positive indicators
            let total: f64 = order.iter().map(|&t| theta_sq[t]).sum();
            if total == 0.0 {
                return Vec::new();
            }
            let target = config.theta * config.theta * total;
            let mut acc = 0.0;
            let mut marked = Vec::new();
            for &t in &order {
                if acc >= target || theta_sq[t] == 0.0 {
                    break;
                }
                acc += theta_sq[t];
                marked.push(t);
            }
            marked.sort_unstable();
            marked
        }
        MarkingStrategy::Maximum => {
            let max = theta_sq.iter().cloned().fold(0.0, f64::max);
            if max == 0.0 {
                return Vec::new();
            }
            let cut = config.theta * config.theta * max;
            (0..theta_sq.len()).filter(|&t| theta_sq[t] >= cut).collect()
        }
    }
}

/// Run the solve–estimate–mark–refine loop until the estimate reaches
/// `stop_theta` or `max_levels` refinements have been performed.
pub fn run_adaptive(
    mesh0: Mesh,
    data: &ProblemData,
    marking: &MarkingConfig,
    solver: &SolverConfig,
    mode: WeightMode,
) -> Result<AdaptiveOutcome, AdaptiveError> {
    run_adaptive_with(mesh0, data, marking, solver, mode, &mut |_, _, _, _, _| {})
}

/// [`run_adaptive`] with a per-level observer, called after each estimate
/// with (level, mesh, dofs, solution, indicators).
pub fn run_adaptive_with(
    mesh0: Mesh,
    data: &ProblemData,
    marking: &MarkingConfig,
    solver: &SolverConfig,
    mode: WeightMode,
    observer: &mut dyn FnMut(usize, &Mesh, &DofMap, &DiscreteSolution, &IndicatorField),
) -> Result<AdaptiveOutcome, AdaptiveError> {
    let mut mesh = mesh0;
    let mut trace: Vec<AdaptiveLevel> = Vec::new();
    for level in 0..=marking.max_levels {
        let dofs = DofMap::build(&mesh, data)?;
        let (solution, report) = match solve_stationary(&mesh, &dofs, data, solver) {
            Ok(pair) => pair,
            Err(source) => {
                return Err(AdaptiveError::Solve {
                    level,
                    source,
                    trace,
                })
            }
        };
        let (indicators, summary) = assemble_indicators(&mesh, &dofs, &solution, data, mode);
        observer(level, &mesh, &dofs, &solution, &indicators);
        let stop = summary.theta <= marking.stop_theta || level == marking.max_levels;
        let marked = if stop {
            Vec::new()
        } else {
            mark(&indicators.theta_sq, marking)
        };
        trace.push(AdaptiveLevel {
            level,
            nelem: mesh.triangles.len(),
            ndof: dofs.n_total,
            theta: summary.theta,
            zeta: summary.zeta,
            marked: marked.len(),
        });
        if stop || marked.is_empty() {
            let reached_tolerance = summary.theta <= marking.stop_theta;
            return Ok(AdaptiveOutcome {
                trace,
                mesh,
                dofs,
                solution,
                indicators,
                summary,
                report,
                reached_tolerance,
            });
        }
        mesh = mesh.refine(&marked)?;
    }
    unreachable!("loop returns on the max_levels iteration");
}
