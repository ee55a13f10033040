//! One transfer end to end: guess selection, structure detection and
//! metrics. The command-line driver is a thin shell over this module.

use std::time::Duration;

use lowthrust_nlp::SolveStatus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbsoc::{bbsoc_solve, BbsocError, BbsocOutcome, DetectionConfig};
use crate::collocation::{Mesh, Trajectory};
use crate::guess::{chained_guess, classify_case, propagated_guess, CaseClass, GuessError};
use crate::problem::{build_problem, ProblemError, Study, TransferProblem};
use crate::reference::{initial_setup, published, INITIAL_POINTS};
use crate::report::{compute_metrics, ReportError, TransferMetrics};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("initial guess: {0}")]
    Guess(#[from] GuessError),
    #[error(transparent)]
    Bbsoc(#[from] BbsocError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("invalid settings: {0}")]
    Config(String),
}

/// Solver settings; unset values fall back to the per-case tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub eta: Option<f64>,
    pub intervals: Option<usize>,
    pub points: usize,
    pub nlp_tolerance: f64,
    pub mesh_tolerance: f64,
    pub max_wall_time: Option<Duration>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            eta: None,
            intervals: None,
            points: INITIAL_POINTS,
            nlp_tolerance: 1e-7,
            mesh_tolerance: 1e-2,
            max_wall_time: None,
        }
    }
}

impl RunOptions {
    /// Detection settings for a tabulated case, or for a custom transfer when
    /// `case` is `None`.
    pub fn detection(&self, case: Option<(Study, usize)>) -> Result<DetectionConfig, TransferError> {
        let (eta, intervals) = match case.and_then(|(s, c)| initial_setup(s, c)) {
            Some((eta, m)) => (self.eta.unwrap_or(eta), self.intervals.unwrap_or(m)),
            None => (self.eta.unwrap_or(0.1), self.intervals.unwrap_or(50)),
        };
        let config = DetectionConfig {
            eta,
            intervals,
            points: self.points,
            mesh_tolerance: self.mesh_tolerance,
            nlp_tolerance: self.nlp_tolerance,
            max_wall_time: self.max_wall_time,
            ..DetectionConfig::default()
        };
        config.validate().map_err(|e| TransferError::Config(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuessSource {
    Propagated,
    Chained,
    WarmStart,
}

/// How a finished run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    /// Optimal NLP and the mesh meets its tolerance.
    Converged,
    FeasibleNotOptimal,
    Infeasible,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Converged => 0,
            Self::FeasibleNotOptimal => 2,
            Self::Infeasible => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransferRun {
    pub problem: TransferProblem,
    pub guess: Trajectory,
    pub guess_source: GuessSource,
    pub outcome: BbsocOutcome,
    pub metrics: TransferMetrics,
    pub status: RunStatus,
}

/// Initial guess by the case class, or the warm start when given. The
/// problem horizon is set from the guess.
pub fn select_guess(
    prob: &mut TransferProblem,
    config: &DetectionConfig,
    warm_start: Option<&Trajectory>,
) -> Result<(Trajectory, GuessSource), TransferError> {
    if let Some(traj) = warm_start {
        let (first, last) = (&traj.x[0], traj.x.last().expect("trajectories have samples"));
        let revolutions = (last[5] - first[5]) / std::f64::consts::TAU;
        prob.set_horizon_from_guess(traj.duration(), revolutions, first[5]);
        return Ok((traj.clone(), GuessSource::WarmStart));
    }
    let mesh = Mesh::uniform(config.intervals, config.points);
    let (guess, source) = match classify_case(prob, &mesh) {
        CaseClass::Partial => (propagated_guess(prob)?, GuessSource::Propagated),
        CaseClass::Multiple => (chained_guess(prob)?, GuessSource::Chained),
    };
    log::info!("guess: {source:?}, {:.3} revolutions", guess.revolutions);
    guess.apply_horizon(prob);
    Ok((guess.to_trajectory(prob), source))
}

pub fn solve_transfer(
    mut prob: TransferProblem,
    config: &DetectionConfig,
    warm_start: Option<&Trajectory>,
) -> Result<TransferRun, TransferError> {
    let (guess, guess_source) = select_guess(&mut prob, config, warm_start)?;
    let outcome = bbsoc_solve(&prob, config, &guess)?;
    let metrics = compute_metrics(&outcome.solution, &outcome.structure, &prob)?;
    let status = if outcome.solution.status == SolveStatus::Optimal && outcome.mesh_converged {
        RunStatus::Converged
    } else {
        RunStatus::FeasibleNotOptimal
    };
    Ok(TransferRun { problem: prob, guess, guess_source, outcome, metrics, status })
}

/// One of the tabulated cases with its published settings.
pub fn solve_case(
    study: Study,
    case: usize,
    options: &RunOptions,
    warm_start: Option<&Trajectory>,
) -> Result<TransferRun, TransferError> {
    let prob = build_problem(study, case)?;
    let config = options.detection(Some((study, case)))?;
    log::info!("{study} case {case}: eta {}, {} intervals", config.eta, config.intervals);
    let mut run = solve_transfer(prob, &config, warm_start)?;
    run.metrics.reference_delta_v = published(study, case).and_then(|p| p.prior_delta_v);
    Ok(run)
}
