//! Coarse-to-fine registration of one space-time SDF onto another.
//!
//! Each level runs a few residual flow solves, each one accepted only if it
//! lowers the error metric, with the flow blur shrinking by 3/4 after every
//! accepted step. The finest level finishes with surface projection passes.

use serde::{Deserialize, Serialize};

use crate::deformation::{advect, align_velocity, error_metric, project_surface, Deformation, ProjectionParams};
use crate::error::{check_same_dims, Result};
use crate::grid::{ScalarField, VectorField};
use crate::levelset::{scale_for_flow, SpaceTimeSdf};
use crate::optical_flow::{flow_single_level, FlofParams};

const ANNEAL: f64 = 0.75;

/// Which parts of the pipeline run. Everything is on by default.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stages {
    pub hierarchy: bool,
    pub projection: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            hierarchy: true,
            projection: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceStep {
    Flow {
        sigma_of: f64,
        error_before: f64,
        error_after: f64,
        accepted: bool,
        cg_iterations: usize,
        cg_converged: bool,
    },
    Projection {
        sigma_proj: f64,
        error_before: f64,
        error_after: f64,
        accepted: bool,
    },
}

impl TraceStep {
    pub fn accepted(&self) -> bool {
        match self {
            TraceStep::Flow { accepted, .. } | TraceStep::Projection { accepted, .. } => *accepted,
        }
    }

    pub fn is_projection(&self) -> bool {
        matches!(self, TraceStep::Projection { .. })
    }
}

/// Steps taken at one hierarchy level; level 0 is the input resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub level: usize,
    pub dims: Vec<usize>,
    pub steps: Vec<TraceStep>,
}

#[derive(Clone, Debug)]
pub struct MatchResult {
    pub deformation: Deformation,
    pub error_initial: f64,
    pub error_final: f64,
    /// Coarsest level first.
    pub level_trace: Vec<LevelTrace>,
}

/// Registers `phi1` onto `phi2` with every stage enabled.
pub fn flof(phi1: &SpaceTimeSdf, phi2: &SpaceTimeSdf, params: &FlofParams) -> Result<MatchResult> {
    flof_with(phi1, phi2, params, Stages::default())
}

pub fn flof_with(phi1: &SpaceTimeSdf, phi2: &SpaceTimeSdf, params: &FlofParams, stages: Stages) -> Result<MatchResult> {
    let flow1 = scale_for_flow(&phi1.field, params.beta_image);
    let flow2 = scale_for_flow(&phi2.field, params.beta_image);
    register(&flow1, &flow2, &phi1.field, &phi2.field, params, stages)
}

/// Lower-level entry: the flow solves see `flow1`/`flow2`, while acceptance
/// and projection use the SDFs `metric1`/`metric2`.
pub fn register(
    flow1: &ScalarField,
    flow2: &ScalarField,
    metric1: &ScalarField,
    metric2: &ScalarField,
    params: &FlofParams,
    stages: Stages,
) -> Result<MatchResult> {
    params.validate()?;
    check_same_dims(flow1.dims(), flow2.dims())?;
    check_same_dims(flow1.dims(), metric1.dims())?;
    check_same_dims(flow1.dims(), metric2.dims())?;
    let error_initial = error_metric(metric1, metric2)?;
    let mut trace = Vec::new();
    let inputs = Inputs {
        flow1: flow1.clone(),
        flow2: flow2.clone(),
        metric1: metric1.clone(),
        metric2: metric2.clone(),
    };
    let u = solve_level(inputs, params, stages, 0, &mut trace)?;
    let mut deformation = Deformation::new(u);
    let mut error_final = error_metric(&advect(metric1, deformation.field(), 1.0)?, metric2)?;
    if error_final > error_initial {
        deformation = Deformation::zeros(metric1.dims().clone());
        error_final = error_initial;
    }
    Ok(MatchResult {
        deformation,
        error_initial,
        error_final,
        level_trace: trace,
    })
}

/// Forward and backward registrations, solved independently.
pub fn match_pair(
    phi1: &SpaceTimeSdf,
    phi2: &SpaceTimeSdf,
    params: &FlofParams,
) -> Result<(MatchResult, MatchResult)> {
    let (forward, backward) = rayon::join(|| flof(phi1, phi2, params), || flof(phi2, phi1, params));
    Ok((forward?, backward?))
}

struct Inputs {
    flow1: ScalarField,
    flow2: ScalarField,
    metric1: ScalarField,
    metric2: ScalarField,
}

impl Inputs {
    fn downsampled(&self) -> Result<Inputs> {
        Ok(Inputs {
            flow1: self.flow1.downsampled()?,
            flow2: self.flow2.downsampled()?,
            metric1: self.metric1.downsampled()?,
            metric2: self.metric2.downsampled()?,
        })
    }

    fn error_of(&self, u: &VectorField) -> Result<f64> {
        error_metric(&advect(&self.metric1, u, 1.0)?, &self.metric2)
    }
}

fn solve_level(
    inputs: Inputs,
    params: &FlofParams,
    stages: Stages,
    level: usize,
    trace: &mut Vec<LevelTrace>,
) -> Result<VectorField> {
    let dims = inputs.flow1.dims().clone();
    let mut u = if stages.hierarchy && dims.min_extent() >= 2 * params.s_max {
        let coarse = solve_level(inputs.downsampled()?, params, stages, level + 1, trace)?;
        coarse.resampled(&dims)?
    } else {
        VectorField::zeros(dims.clone())
    };
    let mut steps = Vec::new();

    let mut error = inputs.error_of(&u)?;
    let mut sigma_of = params.sigma_of;
    for _ in 0..params.l_max {
        let warped = advect(&inputs.flow1, &u, 1.0)?;
        let (increment, report) = flow_single_level(&warped, &inputs.flow2, sigma_of, params)?;
        let candidate = align_velocity(&[&u, &increment], &[1.0, 1.0])?;
        let candidate_error = inputs.error_of(&candidate)?;
        let accepted = candidate_error <= error;
        steps.push(TraceStep::Flow {
            sigma_of,
            error_before: error,
            error_after: candidate_error,
            accepted,
            cg_iterations: report.iterations,
            cg_converged: report.converged,
        });
        if !accepted {
            break;
        }
        u = candidate;
        error = candidate_error;
        sigma_of *= ANNEAL;
    }

    if level == 0 && stages.projection {
        let mut sigma_proj = params.sigma_proj;
        for _ in 0..params.k_max {
            let delta = project_surface(
                &inputs.metric1,
                &inputs.metric2,
                &u,
                ProjectionParams {
                    sigma_proj,
                    tau_proj: params.tau_proj,
                },
            )?;
            let candidate = u.add(&delta)?;
            let candidate_error = inputs.error_of(&candidate)?;
            let accepted = candidate_error <= error;
            steps.push(TraceStep::Projection {
                sigma_proj,
                error_before: error,
                error_after: candidate_error,
                accepted,
            });
            if accepted {
                u = candidate;
                error = candidate_error;
            }
            sigma_proj *= ANNEAL;
        }
    }

    trace.push(LevelTrace {
        level,
        dims: dims.extents().to_vec(),
        steps,
    });
    Ok(u)
}
