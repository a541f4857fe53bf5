//! Signed-distance construction and space-time assembly.
//!
//! Level-set functions are negative inside. Frames of a simulation are padded
//! with an empty margin, the first frame is repeated, and the stack is
//! redistanced in full space-time so that distances along the time axis are
//! measured in the same units as spatial distances.

use serde::{Deserialize, Serialize};

use crate::error::{check_same_dims, Error, Result};
use crate::grid::{Dims, ScalarField, MAX_AXES};

/// Default truncation distance in cells.
pub const DEFAULT_GAMMA_MAX: f64 = 40.0;
/// Default iso-level for smoke, as a fraction of the maximum density.
pub const DEFAULT_DENSITY_LEVEL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssembleParams {
    pub gamma_max: f64,
    /// Empty fraction added on every spatial side.
    pub margin: f64,
    /// Number of extra copies of the first frame prepended in time.
    pub repeat_first: usize,
}

impl Default for AssembleParams {
    fn default() -> Self {
        AssembleParams {
            gamma_max: DEFAULT_GAMMA_MAX,
            margin: 0.10,
            repeat_first: 5,
        }
    }
}

/// Truncated signed distances over space plus a trailing time axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeSdf {
    pub field: ScalarField,
    pub gamma_max: f64,
    pub frames_repeated: usize,
    pub margin: f64,
    /// Cells added on each side of every spatial axis.
    pub padding: Vec<usize>,
}

impl SpaceTimeSdf {
    /// Wraps an existing space-time distance volume (e.g. loaded from disk).
    pub fn from_field(field: ScalarField, gamma_max: f64) -> Self {
        let spatial = field.dims().ndim().saturating_sub(1);
        SpaceTimeSdf {
            field,
            gamma_max,
            frames_repeated: 0,
            margin: 0.0,
            padding: vec![0; spatial],
        }
    }

    pub fn dims(&self) -> &Dims {
        self.field.dims()
    }

    pub fn time_extent(&self) -> usize {
        let d = self.field.dims();
        d.extent(d.ndim() - 1)
    }
}

/// `level_fraction * max(density) - density`: negative inside the smoke.
pub fn iso_from_density(density: &ScalarField, level_fraction: f64) -> Result<ScalarField> {
    if !(level_fraction > 0.0 && level_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "level fraction {level_fraction} outside (0, 1)"
        )));
    }
    let min = density.min_value();
    let max = density.max_value();
    if min < 0.0 {
        return Err(Error::InvalidArgument(format!("negative density {min}")));
    }
    if max <= 0.0 {
        return Err(Error::NoSurface("density is zero everywhere".into()));
    }
    if min == max {
        return Err(Error::NoSurface("density is uniform".into()));
    }
    let level = level_fraction * max;
    Ok(density.map(|d| level - d))
}

fn is_inside(v: f64) -> bool {
    v < 0.0
}

/// Signed Euclidean distance to the zero crossings of `levelset`, clamped to
/// `[-gamma_max, gamma_max]`.
///
/// Cells adjacent to a sign change are initialized from the linearly
/// interpolated crossing positions; fast sweeping with first-order Godunov
/// updates fills the rest and may still lower those initial values where the
/// nearest crossing lies diagonally.
pub fn redistance(levelset: &ScalarField, gamma_max: f64) -> Result<ScalarField> {
    if gamma_max <= 0.0 {
        return Err(Error::InvalidArgument(format!("gamma_max {gamma_max} must be positive")));
    }
    let dims = levelset.dims().clone();
    let phi = levelset.data();
    let n = dims.ndim();
    let len = dims.cell_count();

    let mut dist = vec![gamma_max; len];
    let mut frozen = vec![false; len];
    let mut any_interface = false;
    for i in 0..len {
        let c = dims.coords(i);
        let here = phi[i];
        if here == 0.0 {
            dist[i] = 0.0;
            frozen[i] = true;
            any_interface = true;
            continue;
        }
        let mut inv_sq = 0.0;
        for axis in 0..n {
            let s = dims.stride(axis);
            let mut best = f64::INFINITY;
            let mut check = |j: usize| {
                let other = phi[j];
                if is_inside(here) != is_inside(other) {
                    let theta = here / (here - other);
                    best = best.min(theta.abs());
                }
            };
            if c[axis] > 0 {
                check(i - s);
            }
            if c[axis] + 1 < dims.extent(axis) {
                check(i + s);
            }
            if best.is_finite() {
                if best <= 0.0 {
                    inv_sq = f64::INFINITY;
                } else {
                    inv_sq += 1.0 / (best * best);
                }
            }
        }
        if inv_sq > 0.0 {
            dist[i] = (1.0 / inv_sq.sqrt()).min(gamma_max);
            any_interface = true;
        }
    }
    if !any_interface {
        return Err(Error::NoSurface("level set has no sign change".into()));
    }

    fast_sweep(&dims, &mut dist, &frozen);

    let data = dist
        .iter()
        .zip(phi)
        .map(|(&d, &p)| {
            let d = d.min(gamma_max);
            if is_inside(p) {
                -d
            } else {
                d
            }
        })
        .collect();
    ScalarField::new(dims, data)
}

/// Gauss-Seidel sweeps in all `2^N` axis orderings until nothing changes.
fn fast_sweep(dims: &Dims, dist: &mut [f64], frozen: &[bool]) {
    let n = dims.ndim();
    let len = dims.cell_count();
    const MAX_ROUNDS: usize = 8;
    for _ in 0..MAX_ROUNDS {
        let mut changed = 0.0f64;
        for dir in 0..(1usize << n) {
            for k in 0..len {
                let mut c = dims.coords(k);
                for axis in 0..n {
                    if dir >> axis & 1 == 1 {
                        c[axis] = dims.extent(axis) - 1 - c[axis];
                    }
                }
                let i = dims.index(&c[..n]);
                if frozen[i] {
                    continue;
                }
                let mut m = [f64::INFINITY; MAX_AXES];
                for axis in 0..n {
                    let s = dims.stride(axis);
                    if c[axis] > 0 {
                        m[axis] = m[axis].min(dist[i - s]);
                    }
                    if c[axis] + 1 < dims.extent(axis) {
                        m[axis] = m[axis].min(dist[i + s]);
                    }
                }
                let candidate = godunov_update(&mut m[..n]);
                if candidate < dist[i] {
                    changed = changed.max(dist[i] - candidate);
                    dist[i] = candidate;
                }
            }
        }
        if changed < 1e-10 {
            break;
        }
    }
}

/// Solves `sum_j max(d - m_j, 0)^2 = 1` for `d`.
fn godunov_update(m: &mut [f64]) -> f64 {
    m.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mut d = m[0] + 1.0;
    let mut sum = m[0];
    let mut sum_sq = m[0] * m[0];
    for k in 1..m.len() {
        if !m[k].is_finite() || d <= m[k] {
            break;
        }
        sum += m[k];
        sum_sq += m[k] * m[k];
        let count = (k + 1) as f64;
        let disc = sum * sum - count * (sum_sq - 1.0);
        d = (sum + disc.max(0.0).sqrt()) / count;
    }
    d
}

/// Enlarges every axis by `pad[axis]` cells on both sides, filling with `value`.
pub fn pad_field(field: &ScalarField, pad: &[usize], value: f64) -> Result<ScalarField> {
    let src = field.dims();
    let n = src.ndim();
    if pad.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} padding entries for {n} axes",
            pad.len()
        )));
    }
    let ext: Vec<usize> = (0..n).map(|a| src.extent(a) + 2 * pad[a]).collect();
    let dims = Dims::new(&ext)?;
    Ok(ScalarField::from_fn(dims, |c| {
        let mut inner = [0usize; MAX_AXES];
        for axis in 0..n {
            let p = c[axis] as i64 - pad[axis] as i64;
            if p < 0 || p >= src.extent(axis) as i64 {
                return value;
            }
            inner[axis] = p as usize;
        }
        field.get(&inner[..n])
    }))
}

/// Padding per spatial axis for an empty margin of `margin` on each side.
pub fn margin_padding(spatial: &Dims, margin: f64) -> Vec<usize> {
    spatial
        .extents()
        .iter()
        .map(|&e| (margin * e as f64).ceil() as usize)
        .collect()
}

/// Builds the space-time SDF of a sequence of spatial level-set frames.
pub fn assemble_spacetime(frames: &[ScalarField], params: &AssembleParams) -> Result<SpaceTimeSdf> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 frames, got {}",
            frames.len()
        )));
    }
    if !(0.0..0.5).contains(&params.margin) {
        return Err(Error::InvalidArgument(format!("margin {} outside [0, 0.5)", params.margin)));
    }
    let spatial = frames[0].dims().clone();
    if spatial.ndim() >= crate::grid::MAX_AXES {
        return Err(Error::InvalidDims(format!(
            "{}-D frames leave no room for a time axis",
            spatial.ndim()
        )));
    }
    for f in frames {
        check_same_dims(&spatial, f.dims())?;
    }
    let padding = margin_padding(&spatial, params.margin);
    let padded = frames
        .iter()
        .map(|f| pad_field(f, &padding, params.gamma_max))
        .collect::<Result<Vec<_>>>()?;
    let mut slabs = Vec::with_capacity(padded.len() + params.repeat_first);
    for _ in 0..params.repeat_first {
        slabs.push(padded[0].clone());
    }
    slabs.extend(padded);
    let stacked = ScalarField::stack(&slabs)?;
    let field = redistance(&stacked, params.gamma_max)?;
    Ok(SpaceTimeSdf {
        field,
        gamma_max: params.gamma_max,
        frames_repeated: params.repeat_first,
        margin: params.margin,
        padding,
    })
}

/// Pads and repeats raw frames exactly like [`assemble_spacetime`], without
/// redistancing. Used for data that is interpolated but not matched (smoke
/// densities), so that it lines up with the matched SDF volume.
pub fn assemble_raw(
    frames: &[ScalarField],
    params: &AssembleParams,
    pad_value: f64,
) -> Result<ScalarField> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("no frames".into()))?;
    let padding = margin_padding(first.dims(), params.margin);
    let mut slabs = Vec::with_capacity(frames.len() + params.repeat_first);
    for (k, f) in frames.iter().enumerate() {
        check_same_dims(first.dims(), f.dims())?;
        let p = pad_field(f, &padding, pad_value)?;
        if k == 0 {
            for _ in 0..params.repeat_first {
                slabs.push(p.clone());
            }
        }
        slabs.push(p);
    }
    ScalarField::stack(&slabs)
}

/// Scales distances for the flow solve. `beta_image` is negative, so the
/// inside becomes positive.
pub fn scale_for_flow(sdf: &ScalarField, beta_image: f64) -> ScalarField {
    sdf.map(|v| v * beta_image)
}

/// Spatial slab at time `t`; fractional times blend the neighboring slabs.
pub fn extract_time_slice(field: &ScalarField, t: f64) -> Result<ScalarField> {
    let dims = field.dims();
    let extent = dims.extent(dims.ndim() - 1);
    if !(t >= 0.0 && t <= (extent - 1) as f64) {
        return Err(Error::InvalidArgument(format!(
            "time {t} outside [0, {}]",
            extent - 1
        )));
    }
    let lo = t.floor() as usize;
    let frac = t - lo as f64;
    let a = field.last_axis_slab(lo)?;
    if frac == 0.0 {
        return Ok(a);
    }
    let b = field.last_axis_slab(lo + 1)?;
    a.zip_with(&b, |x, y| (1.0 - frac) * x + frac * y)
}
