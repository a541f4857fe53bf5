//! Eulerian deformations: applying, chaining, refining and scoring them.
//!
//! A deformation stores, at every cell `x`, the displacement `u(x)` such that
//! the deformed field is read back from `x - u(x)` (semi-Lagrangian lookup).
//! Displacements are in cells of the grid they live on.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{check_same_dims, Error, Result};
use crate::grid::{det_sum, Dims, ScalarField, VectorField, MAX_AXES};

/// A space-time deformation with zero displacement on the spatial faces of
/// the domain. The last axis is time; its first and last slabs keep their
/// displacements so the final frame can still be matched.
#[derive(Clone, Debug, PartialEq)]
pub struct Deformation {
    field: VectorField,
    /// Resolution at which the deformation was solved.
    pub source_dims: Dims,
}

fn zero_spatial_faces(mut field: VectorField) -> VectorField {
    let dims = field.dims().clone();
    let n = dims.ndim();
    let spatial = if n > 1 { n - 1 } else { n };
    let data = field.data_mut();
    for i in 0..dims.cell_count() {
        let c = dims.coords(i);
        if (0..spatial).any(|a| c[a] == 0 || c[a] + 1 == dims.extent(a)) {
            data[i * n..(i + 1) * n].fill(0.0);
        }
    }
    field
}

impl Deformation {
    /// Takes ownership of `field`, zeroing its spatial boundary cells.
    pub fn new(field: VectorField) -> Self {
        let source_dims = field.dims().clone();
        Deformation {
            field: zero_spatial_faces(field),
            source_dims,
        }
    }

    /// Keeps the provenance of a deformation that was solved elsewhere.
    pub fn with_source(field: VectorField, source_dims: Dims) -> Self {
        Deformation {
            field: zero_spatial_faces(field),
            source_dims,
        }
    }

    pub fn zeros(dims: Dims) -> Self {
        Deformation::new(VectorField::zeros(dims))
    }

    pub fn field(&self) -> &VectorField {
        &self.field
    }

    pub fn into_field(self) -> VectorField {
        self.field
    }

    pub fn dims(&self) -> &Dims {
        self.field.dims()
    }

    /// Expresses the deformation on a finer (or coarser) grid of the same domain.
    pub fn resampled(&self, dims: &Dims) -> Result<Deformation> {
        if dims == self.dims() {
            return Ok(self.clone());
        }
        Ok(Deformation::with_source(self.field.resampled(dims)?, self.source_dims.clone()))
    }
}

impl AsRef<VectorField> for Deformation {
    fn as_ref(&self) -> &VectorField {
        &self.field
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("weight {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// `a'(x) = a(x - alpha v(x))`, first order, one step.
pub fn advect(a: &ScalarField, v: &VectorField, alpha: f64) -> Result<ScalarField> {
    check_same_dims(a.dims(), v.dims())?;
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(a.clone());
    }
    let data = advect_cells(a, v.data(), alpha, 0..a.dims().cell_count());
    Ok(ScalarField::from_raw(a.dims().clone(), data))
}

/// Advects only the cells in `cells`; `displacements` holds their vectors.
fn advect_cells(a: &ScalarField, displacements: &[f64], alpha: f64, cells: Range<usize>) -> Vec<f64> {
    let dims = a.dims();
    let n = dims.ndim();
    let start = cells.start;
    cells
        .into_par_iter()
        .map(|i| {
            let c = dims.coords(i);
            let u = &displacements[(i - start) * n..(i - start + 1) * n];
            let mut pos = [0.0; MAX_AXES];
            for axis in 0..n {
                pos[axis] = c[axis] as f64 - alpha * u[axis];
            }
            a.sample(&pos[..n])
        })
        .collect()
}

fn check_chain<V: AsRef<VectorField>>(deformations: &[V], alphas: &[f64]) -> Result<()> {
    let first = deformations
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty deformation chain".into()))?;
    if alphas.len() != deformations.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} deformations",
            alphas.len(),
            deformations.len()
        )));
    }
    for d in deformations {
        check_same_dims(first.as_ref().dims(), d.as_ref().dims())?;
    }
    Ok(())
}

/// One alignment step over `cells`: `alpha u(x) + comb(x - u(x))`.
fn align_step(comb: &VectorField, u: &VectorField, alpha: f64, cells: Range<usize>) -> Vec<f64> {
    let dims = u.dims();
    let n = dims.ndim();
    let mut out = vec![0.0; cells.len() * n];
    let start = cells.start;
    out.par_chunks_mut(n).enumerate().for_each(|(k, o)| {
        let i = start + k;
        let c = dims.coords(i);
        let ui = u.at(i);
        let mut pos = [0.0; MAX_AXES];
        for axis in 0..n {
            pos[axis] = c[axis] as f64 - ui[axis];
        }
        comb.sample(&pos[..n], o);
        for (oc, uc) in o.iter_mut().zip(ui) {
            *oc += alpha * uc;
        }
    });
    out
}

/// Aligned combination of `cells` only. All steps but the last are computed
/// over the full grid; the last step only where requested.
fn align_cells<V: AsRef<VectorField>>(deformations: &[V], alphas: &[f64], cells: Range<usize>) -> Vec<f64> {
    let first = deformations[0].as_ref();
    let n = first.components();
    let mut comb = first.scaled(alphas[0]);
    if deformations.len() == 1 {
        return comb.data()[cells.start * n..cells.end * n].to_vec();
    }
    let all = 0..first.dims().cell_count();
    let last = deformations.len() - 1;
    for (u, &alpha) in deformations[1..last].iter().zip(&alphas[1..last]) {
        let data = align_step(&comb, u.as_ref(), alpha, all.clone());
        comb = VectorField::from_raw(first.dims().clone(), data);
    }
    align_step(&comb, deformations[last].as_ref(), alphas[last], cells)
}

/// Collapses a sequence of deformations, applied in order with weights
/// `alphas`, into one field.
///
/// Earlier deformations are looked up through the unscaled later ones; the
/// weights only enter when accumulating.
pub fn align_velocity<V: AsRef<VectorField>>(deformations: &[V], alphas: &[f64]) -> Result<VectorField> {
    check_chain(deformations, alphas)?;
    let dims = deformations[0].as_ref().dims().clone();
    let data = align_cells(deformations, alphas, 0..dims.cell_count());
    VectorField::new(dims, data)
}

/// Applies an aligned deformation chain to `a` with weight 1 and returns the
/// spatial slab at time index `t` (last axis). Equal, bit for bit, to slicing
/// `advect(a, align_velocity(..), 1)`, but only the requested slab is advected.
pub fn advect_chain_slab<V: AsRef<VectorField>>(
    a: &ScalarField,
    deformations: &[V],
    alphas: &[f64],
    t: usize,
) -> Result<ScalarField> {
    check_chain(deformations, alphas)?;
    check_same_dims(a.dims(), deformations[0].as_ref().dims())?;
    for &alpha in alphas {
        check_alpha(alpha)?;
    }
    if alphas.iter().all(|&w| w == 0.0) {
        return a.last_axis_slab(t);
    }
    let dims = a.dims();
    let slab_dims = dims.without_last()?;
    let time_extent = dims.extent(dims.ndim() - 1);
    if t >= time_extent {
        return Err(Error::InvalidArgument(format!("slab {t} out of range 0..{time_extent}")));
    }
    let len = slab_dims.cell_count();
    let cells = t * len..(t + 1) * len;
    let u = align_cells(deformations, alphas, cells.clone());
    let data = advect_cells(a, &u, 1.0, cells);
    Ok(ScalarField::from_raw(slab_dims, data))
}

/// Full-volume counterpart of [`advect_chain_slab`].
pub fn advect_chain<V: AsRef<VectorField>>(a: &ScalarField, deformations: &[V], alphas: &[f64]) -> Result<ScalarField> {
    check_chain(deformations, alphas)?;
    for &alpha in alphas {
        check_alpha(alpha)?;
    }
    if alphas.iter().all(|&w| w == 0.0) {
        return Ok(a.clone());
    }
    let u = align_velocity(deformations, alphas)?;
    advect(a, &u, 1.0)
}

/// Indicator of disagreeing signs, weighted by the capped value gap.
pub fn mismatch(s1: f64, s2: f64) -> f64 {
    if (s1 >= 0.0) == (s2 >= 0.0) {
        0.0
    } else {
        (s1 - s2).abs().min(1.0)
    }
}

/// Volume where the two SDFs disagree in sign, with sub-cell weighting near
/// the surface. Inputs are in cell units.
pub fn error_metric(phi1: &ScalarField, phi2: &ScalarField) -> Result<f64> {
    check_same_dims(phi1.dims(), phi2.dims())?;
    let h: Vec<f64> = phi1
        .data()
        .par_iter()
        .zip(phi2.data().par_iter())
        .map(|(&a, &b)| mismatch(a, b))
        .collect();
    Ok(det_sum(&h))
}

/// Settings for one surface projection pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionParams {
    pub sigma_proj: f64,
    pub tau_proj: f64,
}

const MARCH_STEP: f64 = 0.5;
const BISECTION_STEPS: usize = 16;

/// Searches along `dir` from `start` for the point where `f` changes sign.
///
/// `f(start)` must be nonzero. The bracket is found by marching in steps of
/// half a cell up to `max_len`, then refined by bisection. Returns the
/// distance travelled.
fn bisect_along(f: impl Fn(f64) -> f64, max_len: f64) -> Option<f64> {
    let f0 = f(0.0);
    let side = f0 > 0.0;
    let mut lo = 0.0;
    let mut hi = None;
    let mut t = MARCH_STEP;
    while t <= max_len + 1e-12 {
        let v = f(t);
        if v == 0.0 {
            return Some(t);
        }
        if (v > 0.0) != side {
            hi = Some(t);
            break;
        }
        lo = t;
        t += MARCH_STEP;
    }
    let mut hi = hi?;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v == 0.0 {
            return Some(mid);
        }
        if (v > 0.0) == side {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Per-cell snapping of the deformed source onto the target SDF.
///
/// For every cell within `tau_proj` of the target surface, the value of the
/// source deformed by `u` is located on the target by a line search along the
/// target's normal; the offset becomes the update. Updates are extrapolated
/// outward for `tau_proj` iterations with a linear fade and finally blurred
/// with `sigma_proj`. The caller adds the result to `u`.
pub fn project_surface(
    phi_src: &ScalarField,
    phi_tgt: &ScalarField,
    u: &VectorField,
    params: ProjectionParams,
) -> Result<VectorField> {
    check_same_dims(phi_src.dims(), phi_tgt.dims())?;
    check_same_dims(phi_src.dims(), u.dims())?;
    if phi_tgt.min_value() >= 0.0 || phi_tgt.max_value() < 0.0 {
        return Err(Error::NoSurface("projection target has no zero crossing".into()));
    }
    let deformed = advect(phi_src, u, 1.0)?;
    let band = bandwise_offsets(&deformed, phi_tgt, params.tau_proj)?;
    let extended = extrapolate(phi_tgt.dims(), band, params.tau_proj);
    Ok(extended.blurred(params.sigma_proj))
}

/// Raw per-cell offsets inside the band; `None` outside.
fn bandwise_offsets(
    deformed: &ScalarField,
    phi_tgt: &ScalarField,
    tau_proj: f64,
) -> Result<Vec<Option<[f64; MAX_AXES]>>> {
    let dims = phi_tgt.dims();
    let n = dims.ndim();
    let normals = phi_tgt.gradient()?;
    let max_len = 2.0 * tau_proj;
    Ok((0..dims.cell_count())
        .into_par_iter()
        .map(|i| {
            let target = phi_tgt.at(i);
            if target.abs() >= tau_proj {
                return None;
            }
            let zero = [0.0; MAX_AXES];
            let iso = deformed.at(i);
            let gap = target - iso;
            if gap == 0.0 {
                return Some(zero);
            }
            let g = normals.at(i);
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-9 {
                return Some(zero);
            }
            // Walk downhill on the target when it is above the iso-value.
            let sign = if gap > 0.0 { -1.0 } else { 1.0 };
            let mut dir = [0.0; MAX_AXES];
            for axis in 0..n {
                dir[axis] = sign * g[axis] / norm;
            }
            let c = dims.coords(i);
            let eval = |t: f64| {
                let mut p = [0.0; MAX_AXES];
                for axis in 0..n {
                    p[axis] = c[axis] as f64 + t * dir[axis];
                }
                phi_tgt.sample(&p[..n]) - iso
            };
            match bisect_along(eval, max_len) {
                Some(t) => {
                    let mut d = [0.0; MAX_AXES];
                    for axis in 0..n {
                        d[axis] = t * dir[axis];
                    }
                    Some(d)
                }
                None => Some(zero),
            }
        })
        .collect())
}

/// Jacobi-style outward propagation: at iteration `k` every unassigned cell
/// next to assigned ones takes their average, scaled by `1 - k / tau`.
fn extrapolate(dims: &Dims, band: Vec<Option<[f64; MAX_AXES]>>, tau_proj: f64) -> VectorField {
    let n = dims.ndim();
    let iterations = tau_proj.ceil().max(0.0) as usize;
    let mut base = band;
    let mut out: Vec<f64> = vec![0.0; dims.cell_count() * n];
    for (i, v) in base.iter().enumerate() {
        if let Some(d) = v {
            out[i * n..(i + 1) * n].copy_from_slice(&d[..n]);
        }
    }
    for k in 0..iterations {
        let fade = 1.0 - k as f64 / tau_proj;
        let ring: Vec<Option<[f64; MAX_AXES]>> = (0..dims.cell_count())
            .into_par_iter()
            .map(|i| {
                if base[i].is_some() {
                    return None;
                }
                let c = dims.coords(i);
                let mut sum = [0.0; MAX_AXES];
                let mut count = 0usize;
                for axis in 0..n {
                    let s = dims.stride(axis);
                    let mut visit = |j: usize| {
                        if let Some(d) = &base[j] {
                            for a in 0..n {
                                sum[a] += d[a];
                            }
                            count += 1;
                        }
                    };
                    if c[axis] > 0 {
                        visit(i - s);
                    }
                    if c[axis] + 1 < dims.extent(axis) {
                        visit(i + s);
                    }
                }
                if count == 0 {
                    return None;
                }
                for v in sum.iter_mut() {
                    *v /= count as f64;
                }
                Some(sum)
            })
            .collect();
        for (i, r) in ring.into_iter().enumerate() {
            if let Some(avg) = r {
                for a in 0..n {
                    out[i * n + a] = fade * avg[a];
                }
                base[i] = Some(avg);
            }
        }
    }
    VectorField::from_raw(dims.clone(), out)
}
