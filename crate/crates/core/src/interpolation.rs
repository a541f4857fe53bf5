//! Synthesizing in-between data sets from matched inputs.
//!
//! Samples sit at parameter positions `r_i` and are grouped into simplices.
//! Every simplex of `n` samples stores the cycle of deformations
//! `s_0 -> s_1 -> ... -> s_{n-1} -> s_0`. A query point is mapped to
//! barycentric weights `x`, each input is pushed towards the query along its
//! chain of the cycle, and the deformed inputs are blended.
//!
//! Work is done per time slab: only the requested slice of the output is
//! ever materialized.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::deformation::{advect_chain_slab, Deformation};
use crate::error::{check_same_dims, Error, Result};
use crate::grid::{det_sum, Dims, ScalarField, VectorField};

/// Barycentric weights closer than this to 0 or 1 are snapped.
const SNAP: f64 = 1e-12;
/// Tolerance for treating a point as inside a (sub-)simplex.
const INSIDE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    LiquidSdf,
    SmokeDensity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Linear,
    Union,
    Nearest,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Linear, Mode::Union, Mode::Nearest];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Linear => "linear",
            Mode::Union => "union",
            Mode::Nearest => "nearest",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mode `{s}`")))
    }
}

fn snap(w: f64) -> f64 {
    if w.abs() < SNAP {
        0.0
    } else if (w - 1.0).abs() < SNAP {
        1.0
    } else {
        w
    }
}

/// Barycentric coordinates of `x` in the simplex spanned by `vertices`.
///
/// With `n` vertices the points live in `n - 1` dimensions. The last weight is
/// `1 - sum(others)`. Points outside the simplex get negative weights; see
/// [`is_inside`].
pub fn barycentric(x: &[f64], vertices: &[&[f64]]) -> Result<Vec<f64>> {
    let n = vertices.len();
    if n < 2 {
        return Err(Error::InvalidArgument("a simplex needs at least two vertices".into()));
    }
    let d = n - 1;
    if x.len() != d || vertices.iter().any(|v| v.len() != d) {
        return Err(Error::InvalidArgument(format!(
            "{n} vertices need {d}-dimensional points"
        )));
    }
    let last = vertices[d];
    let m = DMatrix::from_fn(d, d, |row, col| vertices[col][row] - last[row]);
    let rhs = DVector::from_fn(d, |row, _| x[row] - last[row]);
    let lu = m.lu();
    if lu.determinant().abs() < 1e-12 {
        return Err(Error::SingularSimplex);
    }
    let p = lu.solve(&rhs).ok_or(Error::SingularSimplex)?;
    let mut w: Vec<f64> = p.iter().copied().collect();
    w.push(1.0 - w.iter().sum::<f64>());
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSimplex);
    }
    Ok(w.into_iter().map(snap).collect())
}

pub fn is_inside(weights: &[f64]) -> bool {
    weights.iter().all(|&w| w >= -INSIDE)
}

/// `(w1, w_union, w2)` for a 1D union blend at position `alpha` from sample 1.
pub fn union_weights_1d(alpha: f64) -> (f64, f64, f64) {
    let w1 = (1.0 - 2.0 * alpha).clamp(0.0, 1.0);
    let w2 = (2.0 * alpha - 1.0).clamp(0.0, 1.0);
    (w1, 1.0 - w1 - w2, w2)
}

/// A blended data point: the union (pointwise min) of the listed simplex
/// vertices. Single vertices are the deformed inputs themselves.
pub type DataPoint = Vec<usize>;

/// Data points of a subdivided simplex and the sub-simplices over them.
#[derive(Clone, Debug, PartialEq)]
pub struct Subdivision {
    pub points: Vec<DataPoint>,
    pub cells: Vec<Vec<usize>>,
}

/// Subdivision with a union point at the center of every edge (and, for a
/// triangle, its center).
pub fn subdivision(vertices: usize) -> Result<Subdivision> {
    match vertices {
        2 => Ok(Subdivision {
            points: vec![vec![0], vec![0, 1], vec![1]],
            cells: vec![vec![0, 1], vec![1, 2]],
        }),
        3 => Ok(Subdivision {
            // v0, m01, v1, m12, v2, m02, center
            points: vec![vec![0], vec![0, 1], vec![1], vec![1, 2], vec![2], vec![0, 2], vec![0, 1, 2]],
            cells: vec![
                vec![0, 1, 5],
                vec![1, 2, 3],
                vec![3, 4, 5],
                vec![1, 3, 6],
                vec![3, 5, 6],
                vec![5, 1, 6],
            ],
        }),
        n => Err(Error::InvalidArgument(format!(
            "union blending supports 1D and 2D parameter spaces, got a simplex of {n} vertices"
        ))),
    }
}

/// Position of a data point in the parent's barycentric coordinates.
fn point_position(point: &DataPoint, vertices: usize) -> Vec<f64> {
    let mut pos = vec![0.0; vertices];
    for &v in point {
        pos[v] = 1.0 / point.len() as f64;
    }
    pos
}

/// Per-data-point weights; the inactive ones are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlendWeights {
    pub points: Vec<DataPoint>,
    pub weights: Vec<f64>,
}

impl BlendWeights {
    fn vertices_only(x: &[f64]) -> BlendWeights {
        BlendWeights {
            points: (0..x.len()).map(|i| vec![i]).collect(),
            weights: x.to_vec(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Union blend weights for barycentric `x` of the parent simplex.
pub fn union_weights(x: &[f64]) -> Result<BlendWeights> {
    let n = x.len();
    let sub = subdivision(n)?;
    let positions: Vec<Vec<f64>> = sub.points.iter().map(|p| point_position(p, n)).collect();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for (c, cell) in sub.cells.iter().enumerate() {
        let verts: Vec<&[f64]> = cell.iter().map(|&p| &positions[p][..n - 1]).collect();
        let local = barycentric(&x[..n - 1], &verts)?;
        if is_inside(&local) {
            best = Some((0.0, c, local));
            break;
        }
        let worst = local.iter().copied().fold(f64::INFINITY, f64::min);
        if best.as_ref().is_none_or(|(b, _, _)| worst > *b) {
            best = Some((worst, c, local));
        }
    }
    let (_, c, local) = best.expect("subdivision has cells");
    let clamped: Vec<f64> = local.iter().map(|w| w.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let mut weights = vec![0.0; sub.points.len()];
    for (&p, w) in sub.cells[c].iter().zip(&clamped) {
        weights[p] = w / total;
    }
    Ok(BlendWeights {
        points: sub.points,
        weights,
    })
}

/// Weight that the `j`-th link of vertex `k`'s chain is applied with:
/// `1 - x_k - ... - x_{k+j}` (indices modulo the vertex count).
pub fn chain_weights(x: &[f64], k: usize) -> Vec<f64> {
    let n = x.len();
    let mut acc = 1.0;
    (0..n - 1)
        .map(|j| {
            acc -= x[(k + j) % n];
            snap(acc.clamp(0.0, 1.0))
        })
        .collect()
}

/// Multiplies `deformed` so its total equals `original_mass`.
pub fn smoke_normalize(deformed: &ScalarField, original_mass: f64) -> Result<ScalarField> {
    if original_mass.is_nan() || original_mass <= 0.0 {
        return Err(Error::InvalidArgument(format!("mass {original_mass} must be positive")));
    }
    let current = deformed.sum();
    if current <= 0.0 {
        return Err(Error::InvalidArgument("deformed density has no mass".into()));
    }
    let factor = original_mass / current;
    Ok(deformed.map(|v| v * factor))
}

/// Union of two adjacent time slices, which hides flicker of thin features.
pub fn temporal_filter(slice: &ScalarField, next: &ScalarField) -> Result<ScalarField> {
    slice.zip_with(next, f64::min)
}

/// One simplex worth of inputs: `inputs[k]` and `cycle[k]`, the deformation
/// from input `k` to input `k + 1 (mod n)`.
pub struct SimplexData<'a> {
    pub inputs: Vec<&'a ScalarField>,
    pub cycle: Vec<&'a VectorField>,
    pub kind: DataKind,
}

impl SimplexData<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.inputs.len();
        if n < 2 || self.cycle.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{n} inputs need {n} cycle deformations, got {}",
                self.cycle.len()
            )));
        }
        for f in &self.inputs {
            check_same_dims(self.inputs[0].dims(), f.dims())?;
        }
        for u in &self.cycle {
            check_same_dims(self.inputs[0].dims(), u.dims())?;
        }
        Ok(())
    }

    /// Input `k` deformed towards barycentric position `x`, slab `t` only.
    fn deformed_slab(&self, k: usize, x: &[f64], t: usize) -> Result<ScalarField> {
        let n = self.inputs.len();
        let chain: Vec<&VectorField> = (0..n - 1).map(|j| self.cycle[(k + j) % n]).collect();
        let alphas = chain_weights(x, k);
        let slab = advect_chain_slab(self.inputs[k], &chain, &alphas, t)?;
        if self.kind == DataKind::SmokeDensity && alphas.iter().any(|&a| a != 0.0) {
            let original = self.inputs[k].last_axis_slab(t)?;
            return smoke_normalize(&slab, original.sum());
        }
        Ok(slab)
    }
}

fn blend_weights(x: &[f64], mode: Mode, kind: DataKind) -> Result<BlendWeights> {
    match mode {
        Mode::Linear => Ok(BlendWeights::vertices_only(x)),
        Mode::Union => {
            if kind == DataKind::SmokeDensity {
                return Err(Error::InvalidArgument("union blending needs SDF data".into()));
            }
            union_weights(x)
        }
        Mode::Nearest => {
            let mut nearest = 0;
            for (i, &w) in x.iter().enumerate() {
                if w > x[nearest] {
                    nearest = i;
                }
            }
            let mut one_hot = vec![0.0; x.len()];
            one_hot[nearest] = 1.0;
            Ok(BlendWeights::vertices_only(&one_hot))
        }
    }
}

/// Blends time slab `t` of a simplex at barycentric weights `x`.
///
/// Only data points with nonzero weight are evaluated, so a vertex query
/// returns the stored slice untouched.
pub fn synthesize_slab(data: &SimplexData, x: &[f64], t: usize, mode: Mode) -> Result<(ScalarField, BlendWeights)> {
    data.validate()?;
    if x.len() != data.inputs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} inputs",
            x.len(),
            data.inputs.len()
        )));
    }
    let blend = blend_weights(x, mode, data.kind)?;
    // The nearest input is deformed with the query's chain weights, not the
    // one-hot blend weights.
    let mut deformed: BTreeMap<usize, ScalarField> = BTreeMap::new();
    let mut out: Option<Vec<f64>> = None;
    let mut slab_dims: Option<Dims> = None;
    for (point, &w) in blend.points.iter().zip(&blend.weights) {
        if w == 0.0 {
            continue;
        }
        for &k in point {
            if let Entry::Vacant(slot) = deformed.entry(k) {
                slot.insert(data.deformed_slab(k, x, t)?);
            }
        }
        let value = union_of(point.iter().map(|k| &deformed[k]))?;
        if w == 1.0 {
            return Ok((value, blend));
        }
        slab_dims.get_or_insert_with(|| value.dims().clone());
        match out.as_mut() {
            None => out = Some(value.data().iter().map(|v| w * v).collect()),
            Some(acc) => {
                for (a, v) in acc.iter_mut().zip(value.data()) {
                    *a += w * v;
                }
            }
        }
    }
    let dims = slab_dims.ok_or_else(|| Error::InvalidArgument("all blend weights are zero".into()))?;
    Ok((ScalarField::new(dims, out.unwrap_or_default())?, blend))
}

fn union_of<'a>(mut fields: impl Iterator<Item = &'a ScalarField>) -> Result<ScalarField> {
    let first = fields.next().expect("data points are non-empty").clone();
    fields.try_fold(first, |acc, f| acc.zip_with(f, f64::min))
}

/// Two-input linear blend at weights `x = (x1, x2)`, slab `t`.
pub fn interp_linear_1d(
    b1: &ScalarField,
    b2: &ScalarField,
    u12: &VectorField,
    u21: &VectorField,
    x: [f64; 2],
    t: usize,
) -> Result<ScalarField> {
    let data = SimplexData {
        inputs: vec![b1, b2],
        cycle: vec![u12, u21],
        kind: DataKind::LiquidSdf,
    };
    Ok(synthesize_slab(&data, &x, t, Mode::Linear)?.0)
}

/// Two-input union blend at weights `x = (x1, x2)`, slab `t`.
pub fn interp_union_1d(
    b1: &ScalarField,
    b2: &ScalarField,
    u12: &VectorField,
    u21: &VectorField,
    x: [f64; 2],
    t: usize,
) -> Result<ScalarField> {
    let data = SimplexData {
        inputs: vec![b1, b2],
        cycle: vec![u12, u21],
        kind: DataKind::LiquidSdf,
    };
    Ok(synthesize_slab(&data, &x, t, Mode::Union)?.0)
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub name: String,
    pub r: Vec<f64>,
    /// Space-time volume; the last axis is time.
    pub data: ScalarField,
}

/// Result of one query against a [`ParameterSpace`].
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub slice: ScalarField,
    pub simplex: usize,
    /// Barycentric weights in the simplex's vertex order.
    pub barycentric: Vec<f64>,
    pub blend: BlendWeights,
}

/// Samples, their simplices and the deformations along each simplex cycle.
#[derive(Clone, Debug)]
pub struct ParameterSpace {
    pub name: String,
    pub kind: DataKind,
    /// Copies of the first frame prepended along the time axis.
    pub frames_repeated: usize,
    samples: Vec<Sample>,
    simplices: Vec<Vec<usize>>,
    deformations: BTreeMap<(usize, usize), Deformation>,
}

impl ParameterSpace {
    /// Deformations whose resolution differs from the data are resampled.
    pub fn new(
        name: impl Into<String>,
        kind: DataKind,
        frames_repeated: usize,
        samples: Vec<Sample>,
        simplices: Vec<Vec<usize>>,
        deformations: Vec<(usize, usize, Deformation)>,
    ) -> Result<ParameterSpace> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("parameter space has no samples".into()))?;
        let dims = first.data.dims().clone();
        let param_dim = first.r.len();
        if param_dim == 0 || param_dim > 2 {
            return Err(Error::InvalidArgument(format!(
                "parameter vectors must have 1 or 2 entries, got {param_dim}"
            )));
        }
        for s in &samples {
            check_same_dims(&dims, s.data.dims())?;
            if s.r.len() != param_dim {
                return Err(Error::InvalidArgument(format!("sample `{}` has a mismatched parameter", s.name)));
            }
        }
        let mut table = BTreeMap::new();
        for (from, to, def) in deformations {
            if from >= samples.len() || to >= samples.len() {
                return Err(Error::InvalidArgument(format!("deformation {from}->{to} names a missing sample")));
            }
            table.insert((from, to), def.resampled(&dims)?);
        }
        if simplices.is_empty() {
            return Err(Error::InvalidArgument("parameter space has no simplices".into()));
        }
        for simplex in &simplices {
            if simplex.len() != param_dim + 1 {
                return Err(Error::InvalidArgument(format!(
                    "simplex {simplex:?} needs {} vertices",
                    param_dim + 1
                )));
            }
            if simplex.iter().any(|&v| v >= samples.len()) {
                return Err(Error::InvalidArgument(format!("simplex {simplex:?} names a missing sample")));
            }
            let verts: Vec<&[f64]> = simplex.iter().map(|&v| samples[v].r.as_slice()).collect();
            barycentric(verts[0], &verts)?;
            for k in 0..simplex.len() {
                let edge = (simplex[k], simplex[(k + 1) % simplex.len()]);
                if !table.contains_key(&edge) {
                    return Err(Error::InvalidArgument(format!(
                        "simplex {simplex:?} lacks deformation {}->{}",
                        edge.0, edge.1
                    )));
                }
            }
        }
        Ok(ParameterSpace {
            name: name.into(),
            kind,
            frames_repeated,
            samples,
            simplices,
            deformations: table,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn simplices(&self) -> &[Vec<usize>] {
        &self.simplices
    }

    pub fn deformation(&self, from: usize, to: usize) -> Option<&Deformation> {
        self.deformations.get(&(from, to))
    }

    pub fn dims(&self) -> &Dims {
        self.samples[0].data.dims()
    }

    pub fn parameter_dim(&self) -> usize {
        self.samples[0].r.len()
    }

    pub fn time_extent(&self) -> usize {
        let dims = self.dims();
        dims.extent(dims.ndim() - 1)
    }

    pub fn barycentric_in(&self, simplex: usize, x_tilde: &[f64]) -> Result<Vec<f64>> {
        let s = self
            .simplices
            .get(simplex)
            .ok_or_else(|| Error::InvalidArgument(format!("no simplex {simplex}")))?;
        let verts: Vec<&[f64]> = s.iter().map(|&v| self.samples[v].r.as_slice()).collect();
        barycentric(x_tilde, &verts)
    }

    /// First simplex containing `x_tilde`, with its barycentric weights.
    pub fn locate(&self, x_tilde: &[f64]) -> Result<(usize, Vec<f64>)> {
        if x_tilde.len() != self.parameter_dim() || x_tilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "expected {} finite parameter values",
                self.parameter_dim()
            )));
        }
        for i in 0..self.simplices.len() {
            let w = self.barycentric_in(i, x_tilde)?;
            if is_inside(&w) {
                return Ok((i, w));
            }
        }
        Err(Error::OutsideHull(format!("{x_tilde:?}")))
    }

    fn check_time(&self, t: usize) -> Result<()> {
        if t >= self.time_extent() {
            return Err(Error::InvalidArgument(format!(
                "time index {t} out of range 0..{}",
                self.time_extent()
            )));
        }
        Ok(())
    }

    /// Slab `t` of the in-between at parameter `x_tilde`.
    pub fn synthesize(&self, x_tilde: &[f64], t: usize, mode: Mode) -> Result<Synthesis> {
        self.check_time(t)?;
        let (simplex, x) = self.locate(x_tilde)?;
        self.synthesize_weights(simplex, &x, t, mode)
    }

    /// Like [`ParameterSpace::synthesize`] but from an explicit simplex, for
    /// points on a shared face.
    pub fn synthesize_in(&self, simplex: usize, x_tilde: &[f64], t: usize, mode: Mode) -> Result<Synthesis> {
        self.check_time(t)?;
        let x = self.barycentric_in(simplex, x_tilde)?;
        if !is_inside(&x) {
            return Err(Error::OutsideHull(format!("{x_tilde:?} is not in simplex {simplex}")));
        }
        self.synthesize_weights(simplex, &x, t, mode)
    }

    fn synthesize_weights(&self, simplex: usize, x: &[f64], t: usize, mode: Mode) -> Result<Synthesis> {
        let s = &self.simplices[simplex];
        let data = SimplexData {
            inputs: s.iter().map(|&v| &self.samples[v].data).collect(),
            cycle: (0..s.len())
                .map(|k| self.deformations[&(s[k], s[(k + 1) % s.len()])].field())
                .collect(),
            kind: self.kind,
        };
        let (slice, blend) = synthesize_slab(&data, x, t, mode)?;
        Ok(Synthesis {
            slice,
            simplex,
            barycentric: x.to_vec(),
            blend,
        })
    }

    /// Total of every input slab at `t`, for mass bookkeeping.
    pub fn input_masses(&self, t: usize) -> Result<Vec<f64>> {
        self.samples
            .iter()
            .map(|s| Ok(det_sum(s.data.last_axis_slab(t)?.data())))
            .collect()
    }
}
