//! Dense N-dimensional grids with unit cell size.
//!
//! Cells are addressed by integer coordinates; axis 0 varies fastest in the
//! flat storage. Sample positions are given in cell units, with the center of
//! cell `i` at coordinate `i`. Space and time axes are treated identically:
//! neighbors along any axis are one unit apart.
//!
//! Vector fields store one component per axis, interleaved per cell, and
//! express displacements in cells.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_same_dims, Error, Result};

/// Largest supported number of axes (3D space + time).
pub const MAX_AXES: usize = 4;

/// Cell coordinates; entries beyond `ndim` are unused.
pub type Coords = [usize; MAX_AXES];

const SUM_CHUNK: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Dims {
    extents: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl TryFrom<Vec<usize>> for Dims {
    type Error = Error;

    fn try_from(extents: Vec<usize>) -> Result<Self> {
        Dims::new(&extents)
    }
}

impl From<Dims> for Vec<usize> {
    fn from(dims: Dims) -> Self {
        dims.extents
    }
}

impl Dims {
    pub fn new(extents: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.len() > MAX_AXES {
            return Err(Error::InvalidDims(format!(
                "expected 1 to {MAX_AXES} axes, got {}",
                extents.len()
            )));
        }
        if extents.contains(&0) {
            return Err(Error::InvalidDims(format!("zero extent in {extents:?}")));
        }
        let mut strides = Vec::with_capacity(extents.len());
        let mut len = 1usize;
        for &e in extents {
            strides.push(len);
            len = len
                .checked_mul(e)
                .ok_or_else(|| Error::InvalidDims(format!("{extents:?} overflows")))?;
        }
        Ok(Dims {
            extents: extents.to_vec(),
            strides,
            len,
        })
    }

    pub fn ndim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn extent(&self, axis: usize) -> usize {
        self.extents[axis]
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Number of cells.
    pub fn cell_count(&self) -> usize {
        self.len
    }

    pub fn min_extent(&self) -> usize {
        self.extents.iter().copied().min().unwrap_or(0)
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.ndim());
        coords
            .iter()
            .zip(&self.strides)
            .map(|(c, s)| c * s)
            .sum()
    }

    pub fn coords(&self, mut index: usize) -> Coords {
        let mut out = [0; MAX_AXES];
        for (axis, &e) in self.extents.iter().enumerate() {
            out[axis] = index % e;
            index /= e;
        }
        out
    }

    /// True if the cell touches any face of the domain.
    pub fn is_boundary(&self, index: usize) -> bool {
        let c = self.coords(index);
        self.extents
            .iter()
            .enumerate()
            .any(|(axis, &e)| c[axis] == 0 || c[axis] + 1 == e)
    }

    /// Half resolution, rounding odd extents up.
    pub fn halved(&self) -> Dims {
        let e: Vec<usize> = self.extents.iter().map(|e| e.div_ceil(2)).collect();
        Dims::new(&e).expect("halving keeps extents positive")
    }

    pub fn doubled(&self) -> Dims {
        let e: Vec<usize> = self.extents.iter().map(|e| e * 2).collect();
        Dims::new(&e).expect("doubling keeps extents positive")
    }

    /// Drops the last axis.
    pub fn without_last(&self) -> Result<Dims> {
        if self.ndim() < 2 {
            return Err(Error::InvalidDims("cannot drop the only axis".into()));
        }
        Dims::new(&self.extents[..self.ndim() - 1])
    }

    /// Appends a new last axis.
    pub fn with_last(&self, extent: usize) -> Result<Dims> {
        let mut e = self.extents.clone();
        e.push(extent);
        Dims::new(&e)
    }
}

fn check_finite(data: &[f64]) -> Result<()> {
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("value {} at flat index {i}", data[i])));
    }
    Ok(())
}

/// Sum with a fixed reduction tree, so results do not depend on the thread count.
pub(crate) fn det_sum(values: &[f64]) -> f64 {
    values
        .par_chunks(SUM_CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

pub(crate) fn det_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.par_chunks(SUM_CHUNK)
        .zip(b.par_chunks(SUM_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Dense scalar grid (signed distances, densities, blend results).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    dims: Dims,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.cell_count() {
            return Err(Error::InvalidDims(format!(
                "{} values for {} cells",
                data.len(),
                dims.cell_count()
            )));
        }
        check_finite(&data)?;
        Ok(ScalarField { dims, data })
    }

    /// Skips the finiteness scan; callers guarantee the invariant.
    pub(crate) fn from_raw(dims: Dims, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.cell_count());
        ScalarField { dims, data }
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        assert!(value.is_finite());
        let data = vec![value; dims.cell_count()];
        ScalarField { dims, data }
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::filled(dims, 0.0)
    }

    /// Evaluates `f` at every cell. Panics if `f` returns a non-finite value.
    pub fn from_fn<F>(dims: Dims, f: F) -> Self
    where
        F: Fn(&[usize]) -> f64 + Sync,
    {
        let n = dims.ndim();
        let data: Vec<f64> = (0..dims.cell_count())
            .into_par_iter()
            .map(|i| {
                let c = dims.coords(i);
                f(&c[..n])
            })
            .collect();
        check_finite(&data).expect("from_fn produced a non-finite value");
        ScalarField { dims, data }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.data[self.dims.index(coords)]
    }

    pub fn at(&self, index: usize) -> f64 {
        self.data[index]
    }

    /// Multilinear interpolation; positions are clamped to the domain.
    pub fn sample(&self, pos: &[f64]) -> f64 {
        let mut out = [0.0];
        sample_into(&self.dims, &self.data, 1, pos, &mut out);
        out[0]
    }

    pub fn map<F>(&self, f: F) -> ScalarField
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let data: Vec<f64> = self.data.par_iter().map(|&v| f(v)).collect();
        check_finite(&data).expect("map produced a non-finite value");
        ScalarField::from_raw(self.dims.clone(), data)
    }

    /// Pointwise combination of two fields of equal dims.
    pub fn zip_with<F>(&self, other: &ScalarField, f: F) -> Result<ScalarField>
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        check_same_dims(&self.dims, &other.dims)?;
        let data: Vec<f64> = self
            .data
            .par_iter()
            .zip(other.data.par_iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        ScalarField::new(self.dims.clone(), data)
    }

    pub fn sum(&self) -> f64 {
        det_sum(&self.data)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn gradient(&self) -> Result<VectorField> {
        gradient(self)
    }

    pub fn blurred(&self, sigma: f64) -> ScalarField {
        ScalarField::from_raw(self.dims.clone(), blur_channels(&self.dims, &self.data, 1, sigma))
    }

    /// Box-averaged half-resolution copy. Values are not rescaled.
    pub fn downsampled(&self) -> Result<ScalarField> {
        let (dims, data) = downsample_channels(&self.dims, &self.data, 1)?;
        Ok(ScalarField::from_raw(dims, data))
    }

    pub fn resampled(&self, dims: &Dims) -> Result<ScalarField> {
        let data = resample_channels(&self.dims, &self.data, 1, dims)?;
        Ok(ScalarField::from_raw(dims.clone(), data))
    }

    /// The slab at integer position `index` along the last axis.
    pub fn last_axis_slab(&self, index: usize) -> Result<ScalarField> {
        let inner = self.dims.without_last()?;
        let extent = self.dims.extent(self.dims.ndim() - 1);
        if index >= extent {
            return Err(Error::InvalidArgument(format!(
                "slab {index} out of range 0..{extent}"
            )));
        }
        let n = inner.cell_count();
        let data = self.data[index * n..(index + 1) * n].to_vec();
        Ok(ScalarField::from_raw(inner, data))
    }

    /// Stacks equally sized fields along a new last axis.
    pub fn stack(slabs: &[ScalarField]) -> Result<ScalarField> {
        let first = slabs
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to stack".into()))?;
        let dims = first.dims.with_last(slabs.len())?;
        let mut data = Vec::with_capacity(dims.cell_count());
        for s in slabs {
            check_same_dims(&first.dims, &s.dims)?;
            data.extend_from_slice(&s.data);
        }
        Ok(ScalarField::from_raw(dims, data))
    }
}

/// Dense field of N-component vectors on an N-axis grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    dims: Dims,
    data: Vec<f64>,
}

impl AsRef<VectorField> for VectorField {
    fn as_ref(&self) -> &VectorField {
        self
    }
}

impl VectorField {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        let expected = dims.cell_count() * dims.ndim();
        if data.len() != expected {
            return Err(Error::InvalidDims(format!(
                "{} values for {} cells of {} components",
                data.len(),
                dims.cell_count(),
                dims.ndim()
            )));
        }
        check_finite(&data)?;
        Ok(VectorField { dims, data })
    }

    pub(crate) fn from_raw(dims: Dims, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.cell_count() * dims.ndim());
        VectorField { dims, data }
    }

    pub fn zeros(dims: Dims) -> Self {
        let data = vec![0.0; dims.cell_count() * dims.ndim()];
        VectorField { dims, data }
    }

    /// Same vector at every cell.
    pub fn uniform(dims: Dims, v: &[f64]) -> Result<Self> {
        if v.len() != dims.ndim() {
            return Err(Error::InvalidArgument(format!(
                "vector of length {} for {} axes",
                v.len(),
                dims.ndim()
            )));
        }
        let data = v
            .iter()
            .copied()
            .cycle()
            .take(dims.cell_count() * dims.ndim())
            .collect();
        VectorField::new(dims, data)
    }

    /// `f` writes the vector for the given cell into its output slice.
    pub fn from_fn<F>(dims: Dims, f: F) -> Self
    where
        F: Fn(&[usize], &mut [f64]) + Sync,
    {
        let n = dims.ndim();
        let mut data = vec![0.0; dims.cell_count() * n];
        data.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
            let c = dims.coords(i);
            f(&c[..n], out);
        });
        check_finite(&data).expect("from_fn produced a non-finite value");
        VectorField { dims, data }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn components(&self) -> usize {
        self.dims.ndim()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Vector stored at flat cell index `index`.
    pub fn at(&self, index: usize) -> &[f64] {
        let n = self.components();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn get(&self, coords: &[usize]) -> &[f64] {
        self.at(self.dims.index(coords))
    }

    pub fn sample(&self, pos: &[f64], out: &mut [f64]) {
        sample_into(&self.dims, &self.data, self.components(), pos, out);
    }

    pub fn scaled(&self, factor: f64) -> VectorField {
        let data = self.data.par_iter().map(|v| v * factor).collect();
        VectorField::from_raw(self.dims.clone(), data)
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        check_same_dims(&self.dims, &other.dims)?;
        let data = self
            .data
            .par_iter()
            .zip(other.data.par_iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(VectorField::from_raw(self.dims.clone(), data))
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Copy with every boundary cell set to zero.
    pub fn with_zero_boundary(&self) -> VectorField {
        let n = self.components();
        let mut data = self.data.clone();
        data.par_chunks_mut(n).enumerate().for_each(|(i, v)| {
            if self.dims.is_boundary(i) {
                v.fill(0.0);
            }
        });
        VectorField::from_raw(self.dims.clone(), data)
    }

    pub fn blurred(&self, sigma: f64) -> VectorField {
        let n = self.components();
        VectorField::from_raw(self.dims.clone(), blur_channels(&self.dims, &self.data, n, sigma))
    }

    /// Half resolution. Components are halved because cells double in size.
    pub fn downsampled(&self) -> Result<VectorField> {
        let n = self.components();
        let (dims, mut data) = downsample_channels(&self.dims, &self.data, n)?;
        data.iter_mut().for_each(|v| *v *= 0.5);
        Ok(VectorField::from_raw(dims, data))
    }

    /// Double resolution; components are doubled to stay in cell units.
    pub fn upsampled(&self) -> VectorField {
        self.resampled(&self.dims.doubled())
            .expect("doubled dims have the same axis count")
    }

    /// Resamples onto `dims`, rescaling each component by the cell-count ratio
    /// of its axis.
    pub fn resampled(&self, dims: &Dims) -> Result<VectorField> {
        let n = self.components();
        let mut data = resample_channels(&self.dims, &self.data, n, dims)?;
        let ratios: Vec<f64> = (0..n)
            .map(|a| dims.extent(a) as f64 / self.dims.extent(a) as f64)
            .collect();
        data.par_chunks_mut(n).for_each(|v| {
            for (c, r) in v.iter_mut().zip(&ratios) {
                *c *= r;
            }
        });
        Ok(VectorField::from_raw(dims.clone(), data))
    }
}

/// Multilinear interpolation of `channels` interleaved values per cell.
pub(crate) fn sample_into(dims: &Dims, data: &[f64], channels: usize, pos: &[f64], out: &mut [f64]) {
    let n = dims.ndim();
    debug_assert!(pos.len() >= n);
    let mut base = 0usize;
    let mut step = [0usize; MAX_AXES];
    let mut frac = [0.0f64; MAX_AXES];
    for axis in 0..n {
        let ext = dims.extent(axis);
        let p = pos[axis].clamp(0.0, (ext - 1) as f64);
        let i = (p.floor() as usize).min(ext - 1);
        frac[axis] = p - i as f64;
        base += i * dims.stride(axis);
        step[axis] = if i + 1 < ext { dims.stride(axis) } else { 0 };
    }
    let mut first = true;
    for corner in 0..(1usize << n) {
        let mut w = 1.0;
        let mut idx = base;
        for axis in 0..n {
            if corner >> axis & 1 == 1 {
                w *= frac[axis];
                idx += step[axis];
            } else {
                w *= 1.0 - frac[axis];
            }
        }
        if w == 0.0 {
            continue;
        }
        let src = &data[idx * channels..(idx + 1) * channels];
        if first {
            for (o, s) in out.iter_mut().zip(src) {
                *o = w * s;
            }
            first = false;
        } else {
            for (o, s) in out.iter_mut().zip(src) {
                *o += w * s;
            }
        }
    }
}

/// Central differences inside, one-sided differences on the faces.
pub fn gradient(field: &ScalarField) -> Result<VectorField> {
    let dims = field.dims();
    if dims.min_extent() < 2 {
        return Err(Error::InvalidDims(format!(
            "gradient needs every extent >= 2, got {:?}",
            dims.extents()
        )));
    }
    let f = field.data();
    let n = dims.ndim();
    let mut data = vec![0.0; dims.cell_count() * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, g)| {
        let c = dims.coords(i);
        for axis in 0..n {
            let s = dims.stride(axis);
            let e = dims.extent(axis);
            g[axis] = if c[axis] == 0 {
                f[i + s] - f[i]
            } else if c[axis] + 1 == e {
                f[i] - f[i - s]
            } else {
                0.5 * (f[i + s] - f[i - s])
            };
        }
    });
    Ok(VectorField::from_raw(dims.clone(), data))
}

/// Normalized Gaussian taps for offsets `-r..=r` with `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Half-sample symmetric extension: `.. b a | a b c .. | c b ..`.
fn reflect(j: i64, n: usize) -> usize {
    let n = n as i64;
    let m = j.rem_euclid(2 * n);
    (if m >= n { 2 * n - 1 - m } else { m }) as usize
}

/// Separable Gaussian blur with mirrored boundaries.
///
/// The mirror extension keeps constant fields constant and preserves the
/// field sum exactly (up to rounding) for any kernel radius.
pub(crate) fn blur_channels(dims: &Dims, data: &[f64], channels: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let mut src = data.to_vec();
    let mut dst = vec![0.0; data.len()];
    for axis in 0..dims.ndim() {
        let ext = dims.extent(axis);
        if ext == 1 {
            continue;
        }
        let stride = dims.stride(axis);
        dst.par_chunks_mut(channels).enumerate().for_each(|(i, out)| {
            let c = dims.coords(i)[axis] as i64;
            let line_start = i - c as usize * stride;
            out.fill(0.0);
            for (k, w) in kernel.iter().enumerate() {
                let j = reflect(c + k as i64 - r, ext);
                let idx = line_start + j * stride;
                for (o, s) in out.iter_mut().zip(&src[idx * channels..(idx + 1) * channels]) {
                    *o += w * s;
                }
            }
        });
        std::mem::swap(&mut src, &mut dst);
    }
    src
}

/// Box average over the `2^N` fine cells of each coarse cell, done as one
/// pairwise pass per axis so constant fields stay bit-exact.
pub(crate) fn downsample_channels(
    dims: &Dims,
    data: &[f64],
    channels: usize,
) -> Result<(Dims, Vec<f64>)> {
    if dims.min_extent() < 2 {
        return Err(Error::InvalidDims(format!(
            "cannot downsample extents {:?}",
            dims.extents()
        )));
    }
    let mut cur_dims = dims.clone();
    let mut cur = data.to_vec();
    for axis in 0..dims.ndim() {
        let mut ext = cur_dims.extents().to_vec();
        ext[axis] = ext[axis].div_ceil(2);
        let next_dims = Dims::new(&ext)?;
        let fine_ext = cur_dims.extent(axis);
        let fine_stride = cur_dims.stride(axis);
        let mut next = vec![0.0; next_dims.cell_count() * channels];
        next.par_chunks_mut(channels).enumerate().for_each(|(i, o)| {
            let c = next_dims.coords(i);
            let mut fine = c;
            fine[axis] = 2 * c[axis];
            let a = cur_dims.index(&fine[..dims.ndim()]);
            let src_a = &cur[a * channels..(a + 1) * channels];
            if fine[axis] + 1 < fine_ext {
                let b = a + fine_stride;
                let src_b = &cur[b * channels..(b + 1) * channels];
                for ((o, x), y) in o.iter_mut().zip(src_a).zip(src_b) {
                    *o = 0.5 * (x + y);
                }
            } else {
                o.copy_from_slice(src_a);
            }
        });
        cur_dims = next_dims;
        cur = next;
    }
    Ok((cur_dims, cur))
}

/// Cell-centered multilinear resampling between resolutions of one domain.
pub(crate) fn resample_channels(
    src: &Dims,
    data: &[f64],
    channels: usize,
    dst: &Dims,
) -> Result<Vec<f64>> {
    if src.ndim() != dst.ndim() {
        return Err(Error::DimMismatch {
            left: src.extents().to_vec(),
            right: dst.extents().to_vec(),
        });
    }
    let n = src.ndim();
    let scale: Vec<f64> = (0..n)
        .map(|a| src.extent(a) as f64 / dst.extent(a) as f64)
        .collect();
    let mut out = vec![0.0; dst.cell_count() * channels];
    out.par_chunks_mut(channels).enumerate().for_each(|(i, o)| {
        let c = dst.coords(i);
        let mut pos = [0.0; MAX_AXES];
        for axis in 0..n {
            pos[axis] = (c[axis] as f64 + 0.5) * scale[axis] - 0.5;
        }
        sample_into(src, data, channels, &pos[..n], o);
    });
    Ok(out)
}
