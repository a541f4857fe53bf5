//! Grayscale images of 2D slices, for previews only.

use crate::error::{Error, Result};
use crate::grid::{Dims, ScalarField};
use crate::interpolation::DataKind;

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    /// Row-major, top row first.
    pub pixels: Vec<u8>,
}

/// Drops `axis` from a 3D field by taking the plane at `index`.
pub fn plane(field: &ScalarField, axis: usize, index: usize) -> Result<ScalarField> {
    let dims = field.dims();
    if dims.ndim() != 3 || axis > 2 || index >= dims.extent(axis) {
        return Err(Error::InvalidArgument(format!(
            "cannot take plane {index} across axis {axis} of {:?}",
            dims.extents()
        )));
    }
    let keep: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let out = Dims::new(&[dims.extent(keep[0]), dims.extent(keep[1])])?;
    Ok(ScalarField::from_fn(out, |c| {
        let mut full = [0; 3];
        full[axis] = index;
        full[keep[0]] = c[0];
        full[keep[1]] = c[1];
        field.get(&full)
    }))
}

/// SDF slices are filled inside with a one-cell linear ramp across the
/// surface; densities map 0..1 to black..white. Axis 1 points up.
pub fn rasterize(slice: &ScalarField, kind: DataKind) -> Result<GrayImage> {
    let dims = slice.dims();
    if dims.ndim() != 2 {
        return Err(Error::InvalidArgument(format!("cannot rasterize {:?}", dims.extents())));
    }
    let (w, h) = (dims.extent(0), dims.extent(1));
    let mut pixels = Vec::with_capacity(w * h);
    for row in 0..h {
        let y = h - 1 - row;
        for x in 0..w {
            let v = slice.get(&[x, y]);
            let level = match kind {
                DataKind::LiquidSdf => 0.5 - 0.5 * v,
                DataKind::SmokeDensity => v,
            };
            pixels.push((level.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(GrayImage {
        width: w as u32,
        height: h as u32,
        pixels,
    })
}
