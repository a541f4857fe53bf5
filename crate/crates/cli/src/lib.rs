//! Command line front end and HTTP service for `flof-core`.

pub mod commands;
pub mod server;

use std::io::Cursor;

use anyhow::Result;
use flof_core::pipeline::raster::GrayImage;

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let buf = image::GrayImage::from_raw(img.width, img.height, img.pixels.clone())
        .ok_or_else(|| anyhow::anyhow!("pixel buffer does not match {}x{}", img.width, img.height))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}
