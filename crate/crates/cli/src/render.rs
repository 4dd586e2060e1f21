use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use smokestep::fields::{project_mean, Axis, Field, ScalarField};

use crate::CliError;

/// Grayscale bytes of a planar density, scaled so the maximum maps to 255.
pub fn to_gray(rho: &ScalarField) -> Vec<u8> {
    let max = rho.values().iter().cloned().fold(0.0f32, f32::max);
    let (w, h) = (rho.spec().dims()[0], rho.spec().dims()[1]);
    let mut out = vec![0u8; w * h];
    if max <= 0.0 {
        return out;
    }
    // Row 0 of the image is the top of the domain.
    for y in 0..h {
        for x in 0..w {
            let v = rho.at(&[x, y]).max(0.0) / max;
            out[(h - 1 - y) * w + x] = (v * 255.0).round() as u8;
        }
    }
    out
}

pub fn planar(rho: &ScalarField, axis: Axis) -> smokestep::Result<ScalarField> {
    if rho.spec().d() == 3 {
        project_mean(rho, axis)
    } else {
        Ok(rho.clone())
    }
}

pub fn write_png(path: &Path, rho: &ScalarField) -> Result<(), CliError> {
    let (w, h) = (rho.spec().dims()[0], rho.spec().dims()[1]);
    let file = File::create(path).map_err(|e| smokestep::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&to_gray(rho))?;
    Ok(())
}
