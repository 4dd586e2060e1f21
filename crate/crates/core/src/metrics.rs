//! Error measures and report files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correction::{fuse_density, CorrectionNet};
use crate::datagen::PairSample;
use crate::error::{Error, Result};
use crate::fields::{Axis, Field, ScalarField};
use crate::losses::{perceptual_loss_2d, perceptual_loss_axis, FeatureExtractor, ImageScaling};

pub fn mse<F: Field>(a: &F, b: &F) -> Result<f64> {
    a.spec().ensure_same(b.spec())?;
    if a.components() != b.components() {
        return Err(Error::Dimension(format!("{} vs {} components", a.components(), b.components())));
    }
    let n = a.values().len() as f64;
    Ok(a.values().iter().zip(b.values()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>() / n)
}

/// Percentage of `before` removed by `after`.
pub fn reduction_rate(before: f64, after: f64) -> Result<f64> {
    if !(before > 0.0) {
        return Err(Error::Argument(format!("reduction rate needs a positive baseline, got {before}")));
    }
    Ok(100.0 * (before - after) / before)
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable filter keeping only windows that fit inside the image.
fn filter_valid(x: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let ow = w - n + 1;
    let oh = h - n + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for ox in 0..ow {
            rows[y * ow + ox] = (0..n).map(|i| k[i] * x[y * w + ox + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            out[oy * ow + ox] = (0..n).map(|i| k[i] * rows[(oy + i) * ow + ox]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5) and
/// dynamic range 1.
pub fn ssim(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.spec().ensure_same(b.spec())?;
    if a.spec().d() != 2 {
        return Err(Error::Dimension("SSIM is defined for 2D fields only".into()));
    }
    let (w, h) = (a.spec().dims()[0], a.spec().dims()[1]);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Dimension(format!("SSIM needs at least {SSIM_WINDOW} cells per axis")));
    }
    let k = gaussian_window();
    let x: Vec<f64> = a.values().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.values().iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let (mx, _, _) = filter_valid(&x, w, h, &k);
    let (my, _, _) = filter_valid(&y, w, h, &k);
    let (sxx, _, _) = filter_valid(&xx, w, h, &k);
    let (syy, _, _) = filter_valid(&yy, w, h, &k);
    let (sxy, _, _) = filter_valid(&xy, w, h, &k);
    Ok(ssim_mean(&mx, &my, &sxx, &syy, &sxy))
}

fn ssim_mean(mx: &[f64], my: &[f64], sxx: &[f64], syy: &[f64], sxy: &[f64]) -> f64 {
    let c1 = 0.01f64.powi(2);
    let c2 = 0.03f64.powi(2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cxy = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    total / mx.len() as f64
}

/// Feature-space distance of two density fields; volumetric fields average
/// the three axis projections.
pub fn perceptual_distance(a: &ScalarField, b: &ScalarField, phi: &FeatureExtractor) -> Result<f64> {
    if a.spec().d() == 2 {
        return perceptual_loss_2d(a, b, phi, ImageScaling::Density);
    }
    let mut s = 0.0;
    for axis in Axis::ALL {
        s += perceptual_loss_axis(a, b, phi, ImageScaling::Density, axis)?;
    }
    Ok(s / 3.0)
}

/// MSE of each predicted frame against its ground-truth counterpart.
pub fn per_frame_curve(pred: &[ScalarField], gt: &[ScalarField]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::Argument(format!("{} predicted frames vs {} reference frames", pred.len(), gt.len())));
    }
    pred.iter().zip(gt).map(|(p, g)| mse(p, g)).collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionRow {
    pub field: String,
    pub before: f64,
    pub after: f64,
    pub reduced_pct: f64,
}

impl ReductionRow {
    pub fn new(field: &str, before: f64, after: f64) -> Result<Self> {
        Ok(ReductionRow {
            field: field.into(),
            before,
            after,
            reduced_pct: reduction_rate(before, after)?,
        })
    }
}

/// Single-step density and velocity MSE before and after correction,
/// averaged over `pairs`.
pub fn correction_errors(net: &CorrectionNet, pairs: &[PairSample]) -> Result<[ReductionRow; 2]> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no pairs to evaluate".into()));
    }
    let mut acc = [0.0f64; 4];
    for p in pairs {
        let h = net.forward(&p.rho0, &p.vel0, &p.rho_big, &p.vel_big)?;
        let rho = fuse_density(&p.rho_big, &h.flow, &h.rho_tilde, &h.alpha)?.clamp_nonnegative();
        acc[0] += mse(&p.rho_big, &p.rho_gt)?;
        acc[1] += mse(&rho, &p.rho_gt)?;
        acc[2] += mse(&p.vel_big, &p.vel_gt)?;
        acc[3] += mse(&h.v_hat, &p.vel_gt)?;
    }
    let n = pairs.len() as f64;
    Ok([
        ReductionRow::new("density", acc[0] / n, acc[1] / n)?,
        ReductionRow::new("velocity", acc[2] / n, acc[3] / n)?,
    ])
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let mut f = fs::File::create(path).map_err(Error::io(path))?;
    for l in lines {
        writeln!(f, "{l}").map_err(Error::io(path))?;
    }
    Ok(())
}

pub fn write_table2(path: &Path, rows: &[ReductionRow]) -> Result<()> {
    let mut lines = vec!["field,before,after,reduced_pct".to_string()];
    lines.extend(rows.iter().map(|r| format!("{},{},{},{}", r.field, r.before, r.after, r.reduced_pct)));
    write_lines(path, &lines)
}

/// One column per method, one row per frame (frames numbered from 1).
pub fn write_curve(path: &Path, methods: &[(String, Vec<f64>)]) -> Result<()> {
    let len = methods.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    if methods.iter().any(|(_, v)| v.len() != len) {
        return Err(Error::Argument("curves differ in length".into()));
    }
    let mut lines = vec![std::iter::once("frame".to_string())
        .chain(methods.iter().map(|(n, _)| n.clone()))
        .collect::<Vec<_>>()
        .join(",")];
    for i in 0..len {
        let mut l = (i + 1).to_string();
        for (_, v) in methods {
            l.push_str(&format!(",{}", v[i]));
        }
        lines.push(l);
    }
    write_lines(path, &lines)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: String,
    pub mse: f64,
    pub ssim: Option<f64>,
    pub perceptual: Option<f64>,
}

pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut lines = vec!["method,mse,ssim,perceptual_distance".to_string()];
    lines.extend(
        rows.iter()
            .map(|r| format!("{},{},{},{}", r.method, r.mse, opt(r.ssim), opt(r.perceptual))),
    );
    write_lines(path, &lines)
}
