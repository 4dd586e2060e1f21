//! Training objectives and the fixed feature extractor behind the
//! perceptual terms.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smokestep_tensor::{lit, Bound, Graph, ParamSet, Scalar, Tensor, Var};

use crate::error::{Error, Result};
use crate::fields::{gradient, Axis, Field, ScalarField, VectorField};
use crate::interpolation::{second_step_interpolate, InterpNet};

/// Weights of the velocity and density objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub rv: f64,
    pub tv: f64,
    pub rr: f64,
    pub tr: f64,
    pub g: f64,
    pub i: f64,
    pub p: f64,
}

impl LossWeights {
    pub fn for_dims(d: usize) -> Self {
        LossWeights {
            rv: 20.0,
            tv: 20.0,
            rr: 50.0,
            tr: 50.0,
            g: 50.0,
            i: 1.0,
            p: if d == 3 { 1e-6 } else { 0.1 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.rv, self.tv, self.rr, self.tr, self.g, self.i, self.p];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// Unweighted values of every term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub rv: f64,
    pub g: f64,
    pub pv: f64,
    pub tv: f64,
    pub rr: f64,
    pub i: f64,
    pub pr: f64,
    pub tr: f64,
}

impl LossTerms {
    pub const NAMES: [&'static str; 8] = ["l_rv", "l_g", "l_pv", "l_tv", "l_rr", "l_i", "l_pr", "l_tr"];

    pub fn as_array(&self) -> [f64; 8] {
        [self.rv, self.g, self.pv, self.tv, self.rr, self.i, self.pr, self.tr]
    }

    pub fn velocity(&self, w: &LossWeights) -> f64 {
        w.rv * self.rv + w.g * self.g + w.p * self.pv + w.tv * self.tv
    }

    pub fn density(&self, w: &LossWeights) -> f64 {
        w.rr * self.rr + w.i * self.i + w.p * self.pr + w.tr * self.tr
    }

    pub fn total(&self, w: &LossWeights) -> f64 {
        self.velocity(w) + self.density(w)
    }

    pub fn add_scaled(&mut self, other: &LossTerms, s: f64) {
        self.rv += s * other.rv;
        self.g += s * other.g;
        self.pv += s * other.pv;
        self.tv += s * other.tv;
        self.rr += s * other.rr;
        self.i += s * other.i;
        self.pr += s * other.pr;
        self.tr += s * other.tr;
    }
}

/// Graph handles of the terms; `None` for terms left out (zero weight).
#[derive(Clone, Copy, Debug)]
pub struct TermVars {
    pub rv: Var,
    pub g: Var,
    pub pv: Option<Var>,
    pub tv: Var,
    pub rr: Var,
    pub i: Option<Var>,
    pub pr: Option<Var>,
    pub tr: Var,
}

impl TermVars {
    pub fn values<T: Scalar>(&self, g: &Graph<T>) -> LossTerms {
        let v = |x: Var| g.item(x).as_f64();
        let o = |x: Option<Var>| x.map(v).unwrap_or(0.0);
        LossTerms {
            rv: v(self.rv),
            g: v(self.g),
            pv: o(self.pv),
            tv: v(self.tv),
            rr: v(self.rr),
            i: o(self.i),
            pr: o(self.pr),
            tr: v(self.tr),
        }
    }

    /// Velocity objective plus density objective, as one graph node.
    pub fn total<T: Scalar>(&self, g: &mut Graph<T>, w: &LossWeights) -> Var {
        let mut terms = vec![(self.rv, lit(w.rv)), (self.g, lit(w.g))];
        if let Some(x) = self.pv {
            terms.push((x, lit(w.p)));
        }
        terms.push((self.tv, lit(w.tv)));
        terms.push((self.rr, lit(w.rr)));
        if let Some(x) = self.i {
            terms.push((x, lit(w.i)));
        }
        if let Some(x) = self.pr {
            terms.push((x, lit(w.p)));
        }
        terms.push((self.tr, lit(w.tr)));
        g.weighted_sum(&terms)
    }
}

pub fn l1_graph<T: Scalar>(g: &mut Graph<T>, pred: Var, gt: Var) -> Var {
    let d = g.sub(pred, gt);
    g.mean_abs(d)
}

/// Mean absolute difference over every Jacobian entry of every cell.
pub fn gradient_loss_graph<T: Scalar>(g: &mut Graph<T>, pred: Var, gt: Var) -> Var {
    let d = g.sub(pred, gt);
    let j = g.jacobian(d);
    g.mean_abs(j)
}

pub fn temporal_graph<T: Scalar>(g: &mut Graph<T>, base: Var, pred: Var, gt: Var) -> Var {
    let a = g.sub(gt, base);
    let b = g.sub(pred, base);
    l1_graph(g, a, b)
}

/// How a field becomes a three-channel image for the extractor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ImageScaling {
    /// One channel, clamped to `[0, 1]` and repeated.
    Density,
    /// `v / (2·3·rms) + 0.5`, clamped, components as r, g, b.
    Velocity { rms: f64 },
}

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

const VGG_BLOCKS: [usize; 4] = [2, 2, 3, 3];
const VGG_WIDTHS: [usize; 4] = [64, 128, 256, 512];

/// Fixed 16-layer image network truncated at `conv4_3`.
///
/// Weights come either from a checkpoint (`conv1_1.weight` ... `conv4_3.bias`,
/// shapes `[out, in, 3, 3]`) or from a seed. `width` scales every layer's
/// channel count.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    params: ParamSet<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub width: f64,
    pub seed: u64,
    #[serde(default)]
    pub weights: Option<std::path::PathBuf>,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            width: 0.25,
            seed: 0,
            weights: None,
        }
    }
}

fn layer_names() -> Vec<String> {
    let mut out = Vec::new();
    for (b, &n) in VGG_BLOCKS.iter().enumerate() {
        for i in 0..n {
            out.push(format!("conv{}_{}", b + 1, i + 1));
        }
    }
    out
}

impl FeatureExtractor {
    pub fn from_config(cfg: &ExtractorConfig) -> Result<Self> {
        match &cfg.weights {
            Some(p) => Self::load(p),
            None => Self::random(cfg.width, cfg.seed),
        }
    }

    pub fn random(width: f64, seed: u64) -> Result<Self> {
        if !(width > 0.0 && width <= 1.0) {
            return Err(Error::Config(format!("extractor width {width} outside (0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut cin = 3;
        let names = layer_names();
        let mut it = names.iter();
        for (b, &n) in VGG_BLOCKS.iter().enumerate() {
            let cout = ((VGG_WIDTHS[b] as f64 * width).round() as usize).max(1);
            for _ in 0..n {
                let name = it.next().unwrap();
                let fan_in = cin * 9;
                let bound = (6.0 / fan_in as f64).sqrt();
                let w = (0..cout * fan_in).map(|_| rng.gen_range(-bound..bound) as f32).collect();
                params.insert(format!("{name}.weight"), Tensor::new(vec![cout, cin, 3, 3], w));
                params.insert(format!("{name}.bias"), Tensor::zeros(&[cout]));
                cin = cout;
            }
        }
        Ok(FeatureExtractor { params })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let params = ParamSet::<f32>::load(dir)?;
        let mut cin = 3;
        for name in layer_names() {
            let w = params
                .get(&format!("{name}.weight"))
                .ok_or_else(|| smokestep_tensor::CheckpointError::Missing(format!("{name}.weight")))?;
            let s = w.shape();
            if s.len() != 4 || s[1] != cin || s[2] != 3 || s[3] != 3 {
                return Err(smokestep_tensor::CheckpointError::Shape {
                    name: format!("{name}.weight"),
                    expected: vec![s.first().copied().unwrap_or(0), cin, 3, 3],
                    found: s.to_vec(),
                }
                .into());
            }
            let b = params
                .get(&format!("{name}.bias"))
                .ok_or_else(|| smokestep_tensor::CheckpointError::Missing(format!("{name}.bias")))?;
            if b.shape() != [s[0]] {
                return Err(smokestep_tensor::CheckpointError::Shape {
                    name: format!("{name}.bias"),
                    expected: vec![s[0]],
                    found: b.shape().to_vec(),
                }
                .into());
            }
            cin = s[0];
        }
        Ok(FeatureExtractor { params })
    }

    pub fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    pub fn bind<T: Scalar>(&self, g: &mut Graph<T>) -> ExtractorBinding<T> {
        ExtractorBinding::bind(self.params.cast(), g)
    }
}

/// Extractor weights placed on one graph as constants.
pub struct ExtractorBinding<T> {
    vars: Vec<(Var, Var)>,
    _set: ParamSet<T>,
}

impl<T: Scalar> ExtractorBinding<T> {
    fn bind(set: ParamSet<T>, g: &mut Graph<T>) -> Self {
        let vars = {
            let b: Bound<T> = set.bind(g, false);
            layer_names()
                .iter()
                .map(|n| (b.var(&format!("{n}.weight")), b.var(&format!("{n}.bias"))))
                .collect()
        };
        ExtractorBinding { vars, _set: set }
    }

    /// `conv4_3` responses of a `[3, H, W]` image in `[0, 1]`.
    pub fn features(&self, g: &mut Graph<T>, image: Var) -> Var {
        let scale: Vec<T> = IMAGENET_STD.iter().map(|s| lit(1.0 / s)).collect();
        let shift: Vec<T> = IMAGENET_MEAN.iter().zip(IMAGENET_STD).map(|(m, s)| lit(-m / s)).collect();
        let mut h = g.channel_affine(image, scale, shift);
        let mut layer = 0;
        for (b, &n) in VGG_BLOCKS.iter().enumerate() {
            if b > 0 {
                h = g.max_pool2(h);
            }
            for i in 0..n {
                let (w, bias) = self.vars[layer];
                h = g.conv(h, w, bias);
                layer += 1;
                let last = b + 1 == VGG_BLOCKS.len() && i + 1 == n;
                if !last {
                    h = g.relu(h);
                }
            }
        }
        h
    }

    /// Mean squared feature difference of two images.
    pub fn distance(&self, g: &mut Graph<T>, a: Var, b: Var) -> Var {
        let fa = self.features(g, a);
        let fb = self.features(g, b);
        let d = g.sub(fa, fb);
        g.mean_square(d)
    }
}

/// Maps a planar `[C, H, W]` field node to a `[3, H, W]` image node.
pub fn to_image<T: Scalar>(g: &mut Graph<T>, x: Var, scaling: ImageScaling) -> Var {
    let shape = g.shape(x).to_vec();
    assert_eq!(shape.len(), 3, "images are planar");
    let c = shape[0];
    match scaling {
        ImageScaling::Density => {
            assert_eq!(c, 1, "density images come from one channel");
            let x = g.clamp(x, T::zero(), T::one());
            g.concat(&[x, x, x])
        }
        ImageScaling::Velocity { rms } => {
            let s: T = lit(1.0 / (2.0 * 3.0 * rms));
            let half: T = lit(0.5);
            let y = g.channel_affine(x, vec![s; c], vec![half; c]);
            let y = g.clamp(y, T::zero(), T::one());
            match c {
                3 => y,
                2 => {
                    let z = g.constant(Tensor::full(&[1, shape[1], shape[2]], half));
                    g.concat(&[y, z])
                }
                _ => panic!("velocity images need 2 or 3 components, got {c}"),
            }
        }
    }
}

/// Perceptual distance of two field nodes; volumetric inputs are first
/// averaged along `axis`.
pub fn perceptual_graph<T: Scalar>(
    g: &mut Graph<T>,
    phi: &ExtractorBinding<T>,
    pred: Var,
    gt: Var,
    scaling: ImageScaling,
    axis: Option<Axis>,
) -> Var {
    let (pred, gt) = match axis {
        Some(a) => (g.project_mean(pred, a.index()), g.project_mean(gt, a.index())),
        None => (pred, gt),
    };
    let a = to_image(g, pred, scaling);
    let b = to_image(g, gt, scaling);
    phi.distance(g, a, b)
}

/// Uniform draw from the three axes.
pub fn random_axis(rng: &mut impl Rng) -> Axis {
    Axis::ALL[rng.gen_range(0..3)]
}

fn check_pair<F: Field>(pred: &F, gt: &F) -> Result<()> {
    pred.spec().ensure_same(gt.spec())?;
    if pred.components() != gt.components() {
        return Err(Error::Dimension(format!(
            "{} vs {} components",
            pred.components(),
            gt.components()
        )));
    }
    Ok(())
}

pub fn l1_reconstruction<F: Field>(pred: &F, gt: &F) -> Result<f64> {
    check_pair(pred, gt)?;
    let n = pred.values().len() as f64;
    Ok(pred.values().iter().zip(gt.values()).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum::<f64>() / n)
}

pub fn gradient_loss(pred: &VectorField, gt: &VectorField) -> Result<f64> {
    check_pair(pred, gt)?;
    let diff = VectorField::new(
        pred.spec().clone(),
        pred.values().iter().zip(gt.values()).map(|(a, b)| a - b).collect(),
    )?;
    let j = gradient(&diff);
    let n = j.values().len() as f64;
    Ok(j.values().iter().map(|v| v.abs() as f64).sum::<f64>() / n)
}

pub fn temporal_coherence_loss<F: Field>(base: &F, pred_next: &F, gt_next: &F) -> Result<f64> {
    check_pair(base, pred_next)?;
    check_pair(base, gt_next)?;
    let n = base.values().len() as f64;
    let s: f64 = base
        .values()
        .iter()
        .zip(pred_next.values().iter().zip(gt_next.values()))
        .map(|(&b, (&p, &t))| ((t as f64 - b as f64) - (p as f64 - b as f64)).abs())
        .sum();
    Ok(s / n)
}

fn perceptual_eval<F: Field>(pred: &F, gt: &F, phi: &FeatureExtractor, scaling: ImageScaling, axis: Option<Axis>) -> Result<f64> {
    check_pair(pred, gt)?;
    match scaling {
        ImageScaling::Density if pred.components() != 1 => {
            return Err(Error::Dimension("density scaling needs a scalar field".into()))
        }
        ImageScaling::Velocity { rms } if !(rms > 0.0) => {
            return Err(Error::Degenerate(format!("velocity scale {rms}")))
        }
        _ => {}
    }
    let mut g = Graph::<f32>::new();
    let b = phi.bind(&mut g);
    let p = g.constant(pred.to_tensor());
    let t = g.constant(gt.to_tensor());
    let out = perceptual_graph(&mut g, &b, p, t, scaling, axis);
    Ok(g.item(out) as f64)
}

pub fn perceptual_loss_2d<F: Field>(pred: &F, gt: &F, phi: &FeatureExtractor, scaling: ImageScaling) -> Result<f64> {
    if pred.spec().d() != 2 {
        return Err(Error::Dimension("perceptual_loss_2d needs 2D fields; use perceptual_loss_3d".into()));
    }
    perceptual_eval(pred, gt, phi, scaling, None)
}

/// Perceptual loss of the mean projections along `axis`.
pub fn perceptual_loss_axis<F: Field>(pred: &F, gt: &F, phi: &FeatureExtractor, scaling: ImageScaling, axis: Axis) -> Result<f64> {
    if pred.spec().d() != 3 {
        return Err(Error::Dimension("projected perceptual loss needs 3D fields".into()));
    }
    perceptual_eval(pred, gt, phi, scaling, Some(axis))
}

pub fn perceptual_loss_3d<F: Field>(
    pred: &F,
    gt: &F,
    phi: &FeatureExtractor,
    scaling: ImageScaling,
    rng: &mut impl Rng,
) -> Result<f64> {
    let axis = random_axis(rng);
    perceptual_loss_axis(pred, gt, phi, scaling, axis)
}

/// L1 between the second-step interpolation at `j/k` and the true frame.
#[allow(clippy::too_many_arguments)]
pub fn interpolation_loss(
    net: &InterpNet,
    rho0: &ScalarField,
    vel0: &VectorField,
    rho_hat1: &ScalarField,
    gt_intermediate: &ScalarField,
    j: usize,
    k: usize,
    dt_small: f64,
) -> Result<f64> {
    let out = second_step_interpolate(net, rho0, vel0, rho_hat1, j, k, dt_small)?;
    l1_reconstruction(&out, gt_intermediate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridSpec;

    #[test]
    fn l1_examples() {
        let s = GridSpec::square(2, 8).unwrap();
        let one = ScalarField::constant(&s, 1.0);
        assert_eq!(l1_reconstruction(&one, &one).unwrap(), 0.0);
        assert_eq!(l1_reconstruction(&one, &ScalarField::zeros(&s)).unwrap(), 1.0);
        assert_eq!(l1_reconstruction(&ScalarField::constant(&s, -1.0), &one).unwrap(), 2.0);
    }

    #[test]
    fn gradient_loss_examples() {
        let s = GridSpec::square(2, 8).unwrap();
        let a = VectorField::from_fn(&s, |p| vec![p[0] as f32 * 0.3, p[1] as f32]);
        let b = a.map(|v| v + 2.5);
        assert!(gradient_loss(&a, &b).unwrap() < 1e-6);
        assert_eq!(gradient_loss(&a, &a).unwrap(), 0.0);
        let x = VectorField::from_fn(&s, |p| vec![p[0] as f32, 0.0]);
        let x2 = VectorField::from_fn(&s, |p| vec![2.0 * p[0] as f32, 0.0]);
        // Only ∂v_x/∂x differs, by 1 everywhere; the mean runs over all four entries.
        let j = gradient(&x2);
        assert!(j.entry(0, 0).iter().all(|&v| (v - 2.0).abs() < 1e-6));
        assert!((gradient_loss(&x, &x2).unwrap() - 0.25).abs() < 1e-7);
    }

    #[test]
    fn temporal_examples() {
        let s = GridSpec::square(2, 8).unwrap();
        let z = ScalarField::zeros(&s);
        let two = ScalarField::constant(&s, 2.0);
        let one = ScalarField::constant(&s, 1.0);
        assert_eq!(temporal_coherence_loss(&z, &two, &two).unwrap(), 0.0);
        assert_eq!(temporal_coherence_loss(&z, &one, &two).unwrap(), 1.0);
        let a = temporal_coherence_loss(&one, &one, &two).unwrap();
        let b = temporal_coherence_loss(&one, &one.map(|v| v + 3.0), &two.map(|v| v + 3.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, l1_reconstruction(&one, &two).unwrap());
    }

    #[test]
    fn weighted_sums() {
        let w = LossWeights::for_dims(2);
        let unit = LossTerms {
            rv: 1.0,
            g: 1.0,
            pv: 1.0,
            tv: 1.0,
            rr: 1.0,
            i: 1.0,
            pr: 1.0,
            tr: 1.0,
        };
        assert_eq!(unit.velocity(&w), 90.1);
        assert_eq!(unit.density(&w), 50.0 + 1.0 + 0.1 + 50.0);
        assert_eq!(unit.total(&w), unit.velocity(&w) + unit.density(&w));
        assert_eq!(LossTerms::default().total(&w), 0.0);
        let t = LossTerms { g: 0.37, ..LossTerms::default() };
        let w2 = LossWeights { g: 2.0 * w.g, ..w };
        assert_eq!(t.velocity(&w2), 2.0 * t.velocity(&w));
        assert_eq!(LossWeights::for_dims(3).p, 1e-6);
    }

    #[test]
    fn perceptual_basics() {
        let s = GridSpec::square(2, 32).unwrap();
        let phi = FeatureExtractor::random(0.125, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = ScalarField::new(s.clone(), (0..s.num_cells()).map(|_| rng.gen::<f32>()).collect()).unwrap();
        let b = ScalarField::new(s.clone(), (0..s.num_cells()).map(|_| rng.gen::<f32>()).collect()).unwrap();
        assert_eq!(perceptual_loss_2d(&a, &a, &phi, ImageScaling::Density).unwrap(), 0.0);
        let ab = perceptual_loss_2d(&a, &b, &phi, ImageScaling::Density).unwrap();
        assert!(ab > 0.0);
        assert_eq!(ab, perceptual_loss_2d(&b, &a, &phi, ImageScaling::Density).unwrap());
        let v = VectorField::from_fn(&s, |p| vec![p[0] as f32 * 0.1, -(p[1] as f32) * 0.05]);
        let scaling = ImageScaling::Velocity { rms: 0.5 };
        assert_eq!(perceptual_loss_2d(&v, &v, &phi, scaling).unwrap(), 0.0);
        assert!(perceptual_loss_2d(&v, &v.map(|x| -x), &phi, scaling).unwrap() > 0.0);
        let s3 = GridSpec::square(3, 16).unwrap();
        let c = ScalarField::constant(&s3, 0.5);
        assert!(perceptual_loss_2d(&c, &c, &phi, ImageScaling::Density).is_err());
    }

    #[test]
    fn projected_constants_match_planar_loss() {
        let s3 = GridSpec::square(3, 16).unwrap();
        let s2 = GridSpec::square(2, 16).unwrap();
        let phi = FeatureExtractor::random(0.125, 2).unwrap();
        let a = ScalarField::constant(&s3, 0.2);
        let b = ScalarField::constant(&s3, 0.7);
        let want = perceptual_loss_2d(
            &ScalarField::constant(&s2, 0.2),
            &ScalarField::constant(&s2, 0.7),
            &phi,
            ImageScaling::Density,
        )
        .unwrap();
        assert!(want > 0.0);
        for axis in Axis::ALL {
            let got = perceptual_loss_axis(&a, &b, &phi, ImageScaling::Density, axis).unwrap();
            assert!((got - want).abs() <= 1e-6 * want, "{axis:?}: {got} vs {want}");
        }
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(
            perceptual_loss_3d(&a, &b, &phi, ImageScaling::Density, &mut r1).unwrap(),
            perceptual_loss_3d(&a, &b, &phi, ImageScaling::Density, &mut r2).unwrap()
        );
        assert_eq!(perceptual_loss_3d(&a, &a, &phi, ImageScaling::Density, &mut r1).unwrap(), 0.0);
    }

    #[test]
    fn extractor_checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let phi = FeatureExtractor::random(0.0625, 4).unwrap();
        phi.params().save(dir.path()).unwrap();
        let back = FeatureExtractor::load(dir.path()).unwrap();
        assert_eq!(back.params().get("conv4_3.weight"), phi.params().get("conv4_3.weight"));
        let mut broken = ParamSet::<f32>::new();
        broken.insert("conv1_1.weight", Tensor::zeros(&[4, 2, 3, 3]));
        let bad = tempfile::tempdir().unwrap();
        broken.save(bad.path()).unwrap();
        assert!(FeatureExtractor::load(bad.path()).is_err());
    }

    #[test]
    fn interpolation_loss_examples() {
        let s = GridSpec::square(2, 16).unwrap();
        let net = InterpNet::new(&crate::unet::UNetConfig::desk(), &s, 0).unwrap();
        let a = ScalarField::constant(&s, 0.4);
        let still = VectorField::zeros(&s);
        // Zero networks cross-fade; equal endpoints reproduce them.
        assert_eq!(interpolation_loss(&net, &a, &still, &a, &a, 3, 8, 0.5).unwrap(), 0.0);
        let off = a.map(|v| v + 0.25);
        assert!((interpolation_loss(&net, &a, &still, &a, &off, 3, 8, 0.5).unwrap() - 0.25).abs() < 1e-7);
    }
}
