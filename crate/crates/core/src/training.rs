//! Optimization of the interpolation networks and, with those frozen, the
//! correction network.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smokestep_tensor::{Adam, Graph, ParamSet, Tensor, Var};

use crate::correction::{fuse_graph, CorrectionInputs, CorrectionNet};
use crate::datagen::{Corpus, PairSample};
use crate::error::{Error, Result};
use crate::fields::{Axis, Field, GridSpec};
use crate::interpolation::{forward_advect, InterpModels, InterpNet, FIRST_DIR, SECOND_DIR};
use crate::losses::{
    gradient_loss_graph, l1_graph, perceptual_graph, random_axis, temporal_graph, ExtractorBinding,
    ExtractorConfig, FeatureExtractor, ImageScaling, LossTerms, LossWeights, TermVars,
};
use crate::unet::UNetConfig;

pub const CORRECTION_DIR: &str = "correction";
pub const LOG_FILE: &str = "train_log.csv";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub accumulation: usize,
    pub seed: u64,
    /// Defaults to the weights for the corpus dimension.
    pub weights: Option<LossWeights>,
    pub val_fraction: f64,
    pub unet: UNetConfig,
    pub extractor: ExtractorConfig,
    /// Only `cpu` is available.
    pub device: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 8,
            epochs: 30,
            accumulation: 1,
            seed: 0,
            weights: None,
            val_fraction: 0.1,
            unet: UNetConfig::desk(),
            extractor: ExtractorConfig::default(),
            device: "cpu".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.accumulation == 0 {
            return Err(Error::Config("batch size and accumulation must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.device != "cpu" {
            return Err(Error::Config(format!("unsupported device {:?}", self.device)));
        }
        if let Some(w) = &self.weights {
            w.validate()?;
        }
        Ok(())
    }

    pub fn weights_for(&self, d: usize) -> LossWeights {
        self.weights.unwrap_or_else(|| LossWeights::for_dims(d))
    }

    /// Optimizer steps in one epoch over `n` samples.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size * self.accumulation)
    }
}

/// Training and validation pairs with intermediates attached.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: Vec<PairSample>,
    pub val: Vec<PairSample>,
    pub velocity_rms: f64,
}

impl TrainData {
    pub fn from_corpus(corpus: &Corpus) -> Result<TrainData> {
        let train = corpus.load_pairs(&corpus.split.train)?;
        let val = corpus.load_pairs(&corpus.split.val)?;
        let velocity_rms = corpus.velocity_rms()?;
        TrainData::new(train, val, velocity_rms)
    }

    pub fn new(train: Vec<PairSample>, val: Vec<PairSample>, velocity_rms: f64) -> Result<TrainData> {
        if train.is_empty() {
            return Err(Error::EmptyDataset("no training pairs".into()));
        }
        let spec = train[0].spec().clone();
        for p in train.iter().chain(&val) {
            spec.ensure_same(p.spec())?;
            if p.intermediates.len() + 1 != p.k {
                return Err(Error::Argument(format!("pair {} has no intermediates attached", p.n)));
            }
        }
        crate::correction::check_rms(velocity_rms)?;
        Ok(TrainData {
            train,
            val,
            velocity_rms,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        self.train[0].spec()
    }
}

/// Per-epoch record of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub steps: usize,
}

/// Index of the smallest value; the earliest wins ties.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Sums per-sample gradients and applies one mean-reduced update per group.
struct Accumulator {
    sums: Vec<Tensor<f32>>,
    count: usize,
}

impl Accumulator {
    fn new(params: &ParamSet<f32>) -> Self {
        Accumulator {
            sums: params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect(),
            count: 0,
        }
    }

    fn add(&mut self, g: &Graph<f32>, root: Var, vars: &[Var]) {
        let mut grads = g.backward(root);
        for (s, &v) in self.sums.iter_mut().zip(vars) {
            if let Some(t) = grads.take(v) {
                s.add_assign(&t);
            }
        }
        self.count += 1;
    }

    fn apply(&mut self, adam: &mut Adam<f32>, params: &mut ParamSet<f32>) {
        if self.count == 0 {
            return;
        }
        let inv = 1.0 / self.count as f32;
        for s in &mut self.sums {
            s.scale_in_place(inv);
        }
        adam.step(params, &self.sums);
        for s in &mut self.sums {
            s.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        self.count = 0;
    }
}

fn density_terms(
    g: &mut Graph<f32>,
    phi: &ExtractorBinding<f32>,
    w: &LossWeights,
    base: Var,
    pred: Var,
    gt: Var,
    axis: Option<Axis>,
) -> (Var, Var, Option<Var>) {
    let r = l1_graph(g, pred, gt);
    let t = temporal_graph(g, base, pred, gt);
    let p = (w.p > 0.0).then(|| perceptual_graph(g, phi, pred, gt, ImageScaling::Density, axis));
    (r, t, p)
}

fn axis_for(d: usize, rng: &mut impl Rng) -> Option<Axis> {
    (d == 3).then(|| random_axis(rng))
}

#[allow(clippy::too_many_arguments)]
fn interp_sample_loss(
    net: &InterpNet,
    phi: &FeatureExtractor,
    w: &LossWeights,
    rho_a: &crate::fields::ScalarField,
    pair: &PairSample,
    j: usize,
    axis: Option<Axis>,
    trainable: bool,
) -> (Graph<f32>, Var, Vec<Var>, [f64; 3]) {
    let mut g = Graph::<f32>::new();
    let b = net.params.bind(&mut g, trainable);
    let vars = b.vars().to_vec();
    let ph = phi.bind(&mut g);
    let a = g.constant(rho_a.to_tensor());
    let end = g.constant(pair.rho_gt.to_tensor());
    let gt = g.constant(pair.intermediate(j).to_tensor());
    let base = g.constant(pair.rho0.to_tensor());
    let out = net.graph_synthesize(&mut g, &b, a, end, j as f64 / pair.k as f64);
    let (r, t, p) = density_terms(&mut g, &ph, w, base, out, gt, axis);
    let mut terms = vec![(r, w.rr), (t, w.tr)];
    if let Some(p) = p {
        terms.push((p, w.p));
    }
    let terms: Vec<(Var, f32)> = terms.into_iter().map(|(v, x)| (v, x as f32)).collect();
    let total = g.weighted_sum(&terms);
    let vals = [g.item(r) as f64, g.item(t) as f64, p.map_or(0.0, |p| g.item(p) as f64)];
    (g, total, vars, vals)
}

fn write_log(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(Error::io(path))?;
    writeln!(f, "{header}").map_err(Error::io(path))?;
    for r in rows {
        writeln!(f, "{r}").map_err(Error::io(path))?;
    }
    Ok(())
}

fn write_config(out: &Path, cfg: &TrainConfig) -> Result<()> {
    fs::create_dir_all(out).map_err(Error::io(out))?;
    let path = out.join(CONFIG_FILE);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).map_err(Error::io(&path))
}

/// Fixed `(j, axis)` per validation sample, independent of the epoch.
fn val_draws(cfg: &TrainConfig, n: usize, k: usize, d: usize) -> Vec<(usize, Option<Axis>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5_eed0_f7a1);
    (0..n)
        .map(|_| {
            let j = rng.gen_range(1..k);
            (j, axis_for(d, &mut rng))
        })
        .collect()
}

/// Mean interpolation loss of both networks over `pairs`.
pub fn validate_interpolation(
    models: &InterpModels,
    pairs: &[PairSample],
    cfg: &TrainConfig,
    phi: &FeatureExtractor,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("validation split is empty".into()));
    }
    let d = pairs[0].spec().d();
    let w = cfg.weights_for(d);
    let draws = val_draws(cfg, pairs.len(), pairs[0].k, d);
    let mut sum = 0.0;
    for (p, &(j, axis)) in pairs.iter().zip(&draws) {
        let (g, t1, _, _) = interp_sample_loss(&models.first, phi, &w, &p.rho0, p, j, axis, false);
        let adv = forward_advect(&p.rho0, &p.vel0, j, p.dt_small)?;
        let (g2, t2, _, _) = interp_sample_loss(&models.second, phi, &w, &adv, p, j, axis, false);
        sum += g.item(t1) as f64 + g2.item(t2) as f64;
    }
    Ok(sum / pairs.len() as f64)
}

/// Trains the first- and second-step networks together and writes the
/// best-validation checkpoints to `out/interp_first` and `out/interp_second`.
pub fn train_interpolation(data: &TrainData, cfg: &TrainConfig, out: &Path) -> Result<(InterpModels, TrainReport)> {
    cfg.validate()?;
    write_config(out, cfg)?;
    let spec = data.spec().clone();
    let d = spec.d();
    let w = cfg.weights_for(d);
    let phi = FeatureExtractor::from_config(&cfg.extractor)?;
    let mut models = InterpModels {
        first: InterpNet::new(&cfg.unet, &spec, cfg.seed)?,
        second: InterpNet::new(&cfg.unet, &spec, cfg.seed.wrapping_add(100))?,
        switch_fraction: 0.5,
    };
    let val = if data.val.is_empty() { &data.train } else { &data.val };
    let mut adam1 = Adam::new(cfg.lr);
    let mut adam2 = Adam::new(cfg.lr);
    let mut acc1 = Accumulator::new(&models.first.params);
    let mut acc2 = Accumulator::new(&models.second.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let group = cfg.batch_size * cfg.accumulation;
    let mut report = TrainReport::default();
    let mut rows = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut parts = [0.0f64; 6];
        for (step, chunk) in order.chunks(group).enumerate() {
            for &i in chunk {
                let p = &data.train[i];
                let j = rng.gen_range(1..p.k);
                let axis = axis_for(d, &mut rng);
                let (g, l1, v1, a) = interp_sample_loss(&models.first, &phi, &w, &p.rho0, p, j, axis, true);
                let adv = forward_advect(&p.rho0, &p.vel0, j, p.dt_small)?;
                let (g2, l2, v2, b) = interp_sample_loss(&models.second, &phi, &w, &adv, p, j, axis, true);
                let loss = g.item(l1) as f64 + g2.item(l2) as f64;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, step });
                }
                total += loss;
                for q in 0..3 {
                    parts[q] += a[q];
                    parts[3 + q] += b[q];
                }
                acc1.add(&g, l1, &v1);
                acc2.add(&g2, l2, &v2);
            }
            acc1.apply(&mut adam1, &mut models.first.params);
            acc2.apply(&mut adam2, &mut models.second.params);
            report.steps += 1;
        }
        let n = data.train.len() as f64;
        let train_loss = total / n;
        let val_loss = validate_interpolation(&models, val, cfg, &phi)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step: cfg.steps_per_epoch(data.train.len()) });
        }
        report.train_losses.push(train_loss);
        report.val_losses.push(val_loss);
        log::info!("interp epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        let mut row = format!("{epoch},{train_loss},{val_loss}");
        for v in parts {
            row.push_str(&format!(",{}", v / n));
        }
        rows.push(row);
        if argmin(&report.val_losses) == Some(epoch) {
            models.first.save_with(&out.join(FIRST_DIR), Some(epoch), Some(val_loss))?;
            models.second.save_with(&out.join(SECOND_DIR), Some(epoch), Some(val_loss))?;
        }
        write_log(
            &out.join(LOG_FILE),
            "epoch,train_loss,val_loss,l_rr_first,l_tr_first,l_pr_first,l_rr_second,l_tr_second,l_pr_second",
            &rows,
        )?;
    }
    if let Some(b) = argmin(&report.val_losses) {
        report.best_epoch = b;
        report.best_val = report.val_losses[b];
        models = InterpModels::load(out, models.switch_fraction)?;
    }
    Ok((models, report))
}

/// Everything one correction sample needs on a graph.
struct CorrectionCtx<'a> {
    net: &'a CorrectionNet,
    interp: Option<&'a InterpNet>,
    phi: &'a FeatureExtractor,
    w: LossWeights,
}

impl CorrectionCtx<'_> {
    /// Builds the total loss of one pair; returns the graph, loss node,
    /// correction parameter nodes and term values.
    fn sample(
        &self,
        p: &PairSample,
        j: usize,
        axis: Option<Axis>,
        trainable: bool,
    ) -> Result<(Graph<f32>, Var, Vec<Var>, LossTerms)> {
        let w = &self.w;
        let mut g = Graph::<f32>::new();
        let b = self.net.params.bind(&mut g, trainable);
        let vars = b.vars().to_vec();
        let ph = self.phi.bind(&mut g);
        let x = CorrectionInputs {
            rho0: g.constant(p.rho0.to_tensor()),
            vel0: g.constant(p.vel0.to_tensor()),
            rho_big: g.constant(p.rho_big.to_tensor()),
            vel_big: g.constant(p.vel_big.to_tensor()),
        };
        let heads = self.net.graph_forward(&mut g, &b, x);
        let rho_hat = fuse_graph(&mut g, x.rho_big, &heads);
        let v_gt = g.constant(p.vel_gt.to_tensor());
        let r_gt = g.constant(p.rho_gt.to_tensor());
        let v_scaling = ImageScaling::Velocity {
            rms: self.net.velocity_rms,
        };
        let rv = l1_graph(&mut g, heads.v_hat, v_gt);
        let gl = gradient_loss_graph(&mut g, heads.v_hat, v_gt);
        let pv = (w.p > 0.0).then(|| perceptual_graph(&mut g, &ph, heads.v_hat, v_gt, v_scaling, axis));
        let tv = temporal_graph(&mut g, x.vel0, heads.v_hat, v_gt);
        let (rr, tr, pr) = density_terms(&mut g, &ph, w, x.rho0, rho_hat, r_gt, axis);
        let i = match self.interp {
            Some(net) if w.i > 0.0 => {
                let ib = net.params.bind(&mut g, false);
                let adv = forward_advect(&p.rho0, &p.vel0, j, p.dt_small)?;
                let a = g.constant(adv.to_tensor());
                let mid = net.graph_synthesize(&mut g, &ib, a, rho_hat, j as f64 / p.k as f64);
                let gt = g.constant(p.intermediate(j).to_tensor());
                Some(l1_graph(&mut g, mid, gt))
            }
            _ => None,
        };
        let tv_ = TermVars {
            rv,
            g: gl,
            pv,
            tv,
            rr,
            i,
            pr,
            tr,
        };
        let total = tv_.total(&mut g, w);
        let vals = tv_.values(&g);
        Ok((g, total, vars, vals))
    }
}

/// Mean total loss of the correction network over `pairs`.
pub fn validate(
    net: &CorrectionNet,
    interp: Option<&InterpNet>,
    pairs: &[PairSample],
    cfg: &TrainConfig,
    phi: &FeatureExtractor,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("validation split is empty".into()));
    }
    let d = net.d();
    let mut w = cfg.weights_for(d);
    if interp.is_none() {
        w.i = 0.0;
    }
    let ctx = CorrectionCtx { net, interp, phi, w };
    let draws = val_draws(cfg, pairs.len(), pairs[0].k, d);
    let mut sum = 0.0;
    for (p, &(j, axis)) in pairs.iter().zip(&draws) {
        let (g, total, _, _) = ctx.sample(p, j, axis, false)?;
        sum += g.item(total) as f64;
    }
    Ok(sum / pairs.len() as f64)
}

/// Trains the correction network against frozen interpolation networks and
/// writes the best-validation checkpoint to `out/correction`.
pub fn train_correction(
    data: &TrainData,
    interp: Option<&InterpModels>,
    cfg: &TrainConfig,
    out: &Path,
) -> Result<(CorrectionNet, TrainReport)> {
    cfg.validate()?;
    write_config(out, cfg)?;
    let spec = data.spec().clone();
    let d = spec.d();
    let mut w = cfg.weights_for(d);
    if interp.is_none() && w.i > 0.0 {
        log::warn!("no interpolation checkpoints given; the interpolation term is disabled");
        w.i = 0.0;
    }
    let phi = FeatureExtractor::from_config(&cfg.extractor)?;
    let mut net = CorrectionNet::new(&cfg.unet, &spec, data.velocity_rms, cfg.seed)?;
    let second = interp.map(|m| &m.second);
    let val = if data.val.is_empty() { &data.train } else { &data.val };
    let mut adam = Adam::new(cfg.lr);
    let mut acc = Accumulator::new(&net.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let group = cfg.batch_size * cfg.accumulation;
    let mut report = TrainReport::default();
    let mut rows = Vec::new();
    let dir = out.join(CORRECTION_DIR);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut terms = LossTerms::default();
        for (step, chunk) in order.chunks(group).enumerate() {
            for &i in chunk {
                let p = &data.train[i];
                let j = rng.gen_range(1..p.k);
                let axis = axis_for(d, &mut rng);
                let ctx = CorrectionCtx {
                    net: &net,
                    interp: second,
                    phi: &phi,
                    w,
                };
                let (g, loss, vars, t) = ctx.sample(p, j, axis, true)?;
                let l = g.item(loss) as f64;
                if !l.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, step });
                }
                total += l;
                terms.add_scaled(&t, 1.0);
                acc.add(&g, loss, &vars);
            }
            acc.apply(&mut adam, &mut net.params);
            report.steps += 1;
        }
        let n = data.train.len() as f64;
        let train_loss = total / n;
        let mut vcfg = cfg.clone();
        vcfg.weights = Some(w);
        let val_loss = validate(&net, second, val, &vcfg, &phi)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step: cfg.steps_per_epoch(data.train.len()) });
        }
        report.train_losses.push(train_loss);
        report.val_losses.push(val_loss);
        log::info!("correction epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        let mut row = format!("{epoch},{train_loss},{val_loss}");
        for v in terms.as_array() {
            row.push_str(&format!(",{}", v / n));
        }
        rows.push(row);
        if argmin(&report.val_losses) == Some(epoch) {
            net.save_with(&dir, Some(epoch), Some(val_loss))?;
        }
        write_log(
            &out.join(LOG_FILE),
            &format!("epoch,train_loss,val_loss,{}", LossTerms::NAMES.join(",")),
            &rows,
        )?;
    }
    if let Some(b) = argmin(&report.val_losses) {
        report.best_epoch = b;
        report.best_val = report.val_losses[b];
        net = CorrectionNet::load(&dir)?;
    }
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_pairs, generate_simulation};
    use crate::solver::{SceneConfig, SceneKind};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 2,
            epochs: 2,
            unet: UNetConfig {
                depth: 2,
                encoder_kernels: vec![3, 3],
                decoder_kernel: 3,
                channels: vec![4, 6],
                leaky_slope: 0.2,
                in_channels: 0,
                out_channels: 0,
            },
            extractor: ExtractorConfig {
                width: 0.0625,
                seed: 0,
                weights: None,
            },
            ..TrainConfig::default()
        }
    }

    fn data(count: usize) -> (tempfile::TempDir, TrainData) {
        let dir = tempfile::tempdir().unwrap();
        let mut pairs = Vec::new();
        for s in 0..count {
            let mut scene = SceneConfig::generate(SceneKind::Plume2d, 16, s as u64).unwrap();
            scene.num_steps = 24;
            let a = generate_simulation(&scene, &dir.path().join(format!("s{s}"))).unwrap();
            for mut p in build_pairs(&a, 8).unwrap() {
                a.attach_intermediates(&mut p).unwrap();
                pairs.push(p);
            }
        }
        let val = pairs.split_off(pairs.len() - 2);
        (dir, TrainData::new(pairs, val, 0.3).unwrap())
    }

    #[test]
    fn batching_arithmetic() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.steps_per_epoch(10), 2);
        assert_eq!(TrainConfig { accumulation: 2, ..cfg.clone() }.steps_per_epoch(10), 1);
        assert_eq!(cfg.steps_per_epoch(16), 2);
        assert!(TrainConfig { batch_size: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn argmin_picks_earliest_minimum() {
        assert_eq!(argmin(&[3.0, 1.0, 2.0, 1.0]), Some(1));
        assert_eq!(argmin(&[f64::NAN, 2.0]), Some(1));
        assert_eq!(argmin(&[]), None);
    }

    #[test]
    fn interpolation_training_is_deterministic() {
        let (_d, data) = data(2);
        let cfg = tiny_cfg();
        let o1 = tempfile::tempdir().unwrap();
        let o2 = tempfile::tempdir().unwrap();
        let (_, r1) = train_interpolation(&data, &cfg, o1.path()).unwrap();
        let (_, r2) = train_interpolation(&data, &cfg, o2.path()).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.steps, 2 * cfg.steps_per_epoch(data.train.len()));
        assert!(o1.path().join(FIRST_DIR).join("manifest.json").exists());
        let log = fs::read_to_string(o1.path().join(LOG_FILE)).unwrap();
        assert_eq!(log.lines().count(), 3);
        assert!(o1.path().join(CONFIG_FILE).exists());
    }

    #[test]
    fn correction_training_leaves_interpolation_untouched() {
        let (_d, data) = data(2);
        let cfg = tiny_cfg();
        let out = tempfile::tempdir().unwrap();
        let interp = InterpModels {
            first: InterpNet::new(&cfg.unet, data.spec(), 1).unwrap(),
            second: InterpNet::new(&cfg.unet, data.spec(), 2).unwrap(),
            switch_fraction: 0.5,
        };
        let before = interp.second.params.clone();
        let (net, report) = train_correction(&data, Some(&interp), &cfg, out.path()).unwrap();
        for ((_, a), (_, b)) in before.iter().zip(interp.second.params.iter()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(report.val_losses.len(), 2);
        assert_eq!(net.params.metadata["epoch"].as_u64(), Some(report.best_epoch as u64));
        let phi = FeatureExtractor::from_config(&cfg.extractor).unwrap();
        let v1 = validate(&net, Some(&interp.second), &data.val, &cfg, &phi).unwrap();
        let v2 = validate(&net, Some(&interp.second), &data.val, &cfg, &phi).unwrap();
        assert_eq!(v1, v2);
        assert!(v1.is_finite());
        assert!(validate(&net, None, &[], &cfg, &phi).is_err());
    }

    #[test]
    fn correction_trains_without_interpolation() {
        let (_d, data) = data(1);
        let out = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { epochs: 1, ..tiny_cfg() };
        let (_, report) = train_correction(&data, None, &cfg, out.path()).unwrap();
        assert!(report.val_losses[0].is_finite());
    }

    #[test]
    fn accumulation_matches_larger_batch() {
        let (_d, data) = data(2);
        let few = TrainData::new(data.train[..2].to_vec(), data.val.clone(), 0.3).unwrap();
        let base = TrainConfig { epochs: 1, ..tiny_cfg() };
        let a = TrainConfig { batch_size: 1, accumulation: 2, ..base.clone() };
        let b = TrainConfig { batch_size: 2, accumulation: 1, ..base };
        let o1 = tempfile::tempdir().unwrap();
        let o2 = tempfile::tempdir().unwrap();
        let (n1, _) = train_correction(&few, None, &a, o1.path()).unwrap();
        let (n2, _) = train_correction(&few, None, &b, o2.path()).unwrap();
        for ((_, x), (_, y)) in n1.params.iter().zip(n2.params.iter()) {
            for (p, q) in x.data().iter().zip(y.data()) {
                assert!((p - q).abs() <= 1e-6, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert!(matches!(TrainData::new(vec![], vec![], 1.0), Err(Error::EmptyDataset(_))));
    }
}
