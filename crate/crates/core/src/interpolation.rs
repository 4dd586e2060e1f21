//! Flow-based synthesis of density frames between two endpoints.
//!
//! A flow network predicts both directional flows between the endpoints;
//! they are rescaled to time `t`, both endpoints are warped there, and a
//! refinement network corrects the flows and predicts visibility weights for
//! the final blend. The second step replaces the first endpoint by its
//! forward advection under the frozen endpoint velocity.

use std::path::Path;

use serde::{Deserialize, Serialize};
use smokestep_tensor::{lit, Bound, Graph, ParamSet, Scalar, Var};

use crate::correction::{read_metadata, ModelMetadata};
use crate::error::{Error, Result};
use crate::fields::{Field, GridSpec, ScalarField, VectorField};
use crate::solver::advect;
use crate::unet::{UNet, UNetConfig};

pub const INTERP_KIND: &str = "interpolation";
pub const FIRST_DIR: &str = "interp_first";
pub const SECOND_DIR: &str = "interp_second";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpConfig {
    pub unet: UNetConfig,
    pub switch_fraction: f64,
}

impl Default for InterpConfig {
    fn default() -> Self {
        InterpConfig {
            unet: UNetConfig::default(),
            switch_fraction: 0.5,
        }
    }
}

impl InterpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.switch_fraction) {
            return Err(Error::Config(format!(
                "switch_fraction {} outside [0, 1]",
                self.switch_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct InterpNet {
    flow: UNet,
    refine: UNet,
    pub params: ParamSet<f32>,
    pub seed: u64,
}

impl InterpNet {
    pub fn new(cfg: &UNetConfig, spec: &GridSpec, seed: u64) -> Result<Self> {
        let d = spec.d();
        let base = cfg.fit_to(spec);
        base.clone().with_io(1, 1).check_grid(spec)?;
        let flow = UNet::new(base.clone().with_io(2, 2 * d), d, "flow.")?;
        let refine = UNet::new(base.with_io(2 + 2 * d + 2, 2 * d + 2), d, "refine.")?;
        let mut params = flow.init_seeded(seed);
        params.extend(&refine.init_seeded(seed.wrapping_add(1)));
        Ok(InterpNet {
            flow,
            refine,
            params,
            seed,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.flow.cfg
    }

    pub fn d(&self) -> usize {
        self.flow.d
    }

    fn check_spec(&self, spec: &GridSpec) -> Result<()> {
        if spec.d() != self.d() {
            return Err(Error::Dimension(format!(
                "network expects {}D fields, got {}D",
                self.d(),
                spec.d()
            )));
        }
        self.flow.cfg.check_grid(spec)
    }

    /// Frame at `t ∈ [0, 1]` between `rho_a` and `rho_b`, built on `g`.
    pub fn graph_synthesize<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound<T>, rho_a: Var, rho_b: Var, t: f64) -> Var {
        let d = self.d();
        let pair = g.concat(&[rho_a, rho_b]);
        let flows = self.flow.forward(g, p, pair);
        let f_ab = g.slice_channels(flows, 0, d);
        let f_ba = g.slice_channels(flows, d, d);
        let u = 1.0 - t;
        let f_ta = {
            let x = g.scale(f_ab, lit(-u * t));
            let y = g.scale(f_ba, lit(t * t));
            g.add(x, y)
        };
        let f_tb = {
            let x = g.scale(f_ab, lit(u * u));
            let y = g.scale(f_ba, lit(-t * u));
            g.add(x, y)
        };
        let wa = g.warp(rho_a, f_ta);
        let wb = g.warp(rho_b, f_tb);
        let x = g.concat(&[rho_a, rho_b, f_ta, f_tb, wa, wb]);
        let r = self.refine.forward(g, p, x);
        let da = g.slice_channels(r, 0, d);
        let db = g.slice_channels(r, d, d);
        let la = g.slice_channels(r, 2 * d, 1);
        let lb = g.slice_channels(r, 2 * d + 1, 1);
        // Residuals fade out at their own endpoint so t = 0 and t = 1 reproduce the inputs.
        let da = g.scale(da, lit(t));
        let db = g.scale(db, lit(u));
        let f_ta = g.add(f_ta, da);
        let f_tb = g.add(f_tb, db);
        let wa = g.warp(rho_a, f_ta);
        let wb = g.warp(rho_b, f_tb);
        // Two-way softmax of the visibility logits.
        let diff = g.sub(la, lb);
        let va = g.sigmoid(diff);
        let neg = g.scale(diff, lit(-1.0));
        let vb = g.sigmoid(neg);
        let ca = g.scale(va, lit(u));
        let cb = g.scale(vb, lit(t));
        let na = g.mul(ca, wa);
        let nb = g.mul(cb, wb);
        let num = g.add(na, nb);
        let den = g.add(ca, cb);
        g.div(num, den)
    }

    /// Frame at `t`; `t = 0` and `t = 1` return the endpoints unchanged.
    pub fn synthesize(&self, rho_a: &ScalarField, rho_b: &ScalarField, t: f64) -> Result<ScalarField> {
        rho_a.spec().ensure_same(rho_b.spec())?;
        if t == 0.0 {
            return Ok(rho_a.clone());
        }
        if t == 1.0 {
            return Ok(rho_b.clone());
        }
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Argument(format!("interpolation time {t} outside [0, 1]")));
        }
        let spec = rho_a.spec();
        self.check_spec(spec)?;
        let mut g = Graph::<f32>::new();
        let p = self.params.bind(&mut g, false);
        let a = g.constant(rho_a.to_tensor());
        let b = g.constant(rho_b.to_tensor());
        let out = self.graph_synthesize(&mut g, &p, a, b, t);
        ScalarField::from_tensor(spec, g.value(out))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.save_with(dir, None, None)
    }

    pub fn save_with(&self, dir: &Path, epoch: Option<usize>, val_loss: Option<f64>) -> Result<()> {
        let meta = ModelMetadata {
            kind: INTERP_KIND.into(),
            unet: self.flow.cfg.clone().with_io(0, 0),
            d: self.d(),
            velocity_rms: None,
            seed: self.seed,
            epoch,
            val_loss,
        };
        let mut p = self.params.clone();
        p.metadata = serde_json::to_value(meta).expect("metadata serializes");
        p.save(dir)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let params = ParamSet::<f32>::load(dir)?;
        let meta = read_metadata(dir, &params, INTERP_KIND)?;
        let d = meta.d;
        let flow = UNet::new(meta.unet.clone().with_io(2, 2 * d), d, "flow.")?;
        let refine = UNet::new(meta.unet.with_io(2 + 2 * d + 2, 2 * d + 2), d, "refine.")?;
        let mut template = flow.init_seeded(0);
        template.extend(&refine.init_seeded(0));
        params.check_layout(&template)?;
        Ok(InterpNet {
            flow,
            refine,
            params,
            seed: meta.seed,
        })
    }
}

/// `rho_a` carried `j` small steps along the frozen velocity `vel_a`.
pub fn forward_advect(rho_a: &ScalarField, vel_a: &VectorField, j: usize, dt_small: f64) -> Result<ScalarField> {
    let mut rho = rho_a.clone();
    for _ in 0..j {
        rho = advect(&rho, vel_a, dt_small)?;
    }
    Ok(rho)
}

pub fn first_step_interpolate(net: &InterpNet, rho_a: &ScalarField, rho_b: &ScalarField, t: f64) -> Result<ScalarField> {
    net.synthesize(rho_a, rho_b, t)
}

/// Intermediate `j` of `k` from the advected first endpoint and `rho_hat_b`.
pub fn second_step_interpolate(
    net: &InterpNet,
    rho_a: &ScalarField,
    vel_a: &VectorField,
    rho_hat_b: &ScalarField,
    j: usize,
    k: usize,
    dt_small: f64,
) -> Result<ScalarField> {
    check_j(j, k)?;
    let adv = forward_advect(rho_a, vel_a, j, dt_small)?;
    net.synthesize(&adv, rho_hat_b, j as f64 / k as f64)
}

pub(crate) fn check_j(j: usize, k: usize) -> Result<()> {
    if j == 0 || j >= k {
        return Err(Error::Argument(format!("intermediate index {j} outside 1..={}", k.saturating_sub(1))));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    First,
    Second,
}

/// Second step early in the rollout, first step afterwards.
pub fn choose_step(frame_index: usize, n: usize, switch_fraction: f64) -> Step {
    if switch_fraction > 0.0 && frame_index as f64 <= switch_fraction * n as f64 {
        Step::Second
    } else {
        Step::First
    }
}

/// The two trained parameter sets plus the switching policy.
#[derive(Clone, Debug)]
pub struct InterpModels {
    pub first: InterpNet,
    pub second: InterpNet,
    pub switch_fraction: f64,
}

impl InterpModels {
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.first.save(&dir.join(FIRST_DIR))?;
        self.second.save(&dir.join(SECOND_DIR))
    }

    pub fn load(dir: &Path, switch_fraction: f64) -> Result<Self> {
        Ok(InterpModels {
            first: InterpNet::load(&dir.join(FIRST_DIR))?,
            second: InterpNet::load(&dir.join(SECOND_DIR))?,
            switch_fraction,
        })
    }

    /// Intermediate `j` of the interval ending at `frame_index + k − j`.
    #[allow(clippy::too_many_arguments)]
    pub fn interpolate(
        &self,
        frame_index: usize,
        n: usize,
        rho_a: &ScalarField,
        vel_a: &VectorField,
        rho_b: &ScalarField,
        j: usize,
        k: usize,
        dt_small: f64,
    ) -> Result<ScalarField> {
        check_j(j, k)?;
        match choose_step(frame_index, n, self.switch_fraction) {
            Step::Second => second_step_interpolate(&self.second, rho_a, vel_a, rho_b, j, k, dt_small),
            Step::First => first_step_interpolate(&self.first, rho_a, rho_b, j as f64 / k as f64),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(spec: &GridSpec) -> (ScalarField, ScalarField) {
        let a = ScalarField::from_fn(spec, |p| ((p[0] * 5 + p[1] * 3) % 7) as f32 / 7.0);
        let b = ScalarField::from_fn(spec, |p| ((p[0] + 2 * p[1]) % 5) as f32 / 5.0);
        (a, b)
    }

    fn randomized(spec: &GridSpec) -> InterpNet {
        let mut net = InterpNet::new(&UNetConfig::desk(), spec, 3).unwrap();
        for name in ["flow.out.weight", "refine.out.weight"] {
            let w = net.params.get_mut(name).unwrap();
            for (i, v) in w.data_mut().iter_mut().enumerate() {
                *v = ((i * 31 % 13) as f32 - 6.0) * 0.05;
            }
        }
        net
    }

    #[test]
    fn endpoints_are_exact() {
        let spec = GridSpec::square(2, 16).unwrap();
        let net = randomized(&spec);
        let (a, b) = fields(&spec);
        assert_eq!(net.synthesize(&a, &b, 0.0).unwrap(), a);
        assert_eq!(net.synthesize(&a, &b, 1.0).unwrap(), b);
        assert!(net.synthesize(&a, &b, 1.5).is_err());
        for (t, want) in [(0.0, &a), (1.0, &b)] {
            let mut g = Graph::<f32>::new();
            let p = net.params.bind(&mut g, false);
            let (va, vb) = (g.constant(a.to_tensor()), g.constant(b.to_tensor()));
            let out = net.graph_synthesize(&mut g, &p, va, vb, t);
            for (x, y) in g.value(out).data().iter().zip(want.values()) {
                assert!((x - y).abs() <= 1e-6, "t = {t}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn zero_networks_cross_fade() {
        let spec = GridSpec::square(2, 16).unwrap();
        let net = InterpNet::new(&UNetConfig::desk(), &spec, 0).unwrap();
        let (a, b) = fields(&spec);
        for t in [0.125, 0.5, 0.875] {
            let out = net.synthesize(&a, &b, t).unwrap();
            for i in 0..spec.num_cells() {
                let want = (1.0 - t) * a.values()[i] as f64 + t * b.values()[i] as f64;
                assert!((out.values()[i] as f64 - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn nonnegative_inputs_give_nonnegative_output() {
        let spec = GridSpec::square(2, 16).unwrap();
        let net = randomized(&spec);
        let (a, b) = fields(&spec);
        for j in 1..8 {
            let out = net.synthesize(&a, &b, j as f64 / 8.0).unwrap();
            assert!(out.values().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn second_step_advects_first_endpoint() {
        let spec = GridSpec::square(2, 16).unwrap();
        let net = randomized(&spec);
        let (a, b) = fields(&spec);
        let still = VectorField::zeros(&spec);
        assert_eq!(forward_advect(&a, &still, 5, 0.5).unwrap(), a);
        assert_eq!(
            second_step_interpolate(&net, &a, &still, &b, 3, 8, 0.5).unwrap(),
            first_step_interpolate(&net, &a, &b, 3.0 / 8.0).unwrap()
        );
        let ramp = ScalarField::from_fn(&spec, |p| p[0] as f32);
        let moved = forward_advect(&ramp, &VectorField::constant(&spec, &[1.0, 0.0]), 2, 0.5).unwrap();
        for y in 0..16 {
            for x in 2..16 {
                assert!((moved.at(&[x, y]) - (x as f32 - 1.0)).abs() < 1e-6);
            }
        }
        assert!(second_step_interpolate(&net, &a, &still, &b, 0, 8, 0.5).is_err());
        assert!(second_step_interpolate(&net, &a, &still, &b, 8, 8, 0.5).is_err());
        let last = second_step_interpolate(&net, &a, &still, &b, 7, 8, 0.5).unwrap();
        assert_eq!(last.spec(), a.spec());
    }

    #[test]
    fn step_policy() {
        assert_eq!(choose_step(10, 100, 0.5), Step::Second);
        assert_eq!(choose_step(50, 100, 0.5), Step::Second);
        assert_eq!(choose_step(60, 100, 0.5), Step::First);
        assert_eq!(choose_step(0, 100, 0.0), Step::First);
        assert_eq!(choose_step(100, 100, 1.0), Step::Second);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::square(2, 16).unwrap();
        let net = randomized(&spec);
        let models = InterpModels {
            first: net.clone(),
            second: net,
            switch_fraction: 0.5,
        };
        models.save(dir.path()).unwrap();
        let back = InterpModels::load(dir.path(), 0.5).unwrap();
        let (a, b) = fields(&spec);
        assert_eq!(
            back.first.synthesize(&a, &b, 0.25).unwrap(),
            models.first.synthesize(&a, &b, 0.25).unwrap()
        );
        assert!(crate::correction::CorrectionNet::load(&dir.path().join(FIRST_DIR)).is_err());
    }
}
