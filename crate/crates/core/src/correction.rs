//! Learned correction of a large-step solver result: corrected velocity plus
//! a warped-and-blended density.

use std::path::Path;

use serde::{Deserialize, Serialize};
use smokestep_tensor::{lit, Bound, Graph, ParamSet, Scalar, Var};

use crate::error::{Error, Result};
use crate::fields::{warp, Field, FlowField, GridSpec, ScalarField, VectorField};
use crate::solver::SimState;
use crate::unet::{UNet, UNetConfig};

/// Per-cell network outputs on the input grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionHeads {
    pub v_hat: VectorField,
    pub flow: FlowField,
    pub rho_tilde: ScalarField,
    /// In `[0, 1]`.
    pub alpha: ScalarField,
}

/// Graph handles of the heads.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub v_hat: Var,
    pub flow: Var,
    pub rho_tilde: Var,
    pub alpha: Var,
}

/// Graph handles of the four network inputs, in physical units.
#[derive(Clone, Copy, Debug)]
pub struct CorrectionInputs {
    pub rho0: Var,
    pub vel0: Var,
    pub rho_big: Var,
    pub vel_big: Var,
}

/// What a checkpoint records about the network that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub kind: String,
    pub unet: UNetConfig,
    pub d: usize,
    #[serde(default)]
    pub velocity_rms: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub epoch: Option<usize>,
    #[serde(default)]
    pub val_loss: Option<f64>,
}

pub const CORRECTION_KIND: &str = "correction";

#[derive(Clone, Debug)]
pub struct CorrectionNet {
    unet: UNet,
    pub params: ParamSet<f32>,
    pub velocity_rms: f64,
    pub seed: u64,
}

impl CorrectionNet {
    /// Fresh network for grids like `spec`; depth shrinks to fit the grid.
    pub fn new(cfg: &UNetConfig, spec: &GridSpec, velocity_rms: f64, seed: u64) -> Result<Self> {
        let d = spec.d();
        let cfg = cfg.clone().with_io(2 * (d + 1), 2 * d + 2).fit_to(spec);
        cfg.check_grid(spec)?;
        check_rms(velocity_rms)?;
        let unet = UNet::new(cfg, d, "")?;
        let params = unet.init_seeded(seed);
        Ok(CorrectionNet {
            unet,
            params,
            velocity_rms,
            seed,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.unet.cfg
    }

    pub fn d(&self) -> usize {
        self.unet.d
    }

    pub fn metadata(&self) -> ModelMetadata {
        ModelMetadata {
            kind: CORRECTION_KIND.into(),
            unet: self.unet.cfg.clone(),
            d: self.unet.d,
            velocity_rms: Some(self.velocity_rms),
            seed: self.seed,
            epoch: None,
            val_loss: None,
        }
    }

    fn check_spec(&self, spec: &GridSpec) -> Result<()> {
        if spec.d() != self.d() {
            return Err(Error::Dimension(format!(
                "network expects {}D fields, got {}D",
                self.d(),
                spec.d()
            )));
        }
        self.unet.cfg.check_grid(spec)
    }

    /// Builds the network on `g`. `p` must be `self.params` (or a cast of it)
    /// bound to the same graph.
    pub fn graph_forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound<T>, x: CorrectionInputs) -> HeadVars {
        let d = self.d();
        let inv: T = lit(1.0 / self.velocity_rms);
        let v0 = g.scale(x.vel0, inv);
        let vb = g.scale(x.vel_big, inv);
        let input = g.concat(&[x.rho0, v0, x.rho_big, vb]);
        let out = self.unet.forward(g, p, input);
        let dv = g.slice_channels(out, 0, d);
        let dv = g.scale(dv, lit(self.velocity_rms));
        let v_hat = g.add(x.vel_big, dv);
        let flow = g.slice_channels(out, d, d);
        let rho_tilde = g.slice_channels(out, 2 * d, 1);
        let logit = g.slice_channels(out, 2 * d + 1, 1);
        let alpha = g.sigmoid(logit);
        HeadVars {
            v_hat,
            flow,
            rho_tilde,
            alpha,
        }
    }

    pub fn forward(
        &self,
        rho0: &ScalarField,
        vel0: &VectorField,
        rho_big: &ScalarField,
        vel_big: &VectorField,
    ) -> Result<CorrectionHeads> {
        let spec = rho0.spec();
        for s in [vel0.spec(), rho_big.spec(), vel_big.spec()] {
            spec.ensure_same(s)?;
        }
        self.check_spec(spec)?;
        let mut g = Graph::<f32>::new();
        let p = self.params.bind(&mut g, false);
        let x = CorrectionInputs {
            rho0: g.constant(rho0.to_tensor()),
            vel0: g.constant(vel0.to_tensor()),
            rho_big: g.constant(rho_big.to_tensor()),
            vel_big: g.constant(vel_big.to_tensor()),
        };
        let h = self.graph_forward(&mut g, &p, x);
        Ok(CorrectionHeads {
            v_hat: VectorField::from_tensor(spec, g.value(h.v_hat))?,
            flow: FlowField(VectorField::from_tensor(spec, g.value(h.flow))?),
            rho_tilde: ScalarField::from_tensor(spec, g.value(h.rho_tilde))?,
            alpha: ScalarField::from_tensor(spec, g.value(h.alpha))?,
        })
    }

    /// Corrected state for the large-step result `big` computed from `prev`.
    pub fn correct(&self, big: &SimState, prev: &SimState) -> Result<SimState> {
        let h = self.forward(&prev.rho, &prev.vel, &big.rho, &big.vel)?;
        let rho = fuse_density(&big.rho, &h.flow, &h.rho_tilde, &h.alpha)?.clamp_nonnegative();
        SimState::new(rho, h.v_hat, big.frame_index)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.save_with(dir, None, None)
    }

    pub fn save_with(&self, dir: &Path, epoch: Option<usize>, val_loss: Option<f64>) -> Result<()> {
        let mut meta = self.metadata();
        meta.epoch = epoch;
        meta.val_loss = val_loss;
        let mut p = self.params.clone();
        p.metadata = serde_json::to_value(meta).expect("metadata serializes");
        p.save(dir)?;
        Ok(())
    }

    /// Loads a checkpoint, rebuilding the layout from its metadata.
    pub fn load(dir: &Path) -> Result<Self> {
        let params = ParamSet::<f32>::load(dir)?;
        let meta = read_metadata(dir, &params, CORRECTION_KIND)?;
        let velocity_rms = meta.velocity_rms.unwrap_or(0.0);
        check_rms(velocity_rms)?;
        let unet = UNet::new(meta.unet.clone(), meta.d, "")?;
        let net = CorrectionNet {
            unet,
            params: ParamSet::new(),
            velocity_rms,
            seed: meta.seed,
        };
        net.with_params(params)
    }

    /// Replaces the parameters after checking names and shapes.
    pub fn with_params(mut self, params: ParamSet<f32>) -> Result<Self> {
        params.check_layout(&self.unet.init_seeded(0))?;
        self.params = params;
        Ok(self)
    }

    /// Loads only the tensors of `dir`, which must match this network's layout.
    pub fn load_params(&self, dir: &Path) -> Result<ParamSet<f32>> {
        let p = ParamSet::<f32>::load(dir)?;
        p.check_layout(&self.params)?;
        Ok(p)
    }
}

pub(crate) fn read_metadata(dir: &Path, params: &ParamSet<f32>, kind: &str) -> Result<ModelMetadata> {
    let meta: ModelMetadata = serde_json::from_value(params.metadata.clone())
        .map_err(|e| Error::format(&dir.join("manifest.json"), format!("metadata: {e}")))?;
    if meta.kind != kind {
        return Err(Error::format(
            &dir.join("manifest.json"),
            format!("checkpoint holds a {} model, expected {kind}", meta.kind),
        ));
    }
    Ok(meta)
}

pub(crate) fn check_rms(rms: f64) -> Result<()> {
    if !(rms > 0.0 && rms.is_finite()) {
        return Err(Error::Degenerate(format!("velocity RMS {rms} cannot normalize inputs")));
    }
    Ok(())
}

/// `warp(rho_big, flow) + alpha·rho_tilde`, before clamping.
pub fn fuse_density(
    rho_big: &ScalarField,
    flow: &FlowField,
    rho_tilde: &ScalarField,
    alpha: &ScalarField,
) -> Result<ScalarField> {
    let spec = rho_big.spec();
    spec.ensure_same(rho_tilde.spec())?;
    spec.ensure_same(alpha.spec())?;
    let mut out = warp(rho_big, flow)?;
    for ((o, &r), &a) in out.values_mut().iter_mut().zip(rho_tilde.values()).zip(alpha.values()) {
        *o += a * r;
    }
    Ok(out)
}

/// Graph form of [`fuse_density`].
pub fn fuse_graph<T: Scalar>(g: &mut Graph<T>, rho_big: Var, h: &HeadVars) -> Var {
    let w = g.warp(rho_big, h.flow);
    let r = g.mul(h.alpha, h.rho_tilde);
    g.add(w, r)
}
