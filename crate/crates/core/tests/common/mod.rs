use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smokestep::correction::{fuse_graph, CorrectionInputs, CorrectionNet};
use smokestep::fields::{Field, GridSpec, ScalarField, VectorField};
use smokestep::interpolation::InterpNet;
use smokestep::losses::{
    gradient_loss_graph, l1_graph, perceptual_graph, temporal_graph, FeatureExtractor, ImageScaling, LossWeights,
    TermVars,
};
use smokestep::unet::UNetConfig;
use smokestep_tensor::{Graph, ParamSet, Var};

pub struct Case {
    pub rho0: ScalarField,
    pub vel0: VectorField,
    pub rho_big: ScalarField,
    pub vel_big: VectorField,
    pub rho_gt: ScalarField,
    pub vel_gt: VectorField,
    pub mid: ScalarField,
    pub adv: ScalarField,
}

fn field(spec: &GridSpec, rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> ScalarField {
    ScalarField::new(spec.clone(), (0..spec.num_cells()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn vfield(spec: &GridSpec, rng: &mut ChaCha8Rng) -> VectorField {
    VectorField::new(spec.clone(), (0..2 * spec.num_cells()).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap()
}

pub fn case(spec: &GridSpec) -> Case {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    Case {
        rho0: field(spec, &mut r, 0.1, 0.9),
        vel0: vfield(spec, &mut r),
        rho_big: field(spec, &mut r, 0.1, 0.9),
        vel_big: vfield(spec, &mut r),
        rho_gt: field(spec, &mut r, 0.1, 0.9),
        vel_gt: vfield(spec, &mut r),
        mid: field(spec, &mut r, 0.1, 0.9),
        adv: field(spec, &mut r, 0.1, 0.9),
    }
}

fn randomize(p: &mut ParamSet<f32>, seed: u64, scale: f32) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = p.names().to_vec();
    for n in names {
        for v in p.get_mut(&n).unwrap().data_mut() {
            *v = r.gen_range(-scale..scale);
        }
    }
}

/// Total objective of one sample in double precision; `net_params` are the
/// correction parameters being differentiated.
fn total(
    net: &CorrectionNet,
    net_params: &ParamSet<f64>,
    interp: &InterpNet,
    phi: &FeatureExtractor,
    c: &Case,
) -> (Graph<f64>, Var, Vec<Var>) {
    let w = LossWeights::for_dims(2);
    let mut g = Graph::<f64>::new();
    let b = net_params.bind(&mut g, true);
    let vars = b.vars().to_vec();
    let ph = phi.bind::<f64>(&mut g);
    let x = CorrectionInputs {
        rho0: g.constant(c.rho0.to_tensor()),
        vel0: g.constant(c.vel0.to_tensor()),
        rho_big: g.constant(c.rho_big.to_tensor()),
        vel_big: g.constant(c.vel_big.to_tensor()),
    };
    let h = net.graph_forward(&mut g, &b, x);
    let rho_hat = fuse_graph(&mut g, x.rho_big, &h);
    let v_gt = g.constant(c.vel_gt.to_tensor());
    let r_gt = g.constant(c.rho_gt.to_tensor());
    let vs = ImageScaling::Velocity { rms: net.velocity_rms };
    let ip = interp.params.cast::<f64>();
    let ib = ip.bind(&mut g, false);
    let adv = g.constant(c.adv.to_tensor());
    let mid = interp.graph_synthesize(&mut g, &ib, adv, rho_hat, 3.0 / 8.0);
    let mid_gt = g.constant(c.mid.to_tensor());
    let terms = TermVars {
        rv: l1_graph(&mut g, h.v_hat, v_gt),
        g: gradient_loss_graph(&mut g, h.v_hat, v_gt),
        pv: Some(perceptual_graph(&mut g, &ph, h.v_hat, v_gt, vs, None)),
        tv: temporal_graph(&mut g, x.vel0, h.v_hat, v_gt),
        rr: l1_graph(&mut g, rho_hat, r_gt),
        i: Some(l1_graph(&mut g, mid, mid_gt)),
        pr: Some(perceptual_graph(&mut g, &ph, rho_hat, r_gt, ImageScaling::Density, None)),
        tr: temporal_graph(&mut g, x.rho0, rho_hat, r_gt),
    };
    let t = terms.total(&mut g, &w);
    (g, t, vars)
}

/// Largest relative error between analytic and central-difference
/// gradients over three random entries of every correction parameter.
pub fn total_loss_gradient_error() -> f64 {
    let spec = GridSpec::square(2, 8).unwrap();
    let mut net = CorrectionNet::new(&UNetConfig::tiny(), &spec, 0.4, 1).unwrap();
    randomize(&mut net.params, 2, 0.3);
    let mut interp = InterpNet::new(&UNetConfig::tiny(), &spec, 3).unwrap();
    randomize(&mut interp.params, 4, 0.2);
    let phi = FeatureExtractor::random(0.0625, 5).unwrap();
    let c = case(&spec);
    let p64 = net.params.cast::<f64>();
    let (g, root, vars) = total(&net, &p64, &interp, &phi, &c);
    let grads = g.backward(root);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (pi, name) in p64.names().iter().enumerate() {
        let n = p64.get(name).unwrap().len();
        for _ in 0..3 {
            let e = rng.gen_range(0..n);
            let analytic = grads.get(vars[pi]).unwrap().data()[e];
            let eval = |delta: f64| {
                let mut q = p64.clone();
                q.get_mut(name).unwrap().data_mut()[e] += delta;
                let (g, t, _) = total(&net, &q, &interp, &phi, &c);
                g.item(t)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}
