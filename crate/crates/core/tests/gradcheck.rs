mod common;

use smokestep::fields::{Field, GridSpec};
use smokestep::losses::{gradient_loss_graph, l1_graph, perceptual_graph, temporal_graph, FeatureExtractor, ImageScaling};
use smokestep_tensor::{Graph, Tensor, Var};

#[test]
fn total_loss_gradient_matches_finite_differences() {
    let worst = common::total_loss_gradient_error();
    assert!(worst <= 1e-2, "worst relative error {worst}");
}

#[test]
fn loss_terms_are_differentiable_in_predictions() {
    let spec = GridSpec::square(2, 8).unwrap();
    let c = common::case(&spec);
    let phi = FeatureExtractor::random(0.0625, 1).unwrap();
    type Build = fn(&mut Graph<f64>, &smokestep::losses::ExtractorBinding<f64>, Var, Var, Var) -> Var;
    let builds: Vec<(&str, Build, bool)> = vec![
        ("l1", |g, _, p, t, _| l1_graph(g, p, t), false),
        ("gradient", |g, _, p, t, _| gradient_loss_graph(g, p, t), true),
        ("temporal", |g, _, p, t, b| temporal_graph(g, b, p, t), false),
        ("perceptual_density", |g, ph, p, t, _| perceptual_graph(g, ph, p, t, ImageScaling::Density, None), false),
        ("perceptual_velocity", |g, ph, p, t, _| {
            perceptual_graph(g, ph, p, t, ImageScaling::Velocity { rms: 0.4 }, None)
        }, true),
    ];
    for (name, build, vector) in builds {
        let (pred, gt, base): (Tensor<f64>, Tensor<f64>, Tensor<f64>) = if vector {
            (c.vel_big.to_tensor(), c.vel_gt.to_tensor(), c.vel0.to_tensor())
        } else {
            (c.rho_big.to_tensor(), c.rho_gt.to_tensor(), c.rho0.to_tensor())
        };
        let eval = |x: &Tensor<f64>| {
            let mut g = Graph::<f64>::new();
            let ph = phi.bind::<f64>(&mut g);
            let p = g.param(x.clone());
            let t = g.constant(gt.clone());
            let b = g.constant(base.clone());
            let out = build(&mut g, &ph, p, t, b);
            (g.item(out), g.backward(out).get(p).cloned())
        };
        let (v0, grad) = eval(&pred);
        assert!(v0 > 0.0, "{name}");
        let grad = grad.unwrap();
        for e in [0, 5, 17, 40, pred.len() - 1] {
            let mut a = pred.clone();
            let mut b = pred.clone();
            a.data_mut()[e] += 1e-6;
            b.data_mut()[e] -= 1e-6;
            let numeric = (eval(&a).0 - eval(&b).0) / 2e-6;
            let analytic = grad.data()[e];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(rel <= 1e-2, "{name}[{e}]: {analytic} vs {numeric}");
        }
    }
}
