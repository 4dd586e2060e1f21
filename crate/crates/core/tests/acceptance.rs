//! Acceptance checks, one PASS/FAIL line each.
//!
//! The training-based checks (5 to 8) build a desk-scale corpus and train
//! both networks, which takes on the order of an hour on one CPU core. Set
//! `SMOKESTEP_ACCEPTANCE_DIR` to keep the corpus and models between runs;
//! an existing directory is reused as is.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smokestep::correction::{fuse_density, CorrectionNet};
use smokestep::datagen::{
    build_pairs, generate_corpus, generate_simulation, Corpus, CorpusConfig, SimulationArchive,
};
use smokestep::fields::{project_mean, warp, Axis, Field, FlowField, GridSpec, ScalarField, VectorField};
use smokestep::interpolation::{InterpModels, InterpNet};
use smokestep::losses::{
    gradient_loss, interpolation_loss, l1_reconstruction, perceptual_loss_2d, perceptual_loss_3d,
    perceptual_loss_axis, temporal_coherence_loss, FeatureExtractor, ImageScaling, LossTerms, LossWeights,
};
use smokestep::metrics::{correction_errors, mean, per_frame_curve};
use smokestep::rollout::{interpolate_interval, run, run_uncorrected, Timings};
use smokestep::solver::{
    advect, enforce_boundaries, interior_divergence, pressure_project, ObstacleMask, SceneConfig, SceneKind, Solver,
};
use smokestep::training::{train_correction, train_interpolation, TrainConfig, TrainData, CORRECTION_DIR};
use smokestep_tensor::Graph;

const INTERP_EPOCHS: usize = 10;
const CORRECTION_EPOCHS: usize = 30;

type Check = Result<(bool, String), Box<dyn std::error::Error>>;

fn random_field(spec: &GridSpec, rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> ScalarField {
    ScalarField::new(spec.clone(), (0..spec.num_cells()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn random_vector(spec: &GridSpec, rng: &mut ChaCha8Rng, scale: f32) -> VectorField {
    VectorField::new(spec.clone(), (0..spec.d() * spec.num_cells()).map(|_| rng.gen_range(-scale..scale)).collect())
        .unwrap()
}

fn solver_correctness() -> Check {
    let spec = GridSpec::square(2, 64)?;
    let mask = ObstacleMask::empty(&spec);
    let mut worst_div: f64 = 0.0;
    let mut worst_time: f64 = 0.0;
    let mut max_iters = 0;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vel = enforce_boundaries(&random_vector(&spec, &mut rng, 1.0), &mask);
        let t = Instant::now();
        let (out, rep) = pressure_project(&vel, &mask, 500, 1e-3);
        worst_time = worst_time.max(t.elapsed().as_secs_f64());
        worst_div = worst_div.max(interior_divergence(&out, &mask));
        max_iters = max_iters.max(rep.iterations);
    }
    let ramp = ScalarField::from_fn(&spec, |p| (0.7 * p[0] as f64 / 64.0 + 0.2 * p[1] as f64 / 64.0) as f32);
    let (vx, vy, dt) = (0.6f64, -0.3f64, 2.0f64);
    let out = advect(&ramp, &VectorField::constant(&spec, &[vx as f32, vy as f32]), dt)?;
    let mut ramp_err: f64 = 0.0;
    for i in 0..spec.num_cells() {
        let c = spec.cell(i);
        let (x, y) = (c[0] as f64 - dt * vx, c[1] as f64 - dt * vy);
        if spec.on_boundary(i) || x < 0.0 || y > 63.0 {
            continue;
        }
        let want = 0.7 * x / 64.0 + 0.2 * y / 64.0;
        ramp_err = ramp_err.max((out.values()[i] as f64 - want).abs());
    }
    let pass = worst_div <= 1e-3 && max_iters <= 500 && worst_time < 1.0 && ramp_err <= 1e-6;
    Ok((
        pass,
        format!(
            "max |div| {worst_div:.2e} in ≤ {max_iters} iterations, slowest {worst_time:.3}s; ramp error {ramp_err:.1e}"
        ),
    ))
}

fn property_suite() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = GridSpec::square(2, 32)?;
    let mut ok = true;
    let mut notes = Vec::new();

    for _ in 0..100 {
        let f = random_field(&spec, &mut rng, -2.0, 2.0);
        let w = warp(&f, &FlowField::zeros(&spec))?;
        ok &= w.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    }

    let s3 = GridSpec::square(3, 8)?;
    let mut pm_err: f64 = 0.0;
    for _ in 0..20 {
        let f = random_field(&s3, &mut rng, 0.0, 1.0);
        for axis in Axis::ALL {
            let p = project_mean(&f, axis)?;
            let a = axis.index();
            let (r, s) = match a {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            for j in 0..8 {
                for i in 0..8 {
                    let mut sum = 0.0f64;
                    for t in 0..8 {
                        let mut cell = [0usize; 3];
                        cell[a] = t;
                        cell[r] = i;
                        cell[s] = j;
                        sum += f.at(&cell) as f64;
                    }
                    pm_err = pm_err.max((p.at(&[i, j]) as f64 * 8.0 - sum).abs() / sum.abs());
                }
            }
        }
    }
    ok &= pm_err <= 1e-5;
    notes.push(format!("project_mean rel err {pm_err:.1e}"));

    let phi = FeatureExtractor::random(0.25, 0)?;
    let vs = ImageScaling::Velocity { rms: 0.3 };
    let interp = InterpNet::new(&smokestep::unet::UNetConfig::desk(), &spec, 0)?;
    let mut min_term = f64::INFINITY;
    let mut max_at_truth: f64 = 0.0;
    for _ in 0..5 {
        let (p, g, b) = (
            random_vector(&spec, &mut rng, 1.0),
            random_vector(&spec, &mut rng, 1.0),
            random_vector(&spec, &mut rng, 1.0),
        );
        let (rp, rg, rb) = (
            random_field(&spec, &mut rng, 0.0, 1.0),
            random_field(&spec, &mut rng, 0.0, 1.0),
            random_field(&spec, &mut rng, 0.0, 1.0),
        );
        let terms = [
            l1_reconstruction(&p, &g)?,
            gradient_loss(&p, &g)?,
            perceptual_loss_2d(&p, &g, &phi, vs)?,
            temporal_coherence_loss(&b, &p, &g)?,
            l1_reconstruction(&rp, &rg)?,
            interpolation_loss(&interp, &rb, &b, &rp, &rg, 3, 8, 0.5)?,
            perceptual_loss_2d(&rp, &rg, &phi, ImageScaling::Density)?,
            temporal_coherence_loss(&rb, &rp, &rg)?,
        ];
        min_term = terms.iter().copied().fold(min_term, f64::min);
        let mid = smokestep::interpolation::second_step_interpolate(&interp, &rb, &b, &rp, 3, 8, 0.5)?;
        let at_truth = [
            l1_reconstruction(&g, &g)?,
            gradient_loss(&g, &g)?,
            perceptual_loss_2d(&g, &g, &phi, vs)?,
            temporal_coherence_loss(&b, &g, &g)?,
            l1_reconstruction(&rg, &rg)?,
            interpolation_loss(&interp, &rb, &b, &rp, &mid, 3, 8, 0.5)?,
            perceptual_loss_2d(&rg, &rg, &phi, ImageScaling::Density)?,
            temporal_coherence_loss(&rb, &rg, &rg)?,
        ];
        max_at_truth = at_truth.iter().copied().fold(max_at_truth, f64::max);
    }
    ok &= min_term >= 0.0 && max_at_truth == 0.0;
    notes.push(format!("min term {min_term:.2e}, max at truth {max_at_truth:e}"));

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
    let w2 = LossWeights::for_dims(2);
    let lv = unit.velocity(&w2);
    ok &= lv == 90.1 && unit.total(&w2) == lv + unit.density(&w2);
    notes.push(format!("unit L_v {lv}"));

    let rb = random_field(&spec, &mut rng, 0.0, 1.0);
    let flow = FlowField(random_vector(&spec, &mut rng, 2.0));
    let rt = random_field(&spec, &mut rng, -0.5, 0.5);
    let al = random_field(&spec, &mut rng, 0.0, 1.0);
    let fused = fuse_density(&rb, &flow, &rt, &al)?;
    let warped = warp(&rb, &flow)?;
    ok &= (0..spec.num_cells()).all(|i| fused.values()[i] == warped.values()[i] + al.values()[i] * rt.values()[i]);

    let secs = t.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    notes.push(format!("{secs:.1}s"));
    Ok((ok, notes.join("; ")))
}

fn differentiability() -> Check {
    let t = Instant::now();
    let worst = common::total_loss_gradient_error();
    let secs = t.elapsed().as_secs_f64();
    Ok((worst <= 1e-2 && secs < 120.0, format!("worst relative error {worst:.2e}, {secs:.1}s")))
}

fn same_files(a: &Path, b: &Path) -> std::io::Result<bool> {
    let mut names: Vec<_> = std::fs::read_dir(a)?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>()?;
    names.sort();
    let mut other: Vec<_> = std::fs::read_dir(b)?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>()?;
    other.sort();
    if names != other {
        return Ok(false);
    }
    for n in names {
        if std::fs::read(a.join(&n))? != std::fs::read(b.join(&n))? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn dataset_protocol(tmp: &Path) -> Check {
    let mut scene = SceneConfig::generate(SceneKind::Plume2d, 64, 17)?;
    scene.num_steps = 200;
    let (a, b) = (tmp.join("f200_a"), tmp.join("f200_b"));
    let archive = generate_simulation(&scene, &a)?;
    generate_simulation(&scene, &b)?;
    let k = archive.k()?;
    let pairs = build_pairs(&SimulationArchive::open(&a)?, k)?.len();
    let identical = same_files(&a, &b)?;
    Ok((pairs == 25 && k == 8 && identical, format!("k = {k}, {pairs} pairs, bit-identical rerun: {identical}")))
}

struct Trained {
    corpus: Corpus,
    interp: InterpModels,
    net: CorrectionNet,
}

fn train(root: &Path) -> Result<Trained, Box<dyn std::error::Error>> {
    let corpus = if root.join("stats.json").exists() {
        Corpus::open(root)?
    } else {
        generate_corpus(&CorpusConfig::default(), root)?
    };
    let data = TrainData::from_corpus(&corpus)?;
    let idir = root.join("interp");
    let interp = if idir.join("interp_second").exists() {
        InterpModels::load(&idir, 0.5)?
    } else {
        let cfg = TrainConfig {
            epochs: INTERP_EPOCHS,
            ..TrainConfig::default()
        };
        train_interpolation(&data, &cfg, &idir)?.0
    };
    let cdir = root.join("correct");
    let net = if cdir.join(CORRECTION_DIR).exists() {
        CorrectionNet::load(&cdir.join(CORRECTION_DIR))?
    } else {
        let cfg = TrainConfig {
            epochs: CORRECTION_EPOCHS,
            ..TrainConfig::default()
        };
        train_correction(&data, Some(&interp), &cfg, &cdir)?.0
    };
    Ok(Trained { corpus, interp, net })
}

fn trainability(t: &Trained, secs: f64) -> Check {
    let test = t.corpus.load_pairs(&t.corpus.split.test)?;
    let [rho, vel] = correction_errors(&t.net, &test)?;
    let pass = rho.reduced_pct >= 50.0 && vel.reduced_pct >= 50.0 && secs <= 4.0 * 3600.0;
    Ok((
        pass,
        format!(
            "{} test pairs: density {:.3e} → {:.3e} ({:.1}%), velocity {:.3e} → {:.3e} ({:.1}%), {} train / {} test sims, {:.0}s",
            test.len(),
            rho.before,
            rho.after,
            rho.reduced_pct,
            vel.before,
            vel.after,
            vel.reduced_pct,
            t.corpus.split.train.len() + t.corpus.split.val.len(),
            t.corpus.split.test.len(),
            secs
        ),
    ))
}

fn held_out(t: &Trained, i: usize) -> Result<(Solver, SimulationArchive), Box<dyn std::error::Error>> {
    let archive = SimulationArchive::open(&t.corpus.root.join(&t.corpus.split.test[i]))?;
    let solver = Solver::new(archive.manifest().scene.clone())?;
    Ok((solver, archive))
}

fn rollout_ordering(t: &Trained) -> Check {
    let mut ratios = Vec::new();
    for i in 0..t.corpus.split.test.len() {
        let (solver, archive) = held_out(t, i)?;
        let init = archive.read_sim_state(0)?;
        let n = archive.num_steps();
        let gt: Vec<_> = (1..=n).map(|f| archive.read_density(f)).collect::<Result<_, _>>()?;
        let c = run(&solver, &t.net, &t.interp, &init, n)?;
        let u = run_uncorrected(&solver, &t.interp, &init, n)?;
        let mc = mean(&per_frame_curve(&c.densities, &gt)?);
        let mu = mean(&per_frame_curve(&u.densities, &gt)?);
        ratios.push(mc / mu);
    }
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let list: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok((worst <= 0.8, format!("corrected/uncorrected MSE per held-out scene [{}]", list.join(", "))))
}

fn interpolation_contracts(t: &Trained) -> Check {
    let (solver, archive) = held_out(t, 0)?;
    let k = solver.scene().k()?;
    let a = archive.read_sim_state(k)?;
    let b = archive.read_density(2 * k)?;
    let mut endpoint_err: f64 = 0.0;
    for net in [&t.interp.first, &t.interp.second] {
        for (time, want) in [(0.0, &a.rho), (1.0, &b)] {
            let mut g = Graph::<f32>::new();
            let p = net.params.bind(&mut g, false);
            let (va, vb) = (g.constant(a.rho.to_tensor()), g.constant(b.to_tensor()));
            let out = net.graph_synthesize(&mut g, &p, va, vb, time);
            for (x, y) in g.value(out).data().iter().zip(want.values()) {
                endpoint_err = endpoint_err.max((x - y).abs() as f64);
            }
            let direct = net.synthesize(&a.rho, &b, time)?;
            for (x, y) in direct.values().iter().zip(want.values()) {
                endpoint_err = endpoint_err.max((x - y).abs() as f64);
            }
        }
    }
    let dt = solver.scene().dt_small;
    let forward: Vec<usize> = (1..k).collect();
    let mut shuffled = forward.clone();
    shuffled.reverse();
    shuffled.rotate_left(2);
    let mut independent = true;
    for n in [k, 4 * k] {
        let x = interpolate_interval(&t.interp, &a, &b, n, k, dt, &forward)?;
        let y = interpolate_interval(&t.interp, &a, &b, n, k, dt, &shuffled)?;
        for (pos, j) in shuffled.iter().enumerate() {
            let (p, q) = (&x[j - 1], &y[pos]);
            independent &= p.values().iter().zip(q.values()).all(|(u, v)| u.to_bits() == v.to_bits());
        }
    }
    Ok((
        endpoint_err <= 1e-5 && independent,
        format!("endpoint error {endpoint_err:.1e}; permuted order bit-identical: {independent}"),
    ))
}

fn accounting(t: &Trained, tmp: &Path) -> Check {
    let (solver, archive) = held_out(t, 0)?;
    let init = archive.read_sim_state(0)?;
    let out = run(&solver, &t.net, &t.interp, &init, 16)?;
    let c = out.counters;
    let dir = tmp.join("rollout16");
    out.write(&dir, &solver, &init)?;
    let timings: Timings = serde_json::from_str(&std::fs::read_to_string(dir.join("timings.json"))?)?;
    let pass = out.densities.len() == 16
        && c.solver_calls == 2
        && c.corrections == 2
        && c.interpolations == 14
        && timings.correction_s < timings.interpolation_s;
    Ok((
        pass,
        format!(
            "{} frames, solver {} / correction {} / interpolation {} calls; correction {:.3}s vs interpolation {:.3}s",
            out.densities.len(),
            c.solver_calls,
            c.corrections,
            c.interpolations,
            timings.correction_s,
            timings.interpolation_s
        ),
    ))
}

fn perceptual_projection() -> Check {
    let spec = GridSpec::square(3, 16)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pred = random_field(&spec, &mut rng, 0.0, 1.0);
    let gt = ScalarField::from_fn(&spec, |p| ((p[0] + 2 * p[1] + 3 * p[2]) % 16) as f32 / 16.0);
    let phi = FeatureExtractor::random(0.25, 0)?;
    let s = ImageScaling::Density;
    let axes: Vec<f64> = Axis::ALL
        .iter()
        .map(|&a| perceptual_loss_axis(&pred, &gt, &phi, s, a))
        .collect::<Result<_, _>>()?;
    let target = mean(&axes);
    let mut draws = ChaCha8Rng::seed_from_u64(10);
    let mut sum = 0.0;
    for _ in 0..3000 {
        sum += perceptual_loss_3d(&pred, &gt, &phi, s, &mut draws)?;
    }
    let mc = sum / 3000.0;
    let rel = (mc - target).abs() / target;
    Ok((
        rel <= 0.05,
        format!(
            "per-axis [{:.4}, {:.4}, {:.4}], mean {target:.4}, 3000-draw mean {mc:.4} ({:.2}%)",
            axes[0],
            axes[1],
            axes[2],
            100.0 * rel
        ),
    ))
}

fn report(id: usize, name: &str, check: Check) -> bool {
    let (pass, detail) = match check {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    println!("{} {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() -> ExitCode {
    let _ = env_logger::builder().is_test(true).try_init();
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root: PathBuf = std::env::var_os("SMOKESTEP_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| tmp.path().join("desk"));

    let mut all = true;
    all &= report(1, "solver correctness", solver_correctness());
    all &= report(2, "fields/loss properties", property_suite());
    all &= report(3, "differentiability", differentiability());
    all &= report(4, "dataset protocol", dataset_protocol(tmp.path()));
    all &= report(9, "3D perceptual projection", perceptual_projection());

    let start = Instant::now();
    match train(&root) {
        Ok(t) => {
            let secs = start.elapsed().as_secs_f64();
            all &= report(5, "trainability", trainability(&t, secs));
            all &= report(6, "rollout ordering", rollout_ordering(&t));
            all &= report(7, "interpolation contracts", interpolation_contracts(&t));
            all &= report(8, "rollout accounting", accounting(&t, tmp.path()));
        }
        Err(e) => {
            for (id, name) in [
                (5, "trainability"),
                (6, "rollout ordering"),
                (7, "interpolation contracts"),
                (8, "rollout accounting"),
            ] {
                all &= report(id, name, Err(format!("training failed: {e}").into()));
            }
        }
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
