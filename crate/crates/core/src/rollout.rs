//! The production loop: one large solver step, a correction, then the
//! intermediate frames of the interval, repeated until frame `N`.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::correction::CorrectionNet;
use crate::datagen::{ArchiveManifest, SimulationArchive};
use crate::error::{Error, Result};
use crate::fields::{Field, ScalarField, VectorField};
use crate::interpolation::InterpModels;
use crate::solver::{SimState, Solver};

pub const TIMINGS_FILE: &str = "timings.json";

/// Maps a large-step result (and the state it came from) to the state fed
/// to the next solver call.
pub trait Corrector {
    fn correct(&self, big: &SimState, prev: &SimState) -> Result<SimState>;
}

impl Corrector for CorrectionNet {
    fn correct(&self, big: &SimState, prev: &SimState) -> Result<SimState> {
        CorrectionNet::correct(self, big, prev)
    }
}

/// Leaves the solver output unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct PassThrough;

impl Corrector for PassThrough {
    fn correct(&self, big: &SimState, _prev: &SimState) -> Result<SimState> {
        Ok(big.clone())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub solver_calls: usize,
    pub corrections: usize,
    pub interpolations: usize,
}

/// Wall-clock seconds per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub solver_s: f64,
    pub correction_s: f64,
    pub interpolation_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug)]
pub struct RolloutOutput {
    /// Frames `1..=N`; entry `i` holds frame `i + 1`.
    pub densities: Vec<ScalarField>,
    /// Corrected velocity at frames `k, 2k, ..., N`.
    pub velocities: Vec<(usize, VectorField)>,
    pub counters: Counters,
    pub timings: Timings,
}

impl RolloutOutput {
    pub fn frame(&self, index: usize) -> &ScalarField {
        &self.densities[index - 1]
    }

    /// Writes the frames as an archive (velocity every `k` frames) plus
    /// `timings.json`.
    pub fn write(&self, dir: &Path, solver: &Solver, initial: &SimState) -> Result<SimulationArchive> {
        let scene = solver.scene();
        let k = scene.k()?;
        let mut manifest = ArchiveManifest::for_scene(scene);
        manifest.num_steps = self.densities.len();
        manifest.velocity_stride = Some(k);
        let mut archive = SimulationArchive::create(dir, manifest)?;
        archive.write_state(0, &initial.rho, &initial.vel)?;
        for (i, rho) in self.densities.iter().enumerate() {
            archive.write_density(i + 1, rho)?;
        }
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for (f, v) in &self.velocities {
            archive.write_state(*f, self.frame(*f), v)?;
            sum_sq += v.values().iter().map(|&x| (x as f64).powi(2)).sum::<f64>();
            count += v.values().len();
        }
        archive.finish(if count > 0 { (sum_sq / count as f64).sqrt() } else { 0.0 })?;
        let path = dir.join(TIMINGS_FILE);
        fs::write(&path, serde_json::to_string_pretty(&self.timings).unwrap()).map_err(Error::io(&path))?;
        Ok(archive)
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn check_finite(rho: &ScalarField, frame: usize, what: &str) -> Result<()> {
    if rho.values().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged {
            frame,
            what: what.into(),
        })
    }
}

/// Intermediate frames `j ∈ order` of the interval starting at `a`, returned
/// in `order`. Each frame depends only on the interval endpoints.
#[allow(clippy::too_many_arguments)]
pub fn interpolate_interval(
    interp: &InterpModels,
    a: &SimState,
    rho_b: &ScalarField,
    n: usize,
    k: usize,
    dt_small: f64,
    order: &[usize],
) -> Result<Vec<ScalarField>> {
    order
        .iter()
        .map(|&j| {
            let frame = a.frame_index + j;
            let rho = interp.interpolate(frame, n, &a.rho, &a.vel, rho_b, j, k, dt_small)?;
            check_finite(&rho, frame, "interpolated density is not finite")?;
            Ok(rho)
        })
        .collect()
}

/// Runs the loop from `initial` (frame 0) to frame `n`.
pub fn run(
    solver: &Solver,
    corrector: &dyn Corrector,
    interp: &InterpModels,
    initial: &SimState,
    n: usize,
) -> Result<RolloutOutput> {
    let scene = solver.scene();
    let k = scene.k()?;
    if initial.frame_index != 0 {
        return Err(Error::Argument(format!(
            "rollout starts at frame 0, not {}",
            initial.frame_index
        )));
    }
    if n == 0 || !n.is_multiple_of(k) {
        return Err(Error::Argument(format!("frame count {n} must be a positive multiple of k = {k}")));
    }
    initial.spec().ensure_same(&scene.grid)?;
    let start = Instant::now();
    let mut counters = Counters::default();
    let mut timings = Timings::default();
    let mut densities = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n / k);
    let mut state = initial.clone();
    let inner: Vec<usize> = (1..k).collect();
    while state.frame_index < n {
        let t = Instant::now();
        let big = solver.step(&state, scene.dt_large)?;
        timings.solver_s += secs(t.elapsed());
        counters.solver_calls += 1;

        let t = Instant::now();
        let next = corrector.correct(&big, &state)?;
        timings.correction_s += secs(t.elapsed());
        counters.corrections += 1;
        check_finite(&next.rho, next.frame_index, "corrected density is not finite")?;
        if !next.vel.values().iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                frame: next.frame_index,
                what: "corrected velocity is not finite".into(),
            });
        }

        let t = Instant::now();
        let mids = interpolate_interval(interp, &state, &next.rho, n, k, scene.dt_small, &inner)?;
        timings.interpolation_s += secs(t.elapsed());
        counters.interpolations += mids.len();

        densities.extend(mids);
        densities.push(next.rho.clone());
        velocities.push((next.frame_index, next.vel.clone()));
        state = next;
    }
    timings.total_s = secs(start.elapsed());
    Ok(RolloutOutput {
        densities,
        velocities,
        counters,
        timings,
    })
}

/// The same loop with the correction replaced by the identity.
pub fn run_uncorrected(solver: &Solver, interp: &InterpModels, initial: &SimState, n: usize) -> Result<RolloutOutput> {
    run(solver, &PassThrough, interp, initial, n)
}
