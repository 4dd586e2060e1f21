//! Semi-Lagrangian smoke solver on a collocated grid.
//!
//! One step applies, in order: sources, velocity self-advection, buoyancy,
//! wall/obstacle conditions, pressure projection, density advection and a
//! non-negativity clamp. Lengths are in cells and velocities in cells per
//! time unit, so a backtrace moves `dt·v` cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{sample_plane, Field, GridSpec, ScalarField, VectorField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Plume2d,
    Circle2d,
    Inflow3d,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plume2d" => Ok(SceneKind::Plume2d),
            "circle2d" => Ok(SceneKind::Circle2d),
            "inflow3d" => Ok(SceneKind::Inflow3d),
            other => Err(Error::Argument(format!("unknown scene {other:?}"))),
        }
    }
}

impl SceneKind {
    pub fn dimensions(self) -> usize {
        match self {
            SceneKind::Plume2d | SceneKind::Circle2d => 2,
            SceneKind::Inflow3d => 3,
        }
    }

    pub fn default_extent(self) -> usize {
        match self {
            SceneKind::Plume2d | SceneKind::Circle2d => 64,
            SceneKind::Inflow3d => 32,
        }
    }
}

/// Axis-aligned box in cell coordinates; a cell belongs to it when its
/// center `c` satisfies `lo ≤ c < hi` on every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SourceBox {
    pub fn contains(&self, cell: [usize; 3]) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .enumerate()
            .all(|(a, (&lo, &hi))| (lo..hi).contains(&(cell[a] as f64)))
    }
}

/// Circle (2D) or sphere (3D) obstacle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub kind: SceneKind,
    pub grid: GridSpec,
    pub source: SourceBox,
    /// Density written into the source box once per step.
    pub emission: f32,
    /// Velocity written into the source box once per step.
    pub inflow: Vec<f32>,
    /// Upward acceleration per unit density.
    pub buoyancy: f32,
    pub obstacle: Option<Obstacle>,
    pub seed: u64,
    pub dt_small: f64,
    pub dt_large: f64,
    pub num_steps: usize,
    pub projection_iters: usize,
    pub projection_tol: f64,
}

impl SceneConfig {
    /// Desk-scale scene with seed-dependent source placement, size, inflow
    /// speed and buoyancy.
    pub fn generate(kind: SceneKind, extent: usize, seed: u64) -> Result<Self> {
        let d = kind.dimensions();
        let grid = GridSpec::square(d, extent)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ce7e);
        let n = extent as f64;
        let cx = n / 2.0 + rng.gen_range(-n / 8.0..n / 8.0);
        let half = n * rng.gen_range(0.06..0.10);
        let mut lo = vec![cx - half, (0.06 * n).floor()];
        let mut hi = vec![cx + half, lo[1] + (0.06 * n).max(2.0)];
        if d == 3 {
            let cz = n / 2.0 + rng.gen_range(-n / 8.0..n / 8.0);
            // vertical stays the second axis; z is depth.
            lo.push(cz - half);
            hi.push(cz + half);
        }
        let mut inflow = vec![0.0f32; d];
        inflow[1] = rng.gen_range(0.4..0.8);
        if d == 2 {
            inflow[0] = rng.gen_range(-0.15..0.15);
        }
        let buoyancy = rng.gen_range(0.03..0.08);
        let obstacle = match kind {
            SceneKind::Circle2d => Some(Obstacle {
                center: vec![n / 2.0 + rng.gen_range(-n / 16.0..n / 16.0), 0.55 * n],
                radius: 0.1 * n,
            }),
            _ => None,
        };
        Ok(SceneConfig {
            kind,
            grid,
            source: SourceBox { lo, hi },
            emission: 1.0,
            inflow,
            buoyancy,
            obstacle,
            seed,
            dt_small: 0.5,
            dt_large: 4.0,
            num_steps: 64,
            projection_iters: 500,
            projection_tol: 1e-3,
        })
    }

    /// Ratio `dt_large / dt_small`, required to be a positive integer.
    pub fn k(&self) -> Result<usize> {
        steps_in(self.dt_large, self.dt_small)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k()?;
        if !self.num_steps.is_multiple_of(k) {
            return Err(Error::Config(format!(
                "num_steps {} is not a multiple of k = {k}",
                self.num_steps
            )));
        }
        let d = self.grid.d();
        if self.source.lo.len() != d || self.source.hi.len() != d || self.inflow.len() != d {
            return Err(Error::Config("source box / inflow dimensionality".into()));
        }
        if self.projection_iters == 0 {
            return Err(Error::Config("projection_iters must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> SimState {
        SimState {
            rho: ScalarField::zeros(&self.grid),
            vel: VectorField::zeros(&self.grid),
            frame_index: 0,
        }
    }
}

pub(crate) fn steps_in(dt: f64, dt_small: f64) -> Result<usize> {
    if !(dt > 0.0 && dt_small > 0.0) {
        return Err(Error::Config(format!("time-steps must be positive ({dt}, {dt_small})")));
    }
    let r = dt / dt_small;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "{dt} is not a positive integer multiple of {dt_small}"
        )));
    }
    Ok(k as usize)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleMask {
    spec: GridSpec,
    solid: Vec<bool>,
}

impl ObstacleMask {
    pub fn empty(spec: &GridSpec) -> Self {
        ObstacleMask {
            spec: spec.clone(),
            solid: vec![false; spec.num_cells()],
        }
    }

    pub fn from_obstacle(spec: &GridSpec, obstacle: Option<&Obstacle>) -> Self {
        let mut m = Self::empty(spec);
        if let Some(o) = obstacle {
            for (i, s) in m.solid.iter_mut().enumerate() {
                let c = spec.cell(i);
                let r2: f64 = (0..spec.d()).map(|a| (c[a] as f64 - o.center[a]).powi(2)).sum();
                *s = r2 <= o.radius * o.radius;
            }
        }
        m
    }

    pub fn is_solid(&self, i: usize) -> bool {
        self.solid[i]
    }

    pub fn count(&self) -> usize {
        self.solid.iter().filter(|&&s| s).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub rho: ScalarField,
    pub vel: VectorField,
    /// Position in small-step units.
    pub frame_index: usize,
}

impl SimState {
    pub fn new(rho: ScalarField, vel: VectorField, frame_index: usize) -> Result<Self> {
        rho.spec().ensure_same(vel.spec())?;
        if rho.values().iter().any(|&v| v < 0.0) {
            return Err(Error::Argument("density must be non-negative".into()));
        }
        Ok(SimState { rho, vel, frame_index })
    }

    pub fn spec(&self) -> &GridSpec {
        self.rho.spec()
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.rho.values().iter().chain(self.vel.values()).all(|v| v.is_finite())
    }
}

/// Outcome of a pressure solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionReport {
    pub iterations: usize,
    /// Max |divergence| over interior fluid cells after the solve.
    pub residual: f64,
}

/// A scene together with its precomputed obstacle mask.
#[derive(Clone, Debug)]
pub struct Solver {
    scene: SceneConfig,
    mask: ObstacleMask,
}

impl Solver {
    pub fn new(scene: SceneConfig) -> Result<Self> {
        scene.validate()?;
        let mask = ObstacleMask::from_obstacle(&scene.grid, scene.obstacle.as_ref());
        Ok(Solver { scene, mask })
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn mask(&self) -> &ObstacleMask {
        &self.mask
    }

    pub fn step(&self, state: &SimState, dt: f64) -> Result<SimState> {
        let advance = steps_in(dt, self.scene.dt_small)?;
        let s = add_source(state, &self.scene);
        let vel = advect_vector(&s.vel, &s.vel, dt)?;
        let vel = apply_buoyancy(&vel, &s.rho, self.scene.buoyancy, dt)?;
        let vel = enforce_boundaries(&vel, &self.mask);
        let (vel, _) = pressure_project(&vel, &self.mask, self.scene.projection_iters, self.scene.projection_tol);
        let mut rho = advect(&s.rho, &vel, dt)?;
        for (i, r) in rho.values_mut().iter_mut().enumerate() {
            if self.mask.is_solid(i) || *r < 0.0 {
                *r = 0.0;
            }
        }
        let next = SimState {
            rho,
            vel,
            frame_index: state.frame_index + advance,
        };
        if !next.is_finite() {
            return Err(Error::Diverged {
                frame: next.frame_index,
                what: "non-finite density or velocity".into(),
            });
        }
        Ok(next)
    }

    /// `count` consecutive steps of size `dt`.
    pub fn run(&self, state: &SimState, dt: f64, count: usize) -> Result<SimState> {
        let mut s = state.clone();
        for _ in 0..count {
            s = self.step(&s, dt)?;
        }
        Ok(s)
    }
}

/// One solver step for `scene`; see [`Solver::step`].
pub fn step(state: &SimState, dt: f64, scene: &SceneConfig) -> Result<SimState> {
    Solver::new(scene.clone())?.step(state, dt)
}

fn backtrace_positions(vel: &VectorField, dt: f64) -> Vec<[f64; 3]> {
    let spec = vel.spec();
    let d = spec.d();
    (0..spec.num_cells())
        .map(|i| {
            let c = spec.cell(i);
            let mut p = [0.0; 3];
            for a in 0..d {
                p[a] = c[a] as f64 - dt * vel.component(a)[i] as f64;
            }
            p
        })
        .collect()
}

fn advect_plane(plane: &[f32], spec: &GridSpec, positions: &[[f64; 3]]) -> Vec<f32> {
    let d = spec.d();
    positions
        .iter()
        .map(|p| sample_plane(plane, spec, &p[..d]) as f32)
        .collect()
}

/// Semi-Lagrangian transport: `out(x) = sample(field, x − dt·vel(x))`.
pub fn advect(field: &ScalarField, vel: &VectorField, dt: f64) -> Result<ScalarField> {
    field.spec().ensure_same(vel.spec())?;
    let pos = backtrace_positions(vel, dt);
    ScalarField::new(field.spec().clone(), advect_plane(field.values(), field.spec(), &pos))
}

/// [`advect`] applied to every component of a vector field.
pub fn advect_vector(field: &VectorField, vel: &VectorField, dt: f64) -> Result<VectorField> {
    field.spec().ensure_same(vel.spec())?;
    let spec = field.spec();
    let pos = backtrace_positions(vel, dt);
    let mut values = Vec::with_capacity(field.values().len());
    for c in 0..spec.d() {
        values.extend(advect_plane(field.component(c), spec, &pos));
    }
    VectorField::new(spec.clone(), values)
}

/// Adds `dt·β·ρ` to the vertical (second) velocity component.
pub fn apply_buoyancy(vel: &VectorField, rho: &ScalarField, beta: f32, dt: f64) -> Result<VectorField> {
    vel.spec().ensure_same(rho.spec())?;
    let mut out = vel.clone();
    let k = (dt as f32) * beta;
    for (v, &r) in out.component_mut(1).iter_mut().zip(rho.values()) {
        *v += k * r;
    }
    Ok(out)
}

/// Writes the emission density (as a floor) and the inflow velocity into the
/// source box.
pub fn add_source(state: &SimState, scene: &SceneConfig) -> SimState {
    let mut out = state.clone();
    let spec = state.spec().clone();
    let n = spec.num_cells();
    for i in 0..n {
        if !scene.source.contains(spec.cell(i)) {
            continue;
        }
        let r = &mut out.rho.values_mut()[i];
        *r = r.max(scene.emission);
        for (c, &u) in scene.inflow.iter().enumerate() {
            out.vel.values_mut()[c * n + i] = u;
        }
    }
    out
}

/// Zeroes the wall-normal component on domain-boundary cells and the whole
/// velocity inside solids; tangential components are left alone.
pub fn enforce_boundaries(vel: &VectorField, mask: &ObstacleMask) -> VectorField {
    let spec = vel.spec().clone();
    let n = spec.num_cells();
    let mut out = vel.clone();
    let values = out.values_mut();
    for i in 0..n {
        let c = spec.cell(i);
        let solid = mask.is_solid(i);
        for a in 0..spec.d() {
            if solid || c[a] == 0 || c[a] + 1 == spec.dims()[a] {
                values[a * n + i] = 0.0;
            }
        }
    }
    out
}

/// Makes `vel` discretely divergence-free on interior fluid cells.
///
/// The update is `v ← v + M·Dᵀq` where `D` is the central-difference
/// divergence restricted to interior fluid cells and `M` masks out the
/// components held fixed (wall-normal components on the domain boundary and
/// every component inside solids). `q` solves `D·M·Dᵀ q = −D v` with Jacobi
/// sweeps whose relaxation weights follow the Chebyshev schedule for the
/// spectrum of the diagonally scaled operator, stopping after `iters` sweeps
/// or once the divergence drops below `tol`. The corrected field's
/// divergence equals the solver residual, so the report is what callers
/// will measure.
pub fn pressure_project(
    vel: &VectorField,
    mask: &ObstacleMask,
    iters: usize,
    tol: f64,
) -> (VectorField, ProjectionReport) {
    let spec = vel.spec().clone();
    let n = spec.num_cells();
    let d = spec.d();
    let dims = spec.dims().to_vec();
    let strides: Vec<usize> = (0..d).map(|a| dims[..a].iter().product()).collect();

    let interior: Vec<bool> = (0..n).map(|i| !spec.on_boundary(i) && !mask.is_solid(i)).collect();
    let free_mask: Vec<Vec<bool>> = (0..d)
        .map(|a| {
            (0..n)
                .map(|i| {
                    let c = spec.cell(i);
                    !(mask.is_solid(i) || c[a] == 0 || c[a] + 1 == dims[a])
                })
                .collect()
        })
        .collect();
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            if !interior[i] {
                return 0.0;
            }
            let diag: f64 = (0..d)
                .map(|a| {
                    let s = strides[a];
                    0.25 * (free_mask[a][i + s] as u8 as f64 + free_mask[a][i - s] as u8 as f64)
                })
                .sum();
            if diag > 0.0 {
                1.0 / diag
            } else {
                0.0
            }
        })
        .collect();

    let div = |u: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = if interior[i] {
                (0..d)
                    .map(|a| {
                        let s = strides[a];
                        0.5 * (u[a * n + i + s] - u[a * n + i - s])
                    })
                    .sum()
            } else {
                0.0
            };
        }
    };
    // u = M·Dᵀq
    let grad = |q: &[f64], u: &mut [f64]| {
        for a in 0..d {
            let s = strides[a];
            for i in 0..n {
                u[a * n + i] = if free_mask[a][i] {
                    let lo = if i >= s && interior[i - s] { q[i - s] } else { 0.0 };
                    let hi = if i + s < n && interior[i + s] { q[i + s] } else { 0.0 };
                    0.5 * (lo - hi)
                } else {
                    0.0
                };
            }
        }
    };

    let mut v: Vec<f64> = vel.values().iter().map(|&x| x as f64).collect();
    // r holds the divergence of the current v, i.e. minus the residual of
    // A·q = −D v.
    let mut r = vec![0.0; n];
    div(&v, &mut r);
    let max_abs = |r: &[f64]| r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut residual = max_abs(&r);

    // Spectrum bounds of diag(A)⁻¹A: at most 2, smallest near the lowest
    // mode along the longest axis.
    let longest = *dims.iter().max().unwrap() as f64;
    let lmax = 2.0;
    let lmin = 0.5 * (1.0 - (2.0 * std::f64::consts::PI / longest).cos());
    let theta = 0.5 * (lmax + lmin);
    let delta = 0.5 * (lmax - lmin);
    let sigma = theta / delta;
    let mut rho = 1.0 / sigma;

    let mut dq: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, w)| -ri * w / theta).collect();
    let mut du = vec![0.0f64; d * n];
    let mut adq = vec![0.0f64; n];
    let mut it = 0;
    while it < iters && residual >= tol {
        it += 1;
        grad(&dq, &mut du);
        div(&du, &mut adq);
        for (x, u) in v.iter_mut().zip(&du) {
            *x += u;
        }
        for (ri, a) in r.iter_mut().zip(&adq) {
            *ri += a;
        }
        residual = max_abs(&r);
        let rho_next = 1.0 / (2.0 * sigma - rho);
        for i in 0..n {
            dq[i] = rho_next * rho * dq[i] - 2.0 * rho_next / delta * r[i] * inv_diag[i];
        }
        rho = rho_next;
    }
    let values = v.iter().map(|&x| x as f32).collect();
    let out = VectorField::new(spec, values).expect("same layout");
    (out, ProjectionReport { iterations: it, residual })
}

/// Max |divergence| over interior fluid cells.
pub fn interior_divergence(vel: &VectorField, mask: &ObstacleMask) -> f64 {
    let div = crate::fields::divergence(vel);
    let spec = vel.spec();
    (0..spec.num_cells())
        .filter(|&i| !spec.on_boundary(i) && !mask.is_solid(i))
        .fold(0.0f64, |m, i| m.max(div.values()[i].abs() as f64))
}
