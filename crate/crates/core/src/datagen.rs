//! Simulation archives, large/small step training pairs and corpora.
//!
//! One archive per simulation:
//!
//! ```text
//! manifest.json          schema_version, scene, seed, d, dims, dt_small,
//!                        dt_large, num_steps, velocity_rms, complete
//! rho_XXXXX.f32          density of small-step state XXXXX (0..=F)
//! vel_XXXXX.f32          velocity of small-step state XXXXX
//! big_rho_XXXXX.f32      one large step from state XXXXX − k
//! big_vel_XXXXX.f32
//! ```
//!
//! A corpus is a directory of archives plus `split.json` and `stats.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{read_raw, write_raw, Field, GridSpec, ScalarField, VectorField};
use crate::solver::{SceneConfig, SceneKind, SimState, Solver};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const SPLIT: &str = "split.json";
pub const STATS: &str = "stats.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub schema_version: u32,
    pub scene: SceneConfig,
    pub seed: u64,
    pub d: usize,
    pub dims: Vec<usize>,
    pub dt_small: f64,
    pub dt_large: f64,
    pub num_steps: usize,
    pub velocity_rms: f64,
    pub complete: bool,
    /// Set on rollout outputs, which store velocity only every `k` frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_stride: Option<usize>,
}

impl ArchiveManifest {
    pub fn for_scene(scene: &SceneConfig) -> Self {
        ArchiveManifest {
            schema_version: SCHEMA_VERSION,
            scene: scene.clone(),
            seed: scene.seed,
            d: scene.grid.d(),
            dims: scene.grid.dims().to_vec(),
            dt_small: scene.dt_small,
            dt_large: scene.dt_large,
            num_steps: scene.num_steps,
            velocity_rms: 0.0,
            complete: false,
            velocity_stride: None,
        }
    }
}

pub fn rho_name(i: usize) -> String {
    format!("rho_{i:05}.f32")
}

pub fn vel_name(i: usize) -> String {
    format!("vel_{i:05}.f32")
}

pub fn big_rho_name(target: usize) -> String {
    format!("big_rho_{target:05}.f32")
}

pub fn big_vel_name(target: usize) -> String {
    format!("big_vel_{target:05}.f32")
}

/// Handle to one simulation directory.
#[derive(Clone, Debug)]
pub struct SimulationArchive {
    dir: PathBuf,
    manifest: ArchiveManifest,
    spec: GridSpec,
}

impl SimulationArchive {
    /// Starts a new archive; the manifest is written with `complete: false`.
    pub fn create(dir: &Path, manifest: ArchiveManifest) -> Result<Self> {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let spec = GridSpec::new(&manifest.dims)?;
        let a = SimulationArchive {
            dir: dir.to_path_buf(),
            manifest,
            spec,
        };
        a.write_manifest()?;
        Ok(a)
    }

    /// Opens a finished archive.
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
        let manifest: ArchiveManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::format(
                &path,
                format!("unsupported schema_version {}", manifest.schema_version),
            ));
        }
        if !manifest.complete {
            return Err(Error::format(&path, "archive is incomplete"));
        }
        if manifest.dims.len() != manifest.d {
            return Err(Error::format(&path, "dims do not match d"));
        }
        let spec = GridSpec::new(&manifest.dims)?;
        Ok(SimulationArchive {
            dir: dir.to_path_buf(),
            manifest,
            spec,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &ArchiveManifest {
        &self.manifest
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn num_steps(&self) -> usize {
        self.manifest.num_steps
    }

    pub fn k(&self) -> Result<usize> {
        crate::solver::steps_in(self.manifest.dt_large, self.manifest.dt_small)
    }

    fn write_manifest(&self) -> Result<()> {
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(Error::io(&path))
    }

    pub fn finish(&mut self, velocity_rms: f64) -> Result<()> {
        self.manifest.velocity_rms = velocity_rms;
        self.manifest.complete = true;
        self.write_manifest()
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index > self.manifest.num_steps {
            return Err(Error::IndexOutOfRange {
                index,
                max: self.manifest.num_steps,
            });
        }
        Ok(())
    }

    fn write_pair(&self, rho_file: &str, vel_file: &str, rho: &ScalarField, vel: &VectorField) -> Result<()> {
        self.spec.ensure_same(rho.spec())?;
        self.spec.ensure_same(vel.spec())?;
        write_raw(&self.dir.join(rho_file), rho.values())?;
        write_raw(&self.dir.join(vel_file), vel.values())
    }

    pub fn write_state(&self, index: usize, rho: &ScalarField, vel: &VectorField) -> Result<()> {
        self.check_index(index)?;
        self.write_pair(&rho_name(index), &vel_name(index), rho, vel)
    }

    pub fn write_density(&self, index: usize, rho: &ScalarField) -> Result<()> {
        self.check_index(index)?;
        self.spec.ensure_same(rho.spec())?;
        write_raw(&self.dir.join(rho_name(index)), rho.values())
    }

    pub fn write_large_step(&self, target: usize, rho: &ScalarField, vel: &VectorField) -> Result<()> {
        self.check_index(target)?;
        self.write_pair(&big_rho_name(target), &big_vel_name(target), rho, vel)
    }

    pub fn read_density(&self, index: usize) -> Result<ScalarField> {
        self.check_index(index)?;
        let v = read_raw(&self.dir.join(rho_name(index)), self.spec.num_cells())?;
        ScalarField::new(self.spec.clone(), v)
    }

    pub fn read_velocity(&self, index: usize) -> Result<VectorField> {
        self.check_index(index)?;
        let v = read_raw(&self.dir.join(vel_name(index)), self.spec.d() * self.spec.num_cells())?;
        VectorField::new(self.spec.clone(), v)
    }

    pub fn read_state(&self, index: usize) -> Result<(ScalarField, VectorField)> {
        Ok((self.read_density(index)?, self.read_velocity(index)?))
    }

    pub fn read_sim_state(&self, index: usize) -> Result<SimState> {
        let (rho, vel) = self.read_state(index)?;
        SimState::new(rho, vel, index)
    }

    /// Cached large-step result targeting small-step index `target`.
    pub fn read_large_step(&self, target: usize) -> Result<(ScalarField, VectorField)> {
        self.check_index(target)?;
        let rp = self.dir.join(big_rho_name(target));
        let vp = self.dir.join(big_vel_name(target));
        if !rp.exists() || !vp.exists() {
            let k = self.k()?;
            return Err(Error::MissingLargeStep {
                n: target.saturating_sub(k) / k,
            });
        }
        let rho = ScalarField::new(self.spec.clone(), read_raw(&rp, self.spec.num_cells())?)?;
        let vel = VectorField::new(
            self.spec.clone(),
            read_raw(&vp, self.spec.d() * self.spec.num_cells())?,
        )?;
        Ok((rho, vel))
    }

    /// Loads the `k − 1` intermediate densities of `pair` if not yet present.
    pub fn attach_intermediates(&self, pair: &mut PairSample) -> Result<()> {
        if pair.intermediates.is_empty() {
            let base = pair.k * pair.n;
            pair.intermediates = (1..pair.k)
                .map(|j| self.read_density(base + j))
                .collect::<Result<_>>()?;
        }
        Ok(())
    }
}

/// Writes states `0..=F` at the small step, and for every eligible `n` one
/// large step from state `k·n`.
pub fn generate_simulation(scene: &SceneConfig, out: &Path) -> Result<SimulationArchive> {
    let solver = Solver::new(scene.clone())?;
    let k = scene.k()?;
    let mut archive = SimulationArchive::create(out, ArchiveManifest::for_scene(scene))?;
    let mut state = scene.initial_state();
    let mut sum_sq = 0.0f64;
    let mut count = 0usize;
    for i in 0..=scene.num_steps {
        if i > 0 {
            state = solver.step(&state, scene.dt_small)?;
        }
        archive.write_state(i, &state.rho, &state.vel)?;
        sum_sq += state.vel.values().iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
        count += state.vel.values().len();
        if i % k == 0 && i + k <= scene.num_steps {
            let big = solver.step(&state, scene.dt_large)?;
            archive.write_large_step(i + k, &big.rho, &big.vel)?;
        }
    }
    archive.finish((sum_sq / count as f64).sqrt())?;
    Ok(archive)
}

/// One training tuple anchored at small-step index `k·n`.
#[derive(Clone, Debug)]
pub struct PairSample {
    pub n: usize,
    pub k: usize,
    pub dt_small: f64,
    pub rho0: ScalarField,
    pub vel0: VectorField,
    pub rho_big: ScalarField,
    pub vel_big: VectorField,
    pub rho_gt: ScalarField,
    pub vel_gt: VectorField,
    /// Densities at `k·n + j` for `j = 1..k`; empty until attached.
    pub intermediates: Vec<ScalarField>,
}

impl PairSample {
    pub fn spec(&self) -> &GridSpec {
        self.rho0.spec()
    }

    /// Intermediate density `j` (1-based).
    pub fn intermediate(&self, j: usize) -> &ScalarField {
        &self.intermediates[j - 1]
    }
}

/// Every pair `n` with `k·n + k ≤ F`, without intermediates.
pub fn build_pairs(archive: &SimulationArchive, k: usize) -> Result<Vec<PairSample>> {
    let archive_k = archive.k()?;
    if k != archive_k {
        return Err(Error::Argument(format!(
            "archive was generated with k = {archive_k}, asked for k = {k}"
        )));
    }
    let f = archive.num_steps();
    (0..)
        .take_while(|n| k * n + k <= f)
        .map(|n| {
            let (rho0, vel0) = archive.read_state(k * n)?;
            let (rho_big, vel_big) = archive
                .read_large_step(k * n + k)
                .map_err(|e| match e {
                    Error::MissingLargeStep { .. } => Error::MissingLargeStep { n },
                    other => other,
                })?;
            let (rho_gt, vel_gt) = archive.read_state(k * n + k)?;
            Ok(PairSample {
                n,
                k,
                dt_small: archive.manifest().dt_small,
                rho0,
                vel0,
                rho_big,
                vel_big,
                rho_gt,
                vel_gt,
                intermediates: Vec::new(),
            })
        })
        .collect()
}

/// Simulation-level train/validation/test assignment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    /// First `test_count` names go to test; of the rest, the last
    /// `round(val_fraction·rest)` (at least one when two or more remain)
    /// go to validation.
    pub fn assign(names: &[String], test_count: usize, val_fraction: f64) -> Result<Split> {
        if test_count >= names.len() {
            return Err(Error::Argument(format!(
                "{test_count} test simulations leave none of {} for training",
                names.len()
            )));
        }
        let (test, rest) = names.split_at(test_count);
        let mut val_count = (val_fraction * rest.len() as f64).round() as usize;
        if val_fraction > 0.0 && rest.len() >= 2 {
            val_count = val_count.max(1);
        }
        let val_count = val_count.min(rest.len() - 1);
        let (train, val) = rest.split_at(rest.len() - val_count);
        Ok(Split {
            train: train.to_vec(),
            val: val.to_vec(),
            test: test.to_vec(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub test_pairs: usize,
    /// RMS of every velocity component over the training simulations.
    pub velocity_rms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub scene: SceneKind,
    pub extent: usize,
    pub count: usize,
    pub test_count: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub num_steps: usize,
    pub dt_small: f64,
    pub dt_large: f64,
    pub jobs: usize,
    /// Fixed scene used for every simulation (seed replaced per simulation).
    #[serde(skip)]
    pub template: Option<SceneConfig>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            scene: SceneKind::Plume2d,
            extent: 64,
            count: 35,
            test_count: 5,
            val_fraction: 0.1,
            seed: 0,
            num_steps: 64,
            dt_small: 0.5,
            dt_large: 4.0,
            jobs: 1,
            template: None,
        }
    }
}

impl CorpusConfig {
    pub fn scene(&self, index: usize) -> Result<SceneConfig> {
        let seed = self.seed.wrapping_add(index as u64);
        let mut s = match &self.template {
            Some(t) => SceneConfig { seed, ..t.clone() },
            None => SceneConfig::generate(self.scene, self.extent, seed)?,
        };
        s.num_steps = self.num_steps;
        s.dt_small = self.dt_small;
        s.dt_large = self.dt_large;
        s.validate()?;
        Ok(s)
    }
}

pub fn sim_name(index: usize) -> String {
    format!("sim_{index:05}")
}

/// Generates `count` simulations under `root`, plus the split and stats files.
pub fn generate_corpus(cfg: &CorpusConfig, root: &Path) -> Result<Corpus> {
    fs::create_dir_all(root).map_err(Error::io(root))?;
    let scenes: Vec<SceneConfig> = (0..cfg.count).map(|i| cfg.scene(i)).collect::<Result<_>>()?;
    let jobs = cfg.jobs.max(1);
    let results: Vec<Result<()>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let scenes = &scenes;
                s.spawn(move || -> Vec<(usize, Result<()>)> {
                    (w..scenes.len())
                        .step_by(jobs)
                        .map(|i| (i, generate_simulation(&scenes[i], &root.join(sim_name(i))).map(|_| ())))
                        .collect()
                })
            })
            .collect();
        let mut all: Vec<(usize, Result<()>)> = handles
            .into_iter()
            .flat_map(|h| h.join().expect("generation worker panicked"))
            .collect();
        all.sort_by_key(|(i, _)| *i);
        all.into_iter().map(|(_, r)| r).collect()
    });
    for r in results {
        r?;
    }
    let names: Vec<String> = (0..cfg.count).map(sim_name).collect();
    let split = Split::assign(&names, cfg.test_count, cfg.val_fraction)?;
    let path = root.join(SPLIT);
    fs::write(&path, serde_json::to_string_pretty(&split).unwrap()).map_err(Error::io(&path))?;
    let corpus = Corpus::open(root)?;
    let stats = dataset_stats(root)?;
    let path = root.join(STATS);
    fs::write(&path, serde_json::to_string_pretty(&stats).unwrap()).map_err(Error::io(&path))?;
    Ok(Corpus { stats: Some(stats), ..corpus })
}

/// A corpus directory with its split and (once computed) statistics.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub root: PathBuf,
    pub split: Split,
    pub stats: Option<CorpusStats>,
}

impl Corpus {
    pub fn open(root: &Path) -> Result<Corpus> {
        let path = root.join(SPLIT);
        let split = if path.exists() {
            let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
            serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?
        } else {
            // No split file: every archive under root is training data.
            let mut train = Vec::new();
            for entry in fs::read_dir(root).map_err(Error::io(root))? {
                let entry = entry.map_err(Error::io(root))?;
                if entry.path().join(MANIFEST).exists() {
                    train.push(entry.file_name().to_string_lossy().into_owned());
                }
            }
            train.sort();
            Split {
                train,
                ..Split::default()
            }
        };
        let stats_path = root.join(STATS);
        let stats = if stats_path.exists() {
            let text = fs::read_to_string(&stats_path).map_err(Error::io(&stats_path))?;
            Some(serde_json::from_str(&text).map_err(|e| Error::format(&stats_path, e.to_string()))?)
        } else {
            None
        };
        Ok(Corpus {
            root: root.to_path_buf(),
            split,
            stats,
        })
    }

    pub fn archives(&self, names: &[String]) -> Result<Vec<SimulationArchive>> {
        names.iter().map(|n| SimulationArchive::open(&self.root.join(n))).collect()
    }

    pub fn velocity_rms(&self) -> Result<f64> {
        match &self.stats {
            Some(s) => Ok(s.velocity_rms),
            None => Ok(dataset_stats(&self.root)?.velocity_rms),
        }
    }

    /// All pairs of the named simulations, with intermediates attached.
    pub fn load_pairs(&self, names: &[String]) -> Result<Vec<PairSample>> {
        let mut out = Vec::new();
        for a in self.archives(names)? {
            let k = a.k()?;
            for mut p in build_pairs(&a, k)? {
                a.attach_intermediates(&mut p)?;
                out.push(p);
            }
        }
        Ok(out)
    }
}

/// Pair counts per split and the training velocity RMS.
pub fn dataset_stats(root: &Path) -> Result<CorpusStats> {
    let corpus = Corpus::open(root)?;
    let count = |names: &[String]| -> Result<usize> {
        let mut c = 0;
        for a in corpus.archives(names)? {
            let k = a.k()?;
            c += a.num_steps() / k;
        }
        Ok(c)
    };
    let split = &corpus.split;
    if split.train.is_empty() && split.val.is_empty() && split.test.is_empty() {
        return Err(Error::EmptyDataset(format!("no simulations under {}", root.display())));
    }
    let train = corpus.archives(&split.train)?;
    let rms_source = if train.is_empty() { corpus.archives(&split.val)? } else { train };
    let mean_sq = rms_source.iter().map(|a| a.manifest().velocity_rms.powi(2)).sum::<f64>()
        / rms_source.len().max(1) as f64;
    let velocity_rms = mean_sq.sqrt();
    if !(velocity_rms > 0.0 && velocity_rms.is_finite()) {
        return Err(Error::Degenerate(format!(
            "velocity RMS {velocity_rms} cannot normalize network inputs"
        )));
    }
    Ok(CorpusStats {
        train_pairs: count(&split.train)?,
        val_pairs: count(&split.val)?,
        test_pairs: count(&split.test)?,
        velocity_rms,
    })
}
