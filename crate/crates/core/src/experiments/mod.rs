//! Monte Carlo harness: rotates a wall scene around the array, adds noise,
//! runs every configured localizer and scores the estimates.
//!
//! Noise for realization `k` of rotation `r` is seeded with
//! `base_seed + r·realizations + k` and the same draw is rescaled for every
//! SNR.

mod metrics;
mod output;

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delay::DelayMode;
use crate::directivity::{synth_directivity, DirectivityTable, SynthPattern};
use crate::error::{Error, Result};
use crate::estimators::{
    cc_das, default_lambda, gcc_phat_toas, lipschitz_constant, peak_pick, sparse_solve_with_lipschitz, trilaterate,
    EstimateMap, Method, NmsWindow, SolverConfig,
};
use crate::forward_model::{default_output_len, ChannelVector, ForwardOperator};
use crate::grid::{GridParams, PolarGrid};
use crate::simulator::{add_awgn, synth_channel, walls_to_image_sources, Scene, SimConfig, Snr, Wall};

pub use metrics::{error_rate, is_correct, match_estimates, mse, ERROR_THRESHOLD};
pub use output::{
    format_number, read_records, read_summary, run_to_dir, summarize, write_records, write_summary, SummaryRow,
    RECORDS_FILE, SUMMARY_FILE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    SingleWall,
    /// Two perpendicular walls, equidistant from the array.
    Corner,
    /// Wall list file, rotated like the built-in scenes.
    Custom(PathBuf),
}

impl SceneKind {
    pub fn label(&self) -> &'static str {
        match self {
            SceneKind::SingleWall => "single_wall",
            SceneKind::Corner => "corner",
            SceneKind::Custom(_) => "custom",
        }
    }
}

/// What `distance_m` measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceConvention {
    /// Distance from the array centre to the image source.
    #[default]
    Image,
    /// Perpendicular distance to the wall; the image sits at twice this.
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectivitySource {
    Synthetic(SynthPattern),
    File(PathBuf),
}

impl Default for DirectivitySource {
    fn default() -> Self {
        DirectivitySource::Synthetic(SynthPattern::default())
    }
}

impl DirectivitySource {
    pub fn load(&self) -> Result<DirectivityTable> {
        match self {
            DirectivitySource::Synthetic(p) => synth_directivity(p),
            DirectivitySource::File(path) => DirectivityTable::load(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub delay_mode: DelayMode,
    /// Move every image source onto its nearest grid point.
    pub snap_to_grid: bool,
    pub direct_path: bool,
    pub reflection: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            delay_mode: DelayMode::GridRounded,
            snap_to_grid: true,
            direct_path: false,
            reflection: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// λ as a fraction of `‖Φᵀh‖∞`, used unless `lambda` is set.
    pub lambda_rel: f64,
    /// Absolute λ.
    pub lambda: Option<f64>,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            lambda_rel: 0.1,
            lambda: None,
            max_iters: 2000,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scene: SceneKind,
    pub distance_convention: DistanceConvention,
    pub distance_m: f64,
    pub rotations: usize,
    pub rotation_step_deg: f64,
    pub realizations: usize,
    pub snr_db: Vec<Snr>,
    pub methods: Vec<Method>,
    pub grid: GridParams,
    pub directivity: DirectivitySource,
    pub sim: SimSettings,
    pub solver: SolverSettings,
    /// Samples per channel; defaults to the operator's minimum padded length.
    pub n_h: Option<usize>,
    pub nms: NmsWindow,
    pub base_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneKind::SingleWall,
            distance_convention: DistanceConvention::Image,
            distance_m: 0.5,
            rotations: 12,
            rotation_step_deg: 30.0,
            realizations: 50,
            snr_db: [0.0, 5.0, 10.0, 15.0, 20.0, 25.0].map(Snr::Db).to_vec(),
            methods: Method::ALL.to_vec(),
            grid: GridParams::default(),
            directivity: DirectivitySource::default(),
            sim: SimSettings::default(),
            solver: SolverSettings::default(),
            n_h: None,
            nms: NmsWindow::default(),
            base_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.rotations == 0 || self.realizations == 0 {
            return bad("rotations and realizations must be >= 1".into());
        }
        let span = self.rotations as f64 * self.rotation_step_deg;
        if !(self.rotation_step_deg >= 0.0 && span <= 360.0 + 1e-9) {
            return bad(format!("{} rotations of {}° exceed a full turn", self.rotations, self.rotation_step_deg));
        }
        if self.snr_db.is_empty() || self.methods.is_empty() {
            return bad("at least one SNR and one method are required".into());
        }
        if !(self.distance_m.is_finite() && self.distance_m > 0.0) {
            return bad(format!("distance {} must be > 0", self.distance_m));
        }
        if !(self.solver.lambda_rel >= 0.0) || self.solver.lambda.is_some_and(|l| !(l >= 0.0)) {
            return bad("lambda must be >= 0".into());
        }
        Ok(())
    }

    fn base_scene(&self) -> Result<Scene> {
        let wall_distance = match self.distance_convention {
            DistanceConvention::Image => self.distance_m / 2.0,
            DistanceConvention::Wall => self.distance_m,
        };
        let r = self.sim.reflection;
        let mut scene = match &self.scene {
            SceneKind::SingleWall => Scene::new(vec![Wall::new(wall_distance, 0.0, r)?]),
            SceneKind::Corner => Scene::new(vec![
                Wall::new(wall_distance, 0.0, r)?,
                Wall::new(wall_distance, TAU / 4.0, r)?,
            ]),
            SceneKind::Custom(path) => Scene::load(path)?,
        };
        scene.include_direct_path = self.sim.direct_path;
        Ok(scene)
    }
}

/// One scored estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub method: Method,
    pub scene: String,
    pub rotation: usize,
    pub realization: usize,
    pub snr: Snr,
    pub source: (f64, f64),
    pub estimate: Option<(f64, f64)>,
    pub sq_err: Option<f64>,
    pub correct: bool,
    /// Solver iterations, zero for non-iterative methods.
    pub iters: usize,
}

/// Rotated scene with every image source moved to its nearest generator.
fn snapped(scene: &Scene, grid: &PolarGrid) -> Result<Scene> {
    let walls = scene
        .walls
        .iter()
        .map(|w| {
            let (q, p) = grid.quantize(2.0 * w.distance, w.normal_angle)?;
            let (radius, angle) = grid.generator_point(q, p)?;
            Wall::new(radius / 2.0, angle, w.reflection)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scene {
        walls,
        include_direct_path: scene.include_direct_path,
    })
}

struct Setup {
    grid: PolarGrid,
    aware: ForwardOperator,
    omni: ForwardOperator,
    aware_lipschitz: f64,
    omni_lipschitz: f64,
    reference: Vec<f64>,
}

impl Setup {
    fn new(cfg: &ExperimentConfig, table: &DirectivityTable) -> Result<Self> {
        let grid = PolarGrid::new(cfg.grid)?;
        let n_h = cfg.n_h.unwrap_or_else(|| default_output_len(&grid, table.n_taps()));
        let omni_table = table.omni_collapse();
        let aware = ForwardOperator::new(grid, table, Some(n_h))?;
        let omni = ForwardOperator::new(grid, &omni_table, Some(n_h))?;
        let safety = SolverConfig::default().lipschitz_safety;
        let iters = SolverConfig::default().power_iters;
        Ok(Self {
            aware_lipschitz: lipschitz_constant(&aware, iters)? * safety,
            omni_lipschitz: lipschitz_constant(&omni, iters)? * safety,
            reference: omni_table.row(0).to_vec(),
            grid,
            aware,
            omni,
        })
    }

    /// Up to `k` estimates and the solver iteration count.
    fn estimate(
        &self,
        method: Method,
        h: &ChannelVector,
        k: usize,
        cfg: &ExperimentConfig,
    ) -> Result<(Vec<Option<(f64, f64)>>, usize)> {
        let pick = |map: &EstimateMap| peak_pick(map, &self.grid, k, cfg.nms);
        match method {
            Method::GccPhat => {
                let toas = gcc_phat_toas(h, &self.reference, self.grid.fs());
                let est = trilaterate(&toas, &self.grid.mic_positions(), self.grid.vc());
                let mut out = vec![est];
                out.resize(k, None);
                Ok((out, 0))
            }
            Method::CcDas | Method::CcDasOmni => {
                let op = if method == Method::CcDas { &self.aware } else { &self.omni };
                Ok((pick(&cc_das(h, op)?)?, 0))
            }
            Method::L1 | Method::L1Omni => {
                let (op, l) = if method == Method::L1 {
                    (&self.aware, self.aware_lipschitz)
                } else {
                    (&self.omni, self.omni_lipschitz)
                };
                let lambda = match cfg.solver.lambda {
                    Some(l) => l,
                    None => default_lambda(h, op, cfg.solver.lambda_rel)?,
                };
                let solver = SolverConfig {
                    lambda,
                    max_iters: cfg.solver.max_iters,
                    rel_tol: cfg.solver.rel_tol,
                    ..SolverConfig::default()
                };
                let res = sparse_solve_with_lipschitz(h, op, &solver, l)?;
                Ok((pick(&res.map)?, res.iterations))
            }
        }
    }
}

/// Runs the full sweep. Records are ordered by rotation, realization, SNR
/// (config order), method (config order) and source.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let table = cfg.directivity.load()?;
    let setup = Setup::new(cfg, &table)?;
    let base = cfg.base_scene()?;
    let sim = SimConfig::for_grid(&setup.grid, setup.aware.n_h(), cfg.sim.delay_mode);

    let mut scenes = Vec::with_capacity(cfg.rotations);
    for r in 0..cfg.rotations {
        let rotated = base.rotated((r as f64 * cfg.rotation_step_deg).to_radians());
        let scene = if cfg.sim.snap_to_grid { snapped(&rotated, &setup.grid)? } else { rotated };
        let clean = synth_channel(&scene, &table, &sim)?;
        let truths: Vec<(f64, f64)> = walls_to_image_sources(&scene).iter().map(|s| (s.radius, s.angle)).collect();
        scenes.push((clean, truths));
    }

    let methods: Vec<Method> = cfg
        .methods
        .iter()
        .copied()
        // echoes from several walls would need sorting before trilateration
        .filter(|&m| m != Method::GccPhat || scenes[0].1.len() == 1)
        .collect();

    let tasks: Vec<(usize, usize)> = (0..cfg.rotations)
        .flat_map(|r| (0..cfg.realizations).map(move |k| (r, k)))
        .collect();
    let chunks: Vec<Vec<ResultRecord>> = tasks
        .par_iter()
        .map(|&(r, k)| {
            let (clean, truths) = &scenes[r];
            let seed = cfg.base_seed.wrapping_add((r * cfg.realizations + k) as u64);
            let mut out = Vec::new();
            for &snr in &cfg.snr_db {
                let h = add_awgn(clean, snr, seed);
                for &method in &methods {
                    let (estimates, iters) = match setup.estimate(method, &h, truths.len(), cfg) {
                        Ok(v) => v,
                        Err(_) => (vec![None; truths.len()], 0),
                    };
                    let matched = match_estimates(truths, &estimates);
                    for (&truth, est) in truths.iter().zip(matched) {
                        let sq_err = est.map(|e| mse(truth, e));
                        out.push(ResultRecord {
                            method,
                            scene: cfg.scene.label().to_string(),
                            rotation: r,
                            realization: k,
                            snr,
                            source: truth,
                            estimate: est,
                            sq_err,
                            correct: sq_err.is_some_and(is_correct),
                            iters,
                        });
                    }
                }
            }
            out
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}
