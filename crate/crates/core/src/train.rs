//! Staged training of the three networks.
//!
//! Stage A fits the displacement network alone (`lambda_u L_u`), stage B adds
//! the strain network (`+ lambda_eps L_eps`), stage C trains all three
//! networks on the full objective. Every iteration is a full-grid Adam step.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::container::Container;
use crate::dataset::{grid_from_block, push_grid, Dataset};
use crate::error::{Error, Result};
use crate::fields::{DisplacementField, ElasticityField, ScalarGrid, StrainField, StressField};
use crate::kernels::{self, ResidualField};
use crate::loss::{split_channels, LossBreakdown, LossWeights, Problem, Terms};
use crate::network::{inverse_softplus, Architecture, CoordinateFrame, EncodingConfig, Head, Network, Networks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    /// Displacement network only.
    A,
    /// Displacement and strain networks.
    B,
    /// All networks, all losses.
    C,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::A, Stage::B, Stage::C];

    pub fn terms(self) -> Terms {
        Terms {
            displacement: true,
            strain: self >= Stage::B,
            physics: self == Stage::C,
        }
    }

    /// Whether the network at `index` (displacement, strain, elasticity) is updated.
    pub fn trains(self, index: usize) -> bool {
        match self {
            Stage::A => index == 0,
            Stage::B => index <= 1,
            Stage::C => true,
        }
    }

    pub fn parse(s: &str) -> Result<Stage> {
        match s {
            "A" => Ok(Stage::A),
            "B" => Ok(Stage::B),
            "C" => Ok(Stage::C),
            other => Err(Error::Invalid(format!("unknown stage `{other}`"))),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::A => "A",
            Stage::B => "B",
            Stage::C => "C",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSchedule {
    pub stage_a_iters: usize,
    pub stage_b_iters: usize,
    pub stage_c_iters: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Multiplies every stage length (rounded to the nearest integer).
    pub desk_scale_factor: f64,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        TrainingSchedule {
            stage_a_iters: 50_000,
            stage_b_iters: 100_000,
            stage_c_iters: 50_000,
            learning_rate: 1e-4,
            seed: 0,
            desk_scale_factor: 1.0,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.desk_scale_factor > 0.0 && self.desk_scale_factor <= 1.0) {
            return Err(Error::Invalid(format!(
                "desk_scale_factor must lie in (0, 1], got {}",
                self.desk_scale_factor
            )));
        }
        Ok(())
    }

    pub fn stage_len(&self, stage: Stage) -> usize {
        let base = match stage {
            Stage::A => self.stage_a_iters,
            Stage::B => self.stage_b_iters,
            Stage::C => self.stage_c_iters,
        };
        (base as f64 * self.desk_scale_factor).round() as usize
    }

    pub fn total_iters(&self) -> usize {
        Stage::ALL.iter().map(|s| self.stage_len(*s)).sum()
    }

    /// Same total budget spent entirely in stage C.
    pub fn simultaneous(&self) -> TrainingSchedule {
        TrainingSchedule {
            stage_a_iters: 0,
            stage_b_iters: 0,
            stage_c_iters: self.total_iters(),
            desk_scale_factor: 1.0,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: u64,
}

impl AdamMoments {
    pub fn new(n: usize) -> Self {
        AdamMoments {
            m: vec![0.0; n],
            v: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &AdamConfig) {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub stage: Stage,
    /// Terms outside the stage objective are 0; `total` is the stage objective.
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub architecture: Architecture,
    pub networks: Networks,
    pub moments: [AdamMoments; 3],
    /// Number of optimizer iterations performed so far.
    pub iteration: usize,
    /// Stage of the most recent iteration, `None` before training.
    pub stage: Option<Stage>,
    pub history: Vec<HistoryRecord>,
}

impl TrainingState {
    pub fn new(arch: &Architecture, seed: u64) -> Result<Self> {
        let networks = Networks::init(arch, seed)?;
        let moments = networks.iter().map(|n| AdamMoments::new(n.num_params()));
        Ok(TrainingState {
            architecture: *arch,
            moments: moments.into_iter().collect::<Vec<_>>().try_into().expect("three networks"),
            networks,
            iteration: 0,
            stage: None,
            history: Vec::new(),
        })
    }

    pub fn final_loss(&self) -> Option<&HistoryRecord> {
        self.history.last()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Directory for rolling `checkpoint.npk` snapshots.
    pub checkpoint_dir: Option<PathBuf>,
    pub adam: AdamConfig,
    /// Print one progress line every this many iterations (0 = silent).
    pub log_every: usize,
}

/// Poisson's ratio the elasticity network starts from: the middle of the
/// admissible plane-stress range.
pub const INITIAL_NU: f64 = 0.25;

/// Freshly initialized state whose elasticity head starts at `(e_c, INITIAL_NU)`
/// everywhere, so Stage C begins on the mean-modulus constraint instead of at
/// the arbitrary softplus offset of the raw initialization.
pub fn initial_state(arch: &Architecture, seed: u64, e_c: f64) -> Result<TrainingState> {
    if !(e_c > 0.0 && e_c.is_finite()) {
        return Err(Error::Invalid(format!("E_c must be positive, got {e_c}")));
    }
    let mut state = TrainingState::new(arch, seed)?;
    state
        .networks
        .elasticity
        .set_head_bias(&[inverse_softplus(e_c), inverse_softplus(INITIAL_NU)])?;
    Ok(state)
}

/// Phase 1: trains freshly initialized networks through stages A, B and C.
pub fn train(
    dataset: &Dataset,
    schedule: &TrainingSchedule,
    weights: &LossWeights,
    e_c: f64,
    arch: &Architecture,
    options: &TrainOptions,
) -> Result<TrainingState> {
    let state = initial_state(arch, schedule.seed, e_c)?;
    continue_training(state, dataset, schedule, weights, e_c, options)
}

/// Runs `schedule` starting from an existing state.
pub fn continue_training(
    mut state: TrainingState,
    dataset: &Dataset,
    schedule: &TrainingSchedule,
    weights: &LossWeights,
    e_c: f64,
    options: &TrainOptions,
) -> Result<TrainingState> {
    schedule.validate()?;
    weights.validate()?;
    let (ny, nx) = dataset.dim();
    if ny < 6 || nx < 6 {
        return Err(Error::GridTooSmall {
            what: "training",
            min_rows: 6,
            min_cols: 6,
            rows: ny,
            cols: nx,
        });
    }
    let problem = Problem::new(dataset, &state.architecture.encoding)?;
    let total = schedule.total_iters();
    let checkpoint_every = (total / 100).max(1);
    let mut done = 0;
    for stage in Stage::ALL {
        let terms = stage.terms();
        for _ in 0..schedule.stage_len(stage) {
            let (loss, grads) = problem.value_and_gradients(&state.networks, weights, e_c, terms)?;
            let finite = loss.total.is_finite() && grads.iter().flatten().all(|g| g.is_finite());
            if !finite {
                let iteration = state.iteration;
                if let Some(dir) = &options.checkpoint_dir {
                    save_checkpoint(&state, &dir.join("diverged.npk"))?;
                }
                return Err(Error::Diverged {
                    iteration,
                    state: Box::new(state),
                });
            }
            state.history.push(HistoryRecord {
                iteration: state.iteration,
                stage,
                loss,
            });
            let lr = schedule.learning_rate;
            for (k, (net, grad)) in state.networks.iter_mut().into_iter().zip(&grads).enumerate() {
                if stage.trains(k) {
                    state.moments[k].step(net.params_mut(), grad, lr, &options.adam);
                }
            }
            state.iteration += 1;
            state.stage = Some(stage);
            done += 1;
            if options.log_every > 0 && done % options.log_every == 0 {
                eprintln!(
                    "iter {:>7} stage {stage} L_u {:.3e} L_eps {:.3e} L_r {:.3e} L_E {:.3e} total {:.4e}",
                    state.iteration, loss.l_u, loss.l_eps, loss.l_r, loss.l_e, loss.total
                );
            }
            if let Some(dir) = &options.checkpoint_dir {
                if done % checkpoint_every == 0 {
                    save_checkpoint(&state, &dir.join("checkpoint.npk"))?;
                }
            }
        }
    }
    Ok(state)
}

/// Every field the trained networks imply on a dataset lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedFields {
    /// Node lattice, `N`.
    pub displacement: DisplacementField,
    /// Strain network output on the cell lattice, `N - 1`.
    pub strain: StrainField,
    /// Stress from predicted strain and elasticity, `N - 1`.
    pub stress: StressField,
    /// Elasticity network output, `N - 1`. Poisson's ratio is only
    /// guaranteed positive.
    pub elasticity: ElasticityField,
    /// Equilibrium residual, `N - 3`.
    pub residual: ResidualField,
}

pub fn predict_fields(state: &TrainingState, dataset: &Dataset) -> Result<PredictedFields> {
    predict_with(&state.networks, dataset)
}

pub fn predict_with(nets: &Networks, dataset: &Dataset) -> Result<PredictedFields> {
    let problem = Problem::new(dataset, nets.displacement.encoding())?;
    let (pred, _) = problem.predict(nets, Terms::ALL)?;
    let (ny, nx) = dataset.dim();
    let (h, t) = (dataset.h(), dataset.t());
    let grid = |a| ScalarGrid::new(a, h, t);
    let mut d = split_channels(&pred.displacement, ny, nx).into_iter();
    let displacement = DisplacementField::new(grid(d.next().unwrap())?, grid(d.next().unwrap())?)?;
    let mut s = split_channels(&pred.strain, ny - 1, nx - 1).into_iter();
    let strain = StrainField::new(grid(s.next().unwrap())?, grid(s.next().unwrap())?, grid(s.next().unwrap())?)?;
    let mut e = split_channels(&pred.elasticity, ny - 1, nx - 1).into_iter();
    let elasticity = ElasticityField::new_unbounded_nu(grid(e.next().unwrap())?, grid(e.next().unwrap())?)?;
    let stress = kernels::stress_from_strain(&strain, &elasticity)?;
    let residual = kernels::pde_residual(&stress, h, t)?;
    Ok(PredictedFields {
        displacement,
        strain,
        stress,
        elasticity,
        residual,
    })
}

pub const FIELDS_KIND: &str = "fields";

impl PredictedFields {
    /// The fields implied by a dataset's ground truth, laid out like a
    /// prediction. Used to sanity-check the report path.
    pub fn from_truth(dataset: &Dataset) -> Result<Self> {
        let (Some(u), Some(el)) = (&dataset.truth_displacement, &dataset.truth_elasticity) else {
            return Err(Error::Invalid("dataset carries no ground truth".into()));
        };
        let strain = kernels::strain_from_displacement(u)?;
        let stress = kernels::stress_from_strain(&strain, el)?;
        let residual = kernels::pde_residual(&stress, dataset.h(), dataset.t())?;
        Ok(PredictedFields {
            displacement: u.clone(),
            strain,
            stress,
            elasticity: el.clone(),
            residual,
        })
    }
}

impl PredictedFields {
    pub fn to_container(&self) -> Container {
        let (ny, nx) = self.displacement.dim();
        let mut c = Container::new(FIELDS_KIND);
        c.set("ny", ny);
        c.set("nx", nx);
        c.set_f64("h", self.displacement.h());
        c.set_f64("t", self.displacement.t());
        let grids: [(&str, &ScalarGrid); 12] = [
            ("ux", &self.displacement.ux),
            ("uy", &self.displacement.uy),
            ("exx", &self.strain.exx),
            ("eyy", &self.strain.eyy),
            ("gxy", &self.strain.gxy),
            ("sxx", &self.stress.sxx),
            ("syy", &self.stress.syy),
            ("txy", &self.stress.txy),
            ("E", &self.elasticity.e),
            ("nu", &self.elasticity.nu),
            ("rx", &self.residual.rx),
            ("ry", &self.residual.ry),
        ];
        for (name, g) in grids {
            push_grid(&mut c, name, g);
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind() != FIELDS_KIND {
            return Err(c.format_error(format!("expected a `{FIELDS_KIND}` container, found `{}`", c.kind())));
        }
        let ny: usize = c.parse_required("ny")?;
        let nx: usize = c.parse_required("nx")?;
        let h: f64 = c.parse_required("h")?;
        let t: f64 = c.parse_required("t")?;
        if ny < 4 || nx < 4 {
            return Err(c.format_error(format!("lattice {ny}x{nx} too small for predicted fields")));
        }
        let get = |name: &str, dims: (usize, usize)| grid_from_block(c, c.require_block(name)?, Some(dims), h, t);
        let node = (ny, nx);
        let cell = (ny - 1, nx - 1);
        let res = (ny - 3, nx - 3);
        Ok(PredictedFields {
            displacement: DisplacementField::new(get("ux", node)?, get("uy", node)?)?,
            strain: StrainField::new(get("exx", cell)?, get("eyy", cell)?, get("gxy", cell)?)?,
            stress: StressField::new(get("sxx", cell)?, get("syy", cell)?, get("txy", cell)?)?,
            elasticity: ElasticityField::new_unbounded_nu(get("E", cell)?, get("nu", cell)?)?,
            residual: ResidualField::new(get("rx", res)?, get("ry", res)?)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

pub const NPK_KIND: &str = "npk";

/// Writes network parameters and optimizer moments, one block per tensor.
pub fn save_checkpoint(state: &TrainingState, path: &Path) -> Result<()> {
    let arch = &state.architecture;
    let mut c = Container::new(NPK_KIND);
    c.set("iteration", state.iteration);
    c.set("stage", state.stage.map_or("none".to_string(), |s| s.to_string()));
    c.set_f64("f_min", arch.encoding.f_min);
    c.set("omega", arch.encoding.omega);
    c.set("coord_frame", arch.encoding.frame.as_str());
    c.set("depth", arch.depth);
    c.set("width", arch.width);
    c.set_f64("sine_scale", arch.sine_scale);
    for (net, mom) in state.networks.iter().into_iter().zip(&state.moments) {
        c.set(&format!("{}.head", net.name()), net.config().head.as_str());
        c.set(&format!("{}.outputs", net.name()), net.out_dim());
        c.set(&format!("{}.adam_steps", net.name()), mom.steps);
        for (l, slot) in net.layers().iter().enumerate() {
            let w = slot.weight..slot.bias;
            let b = slot.bias..slot.bias + slot.rows;
            let base = format!("{}.l{l}", net.name());
            c.push_block(&format!("{base}.weight"), slot.rows, slot.cols, net.params()[w.clone()].to_vec());
            c.push_block(&format!("{base}.bias"), 1, slot.rows, net.params()[b.clone()].to_vec());
            c.push_block(&format!("{base}.weight.adam_m"), slot.rows, slot.cols, mom.m[w.clone()].to_vec());
            c.push_block(&format!("{base}.weight.adam_v"), slot.rows, slot.cols, mom.v[w].to_vec());
            c.push_block(&format!("{base}.bias.adam_m"), 1, slot.rows, mom.m[b.clone()].to_vec());
            c.push_block(&format!("{base}.bias.adam_v"), 1, slot.rows, mom.v[b].to_vec());
        }
    }
    c.write(path)
}

/// Restores a state written by [`save_checkpoint`]. The loss history is not
/// part of the checkpoint and comes back empty.
pub fn load_checkpoint(path: &Path) -> Result<TrainingState> {
    let c = Container::read(path)?;
    if c.kind() != NPK_KIND {
        return Err(c.format_error(format!("expected an `{NPK_KIND}` container, found `{}`", c.kind())));
    }
    let arch = Architecture {
        encoding: EncodingConfig {
            f_min: c.parse_required("f_min")?,
            omega: c.parse_required("omega")?,
            frame: CoordinateFrame::parse(c.require("coord_frame")?)?,
        },
        depth: c.parse_required("depth")?,
        width: c.parse_required("width")?,
        sine_scale: c.parse_required("sine_scale")?,
    };
    let mut state = TrainingState::new(&arch, 0)?;
    state.iteration = c.parse_required("iteration")?;
    state.stage = match c.require("stage")? {
        "none" => None,
        s => Some(Stage::parse(s)?),
    };
    let TrainingState { networks, moments, .. } = &mut state;
    for (net, mom) in networks.iter_mut().into_iter().zip(moments.iter_mut()) {
        let name = net.name().to_string();
        let head = Head::parse(c.require(&format!("{name}.head"))?)?;
        let outputs: usize = c.parse_required(&format!("{name}.outputs"))?;
        if head != net.config().head || outputs != net.out_dim() {
            return Err(c.format_error(format!("{name} network head/outputs do not match")));
        }
        mom.steps = c.parse_required(&format!("{name}.adam_steps"))?;
        let slots = net.layers().to_vec();
        let mut params = vec![0.0; net.num_params()];
        for (l, slot) in slots.iter().enumerate() {
            let base = format!("{name}.l{l}");
            let w = slot.weight..slot.bias;
            let b = slot.bias..slot.bias + slot.rows;
            let fetch = |suffix: &str, rows: usize, cols: usize| -> Result<&[f64]> {
                let blk = c.require_block(&format!("{base}.{suffix}"))?;
                if (blk.rows, blk.cols) != (rows, cols) {
                    return Err(c.format_error(format!(
                        "block {base}.{suffix} is {}x{}, expected {rows}x{cols}",
                        blk.rows, blk.cols
                    )));
                }
                Ok(&blk.data)
            };
            params[w.clone()].copy_from_slice(fetch("weight", slot.rows, slot.cols)?);
            params[b.clone()].copy_from_slice(fetch("bias", 1, slot.rows)?);
            mom.m[w.clone()].copy_from_slice(fetch("weight.adam_m", slot.rows, slot.cols)?);
            mom.v[w].copy_from_slice(fetch("weight.adam_v", slot.rows, slot.cols)?);
            mom.m[b.clone()].copy_from_slice(fetch("bias.adam_m", 1, slot.rows)?);
            mom.v[b].copy_from_slice(fetch("bias.adam_v", 1, slot.rows)?);
        }
        net.set_params(params)?;
    }
    Ok(state)
}

pub const HISTORY_HEADER: &str = "iteration,L_u,L_eps,L_r,L_E,total,stage";

pub fn write_history_csv(history: &[HistoryRecord], path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(64 * (history.len() + 1));
    writeln!(out, "{HISTORY_HEADER}").expect("in-memory write");
    for r in history {
        let l = &r.loss;
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{}",
            r.iteration, l.l_u, l.l_eps, l.l_r, l.l_e, l.total, r.stage
        )
        .expect("in-memory write");
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: format!("line {}: {msg}", line + 1),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HISTORY_HEADER => {}
        _ => return Err(bad(0, "missing loss-history header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(n, "expected 7 columns"));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad(n, "bad number"));
            Ok(HistoryRecord {
                iteration: f[0].parse().map_err(|_| bad(n, "bad iteration"))?,
                stage: Stage::parse(f[6])?,
                loss: LossBreakdown {
                    l_u: num(1)?,
                    l_eps: num(2)?,
                    l_r: num(3)?,
                    l_e: num(4)?,
                    total: num(5)?,
                },
            })
        })
        .collect()
}

/// Networks by role: displacement, strain, elasticity.
pub fn network_by_index(nets: &Networks, k: usize) -> &Network {
    nets.iter()[k]
}
