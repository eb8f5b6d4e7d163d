use elastoinv::dataset::Dataset;
use elastoinv::error::Error;
use elastoinv::fem::{synthesize, BoundaryCondition};
use elastoinv::fields::{DisplacementField, ElasticityField, ScalarGrid};
use elastoinv::loss::{LossWeights, Problem};
use elastoinv::network::{Architecture, EncodingConfig, Networks};
use elastoinv::train::{
    continue_training, initial_state, load_checkpoint, predict_fields, predict_with, read_history_csv,
    save_checkpoint, train, write_history_csv, PredictedFields, Stage, TrainOptions, TrainingSchedule, TrainingState,
    INITIAL_NU,
};

fn small_arch(depth: usize, width: usize) -> Architecture {
    Architecture {
        encoding: EncodingConfig {
            omega: 8,
            ..Default::default()
        },
        depth,
        width,
        sine_scale: 30.0,
    }
}

fn schedule(a: usize, b: usize, c: usize, seed: u64) -> TrainingSchedule {
    TrainingSchedule {
        stage_a_iters: a,
        stage_b_iters: b,
        stage_c_iters: c,
        seed,
        ..Default::default()
    }
}

fn constant_dataset(n: usize, ux: f64, uy: f64) -> Dataset {
    let g = |v| ScalarGrid::filled(n, n, 1.0, 1.0, v).unwrap();
    Dataset::new(DisplacementField::new(g(ux), g(uy)).unwrap())
}

fn plate(n: usize, snr: Option<f64>) -> Dataset {
    let elas = ElasticityField::homogeneous(n, n, 1.0, 0.3).unwrap();
    synthesize(&elas, &BoundaryCondition::default(), snr, 3).unwrap()
}

#[test]
fn empty_schedule_returns_initial_state() {
    let arch = small_arch(2, 8);
    let ds = plate(6, None);
    let st = train(&ds, &schedule(0, 0, 0, 4), &LossWeights::default(), 0.25, &arch, &TrainOptions::default()).unwrap();
    let fresh = initial_state(&arch, 4, 0.25).unwrap();
    assert_eq!(st.networks, fresh.networks);
    assert_eq!((st.iteration, st.stage, st.history.len()), (0, None, 0));
}

#[test]
fn initial_elasticity_matches_targets() {
    let arch = small_arch(2, 8);
    let st = initial_state(&arch, 1, 0.25).unwrap();
    let p = predict_fields(&st, &plate(8, None)).unwrap();
    // The SIREN head is small, so outputs sit near the biased start values.
    assert!((p.elasticity.e().mean() - 0.25).abs() < 0.05);
    assert!((p.elasticity.nu().mean() - INITIAL_NU).abs() < 0.05);
    assert!(initial_state(&arch, 1, 0.0).is_err());
}

#[test]
fn rejects_small_grids() {
    let ds = constant_dataset(5, 0.0, 0.0);
    let r = train(&ds, &schedule(1, 0, 0, 0), &LossWeights::default(), 0.25, &small_arch(1, 4), &TrainOptions::default());
    assert!(matches!(r, Err(Error::GridTooSmall { .. })));
}

#[test]
fn stage_a_fits_constant_field() {
    let ds = constant_dataset(12, 0.01, -0.004);
    let arch = Architecture {
        depth: 4,
        width: 32,
        ..Default::default()
    };
    let st = train(&ds, &schedule(2000, 0, 0, 11), &LossWeights::default(), 0.25, &arch, &TrainOptions::default()).unwrap();
    let best = st.history.iter().map(|r| r.loss.l_u).fold(f64::INFINITY, f64::min);
    assert!(best < 1e-4, "best L_u {best:e}");
}

#[test]
fn frozen_networks_stay_bitwise_unchanged() {
    let ds = plate(8, Some(1000.0));
    let arch = small_arch(2, 8);
    let w = LossWeights::default();
    let start = initial_state(&arch, 9, 0.25).unwrap();
    let after_a = continue_training(start.clone(), &ds, &schedule(5, 0, 0, 9), &w, 0.25, &TrainOptions::default()).unwrap();
    assert_ne!(after_a.networks.displacement, start.networks.displacement);
    assert_eq!(after_a.networks.strain, start.networks.strain);
    assert_eq!(after_a.networks.elasticity, start.networks.elasticity);
    let after_b = continue_training(after_a.clone(), &ds, &schedule(0, 5, 0, 9), &w, 0.25, &TrainOptions::default()).unwrap();
    assert_ne!(after_b.networks.strain, after_a.networks.strain);
    assert_eq!(after_b.networks.elasticity, start.networks.elasticity);
    let after_c = continue_training(after_b.clone(), &ds, &schedule(0, 0, 5, 9), &w, 0.25, &TrainOptions::default()).unwrap();
    assert_ne!(after_c.networks.elasticity, start.networks.elasticity);
    assert_eq!(after_c.iteration, 15);
    let stages: Vec<Stage> = after_c.history.iter().map(|r| r.stage).collect();
    assert_eq!(stages, [[Stage::A; 5], [Stage::B; 5], [Stage::C; 5]].concat());
}

#[test]
fn stage_transitions_are_continuous() {
    let ds = plate(8, Some(1000.0));
    let arch = small_arch(2, 8);
    let w = LossWeights::default();
    let o = TrainOptions::default();
    let full = train(&ds, &schedule(4, 4, 4, 2), &w, 0.25, &arch, &o).unwrap();
    let problem = Problem::new(&ds, &arch.encoding).unwrap();
    for (a, b, stage) in [(4, 0, Stage::B), (4, 4, Stage::C)] {
        let partial = train(&ds, &schedule(a, b, 0, 2), &w, 0.25, &arch, &o).unwrap();
        let v = problem.value(&partial.networks, &w, 0.25, stage.terms()).unwrap();
        let rec = &full.history[a + b];
        assert_eq!(rec.stage, stage);
        assert_eq!(rec.loss, v);
    }
}

#[test]
fn deterministic_under_seed() {
    let ds = plate(8, Some(500.0));
    let arch = small_arch(2, 8);
    let run = |seed| {
        train(&ds, &schedule(10, 10, 10, seed), &LossWeights::default(), 0.25, &arch, &TrainOptions::default()).unwrap()
    };
    let (a, b, c) = (run(3), run(3), run(4));
    assert_eq!(a.history, b.history);
    assert_eq!(a.networks, b.networks);
    assert_ne!(a.history, c.history);
}

#[test]
fn pretraining_no_worse_on_homogeneous_plate() {
    let ds = plate(10, Some(1000.0));
    let arch = small_arch(3, 16);
    let w = LossWeights::default();
    let o = TrainOptions::default();
    let s = schedule(100, 200, 100, 5);
    let pre = train(&ds, &s, &w, 0.25, &arch, &o).unwrap();
    let sim = train(&ds, &s.simultaneous(), &w, 0.25, &arch, &o).unwrap();
    assert_eq!(pre.history.len(), sim.history.len());
    let (lp, ls) = (pre.final_loss().unwrap().loss.total, sim.final_loss().unwrap().loss.total);
    assert!(lp <= ls, "pretrained {lp:e} vs simultaneous {ls:e}");
}

#[test]
fn zero_networks_predict_trivial_fields() {
    let arch = small_arch(2, 4);
    let nets = Networks::zeros(&arch).unwrap();
    let p = predict_with(&nets, &plate(9, None)).unwrap();
    assert_eq!(p.displacement.dim(), (10, 10));
    assert_eq!(p.strain.dim(), (9, 9));
    assert_eq!(p.stress.dim(), (9, 9));
    assert_eq!(p.elasticity.dim(), (9, 9));
    assert_eq!(p.residual.dim(), (7, 7));
    assert!(p.displacement.ux().values().iter().all(|v| *v == 0.0));
    assert!(p.elasticity.e().values().iter().all(|v| *v == std::f64::consts::LN_2));
    assert!(p.elasticity.nu().values().iter().all(|v| *v == std::f64::consts::LN_2));
    assert!(p.residual.rx().values().iter().all(|v| *v == 0.0));
}

#[test]
fn diverging_loss_aborts_with_snapshot() {
    let ds = constant_dataset(6, 1e308, -1e308);
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let r = train(&ds, &schedule(3, 0, 0, 0), &LossWeights::default(), 0.25, &small_arch(1, 4), &opts);
    match r {
        Err(Error::Diverged { iteration, state }) => {
            assert_eq!(iteration, 0);
            assert!(state.history.is_empty());
        }
        other => panic!("expected divergence, got {:?}", other.map(|s| s.iteration)),
    }
    assert!(dir.path().join("diverged.npk").is_file());
}

#[test]
fn checkpoint_history_and_fields_round_trip() {
    let ds = plate(8, Some(1000.0));
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let w = LossWeights::default();
    let st = train(&ds, &schedule(3, 3, 3, 8), &w, 0.25, &small_arch(2, 6), &opts).unwrap();
    let ck = dir.path().join("checkpoint.npk");
    let back: TrainingState = load_checkpoint(&ck).unwrap();
    assert_eq!(back.networks, st.networks);
    assert_eq!(back.moments, st.moments);
    assert_eq!((back.iteration, back.stage), (9, Some(Stage::C)));

    // resuming from a checkpoint equals training straight through
    let p = dir.path().join("mid.npk");
    let mid = train(&ds, &schedule(3, 3, 0, 8), &w, 0.25, &small_arch(2, 6), &TrainOptions::default()).unwrap();
    save_checkpoint(&mid, &p).unwrap();
    let resumed = continue_training(load_checkpoint(&p).unwrap(), &ds, &schedule(0, 0, 3, 8), &w, 0.25, &TrainOptions::default()).unwrap();
    assert_eq!(resumed.networks, st.networks);

    let h = dir.path().join("history.csv");
    write_history_csv(&st.history, &h).unwrap();
    assert_eq!(read_history_csv(&h).unwrap(), st.history);

    let fields = predict_fields(&st, &ds).unwrap();
    let f = dir.path().join("pred.efd");
    fields.save(&f).unwrap();
    assert_eq!(PredictedFields::load(&f).unwrap(), fields);
}
