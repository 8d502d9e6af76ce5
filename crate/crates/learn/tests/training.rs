use dynfold_core::cloth::ClothParams;
use dynfold_core::env::{nominal_goal, EpisodeConfig, FoldEnv, ObservationMode};
use dynfold_core::randomization::search_expert;
use dynfold_core::render::VisualRanges;
use dynfold_learn::checkpoint::Checkpoint;
use dynfold_learn::nn::Module;
use dynfold_learn::policy::{select_action, NetConfig};
use dynfold_learn::sac::Agent;
use dynfold_learn::train::{eval_specs, evaluate, metrics_csv, summarize, train_loop, LearnerConfig, Schedule, TrainSetup};
use dynfold_learn::LearnError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_cloth() -> ClothParams {
    ClothParams { grid_n: 5, mass_per_point: 0.01, k_bend: 1.0, ..ClothParams::default() }
}

fn state_env() -> EpisodeConfig {
    EpisodeConfig { observation: ObservationMode::State, ..EpisodeConfig::default() }
}

fn small_learner() -> LearnerConfig {
    LearnerConfig {
        net: NetConfig {
            observation: ObservationMode::State,
            actor_hidden: vec![16],
            aux_hidden: vec![8],
            critic_hidden: vec![16],
            ..NetConfig::default()
        },
        batch_size: 16,
        random_steps: 20,
        ..LearnerConfig::default()
    }
}

fn weights(agent: &Agent) -> Vec<f64> {
    let mut out = Vec::new();
    agent.visit_all(&mut |p| out.extend_from_slice(&p.value));
    out
}

fn new_agent(learner: &LearnerConfig, seed: u64) -> Agent {
    Agent::new(learner.net.clone(), learner.sac.clone(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn actions_are_bounded_and_deterministic_mode_ignores_the_rng() {
    let learner = small_learner();
    let agent = new_agent(&learner, 1);
    let mut env = FoldEnv::new(state_env()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let obs = env.reset(&mut rng, &[small_cloth()], &VisualRanges::default()).unwrap().observation;
    let a = select_action(&agent.actor, &agent.net, &obs, true, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = select_action(&agent.actor, &agent.net, &obs, true, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    assert_eq!(a, b);
    let mut distinct = std::collections::HashSet::new();
    for _ in 0..1000 {
        let (action, corners) = select_action(&agent.actor, &agent.net, &obs, false, &mut rng).unwrap();
        assert!(action.iter().all(|c| c.abs() < 1.0 && c.is_finite()));
        assert!(corners.iter().all(|c| (0.0..=1.0).contains(c)));
        distinct.insert(action.map(f64::to_bits));
    }
    assert!(distinct.len() > 990);
}

#[test]
fn image_policy_rejects_state_observations() {
    let agent = new_agent(&LearnerConfig::default(), 1);
    let mut env = FoldEnv::new(state_env()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let obs = env.reset(&mut rng, &[small_cloth()], &VisualRanges::default()).unwrap().observation;
    assert!(matches!(select_action(&agent.actor, &agent.net, &obs, true, &mut rng), Err(LearnError::Contract(_))));
}

#[test]
fn replaying_a_successful_demo_evaluates_to_full_success() {
    let cloth = small_cloth();
    let cfg = state_env();
    let demo = search_expert(&cloth, nominal_goal(&cloth).unwrap(), &cfg).unwrap();
    let mut specs = eval_specs(&cfg, std::slice::from_ref(&cloth), &VisualRanges::default(), 3, 7).unwrap();
    for s in &mut specs {
        s.goal = demo.goal;
    }
    let mut outcomes = Vec::new();
    for spec in &specs {
        let mut step = 0;
        outcomes.extend(
            evaluate(&cfg, std::slice::from_ref(spec), |_| {
                let a = demo.actions.get(step).copied().unwrap_or([0.0; 3]);
                step += 1;
                Ok(a)
            })
            .unwrap(),
        );
    }
    let (success, _) = summarize(&outcomes).unwrap();
    assert_eq!(success, 1.0, "{outcomes:?}");
}

fn setup_run(grad_steps: usize, seed: u64) -> (Vec<String>, Vec<f64>) {
    let learner = small_learner();
    let pool = [small_cloth()];
    let visual = VisualRanges::default();
    let schedule = Schedule { epochs: 2, cycles: 2, env_steps: 30, grad_steps, eval_episodes: 2 };
    let setup = TrainSetup {
        env: state_env(),
        pool: &pool,
        visual: &visual,
        demos: &[],
        demo_cloth: None,
        learner: &learner,
        schedule: &schedule,
        seed,
    };
    let mut agent = new_agent(&learner, seed);
    let rows = train_loop(&setup, &mut agent, 0, |_, _| Ok(())).unwrap();
    (metrics_csv(&rows).lines().map(str::to_owned).collect(), weights(&agent))
}

#[test]
fn zero_gradient_steps_leave_the_networks_unchanged() {
    let learner = small_learner();
    let before = weights(&new_agent(&learner, 3));
    let (rows, after) = setup_run(0, 3);
    assert_eq!(before, after);
    assert_eq!(rows.len(), 1 + 3);
}

#[test]
fn training_is_reproducible_from_the_seed() {
    let (rows_a, w_a) = setup_run(5, 4);
    let (rows_b, w_b) = setup_run(5, 4);
    assert_eq!(rows_a, rows_b);
    assert_eq!(w_a, w_b);
    assert!(w_a.iter().all(|w| w.is_finite()));
    assert_ne!(w_a, weights(&new_agent(&small_learner(), 4)));
}

#[test]
fn mismatched_observation_modes_are_rejected() {
    let learner = small_learner();
    let pool = [small_cloth()];
    let visual = VisualRanges::default();
    let schedule = Schedule { epochs: 1, cycles: 1, env_steps: 1, grad_steps: 0, eval_episodes: 1 };
    let setup = TrainSetup {
        env: EpisodeConfig::default(),
        pool: &pool,
        visual: &visual,
        demos: &[],
        demo_cloth: None,
        learner: &learner,
        schedule: &schedule,
        seed: 0,
    };
    let mut agent = new_agent(&learner, 0);
    assert!(matches!(train_loop(&setup, &mut agent, 0, |_, _| Ok(())), Err(LearnError::Config(_))));
}

#[test]
fn checkpoint_round_trip_restores_f32_weights() {
    let learner = small_learner();
    let agent = new_agent(&learner, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent.ckpt");
    Checkpoint::from_agent(&agent, 7).save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.manifest.epoch, 7);
    let restored = loaded.to_agent().unwrap();
    for (a, b) in weights(&agent).iter().zip(weights(&restored)) {
        assert_eq!(*a as f32 as f64, b);
    }
    assert_eq!(restored.actor.num_params(), agent.actor.num_params());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let agent = new_agent(&small_learner(), 6);
    let bytes = Checkpoint::from_agent(&agent, 0).to_bytes().unwrap();
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(LearnError::Checkpoint(_))));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(LearnError::Checkpoint(_))));
    let mut other = new_agent(&LearnerConfig::default(), 6);
    assert!(matches!(
        Checkpoint::from_bytes(&bytes).unwrap().restore(&mut other),
        Err(LearnError::Checkpoint(_))
    ));
}
