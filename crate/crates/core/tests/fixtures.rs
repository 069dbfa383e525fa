//! Regression fixtures frozen from oracle runs of the harness itself.

use mdp_family_eval::approx::synthetic::smooth_instance;
use mdp_family_eval::approx::{budget_sweep, Estimator, KMeansConfig, SweepConfig};
use mdp_family_eval::controllers::{MethodSpec, RandomSearchSettings, TrainerSpec};
use mdp_family_eval::envs::{Action, EnvInstance, Task};
use mdp_family_eval::eval::{overall_performance, weighted_sum, Anchor, Engine, ScoreCache, ScoreMatrix};
use mdp_family_eval::family::{build_random, build_uniform, enumerate_family, MdpFamily};
use mdp_family_eval::par::Execution;
use mdp_family_eval::reporting::distribution_sensitivity;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

fn pendulum_matrix(family: &MdpFamily, anchor: Anchor) -> ScoreMatrix {
    let cache = ScoreCache::new();
    let engine = Engine::new(Task::Pendulum, family, &cache)
        .eval_seeds(vec![0, 1, 2])
        .anchor(anchor);
    let rs = MethodSpec {
        id: "random_search".into(),
        trainer: TrainerSpec::RandomSearch {
            max_episodes: 30,
            eval_episodes_per_candidate: 2,
            settings: RandomSearchSettings::default(),
        },
    };
    let mut matrix = engine.empty_matrix();
    for m in [MethodSpec::baseline("baseline"), rs] {
        matrix.set_row(engine.evaluate_row(&m).unwrap()).unwrap();
    }
    matrix
}

#[test]
fn cartpole_two_step_closed_form() {
    // From rest, +F then -F. The first explicit Euler step only sets the
    // velocity; the second moves the cart by dt^2 * x_acc(+F).
    let env = EnvInstance::nominal(Task::Cartpole);
    let (l, mc, mp, f) = (0.5, 1.0, 0.1, 10.0);
    let m = mc + mp;
    let x_acc = f / m * (1.0 + mp / (m * (4.0 / 3.0 - mp / m)));
    let dt = env.dt();
    let s0 = env.state_from_physical(vec![0.0; 4]);
    let (s1, _) = env.step(&s0, Action::Discrete(1)).unwrap();
    let (s2, _) = env.step(&s1, Action::Discrete(0)).unwrap();
    assert_eq!(s1.physical[0], 0.0);
    assert!((s2.physical[0] - dt * dt * x_acc).abs() < 1e-15);
    let theta_acc = -f / m / (l * (4.0 / 3.0 - mp / m));
    assert!((s1.physical[3] - dt * theta_acc).abs() < 1e-15);
}

#[test]
fn pendulum_baseline_family_value() {
    let family = enumerate_family(&Task::Pendulum.context_space());
    let uniform = build_uniform(&family);
    let own = pendulum_matrix(&family, Anchor::Baseline);
    let e = overall_performance(&own, &uniform, "baseline").unwrap().value;
    assert!((e - 1.0).abs() < 1e-12);
    let raw = pendulum_matrix(&family, Anchor::Constant(1.0));
    let e_raw = overall_performance(&raw, &uniform, "baseline").unwrap().value;
    let e_rs = overall_performance(&own, &uniform, "random_search").unwrap().value;
    assert!(close(e_raw, PENDULUM_BASELINE_RAW_E), "{e_raw:?}");
    assert!(close(e_rs, PENDULUM_RS_E), "{e_rs:?}");
}

const PENDULUM_BASELINE_RAW_E: f64 = 919.7916610737636;
const PENDULUM_RS_E: f64 = 1.4286864441131668;

#[test]
fn sensitivity_table_fixture() {
    let family = enumerate_family(&Task::Pendulum.context_space());
    let matrix = pendulum_matrix(&family, Anchor::Baseline);
    let dists: Vec<_> = (0..5)
        .map(|k| (format!("random_{k}"), build_random(&family, k)))
        .collect();
    let t = distribution_sensitivity(&matrix, &dists).unwrap();
    for (d, row) in t.values.iter().enumerate() {
        assert!((row[0] - 1.0).abs() < 1e-12);
        assert!(close(row[1], SENSITIVITY_RS[d]), "distribution {d}: {:?}", row[1]);
    }
    assert_eq!(
        t.rankings,
        SENSITIVITY_RANKINGS.map(|r| r.map(String::from).to_vec()).to_vec()
    );
}

const SENSITIVITY_RS: [f64; 5] = [
    1.5213390581212876,
    1.447834436499584,
    1.4802556451488502,
    1.4942330140027578,
    1.4539429814651015,
];
const SENSITIVITY_RANKINGS: [[&str; 2]; 5] = [["baseline", "random_search"]; 5];

#[test]
fn m3_error_shrinks_with_budget() {
    let inst = smooth_instance(0, 100, 3).unwrap();
    let (exact, _) = weighted_sum(&inst.scores, inst.dist.mass()).unwrap();
    let cfg = SweepConfig {
        estimators: vec![Estimator::M3],
        budgets: vec![5, 10, 20, 40, 80, 100],
        repetitions: 20,
        rng_seed: 3,
        kmeans: KMeansConfig::default(),
        exec: Execution::Parallel,
    };
    let sweep = budget_sweep(&inst.family, &inst.dist, &inst.scores, &cfg, Some(exact)).unwrap();
    let mae: Vec<f64> = sweep.rows.iter().map(|r| r.mean_abs_error.unwrap()).collect();
    assert!(mae.windows(2).all(|w| w[1] <= w[0]), "{mae:?}");
    assert_eq!(*mae.last().unwrap(), 0.0);
    for (got, want) in mae.iter().zip(M3_MAE) {
        assert!(close(*got, want), "{mae:?}");
    }
}

const M3_MAE: [f64; 6] = [
    0.053502139942467684,
    0.023462800242423476,
    0.014002410877377424,
    0.006959632731618615,
    0.0038123437004596193,
    0.0,
];
