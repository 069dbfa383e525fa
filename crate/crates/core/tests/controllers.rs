//! Trainer fixtures on the nominal environments.

use mdp_family_eval::controllers::{
    fixed_baseline, q_learning, train_cem, train_random_search, train_tabular_q, CemSettings, EpsilonSchedule,
    Features, Policy, RandomSearchSettings, TabularSettings, TrainBudget,
};
use mdp_family_eval::envs::{Controller, EnvInstance, Task};

fn mean_return(env: &EnvInstance, policy: &Policy) -> f64 {
    (100..120)
        .map(|s| env.rollout(policy, s).unwrap().raw_return)
        .sum::<f64>()
        / 20.0
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

fn tabular(bins: Vec<usize>, gamma: f64, epsilon: EpsilonSchedule) -> TabularSettings {
    TabularSettings {
        bins,
        alpha: 0.1,
        gamma,
        epsilon,
        bounds: None,
    }
}

#[test]
fn random_search_solves_nominal_cartpole() {
    let env = EnvInstance::nominal(Task::Cartpole);
    let r = train_random_search(
        &env,
        &TrainBudget::new(2000, 5, 7).unwrap(),
        &RandomSearchSettings::default(),
    )
    .unwrap();
    let best = r.train_curve.last().unwrap().1;
    assert!(best >= 475.0, "best mean return {best}");
    assert!(r.episodes_used <= 2000);
    for w in r.train_curve.windows(2) {
        assert!(w[1].1 >= w[0].1);
    }
    let eval = mean_return(&env, &r.policy);
    assert!(eval / 500.0 >= 0.95, "held-out return {eval}");
}

#[test]
fn random_search_single_episode_keeps_initial_candidate() {
    let env = EnvInstance::nominal(Task::Cartpole);
    let r = train_random_search(
        &env,
        &TrainBudget::new(1, 1, 3).unwrap(),
        &RandomSearchSettings::default(),
    )
    .unwrap();
    let Policy::Linear(p) = &r.policy else {
        panic!("expected a linear policy")
    };
    assert!(p.params().iter().all(|&w| w == 0.0));
    assert_eq!(r.train_curve.len(), 1);
    assert_eq!(r.episodes_used, 1);
}

#[test]
fn trainers_are_deterministic() {
    let cp = EnvInstance::nominal(Task::Cartpole);
    let pd = EnvInstance::nominal(Task::Pendulum);
    let b = TrainBudget::new(200, 2, 11).unwrap();
    let rs = || train_random_search(&cp, &b, &RandomSearchSettings::default()).unwrap();
    assert_eq!(rs(), rs());
    let cem = || train_cem(&pd, &b, &CemSettings::new(10, 0.2)).unwrap();
    assert_eq!(cem(), cem());
    let q = || {
        train_tabular_q(
            &cp,
            &b,
            &tabular(vec![3, 3, 6, 6], 0.99, EpsilonSchedule::constant(0.1)),
        )
        .unwrap()
    };
    assert_eq!(q(), q());
}

/// Frozen from an oracle run: population 64, elite fraction 0.125, 150
/// iterations of 5 episodes per candidate with quadratic features.
#[test]
fn cem_beats_baseline_on_nominal_pendulum() {
    let env = EnvInstance::nominal(Task::Pendulum);
    let settings = CemSettings {
        features: Features::Quadratic,
        ..CemSettings::new(64, 0.125)
    };
    let r = train_cem(&env, &TrainBudget::new(64 * 150 * 5, 5, 0).unwrap(), &settings).unwrap();
    let cem = mean_return(&env, &r.policy);
    let baseline = mean_return(&env, &fixed_baseline("pendulum").unwrap());
    assert!(cem < baseline, "cem cost {cem} vs baseline {baseline}");
    assert!(close(cem, CEM_FIXTURE), "cem cost {cem:?} drifted from {CEM_FIXTURE}");
}

const CEM_FIXTURE: f64 = 193.27981652618672;

#[test]
fn tabular_q_learns_nominal_cartpole() {
    let env = EnvInstance::nominal(Task::Cartpole);
    let settings = tabular(
        vec![6, 6, 12, 12],
        0.99,
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            decay_episodes: 4000,
        },
    );
    let r = train_tabular_q(&env, &TrainBudget::new(5000, 1, 0).unwrap(), &settings).unwrap();
    let ret = mean_return(&env, &r.policy);
    assert!(ret > 200.0, "mean return {ret}");
    assert!(
        close(ret, TABULAR_FIXTURE),
        "mean return {ret:?} drifted from {TABULAR_FIXTURE}"
    );
}

const TABULAR_FIXTURE: f64 = 317.05;

#[test]
fn zero_discount_learns_immediate_reward() {
    // One-step episodes: every update targets r = 1, so a cell visited n
    // times holds 1 - (1 - alpha)^n.
    let env = EnvInstance::nominal(Task::Cartpole).with_horizon(1);
    let out = q_learning(
        &env,
        &TrainBudget::new(300, 1, 5).unwrap(),
        &tabular(vec![2, 2, 2, 2], 0.0, EpsilonSchedule::constant(0.5)),
    )
    .unwrap();
    assert_eq!(out.visits.iter().sum::<u64>(), 300);
    for (q, &n) in out.policy.q.iter().zip(&out.visits) {
        let want = 1.0 - 0.9f64.powi(n as i32);
        assert!((q - want).abs() < 1e-12, "q {q} visits {n}");
    }
}

#[test]
fn pure_exploration_still_emits_greedy_policy() {
    let env = EnvInstance::nominal(Task::Cartpole);
    let r = train_tabular_q(
        &env,
        &TrainBudget::new(50, 1, 2).unwrap(),
        &tabular(vec![3, 3, 3, 3], 0.9, EpsilonSchedule::constant(1.0)),
    )
    .unwrap();
    let Policy::Tabular(p) = &r.policy else {
        panic!("expected a tabular policy")
    };
    assert!(p.q.iter().any(|&q| q != 0.0));
    let a = r.policy.act(&[0.0, 0.0, 0.01, 0.0]);
    assert!(env.action_space().contains(a));
}

#[test]
fn cartpole_baseline_fixture() {
    let env = EnvInstance::nominal(Task::Cartpole);
    let policy = fixed_baseline("cartpole").unwrap();
    let a = env.rollout(&policy, 0).unwrap();
    let b = env.rollout(&policy, 0).unwrap();
    assert_eq!(a, b);
    assert!(a.raw_return > 50.0);
    assert_eq!(a.raw_return, BASELINE_FIXTURE);
}

const BASELINE_FIXTURE: f64 = 500.0;
