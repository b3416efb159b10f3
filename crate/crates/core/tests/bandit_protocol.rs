use fpbandit::bandit::{
    make_synthetic_linear, make_tabular_replay, oracle_value, run_trial, ActionSet, Agent,
    Environment, HistoryBuffer, TrialOptions,
};
use fpbandit::baselines::UniformAgent;
use fpbandit::tensor::Matrix;
use fpbandit::{rng_from_seed, Result};
use rand::Rng;

/// Test-only oracle: replays its own copy of the environment stream.
struct Oracle {
    env: Environment,
}

impl Oracle {
    fn new(env: &Environment, seed: u64) -> Self {
        let mut env = env.clone();
        env.reseed(seed);
        Self { env }
    }
}

impl Agent for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn choose(&mut self, _context: &[f64]) -> Result<usize> {
        Ok(self.env.next_round().best_action())
    }

    fn update(&mut self, _history: &HistoryBuffer) -> Result<()> {
        Ok(())
    }
}

struct Fixed(usize);

impl Agent for Fixed {
    fn name(&self) -> &str {
        "fixed"
    }

    fn choose(&mut self, _context: &[f64]) -> Result<usize> {
        Ok(self.0)
    }

    fn update(&mut self, _history: &HistoryBuffer) -> Result<()> {
        Ok(())
    }
}

/// Records everything the protocol hands to an agent.
struct Spy {
    rng: fpbandit::Rng,
    k: usize,
    seen: Vec<(Vec<f64>, usize, f64)>,
    updates: Vec<usize>,
}

impl Agent for Spy {
    fn name(&self) -> &str {
        "spy"
    }

    fn choose(&mut self, _context: &[f64]) -> Result<usize> {
        Ok(self.rng.random_range(0..self.k))
    }

    fn observe(&mut self, context: &[f64], action: usize, reward: f64) {
        self.seen.push((context.to_vec(), action, reward));
    }

    fn update(&mut self, history: &HistoryBuffer) -> Result<()> {
        self.updates.push(history.len());
        Ok(())
    }
}

fn two_arm_constant(rows: usize) -> Environment {
    let contexts = Matrix::from_fn(rows, 2, |r, c| (r * 2 + c) as f64 / (2 * rows) as f64);
    let rewards = Matrix::from_fn(rows, 2, |_, c| if c == 0 { 1.0 } else { 0.0 });
    let actions =
        ActionSet::with_default_ids(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap()).unwrap();
    make_tabular_replay(contexts, rewards, actions, 0).unwrap()
}

fn random_table(rows: usize, k: usize, seed: u64) -> Environment {
    let mut rng = rng_from_seed(seed);
    let contexts = Matrix::from_fn(rows, 3, |_, _| rng.random::<f64>());
    let rewards = Matrix::from_fn(rows, k, |_, _| rng.random::<f64>());
    let actions =
        ActionSet::with_default_ids(Matrix::from_fn(k, k, |r, c| f64::from(u8::from(r == c))))
            .unwrap();
    make_tabular_replay(contexts, rewards, actions, seed).unwrap()
}

#[test]
fn oracle_agent_has_zero_regret() {
    let mut env = make_synthetic_linear(5, 8, 6, 3).unwrap();
    let mut oracle = Oracle::new(&env, 11);
    let out = run_trial(&mut env, &mut oracle, TrialOptions::new(1000), 11).unwrap();
    assert_eq!(out.trace.final_regret(), 0.0);
    assert!(out.trace.instantaneous().iter().all(|&r| r == 0.0));
    assert_eq!(
        out.trace.collected_reward(),
        oracle_value(&mut env, 1000, 11)
    );
}

#[test]
fn always_worst_accrues_one_per_round() {
    let mut env = two_arm_constant(3);
    let out = run_trial(&mut env, &mut Fixed(1), TrialOptions::new(250), 1).unwrap();
    assert_eq!(out.trace.final_regret(), 250.0);
}

#[test]
fn uniform_regret_on_constant_gap() {
    let mut env = two_arm_constant(4);
    let mut agent = UniformAgent::new("uniform", 2, 7);
    let out = run_trial(&mut env, &mut agent, TrialOptions::new(5000), 7).unwrap();
    let regret = out.trace.final_regret();
    assert!((regret - 2500.0).abs() <= 70.0, "{regret}");
}

#[test]
fn uniform_regret_matches_mean_gap_on_random_tables() {
    for seed in 0..5 {
        let mut env = random_table(12, 4, seed);
        let table = env.reward_table().clone();
        // Per-round regret of a uniform pick: mean and variance over (row, action).
        let gaps: Vec<f64> = (0..table.rows())
            .flat_map(|r| {
                let row = table.row(r);
                let best = row.iter().copied().fold(f64::MIN, f64::max);
                row.iter().map(move |v| best - v).collect::<Vec<_>>()
            })
            .collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
        let t = 5000.0;
        let mut agent = UniformAgent::new("uniform", 4, 100 + seed);
        let out = run_trial(&mut env, &mut agent, TrialOptions::new(5000), seed).unwrap();
        let z = (out.trace.final_regret() - t * mean) / (t * var).sqrt();
        assert!(z.abs() < 4.0, "seed {seed}: z = {z}");
    }
}

#[test]
fn regret_is_nonnegative_and_monotone() {
    let mut env = random_table(20, 5, 9);
    let mut agent = UniformAgent::new("uniform", 5, 1);
    let out = run_trial(&mut env, &mut agent, TrialOptions::new(800), 2).unwrap();
    let cum = out.trace.cumulative();
    assert!(out.trace.instantaneous().iter().all(|&r| r >= 0.0));
    assert!(cum.windows(2).all(|w| w[1] >= w[0]));
    let mut running = 0.0;
    for (i, r) in out.trace.instantaneous().iter().enumerate() {
        running += r;
        assert!((cum[i] - running).abs() < 1e-9);
    }
}

#[test]
fn oracle_value_constant_table() {
    let mut env = two_arm_constant(2);
    assert_eq!(oracle_value(&mut env, 10, 0), 10.0);
}

#[test]
fn oracle_value_matches_enumeration() {
    let mut env = random_table(5, 3, 21);
    let table = env.reward_table().clone();
    let contexts = env.contexts().clone();
    let value = oracle_value(&mut env, 40, 5);
    // Re-walk the stream and look every row up in the table.
    env.reseed(5);
    let mut expected = 0.0;
    for _ in 0..40 {
        let round = env.next_round();
        assert_eq!(round.context, contexts.row(round.row));
        expected += table
            .row(round.row)
            .iter()
            .copied()
            .fold(f64::MIN, f64::max);
    }
    assert!((value - expected).abs() < 1e-12);
}

#[test]
fn oracle_value_dominates_agents() {
    let mut env = random_table(30, 6, 4);
    for seed in 0..5 {
        let mut agent = UniformAgent::new("uniform", 6, seed);
        let out = run_trial(&mut env, &mut agent, TrialOptions::new(300), seed).unwrap();
        assert!(oracle_value(&mut env, 300, seed) >= out.trace.collected_reward());
    }
}

#[test]
fn agents_only_see_the_chosen_reward() {
    let mut env = random_table(8, 4, 13);
    let table = env.reward_table().clone();
    let contexts = env.contexts().clone();
    let mut spy = Spy {
        rng: rng_from_seed(1),
        k: 4,
        seen: Vec::new(),
        updates: Vec::new(),
    };
    let out = run_trial(&mut env, &mut spy, TrialOptions::new(95), 3).unwrap();
    assert_eq!(spy.seen.len(), 95);
    assert_eq!(spy.updates, vec![30, 60, 90]);
    for ((ctx, action, reward), entry) in spy.seen.iter().zip(out.history.entries()) {
        let row = (0..contexts.rows())
            .find(|&r| contexts.row(r) == ctx.as_slice())
            .unwrap();
        assert_eq!(*reward, table.get(row, *action));
        assert_eq!(entry.reward, *reward);
        assert_eq!(entry.action, *action);
    }
}

#[test]
fn invalid_action_aborts_trial() {
    let mut env = two_arm_constant(2);
    let err = run_trial(&mut env, &mut Fixed(2), TrialOptions::new(5), 0).unwrap_err();
    assert!(matches!(err, fpbandit::Error::Contract(_)), "{err}");
}

#[test]
fn replay_is_deterministic() {
    let run = || {
        let mut env = make_synthetic_linear(4, 6, 5, 8).unwrap();
        let mut agent = UniformAgent::new("uniform", 5, 99);
        run_trial(&mut env, &mut agent, TrialOptions::new(500), 17).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.stream_checksum, b.stream_checksum);
}

#[test]
fn same_seed_same_stream_for_every_agent() {
    let mut env = random_table(10, 3, 2);
    let a = run_trial(&mut env, &mut Fixed(0), TrialOptions::new(100), 42).unwrap();
    let mut agent = UniformAgent::new("uniform", 3, 5);
    let b = run_trial(&mut env, &mut agent, TrialOptions::new(100), 42).unwrap();
    assert_eq!(a.stream_checksum, b.stream_checksum);
    let c = run_trial(&mut env, &mut Fixed(0), TrialOptions::new(100), 43).unwrap();
    assert_ne!(a.stream_checksum, c.stream_checksum);
}
