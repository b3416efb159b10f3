use super::env::Environment;
use super::history::{HistoryBuffer, HistoryEntry};
use super::regret::RegretTrace;
use crate::error::{Error, Result};

/// Rounds between posterior/model updates.
pub const DEFAULT_UPDATE_EVERY: usize = 30;

/// The agent side of the protocol: see a context, pick an action, learn
/// only the reward of that action.
pub trait Agent: Send {
    fn name(&self) -> &str;

    /// Picks an action index for `context`.
    fn choose(&mut self, context: &[f64]) -> Result<usize>;

    /// Called after every round with the single revealed reward.
    fn observe(&mut self, _context: &[f64], _action: usize, _reward: f64) {}

    /// Periodic model refresh on the full agent-visible history.
    fn update(&mut self, history: &HistoryBuffer) -> Result<()>;
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn choose(&mut self, context: &[f64]) -> Result<usize> {
        (**self).choose(context)
    }

    fn observe(&mut self, context: &[f64], action: usize, reward: f64) {
        (**self).observe(context, action, reward)
    }

    fn update(&mut self, history: &HistoryBuffer) -> Result<()> {
        (**self).update(history)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOptions {
    pub rounds: usize,
    pub update_every: usize,
}

impl TrialOptions {
    pub fn new(rounds: usize) -> Self {
        Self {
            rounds,
            update_every: DEFAULT_UPDATE_EVERY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trace: RegretTrace,
    pub history: HistoryBuffer,
    /// FNV-1a digest of the emitted (row, context, hidden rewards) stream.
    pub stream_checksum: u64,
}

/// Runs one trial of `opts.rounds` rounds with the environment stream
/// seeded by `seed`.
pub fn run_trial<A: Agent + ?Sized>(
    env: &mut Environment,
    agent: &mut A,
    opts: TrialOptions,
    seed: u64,
) -> Result<TrialOutcome> {
    if opts.rounds == 0 {
        return Err(Error::contract("a trial needs at least one round"));
    }
    if opts.update_every == 0 {
        return Err(Error::contract("update cadence must be ≥ 1"));
    }
    env.reseed(seed);
    let actions = env.actions().clone();
    let mut trace = RegretTrace::with_capacity(opts.rounds);
    let mut history = HistoryBuffer::new();
    let mut checksum = Fnv::new();
    for t in 1..=opts.rounds {
        let round = env.next_round();
        checksum.write_u64(round.row as u64);
        for x in round.context.iter().chain(round.rewards()) {
            checksum.write_u64(x.to_bits());
        }
        let action = agent.choose(round.context)?;
        if action >= actions.len() {
            return Err(Error::contract(format!(
                "agent {} chose action {action} of {} at round {t}",
                agent.name(),
                actions.len()
            )));
        }
        let reward = round.rewards()[action];
        trace.record(round.rewards(), action, round.best_action());
        let context = round.context.to_vec();
        agent.observe(&context, action, reward);
        history.push(HistoryEntry {
            context,
            action,
            drug: actions.feature(action).to_vec(),
            reward,
            round: t,
        })?;
        if t % opts.update_every == 0 {
            agent.update(&history)?;
        }
    }
    Ok(TrialOutcome {
        trace,
        history,
        stream_checksum: checksum.finish(),
    })
}

/// Σ_t max_a r_t(a) over the round sequence produced by `seed`.
pub fn oracle_value(env: &mut Environment, rounds: usize, seed: u64) -> f64 {
    env.reseed(seed);
    (0..rounds)
        .map(|_| {
            let r = env.next_round();
            r.rewards()[r.best_action()]
        })
        .sum()
}

/// 64-bit FNV-1a.
#[derive(Debug, Clone, Copy)]
pub struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv {
    fn default() -> Self {
        Self::new()
    }
}
