use rand::Rng;

use crate::bandit::{Agent, HistoryBuffer};
use crate::error::{Error, Result};
use crate::{rng_from_seed, Rng as AgentRng};

/// Uniformly random action index in `0..num_actions`.
pub fn uniform_choose(num_actions: usize, rng: &mut impl Rng) -> Result<usize> {
    if num_actions == 0 {
        return Err(Error::contract("no actions to choose from"));
    }
    Ok(rng.random_range(0..num_actions))
}

pub struct UniformAgent {
    name: String,
    num_actions: usize,
    rng: AgentRng,
}

impl UniformAgent {
    pub fn new(name: impl Into<String>, num_actions: usize, seed: u64) -> Self {
        Self {
            name: name.into(),
            num_actions,
            rng: rng_from_seed(seed),
        }
    }
}

impl Agent for UniformAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, _context: &[f64]) -> Result<usize> {
        uniform_choose(self.num_actions, &mut self.rng)
    }

    fn update(&mut self, _history: &HistoryBuffer) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::test_support::frequencies;

    #[test]
    fn one_action() {
        assert_eq!(uniform_choose(1, &mut rng_from_seed(0)).unwrap(), 0);
        assert!(uniform_choose(0, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn four_actions_are_balanced() {
        let mut rng = rng_from_seed(1);
        let freq = frequencies(10_000, 4, || uniform_choose(4, &mut rng).unwrap());
        for f in freq {
            assert!((0.23..=0.27).contains(&f), "{f}");
        }
    }

    #[test]
    fn seeded_draws_repeat() {
        let a: Vec<usize> = {
            let mut agent = UniformAgent::new("u", 7, 5);
            (0..50).map(|_| agent.choose(&[]).unwrap()).collect()
        };
        let mut agent = UniformAgent::new("u", 7, 5);
        let b: Vec<usize> = (0..50).map(|_| agent.choose(&[]).unwrap()).collect();
        assert_eq!(a, b);
    }
}
