/// Per-round and cumulative regret of one trial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretTrace {
    instantaneous: Vec<f64>,
    cumulative: Vec<f64>,
    chosen: Vec<usize>,
    oracle: Vec<usize>,
    collected: f64,
    oracle_total: f64,
}

impl RegretTrace {
    pub fn with_capacity(rounds: usize) -> Self {
        Self {
            instantaneous: Vec::with_capacity(rounds),
            cumulative: Vec::with_capacity(rounds),
            chosen: Vec::with_capacity(rounds),
            oracle: Vec::with_capacity(rounds),
            ..Self::default()
        }
    }

    /// Records one round given the full hidden reward vector.
    pub fn record(&mut self, rewards: &[f64], chosen: usize, oracle: usize) {
        let gap = (rewards[oracle] - rewards[chosen]).max(0.0);
        let prev = self.cumulative.last().copied().unwrap_or(0.0);
        self.instantaneous.push(gap);
        self.cumulative.push(prev + gap);
        self.chosen.push(chosen);
        self.oracle.push(oracle);
        self.collected += rewards[chosen];
        self.oracle_total += rewards[oracle];
    }

    pub fn rounds(&self) -> usize {
        self.instantaneous.len()
    }

    pub fn instantaneous(&self) -> &[f64] {
        &self.instantaneous
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn chosen(&self) -> &[usize] {
        &self.chosen
    }

    pub fn oracle(&self) -> &[usize] {
        &self.oracle
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Σ r_t(a_t).
    pub fn collected_reward(&self) -> f64 {
        self.collected
    }

    /// Σ r_t(a*_t).
    pub fn oracle_reward(&self) -> f64 {
        self.oracle_total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_sums() {
        let mut t = RegretTrace::default();
        t.record(&[0.2, 0.9], 0, 1);
        t.record(&[0.2, 0.9], 1, 1);
        t.record(&[0.5, 0.1], 1, 0);
        assert_eq!(t.instantaneous().len(), 3);
        assert!((t.final_regret() - 1.1).abs() < 1e-12);
        assert!((t.cumulative()[1] - 0.7).abs() < 1e-12);
        assert!((t.collected_reward() - 1.2).abs() < 1e-12);
        assert!((t.oracle_reward() - 2.3).abs() < 1e-12);
    }
}
