use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// One agent-visible interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub context: Vec<f64>,
    pub action: usize,
    pub drug: Vec<f64>,
    pub reward: f64,
    pub round: usize,
}

/// Append-only log of `(context, action, observed reward)` triples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoryBuffer {
    entries: Vec<HistoryEntry>,
}

impl HistoryBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rewards must lie in `[0, 1]` and rounds must strictly increase.
    pub fn push(&mut self, entry: HistoryEntry) -> Result<()> {
        if !(0.0..=1.0).contains(&entry.reward) {
            return Err(Error::contract(format!(
                "reward {} outside [0, 1] at round {}",
                entry.reward, entry.round
            )));
        }
        if let Some(last) = self.entries.last() {
            if entry.round <= last.round {
                return Err(Error::contract(format!(
                    "round {} does not follow round {}",
                    entry.round, last.round
                )));
            }
            if entry.context.len() != last.context.len() || entry.drug.len() != last.drug.len() {
                return Err(Error::shape("history rows must keep their feature widths"));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> &HistoryEntry {
        &self.entries[i]
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.last()
    }

    pub fn context_dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.context.len())
    }

    /// Concatenated `[x_g ‖ x_d]` rows for the listed entries.
    pub fn inputs(&self, indices: &[usize]) -> Matrix {
        let width = self
            .entries
            .first()
            .map_or(0, |e| e.context.len() + e.drug.len());
        let mut m = Matrix::zeros(indices.len(), width);
        for (r, &i) in indices.iter().enumerate() {
            let e = &self.entries[i];
            let row = m.row_mut(r);
            row[..e.context.len()].copy_from_slice(&e.context);
            row[e.context.len()..].copy_from_slice(&e.drug);
        }
        m
    }

    pub fn rewards(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.entries[i].reward).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(round: usize, reward: f64) -> HistoryEntry {
        HistoryEntry {
            context: vec![0.1, 0.2],
            action: 0,
            drug: vec![1.0],
            reward,
            round,
        }
    }

    #[test]
    fn enforces_invariants() {
        let mut h = HistoryBuffer::new();
        h.push(entry(1, 0.5)).unwrap();
        assert!(h.push(entry(1, 0.5)).is_err());
        assert!(h.push(entry(2, 1.5)).is_err());
        assert!(h.push(entry(3, -0.1)).is_err());
        h.push(entry(3, 1.0)).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h.inputs(&[1, 0]).row(0), &[0.1, 0.2, 1.0]);
        assert_eq!(h.rewards(&[1]), vec![1.0]);
    }
}
