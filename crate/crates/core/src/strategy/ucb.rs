use std::collections::HashMap;
use std::hash::Hash;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmStats {
    pub pulls: u64,
    pub reward_sum: f64,
}

impl ArmStats {
    pub fn mean(&self) -> f64 {
        if self.pulls == 0 {
            0.0
        } else {
            self.reward_sum / self.pulls as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ContextStats<A: Hash + Eq> {
    total_pulls: u64,
    arms: HashMap<A, ArmStats>,
}

impl<A: Hash + Eq> Default for ContextStats<A> {
    fn default() -> Self {
        Self {
            total_pulls: 0,
            arms: HashMap::new(),
        }
    }
}

/// Pull counts and cumulative rewards per (context, action) for UCB-1.
#[derive(Debug, Clone, PartialEq)]
pub struct UcbState<C: Hash + Eq, A: Hash + Eq> {
    contexts: HashMap<C, ContextStats<A>>,
}

impl<C: Hash + Eq, A: Hash + Eq> Default for UcbState<C, A> {
    fn default() -> Self {
        Self {
            contexts: HashMap::new(),
        }
    }
}

impl<C, A> UcbState<C, A>
where
    C: Hash + Eq + Clone,
    A: Hash + Eq + Ord + Clone,
{
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self, context: &C, action: &A) -> ArmStats {
        self.contexts
            .get(context)
            .and_then(|c| c.arms.get(action))
            .copied()
            .unwrap_or_default()
    }

    pub fn total_pulls(&self, context: &C) -> u64 {
        self.contexts.get(context).map_or(0, |c| c.total_pulls)
    }

    pub fn record(&mut self, context: &C, action: &A, reward: f64) {
        let ctx = self.contexts.entry(context.clone()).or_default();
        ctx.total_pulls += 1;
        let arm = ctx.arms.entry(action.clone()).or_default();
        arm.pulls += 1;
        arm.reward_sum += reward;
    }

    /// UCB-1 choice among `candidates`. Unpulled actions come first;
    /// otherwise the argmax of `mean + c * sqrt(ln N / n)`. Ties go to the
    /// smallest action key. Returns `None` only for an empty candidate set.
    pub fn select<'a, I>(&self, context: &C, candidates: I, exploration: f64) -> Option<A>
    where
        I: IntoIterator<Item = &'a A>,
        A: 'a,
    {
        let mut sorted: Vec<&A> = candidates.into_iter().collect();
        sorted.sort();
        sorted.dedup();
        if let Some(unpulled) = sorted.iter().find(|a| self.stats(context, a).pulls == 0) {
            return Some((*unpulled).clone());
        }
        let ln_total = (self.total_pulls(context) as f64).ln();
        let mut best: Option<(&A, f64)> = None;
        for action in sorted {
            let stats = self.stats(context, action);
            let index = stats.mean() + exploration * (ln_total / stats.pulls as f64).sqrt();
            // Strict comparison keeps the earliest key on ties.
            if best.is_none_or(|(_, b)| index > b) {
                best = Some((action, index));
            }
        }
        best.map(|(a, _)| a.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(arms: &[(u32, u64, f64)]) -> UcbState<&'static str, u32> {
        let mut s = UcbState::new();
        for &(action, pulls, mean) in arms {
            for _ in 0..pulls {
                s.record(&"ctx", &action, mean);
            }
        }
        s
    }

    #[test]
    fn unpulled_first() {
        let s = state(&[(0, 5, 1.0)]);
        assert_eq!(s.select(&"ctx", &[0, 1], 2f64.sqrt()), Some(1));
        let empty: UcbState<&str, u32> = UcbState::new();
        assert_eq!(empty.select(&"ctx", &[3, 2], 1.0), Some(2));
    }

    #[test]
    fn dominant_arm() {
        let s = state(&[(0, 10, 0.9), (1, 10, 0.1)]);
        assert_eq!(s.select(&"ctx", &[0, 1], 2f64.sqrt()), Some(0));
    }

    #[test]
    fn bonus_beats_gap() {
        // Independent evaluation of both indices.
        let c = 2f64.sqrt();
        let ln101 = 101f64.ln();
        let index0 = 0.5 + c * (ln101 / 100.0).sqrt();
        let index1 = 0.4 + c * (ln101 / 1.0).sqrt();
        assert!(index1 > index0);
        assert!((ln101.sqrt() - 2.148).abs() < 1e-3);

        let s = state(&[(0, 100, 0.5), (1, 1, 0.4)]);
        assert_eq!(s.total_pulls(&"ctx"), 101);
        assert_eq!(s.select(&"ctx", &[0, 1], c), Some(1));
    }

    #[test]
    fn empty_candidates() {
        let s = state(&[]);
        assert_eq!(s.select(&"ctx", &[], 1.0), None);
    }
}
