use std::collections::BTreeMap;
use std::fmt::Display;
use std::hash::Hash;
use std::io::{self, BufRead, Write};

use indexmap::IndexMap;
use rand::Rng;

use super::StrategyError;

/// One context's accumulated rewards. Actions keep insertion order, which
/// makes sampling reproducible for a fixed rng stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Row<A: Hash + Eq> {
    cells: IndexMap<A, f64>,
    total: f64,
}

impl<A: Hash + Eq + Clone> Row<A> {
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, action: &A) -> Option<f64> {
        self.cells.get(action).copied()
    }

    pub fn contains(&self, action: &A) -> bool {
        self.cells.contains_key(action)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&A, f64)> {
        self.cells.iter().map(|(a, &s)| (a, s))
    }

    pub fn actions(&self) -> impl Iterator<Item = &A> {
        self.cells.keys()
    }

    /// Number of actions with positive mass.
    pub fn support(&self) -> usize {
        self.cells.values().filter(|&&s| s > 0.0).count()
    }

    pub fn probability(&self, action: &A) -> Option<f64> {
        self.get(action).map(|s| s / self.total)
    }

    /// `S / row total` for every action, in row order.
    pub fn probabilities(&self) -> Vec<(A, f64)> {
        self.cells
            .iter()
            .map(|(a, &s)| (a.clone(), s / self.total))
            .collect()
    }

    /// Draws up to `count` distinct actions. Each draw is categorical over
    /// the mass not yet drawn, which is the same law as redrawing on
    /// duplicates. Zero-mass actions are never drawn.
    pub fn sample_distinct<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<A> {
        let mut weights: Vec<f64> = self.cells.values().copied().collect();
        let want = count.min(self.support());
        let mut drawn = Vec::with_capacity(want);
        for _ in 0..want {
            let remaining: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * remaining;
            let mut chosen = None;
            for (i, &w) in weights.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                chosen = Some(i);
                if u < w {
                    break;
                }
                u -= w;
            }
            // `chosen` falls back to the last positive cell on rounding.
            let i = chosen.expect("support counted above");
            weights[i] = 0.0;
            drawn.push(self.cells.get_index(i).expect("index in range").0.clone());
        }
        drawn
    }
}

/// Sparse accumulated-reward table `S` keyed by context then action. The
/// probability table is derived on demand as `S / row total`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyMatrix<C: Ord, A: Hash + Eq> {
    rows: BTreeMap<C, Row<A>>,
}

impl<C: Ord, A: Hash + Eq> Default for StrategyMatrix<C, A> {
    fn default() -> Self {
        Self {
            rows: BTreeMap::new(),
        }
    }
}

impl<C, A> StrategyMatrix<C, A>
where
    C: Ord + Clone + Display,
    A: Hash + Eq + Clone + Display,
{
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains_row(&self, context: &C) -> bool {
        self.rows.contains_key(context)
    }

    pub fn row(&self, context: &C) -> Option<&Row<A>> {
        self.rows.get(context)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&C, &Row<A>)> {
        self.rows.iter()
    }

    /// Inserts a fresh row. Repeated actions keep their first weight.
    /// Rejects negative or non-finite weights and rows without positive mass.
    pub fn insert_row<I>(&mut self, context: C, cells: I) -> Result<(), StrategyError>
    where
        I: IntoIterator<Item = (A, f64)>,
    {
        let mut row = Row {
            cells: IndexMap::new(),
            total: 0.0,
        };
        for (action, weight) in cells {
            if !weight.is_finite() || weight < 0.0 {
                return Err(StrategyError::InvalidWeight {
                    context: context.to_string(),
                    weight,
                });
            }
            if !row.cells.contains_key(&action) {
                row.total += weight;
                row.cells.insert(action, weight);
            }
        }
        if row.total <= 0.0 {
            return Err(StrategyError::EmptyRow(context.to_string()));
        }
        self.rows.insert(context, row);
        Ok(())
    }

    /// Adds `action` with `weight` unless it is already in the row.
    /// Returns whether the row changed.
    pub fn add_action(&mut self, context: &C, action: A, weight: f64) -> Result<bool, StrategyError> {
        if !weight.is_finite() || weight < 0.0 {
            return Err(StrategyError::InvalidWeight {
                context: context.to_string(),
                weight,
            });
        }
        let row = self
            .rows
            .get_mut(context)
            .ok_or_else(|| StrategyError::UnknownContext(context.to_string()))?;
        if row.cells.contains_key(&action) {
            return Ok(false);
        }
        row.cells.insert(action, weight);
        row.total += weight;
        Ok(true)
    }

    /// Roth–Erev update: `S[context][action] += alpha * reward`, every
    /// other cell unchanged.
    pub fn reinforce(&mut self, context: &C, action: &A, reward: f64, alpha: f64) -> Result<(), StrategyError> {
        if !(reward >= 0.0 && reward.is_finite()) {
            return Err(StrategyError::InvalidReward(reward));
        }
        let row = self
            .rows
            .get_mut(context)
            .ok_or_else(|| StrategyError::UnknownContext(context.to_string()))?;
        let cell = row
            .cells
            .get_mut(action)
            .ok_or_else(|| StrategyError::UnknownAction {
                context: context.to_string(),
                action: action.to_string(),
            })?;
        let delta = alpha * reward;
        *cell += delta;
        row.total += delta;
        Ok(())
    }

    pub fn probability(&self, context: &C, action: &A) -> Option<f64> {
        self.rows.get(context)?.probability(action)
    }

    /// Writes `context \t action \t S` per cell; rows in context order,
    /// cells in row order.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (context, row) in &self.rows {
            for (action, s) in row.cells() {
                writeln!(out, "{context}\t{action}\t{s}")?;
            }
        }
        Ok(())
    }

    pub fn snapshot_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("keys are utf-8")
    }
}

/// Snapshot rows read back with plain string keys.
pub type SnapshotMatrix = StrategyMatrix<String, String>;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("snapshot line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Parses the tab-separated snapshot format. Rows whose cells are all zero
/// cannot be represented and are rejected.
pub fn read_snapshot<R: BufRead>(input: R) -> Result<SnapshotMatrix, SnapshotError> {
    let mut grouped: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: &str| SnapshotError::Malformed {
            line: i + 1,
            reason: reason.to_owned(),
        };
        let mut parts = line.split('\t');
        let (Some(context), Some(action), Some(value), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(malformed("expected three tab-separated fields"));
        };
        let value: f64 = value.parse().map_err(|_| malformed("bad S value"))?;
        grouped
            .entry(context.to_owned())
            .or_default()
            .push((action.to_owned(), value));
    }
    let mut matrix = SnapshotMatrix::new();
    for (context, cells) in grouped {
        matrix
            .insert_row(context.clone(), cells)
            .map_err(|e| SnapshotError::Malformed {
                line: 0,
                reason: e.to_string(),
            })?;
    }
    Ok(matrix)
}
