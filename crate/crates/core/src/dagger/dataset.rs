use serde::{Deserialize, Serialize};

use crate::diffusion::PairTable;
use crate::env::{ExpertMode, Point};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Initial,
    Intervention,
}

/// One observation with the expert's next `T_p` actions, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub episode: u64,
    pub provenance: Provenance,
    /// Scripted expert mode; `None` for human demonstrations.
    pub mode: Option<ExpertMode>,
    pub pairs: Vec<Pair>,
}

impl Demonstration {
    /// Builds the overlapping windows of an expert segment: pair `i` holds
    /// `observations[i]` and actions `i..i + horizon`, padded past the end
    /// by repeating the final action.
    pub fn from_segment(
        episode: u64,
        provenance: Provenance,
        mode: Option<ExpertMode>,
        observations: &[Vec<f64>],
        actions: &[Point],
        horizon: usize,
    ) -> Result<Self> {
        if observations.len() != actions.len() {
            return Err(Error::shape(format!(
                "{} observations but {} actions in expert segment",
                observations.len(),
                actions.len()
            )));
        }
        if actions.is_empty() {
            return Err(Error::Expert("expert segment recorded no actions".into()));
        }
        let last = actions.len() - 1;
        let pairs = observations
            .iter()
            .enumerate()
            .map(|(i, o)| Pair {
                obs: o.clone(),
                actions: (i..i + horizon)
                    .flat_map(|j| actions[j.min(last)])
                    .collect(),
            })
            .collect();
        Ok(Self {
            episode,
            provenance,
            mode,
            pairs,
        })
    }
}

/// Aggregated expert data. Only expert-produced actions are ever stored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub demos: Vec<Demonstration>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, demo: Demonstration) {
        self.demos.push(demo);
    }

    /// Number of demonstrations.
    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn pair_count(&self) -> usize {
        self.demos.iter().map(|d| d.pairs.len()).sum()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.demos.iter().filter(|d| d.provenance == provenance).count()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &Pair> {
        self.demos.iter().flat_map(|d| d.pairs.iter())
    }

    /// Flattens all pairs into a raw-unit table.
    pub fn table(&self) -> Result<PairTable> {
        Self::table_of(self.demos.iter())
    }

    /// Table over a chosen subset of demonstrations, repeats allowed.
    pub fn table_of<'a>(demos: impl Iterator<Item = &'a Demonstration>) -> Result<PairTable> {
        let mut table: Option<PairTable> = None;
        for d in demos {
            for p in &d.pairs {
                let t = table.get_or_insert_with(|| PairTable::new(p.obs.len(), p.actions.len()));
                if p.obs.len() != t.obs_dim || p.actions.len() != t.action_len {
                    return Err(Error::shape("dataset pairs have inconsistent dimensions"));
                }
                t.push(&p.obs, &p.actions);
            }
        }
        table.ok_or_else(|| Error::config("dataset holds no pairs"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_pad_with_last_action() {
        let obs: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64, 0.0]).collect();
        let acts = [[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let d = Demonstration::from_segment(7, Provenance::Initial, None, &obs, &acts, 4).unwrap();
        assert_eq!(d.pairs.len(), 3);
        assert_eq!(d.pairs[0].actions, vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 3.0, 0.0]);
        assert_eq!(d.pairs[2].actions, vec![3.0, 0.0, 3.0, 0.0, 3.0, 0.0, 3.0, 0.0]);
        assert_eq!(d.pairs[1].obs, vec![1.0, 0.0]);
    }

    #[test]
    fn table_flattens_in_order() {
        let mut ds = Dataset::new();
        let obs = vec![vec![0.0, 1.0]];
        let d = Demonstration::from_segment(0, Provenance::Initial, None, &obs, &[[0.5, 0.5]], 2).unwrap();
        ds.push(d.clone());
        ds.push(Demonstration {
            provenance: Provenance::Intervention,
            ..d
        });
        let t = ds.table().unwrap();
        assert_eq!(t.rows(), 2);
        assert_eq!(t.actions(1), &[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(ds.count(Provenance::Intervention), 1);
    }

    #[test]
    fn empty_dataset_has_no_table() {
        assert!(matches!(Dataset::new().table(), Err(Error::Config(_))));
    }
}
