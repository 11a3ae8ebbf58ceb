use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::EnsemblePolicy;
use crate::diffusion::DiffusionPolicy;
use crate::env::{Probe, RegionLabel};
use crate::seed;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub label: RegionLabel,
    pub observation: Vec<f64>,
    /// Expected loss of a policy-sampled chunk at the probe.
    pub loss: f64,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub label: RegionLabel,
    pub count: usize,
    pub mean_loss: f64,
    pub mean_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAnalysis {
    /// One row per region present in the probes, in label order.
    pub rows: Vec<RegionRow>,
    pub probes: Vec<ProbeRecord>,
}

impl RegionAnalysis {
    pub fn losses(&self, label: RegionLabel) -> Vec<f64> {
        self.probes.iter().filter(|p| p.label == label).map(|p| p.loss).collect()
    }

    pub fn scores(&self, label: RegionLabel) -> Vec<f64> {
        self.probes
            .iter()
            .filter(|p| p.label == label)
            .filter_map(|p| p.score)
            .collect()
    }

    pub fn row(&self, label: RegionLabel) -> Option<&RegionRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Scores every probe with the policy's expected loss (on its own sampled
/// chunk) and, when given, the ensemble's disagreement.
pub fn region_analysis(
    policy: &DiffusionPolicy,
    ensemble: Option<&EnsemblePolicy>,
    probes: &[Probe],
    loss_batch: usize,
    seed: u64,
) -> Result<RegionAnalysis> {
    let records = probes
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = seed::rng(seed, &[seed::stream::PROBE, i as u64]);
            let obs_n = policy.normalize_obs(&p.observation);
            let sample = policy.sample_normalized(&obs_n, 1, &mut rng)?;
            let loss = policy.expected_loss(&obs_n, &sample, loss_batch, &mut rng)?;
            let score = match ensemble {
                Some(e) => Some(e.score(&p.observation, &mut rng)?.score),
                None => None,
            };
            Ok(ProbeRecord {
                label: p.label,
                observation: p.observation.clone(),
                loss,
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = RegionLabel::ALL
        .iter()
        .filter_map(|&label| {
            let members: Vec<&ProbeRecord> = records.iter().filter(|r| r.label == label).collect();
            if members.is_empty() {
                return None;
            }
            let n = members.len() as f64;
            let mean_loss = members.iter().map(|r| r.loss).sum::<f64>() / n;
            let mean_score = ensemble.map(|_| members.iter().filter_map(|r| r.score).sum::<f64>() / n);
            Some(RegionRow {
                label,
                count: members.len(),
                mean_loss,
                mean_score,
            })
        })
        .collect();
    Ok(RegionAnalysis { rows, probes: records })
}
