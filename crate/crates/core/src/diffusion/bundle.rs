//! Policy bundle: a `.ckpt` for the denoiser plus a JSON sidecar holding the
//! schedule, target kind, horizons and normalizer.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use super::policy::{DiffusionPolicy, PolicyConfig};
use crate::nn::{read_checkpoint, write_checkpoint};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySidecar {
    pub policy: PolicyConfig,
    pub schedule: String,
    pub diffusion_steps: usize,
    pub normalizer: Normalizer,
}

pub fn sidecar_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("policy.json")
}

pub fn save_policy(policy: &DiffusionPolicy, ckpt: &Path, step_count: u64) -> Result<()> {
    write_checkpoint(ckpt, policy.net(), step_count)?;
    let sidecar = PolicySidecar {
        policy: policy.config().clone(),
        schedule: "squared_cosine".to_owned(),
        diffusion_steps: policy.config().diffusion_steps,
        normalizer: policy.normalizer().clone(),
    };
    fs::write(sidecar_path(ckpt), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_policy(ckpt: &Path) -> Result<DiffusionPolicy> {
    let (_, net) = read_checkpoint(ckpt)?;
    let side_path = sidecar_path(ckpt);
    let text = fs::read_to_string(&side_path)
        .map_err(|e| Error::format(&side_path, format!("cannot read policy sidecar: {e}")))?;
    let sidecar: PolicySidecar =
        serde_json::from_str(&text).map_err(|e| Error::format(&side_path, e.to_string()))?;
    if sidecar.schedule != "squared_cosine" {
        return Err(Error::format(
            &side_path,
            format!("unknown schedule {:?}", sidecar.schedule),
        ));
    }
    DiffusionPolicy::from_parts(sidecar.policy, net, sidecar.normalizer)
}
