//! `.ckpt` files: one JSON header line, then the parameter array as
//! little-endian `f32` in layout order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::denoiser::{DenoiserNet, DenoiserShape};
use super::params::{Layout, ParameterVector};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "dagger-lab-ckpt/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub topology: Vec<usize>,
    pub denoiser: DenoiserShape,
    pub seed: u64,
    pub step_count: u64,
    /// Seconds since the Unix epoch.
    pub created: u64,
    pub param_count: usize,
}

pub fn write_checkpoint(path: &Path, net: &DenoiserNet, step_count: u64) -> Result<()> {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.to_owned(),
        topology: net.params().layout().widths().to_vec(),
        denoiser: net.shape().clone(),
        seed: net.seed(),
        step_count,
        created,
        param_count: net.params().len(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.reserve(4 * net.params().len());
    for &v in net.params().values() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, DenoiserNet)> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    let header: CheckpointHeader = serde_json::from_slice(&line)
        .map_err(|e| Error::format(path, format!("bad checkpoint header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint format {:?}", header.format),
        ));
    }
    let layout = Arc::new(Layout::new(&header.topology)?);
    if layout.len() != header.param_count {
        return Err(Error::format(path, "parameter count disagrees with topology"));
    }
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw)?;
    if raw.len() != 4 * header.param_count {
        return Err(Error::format(
            path,
            format!(
                "expected {} parameter bytes, found {}",
                4 * header.param_count,
                raw.len()
            ),
        ));
    }
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let params = ParameterVector::from_values(layout, values)?;
    let net = DenoiserNet::from_params(header.seed, header.denoiser.clone(), params)?;
    Ok((header, net))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn round_trip_rounds_to_f32() {
        let shape = DenoiserShape {
            obs_dim: 2,
            action_dim: 2,
            horizon: 2,
            embed_dim: 4,
            hidden: vec![6],
            activation: Activation::Mish,
        };
        let net = DenoiserNet::init(9, shape).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        write_checkpoint(&path, &net, 42).unwrap();
        let (header, loaded) = read_checkpoint(&path).unwrap();
        assert_eq!(header.step_count, 42);
        assert_eq!(header.seed, 9);
        assert_eq!(header.topology, vec![10, 6, 4]);
        for (a, b) in net.params().values().iter().zip(loaded.params().values()) {
            assert_eq!((*a as f32) as f64, *b);
        }
        let bytes = fs::read(&path).unwrap();
        let header_len = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
        assert_eq!(bytes.len() - header_len, 4 * net.params().len());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let shape = DenoiserShape {
            obs_dim: 1,
            action_dim: 1,
            horizon: 1,
            embed_dim: 2,
            hidden: vec![3],
            activation: Activation::Mish,
        };
        let net = DenoiserNet::init(1, shape).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        write_checkpoint(&path, &net, 0).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Format { .. })));
    }
}
