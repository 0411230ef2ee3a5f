//! Network checkpoints: a TOML header, a `%%` separator line, then the
//! parameters as a flat little-endian `f64` blob in [`Mlp::params_mut`] order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, OutputHead};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;
const SEPARATOR: &[u8] = b"\n%%\n";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub widths: Vec<usize>,
    pub activation: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lower_bounds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub upper_bounds: Vec<f64>,
    pub zero_final: bool,
    /// Initialization seed as 16 hex digits (TOML integers are signed 64-bit).
    pub seed: String,
    pub step_count: u64,
    pub parameter_count: usize,
}

pub fn save_checkpoint<T: Scalar>(path: &Path, net: &Mlp<T>, step_count: u64) -> Result<()> {
    let (lower_bounds, upper_bounds) = match net.head() {
        OutputHead::BoundMix { lo, hi } => (
            lo.iter().map(|v| v.to_f64_lossless()).collect(),
            hi.iter().map(|v| v.to_f64_lossless()).collect(),
        ),
        _ => (Vec::new(), Vec::new()),
    };
    let header = CheckpointHeader {
        format: "pdl-mlp".into(),
        version: CHECKPOINT_VERSION,
        widths: net.widths().to_vec(),
        activation: net.head().name().into(),
        lower_bounds,
        upper_bounds,
        zero_final: net.zero_final(),
        seed: format!("{:016x}", net.seed()),
        step_count,
        parameter_count: net.num_parameters(),
    };
    let text = toml::to_string(&header).map_err(|e| Error::Config(e.to_string()))?;
    let mut bytes = text.into_bytes();
    if bytes.last() == Some(&b'\n') {
        bytes.pop();
    }
    bytes.extend_from_slice(SEPARATOR);
    for v in net.flat_parameters() {
        bytes.extend_from_slice(&v.to_f64_lossless().to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Mlp<T>, CheckpointHeader)> {
    let bytes = fs::read(path)?;
    let parse_err = |location: String, message: String| Error::Parse {
        path: path.to_path_buf(),
        location,
        message,
    };
    let split = bytes
        .windows(SEPARATOR.len())
        .position(|w| w == SEPARATOR)
        .ok_or_else(|| parse_err("header".into(), "missing `%%` separator".into()))?;
    let text = std::str::from_utf8(&bytes[..split])
        .map_err(|e| parse_err(format!("byte {}", e.valid_up_to()), "header is not UTF-8".into()))?;
    let header: CheckpointHeader = toml::from_str(text).map_err(|e| {
        let loc = e.span().map_or("header".to_string(), |s| format!("byte {}", s.start));
        parse_err(loc, e.message().to_string())
    })?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            expected: CHECKPOINT_VERSION,
            found: header.version,
        });
    }
    let blob = &bytes[split + SEPARATOR.len()..];
    if blob.len() != header.parameter_count * 8 {
        return Err(parse_err(
            format!("byte {}", split + SEPARATOR.len() + blob.len()),
            format!(
                "expected {} parameter bytes, found {}",
                header.parameter_count * 8,
                blob.len()
            ),
        ));
    }
    let params: Vec<T> = blob
        .chunks_exact(8)
        .map(|c| T::cast(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let head = match header.activation.as_str() {
        "identity" => OutputHead::Identity,
        "scaled-sigmoid" => OutputHead::ScaledSigmoid,
        "bound-mix" => OutputHead::BoundMix {
            lo: header.lower_bounds.iter().map(|&v| T::cast(v)).collect(),
            hi: header.upper_bounds.iter().map(|&v| T::cast(v)).collect(),
        },
        other => return Err(parse_err("activation".into(), format!("unknown activation `{other}`"))),
    };
    let seed = u64::from_str_radix(&header.seed, 16).map_err(|e| parse_err("seed".into(), e.to_string()))?;
    let net = Mlp::from_parts(&header.widths, head, header.zero_final, seed, &params)?;
    Ok((net, header))
}
