//! Model file layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "MSCNMODL"
//! version      u32
//! header_len   u32
//! header       header_len bytes of JSON
//! param_count  u64
//! params       param_count × f64
//! checksum     32 bytes, SHA-256 of everything above
//! ```
//!
//! The header holds the format version, hyperparameters, encoding catalog,
//! creation seed and a layout string naming the parameter order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Hyperparams, MscnModel};
use crate::featurizer::EncodingCatalog;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MSCNMODL";
pub const FORMAT_VERSION: u32 = 1;
const LAYOUT: &str = "table,join,predicate,output; each W1,b1,W2,b2 row-major; set outputs relu";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    hyperparams: Hyperparams,
    catalog: EncodingCatalog,
    creation_seed: u64,
    layout: String,
}

pub fn encode_model(model: &MscnModel) -> Result<Vec<u8>> {
    let header = Header {
        format_version: FORMAT_VERSION,
        hyperparams: model.hyper.clone(),
        catalog: model.catalog.clone(),
        creation_seed: model.hyper.seed,
        layout: LAYOUT.to_string(),
    };
    // through Value so map keys are emitted sorted
    let header = serde_json::to_vec(&serde_json::to_value(&header)?)?;
    let params = model.params();
    let mut out = Vec::with_capacity(8 + 4 + 4 + header.len() + 8 + params.len() * 8 + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in &params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<MscnModel> {
    if bytes.len() < 8 + 4 + 4 + 8 + 32 {
        return Err(Error::Checksum);
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum);
    }
    if &body[..8] != MAGIC {
        return Err(Error::Corrupt("not a model file".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(body[i..i + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = u32_at(12) as usize;
    let header_end = 16 + header_len;
    if body.len() < header_end + 8 {
        return Err(Error::Corrupt("header overruns file".into()));
    }
    let header: Header = serde_json::from_slice(&body[16..header_end])?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let count = u64::from_le_bytes(body[header_end..header_end + 8].try_into().unwrap()) as usize;
    let blob = &body[header_end + 8..];
    if blob.len() != count.saturating_mul(8) {
        return Err(Error::Corrupt(format!("{} parameter bytes for {count} parameters", blob.len())));
    }
    let params: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut model = MscnModel::new(header.catalog, header.hyperparams)?;
    model.set_params(&params)?;
    Ok(model)
}

pub fn save_model(model: &MscnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MscnModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
