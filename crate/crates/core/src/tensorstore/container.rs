//! NFPT container.
//!
//! ```text
//! "NFPT" | version: u16 LE | manifest_len: u32 LE | manifest (UTF-8 JSON)
//! zero padding to an 8-byte boundary
//! blob section: each blob starts 8-byte aligned, offsets relative to the
//! section start
//! ```
//!
//! The manifest is a JSON array with one record per layer. Nested layers own
//! two blobs (upper plane, then lower plane); FP16 layers own one blob of
//! little-endian halves. Every blob carries a CRC-32.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::{
    Layer, LayerEntry, LayerPayload, ModelContainer, NestedTensor, Storage, TensorF16,
};
use super::StoreError;
use crate::fpcodec::Fp16Bits;

pub const MAGIC: &[u8; 4] = b"NFPT";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4;
const ALIGN: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlobRef {
    offset: u64,
    length: u64,
    crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestRecord {
    #[serde(flatten)]
    entry: LayerEntry,
    blobs: Vec<BlobRef>,
}

#[inline]
fn align_up(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

pub fn to_bytes(model: &ModelContainer) -> Vec<u8> {
    let mut blobs: Vec<u8> = Vec::new();
    let mut records = Vec::with_capacity(model.layers.len());
    let mut push_blob = |bytes: &[u8]| {
        blobs.resize(align_up(blobs.len()), 0);
        let r = BlobRef {
            offset: blobs.len() as u64,
            length: bytes.len() as u64,
            crc32: crc32fast::hash(bytes),
        };
        blobs.extend_from_slice(bytes);
        r
    };
    for layer in &model.layers {
        let refs = match &layer.payload {
            LayerPayload::Nested(t) => vec![push_blob(&t.upper), push_blob(&t.lower)],
            LayerPayload::Fp16(t) => vec![push_blob(&t.to_le_bytes())],
        };
        records.push(ManifestRecord {
            entry: layer.entry.clone(),
            blobs: refs,
        });
    }
    let manifest = serde_json::to_vec(&records).expect("manifest serializes");

    let mut out = Vec::with_capacity(align_up(HEADER_LEN + manifest.len()) + blobs.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.resize(align_up(out.len()), 0);
    out.extend_from_slice(&blobs);
    out
}

pub fn save(model: &ModelContainer, path: impl AsRef<Path>) -> Result<(), StoreError> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelContainer, StoreError> {
    from_bytes(&fs::read(path)?)
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelContainer, StoreError> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(StoreError::MalformedHeader("missing NFPT magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let manifest_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let manifest_end = HEADER_LEN
        .checked_add(manifest_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| StoreError::MalformedHeader("manifest length exceeds file".into()))?;
    let records: Vec<ManifestRecord> = serde_json::from_slice(&bytes[HEADER_LEN..manifest_end])
        .map_err(|e| StoreError::MalformedHeader(format!("manifest: {e}")))?;
    let section = bytes.get(align_up(manifest_end)..).unwrap_or(&[]);

    let layers = records
        .into_iter()
        .map(|rec| read_layer(rec, section))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelContainer::new(layers))
}

fn blob<'a>(section: &'a [u8], r: &BlobRef, layer: &str) -> Result<&'a [u8], StoreError> {
    let start = usize::try_from(r.offset).ok();
    let end = start.and_then(|s| s.checked_add(usize::try_from(r.length).ok()?));
    let data = match (start, end) {
        (Some(s), Some(e)) if e <= section.len() => &section[s..e],
        _ => {
            return Err(StoreError::TruncatedBlob {
                layer: layer.to_string(),
            })
        }
    };
    if crc32fast::hash(data) != r.crc32 {
        return Err(StoreError::ChecksumMismatch {
            layer: layer.to_string(),
        });
    }
    Ok(data)
}

fn read_layer(rec: ManifestRecord, section: &[u8]) -> Result<Layer, StoreError> {
    let entry = rec.entry;
    let name = entry.name.as_str();
    let [rows, cols] = entry.shape;
    let elements = rows
        .checked_mul(cols)
        .filter(|&n| n > 0)
        .ok_or_else(|| StoreError::MalformedHeader(format!("layer `{name}`: bad shape")))?;
    let bad_blobs = || StoreError::MalformedHeader(format!("layer `{name}`: blob layout"));

    let payload = match (entry.storage, rec.blobs.as_slice()) {
        (Storage::Nested, [u, l]) => {
            if u.length as usize != elements || l.length as usize != elements {
                return Err(bad_blobs());
            }
            let upper = blob(section, u, name)?.to_vec();
            let lower = blob(section, l, name)?.to_vec();
            LayerPayload::Nested(NestedTensor::new(
                name,
                entry.gemm_class,
                rows,
                cols,
                upper,
                lower,
            )?)
        }
        (Storage::Fp16Exception, [b]) => {
            if b.length as usize != 2 * elements {
                return Err(bad_blobs());
            }
            let data = blob(section, b, name)?
                .chunks_exact(2)
                .map(|c| Fp16Bits(u16::from_le_bytes([c[0], c[1]])))
                .collect();
            LayerPayload::Fp16(TensorF16::new(name, entry.gemm_class, rows, cols, data)?)
        }
        _ => return Err(bad_blobs()),
    };
    Ok(Layer { entry, payload })
}
