//! On-disk formats.
//!
//! Embedding file: magic `PRTO`, format version (u32 LE), row count
//! (u64 LE), dimension (u64 LE), then row-major f32 LE values. Label
//! files reuse the same header with dimension 1 and a u32 LE body.
//! Values are stored in 32 bits; all in-memory arithmetic is f64.
//! Sidecars and manifests are JSON.

use std::path::Path;

use crate::bank::PrototypeBank;
use crate::classifier::LinearHead;
use crate::error::{Error, Result};
use crate::pipeline::EncoderParams;

pub const MAGIC: [u8; 4] = *b"PRTO";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 8 + 8;

fn encode_header(rows: u64, dim: u64) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(HEADER_LEN);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&rows.to_le_bytes());
    bytes.extend_from_slice(&dim.to_le_bytes());
    bytes
}

fn decode_header(path: &Path, bytes: &[u8]) -> Result<(usize, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "file shorter than header"));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::format(path, "bad magic, expected PRTO"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported format version {version}"),
        ));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let dim = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    Ok((rows as usize, dim as usize))
}

/// Writes rows of f64 values as an f32 embedding file.
pub fn write_embeddings(path: &Path, rows: &[Vec<f64>], dim: usize) -> Result<()> {
    let mut bytes = encode_header(rows.len() as u64, dim as u64);
    bytes.reserve(rows.len() * dim * 4);
    for row in rows {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: row.len(),
            });
        }
        for value in row {
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("embedding value written to {}", path.display()),
                });
            }
            bytes.extend_from_slice(&(*value as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an embedding file back as f64 rows.
pub fn read_embeddings(path: &Path) -> Result<(Vec<Vec<f64>>, usize)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (rows, dim) = decode_header(path, &bytes)?;
    let body = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(path, "row count overflow"))?;
    if body.len() != expected {
        return Err(Error::format(
            path,
            format!("body is {} bytes, expected {expected}", body.len()),
        ));
    }
    let mut out = Vec::with_capacity(rows);
    let mut offset = 0;
    for _ in 0..rows {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            let value = f32::from_le_bytes(body[offset..offset + 4].try_into().unwrap());
            if !value.is_finite() {
                return Err(Error::format(path, "non-finite value in body"));
            }
            row.push(f64::from(value));
            offset += 4;
        }
        out.push(row);
    }
    Ok((out, dim))
}

/// Writes class labels with the shared header scheme (dim 1, u32 body).
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut bytes = encode_header(labels.len() as u64, 1);
    bytes.reserve(labels.len() * 4);
    for label in labels {
        let narrow = u32::try_from(*label).map_err(|_| {
            Error::InvalidArgument(format!("label {label} does not fit in 32 bits"))
        })?;
        bytes.extend_from_slice(&narrow.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (rows, dim) = decode_header(path, &bytes)?;
    if dim != 1 {
        return Err(Error::format(
            path,
            format!("label file must have dimension 1, got {dim}"),
        ));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != rows * 4 {
        return Err(Error::format(
            path,
            format!("body is {} bytes, expected {}", body.len(), rows * 4),
        ));
    }
    Ok(body
        .chunks_exact(4)
        .map(|chunk| u32::from_le_bytes(chunk.try_into().unwrap()) as usize)
        .collect())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::format(path, format!("line {}, column {}: {e}", e.line(), e.column()))
    })
}

/// Candidate sets are stored flattened, sample-major: sample i's M rows
/// occupy positions i·M .. (i+1)·M.
pub fn flatten_candidates(candidates: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    candidates.iter().flatten().cloned().collect()
}

pub fn unflatten_candidates(
    rows: Vec<Vec<f64>>,
    per_sample: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if per_sample == 0 {
        return Err(Error::InvalidArgument(
            "candidates per sample must be positive".into(),
        ));
    }
    if rows.len() % per_sample != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} candidate rows do not divide into groups of {per_sample}",
            rows.len()
        )));
    }
    let mut out = Vec::with_capacity(rows.len() / per_sample);
    let mut iter = rows.into_iter();
    while let Some(first) = iter.next() {
        let mut group = Vec::with_capacity(per_sample);
        group.push(first);
        for _ in 1..per_sample {
            group.push(iter.next().unwrap());
        }
        out.push(group);
    }
    Ok(out)
}

/// Frequencies and momentum that accompany a prototype file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BankSidecar {
    pub frequencies: Vec<f64>,
    pub momentum: f64,
}

pub fn save_bank(bank: &PrototypeBank, prototypes_path: &Path, sidecar_path: &Path) -> Result<()> {
    let rows: Vec<Vec<f64>> = bank
        .prototypes()
        .iter()
        .map(|r| r.as_slice().to_vec())
        .collect();
    write_embeddings(prototypes_path, &rows, bank.dim())?;
    write_json(
        sidecar_path,
        &BankSidecar {
            frequencies: bank.frequencies().to_vec(),
            momentum: bank.momentum(),
        },
    )
}

/// Loads a bank; prototype rows are renormalized after f32 quantization.
pub fn load_bank(prototypes_path: &Path, sidecar_path: &Path) -> Result<PrototypeBank> {
    let (rows, _) = read_embeddings(prototypes_path)?;
    let sidecar: BankSidecar = read_json(sidecar_path)?;
    PrototypeBank::from_parts(&rows, &sidecar.frequencies, sidecar.momentum)
}

/// Head shape echo plus the fusion weight the head was evaluated with.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeadSidecar {
    pub classes: usize,
    pub dim: usize,
    pub alpha: f64,
}

pub fn save_head(
    head: &LinearHead,
    alpha: f64,
    weights_path: &Path,
    biases_path: &Path,
    sidecar_path: &Path,
) -> Result<()> {
    write_embeddings(weights_path, head.weights(), head.dim())?;
    write_embeddings(biases_path, &[head.biases().to_vec()], head.classes())?;
    write_json(
        sidecar_path,
        &HeadSidecar {
            classes: head.classes(),
            dim: head.dim(),
            alpha,
        },
    )
}

pub fn load_head(
    weights_path: &Path,
    biases_path: &Path,
    sidecar_path: &Path,
) -> Result<(LinearHead, f64)> {
    let (weights, dim) = read_embeddings(weights_path)?;
    let (bias_rows, _) = read_embeddings(biases_path)?;
    let sidecar: HeadSidecar = read_json(sidecar_path)?;
    if weights.len() != sidecar.classes || dim != sidecar.dim {
        return Err(Error::format(
            weights_path,
            format!(
                "head shape {}x{dim} does not match sidecar {}x{}",
                weights.len(),
                sidecar.classes,
                sidecar.dim
            ),
        ));
    }
    let biases = bias_rows
        .into_iter()
        .next()
        .ok_or_else(|| Error::format(biases_path, "bias file has no rows"))?;
    Ok((LinearHead::from_parts(weights, biases)?, sidecar.alpha))
}

pub fn save_encoders(
    encoders: &EncoderParams,
    image_path: &Path,
    text_path: &Path,
) -> Result<()> {
    write_embeddings(image_path, encoders.image_map(), encoders.raw_dim())?;
    write_embeddings(text_path, encoders.text_map(), encoders.raw_dim())
}

pub fn load_encoders(image_path: &Path, text_path: &Path) -> Result<EncoderParams> {
    let (image_map, _) = read_embeddings(image_path)?;
    let (text_map, _) = read_embeddings(text_path)?;
    EncoderParams::from_parts(image_map, text_map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_uniform_sphere;

    #[test]
    fn embeddings_round_trip_exactly_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.prto");
        let rows: Vec<Vec<f64>> = sample_uniform_sphere(5, 7, 2)
            .unwrap()
            .iter()
            .map(|r| r.as_slice().to_vec())
            .collect();
        write_embeddings(&path, &rows, 5).unwrap();
        let (back, dim) = read_embeddings(&path).unwrap();
        assert_eq!(dim, 5);
        for (a, b) in rows.iter().zip(&back) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!((*x as f32).to_bits(), (*y as f32).to_bits());
                assert_eq!(*y, f64::from(*x as f32));
            }
        }
    }

    #[test]
    fn non_finite_values_are_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.prto");
        let rows = vec![vec![1.0, f64::NAN]];
        assert!(matches!(
            write_embeddings(&path, &rows, 2),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corrupt.prto");
        std::fs::write(&path, b"PRTOxxxx").unwrap();
        assert!(matches!(
            read_embeddings(&path),
            Err(Error::Format { .. })
        ));

        let truncated = dir.path().join("truncated.prto");
        let mut bytes = encode_header(3, 4);
        bytes.extend_from_slice(&[0u8; 8]); // far too short
        std::fs::write(&truncated, bytes).unwrap();
        assert!(matches!(
            read_embeddings(&truncated),
            Err(Error::Format { .. })
        ));

        let wrong_magic = dir.path().join("magic.prto");
        let mut bytes = encode_header(0, 2);
        bytes[0] = b'X';
        std::fs::write(&wrong_magic, bytes).unwrap();
        assert!(matches!(
            read_embeddings(&wrong_magic),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.prto");
        let labels = vec![0usize, 3, 1, 19, 2];
        write_labels(&path, &labels).unwrap();
        assert_eq!(read_labels(&path).unwrap(), labels);
    }

    #[test]
    fn candidates_flatten_and_unflatten() {
        let candidates = vec![
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![vec![5.0, 6.0], vec![7.0, 8.0]],
        ];
        let flat = flatten_candidates(&candidates);
        assert_eq!(flat.len(), 4);
        let back = unflatten_candidates(flat, 2).unwrap();
        assert_eq!(back, candidates);
        assert!(unflatten_candidates(vec![vec![1.0, 2.0]], 2).is_err());
    }

    #[test]
    fn bank_round_trip_via_files() {
        let dir = tempfile::tempdir().unwrap();
        let proto = dir.path().join("prototypes.prto");
        let sidecar = dir.path().join("bank.json");
        let freqs = vec![3.0, 1.0, 1.0];
        let bank = PrototypeBank::random(6, 3, &freqs, 0.99, 8).unwrap();
        save_bank(&bank, &proto, &sidecar).unwrap();
        let back = load_bank(&proto, &sidecar).unwrap();
        assert_eq!(back.class_count(), 3);
        assert_eq!(back.momentum(), 0.99);
        assert_eq!(back.frequencies(), bank.frequencies());
        for (a, b) in back.prototypes().iter().zip(bank.prototypes().iter()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-6, "f32 quantization bound exceeded");
            }
        }
    }

    #[test]
    fn head_round_trip_via_files() {
        let dir = tempfile::tempdir().unwrap();
        let weights = dir.path().join("head_weights.prto");
        let biases = dir.path().join("head_biases.prto");
        let sidecar = dir.path().join("head.json");
        let head = LinearHead::from_parts(
            vec![vec![0.25, -1.5, 0.125], vec![2.0, 0.5, -0.75]],
            vec![0.5, -0.25],
        )
        .unwrap();
        save_head(&head, 0.8, &weights, &biases, &sidecar).unwrap();
        let (back, alpha) = load_head(&weights, &biases, &sidecar).unwrap();
        assert_eq!(alpha, 0.8);
        // These dyadic values survive the f32 round trip exactly.
        assert_eq!(back, head);
    }
}
