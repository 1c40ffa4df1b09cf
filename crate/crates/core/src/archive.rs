//! Binary archives for graphs, eigensystems, kappa tensors and models.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"TOPGRAPH"            8 bytes
//! header_len: u64        8 bytes
//! header: JSON           header_len bytes, UTF-8
//! blobs                  concatenated in header order
//! ```
//!
//! The header always carries `"kind"` and `"blobs"`, a list of
//! `{"name", "dtype", "len"}` with dtype `"f64"` or `"u64"` and `len` in
//! elements. Matrices are row-major. Values are stored as `f64` regardless of
//! the in-memory scalar type.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphio::SparseGraph;
use crate::model::{CoreTensor, Model};
use crate::sgp::{KappaKind, KappaTensor};
use crate::spectral::EigenSystem;
use crate::Scalar;

pub const MAGIC: &[u8; 8] = b"TOPGRAPH";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a topgraph archive")]
    BadMagic,
    #[error("bad archive header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("expected a {expected} archive, found {found}")]
    Kind { expected: String, found: String },
    #[error("archive truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("invalid archive contents: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    U64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobInfo {
    pub name: String,
    pub dtype: Dtype,
    pub len: usize,
}

enum Blob {
    F64(Vec<f64>),
    U64(Vec<u64>),
}

#[derive(Serialize, Deserialize)]
struct Envelope<H> {
    kind: String,
    #[serde(flatten)]
    header: H,
    blobs: Vec<BlobInfo>,
}

fn encode<H: Serialize>(kind: &str, header: H, blobs: Vec<(String, Blob)>) -> Vec<u8> {
    let infos = blobs
        .iter()
        .map(|(name, b)| match b {
            Blob::F64(v) => BlobInfo { name: name.clone(), dtype: Dtype::F64, len: v.len() },
            Blob::U64(v) => BlobInfo { name: name.clone(), dtype: Dtype::U64, len: v.len() },
        })
        .collect();
    let json = serde_json::to_vec(&Envelope { kind: kind.to_string(), header, blobs: infos }).expect("serializable header");
    let mut out = Vec::with_capacity(16 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, b) in blobs {
        match b {
            Blob::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Blob::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    out
}

struct Decoded<H> {
    header: H,
    blobs: Vec<(BlobInfo, Blob)>,
}

impl<H> Decoded<H> {
    fn take_f64(&mut self, name: &str) -> Result<Vec<f64>, ArchiveError> {
        match self.take(name)? {
            Blob::F64(v) => Ok(v),
            Blob::U64(_) => Err(ArchiveError::Invalid(format!("blob {name} should be f64"))),
        }
    }

    fn take_u64(&mut self, name: &str) -> Result<Vec<u64>, ArchiveError> {
        match self.take(name)? {
            Blob::U64(v) => Ok(v),
            Blob::F64(_) => Err(ArchiveError::Invalid(format!("blob {name} should be u64"))),
        }
    }

    fn take(&mut self, name: &str) -> Result<Blob, ArchiveError> {
        let pos = self
            .blobs
            .iter()
            .position(|(info, _)| info.name == name)
            .ok_or_else(|| ArchiveError::Invalid(format!("missing blob {name}")))?;
        Ok(self.blobs.swap_remove(pos).1)
    }
}

fn decode<H: DeserializeOwned>(bytes: &[u8], kind: &str) -> Result<Decoded<H>, ArchiveError> {
    let need = |needed: usize| {
        if bytes.len() < needed {
            Err(ArchiveError::Truncated { needed, available: bytes.len() })
        } else {
            Ok(())
        }
    };
    need(16)?;
    if &bytes[..8] != MAGIC {
        return Err(ArchiveError::BadMagic);
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let hend = 16usize.checked_add(hlen).ok_or(ArchiveError::Invalid("header length overflow".into()))?;
    need(hend)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes[16..hend])?;
    let found = value.get("kind").and_then(|k| k.as_str()).unwrap_or("unknown").to_string();
    if found != kind {
        return Err(ArchiveError::Kind { expected: kind.into(), found });
    }
    let env: Envelope<H> = serde_json::from_value(value)?;
    let mut pos = hend;
    let mut blobs = Vec::with_capacity(env.blobs.len());
    for info in env.blobs {
        let size = info.len.checked_mul(8).ok_or(ArchiveError::Invalid("blob length overflow".into()))?;
        need(pos + size)?;
        let chunk = &bytes[pos..pos + size];
        let blob = match info.dtype {
            Dtype::F64 => Blob::F64(chunk.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
            Dtype::U64 => Blob::U64(chunk.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()),
        };
        pos += size;
        blobs.push((info, blob));
    }
    if pos != bytes.len() {
        return Err(ArchiveError::Invalid(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(Decoded { header: env.header, blobs })
}

fn to_f64<T: Scalar>(v: impl IntoIterator<Item = T>) -> Vec<f64> {
    v.into_iter().map(|x| x.as_f64()).collect()
}

fn from_f64<T: Scalar>(v: Vec<f64>) -> Vec<T> {
    v.into_iter().map(T::lit).collect()
}

fn invalid(e: impl std::fmt::Display) -> ArchiveError {
    ArchiveError::Invalid(e.to_string())
}

#[derive(Serialize, Deserialize)]
struct GraphHeader {
    n: usize,
    nnz: usize,
    normalized: bool,
}

pub fn write_graph<T: Scalar>(g: &SparseGraph<T>) -> Vec<u8> {
    encode(
        "graph",
        GraphHeader { n: g.n(), nnz: g.nnz(), normalized: g.is_normalized() },
        vec![
            ("indptr".into(), Blob::U64(g.indptr().iter().map(|&x| x as u64).collect())),
            ("indices".into(), Blob::U64(g.indices().iter().map(|&x| x as u64).collect())),
            ("weights".into(), Blob::F64(to_f64(g.weights().iter().copied()))),
        ],
    )
}

pub fn read_graph<T: Scalar>(bytes: &[u8]) -> Result<SparseGraph<T>, ArchiveError> {
    let mut d: Decoded<GraphHeader> = decode(bytes, "graph")?;
    let indptr = d.take_u64("indptr")?.into_iter().map(|x| x as usize).collect();
    let indices = d.take_u64("indices")?.into_iter().map(|x| x as usize).collect();
    let weights = from_f64(d.take_f64("weights")?);
    SparseGraph::from_csr(d.header.n, indptr, indices, weights, d.header.normalized).map_err(invalid)
}

#[derive(Serialize, Deserialize)]
struct EigenHeader {
    n: usize,
    d: usize,
    lambdas: Vec<f64>,
}

fn eigen_blobs<T: Scalar>(e: &EigenSystem<T>, suffix: &str) -> Vec<(String, Blob)> {
    vec![
        (format!("V{suffix}"), Blob::F64(to_f64(e.vectors().iter().copied()))),
        (format!("lambda{suffix}"), Blob::F64(to_f64(e.lambdas().iter().copied()))),
    ]
}

fn eigen_from_blobs<T: Scalar, H>(
    d: &mut Decoded<H>,
    suffix: &str,
    n: usize,
    rank: usize,
) -> Result<EigenSystem<T>, ArchiveError> {
    let v = from_f64(d.take_f64(&format!("V{suffix}"))?);
    let l = from_f64(d.take_f64(&format!("lambda{suffix}"))?);
    let vectors = Array2::from_shape_vec((n, rank), v).map_err(invalid)?;
    EigenSystem::new(Array1::from(l), vectors).map_err(invalid)
}

/// Eigensystem archive; the header repeats the eigenvalues for human inspection.
pub fn write_eigensystem<T: Scalar>(e: &EigenSystem<T>) -> Vec<u8> {
    let header = EigenHeader { n: e.n(), d: e.d(), lambdas: to_f64(e.lambdas().iter().copied()) };
    encode("eigensystem", header, eigen_blobs(e, ""))
}

pub fn read_eigensystem<T: Scalar>(bytes: &[u8]) -> Result<EigenSystem<T>, ArchiveError> {
    let mut d: Decoded<EigenHeader> = decode(bytes, "eigensystem")?;
    let (n, rank) = (d.header.n, d.header.d);
    eigen_from_blobs(&mut d, "", n, rank)
}

#[derive(Serialize, Deserialize)]
struct KappaHeader {
    dims: Vec<usize>,
}

pub fn write_kappa<T: Scalar>(k: &KappaTensor<T>) -> Vec<u8> {
    encode(
        "kappa",
        KappaHeader { dims: k.dims().to_vec() },
        vec![("kappa".into(), Blob::F64(to_f64(k.as_slice().iter().copied())))],
    )
}

pub fn read_kappa<T: Scalar>(bytes: &[u8]) -> Result<KappaTensor<T>, ArchiveError> {
    let mut d: Decoded<KappaHeader> = decode(bytes, "kappa")?;
    let data = from_f64(d.take_f64("kappa")?);
    KappaTensor::from_shape_vec(&d.header.dims, data).map_err(invalid)
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    #[serde(rename = "J")]
    order: usize,
    dims_n: Vec<usize>,
    dims_d: Vec<usize>,
    gamma: f64,
    kappa_spec: KappaKind,
}

/// Model archive: blobs `alpha`, then `V1, lambda1, ..., VJ, lambdaJ`, then `kappa`.
pub fn write_model<T: Scalar>(m: &Model<T>) -> Vec<u8> {
    let header = ModelHeader {
        order: m.order(),
        dims_n: m.dims_n(),
        dims_d: m.dims_d(),
        gamma: m.gamma().as_f64(),
        kappa_spec: m.kappa_kind(),
    };
    let mut blobs = vec![("alpha".to_string(), Blob::F64(to_f64(m.alpha().as_slice().iter().copied())))];
    for (j, e) in m.systems().iter().enumerate() {
        blobs.extend(eigen_blobs(e, &(j + 1).to_string()));
    }
    blobs.push(("kappa".into(), Blob::F64(to_f64(m.kappa().as_slice().iter().copied()))));
    encode("model", header, blobs)
}

pub fn read_model<T: Scalar>(bytes: &[u8]) -> Result<Model<T>, ArchiveError> {
    let mut d: Decoded<ModelHeader> = decode(bytes, "model")?;
    let h = &d.header;
    if h.dims_n.len() != h.order || h.dims_d.len() != h.order {
        return Err(ArchiveError::Invalid("dims do not match J".into()));
    }
    let (dims_n, dims_d, gamma, kind) = (h.dims_n.clone(), h.dims_d.clone(), h.gamma, h.kappa_spec);
    let alpha = CoreTensor::from_array(
        ArrayD::from_shape_vec(IxDyn(&dims_d), from_f64(d.take_f64("alpha")?)).map_err(invalid)?,
    )
    .map_err(invalid)?;
    let mut systems = Vec::with_capacity(dims_n.len());
    for j in 0..dims_n.len() {
        systems.push(eigen_from_blobs(&mut d, &(j + 1).to_string(), dims_n[j], dims_d[j])?);
    }
    let kappa = KappaTensor::from_shape_vec(&dims_d, from_f64(d.take_f64("kappa")?)).map_err(invalid)?;
    Model::with_alpha(alpha, systems, kappa, kind, T::lit(gamma)).map_err(invalid)
}

pub fn save(path: &Path, bytes: &[u8]) -> Result<(), ArchiveError> {
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<u8>, ArchiveError> {
    Ok(fs::read(path)?)
}

/// Reads the `kind` field of an archive header without decoding blobs.
pub fn peek_kind(bytes: &[u8]) -> Result<String, ArchiveError> {
    if bytes.len() < 16 {
        return Err(ArchiveError::Truncated { needed: 16, available: bytes.len() });
    }
    if &bytes[..8] != MAGIC {
        return Err(ArchiveError::BadMagic);
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let end = 16usize.saturating_add(hlen);
    if bytes.len() < end {
        return Err(ArchiveError::Truncated { needed: end, available: bytes.len() });
    }
    let v: serde_json::Value = serde_json::from_slice(&bytes[16..end])?;
    Ok(v.get("kind").and_then(|k| k.as_str()).unwrap_or("unknown").to_string())
}
