//! Binary checkpoint of a network, its optimizer state and optionally the
//! cluster centers.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "CLNETCKP"
//! version  u32      1
//! hlen     u32      length of the JSON header
//! header   hlen bytes of JSON (spec, tensor lengths, Adam step, cluster shape)
//! params   f64 per parameter, tensors in header order
//! adam     first then second moments, same order as params
//! centers  K*d f64, then K labeled and K unlabeled u64 counts (if present)
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a round trip is exact.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use clusternet_core::clustering::ClusterState;
use clusternet_core::network::{AdamState, Moments, NetworkParameters, NetworkSpec};
use clusternet_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CLNETCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParameters,
    pub state: Option<ClusterState>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    tensor_lens: Vec<usize>,
    adam_step: u64,
    /// `(K, d)` when centers follow.
    clusters: Option<(usize, usize)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let header = Header {
            spec: p.spec().clone(),
            tensor_lens: p.tensors().map(<[f64]>::len).collect(),
            adam_step: p.adam.step,
            clusters: self.state.as_ref().map(|s| (s.num_clusters(), s.dim())),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.write_u32::<LittleEndian>(json.len() as u32).unwrap();
        out.extend_from_slice(&json);
        let mut put = |vals: &[f64]| {
            for &v in vals {
                out.write_f64::<LittleEndian>(v).unwrap();
            }
        };
        for t in p.tensors() {
            put(t);
        }
        for m in &p.adam.moments {
            put(&m.m);
        }
        for m in &p.adam.moments {
            put(&m.v);
        }
        if let Some(s) = &self.state {
            put(s.centers().as_slice());
            for &c in s.labeled_counts().iter().chain(s.unlabeled_counts()) {
                out.write_u64::<LittleEndian>(c).unwrap();
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::format(path, format!("checkpoint: {msg}"));
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = cur.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let hlen = cur.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))? as usize;
        let mut json = vec![0u8; hlen];
        cur.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| bad(&e.to_string()))?;

        let mut take = |n: usize| -> Result<Vec<f64>> {
            (0..n).map(|_| cur.read_f64::<LittleEndian>().map_err(|_| bad("truncated data"))).collect()
        };
        let tensors: Vec<Vec<f64>> = header.tensor_lens.iter().map(|&n| take(n)).collect::<Result<_>>()?;
        let firsts: Vec<Vec<f64>> = header.tensor_lens.iter().map(|&n| take(n)).collect::<Result<_>>()?;
        let seconds: Vec<Vec<f64>> = header.tensor_lens.iter().map(|&n| take(n)).collect::<Result<_>>()?;
        let moments = firsts.into_iter().zip(seconds).map(|(m, v)| Moments { m, v }).collect();
        let adam = AdamState { step: header.adam_step, moments };
        let params = NetworkParameters::from_tensors(&header.spec, tensors, adam)?;

        let state = match header.clusters {
            Some((k, d)) => {
                let centers = Matrix::from_vec(k, d, take(k * d)?)?;
                let mut counts = (0..2 * k)
                    .map(|_| cur.read_u64::<LittleEndian>().map_err(|_| bad("truncated counts")))
                    .collect::<Result<Vec<u64>>>()?;
                let unlabeled = counts.split_off(k);
                Some(ClusterState::from_parts(centers, counts, unlabeled)?)
            }
            None => None,
        };
        if (cur.position() as usize) != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint { params, state })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
