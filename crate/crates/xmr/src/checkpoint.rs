//! Versioned binary checkpoint: model configuration, every parameter tensor,
//! the relation mix and the fingerprint of the graph the model was trained
//! on. All numbers are little-endian; floats are stored as raw bits so a
//! save/load cycle is bitwise exact.

use std::path::Path;

use xmr_core::model::{LossKind, ModelConfig, ModelParams, Pool};
use xmr_core::numerics::DenseMatrix;
use xmr_core::relgraph::RelationMix;

use crate::error::{Error, Result};
use crate::formats::write_file;

const MAGIC: &[u8; 8] = b"XMRCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mix: RelationMix,
    pub graph_fingerprint: u64,
    pub config: ModelConfig,
    pub params: ModelParams,
}

fn pool_code(p: Pool) -> u8 {
    match p {
        Pool::Mean => 0,
        Pool::Sum => 1,
        Pool::Flatten => 2,
    }
}

fn mix_code(m: RelationMix) -> u8 {
    match m {
        RelationMix::Sr => 0,
        RelationMix::Scr => 1,
        RelationMix::Skr => 2,
        RelationMix::Sckr => 3,
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> std::result::Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|_| "size does not fit this platform".to_string())
    }
    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_bits(self.u64()?))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut w = Writer(MAGIC.to_vec());
        w.u32(VERSION);
        w.u8(mix_code(self.mix));
        w.u64(self.graph_fingerprint);
        for d in [c.n_nodes, c.in_channels, c.gcn_hidden, c.gcn_out, c.semantic_dim, c.image_feat_dim] {
            w.usize(d);
        }
        w.u8(pool_code(c.pool));
        w.f64(c.dropout_p);
        w.u8(u8::from(c.dropout_image));
        w.u8(match c.loss {
            LossKind::Bce => 0,
            LossKind::Contrastive => 1,
        });
        w.f64(c.margin);
        for t in self.params.tensors() {
            w.usize(t.rows());
            w.usize(t.cols());
            for &x in t.data() {
                w.f64(x);
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).ok() != Some(&MAGIC[..]) {
            return Err("not a checkpoint file".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("format version {version}, this build reads {VERSION}"));
        }
        let mix = match r.u8()? {
            0 => RelationMix::Sr,
            1 => RelationMix::Scr,
            2 => RelationMix::Skr,
            3 => RelationMix::Sckr,
            other => return Err(format!("unknown relation mix code {other}")),
        };
        let graph_fingerprint = r.u64()?;
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.usize()?;
        }
        let pool = match r.u8()? {
            0 => Pool::Mean,
            1 => Pool::Sum,
            2 => Pool::Flatten,
            other => return Err(format!("unknown pooling code {other}")),
        };
        let dropout_p = r.f64()?;
        let dropout_image = r.u8()? != 0;
        let loss = match r.u8()? {
            0 => LossKind::Bce,
            1 => LossKind::Contrastive,
            other => return Err(format!("unknown loss code {other}")),
        };
        let margin = r.f64()?;
        let config = ModelConfig {
            n_nodes: dims[0],
            in_channels: dims[1],
            gcn_hidden: dims[2],
            gcn_out: dims[3],
            pool,
            semantic_dim: dims[4],
            image_feat_dim: dims[5],
            dropout_p,
            dropout_image,
            loss,
            margin,
        };
        config.validate().map_err(|e| e.to_string())?;
        let mut tensors = Vec::with_capacity(8);
        for _ in 0..8 {
            let (rows, cols) = (r.usize()?, r.usize()?);
            let len = rows.checked_mul(cols).filter(|&n| n <= (bytes.len() - r.pos) / 8);
            let len = len.ok_or_else(|| format!("tensor {rows}x{cols} exceeds the file"))?;
            let data = (0..len).map(|_| r.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
            tensors.push(DenseMatrix::from_vec(rows, cols, data).map_err(|e| e.to_string())?);
        }
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        let params = ModelParams::from_vec(&config, tensors).map_err(|e| e.to_string())?;
        Ok(Self { mix, graph_fingerprint, config, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact {
                what: "checkpoint",
                path: path.to_path_buf(),
                producer: "train",
            },
            _ => Error::io(path, e),
        })?;
        Self::from_bytes(&bytes).map_err(|message| Error::Checkpoint { path: path.to_path_buf(), message })
    }
}
