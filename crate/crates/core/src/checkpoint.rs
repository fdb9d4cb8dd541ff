//! Seed-based adapter checkpoints.
//!
//! A checkpoint holds the RNG seed, the adapter configuration, and the
//! trained vectors — never the frozen matrices, which are regenerated from
//! the seed on load. Layout, all little-endian:
//!
//! ```text
//! magic "VERA" | version u32 | method u8 | master_seed u64 | r u32 |
//! r_max u32 | scheme u8 [low f32, high f32 if uniform-range] |
//! d_init f32 | layer_count u32 |
//! per layer: name u16-len + UTF-8 | m u32 | n u32 | payload f32s
//! ```
//!
//! Per-layer payload by method: vera `d[r] b[m]`, only-d `d[r]`,
//! only-b `b[m]`, lora `A[r×n] B[m×r]` (row-major; LoRA stores its matrices
//! explicitly — no seed-reconstruction claim). Vectors are stored in single
//! precision, so a VeRA layer costs 4·(m + r) payload bytes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde_json::json;

use crate::adapter::{AdapterConfig, LoraLayer, Method, SharedMatrices, VeraLayer};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::InitScheme;
use crate::tensorfile;

pub const MAGIC: &[u8; 4] = b"VERA";
pub const VERSION: u32 = 1;

/// Stored parameters of one adapted layer (single precision, as on disk).
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Vera { d: Vec<f32>, b: Vec<f32> },
    OnlyD { d: Vec<f32> },
    OnlyB { b: Vec<f32> },
    Lora { a: Vec<f32>, b: Vec<f32> },
}

/// One adapted layer as recorded in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub name: String,
    pub m: usize,
    pub n: usize,
    pub params: LayerParams,
}

impl LayerRecord {
    pub fn from_vera(layer: &VeraLayer) -> Self {
        let d = layer.d().data().iter().map(|&v| v as f32).collect();
        let b = layer.b().data().iter().map(|&v| v as f32).collect();
        let params = match layer.method() {
            Method::Vera => LayerParams::Vera { d, b },
            Method::OnlyD => LayerParams::OnlyD { d },
            Method::OnlyB => LayerParams::OnlyB { b },
            _ => unreachable!(),
        };
        Self {
            name: layer.name().to_string(),
            m: layer.m(),
            n: layer.n(),
            params,
        }
    }

    /// LoRA records fold the α/r scale into the stored B so load can use
    /// the unit-scale convention (α = r).
    pub fn from_lora(layer: &LoraLayer) -> Self {
        let s = layer.scaling();
        let a = layer.a().data().iter().map(|&v| v as f32).collect();
        let b = layer.b().data().iter().map(|&v| (s * v) as f32).collect();
        Self {
            name: layer.name().to_string(),
            m: layer.m(),
            n: layer.n(),
            params: LayerParams::Lora { a, b },
        }
    }

    /// Payload bytes this record occupies on disk.
    pub fn payload_bytes(&self) -> u64 {
        let values = match &self.params {
            LayerParams::Vera { d, b } => d.len() + b.len(),
            LayerParams::OnlyD { d } => d.len(),
            LayerParams::OnlyB { b } => b.len(),
            LayerParams::Lora { a, b } => a.len() + b.len(),
        };
        4 * values as u64
    }
}

/// A loadable adapter checkpoint: configuration plus per-layer vectors.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: AdapterConfig,
    pub layers: Vec<LayerRecord>,
}

impl Checkpoint {
    pub fn new(config: AdapterConfig, layers: Vec<LayerRecord>) -> Result<Self> {
        config.validate()?;
        for rec in &layers {
            let consistent = match (&rec.params, config.method) {
                (LayerParams::Vera { d, b }, Method::Vera) => {
                    d.len() == config.rank && b.len() == rec.m
                }
                (LayerParams::OnlyD { d }, Method::OnlyD) => d.len() == config.rank,
                (LayerParams::OnlyB { b }, Method::OnlyB) => b.len() == rec.m,
                (LayerParams::Lora { a, b }, Method::Lora) => {
                    a.len() == config.rank * rec.n && b.len() == rec.m * config.rank
                }
                (_, Method::HeadOnly) => false,
                _ => false,
            };
            if !consistent {
                return Err(Error::InvalidConfig(format!(
                    "layer '{}' does not match method {} at rank {}",
                    rec.name,
                    config.method.name(),
                    config.rank
                )));
            }
        }
        Ok(Self { config, layers })
    }

    /// Sum of per-layer payload bytes (headers and names excluded).
    pub fn payload_bytes(&self) -> u64 {
        self.layers.iter().map(LayerRecord::payload_bytes).sum()
    }

    /// Writes the checkpoint; returns the exact byte count.
    pub fn save(&self, path: &Path) -> Result<u64> {
        if self.config.method == Method::Lora && self.config.lora_alpha != self.config.rank as f64
        {
            return Err(Error::InvalidConfig(format!(
                "lora checkpoints use the unit-scale convention; fold alpha {} into B before saving",
                self.config.lora_alpha
            )));
        }
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        let mut written: u64 = 0;
        let mut put = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<()> {
            w.write_all(bytes)?;
            written += bytes.len() as u64;
            Ok(())
        };

        put(&mut w, MAGIC)?;
        put(&mut w, &VERSION.to_le_bytes())?;
        put(&mut w, &[method_code(self.config.method)])?;
        put(&mut w, &self.config.master_seed.to_le_bytes())?;
        put(&mut w, &(self.config.rank as u32).to_le_bytes())?;
        put(&mut w, &(self.config.r_max as u32).to_le_bytes())?;
        match self.config.scheme {
            InitScheme::KaimingUniform => put(&mut w, &[0u8])?,
            InitScheme::KaimingNormal => put(&mut w, &[1u8])?,
            InitScheme::UniformRange { low, high } => {
                put(&mut w, &[2u8])?;
                put(&mut w, &(low as f32).to_le_bytes())?;
                put(&mut w, &(high as f32).to_le_bytes())?;
            }
        }
        put(&mut w, &(self.config.d_init as f32).to_le_bytes())?;
        put(&mut w, &(self.layers.len() as u32).to_le_bytes())?;

        for rec in &self.layers {
            let name = rec.name.as_bytes();
            if name.len() > u16::MAX as usize {
                return Err(Error::InvalidParameter(format!(
                    "layer name too long: {} bytes",
                    name.len()
                )));
            }
            put(&mut w, &(name.len() as u16).to_le_bytes())?;
            put(&mut w, name)?;
            put(&mut w, &(rec.m as u32).to_le_bytes())?;
            put(&mut w, &(rec.n as u32).to_le_bytes())?;
            let chunks: Vec<&[f32]> = match &rec.params {
                LayerParams::Vera { d, b } => vec![d, b],
                LayerParams::OnlyD { d } => vec![d],
                LayerParams::OnlyB { b } => vec![b],
                LayerParams::Lora { a, b } => vec![a, b],
            };
            for chunk in chunks {
                for &v in chunk {
                    put(&mut w, &v.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(written)
    }

    /// Reads a checkpoint, validating framing, enums, and rank bounds.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut r = BufReader::new(file);

        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:02x?}, expected {MAGIC:02x?}",
                magic
            )));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let method = method_from_code(read_u8(&mut r)?)?;
        let master_seed = read_u64(&mut r)?;
        let rank = read_u32(&mut r)? as usize;
        let r_max = read_u32(&mut r)? as usize;
        if rank > r_max {
            return Err(Error::InvalidConfig(format!(
                "stored rank {rank} exceeds r_max {r_max}"
            )));
        }
        let scheme = match read_u8(&mut r)? {
            0 => InitScheme::KaimingUniform,
            1 => InitScheme::KaimingNormal,
            2 => {
                let low = read_f32(&mut r)? as f64;
                let high = read_f32(&mut r)? as f64;
                InitScheme::UniformRange { low, high }
            }
            other => return Err(Error::Format(format!("unknown init scheme tag {other}"))),
        };
        let d_init = read_f32(&mut r)? as f64;
        let layer_count = read_u32(&mut r)? as usize;

        let mut config = AdapterConfig::new(method, rank.max(1), master_seed);
        config.rank = rank;
        config.r_max = r_max;
        config.scheme = scheme;
        config.d_init = d_init;
        config.lora_alpha = rank as f64;

        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let name_len = read_u16(&mut r)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            read_exact(&mut r, &mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|e| Error::Corrupt(format!("layer name is not UTF-8: {e}")))?;
            let m = read_u32(&mut r)? as usize;
            let n = read_u32(&mut r)? as usize;
            let params = match method {
                Method::Vera => LayerParams::Vera {
                    d: read_f32s(&mut r, rank)?,
                    b: read_f32s(&mut r, m)?,
                },
                Method::OnlyD => LayerParams::OnlyD {
                    d: read_f32s(&mut r, rank)?,
                },
                Method::OnlyB => LayerParams::OnlyB {
                    b: read_f32s(&mut r, m)?,
                },
                Method::Lora => LayerParams::Lora {
                    a: read_f32s(&mut r, rank * n)?,
                    b: read_f32s(&mut r, m * rank)?,
                },
                Method::HeadOnly => {
                    return Err(Error::Format(
                        "head-only checkpoints carry no layers".into(),
                    ))
                }
            };
            layers.push(LayerRecord { name, m, n, params });
        }

        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Corrupt("trailing bytes after last layer".into()));
        }
        Checkpoint::new(config, layers)
    }

    /// The weight update ΔW of one layer, reconstructed from the seed (VeRA
    /// family) or the stored matrices (LoRA). `shared_cache` memoizes
    /// regenerated pairs across layers of equal shape.
    pub fn delta(
        &self,
        rec: &LayerRecord,
        shared_cache: &mut HashMap<(usize, usize), Arc<SharedMatrices>>,
    ) -> Result<Matrix> {
        match &rec.params {
            LayerParams::Vera { d, b } => self.vera_delta(rec, Some(d), Some(b), shared_cache),
            LayerParams::OnlyD { d } => self.vera_delta(rec, Some(d), None, shared_cache),
            LayerParams::OnlyB { b } => self.vera_delta(rec, None, Some(b), shared_cache),
            LayerParams::Lora { a, b } => {
                // stored B already carries the α/r scale
                let a = Matrix::new(
                    self.config.rank,
                    rec.n,
                    a.iter().map(|&v| v as f64).collect(),
                )?;
                let b = Matrix::new(
                    rec.m,
                    self.config.rank,
                    b.iter().map(|&v| v as f64).collect(),
                )?;
                let mut out = Matrix::zeros(rec.m, rec.n);
                for i in 0..rec.m {
                    for j in 0..rec.n {
                        let mut acc = 0.0;
                        for k in 0..self.config.rank {
                            acc += b.get(i, k) * a.get(k, j);
                        }
                        out.set(i, j, acc);
                    }
                }
                Ok(out)
            }
        }
    }

    fn vera_delta(
        &self,
        rec: &LayerRecord,
        d: Option<&[f32]>,
        b: Option<&[f32]>,
        shared_cache: &mut HashMap<(usize, usize), Arc<SharedMatrices>>,
    ) -> Result<Matrix> {
        let shared = match shared_cache.entry((rec.m, rec.n)) {
            std::collections::hash_map::Entry::Occupied(e) => Arc::clone(e.get()),
            std::collections::hash_map::Entry::Vacant(e) => {
                let built = SharedMatrices::build(
                    rec.m,
                    rec.n,
                    self.config.r_max,
                    self.config.scheme,
                    self.config.master_seed,
                )?;
                e.insert(Arc::clone(&built));
                built
            }
        };
        let rank = self.config.rank;
        let a_r = shared.a().slice_rows(rank)?;
        let b_r = shared.b().slice_cols(rank)?;
        let mut out = Matrix::zeros(rec.m, rec.n);
        for i in 0..rec.m {
            let bi = b.map_or(1.0, |b| b[i] as f64);
            if bi == 0.0 {
                continue;
            }
            for j in 0..rec.n {
                let mut acc = 0.0;
                for k in 0..rank {
                    let dk = d.map_or(1.0, |d| d[k] as f64);
                    acc += b_r.get(i, k) * dk * a_r.get(k, j);
                }
                let v = out.get(i, j) + bi * acc;
                out.set(i, j, v);
            }
        }
        Ok(out)
    }

    /// `W0 + ΔW` for one layer.
    pub fn merged(
        &self,
        rec: &LayerRecord,
        w0: &Matrix,
        shared_cache: &mut HashMap<(usize, usize), Arc<SharedMatrices>>,
    ) -> Result<Matrix> {
        if w0.rows() != rec.m || w0.cols() != rec.n {
            return Err(Error::DimMismatch(format!(
                "layer '{}' expects base weight {}x{}, got {}x{}",
                rec.name,
                rec.m,
                rec.n,
                w0.rows(),
                w0.cols()
            )));
        }
        w0.add(&self.delta(rec, shared_cache)?)
    }

    /// Human- and test-readable description: config, per-layer shapes, and
    /// vector norms.
    pub fn inspect_json(&self) -> serde_json::Value {
        let scheme = match self.config.scheme {
            InitScheme::KaimingUniform => json!({"kind": "kaiming-uniform"}),
            InitScheme::KaimingNormal => json!({"kind": "kaiming-normal"}),
            InitScheme::UniformRange { low, high } => {
                json!({"kind": "uniform-range", "low": low, "high": high})
            }
        };
        let norm = |v: &[f32]| {
            v.iter()
                .map(|&x| (x as f64) * (x as f64))
                .sum::<f64>()
                .sqrt()
        };
        let layers: Vec<_> = self
            .layers
            .iter()
            .map(|rec| {
                let mut obj = json!({
                    "name": rec.name,
                    "m": rec.m,
                    "n": rec.n,
                    "payload_bytes": rec.payload_bytes(),
                });
                let fields = obj.as_object_mut().unwrap();
                match &rec.params {
                    LayerParams::Vera { d, b } => {
                        fields.insert("d_norm".into(), json!(norm(d)));
                        fields.insert("b_norm".into(), json!(norm(b)));
                    }
                    LayerParams::OnlyD { d } => {
                        fields.insert("d_norm".into(), json!(norm(d)));
                    }
                    LayerParams::OnlyB { b } => {
                        fields.insert("b_norm".into(), json!(norm(b)));
                    }
                    LayerParams::Lora { a, b } => {
                        fields.insert("a_norm".into(), json!(norm(a)));
                        fields.insert("b_norm".into(), json!(norm(b)));
                    }
                }
                obj
            })
            .collect();
        json!({
            "magic": "VERA",
            "version": VERSION,
            "method": self.config.method.name(),
            "master_seed": self.config.master_seed,
            "rank": self.config.rank,
            "r_max": self.config.r_max,
            "scheme": scheme,
            "d_init": self.config.d_init,
            "layer_count": self.layers.len(),
            "payload_bytes": self.payload_bytes(),
            "layers": layers,
        })
    }
}

/// Merges a checkpoint into a base-weight container: every checkpoint layer
/// must have a same-shape tensor of the same name in `base_path`; other
/// tensors are copied verbatim. Returns the tensor count written.
pub fn export_merged(ckpt: &Checkpoint, base_path: &Path, out_path: &Path) -> Result<usize> {
    let mut tensors = tensorfile::read_tensors(base_path)?;
    let mut shared_cache = HashMap::new();
    for rec in &ckpt.layers {
        let slot = tensors
            .iter_mut()
            .find(|(name, _)| name == &rec.name)
            .ok_or_else(|| Error::MissingTensor(rec.name.clone()))?;
        slot.1 = ckpt.merged(rec, &slot.1, &mut shared_cache)?;
    }
    tensorfile::write_tensors(out_path, &tensors)?;
    Ok(tensors.len())
}

fn method_code(method: Method) -> u8 {
    match method {
        Method::Vera => 0,
        Method::Lora => 1,
        Method::OnlyD => 2,
        Method::OnlyB => 3,
        Method::HeadOnly => 4,
    }
}

fn method_from_code(code: u8) -> Result<Method> {
    match code {
        0 => Ok(Method::Vera),
        1 => Ok(Method::Lora),
        2 => Ok(Method::OnlyD),
        3 => Ok(Method::OnlyB),
        4 => Ok(Method::HeadOnly),
        other => Err(Error::Format(format!("unknown method tag {other}"))),
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Corrupt("truncated file".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(count);
    let mut buf = [0u8; 4];
    for _ in 0..count {
        read_exact(r, &mut buf)?;
        let v = f32::from_le_bytes(buf);
        if !v.is_finite() {
            return Err(Error::Corrupt(format!("non-finite stored value {v}")));
        }
        out.push(v);
    }
    Ok(out)
}

/// Reattaches loaded vectors to freshly regenerated shared matrices,
/// producing layers functionally identical to the saved ones. Base weights
/// are supplied by name since checkpoints never store them.
pub fn rebuild_vera_layers(
    ckpt: &Checkpoint,
    base_weights: &[(String, Matrix)],
) -> Result<Vec<VeraLayer>> {
    if !ckpt.config.method.is_vera_family() {
        return Err(Error::UnsupportedMethod(format!(
            "cannot rebuild vera layers from a {} checkpoint",
            ckpt.config.method.name()
        )));
    }
    let mut cache: HashMap<(usize, usize), Arc<SharedMatrices>> = HashMap::new();
    let mut layers = Vec::with_capacity(ckpt.layers.len());
    for rec in &ckpt.layers {
        let w0 = base_weights
            .iter()
            .find(|(name, _)| name == &rec.name)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| Error::MissingTensor(rec.name.clone()))?;
        let shared = match cache.entry((rec.m, rec.n)) {
            std::collections::hash_map::Entry::Occupied(e) => Arc::clone(e.get()),
            std::collections::hash_map::Entry::Vacant(e) => {
                let built = SharedMatrices::build(
                    rec.m,
                    rec.n,
                    ckpt.config.r_max,
                    ckpt.config.scheme,
                    ckpt.config.master_seed,
                )?;
                e.insert(Arc::clone(&built));
                built
            }
        };
        let mut layer = VeraLayer::new(rec.name.clone(), w0, shared, &ckpt.config)?;
        match &rec.params {
            LayerParams::Vera { d, b } => {
                *layer.d_mut() = Vector::new(d.iter().map(|&v| v as f64).collect())?;
                *layer.b_mut() = Vector::new(b.iter().map(|&v| v as f64).collect())?;
            }
            LayerParams::OnlyD { d } => {
                *layer.d_mut() = Vector::new(d.iter().map(|&v| v as f64).collect())?;
            }
            LayerParams::OnlyB { b } => {
                *layer.b_mut() = Vector::new(b.iter().map(|&v| v as f64).collect())?;
            }
            LayerParams::Lora { .. } => unreachable!(),
        }
        layers.push(layer);
    }
    Ok(layers)
}
