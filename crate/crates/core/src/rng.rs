//! Portable deterministic random number generation.
//!
//! Frozen adapter matrices are never stored — they are regenerated from a
//! seed. That only works if the generator is bit-exact across platforms and
//! independent of word size, allocation order, and wall clock, so the
//! algorithms are pinned here: xoshiro256** for the stream, seeded through
//! SplitMix64, uniforms from the top 53 bits of each 64-bit draw, and
//! normals via Box–Muller with a fixed draw count. Not cryptographic.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One step of the SplitMix64 sequence starting at `seed`; a pure function.
pub fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Matrix initialization scheme.
///
/// The Kaiming variants use the fixed gain sqrt(2), so the product of two
/// initialized matrices keeps a rank-independent variance; `UniformRange`
/// is the flat-interval ablation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// U(−b, b) with b = sqrt(6 / fan_in).
    KaimingUniform,
    /// N(0, 2 / fan_in).
    KaimingNormal,
    /// U(low, high).
    UniformRange { low: f64, high: f64 },
}

impl InitScheme {
    pub fn validate(&self) -> Result<()> {
        if let InitScheme::UniformRange { low, high } = self {
            if !(low < high) {
                return Err(Error::InvalidParameter(format!(
                    "uniform range requires low < high, got [{low}, {high})"
                )));
            }
        }
        Ok(())
    }

    /// Uniform bounds rounded to f32 precision — the precision checkpoints
    /// store them at. Adapter construction normalizes schemes with this so
    /// matrices regenerated from a loaded checkpoint are bit-identical to
    /// the originals.
    pub fn normalized(self) -> InitScheme {
        match self {
            InitScheme::UniformRange { low, high } => InitScheme::UniformRange {
                low: low as f32 as f64,
                high: high as f32 as f64,
            },
            other => other,
        }
    }
}

/// Order in which matrix entries consume draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillOrder {
    RowMajor,
    ColMajor,
}

/// A deterministic xoshiro256** stream addressed by (master seed, stream key).
///
/// Two streams built from equal origins produce identical sequences. A
/// stream is single-owner while advancing; matrices produced from it are
/// immutable and freely shareable.
#[derive(Debug, Clone)]
pub struct RngStream {
    state: [u64; 4],
    origin: (u64, u64),
    cached_normal: Option<f64>,
    draws: u64,
}

impl RngStream {
    /// Seeds the 256-bit state with the first four SplitMix64 outputs of
    /// `master_seed XOR splitmix64(stream_key)`.
    pub fn new(master_seed: u64, stream_key: u64) -> Self {
        let mut s = master_seed ^ splitmix64(stream_key);
        let mut state = [0u64; 4];
        for slot in &mut state {
            s = s.wrapping_add(GOLDEN_GAMMA);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            *slot = z ^ (z >> 31);
        }
        Self {
            state,
            origin: (master_seed, stream_key),
            cached_normal: None,
            draws: 0,
        }
    }

    /// The (master_seed, stream_key) pair this stream was derived from.
    pub fn origin(&self) -> (u64, u64) {
        self.origin
    }

    /// Number of 64-bit draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Next raw 64-bit draw (xoshiro256**).
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        self.draws += 1;
        result
    }

    /// Uniform in [0, 1) from the top 53 bits of one draw.
    fn unit_uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform in [low, high); consumes exactly one draw.
    pub fn uniform(&mut self, low: f64, high: f64) -> Result<f64> {
        if !(low < high) {
            return Err(Error::InvalidParameter(format!(
                "uniform requires low < high, got [{low}, {high})"
            )));
        }
        Ok(low + (high - low) * self.unit_uniform())
    }

    /// Normal draw via Box–Muller.
    ///
    /// Each pair of normals consumes exactly two draws; the second standard
    /// normal of a pair is cached and scaled on the next call. A zero first
    /// uniform is remapped to 2⁻⁵³ (the smallest value of the 53-bit grid)
    /// instead of rejection sampling, keeping the draw count fixed.
    pub fn normal(&mut self, mean: f64, std: f64) -> Result<f64> {
        if !(std > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "normal requires std > 0, got {std}"
            )));
        }
        let z = match self.cached_normal.take() {
            Some(z) => z,
            None => {
                let (z0, z1) = self.standard_normal_pair();
                self.cached_normal = Some(z1);
                z0
            }
        };
        Ok(mean + std * z)
    }

    fn standard_normal_pair(&mut self) -> (f64, f64) {
        const MIN_U: f64 = 1.0 / (1u64 << 53) as f64;
        let mut u1 = self.unit_uniform();
        if u1 == 0.0 {
            u1 = MIN_U;
        }
        let u2 = self.unit_uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        (radius * angle.cos(), radius * angle.sin())
    }

    /// Drops any cached Box–Muller half-pair so the next value comes from
    /// the raw stream position.
    pub fn clear_normal_cache(&mut self) {
        self.cached_normal = None;
    }

    /// Uniform index in [0, n). Modulo bias is below n / 2⁶⁴.
    pub fn next_index(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// Fills a `rows × cols` matrix from `stream` under `scheme`, drawing
/// entries in `order` — one draw per uniform entry, two draws per normal
/// pair. Any cached half-pair is discarded before and after, so the result
/// depends only on the raw stream position.
pub fn init_matrix(
    stream: &mut RngStream,
    rows: usize,
    cols: usize,
    scheme: InitScheme,
    fan_in: usize,
    order: FillOrder,
) -> Result<Matrix> {
    if rows == 0 || cols == 0 || fan_in == 0 {
        return Err(Error::InvalidParameter(format!(
            "init_matrix requires rows, cols, fan_in >= 1, got {rows}x{cols}, fan_in {fan_in}"
        )));
    }
    scheme.validate()?;
    stream.clear_normal_cache();
    let count = rows * cols;
    let mut values = Vec::with_capacity(count);
    match scheme {
        InitScheme::KaimingUniform => {
            let bound = (6.0 / fan_in as f64).sqrt();
            for _ in 0..count {
                values.push(stream.uniform(-bound, bound)?);
            }
        }
        InitScheme::KaimingNormal => {
            let std = (2.0 / fan_in as f64).sqrt();
            for _ in 0..count {
                values.push(stream.normal(0.0, std)?);
            }
        }
        InitScheme::UniformRange { low, high } => {
            for _ in 0..count {
                values.push(stream.uniform(low, high)?);
            }
        }
    }
    stream.clear_normal_cache();

    let mut m = Matrix::zeros(rows, cols);
    match order {
        FillOrder::RowMajor => m.data_mut().copy_from_slice(&values),
        FillOrder::ColMajor => {
            for (idx, v) in values.into_iter().enumerate() {
                let col = idx / rows;
                let row = idx % rows;
                m.set(row, col, v);
            }
        }
    }
    Ok(m)
}
