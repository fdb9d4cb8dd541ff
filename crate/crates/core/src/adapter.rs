//! Adapted linear layers.
//!
//! A frozen base weight `W0 ∈ R^{m×n}` is augmented with a low-rank update
//! that is cheap to train and free to deploy (it merges back into `W0`).
//! Two parameterizations are provided:
//!
//! - VeRA: `h = W0 x + b ⊙ (B_r (d ⊙ (A_r x)))` where the pair `(A, B)` is
//!   frozen, random, regenerable from a seed, and shared by every layer of
//!   the same shape; only the scaling vectors `d` (length r) and `b`
//!   (length m) train. `A_r`/`B_r` are the first r rows/columns of the
//!   shared pair. The single-vector ablations keep just `d` or just `b`.
//! - LoRA: `h = W0 x + (α/r) · B (A x)` with trainable `A ∈ R^{r×n}`,
//!   `B ∈ R^{m×r}` per layer.
//!
//! Both start as an exact identity on `W0 x`: `b = 0` for VeRA, `B = 0`
//! for LoRA, so the first forward pass is unaffected.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::{init_matrix, splitmix64, FillOrder, InitScheme, RngStream};

/// Adaptation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Vera,
    Lora,
    OnlyD,
    OnlyB,
    HeadOnly,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vera => "vera",
            Method::Lora => "lora",
            Method::OnlyD => "only-d",
            Method::OnlyB => "only-b",
            Method::HeadOnly => "head-only",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "vera" => Ok(Method::Vera),
            "lora" => Ok(Method::Lora),
            "only-d" | "only_d" | "onlyd" => Ok(Method::OnlyD),
            "only-b" | "only_b" | "onlyb" => Ok(Method::OnlyB),
            "head-only" | "head_only" | "headonly" => Ok(Method::HeadOnly),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }

    /// True for the methods realized by [`VeraLayer`].
    pub fn is_vera_family(self) -> bool {
        matches!(self, Method::Vera | Method::OnlyD | Method::OnlyB)
    }
}

/// Configuration shared by every adapted layer of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterConfig {
    pub method: Method,
    /// Working rank r.
    pub rank: usize,
    /// Width the shared pair is generated at; layers slice the first
    /// `rank` rows/columns. Recorded in checkpoints so slicing is
    /// reproducible.
    pub r_max: usize,
    pub scheme: InitScheme,
    /// Initial value for every element of d (VeRA only).
    pub d_init: f64,
    /// LoRA scale numerator; the update is scaled by alpha / rank.
    pub lora_alpha: f64,
    pub master_seed: u64,
}

impl AdapterConfig {
    /// Defaults: r_max = rank, Kaiming-uniform shared matrices,
    /// d_init = 0.1, alpha = rank (unit LoRA scale).
    pub fn new(method: Method, rank: usize, master_seed: u64) -> Self {
        Self {
            method,
            rank,
            r_max: rank,
            scheme: InitScheme::KaimingUniform,
            d_init: 0.1,
            lora_alpha: rank as f64,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidConfig("rank must be >= 1".into()));
        }
        if self.rank > self.r_max {
            return Err(Error::InvalidConfig(format!(
                "rank {} exceeds r_max {}",
                self.rank, self.r_max
            )));
        }
        self.scheme.validate()?;
        if self.method == Method::Lora && !(self.lora_alpha > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lora_alpha must be > 0, got {}",
                self.lora_alpha
            )));
        }
        Ok(())
    }
}

/// The frozen random pair for one layer shape, regenerable from its
/// derivation metadata alone.
///
/// `A` (r_max×n) is filled row-major and `B` (m×r_max) column-major from
/// one continued stream, so the first r rows of `A` coincide with a direct
/// build at r_max = r, and the first r columns of `B` are a prefix of the
/// draws that follow `A`. Immutable and freely shared across threads.
#[derive(Debug)]
pub struct SharedMatrices {
    m: usize,
    n: usize,
    r_max: usize,
    scheme: InitScheme,
    master_seed: u64,
    a: Matrix,
    b: Matrix,
}

impl SharedMatrices {
    /// Stream key for a layer shape: splitmix64(m·2³² + n).
    pub fn stream_key(m: usize, n: usize) -> u64 {
        splitmix64(((m as u64) << 32).wrapping_add(n as u64))
    }

    pub fn build(
        m: usize,
        n: usize,
        r_max: usize,
        scheme: InitScheme,
        master_seed: u64,
    ) -> Result<Arc<Self>> {
        if m == 0 || n == 0 || r_max == 0 {
            return Err(Error::InvalidParameter(format!(
                "shared matrices require m, n, r_max >= 1, got m={m} n={n} r_max={r_max}"
            )));
        }
        if m > u32::MAX as usize || n > u32::MAX as usize {
            return Err(Error::InvalidParameter(
                "layer dimensions must fit in 32 bits".into(),
            ));
        }
        let scheme = scheme.normalized();
        let mut stream = RngStream::new(master_seed, Self::stream_key(m, n));
        let a = init_matrix(&mut stream, r_max, n, scheme, n, FillOrder::RowMajor)?;
        let b = init_matrix(&mut stream, m, r_max, scheme, r_max, FillOrder::ColMajor)?;
        Ok(Arc::new(Self {
            m,
            n,
            r_max,
            scheme,
            master_seed,
            a,
            b,
        }))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r_max(&self) -> usize {
        self.r_max
    }

    pub fn scheme(&self) -> InitScheme {
        self.scheme
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Full r_max×n projection matrix.
    pub fn a(&self) -> &Matrix {
        &self.a
    }

    /// Full m×r_max expansion matrix.
    pub fn b(&self) -> &Matrix {
        &self.b
    }
}

/// Forward cache for [`VeraLayer::backward`]: `u = A_r x`, `w = B_r (d⊙u)`.
#[derive(Debug, Clone)]
pub struct VeraCache {
    pub u: Vector,
    pub w: Vector,
}

/// Gradients of one VeRA forward; `d`/`b` are `None` when the variant does
/// not train that vector.
#[derive(Debug, Clone)]
pub struct VeraGrads {
    pub d: Option<Vector>,
    pub b: Option<Vector>,
    pub x: Vector,
}

/// A VeRA-adapted linear layer (also realizes the only-d / only-b
/// ablations, with the absent vector fixed at ones).
#[derive(Debug, Clone)]
pub struct VeraLayer {
    name: String,
    method: Method,
    w0: Matrix,
    shared: Arc<SharedMatrices>,
    /// First `rank` rows of the shared A.
    a_r: Matrix,
    /// First `rank` columns of the shared B.
    b_r: Matrix,
    rank: usize,
    d: Vector,
    b: Vector,
}

impl VeraLayer {
    /// Fresh layer. Initialization per variant: full VeRA has
    /// `d = d_init·ones, b = 0`; only-d has `d = 0` (b fixed at ones);
    /// only-b has `b = 0` (d fixed at ones). All three leave the first
    /// forward pass exactly equal to `W0 x`.
    pub fn new(
        name: impl Into<String>,
        w0: Matrix,
        shared: Arc<SharedMatrices>,
        config: &AdapterConfig,
    ) -> Result<Self> {
        if !config.method.is_vera_family() {
            return Err(Error::UnsupportedMethod(format!(
                "VeraLayer cannot realize method '{}'",
                config.method.name()
            )));
        }
        config.validate()?;
        if w0.rows() != shared.m() || w0.cols() != shared.n() {
            return Err(Error::DimMismatch(format!(
                "base weight {}x{} does not match shared pair {}x{}",
                w0.rows(),
                w0.cols(),
                shared.m(),
                shared.n()
            )));
        }
        if config.rank > shared.r_max() {
            return Err(Error::InvalidConfig(format!(
                "rank {} exceeds shared r_max {}",
                config.rank,
                shared.r_max()
            )));
        }
        let m = shared.m();
        let rank = config.rank;
        let (d, b) = match config.method {
            Method::Vera => (Vector::filled(rank, config.d_init), Vector::zeros(m)),
            Method::OnlyD => (Vector::zeros(rank), Vector::ones(m)),
            Method::OnlyB => (Vector::ones(rank), Vector::zeros(m)),
            _ => unreachable!(),
        };
        let a_r = shared.a().slice_rows(rank)?;
        let b_r = shared.b().slice_cols(rank)?;
        Ok(Self {
            name: name.into(),
            method: config.method,
            w0,
            shared,
            a_r,
            b_r,
            rank,
            d,
            b,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn m(&self) -> usize {
        self.w0.rows()
    }

    pub fn n(&self) -> usize {
        self.w0.cols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn w0(&self) -> &Matrix {
        &self.w0
    }

    pub fn shared(&self) -> &Arc<SharedMatrices> {
        &self.shared
    }

    pub fn d(&self) -> &Vector {
        &self.d
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    /// Trainable vectors have a single-writer contract during training.
    pub fn d_mut(&mut self) -> &mut Vector {
        &mut self.d
    }

    pub fn b_mut(&mut self) -> &mut Vector {
        &mut self.b
    }

    pub fn trains_d(&self) -> bool {
        self.method != Method::OnlyB
    }

    pub fn trains_b(&self) -> bool {
        self.method != Method::OnlyD
    }

    /// `h = W0 x + b ⊙ (B_r (d ⊙ (A_r x)))`, returning the cache backward
    /// needs.
    pub fn forward(&self, x: &Vector) -> Result<(Vector, VeraCache)> {
        let u = self.a_r.matvec(x)?;
        let v = self.d.hadamard(&u)?;
        let w = self.b_r.matvec(&v)?;
        let mut h = self.w0.matvec(x)?;
        for i in 0..h.len() {
            h.data_mut()[i] += self.b.get(i) * w.get(i);
        }
        Ok((h, VeraCache { u, w }))
    }

    /// Analytic gradients for the loss direction `g` (length m):
    /// `grad_b = g ⊙ w`, `grad_d = (B_rᵀ (b ⊙ g)) ⊙ u`,
    /// `grad_x = W0ᵀ g + A_rᵀ (d ⊙ (B_rᵀ (b ⊙ g)))`.
    pub fn backward(&self, g: &Vector, cache: &VeraCache) -> Result<VeraGrads> {
        if g.len() != self.m() {
            return Err(Error::DimMismatch(format!(
                "upstream gradient length {} != m {}",
                g.len(),
                self.m()
            )));
        }
        if cache.u.len() != self.rank || cache.w.len() != self.m() {
            return Err(Error::DimMismatch(
                "cache does not match this layer".into(),
            ));
        }
        let bg = self.b.hadamard(g)?;
        let s = self.b_r.matvec_t(&bg)?;
        let grad_d = if self.trains_d() {
            Some(s.hadamard(&cache.u)?)
        } else {
            None
        };
        let grad_b = if self.trains_b() {
            Some(g.hadamard(&cache.w)?)
        } else {
            None
        };
        let grad_x = self
            .w0
            .matvec_t(g)?
            .add(&self.a_r.matvec_t(&self.d.hadamard(&s)?)?)?;
        Ok(VeraGrads {
            d: grad_d,
            b: grad_b,
            x: grad_x,
        })
    }

    /// Folds the update into the base weight:
    /// `W0 + diag(b) · B_r · diag(d) · A_r`. Pure.
    pub fn merge(&self) -> Matrix {
        let mut out = self.w0.clone();
        for i in 0..self.m() {
            let bi = self.b.get(i);
            if bi == 0.0 {
                continue;
            }
            for j in 0..self.n() {
                let mut acc = 0.0;
                for k in 0..self.rank {
                    acc += self.b_r.get(i, k) * self.d.get(k) * self.a_r.get(k, j);
                }
                let v = out.get(i, j) + bi * acc;
                out.set(i, j, v);
            }
        }
        out
    }

    /// Count of scalars updated by gradient descent.
    pub fn trainable_params(&self) -> usize {
        match self.method {
            Method::Vera => self.m() + self.rank,
            Method::OnlyD => self.rank,
            Method::OnlyB => self.m(),
            _ => unreachable!(),
        }
    }
}

/// Forward cache for [`LoraLayer::backward`]: `ax = A x`.
#[derive(Debug, Clone)]
pub struct LoraCache {
    pub ax: Vector,
}

#[derive(Debug, Clone)]
pub struct LoraGrads {
    pub a: Matrix,
    pub b: Matrix,
    pub x: Vector,
}

/// A LoRA-adapted linear layer: `h = W0 x + (α/r) B (A x)`.
#[derive(Debug, Clone)]
pub struct LoraLayer {
    name: String,
    w0: Matrix,
    /// r×n, trainable, initialized per scheme.
    a: Matrix,
    /// m×r, trainable, initialized to zero.
    b: Matrix,
    rank: usize,
    alpha: f64,
}

impl LoraLayer {
    /// Fresh layer; `A` is drawn from `stream` (fan_in = n, row-major) and
    /// `B` starts at zero so the first forward pass equals `W0 x`.
    pub fn new(
        name: impl Into<String>,
        w0: Matrix,
        rank: usize,
        alpha: f64,
        scheme: InitScheme,
        stream: &mut RngStream,
    ) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidConfig("rank must be >= 1".into()));
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lora alpha must be > 0, got {alpha}"
            )));
        }
        let (m, n) = (w0.rows(), w0.cols());
        let a = init_matrix(stream, rank, n, scheme.normalized(), n, FillOrder::RowMajor)?;
        Ok(Self {
            name: name.into(),
            w0,
            a,
            b: Matrix::zeros(m, rank),
            rank,
            alpha,
        })
    }

    /// Rebuilds a layer from explicit matrices (checkpoint load path).
    pub fn from_parts(
        name: impl Into<String>,
        w0: Matrix,
        a: Matrix,
        b: Matrix,
        alpha: f64,
    ) -> Result<Self> {
        let rank = a.rows();
        if b.cols() != rank || a.cols() != w0.cols() || b.rows() != w0.rows() {
            return Err(Error::DimMismatch(format!(
                "lora parts: W0 {}x{}, A {}x{}, B {}x{}",
                w0.rows(),
                w0.cols(),
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        Ok(Self {
            name: name.into(),
            w0,
            a,
            b,
            rank,
            alpha,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn m(&self) -> usize {
        self.w0.rows()
    }

    pub fn n(&self) -> usize {
        self.w0.cols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The update scale α/r.
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn w0(&self) -> &Matrix {
        &self.w0
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn a_mut(&mut self) -> &mut Matrix {
        &mut self.a
    }

    pub fn b_mut(&mut self) -> &mut Matrix {
        &mut self.b
    }

    pub fn forward(&self, x: &Vector) -> Result<(Vector, LoraCache)> {
        let ax = self.a.matvec(x)?;
        let bax = self.b.matvec(&ax)?;
        let s = self.scaling();
        let mut h = self.w0.matvec(x)?;
        for i in 0..h.len() {
            h.data_mut()[i] += s * bax.get(i);
        }
        Ok((h, LoraCache { ax }))
    }

    /// With s = α/r: `grad_B = s·g (Ax)ᵀ`, `grad_A = s·(Bᵀg) xᵀ`,
    /// `grad_x = W0ᵀ g + s·Aᵀ (Bᵀ g)`.
    pub fn backward(&self, x: &Vector, g: &Vector, cache: &LoraCache) -> Result<LoraGrads> {
        if g.len() != self.m() {
            return Err(Error::DimMismatch(format!(
                "upstream gradient length {} != m {}",
                g.len(),
                self.m()
            )));
        }
        if cache.ax.len() != self.rank {
            return Err(Error::DimMismatch(
                "cache does not match this layer".into(),
            ));
        }
        let s = self.scaling();
        let btg = self.b.matvec_t(g)?;
        let mut grad_b = Matrix::zeros(self.m(), self.rank);
        grad_b.add_outer(g, &cache.ax, s)?;
        let mut grad_a = Matrix::zeros(self.rank, self.n());
        grad_a.add_outer(&btg, x, s)?;
        let grad_x = self
            .w0
            .matvec_t(g)?
            .add(&self.a.matvec_t(&btg)?.scale(s))?;
        Ok(LoraGrads {
            a: grad_a,
            b: grad_b,
            x: grad_x,
        })
    }

    /// `W0 + (α/r) B A`. Pure.
    pub fn merge(&self) -> Matrix {
        let s = self.scaling();
        let mut out = self.w0.clone();
        for i in 0..self.m() {
            for j in 0..self.n() {
                let mut acc = 0.0;
                for k in 0..self.rank {
                    acc += self.b.get(i, k) * self.a.get(k, j);
                }
                let v = out.get(i, j) + s * acc;
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn trainable_params(&self) -> usize {
        self.rank * (self.m() + self.n())
    }
}
