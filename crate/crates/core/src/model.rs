//! Desk-scale transformer with adapted attention projections.
//!
//! One content-only attention block: embed → multi-head attention with the
//! query and value projections wrapped in adapters → residual → mean-pool →
//! classification head. No positional encodings (the synthetic tasks are
//! driven by token content) and no layer norm, keeping the gradient chain
//! short enough to verify scalar-by-scalar against finite differences.
//!
//! Only the adapter vectors/matrices and the head receive gradient updates;
//! the embedding, all four projection bases, and the shared pair are
//! bitwise constant across training.

use std::sync::Arc;

use crate::adapter::{
    AdapterConfig, LoraCache, LoraLayer, Method, SharedMatrices, VeraCache, VeraLayer,
};
use crate::checkpoint::LayerRecord;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::{init_matrix, FillOrder, InitScheme, RngStream};

// Stream keys for the frozen base weights, derived from the master seed.
const EMBED_KEY: u64 = 0x10;
const WQ_KEY: u64 = 0x11;
const WK_KEY: u64 = 0x12;
const WV_KEY: u64 = 0x13;
const WO_KEY: u64 = 0x14;
// Per-layer streams for LoRA A matrices.
const LORA_Q_KEY: u64 = 0x20;
const LORA_V_KEY: u64 = 0x21;

/// Toy architecture knobs.
#[derive(Debug, Clone, Copy)]
pub struct ArchConfig {
    pub d_model: usize,
    pub heads: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            heads: 2,
        }
    }
}

/// A projection that may carry an adapter.
#[derive(Debug, Clone)]
pub enum Adapted {
    Vera(VeraLayer),
    Lora(LoraLayer),
    /// Head-only baseline: the raw frozen weight.
    Frozen(Matrix),
}

#[derive(Debug, Clone)]
pub enum AdaptedCache {
    Vera(VeraCache),
    Lora(LoraCache),
    Frozen,
}

impl Adapted {
    fn forward(&self, x: &Vector) -> Result<(Vector, AdaptedCache)> {
        match self {
            Adapted::Vera(l) => {
                let (h, c) = l.forward(x)?;
                Ok((h, AdaptedCache::Vera(c)))
            }
            Adapted::Lora(l) => {
                let (h, c) = l.forward(x)?;
                Ok((h, AdaptedCache::Lora(c)))
            }
            Adapted::Frozen(w) => Ok((w.matvec(x)?, AdaptedCache::Frozen)),
        }
    }

    fn trainable_params(&self) -> usize {
        match self {
            Adapted::Vera(l) => l.trainable_params(),
            Adapted::Lora(l) => l.trainable_params(),
            Adapted::Frozen(_) => 0,
        }
    }

    fn w0(&self) -> &Matrix {
        match self {
            Adapted::Vera(l) => l.w0(),
            Adapted::Lora(l) => l.w0(),
            Adapted::Frozen(w) => w,
        }
    }
}

/// Addresses one trainable tensor of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Head,
    QVecD,
    QVecB,
    QMatA,
    QMatB,
    VVecD,
    VVecB,
    VMatA,
    VMatB,
}

impl Slot {
    pub fn label(self) -> &'static str {
        match self {
            Slot::Head => "head",
            Slot::QVecD => "q.d",
            Slot::QVecB => "q.b",
            Slot::QMatA => "q.A",
            Slot::QMatB => "q.B",
            Slot::VVecD => "v.d",
            Slot::VVecB => "v.b",
            Slot::VMatA => "v.A",
            Slot::VMatB => "v.B",
        }
    }
}

/// Flat per-slot gradient accumulators; slots absent from the method are
/// not allocated.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    grads: Vec<(Slot, Vec<f64>)>,
}

impl ModelGrads {
    fn zeros_for(model: &ToyModel) -> Self {
        let grads = model
            .trainable_slots()
            .into_iter()
            .map(|slot| (slot, vec![0.0; model.param_slice(slot).unwrap().len()]))
            .collect();
        Self { grads }
    }

    pub fn slice(&self, slot: Slot) -> Option<&[f64]> {
        self.grads
            .iter()
            .find(|(s, _)| *s == slot)
            .map(|(_, g)| g.as_slice())
    }

    fn slice_mut(&mut self, slot: Slot) -> Option<&mut Vec<f64>> {
        self.grads
            .iter_mut()
            .find(|(s, _)| *s == slot)
            .map(|(_, g)| g)
    }

    fn accumulate(&mut self, slot: Slot, values: &[f64]) {
        if let Some(acc) = self.slice_mut(slot) {
            for (a, v) in acc.iter_mut().zip(values) {
                *a += v;
            }
        }
    }

    /// Scales every accumulator (used to turn sums into batch means).
    pub fn scale(&mut self, s: f64) {
        for (_, g) in &mut self.grads {
            for v in g {
                *v *= s;
            }
        }
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        self.grads.iter().map(|(s, _)| *s)
    }
}

/// Everything one forward pass retains for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    xs: Vec<Vector>,
    ks: Vec<Vector>,
    vs: Vec<Vector>,
    q_caches: Vec<AdaptedCache>,
    v_caches: Vec<AdaptedCache>,
    /// Attention probabilities, one L×L matrix per head; rows sum to 1.
    pub probs: Vec<Matrix>,
    z: Vector,
    pub logits: Vector,
}

/// The toy model.
#[derive(Debug, Clone)]
pub struct ToyModel {
    embed: Matrix,
    q: Adapted,
    wk: Matrix,
    v: Adapted,
    wo: Matrix,
    head: Matrix,
    d_model: usize,
    heads: usize,
    vocab: usize,
    classes: usize,
    method: Method,
}

impl ToyModel {
    /// Builds the frozen base from `config.master_seed` and wraps the query
    /// and value projections per the adapter method. The head starts at
    /// zero and is always trainable.
    pub fn new(
        vocab: usize,
        classes: usize,
        arch: &ArchConfig,
        config: &AdapterConfig,
    ) -> Result<Self> {
        config.validate()?;
        let d = arch.d_model;
        if d == 0 || arch.heads == 0 || d % arch.heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {d} must be a positive multiple of heads {}",
                arch.heads
            )));
        }
        if vocab < 2 || classes < 2 {
            return Err(Error::InvalidConfig(
                "model needs vocab >= 2 and classes >= 2".into(),
            ));
        }
        let seed = config.master_seed;
        let base = InitScheme::KaimingUniform;
        let take = |key: u64, rows: usize, cols: usize| -> Result<Matrix> {
            let mut stream = RngStream::new(seed, key);
            init_matrix(&mut stream, rows, cols, base, cols, FillOrder::RowMajor)
        };
        let embed = take(EMBED_KEY, vocab, d)?;
        let wq = take(WQ_KEY, d, d)?;
        let wk = take(WK_KEY, d, d)?;
        let wv = take(WV_KEY, d, d)?;
        let wo = take(WO_KEY, d, d)?;

        let (q, v) = match config.method {
            Method::Vera | Method::OnlyD | Method::OnlyB => {
                let shared =
                    SharedMatrices::build(d, d, config.r_max, config.scheme, config.master_seed)?;
                (
                    Adapted::Vera(VeraLayer::new("attn.q", wq, Arc::clone(&shared), config)?),
                    Adapted::Vera(VeraLayer::new("attn.v", wv, shared, config)?),
                )
            }
            Method::Lora => {
                let mut qs = RngStream::new(seed, LORA_Q_KEY);
                let mut vs = RngStream::new(seed, LORA_V_KEY);
                (
                    Adapted::Lora(LoraLayer::new(
                        "attn.q",
                        wq,
                        config.rank,
                        config.lora_alpha,
                        config.scheme,
                        &mut qs,
                    )?),
                    Adapted::Lora(LoraLayer::new(
                        "attn.v",
                        wv,
                        config.rank,
                        config.lora_alpha,
                        config.scheme,
                        &mut vs,
                    )?),
                )
            }
            Method::HeadOnly => (Adapted::Frozen(wq), Adapted::Frozen(wv)),
        };

        Ok(Self {
            embed,
            q,
            wk,
            v,
            wo,
            head: Matrix::zeros(classes, d),
            d_model: d,
            heads: arch.heads,
            vocab,
            classes,
            method: config.method,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn q(&self) -> &Adapted {
        &self.q
    }

    pub fn v(&self) -> &Adapted {
        &self.v
    }

    pub fn head(&self) -> &Matrix {
        &self.head
    }

    /// Adapter parameters only, excluding the always-trained head — the
    /// quantity the accounting formulas predict.
    pub fn adapter_trainable_params(&self) -> usize {
        self.q.trainable_params() + self.v.trainable_params()
    }

    /// Logits for one token sequence plus the backward cache.
    pub fn forward(&self, tokens: &[usize]) -> Result<(Vector, ForwardCache)> {
        if tokens.is_empty() {
            return Err(Error::InvalidParameter("empty token sequence".into()));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.vocab) {
            return Err(Error::InvalidParameter(format!(
                "token {t} out of vocabulary (< {})",
                self.vocab
            )));
        }
        let len = tokens.len();
        let d = self.d_model;
        let hd = d / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();

        let xs: Vec<Vector> = tokens
            .iter()
            .map(|&t| Vector::new(self.embed.row(t).to_vec()).unwrap())
            .collect();

        let mut qs = Vec::with_capacity(len);
        let mut q_caches = Vec::with_capacity(len);
        let mut ks = Vec::with_capacity(len);
        let mut vs = Vec::with_capacity(len);
        let mut v_caches = Vec::with_capacity(len);
        for x in &xs {
            let (qq, qc) = self.q.forward(x)?;
            qs.push(qq);
            q_caches.push(qc);
            ks.push(self.wk.matvec(x)?);
            let (vv, vc) = self.v.forward(x)?;
            vs.push(vv);
            v_caches.push(vc);
        }

        // attention per head, concatenated head outputs
        let mut probs = Vec::with_capacity(self.heads);
        let mut attn: Vec<Vector> = vec![Vector::zeros(d); len];
        for h in 0..self.heads {
            let lo = h * hd;
            let hi = lo + hd;
            let mut p = Matrix::zeros(len, len);
            for i in 0..len {
                let mut scores = vec![0.0; len];
                for (j, score) in scores.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for t in lo..hi {
                        acc += qs[i].get(t) * ks[j].get(t);
                    }
                    *score = acc * scale;
                }
                let row = softmax(&scores);
                for (j, &pij) in row.iter().enumerate() {
                    p.set(i, j, pij);
                    for t in lo..hi {
                        attn[i].data_mut()[t] += pij * vs[j].get(t);
                    }
                }
            }
            probs.push(p);
        }

        // output projection, residual, mean pool
        let mut z = Vector::zeros(d);
        for (x, c) in xs.iter().zip(&attn) {
            let o = self.wo.matvec(c)?;
            for t in 0..d {
                z.data_mut()[t] += x.get(t) + o.get(t);
            }
        }
        let z = z.scale(1.0 / len as f64);
        let logits = self.head.matvec(&z)?;

        Ok((
            logits.clone(),
            ForwardCache {
                xs,
                ks,
                vs,
                q_caches,
                v_caches,
                probs,
                z,
                logits,
            },
        ))
    }

    /// Accumulates parameter gradients for one example into `grads`, given
    /// the loss gradient at the logits. Gradients with respect to frozen
    /// tensors are never materialized.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &Vector,
        grads: &mut ModelGrads,
    ) -> Result<()> {
        if dlogits.len() != self.classes {
            return Err(Error::DimMismatch(format!(
                "dlogits length {} != classes {}",
                dlogits.len(),
                self.classes
            )));
        }
        let len = cache.xs.len();
        let d = self.d_model;
        let hd = d / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();

        // head: dL/dhead = dlogits ⊗ z
        if let Some(acc) = grads.slice_mut(Slot::Head) {
            for c in 0..self.classes {
                let gc = dlogits.get(c);
                for t in 0..d {
                    acc[c * d + t] += gc * cache.z.get(t);
                }
            }
        }

        // mean pooling hands every position the same upstream gradient
        let dz = self.head.matvec_t(dlogits)?;
        let dy = dz.scale(1.0 / len as f64);
        let dc = self.wo.matvec_t(&dy)?;

        let mut dqs: Vec<Vector> = vec![Vector::zeros(d); len];
        let mut dvs: Vec<Vector> = vec![Vector::zeros(d); len];
        for h in 0..self.heads {
            let lo = h * hd;
            let hi = lo + hd;
            let p = &cache.probs[h];
            for i in 0..len {
                // dL/dp_ij = dout_i · v_j on this head's slice
                let mut dp = vec![0.0; len];
                for (j, dpj) in dp.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for t in lo..hi {
                        acc += dc.get(t) * cache.vs[j].get(t);
                    }
                    *dpj = acc;
                }
                // softmax backward: ds_ij = p_ij (dp_ij − Σ_k p_ik dp_ik)
                let dot: f64 = (0..len).map(|k| p.get(i, k) * dp[k]).sum();
                for (j, dpj) in dp.iter().enumerate() {
                    let ds = p.get(i, j) * (dpj - dot);
                    // scores: s_ij = (q_i · k_j) · scale
                    for t in lo..hi {
                        dqs[i].data_mut()[t] += ds * cache.ks[j].get(t) * scale;
                    }
                }
                // values: out_i = Σ_j p_ij v_j
                for j in 0..len {
                    let pij = p.get(i, j);
                    for t in lo..hi {
                        dvs[j].data_mut()[t] += pij * dc.get(t);
                    }
                }
            }
        }

        for i in 0..len {
            adapter_backward(
                &self.q,
                &cache.xs[i],
                &dqs[i],
                &cache.q_caches[i],
                [Slot::QVecD, Slot::QVecB, Slot::QMatA, Slot::QMatB],
                grads,
            )?;
            adapter_backward(
                &self.v,
                &cache.xs[i],
                &dvs[i],
                &cache.v_caches[i],
                [Slot::VVecD, Slot::VVecB, Slot::VMatA, Slot::VMatB],
                grads,
            )?;
        }
        Ok(())
    }

    /// Fresh zeroed gradient accumulators for this model's trainable set.
    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads::zeros_for(self)
    }

    /// The trainable tensors of this model, in update order.
    pub fn trainable_slots(&self) -> Vec<Slot> {
        let mut slots = vec![Slot::Head];
        collect_slots(&self.q, [Slot::QVecD, Slot::QVecB, Slot::QMatA, Slot::QMatB], &mut slots);
        collect_slots(&self.v, [Slot::VVecD, Slot::VVecB, Slot::VMatA, Slot::VMatB], &mut slots);
        slots
    }

    pub fn param_slice(&self, slot: Slot) -> Option<&[f64]> {
        match slot {
            Slot::Head => Some(self.head.data()),
            Slot::QVecD | Slot::QVecB | Slot::QMatA | Slot::QMatB => {
                adapted_slice(&self.q, slot_kind(slot))
            }
            Slot::VVecD | Slot::VVecB | Slot::VMatA | Slot::VMatB => {
                adapted_slice(&self.v, slot_kind(slot))
            }
        }
    }

    pub fn param_slice_mut(&mut self, slot: Slot) -> Option<&mut [f64]> {
        match slot {
            Slot::Head => Some(self.head.data_mut()),
            Slot::QVecD | Slot::QVecB | Slot::QMatA | Slot::QMatB => {
                adapted_slice_mut(&mut self.q, slot_kind(slot))
            }
            Slot::VVecD | Slot::VVecB | Slot::VMatA | Slot::VMatB => {
                adapted_slice_mut(&mut self.v, slot_kind(slot))
            }
        }
    }

    /// Whether weight decay applies to a slot: matrices decay, the VeRA
    /// scaling vectors do not (decaying them would fight their role as
    /// multiplicative gates).
    pub fn decays(&self, slot: Slot) -> bool {
        matches!(
            slot,
            Slot::Head | Slot::QMatA | Slot::QMatB | Slot::VMatA | Slot::VMatB
        )
    }

    /// Checkpoint records for the adapted layers (empty for head-only).
    pub fn layer_records(&self) -> Vec<LayerRecord> {
        let mut out = Vec::new();
        for adapted in [&self.q, &self.v] {
            match adapted {
                Adapted::Vera(l) => out.push(LayerRecord::from_vera(l)),
                Adapted::Lora(l) => out.push(LayerRecord::from_lora(l)),
                Adapted::Frozen(_) => {}
            }
        }
        out
    }

    /// Base weights by tensor name, for merged-weight export.
    pub fn base_weights(&self) -> Vec<(String, Matrix)> {
        vec![
            ("embed".to_string(), self.embed.clone()),
            ("attn.q".to_string(), self.q.w0().clone()),
            ("attn.k".to_string(), self.wk.clone()),
            ("attn.v".to_string(), self.v.w0().clone()),
            ("attn.o".to_string(), self.wo.clone()),
        ]
    }

    /// FNV-1a over the bits of every frozen tensor; unchanged by training.
    pub fn frozen_fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |data: &[f64]| {
            for v in data {
                for byte in v.to_bits().to_le_bytes() {
                    hash ^= byte as u64;
                    hash = hash.wrapping_mul(0x1000_0000_01b3);
                }
            }
        };
        eat(self.embed.data());
        eat(self.wk.data());
        eat(self.wo.data());
        eat(self.q.w0().data());
        eat(self.v.w0().data());
        if let Adapted::Vera(l) = &self.q {
            eat(l.shared().a().data());
            eat(l.shared().b().data());
        }
        hash
    }
}

/// Which tensor of an adapted projection a slot addresses.
#[derive(Clone, Copy, PartialEq, Eq)]
enum SlotKind {
    VecD,
    VecB,
    MatA,
    MatB,
}

fn slot_kind(slot: Slot) -> SlotKind {
    match slot {
        Slot::QVecD | Slot::VVecD => SlotKind::VecD,
        Slot::QVecB | Slot::VVecB => SlotKind::VecB,
        Slot::QMatA | Slot::VMatA => SlotKind::MatA,
        Slot::QMatB | Slot::VMatB => SlotKind::MatB,
        Slot::Head => unreachable!(),
    }
}

fn adapted_slice(adapted: &Adapted, kind: SlotKind) -> Option<&[f64]> {
    match (adapted, kind) {
        (Adapted::Vera(l), SlotKind::VecD) if l.trains_d() => Some(l.d().data()),
        (Adapted::Vera(l), SlotKind::VecB) if l.trains_b() => Some(l.b().data()),
        (Adapted::Lora(l), SlotKind::MatA) => Some(l.a().data()),
        (Adapted::Lora(l), SlotKind::MatB) => Some(l.b().data()),
        _ => None,
    }
}

fn adapted_slice_mut(adapted: &mut Adapted, kind: SlotKind) -> Option<&mut [f64]> {
    match adapted {
        Adapted::Vera(l) => match kind {
            SlotKind::VecD if l.trains_d() => Some(l.d_mut().data_mut()),
            SlotKind::VecB if l.trains_b() => Some(l.b_mut().data_mut()),
            _ => None,
        },
        Adapted::Lora(l) => match kind {
            SlotKind::MatA => Some(l.a_mut().data_mut()),
            SlotKind::MatB => Some(l.b_mut().data_mut()),
            _ => None,
        },
        Adapted::Frozen(_) => None,
    }
}

fn collect_slots(adapted: &Adapted, names: [Slot; 4], out: &mut Vec<Slot>) {
    let [vec_d, vec_b, mat_a, mat_b] = names;
    match adapted {
        Adapted::Vera(l) => {
            if l.trains_d() {
                out.push(vec_d);
            }
            if l.trains_b() {
                out.push(vec_b);
            }
        }
        Adapted::Lora(_) => {
            out.push(mat_a);
            out.push(mat_b);
        }
        Adapted::Frozen(_) => {}
    }
}

fn adapter_backward(
    adapted: &Adapted,
    x: &Vector,
    g: &Vector,
    cache: &AdaptedCache,
    names: [Slot; 4],
    grads: &mut ModelGrads,
) -> Result<()> {
    let [vec_d, vec_b, mat_a, mat_b] = names;
    match (adapted, cache) {
        (Adapted::Vera(l), AdaptedCache::Vera(c)) => {
            let g = l.backward(g, c)?;
            if let Some(gd) = g.d {
                grads.accumulate(vec_d, gd.data());
            }
            if let Some(gb) = g.b {
                grads.accumulate(vec_b, gb.data());
            }
        }
        (Adapted::Lora(l), AdaptedCache::Lora(c)) => {
            let g = l.backward(x, g, c)?;
            grads.accumulate(mat_a, g.a.data());
            grads.accumulate(mat_b, g.b.data());
        }
        (Adapted::Frozen(_), AdaptedCache::Frozen) => {}
        _ => {
            return Err(Error::InvalidParameter(
                "cache does not match adapter kind".into(),
            ))
        }
    }
    Ok(())
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Cross-entropy loss and its gradient at the logits
/// (softmax(logits) − one-hot(label)).
pub fn cross_entropy(logits: &Vector, label: usize) -> Result<(f64, Vector)> {
    if label >= logits.len() {
        return Err(Error::InvalidParameter(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits
        .data()
        .iter()
        .map(|l| (l - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    let loss = log_sum - logits.get(label);
    let mut grad = softmax(logits.data());
    grad[label] -= 1.0;
    Ok((loss, Vector::from(grad)))
}

/// Index of the largest logit.
pub fn argmax(v: &Vector) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v.get(i) > v.get(best) {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vera_model(rank: usize, seed: u64) -> ToyModel {
        let cfg = AdapterConfig::new(Method::Vera, rank, seed);
        ToyModel::new(2, 2, &ArchConfig::default(), &cfg).unwrap()
    }

    #[test]
    fn fresh_adapters_match_head_only_logits() {
        let seed = 33;
        let arch = ArchConfig::default();
        let head_only =
            ToyModel::new(2, 2, &arch, &AdapterConfig::new(Method::HeadOnly, 1, seed)).unwrap();
        let tokens = [1usize, 0, 1, 1, 0, 0, 1];
        for method in [Method::Vera, Method::Lora, Method::OnlyD, Method::OnlyB] {
            let model = ToyModel::new(2, 2, &arch, &AdapterConfig::new(method, 4, seed)).unwrap();
            let (a, _) = model.forward(&tokens).unwrap();
            let (b, _) = head_only.forward(&tokens).unwrap();
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "method {method:?}");
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let model = vera_model(4, 7);
        let (_, cache) = model.forward(&[0, 1, 1, 0, 1]).unwrap();
        for p in &cache.probs {
            for i in 0..p.rows() {
                let sum: f64 = (0..p.cols()).map(|j| p.get(i, j)).sum();
                assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn token_permutation_leaves_logits_unchanged() {
        // content-only attention + mean pooling is permutation-invariant
        let mut model = vera_model(4, 9);
        // make the head non-trivial so logits are not all zero
        for (i, v) in model.head.data_mut().iter_mut().enumerate() {
            *v = ((i % 7) as f64 - 3.0) * 0.05;
        }
        let tokens = [1usize, 0, 0, 1, 1];
        let permuted = [0usize, 1, 1, 0, 1];
        let (a, _) = model.forward(&tokens).unwrap();
        let (b, _) = model.forward(&permuted).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_vocab_token_is_rejected() {
        let model = vera_model(2, 1);
        assert!(matches!(
            model.forward(&[0, 2, 1]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_parameter_gradients() {
        let model = vera_model(4, 21);
        let (_, cache) = model.forward(&[1, 0, 1]).unwrap();
        let mut grads = model.zero_grads();
        model
            .backward(&cache, &Vector::zeros(2), &mut grads)
            .unwrap();
        for slot in model.trainable_slots() {
            assert!(grads.slice(slot).unwrap().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn cross_entropy_matches_hand_values() {
        let logits = Vector::new(vec![0.0, 0.0]).unwrap();
        let (loss, grad) = cross_entropy(&logits, 0).unwrap();
        assert!((loss - (2.0f64).ln()).abs() < 1e-12);
        assert!((grad.get(0) - (-0.5)).abs() < 1e-12);
        assert!((grad.get(1) - 0.5).abs() < 1e-12);
        assert!(cross_entropy(&logits, 5).is_err());
    }

    #[test]
    fn trainable_slot_catalog_matches_method() {
        let arch = ArchConfig::default();
        let slots = |method: Method| {
            ToyModel::new(2, 2, &arch, &AdapterConfig::new(method, 2, 0))
                .unwrap()
                .trainable_slots()
        };
        assert_eq!(slots(Method::HeadOnly), vec![Slot::Head]);
        assert_eq!(
            slots(Method::Vera),
            vec![Slot::Head, Slot::QVecD, Slot::QVecB, Slot::VVecD, Slot::VVecB]
        );
        assert_eq!(slots(Method::OnlyD), vec![Slot::Head, Slot::QVecD, Slot::VVecD]);
        assert_eq!(slots(Method::OnlyB), vec![Slot::Head, Slot::QVecB, Slot::VVecB]);
        assert_eq!(
            slots(Method::Lora),
            vec![Slot::Head, Slot::QMatA, Slot::QMatB, Slot::VMatA, Slot::VMatB]
        );
    }

    #[test]
    fn adapter_param_count_matches_accounting_form() {
        let arch = ArchConfig::default();
        let d = arch.d_model;
        for r in [1usize, 4, 8] {
            let vera = ToyModel::new(2, 2, &arch, &AdapterConfig::new(Method::Vera, r, 3)).unwrap();
            assert_eq!(vera.adapter_trainable_params(), 2 * (d + r));
            let lora = ToyModel::new(2, 2, &arch, &AdapterConfig::new(Method::Lora, r, 3)).unwrap();
            assert_eq!(lora.adapter_trainable_params(), 2 * r * 2 * d);
        }
    }
}
