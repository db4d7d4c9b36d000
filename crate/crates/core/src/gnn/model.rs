use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{dot, outer};
use super::{DenseMatrix, GnnError, NormalizedAdjacency};
use crate::graph::FeatureMatrix;

/// Graph-level readout applied to the last GCN layer's node embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Learned context attention: `h = Σ sigmoid(uₙ·c) uₙ`, `c = tanh(W ū)`.
    Attention,
    /// Unweighted mean of node embeddings.
    Mean,
    /// Sum of node embeddings weighted by degree (self-loop included).
    DegreeSum,
}

impl std::str::FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "attention" => Ok(Self::Attention),
            "mean" => Ok(Self::Mean),
            "degree_sum" | "degree-sum" | "degree" => Ok(Self::DegreeSum),
            other => Err(format!("unknown pooling '{other}'")),
        }
    }
}

impl std::fmt::Display for Pooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Attention => "attention",
            Self::Mean => "mean",
            Self::DegreeSum => "degree_sum",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// One-hot width (vocabulary size including the OOV slot).
    pub input_dim: usize,
    pub gcn_dims: Vec<usize>,
    /// Width of the first fully connected layer.
    pub bottleneck: usize,
    pub num_classes: usize,
    pub pooling: Pooling,
}

impl ModelConfig {
    /// Three GCN layers of 64, 32 and 32 units, attention pooling and a
    /// 32-unit bottleneck.
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            gcn_dims: vec![64, 32, 32],
            bottleneck: 32,
            num_classes,
            pooling: Pooling::Attention,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        *self.gcn_dims.last().unwrap_or(&self.input_dim)
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |m: &str| Err(GnnError::InvalidConfig(m.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be positive");
        }
        if self.gcn_dims.is_empty() || self.gcn_dims.contains(&0) {
            return bad("need at least one GCN layer, all widths positive");
        }
        if self.bottleneck == 0 {
            return bad("bottleneck must be positive");
        }
        if self.num_classes < 2 {
            return bad("need at least two classes");
        }
        Ok(())
    }
}

/// All trainable tensors. Gradients reuse this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    /// `W⁽ˡ⁾`, one `D_in × D_out` matrix per GCN layer.
    pub gcn: Vec<DenseMatrix>,
    /// `D × D` context transform; present only for attention pooling.
    pub attention: Option<DenseMatrix>,
    pub fc1_weight: DenseMatrix,
    pub fc1_bias: DenseMatrix,
    pub fc2_weight: DenseMatrix,
    pub fc2_bias: DenseMatrix,
}

impl GcnParams {
    pub fn tensors(&self) -> Vec<&DenseMatrix> {
        let mut out: Vec<&DenseMatrix> = self.gcn.iter().collect();
        out.extend(self.attention.iter());
        out.extend([&self.fc1_weight, &self.fc1_bias, &self.fc2_weight, &self.fc2_bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out: Vec<&mut DenseMatrix> = self.gcn.iter_mut().collect();
        out.extend(self.attention.iter_mut());
        out.extend([
            &mut self.fc1_weight,
            &mut self.fc1_bias,
            &mut self.fc2_weight,
            &mut self.fc2_bias,
        ]);
        out
    }

    /// Names matching [`tensors`](Self::tensors) order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out: Vec<String> = (0..self.gcn.len()).map(|i| format!("gcn{i}.weight")).collect();
        if self.attention.is_some() {
            out.push("attention.weight".into());
        }
        out.extend(["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"].map(String::from));
        out
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &DenseMatrix| DenseMatrix::zeros(m.rows(), m.cols());
        Self {
            gcn: self.gcn.iter().map(z).collect(),
            attention: self.attention.as_ref().map(z),
            fc1_weight: z(&self.fc1_weight),
            fc1_bias: z(&self.fc1_bias),
            fc2_weight: z(&self.fc2_weight),
            fc2_bias: z(&self.fc2_bias),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.tensors_mut().into_iter().for_each(|t| t.scale(k));
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.as_slice().len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub config: ModelConfig,
    pub params: GcnParams,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> DenseMatrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    DenseMatrix::new(fan_in, fan_out, data).expect("shape matches")
}

/// Glorot-uniform weights and zero biases, deterministic in `seed`.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<GcnModel, GnnError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gcn = Vec::with_capacity(config.gcn_dims.len());
    let mut fan_in = config.input_dim;
    for &d in &config.gcn_dims {
        gcn.push(glorot(&mut rng, fan_in, d));
        fan_in = d;
    }
    let emb = config.embedding_dim();
    let attention = (config.pooling == Pooling::Attention).then(|| glorot(&mut rng, emb, emb));
    let fc1_weight = glorot(&mut rng, emb, config.bottleneck);
    let fc2_weight = glorot(&mut rng, config.bottleneck, config.num_classes);
    Ok(GcnModel {
        config: config.clone(),
        params: GcnParams {
            gcn,
            attention,
            fc1_weight,
            fc1_bias: DenseMatrix::zeros(1, config.bottleneck),
            fc2_weight,
            fc2_bias: DenseMatrix::zeros(1, config.num_classes),
        },
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// One GCN propagation step, `ReLU(Â · H · W)`.
pub fn gcn_forward(
    adj: &NormalizedAdjacency,
    h: &DenseMatrix,
    weight: &DenseMatrix,
) -> Result<DenseMatrix, GnnError> {
    Ok(adj.apply(&h.matmul(weight)?)?.relu())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// Graph embedding `h`.
    pub embedding: Vec<f64>,
    /// Global context `c`.
    pub context: Vec<f64>,
    /// Per-node weights `sigmoid(uₙ·c)`; not normalized across nodes.
    pub weights: Vec<f64>,
    /// Mean node embedding `ū`.
    pub mean: Vec<f64>,
}

pub fn attention_pool(u: &DenseMatrix, weight: &DenseMatrix) -> Result<AttentionOutput, GnnError> {
    if u.rows() == 0 {
        return Err(GnnError::EmptyGraph);
    }
    if weight.shape() != (u.cols(), u.cols()) {
        return Err(GnnError::DimensionMismatch(format!(
            "attention weight is {}x{} but embeddings have width {}",
            weight.rows(),
            weight.cols(),
            u.cols()
        )));
    }
    let n = u.rows() as f64;
    let mean: Vec<f64> = u.column_sums().into_iter().map(|s| s / n).collect();
    let context: Vec<f64> = weight.matvec(&mean).into_iter().map(f64::tanh).collect();
    let weights: Vec<f64> = (0..u.rows()).map(|r| sigmoid(dot(u.row(r), &context))).collect();
    let mut embedding = vec![0.0; u.cols()];
    for (r, &a) in weights.iter().enumerate() {
        for (e, &v) in embedding.iter_mut().zip(u.row(r)) {
            *e += a * v;
        }
    }
    Ok(AttentionOutput {
        embedding,
        context,
        weights,
        mean,
    })
}

pub fn mean_pool(u: &DenseMatrix) -> Result<Vec<f64>, GnnError> {
    if u.rows() == 0 {
        return Err(GnnError::EmptyGraph);
    }
    let n = u.rows() as f64;
    Ok(u.column_sums().into_iter().map(|s| s / n).collect())
}

/// `Σ dₙ uₙ` with `dₙ` the degree of node `n` in `A + I`.
pub fn degree_pool(u: &DenseMatrix, degrees: &[f64]) -> Result<Vec<f64>, GnnError> {
    if u.rows() == 0 {
        return Err(GnnError::EmptyGraph);
    }
    if degrees.len() != u.rows() {
        return Err(GnnError::DimensionMismatch(format!(
            "{} degrees for {} nodes",
            degrees.len(),
            u.rows()
        )));
    }
    Ok(u.vec_matmul(degrees))
}

/// Everything computed by [`forward`]; the backward pass reuses it.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Pre-activation `Â H W` per GCN layer.
    pub gcn_pre: Vec<DenseMatrix>,
    /// Post-ReLU output per GCN layer; the last one is the node embedding `U`.
    pub gcn_out: Vec<DenseMatrix>,
    pub attention: Option<AttentionOutput>,
    pub embedding: Vec<f64>,
    pub fc1_pre: Vec<f64>,
    pub fc1_post: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardPass {
    pub fn predicted(&self) -> usize {
        argmax(&self.logits)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `X · W` for one-hot `X`: row `i` is row `hot[i]` of `W`.
fn one_hot_matmul(x: &FeatureMatrix, w: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(x.rows(), w.cols());
    for (i, &h) in x.hot.iter().enumerate() {
        out.row_mut(i).copy_from_slice(w.row(h));
    }
    out
}

fn add_bias(v: Vec<f64>, bias: &DenseMatrix) -> Vec<f64> {
    v.into_iter().zip(bias.as_slice()).map(|(a, b)| a + b).collect()
}

impl GcnModel {
    fn check_inputs(&self, adj: &NormalizedAdjacency, x: &FeatureMatrix) -> Result<(), GnnError> {
        if x.rows() == 0 {
            return Err(GnnError::EmptyGraph);
        }
        if x.cols != self.config.input_dim {
            return Err(GnnError::DimensionMismatch(format!(
                "features have {} columns, model expects {}",
                x.cols, self.config.input_dim
            )));
        }
        if x.rows() != adj.node_count() {
            return Err(GnnError::DimensionMismatch(format!(
                "{} feature rows for a {}-node adjacency",
                x.rows(),
                adj.node_count()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, adj: &NormalizedAdjacency, x: &FeatureMatrix) -> Result<ForwardPass, GnnError> {
        self.check_inputs(adj, x)?;
        let p = &self.params;
        let mut gcn_pre = Vec::with_capacity(p.gcn.len());
        let mut gcn_out: Vec<DenseMatrix> = Vec::with_capacity(p.gcn.len());
        for (l, w) in p.gcn.iter().enumerate() {
            let hw = match gcn_out.last() {
                None => one_hot_matmul(x, w),
                Some(h) => h.matmul(w)?,
            };
            let pre = adj.apply(&hw)?;
            gcn_out.push(pre.relu());
            gcn_pre.push(pre);
            debug_assert_eq!(gcn_out[l].cols(), self.config.gcn_dims[l]);
        }
        let u = gcn_out.last().expect("at least one layer");
        let (attention, embedding) = match self.config.pooling {
            Pooling::Attention => {
                let w = p.attention.as_ref().ok_or_else(|| {
                    GnnError::InvalidConfig("attention pooling without attention weight".into())
                })?;
                let out = attention_pool(u, w)?;
                let e = out.embedding.clone();
                (Some(out), e)
            }
            Pooling::Mean => (None, mean_pool(u)?),
            Pooling::DegreeSum => (None, degree_pool(u, adj.degrees())?),
        };
        let fc1_pre = add_bias(p.fc1_weight.vec_matmul(&embedding), &p.fc1_bias);
        let fc1_post: Vec<f64> = fc1_pre.iter().map(|v| v.max(0.0)).collect();
        let logits = add_bias(p.fc2_weight.vec_matmul(&fc1_post), &p.fc2_bias);
        let probs = softmax(&logits);
        Ok(ForwardPass {
            gcn_pre,
            gcn_out,
            attention,
            embedding,
            fc1_pre,
            fc1_post,
            logits,
            probs,
        })
    }

    /// Cross-entropy loss of the true `label` and its gradient with respect
    /// to every parameter.
    pub fn loss_and_grads(
        &self,
        adj: &NormalizedAdjacency,
        x: &FeatureMatrix,
        label: usize,
    ) -> Result<(f64, GcnParams, ForwardPass), GnnError> {
        if label >= self.config.num_classes {
            return Err(GnnError::LabelOutOfRange {
                label,
                classes: self.config.num_classes,
            });
        }
        let fp = self.forward(adj, x)?;
        let loss = log_sum_exp(&fp.logits) - fp.logits[label];
        if !loss.is_finite() {
            return Err(GnnError::NonFiniteLoss);
        }
        let p = &self.params;
        let mut g = p.zeros_like();

        // Softmax + cross-entropy.
        let mut d_logits = fp.probs.clone();
        d_logits[label] -= 1.0;

        // fc2
        g.fc2_weight = outer(&fp.fc1_post, &d_logits);
        g.fc2_bias = DenseMatrix::row_vector(d_logits.clone());
        let d_fc1_post = p.fc2_weight.matvec(&d_logits);

        // fc1
        let d_fc1_pre: Vec<f64> = d_fc1_post
            .iter()
            .zip(&fp.fc1_pre)
            .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
            .collect();
        g.fc1_weight = outer(&fp.embedding, &d_fc1_pre);
        g.fc1_bias = DenseMatrix::row_vector(d_fc1_pre.clone());
        let d_embedding = p.fc1_weight.matvec(&d_fc1_pre);

        // Pooling.
        let u = fp.gcn_out.last().expect("at least one layer");
        let n = u.rows();
        let mut d_u = DenseMatrix::zeros(n, u.cols());
        match self.config.pooling {
            Pooling::Attention => {
                let att = fp.attention.as_ref().expect("attention pass");
                let w = p.attention.as_ref().expect("attention weight");
                // h = Σ aₙ uₙ, aₙ = σ(uₙ·c): direct path plus the score path.
                let mut d_context = vec![0.0; u.cols()];
                for r in 0..n {
                    let a = att.weights[r];
                    let d_score = dot(u.row(r), &d_embedding) * a * (1.0 - a);
                    for (k, dst) in d_u.row_mut(r).iter_mut().enumerate() {
                        *dst = a * d_embedding[k] + d_score * att.context[k];
                    }
                    for (dc, &v) in d_context.iter_mut().zip(u.row(r)) {
                        *dc += d_score * v;
                    }
                }
                // c = tanh(W ū), ū = mean(uₙ).
                let d_pre_tanh: Vec<f64> = d_context
                    .iter()
                    .zip(&att.context)
                    .map(|(d, c)| d * (1.0 - c * c))
                    .collect();
                g.attention = Some(outer(&d_pre_tanh, &att.mean));
                let d_mean = w.vec_matmul(&d_pre_tanh);
                let inv_n = 1.0 / n as f64;
                for r in 0..n {
                    for (dst, dm) in d_u.row_mut(r).iter_mut().zip(&d_mean) {
                        *dst += dm * inv_n;
                    }
                }
            }
            Pooling::Mean => {
                let inv_n = 1.0 / n as f64;
                for r in 0..n {
                    for (dst, de) in d_u.row_mut(r).iter_mut().zip(&d_embedding) {
                        *dst = de * inv_n;
                    }
                }
            }
            Pooling::DegreeSum => {
                for (r, &deg) in adj.degrees().iter().enumerate() {
                    for (dst, de) in d_u.row_mut(r).iter_mut().zip(&d_embedding) {
                        *dst = de * deg;
                    }
                }
            }
        }

        // GCN layers, last to first: Z = Â (H W), out = ReLU(Z).
        let mut d_out = d_u;
        for l in (0..p.gcn.len()).rev() {
            let pre = &fp.gcn_pre[l];
            let mut d_pre = d_out;
            for (d, z) in d_pre.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }
            // Â is symmetric, so Âᵀ dZ = Â dZ.
            let d_hw = adj.apply(&d_pre)?;
            if l == 0 {
                let mut gw = DenseMatrix::zeros(p.gcn[0].rows(), p.gcn[0].cols());
                for (i, &h) in x.hot.iter().enumerate() {
                    for (dst, v) in gw.row_mut(h).iter_mut().zip(d_hw.row(i)) {
                        *dst += v;
                    }
                }
                g.gcn[0] = gw;
                d_out = DenseMatrix::zeros(0, 0);
            } else {
                let h_in = &fp.gcn_out[l - 1];
                g.gcn[l] = h_in.t_matmul(&d_hw)?;
                d_out = d_hw.matmul_t(&p.gcn[l])?;
            }
        }
        Ok((loss, g, fp))
    }

    /// Loss only, used by gradient checks and evaluation.
    pub fn loss(&self, adj: &NormalizedAdjacency, x: &FeatureMatrix, label: usize) -> Result<f64, GnnError> {
        let fp = self.forward(adj, x)?;
        Ok(log_sum_exp(&fp.logits) - fp.logits[label])
    }
}
