use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::features::FeatureSpec;
use super::graph::RowGraph;
use crate::error::{DelError, Result};
use crate::measure::Sample;
use crate::numerics::{adam_step, matmul, matmul_nt, matmul_tn, sigmoid, AdamState, Matrix, RngStream};

pub const GCN_HIDDEN: usize = 64;
pub const GCN_OUT: usize = 32;
pub const FC_HIDDEN: usize = 32;

/// Parameters of the data assessing network.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessWeights {
    pub gcn1: Matrix,
    pub gcn2: Matrix,
    pub fc1: Matrix,
    pub fc1_bias: Vec<f64>,
    pub fc2: Matrix,
    pub fc2_bias: f64,
}

fn glorot(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform_range(-limit, limit)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized to fit")
}

impl AssessWeights {
    pub fn init(in_features: usize, base_len: usize, rng: &mut RngStream) -> Self {
        Self {
            gcn1: glorot(in_features, GCN_HIDDEN, rng),
            gcn2: glorot(GCN_HIDDEN, GCN_OUT, rng),
            fc1: glorot(GCN_OUT + base_len, FC_HIDDEN, rng),
            fc1_bias: vec![0.0; FC_HIDDEN],
            fc2: glorot(FC_HIDDEN, 1, rng),
            fc2_bias: 0.0,
        }
    }

    pub fn zeros(in_features: usize, base_len: usize) -> Self {
        Self {
            gcn1: Matrix::zeros(in_features, GCN_HIDDEN),
            gcn2: Matrix::zeros(GCN_HIDDEN, GCN_OUT),
            fc1: Matrix::zeros(GCN_OUT + base_len, FC_HIDDEN),
            fc1_bias: vec![0.0; FC_HIDDEN],
            fc2: Matrix::zeros(FC_HIDDEN, 1),
            fc2_bias: 0.0,
        }
    }

    pub fn in_features(&self) -> usize {
        self.gcn1.rows()
    }

    pub fn base_len(&self) -> usize {
        self.fc1.rows() - GCN_OUT
    }

    pub fn num_params(&self) -> usize {
        self.gcn1.data().len()
            + self.gcn2.data().len()
            + self.fc1.data().len()
            + self.fc1_bias.len()
            + self.fc2.data().len()
            + 1
    }

    /// All parameters in a fixed order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(self.gcn1.data());
        v.extend_from_slice(self.gcn2.data());
        v.extend_from_slice(self.fc1.data());
        v.extend_from_slice(&self.fc1_bias);
        v.extend_from_slice(self.fc2.data());
        v.push(self.fc2_bias);
        v
    }

    pub fn unflatten(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.num_params());
        let mut off = 0;
        for dst in [
            self.gcn1.data_mut(),
            self.gcn2.data_mut(),
            self.fc1.data_mut(),
            self.fc1_bias.as_mut_slice(),
            self.fc2.data_mut(),
        ] {
            let n = dst.len();
            dst.copy_from_slice(&v[off..off + n]);
            off += n;
        }
        self.fc2_bias = v[off];
    }
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `Â X`
    ax: Matrix,
    z1: Matrix,
    /// `Â relu(z1)`
    ah1: Matrix,
    /// `[embedding, base]` per row
    concat: Matrix,
    h3: Matrix,
    pub mask: Vec<f64>,
}

/// Mask in (0, 1) for every row. `features` is `n x in_features`.
pub fn forward_mask(w: &AssessWeights, g: &RowGraph, features: &Matrix, base: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_cached(w, g, features, base)?.mask)
}

pub fn forward_cached(
    w: &AssessWeights,
    g: &RowGraph,
    features: &Matrix,
    base: &[f64],
) -> Result<ForwardCache> {
    let n = features.rows();
    if features.cols() != w.in_features() {
        return Err(DelError::Shape(format!(
            "features have {} columns, network expects {}",
            features.cols(),
            w.in_features()
        )));
    }
    if base.len() != w.base_len() {
        return Err(DelError::Shape(format!(
            "base vector has {} entries, network expects {}",
            base.len(),
            w.base_len()
        )));
    }
    if g.n() != n {
        return Err(DelError::Shape(format!("graph has {} nodes for {n} rows", g.n())));
    }
    let ax = g.propagate(features);
    let z1 = matmul(&ax, &w.gcn1)?;
    let h1 = z1.map(|v| v.max(0.0));
    let ah1 = g.propagate(&h1);
    let emb = matmul(&ah1, &w.gcn2)?;
    let width = GCN_OUT + base.len();
    let mut concat = Matrix::zeros(n, width);
    for i in 0..n {
        let row = concat.row_mut(i);
        row[..GCN_OUT].copy_from_slice(emb.row(i));
        row[GCN_OUT..].copy_from_slice(base);
    }
    let mut h3 = matmul(&concat, &w.fc1)?;
    for i in 0..n {
        for (v, b) in h3.row_mut(i).iter_mut().zip(&w.fc1_bias) {
            *v = (*v + b).tanh();
        }
    }
    let z4 = matmul(&h3, &w.fc2)?;
    let mask = z4.data().iter().map(|&v| sigmoid(v + w.fc2_bias)).collect();
    Ok(ForwardCache {
        ax,
        z1,
        ah1,
        concat,
        h3,
        mask,
    })
}

/// Accumulates into `grad` the gradient of `sum_i d_mask[i] * mask[i]`.
pub fn backward(
    w: &AssessWeights,
    g: &RowGraph,
    cache: &ForwardCache,
    d_mask: &[f64],
    grad: &mut AssessWeights,
) -> Result<()> {
    let n = cache.mask.len();
    if n == 0 {
        return Ok(());
    }
    let dz4: Vec<f64> = cache
        .mask
        .iter()
        .zip(d_mask)
        .map(|(&m, &d)| d * m * (1.0 - m))
        .collect();
    let dz4m = Matrix::from_vec(n, 1, dz4.clone())?;
    grad.fc2.add_scaled(&matmul_tn(&cache.h3, &dz4m)?, 1.0)?;
    grad.fc2_bias += dz4.iter().sum::<f64>();

    let mut dz3 = matmul_nt(&dz4m, &w.fc2)?;
    for (d, h) in dz3.data_mut().iter_mut().zip(cache.h3.data()) {
        *d *= 1.0 - h * h;
    }
    grad.fc1.add_scaled(&matmul_tn(&cache.concat, &dz3)?, 1.0)?;
    for i in 0..n {
        for (b, d) in grad.fc1_bias.iter_mut().zip(dz3.row(i)) {
            *b += d;
        }
    }
    let dconcat = matmul_nt(&dz3, &w.fc1)?;
    let mut demb = Matrix::zeros(n, GCN_OUT);
    for i in 0..n {
        demb.row_mut(i).copy_from_slice(&dconcat.row(i)[..GCN_OUT]);
    }
    grad.gcn2.add_scaled(&matmul_tn(&cache.ah1, &demb)?, 1.0)?;
    let dah1 = matmul_nt(&demb, &w.gcn2)?;
    let mut dz1 = g.propagate(&dah1);
    for (d, z) in dz1.data_mut().iter_mut().zip(cache.z1.data()) {
        if *z <= 0.0 {
            *d = 0.0;
        }
    }
    grad.gcn1.add_scaled(&matmul_tn(&cache.ax, &dz1)?, 1.0)?;
    Ok(())
}

/// A sample prepared for the assessing network.
#[derive(Debug, Clone)]
pub struct AssessInput {
    pub graph: RowGraph,
    pub features: Matrix,
    pub base: Vec<f64>,
}

impl AssessInput {
    pub fn new(sample: &Sample, spec: &FeatureSpec, graph: RowGraph) -> Self {
        Self {
            graph,
            features: spec.encode_rows(sample),
            base: spec.encode_base(sample),
        }
    }
}

/// Mean squared error over all rows of the batch and its gradient.
pub fn mse_loss_and_grad(
    w: &AssessWeights,
    batch: &[(&AssessInput, &[f64])],
) -> Result<(f64, AssessWeights)> {
    let total_rows: usize = batch.iter().map(|(x, _)| x.features.rows()).sum();
    let mut grad = AssessWeights::zeros(w.in_features(), w.base_len());
    if total_rows == 0 {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / total_rows as f64;
    let mut loss = 0.0;
    for (input, target) in batch {
        if target.len() != input.features.rows() {
            return Err(DelError::Shape(format!(
                "target mask has {} entries for {} rows",
                target.len(),
                input.features.rows()
            )));
        }
        let cache = forward_cached(w, &input.graph, &input.features, &input.base)?;
        let d: Vec<f64> = cache
            .mask
            .iter()
            .zip(target.iter())
            .map(|(m, t)| {
                loss += (m - t) * (m - t) * scale;
                2.0 * (m - t) * scale
            })
            .collect();
        backward(w, &input.graph, &cache, &d, &mut grad)?;
    }
    Ok((loss, grad))
}

/// Assessing network, its preprocessing, and its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessModel {
    pub weights: AssessWeights,
    pub features: FeatureSpec,
    pub adam: AdamState,
}

impl AssessModel {
    pub fn new(features: FeatureSpec, learning_rate: f64, rng: &mut RngStream) -> Self {
        let weights = AssessWeights::init(features.width(), features.base_len(), rng);
        let adam = AdamState::new(weights.num_params(), learning_rate);
        Self {
            weights,
            features,
            adam,
        }
    }

    pub fn input(&self, sample: &Sample, graph: RowGraph) -> AssessInput {
        AssessInput::new(sample, &self.features, graph)
    }

    pub fn mask(&self, input: &AssessInput) -> Result<Vec<f64>> {
        forward_mask(&self.weights, &input.graph, &input.features, &input.base)
    }

    /// One Adam step on the batch MSE; returns the loss before the step.
    pub fn train_step(&mut self, batch: &[(&AssessInput, &[f64])]) -> Result<f64> {
        let (loss, grad) = mse_loss_and_grad(&self.weights, batch)?;
        let mut params = self.weights.flatten();
        adam_step(&mut self.adam, &mut params, &grad.flatten())?;
        self.weights.unflatten(&params);
        Ok(loss)
    }
}

#[derive(Serialize, Deserialize)]
struct EncodedMatrix {
    rows: usize,
    cols: usize,
    /// Little-endian f64 bytes, base64.
    data: String,
}

fn encode(m: &Matrix) -> EncodedMatrix {
    let bytes: Vec<u8> = m.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    EncodedMatrix {
        rows: m.rows(),
        cols: m.cols(),
        data: B64.encode(bytes),
    }
}

fn decode(e: EncodedMatrix) -> std::result::Result<Matrix, String> {
    let bytes = B64.decode(e.data).map_err(|err| err.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err("matrix payload is not a whole number of f64 values".into());
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Matrix::from_vec(e.rows, e.cols, data).map_err(|err| err.to_string())
}

#[derive(Serialize, Deserialize)]
struct WeightsDoc {
    gcn1: EncodedMatrix,
    gcn2: EncodedMatrix,
    fc1: EncodedMatrix,
    fc1_bias: EncodedMatrix,
    fc2: EncodedMatrix,
    fc2_bias: f64,
}

impl Serialize for AssessWeights {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let bias = Matrix::from_vec(1, self.fc1_bias.len(), self.fc1_bias.clone())
            .expect("bias row");
        WeightsDoc {
            gcn1: encode(&self.gcn1),
            gcn2: encode(&self.gcn2),
            fc1: encode(&self.fc1),
            fc1_bias: encode(&bias),
            fc2: encode(&self.fc2),
            fc2_bias: self.fc2_bias,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AssessWeights {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let doc = WeightsDoc::deserialize(d)?;
        let w = AssessWeights {
            gcn1: decode(doc.gcn1).map_err(D::Error::custom)?,
            gcn2: decode(doc.gcn2).map_err(D::Error::custom)?,
            fc1: decode(doc.fc1).map_err(D::Error::custom)?,
            fc1_bias: decode(doc.fc1_bias).map_err(D::Error::custom)?.into_vec(),
            fc2: decode(doc.fc2).map_err(D::Error::custom)?,
            fc2_bias: doc.fc2_bias,
        };
        let consistent = w.gcn1.cols() == GCN_HIDDEN
            && w.gcn2.rows() == GCN_HIDDEN
            && w.gcn2.cols() == GCN_OUT
            && w.fc1.rows() >= GCN_OUT
            && w.fc1.cols() == FC_HIDDEN
            && w.fc1_bias.len() == FC_HIDDEN
            && w.fc2.rows() == FC_HIDDEN
            && w.fc2.cols() == 1;
        if !consistent {
            return Err(D::Error::custom("assess weights have inconsistent shapes"));
        }
        Ok(w)
    }
}
