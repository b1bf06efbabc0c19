//! Pooling-unpooling GCN over a [`GraphHierarchy`].
//!
//! The pooling branch runs one block per level, summing member rows into
//! supernodes between levels (`Mᵀ H`). The unpooling branch walks back down,
//! copying each supernode row to its members (`M U`), refining with its own
//! block and adding the pooling-branch output of the same level. The bottom
//! level's block is shared by both branches, so `L` levels with `S` layers
//! per block give `(2L - 1) S` GCN layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarsen::{GraphHierarchy, MatchingMatrix};
use crate::graph::AdjacencyMatrix;
use crate::numeric::{Matrix, NumericError, Parameter, Tape, Var};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("model expects {expected} graph levels, hierarchy has {found}")]
    LevelMismatch { expected: usize, found: usize },
    #[error("input has {found} columns, model expects {expected}")]
    InputWidth { expected: usize, found: usize },
    #[error("input has {rows} rows but level 0 has {nodes} nodes")]
    InputRows { rows: usize, nodes: usize },
    #[error("matching maps {matching} nodes, features have {rows} rows")]
    MatchingRows { matching: usize, rows: usize },
    #[error("invalid model configuration: {0}")]
    Config(String),
}

/// How member rows are combined into a supernode row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    #[default]
    Sum,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: usize,
    /// Number of graph levels (one more than pooling steps).
    pub levels: usize,
    /// GCN layers per block.
    pub sublayers: usize,
    #[serde(default)]
    pub pool_mode: PoolMode,
    #[serde(default)]
    pub dropout: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.levels == 0 || self.sublayers == 0 {
            return Err(ModelError::Config("levels and sublayers must be >= 1".into()));
        }
        if self.input_dim == 0 || self.hidden == 0 {
            return Err(ModelError::Config("widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl GcnLayer {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        GcnLayer {
            weight: Parameter::new(Matrix::zeros(d_in, d_out)),
            bias: Parameter::new(Matrix::zeros(1, d_out)),
        }
    }

    /// `ReLU(A H W + 1 b)` on plain matrices.
    pub fn apply(&self, a: &Matrix, h: &Matrix) -> Result<Matrix, ModelError> {
        Ok(a
            .matmul(h)?
            .matmul(&self.weight.value)?
            .add_row_broadcast(&self.bias.value)?
            .relu())
    }
}

/// `S` stacked layers sharing one adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnBlock {
    pub layers: Vec<GcnLayer>,
}

impl GcnBlock {
    pub fn new(d_in: usize, d_out: usize, sublayers: usize) -> Self {
        let layers = (0..sublayers)
            .map(|i| GcnLayer::zeros(if i == 0 { d_in } else { d_out }, d_out))
            .collect();
        GcnBlock { layers }
    }

    fn params(&self) -> impl Iterator<Item = &Parameter> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }
}

/// Applies a block to plain matrices. The adjacency is used verbatim:
/// integer weights and coarsening diagonals included, no normalization.
pub fn gcn_block_forward(
    block: &GcnBlock,
    a: &AdjacencyMatrix,
    h_in: &Matrix,
) -> Result<Matrix, ModelError> {
    if a.size() != h_in.rows() {
        return Err(ModelError::InputRows {
            rows: h_in.rows(),
            nodes: a.size(),
        });
    }
    let a = adjacency_matrix(a);
    let mut h = h_in.clone();
    for layer in &block.layers {
        h = layer.apply(&a, &h)?;
    }
    Ok(h)
}

pub fn adjacency_matrix(a: &AdjacencyMatrix) -> Matrix {
    Matrix::from_vec(a.size(), a.size(), a.to_f64()).expect("square")
}

/// Supernode row = sum of its members' rows (`Mᵀ H`).
pub fn pool_features(m: &MatchingMatrix, h_out: &Matrix) -> Result<Matrix, ModelError> {
    if m.n_fine() != h_out.rows() {
        return Err(ModelError::MatchingRows {
            matching: m.n_fine(),
            rows: h_out.rows(),
        });
    }
    let mut out = Matrix::zeros(m.n_coarse(), h_out.cols());
    for (i, &s) in m.assignment().iter().enumerate() {
        for (o, &v) in out.row_mut(s).iter_mut().zip(h_out.row(i)) {
            *o += v;
        }
    }
    Ok(out)
}

/// Fine row = copy of its supernode's row (`M U`).
pub fn unpool_features(m: &MatchingMatrix, u_out: &Matrix) -> Result<Matrix, ModelError> {
    if m.n_coarse() != u_out.rows() {
        return Err(ModelError::MatchingRows {
            matching: m.n_coarse(),
            rows: u_out.rows(),
        });
    }
    let mut out = Matrix::zeros(m.n_fine(), u_out.cols());
    for (i, &s) in m.assignment().iter().enumerate() {
        out.row_mut(i).copy_from_slice(u_out.row(s));
    }
    Ok(out)
}

pub fn residual_combine(u_tilde: &Matrix, h_out: &Matrix) -> Result<Matrix, ModelError> {
    Ok(u_tilde.add(h_out)?)
}

/// Intermediate representations of one forward pass, indexed by level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForwardTrace {
    pub h_in: Vec<Matrix>,
    pub h_out: Vec<Matrix>,
    /// `None` at the top level, where the unpooling branch starts.
    pub u_in: Vec<Option<Matrix>>,
    pub u_tilde: Vec<Option<Matrix>>,
    pub u_out: Vec<Matrix>,
}

/// Randomness for training-time dropout. `None` means inference.
pub type DropoutRng<'a> = Option<&'a mut ChaCha8Rng>;

#[derive(Clone, Debug, PartialEq)]
pub struct MrGcn {
    config: ModelConfig,
    /// Pooling-branch blocks, level 0 to `L - 1`.
    pub down: Vec<GcnBlock>,
    /// Unpooling-branch blocks indexed by level, `0..L - 1`.
    pub up: Vec<GcnBlock>,
}

impl MrGcn {
    /// Zero-initialized model; call [`MrGcn::init_parameters`] before use.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (d_in, d, s) = (config.input_dim, config.hidden, config.sublayers);
        let down = (0..config.levels)
            .map(|l| GcnBlock::new(if l == 0 { d_in } else { d }, d, s))
            .collect();
        let up = (0..config.levels - 1).map(|_| GcnBlock::new(d, d, s)).collect();
        Ok(MrGcn { config, down, up })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.config.hidden
    }

    pub fn layer_count(&self) -> usize {
        self.down
            .iter()
            .chain(&self.up)
            .map(|b| b.layers.len())
            .sum()
    }

    /// Blocks in execution order: pooling branch bottom-up, then the
    /// unpooling branch top-down.
    fn blocks(&self) -> impl Iterator<Item = &GcnBlock> {
        self.down.iter().chain(self.up.iter().rev())
    }

    /// Parameters in checkpoint order: block order, then layer order, then
    /// `(W, b)`.
    pub fn params(&self) -> Vec<&Parameter> {
        self.blocks().flat_map(GcnBlock::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.down
            .iter_mut()
            .chain(self.up.iter_mut().rev())
            .flat_map(GcnBlock::params_mut)
            .collect()
    }

    /// Glorot-uniform weights in `±sqrt(6 / (d_in + d_out))`, zero biases.
    pub fn init_parameters(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in self.down.iter_mut().chain(self.up.iter_mut().rev()) {
            for layer in &mut block.layers {
                glorot_uniform(&mut layer.weight, &mut rng);
                layer.bias = Parameter::new(Matrix::zeros(1, layer.bias.shape().1));
            }
        }
    }

    fn check_inputs(&self, h: &GraphHierarchy, x_shape: (usize, usize)) -> Result<(), ModelError> {
        if h.level_count() != self.config.levels {
            return Err(ModelError::LevelMismatch {
                expected: self.config.levels,
                found: h.level_count(),
            });
        }
        if x_shape.1 != self.config.input_dim {
            return Err(ModelError::InputWidth {
                expected: self.config.input_dim,
                found: x_shape.1,
            });
        }
        if x_shape.0 != h.levels[0].size() {
            return Err(ModelError::InputRows {
                rows: x_shape.0,
                nodes: h.levels[0].size(),
            });
        }
        Ok(())
    }

    /// Records every parameter on `tape`, in [`MrGcn::params`] order.
    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>, ModelError> {
        self.params()
            .into_iter()
            .map(|p| tape.leaf(p.value.clone()).map_err(Into::into))
            .collect()
    }

    /// Differentiable forward pass. `bound` comes from [`MrGcn::bind`] on
    /// the same tape.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        h: &GraphHierarchy,
        x: Var,
        mut dropout: DropoutRng<'_>,
    ) -> Result<(Var, ForwardTrace), ModelError> {
        self.check_inputs(h, tape.value(x).shape())?;
        let levels = self.config.levels;
        let adj: Vec<Var> = h
            .levels
            .iter()
            .map(|l| tape.leaf(adjacency_matrix(&l.adjacency)))
            .collect::<Result<_, _>>()?;

        // parameter vars per block in execution order
        let per_block = 2 * self.config.sublayers;
        let block_vars = |i: usize| &bound[i * per_block..(i + 1) * per_block];

        let mut trace = ForwardTrace {
            u_in: vec![None; levels],
            u_tilde: vec![None; levels],
            ..Default::default()
        };
        let mut h_out_vars = Vec::with_capacity(levels);
        let mut cur = x;
        for l in 0..levels {
            if l > 0 {
                cur = self.pool_on_tape(tape, &h.matchings[l - 1], h_out_vars[l - 1])?;
            }
            trace.h_in.push(tape.value(cur).clone());
            cur = self.block_on_tape(tape, block_vars(l), adj[l], cur, dropout.as_deref_mut())?;
            trace.h_out.push(tape.value(cur).clone());
            h_out_vars.push(cur);
        }

        let mut u_out = vec![None; levels];
        u_out[levels - 1] = Some(h_out_vars[levels - 1]);
        for (k, l) in (0..levels - 1).rev().enumerate() {
            let upper = u_out[l + 1].unwrap();
            let u_in = tape.gather(upper, h.matchings[l].assignment())?;
            let u_tilde = self.block_on_tape(
                tape,
                block_vars(levels + k),
                adj[l],
                u_in,
                dropout.as_deref_mut(),
            )?;
            let out = tape.add(u_tilde, h_out_vars[l])?;
            trace.u_in[l] = Some(tape.value(u_in).clone());
            trace.u_tilde[l] = Some(tape.value(u_tilde).clone());
            u_out[l] = Some(out);
        }
        trace.u_out = u_out
            .iter()
            .map(|v| tape.value(v.unwrap()).clone())
            .collect();
        Ok((u_out[0].unwrap(), trace))
    }

    fn pool_on_tape(
        &self,
        tape: &mut Tape,
        m: &MatchingMatrix,
        h: Var,
    ) -> Result<Var, ModelError> {
        if m.n_fine() != tape.value(h).rows() {
            return Err(ModelError::MatchingRows {
                matching: m.n_fine(),
                rows: tape.value(h).rows(),
            });
        }
        let summed = tape.segment_sum(h, m.assignment(), m.n_coarse())?;
        match self.config.pool_mode {
            PoolMode::Sum => Ok(summed),
            PoolMode::Mean => {
                let inv: Vec<f64> = m.cluster_sizes().iter().map(|&s| 1.0 / s as f64).collect();
                Ok(tape.scale_rows(summed, &inv)?)
            }
        }
    }

    fn block_on_tape(
        &self,
        tape: &mut Tape,
        params: &[Var],
        a: Var,
        mut h: Var,
        dropout: DropoutRng<'_>,
    ) -> Result<Var, ModelError> {
        for wb in params.chunks(2) {
            let ah = tape.matmul(a, h)?;
            let z = tape.matmul(ah, wb[0])?;
            let z = tape.add_row(z, wb[1])?;
            h = tape.relu(z)?;
        }
        if let Some(rng) = dropout {
            let p = self.config.dropout;
            if p > 0.0 {
                let (r, c) = tape.value(h).shape();
                let keep = 1.0 / (1.0 - p);
                let mask: Vec<f64> = (0..r * c)
                    .map(|_| if rng.gen_bool(p) { 0.0 } else { keep })
                    .collect();
                h = tape.mul_const(h, Matrix::from_vec(r, c, mask)?)?;
            }
        }
        Ok(h)
    }

    /// Inference-mode forward pass on plain matrices.
    pub fn forward(
        &self,
        h: &GraphHierarchy,
        x: &Matrix,
    ) -> Result<(Matrix, ForwardTrace), ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape)?;
        let xv = tape.leaf(x.clone())?;
        let (out, trace) = self.forward_on_tape(&mut tape, &bound, h, xv, None)?;
        Ok((tape.value(out).clone(), trace))
    }
}

pub(crate) fn glorot_uniform(p: &mut Parameter, rng: &mut ChaCha8Rng) {
    let (r, c) = p.shape();
    let bound = (6.0 / (r + c) as f64).sqrt();
    for v in p.value.data_mut() {
        *v = rng.gen_range(-bound..=bound);
    }
    p.zero_grad();
}
