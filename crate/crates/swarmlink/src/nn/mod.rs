//! Minimal differentiable numeric kernel: dense layers, layer norm,
//! temperature softmax, squashed-Gaussian policy math, Adam, and parameter
//! serialization. Everything runs on 64-bit floats; the 32-bit widths in the
//! communication model describe wire payload accounting only.

pub mod adam;
pub mod checkpoint;
pub mod gaussian;
pub mod layers;
pub mod softmax;
pub mod tensor;

pub use adam::{soft_update, AdamState};
pub use checkpoint::{load_blocks, save_blocks, ParamBlock};
pub use gaussian::{
    gaussian_policy_backward, gaussian_policy_sample, gaussian_policy_with_noise, squashed_mean,
    GaussianSample, LOG_STD_MAX, LOG_STD_MIN,
};
pub use layers::{linear_norm, single_dense, Activation, DenseLayer, Layer, LayerGrads, Mlp, MlpGrads, MlpTape, NormLayer};
pub use softmax::{softmax_temp, softmax_temp_backward};
pub use tensor::{matmul, matmul_transa, matmul_transb, Tensor2};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("softmax over an all-masked vector")]
    AllMasked,
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Collect named parameter blocks from an [`Mlp`], prefixing each block name.
pub fn mlp_blocks(prefix: &str, mlp: &Mlp) -> Vec<ParamBlock> {
    let mut out = Vec::new();
    for (i, layer) in mlp.layers().iter().enumerate() {
        match layer {
            Layer::Dense(d) => {
                out.push(ParamBlock::new(
                    format!("{prefix}/l{i}/w"),
                    vec![d.weights.rows() as u32, d.weights.cols() as u32],
                    d.weights.data().to_vec(),
                ));
                out.push(ParamBlock::new(
                    format!("{prefix}/l{i}/b"),
                    vec![d.bias.len() as u32],
                    d.bias.clone(),
                ));
            }
            Layer::Norm(n) => {
                out.push(ParamBlock::new(
                    format!("{prefix}/l{i}/gain"),
                    vec![n.gain.len() as u32],
                    n.gain.clone(),
                ));
                out.push(ParamBlock::new(
                    format!("{prefix}/l{i}/shift"),
                    vec![n.shift.len() as u32],
                    n.shift.clone(),
                ));
            }
        }
    }
    out
}

/// Gradient blocks in the same order and naming as [`mlp_blocks`].
pub fn mlp_grad_blocks(prefix: &str, grads: &MlpGrads) -> Vec<ParamBlock> {
    let mut out = Vec::new();
    for (i, layer) in grads.layers.iter().enumerate() {
        match layer {
            LayerGrads::Dense { weights, bias } => {
                out.push(ParamBlock::new(
                    format!("{prefix}/l{i}/w"),
                    vec![weights.rows() as u32, weights.cols() as u32],
                    weights.data().to_vec(),
                ));
                out.push(ParamBlock::new(
                    format!("{prefix}/l{i}/b"),
                    vec![bias.len() as u32],
                    bias.clone(),
                ));
            }
            LayerGrads::Norm { gain, shift } => {
                out.push(ParamBlock::new(
                    format!("{prefix}/l{i}/gain"),
                    vec![gain.len() as u32],
                    gain.clone(),
                ));
                out.push(ParamBlock::new(
                    format!("{prefix}/l{i}/shift"),
                    vec![shift.len() as u32],
                    shift.clone(),
                ));
            }
        }
    }
    out
}

/// Restore an [`Mlp`]'s parameters from named blocks produced by
/// [`mlp_blocks`] with the same prefix and architecture.
pub fn load_mlp(prefix: &str, mlp: &mut Mlp, blocks: &[ParamBlock]) -> Result<(), NnError> {
    let find = |name: String| -> Result<&ParamBlock, NnError> {
        blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| NnError::BadCheckpoint(format!("missing block {name}")))
    };
    for (i, layer) in mlp.layers_mut().iter_mut().enumerate() {
        match layer {
            Layer::Dense(d) => {
                let w = find(format!("{prefix}/l{i}/w"))?;
                if w.data.len() != d.weights.data().len() {
                    return Err(NnError::ShapeMismatch {
                        expected: d.weights.data().len(),
                        got: w.data.len(),
                    });
                }
                d.weights.data_mut().copy_from_slice(&w.data);
                let b = find(format!("{prefix}/l{i}/b"))?;
                if b.data.len() != d.bias.len() {
                    return Err(NnError::ShapeMismatch { expected: d.bias.len(), got: b.data.len() });
                }
                d.bias.copy_from_slice(&b.data);
            }
            Layer::Norm(n) => {
                let g = find(format!("{prefix}/l{i}/gain"))?;
                let s = find(format!("{prefix}/l{i}/shift"))?;
                if g.data.len() != n.gain.len() || s.data.len() != n.shift.len() {
                    return Err(NnError::ShapeMismatch { expected: n.gain.len(), got: g.data.len() });
                }
                n.gain.copy_from_slice(&g.data);
                n.shift.copy_from_slice(&s.data);
            }
        }
    }
    Ok(())
}
