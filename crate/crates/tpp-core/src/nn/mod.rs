//! Dense numerical kernel: Adam, the classification and contrastive
//! losses, the frozen SGC backbone, and its contrastive pretraining loop.
//! Gradients are hand-derived per op (the model is a short linear chain)
//! and checked against central finite differences in the test suites.

mod adam;
mod loss;
mod pretrain;
mod sgc;

pub use adam::{adam_step, AdamParams, AdamState};
pub use loss::{cross_entropy_loss, ntxent_loss, softmax_rows};
pub use pretrain::{pretrain_backbone, PretrainOutcome, TrainConfig};
pub use sgc::{
    sgc_backward, sgc_forward, sgc_forward_trace, weights_hash, xavier_uniform, ProjectionHead,
    SgcBackbone, SgcGrads, SgcTrace,
};
