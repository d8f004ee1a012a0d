//! GCN and SGC models with hand-derived gradients, the cross-entropy task
//! loss and the training loop used to score any structure.

mod gcn;
mod loss;
mod sgc;
mod train;

pub use gcn::{GcnCache, GcnGrads, GcnModel};
pub use loss::{accuracy, argmax, cross_entropy};
pub use sgc::SgcModel;
pub use train::{fit, train, train_sgc, Fit, TrainConfig, TrainReport};
pub(crate) use train::add_weight_decay;
