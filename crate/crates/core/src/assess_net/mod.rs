//! Data assessing network: a two-layer GCN over the row graph, the base
//! vector concatenated per row, and a tanh/sigmoid head emitting a mask.

mod features;
mod graph;
mod model;

pub use features::{ColumnEncoding, FeatureSpec};
pub use graph::{build_graph, sample_graph, RowGraph};
pub use model::{
    backward, forward_cached, forward_mask, mse_loss_and_grad, AssessInput, AssessModel,
    AssessWeights, ForwardCache, FC_HIDDEN, GCN_HIDDEN, GCN_OUT,
};
