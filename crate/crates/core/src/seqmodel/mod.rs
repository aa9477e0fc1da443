//! A small trainable encoder-decoder for the unified sequence formulation:
//! text plus diagram embeddings in, target sequences out, trained with the
//! mean negative log-likelihood and decoded with beam search.

mod beam;
mod checkpoint;
mod diagram;
mod model;
mod tape;
mod tensor;
mod train;

pub use beam::{beam_search, greedy_decode, Beam};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use diagram::{
    embed_diagram_file, DiagramEmbedding, DiagramError, DiagramProvenance, PatchFeaturizer,
    IMAGE_SIDE, PATCH_GRID, PATCH_SIDE,
};
pub use model::{sequence_loss, ModelConfig, ModelError, Param, Parameters, SeqModel};
pub use tape::LOG_EPS;
pub use tensor::Tensor;
pub use train::{
    train, TaskKind, TaskMix, TrainConfig, TrainError, TrainLog, TrainSample, TrainSession,
};
