//! Minimal trainable neural core: a reverse-mode tape over dense f64
//! matrices, GRU/LSTM cells and bidirectional runners, a linear-chain CRF,
//! Adam, and a batch-size-1 training loop. Everything is seeded explicitly
//! and runs in double precision.

pub mod crf;
pub mod layers;
pub mod optim;
pub mod store;
pub mod tape;
pub mod tensor;
pub mod train;

pub use crf::CrfScores;
pub use layers::{BiGru, BiLstm, CharCnn, Dense, GruCell, LstmCell};
pub use optim::{Adam, AdamConfig};
pub use store::{seeded_rng, Param, ParamId, ParamStore};
pub use tape::{NodeId, Tape};
pub use tensor::Matrix;
pub use train::{run_epochs, TrainConfig};
