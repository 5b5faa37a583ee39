pub mod error;
pub mod neural;
pub mod archive;
pub mod coderec;
pub mod corpus;
pub mod eval;
pub mod lm;
pub mod segmenter;
pub mod signals;
pub mod synth;
pub mod tokenizer;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
