pub(crate) mod codec;
pub mod bench;
pub mod density;
pub mod embed;
pub mod error;
pub mod graph_dtw;
pub mod index;
pub mod rag;
pub mod reorg;
pub mod scenario;

pub use error::{Error, Result};
