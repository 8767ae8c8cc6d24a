//! Decoder-only expression generator with attention in DCT frequency space.

pub mod checkpoint;
pub mod dct;
pub mod mat;
pub mod model;
pub mod params;

pub use dct::{clip_frequencies, dct_forward, dct_matrix, freq_attention, idct_restore};
pub use mat::Mat;
pub use model::{Actor, Context, Forward};
pub use params::{ModelConfig, ParamLayout};
