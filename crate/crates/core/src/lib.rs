//! Quantized inference and multi-level speculative decoding.
//!
//! * [`mxfp4`]: MXFP4 block codec (E2M1 elements, E8M0 scales, 32-element blocks).
//! * [`qgemm`]: reference, late-scaling `f32` and int8 lookup-table GEMM kernels.
//! * [`tinylm`]: seeded decoder-only transformer with a KV cache.
//! * [`specdec`]: greedy, speculative and recursive multi-level decoding.
//! * [`analytics`]: closed-form speedup and roofline models.
//! * [`io`]: binary tensor/model files, prompt files and run reports.

pub mod analytics;
pub mod error;
pub mod io;
pub mod mxfp4;
pub mod qgemm;
pub mod specdec;
pub mod tensor;
pub mod tinylm;

pub use error::{Error, Result};
pub use mxfp4::{
    dequantize, fp4_decode, fp4_encode, fp4_to_int8_lut, quantize_direct_cast, E8m0Scale,
    Fp4Code, Layout, MxfpBlock, MxfpTensor, BLOCK_SIZE,
};
pub use qgemm::{
    gemm_mxfp4_int8, gemm_mxfp4_latescale_f32, gemm_reference, quantize_activations, GemmPath,
    GemmShape, QuantizedActivationPanel,
};
pub use specdec::{
    greedy_generate, speculative_generate, AcceptanceStats, GenerationConfig, LevelSpec,
    RoundRecord, SpecTree,
};
pub use tensor::Matrix;
pub use tinylm::{greedy_next, ExecOptions, KvCache, LmConfig, TinyLmModel};

/// Byte-level tokenizer: ids 0..=255 are bytes, then BOS and EOS.
pub const BOS_TOKEN: u32 = 256;
pub const EOS_TOKEN: u32 = 257;
pub const BYTE_VOCAB_SIZE: usize = 258;

/// Maps text to byte tokens.
pub fn encode_bytes(text: &str) -> Vec<u32> {
    text.bytes().map(u32::from).collect()
}

/// Maps byte tokens back to text; special ids are dropped.
pub fn decode_bytes(tokens: &[u32]) -> String {
    let bytes: Vec<u8> = tokens
        .iter()
        .filter(|&&t| t < 256)
        .map(|&t| t as u8)
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}
