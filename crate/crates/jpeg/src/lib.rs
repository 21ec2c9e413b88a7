//! Baseline JPEG codec with a partial decoder that stops at the quantized
//! DCT coefficients.
//!
//! The encoder follows the classic pipeline: 8x8 splitting, level shift,
//! color transform (RGB input only), forward DCT, quantization, zig-zag
//! serialization, DPCM of DC values, run-length coding of AC values and
//! Huffman coding with the standard default tables. Streams are plain
//! JFIF files readable by any baseline decoder.

pub mod bits;
pub mod block;
pub mod codec;
pub mod coeffs;
pub mod color;
pub mod dct;
pub mod dpcm;
pub mod entropy;
pub mod error;
pub mod huffman;
pub mod image;
pub mod quant;
pub mod rle;
pub mod stream;
pub mod zigzag;

pub use block::{merge_blocks, split_blocks, Block8, CoefficientBlock};
pub use codec::{
    compression_ratio, decode_coefficients, decode_image, encode_image, encode_image_padded,
    encode_image_with_coefficients, partial_decode, quantize_plane, reconstruct_plane,
};
pub use coeffs::{parse_dump, write_dump, CoefficientTensor, DumpRecord};
pub use color::{rgb_to_ycbcr, ycbcr_to_rgb};
pub use dct::{fdct_8x8, idct_8x8};
pub use dpcm::{dpcm_decode, dpcm_encode};
pub use entropy::{entropy_decode, entropy_encode, ComponentTables};
pub use error::{JpegError, Result};
pub use huffman::{HuffTable, TableClass};
pub use image::PixelImage;
pub use quant::{dequantize_block, quantize_block, scale_quant_table, QuantTable, TableKind};
pub use rle::{inverse_rle_ac, rle_ac, RunLength};
pub use stream::{write_stream, CoefficientImage, JpegStream};
pub use zigzag::{inverse_zigzag, zigzag_scan, ZIGZAG};
