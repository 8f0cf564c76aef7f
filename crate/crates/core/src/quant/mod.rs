//! Coefficient quantization and footprint accounting.

mod footprint;
mod quantize;

pub use footprint::{
    footprint_bytes, footprint_nola, footprint_params, footprint_params_lora, preset, presets,
    solar_params, AccountingMode, FootprintPreset, FootprintReport, FootprintScheme, FootprintTerm,
    LoraGroup,
};
pub use quantize::{check_bits, dequantize, pack_codes, quantize, unpack_codes, QuantizedVector, SUPPORTED_BITS};
