//! Byte-level storage: the `.solar` artifact container and NPY matrices.

mod npy;
mod solar;

pub use npy::{decode_npy, encode_npy, read_npy, write_npy};
pub use solar::{
    decode, encode, file_accounting, read_solar, write_solar, FLAG_FINGERPRINT, FLAG_RANDOM_BASIS,
    FLAG_REFIT, HEADER_LEN, MAGIC, VERSION,
};
