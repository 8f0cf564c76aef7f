//! Write a matrix as NPY, read it back, and show the header numpy will see.
//!
//! cargo run --example npy_io [path]

use solar::format::{encode_npy, read_npy, write_npy};
use solar::linalg::DenseMatrix;

fn main() -> solar::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("solar_example.npy"), Into::into);
    let m = DenseMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 / 8.0);
    write_npy(&path, &m)?;
    let back = read_npy(&path)?;
    assert_eq!(back, m);

    let bytes = encode_npy(&m);
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    println!("{}: {} bytes", path.display(), bytes.len());
    println!("header: {}", String::from_utf8_lossy(&bytes[10..10 + header_len]).trim_end());
    println!("row 2: {:?}", back.row(2));
    Ok(())
}
