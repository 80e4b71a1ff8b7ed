//! Binary checkpoint format.
//!
//! Layout (all integers and floats little-endian):
//!   magic   4 bytes  "CCNN"
//!   version u16      currently 1
//!   layers  u16
//!   per layer:
//!     rows  u32
//!     cols  u32
//!     W     rows*cols f64, row-major
//!     b     cols f64
//!
//! Velocity buffers are not persisted; loading resets them to zero.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{LayerParams, NetworkParams};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"CCNN";
const VERSION: u16 = 1;

pub fn write_checkpoint<W: Write>(params: &NetworkParams, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let count = u16::try_from(params.layers.len())
        .map_err(|_| Error::Checkpoint("too many layers".into()))?;
    out.write_all(&count.to_le_bytes())?;
    for layer in &params.layers {
        let (rows, cols) = layer.weights.shape();
        out.write_all(&(rows as u32).to_le_bytes())?;
        out.write_all(&(cols as u32).to_le_bytes())?;
        for v in layer.weights.data() {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in &layer.bias {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<NetworkParams> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u16(&mut input)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u16(&mut input)? as usize;
    if count == 0 {
        return Err(Error::Checkpoint("zero layers".into()));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = read_u32(&mut input)? as usize;
        let cols = read_u32(&mut input)? as usize;
        if rows == 0 || cols == 0 {
            return Err(Error::Checkpoint(format!("bad layer shape {rows}x{cols}")));
        }
        let mut data = vec![0.0f64; rows * cols];
        for v in data.iter_mut() {
            *v = read_f64(&mut input)?;
        }
        let mut bias = vec![0.0f64; cols];
        for v in bias.iter_mut() {
            *v = read_f64(&mut input)?;
        }
        layers.push(LayerParams {
            weights: Matrix::from_vec(rows, cols, data)?,
            bias,
        });
    }
    NetworkParams::from_layers(layers)
}

pub fn save(params: &NetworkParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<NetworkParams> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(bytes.as_slice())
}

fn read_u16<R: Read>(input: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    input.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_network;

    #[test]
    fn round_trip_is_bit_exact() {
        let params = init_network(&[7, 5, 3], 0.05, 99).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();
        let loaded = read_checkpoint(buf.as_slice()).unwrap();
        for (a, b) in params.layers.iter().zip(&loaded.layers) {
            let bits_a: Vec<u64> = a.weights.data().iter().map(|x| x.to_bits()).collect();
            let bits_b: Vec<u64> = b.weights.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
            assert_eq!(a.bias, b.bias);
        }
        let mut buf2 = Vec::new();
        write_checkpoint(&loaded, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn header_layout() {
        let params = init_network(&[2, 3], 0.0, 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();
        assert_eq!(&buf[0..4], b"CCNN");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(u16::from_le_bytes([buf[6], buf[7]]), 1);
        assert_eq!(u32::from_le_bytes([buf[8], buf[9], buf[10], buf[11]]), 2);
        assert_eq!(u32::from_le_bytes([buf[12], buf[13], buf[14], buf[15]]), 3);
        assert_eq!(buf.len(), 8 + 8 + 8 * (6 + 3));
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(read_checkpoint(&b"XXNN\x01\x00\x01\x00"[..]).is_err());
        let params = init_network(&[2, 3], 0.0, 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();
        buf.truncate(buf.len() - 4);
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }
}
