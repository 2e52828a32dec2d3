//! GFT binary tensor format.
//!
//! Layout: magic "GFT1" (4 bytes), u8 dtype code (0 = real64,
//! 1 = complex128), u8 rank, rank x u64 little-endian extents, then the
//! payload as little-endian 64-bit floats in row-major order, complex
//! interleaved (re, im). Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Dtype, Tensor};

const MAGIC: &[u8; 4] = b"GFT1";

/// Hard cap on payload lanes; anything larger is treated as a corrupt header.
const MAX_LANES: u64 = 1 << 31;

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC).map_err(io_err)?;
    let code: u8 = match t.dtype() {
        Dtype::Real => 0,
        Dtype::Complex => 1,
    };
    w.write_all(&[code]).map_err(io_err)?;
    let rank = t.rank();
    assert!(rank <= u8::MAX as usize, "rank too large for GFT header");
    w.write_all(&[rank as u8]).map_err(io_err)?;
    for &e in t.shape() {
        w.write_all(&(e as u64).to_le_bytes()).map_err(io_err)?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path, "header")?;
    if &magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }

    let mut head = [0u8; 2];
    read_exact(&mut r, &mut head, path, "header")?;
    let dtype = match head[0] {
        0 => Dtype::Real,
        1 => Dtype::Complex,
        code => {
            return Err(Error::BadDtypeCode {
                code,
                path: path.to_path_buf(),
            })
        }
    };
    let rank = head[1] as usize;

    let mut shape = Vec::with_capacity(rank);
    let mut lanes: u64 = dtype.lanes() as u64;
    for _ in 0..rank {
        let mut buf = [0u8; 8];
        read_exact(&mut r, &mut buf, path, "extents")?;
        let e = u64::from_le_bytes(buf);
        if e == 0 {
            return Err(Error::ExtentOverflow {
                path: path.to_path_buf(),
                detail: "zero extent".into(),
            });
        }
        lanes = lanes.checked_mul(e).ok_or_else(|| Error::ExtentOverflow {
            path: path.to_path_buf(),
            detail: format!("extent product overflows u64 at extent {e}"),
        })?;
        if lanes > MAX_LANES {
            return Err(Error::ExtentOverflow {
                path: path.to_path_buf(),
                detail: format!("payload of {lanes} lanes exceeds the format cap"),
            });
        }
        shape.push(e as usize);
    }

    let mut data = vec![0.0f64; lanes as usize];
    let mut buf = [0u8; 8];
    for v in data.iter_mut() {
        read_exact(&mut r, &mut buf, path, "payload")?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(Tensor::from_raw(dtype, &shape, data))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path, _what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated {
                path: path.to_path_buf(),
                expected: buf.len() as u64,
            }
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::numel_of;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("gft-test-{}-{}", std::process::id(), name));
        p
    }

    #[test]
    fn round_trip_real() {
        let mut rng = Rng::new(1);
        let n = numel_of(&[3, 2, 5]);
        let t = Tensor::from_real(&[3, 2, 5], (0..n).map(|_| rng.normal()).collect());
        let p = tmp("real");
        write_tensor(&t, &p).unwrap();
        let back = read_tensor(&p).unwrap();
        std::fs::remove_file(&p).ok();
        assert_eq!(t, back);
    }

    #[test]
    fn round_trip_complex() {
        let mut rng = Rng::new(2);
        let vals: Vec<Complex64> = (0..12)
            .map(|_| Complex64::new(rng.normal(), rng.normal()))
            .collect();
        let t = Tensor::from_complex(&[4, 3], vals);
        let p = tmp("complex");
        write_tensor(&t, &p).unwrap();
        let back = read_tensor(&p).unwrap();
        std::fs::remove_file(&p).ok();
        assert_eq!(t, back);
    }

    #[test]
    fn zero_dimensional_scalar_round_trips() {
        let t = Tensor::scalar(-3.25);
        let p = tmp("scalar");
        write_tensor(&t, &p).unwrap();
        let back = read_tensor(&p).unwrap();
        std::fs::remove_file(&p).ok();
        assert_eq!(t, back);
        assert_eq!(back.rank(), 0);
    }

    #[test]
    fn wrong_magic_is_detected() {
        let p = tmp("magic");
        std::fs::write(&p, b"NOPE\x00\x00").unwrap();
        let err = read_tensor(&p).unwrap_err();
        std::fs::remove_file(&p).ok();
        assert!(matches!(err, Error::BadMagic { .. }), "{err}");
    }

    #[test]
    fn truncated_payload_is_detected() {
        let t = Tensor::from_real(&[4], vec![1.0, 2.0, 3.0, 4.0]);
        let p = tmp("trunc");
        write_tensor(&t, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 9]).unwrap();
        let err = read_tensor(&p).unwrap_err();
        std::fs::remove_file(&p).ok();
        assert!(matches!(err, Error::Truncated { .. }), "{err}");
    }

    #[test]
    fn extent_overflow_is_detected() {
        let p = tmp("overflow");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"GFT1");
        bytes.push(0); // real
        bytes.push(2); // rank 2
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        let err = read_tensor(&p).unwrap_err();
        std::fs::remove_file(&p).ok();
        assert!(matches!(err, Error::ExtentOverflow { .. }), "{err}");
    }

    proptest! {
        #[test]
        fn round_trip_preserves_every_bit(
            shape in prop::collection::vec(1usize..5, 0..4),
            seed in 0u64..1000,
            complex in prop::bool::ANY,
        ) {
            let mut rng = Rng::new(seed);
            let t = if complex {
                let vals: Vec<Complex64> = (0..numel_of(&shape))
                    .map(|_| Complex64::new(rng.normal() * 1e3, rng.normal() * 1e-3))
                    .collect();
                Tensor::from_complex(&shape, vals)
            } else {
                Tensor::from_real(&shape, (0..numel_of(&shape)).map(|_| rng.normal()).collect())
            };
            let p = tmp(&format!("prop-{seed}-{complex}"));
            write_tensor(&t, &p).unwrap();
            let back = read_tensor(&p).unwrap();
            std::fs::remove_file(&p).ok();
            // Bit-exact: compare raw payload bits, not just float equality.
            let lhs: Vec<u64> = t.data().iter().map(|v| v.to_bits()).collect();
            let rhs: Vec<u64> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(lhs, rhs);
            prop_assert_eq!(t.shape(), back.shape());
            prop_assert_eq!(t.dtype(), back.dtype());
        }
    }
}
