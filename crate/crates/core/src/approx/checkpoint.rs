//! Versioned flat binary format for a list of networks: magic bytes, format
//! version, network count, then per network its layer widths and row-major
//! little-endian f64 weights followed by biases, layer by layer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Mlp;
use crate::error::{AcrlError, Result};

const MAGIC: &[u8; 8] = b"ACRLNET\0";
const VERSION: u32 = 1;

pub fn save_nets(path: &Path, nets: &[&Mlp]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(nets.len() as u32).to_le_bytes())?;
    for n in nets {
        n.write_to(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_nets(path: &Path) -> Result<Vec<Mlp>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(AcrlError::Checkpoint("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(AcrlError::Checkpoint(format!("unsupported version {version}")));
    }
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4);
    (0..n).map(|_| Mlp::read_from(&mut r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_and_bad_magic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Mlp::new(&[3, 5, 2], &mut rng);
        let b = Mlp::new(&[6, 4, 4, 1], &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nets.bin");
        save_nets(&path, &[&a, &b]).unwrap();
        assert_eq!(load_nets(&path).unwrap(), vec![a, b]);
        std::fs::write(&path, b"garbage!garbage!").unwrap();
        assert!(matches!(load_nets(&path), Err(AcrlError::Checkpoint(_))));
    }
}
