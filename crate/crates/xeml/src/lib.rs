//! IO, file formats, and orchestration around `xeml-core`: binary PPM
//! datasets on disk, versioned checkpoints, run configuration files, CSV
//! logs, and the run-directory plumbing used by the `xeml` binary.

pub mod checkpoint;
pub mod csvlog;
mod error;
pub mod hooks;
pub mod ppm;
pub mod runconfig;
pub mod tree;

pub use error::{Error, Result};

use std::io::Read;
use std::path::Path;

/// Hex SHA-256 of a file, used to pin run artifacts for exact replay.
pub fn sha256_hex(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    Ok(out)
}
