//! Versioned binary checkpoint: magic "XEML1", encoder configuration, then
//! length-prefixed state entries (path, shape, little-endian f32 data) for
//! every parameter and batchnorm running statistic.

use std::io::Write;
use std::path::Path;

use xeml_core::encoder::ParamKind;
use xeml_core::{EncoderConfig, ParamStore};

use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"XEML1";

pub fn save(path: &Path, config: &EncoderConfig, store: &ParamStore) -> Result<()> {
    let entries = store.state_entries();
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    for field in [
        config.depth,
        config.channels,
        config.input_size,
        config.input_channels,
    ] {
        out.extend_from_slice(&(field as u32).to_le_bytes());
    }
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for entry in &entries {
        out.push(match entry.kind {
            ParamKind::Trainable => 0,
            ParamKind::RunningStat => 1,
        });
        let name = entry.path.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(entry.shape.len() as u8);
        for &dim in &entry.shape {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        out.extend_from_slice(&(entry.data.len() as u32).to_le_bytes());
        for &v in entry.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    writer
        .write_all(&out)
        .and_then(|_| writer.flush())
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(EncoderConfig, ParamStore)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = Cursor { path, bytes: &bytes, at: 0 };

    let magic = cursor.take(5)?;
    if magic != MAGIC {
        return Err(Error::format(path, "bad checkpoint magic, expected XEML1"));
    }
    let config = EncoderConfig {
        depth: cursor.u32()? as usize,
        channels: cursor.u32()? as usize,
        input_size: cursor.u32()? as usize,
        input_channels: cursor.u32()? as usize,
    };
    let entry_count = cursor.u32()? as usize;
    let mut entries = Vec::with_capacity(entry_count);
    for _ in 0..entry_count {
        let _kind = cursor.take(1)?[0];
        let name_len = cursor.u16()? as usize;
        let name = String::from_utf8(cursor.take(name_len)?.to_vec())
            .map_err(|_| Error::format(path, "non-UTF-8 entry path"))?;
        let ndim = cursor.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cursor.u32()? as usize);
        }
        let count = cursor.u32()? as usize;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let raw = cursor.take(4)?;
            data.push(f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]));
        }
        entries.push((name, shape, data));
    }
    if cursor.at != bytes.len() {
        return Err(Error::format(path, "trailing bytes after last entry"));
    }
    let store = ParamStore::from_state(&config, &entries).map_err(Error::Core)?;
    Ok((config, store))
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        let raw = self.take(2)?;
        Ok(u16::from_le_bytes([raw[0], raw[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let raw = self.take(4)?;
        Ok(u32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use xeml_core::encoder::build_encoder;

    fn config() -> EncoderConfig {
        EncoderConfig {
            depth: 2,
            channels: 6,
            input_size: 16,
            input_channels: 3,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.xeml");
        let store = build_encoder(&config(), 99).unwrap();
        save(&path, &config(), &store).unwrap();
        let (loaded_cfg, loaded) = load(&path).unwrap();
        assert_eq!(loaded_cfg, config());
        assert_eq!(loaded.fingerprint(), store.fingerprint());

        // Byte-identical when re-saved.
        let path2 = dir.path().join("model2.xeml");
        save(&path2, &loaded_cfg, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corrupt_magic_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.xeml");
        let store = build_encoder(&config(), 1).unwrap();
        save(&path, &config(), &store).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'Y';
        std::fs::write(&path, bytes).unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("model.xeml"));
        assert!(err.to_string().contains("magic"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn truncation_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.xeml");
        let store = build_encoder(&config(), 2).unwrap();
        save(&path, &config(), &store).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load(&path).is_err());
    }
}
