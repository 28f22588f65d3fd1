//! Binary PPM (P6) reading and writing, maxval 255.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Writes interleaved RGB bytes as a binary P6 file.
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    assert_eq!(rgb.len(), width * height * 3, "pixel buffer size");
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = format!("P6\n{width} {height}\n255\n");
    w.write_all(header.as_bytes())
        .and_then(|_| w.write_all(rgb))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a binary P6 file; whitespace and `#` comments are accepted in the
/// header, and the maxval must be 255.
pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = 0usize;

    let mut next_token = |bytes: &[u8]| -> Result<String> {
        // Skip whitespace and comment lines.
        loop {
            while cursor < bytes.len() && bytes[cursor].is_ascii_whitespace() {
                cursor += 1;
            }
            if cursor < bytes.len() && bytes[cursor] == b'#' {
                while cursor < bytes.len() && bytes[cursor] != b'\n' {
                    cursor += 1;
                }
                continue;
            }
            break;
        }
        let start = cursor;
        while cursor < bytes.len() && !bytes[cursor].is_ascii_whitespace() {
            cursor += 1;
        }
        if start == cursor {
            return Err(Error::format(path, "truncated PPM header"));
        }
        String::from_utf8(bytes[start..cursor].to_vec())
            .map_err(|_| Error::format(path, "non-ASCII PPM header"))
    };

    let magic = next_token(&bytes)?;
    if magic != "P6" {
        return Err(Error::format(path, format!("expected P6 magic, found '{magic}'")));
    }
    let parse = |token: String, what: &str| -> Result<usize> {
        token
            .parse::<usize>()
            .map_err(|_| Error::format(path, format!("bad {what} '{token}'")))
    };
    let width = parse(next_token(&bytes)?, "width")?;
    let height = parse(next_token(&bytes)?, "height")?;
    let maxval = parse(next_token(&bytes)?, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(path, format!("unsupported maxval {maxval}, expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(path, "zero-sized image"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if cursor >= bytes.len() || !bytes[cursor].is_ascii_whitespace() {
        return Err(Error::format(path, "missing raster separator"));
    }
    cursor += 1;
    let expected = width * height * 3;
    let raster = &bytes[cursor..];
    if raster.len() < expected {
        return Err(Error::format(
            path,
            format!("raster holds {} bytes, expected {expected}", raster.len()),
        ));
    }
    Ok((width, height, raster[..expected].to_vec()))
}

/// Nearest-neighbor resize of interleaved RGB bytes to a square side.
pub fn resize_nearest(rgb: &[u8], width: usize, height: usize, side: usize) -> Vec<u8> {
    if width == side && height == side {
        return rgb.to_vec();
    }
    let mut out = vec![0u8; side * side * 3];
    for y in 0..side {
        let sy = y * height / side;
        for x in 0..side {
            let sx = x * width / side;
            let src = (sy * width + sx) * 3;
            let dst = (y * side + x) * 3;
            out[dst..dst + 3].copy_from_slice(&rgb[src..src + 3]);
        }
    }
    out
}

/// Interleaved RGB bytes -> planar [3, side, side] floats in [0, 1].
pub fn rgb_to_chw(rgb: &[u8], side: usize) -> Vec<f32> {
    let plane = side * side;
    let mut out = vec![0.0f32; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            out[c * plane + i] = rgb[i * 3 + c] as f32 / 255.0;
        }
    }
    out
}

/// Planar [3, side, side] floats in [0, 1] -> interleaved RGB bytes.
pub fn chw_to_rgb(chw: &[f32], side: usize) -> Vec<u8> {
    let plane = side * side;
    let mut out = vec![0u8; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            let v = (chw[c * plane + i].clamp(0.0, 1.0) * 255.0).round();
            out[i * 3 + c] = v as u8;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let rgb: Vec<u8> = (0..4 * 2 * 3).map(|i| (i * 37 % 256) as u8).collect();
        write_ppm(&path, 4, 2, &rgb).unwrap();
        let (w, h, back) = read_ppm(&path).unwrap();
        assert_eq!((w, h), (4, 2));
        assert_eq!(back, rgb);
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let mut bytes = b"P6\n# made by hand\n2 1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        std::fs::write(&path, bytes).unwrap();
        let (w, h, rgb) = read_ppm(&path).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(rgb, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn corrupt_files_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ppm");
        std::fs::write(&path, b"P5\n2 2\n255\n....").unwrap();
        let err = read_ppm(&path).unwrap_err();
        assert!(err.to_string().contains("bad.ppm"));
        assert_eq!(err.exit_code(), 2);

        std::fs::write(&path, b"P6\n2 2\n255\nxx").unwrap();
        let err = read_ppm(&path).unwrap_err();
        assert!(err.to_string().contains("raster holds"));
    }

    #[test]
    fn known_bytes_decode_to_exact_fractions() {
        let rgb = vec![0u8, 51, 255];
        let chw = rgb_to_chw(&rgb, 1);
        assert_eq!(chw, vec![0.0, 51.0 / 255.0, 1.0]);
        assert_eq!(chw_to_rgb(&chw, 1), rgb);
    }

    #[test]
    fn nearest_resize_picks_source_pixels() {
        // 2x2 -> 4x4 repeats each source pixel in a 2x2 block.
        let rgb: Vec<u8> = vec![
            10, 10, 10, 20, 20, 20, //
            30, 30, 30, 40, 40, 40,
        ];
        let out = resize_nearest(&rgb, 2, 2, 4);
        assert_eq!(&out[0..3], &[10, 10, 10]);
        assert_eq!(&out[9..12], &[20, 20, 20]);
        assert_eq!(&out[(3 * 4 + 3) * 3..(3 * 4 + 4) * 3], &[40, 40, 40]);
    }
}
