//! Binary PGM (P5) and PPM (P6) frame I/O plus numbered-frame directories.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use super::{GrayImage, ImageError};

fn io_error(path: &Path, source: std::io::Error) -> ImageError {
    if source.kind() == ErrorKind::NotFound {
        ImageError::NotFound {
            path: path.to_path_buf(),
        }
    } else {
        ImageError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header, ImageError> {
    let malformed = |reason: &str| ImageError::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(ImageError::UnsupportedFormat {
            path: path.to_path_buf(),
        });
    }
    let channels = match bytes[1] {
        b'5' => 1,
        b'6' => 3,
        _ => {
            return Err(ImageError::UnsupportedFormat {
                path: path.to_path_buf(),
            })
        }
    };

    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and '#' comments may separate header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("header field out of range"))?;
    }
    // exactly one whitespace byte before the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed("missing separator after maxval")),
    }

    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(malformed("zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(ImageError::UnsupportedDepth {
            path: path.to_path_buf(),
            maxval,
        });
    }
    Ok(Header {
        channels,
        width: width as usize,
        height: height as usize,
        maxval,
        data_offset: pos,
    })
}

/// Reads a binary PGM, or a binary PPM converted by channel average.
pub fn load_frame(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    let header = parse_header(&bytes, path)?;
    let n = header.width * header.height;
    let body = &bytes[header.data_offset..];
    if body.len() < n * header.channels {
        return Err(ImageError::Malformed {
            path: path.to_path_buf(),
            reason: format!("raster truncated: {} of {} bytes", body.len(), n * header.channels),
        });
    }
    let scale = 255.0 / f64::from(header.maxval);
    let data = body[..n * header.channels]
        .chunks_exact(header.channels)
        .map(|px| {
            let sum: f64 = px.iter().map(|&b| f64::from(b)).sum();
            sum / header.channels as f64 * scale
        })
        .collect();
    GrayImage::from_vec(header.width, header.height, data)
}

/// Writes an 8-bit binary PGM; intensities are rounded and clamped.
pub fn save_frame(path: impl AsRef<Path>, img: &GrayImage) -> Result<(), ImageError> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(&img.to_u8());
    fs::write(path, out).map_err(|e| io_error(path, e))
}

/// Frame files (`.pgm`/`.ppm`) of a sequence directory in lexicographic order.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ImageError> {
    let dir = dir.as_ref();
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_error(dir, e))? {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        let is_frame = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("ppm"));
        if is_frame && path.is_file() {
            frames.push(path);
        }
    }
    frames.sort();
    if frames.is_empty() {
        return Err(ImageError::EmptySequence {
            path: dir.to_path_buf(),
        });
    }
    Ok(frames)
}

pub fn load_sequence(dir: impl AsRef<Path>) -> Result<Vec<GrayImage>, ImageError> {
    list_frames(dir)?.iter().map(load_frame).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_tiny_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let mut bytes = b"P5\n# comment\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        fs::write(&path, bytes).unwrap();
        let img = load_frame(&path).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.data(), &[0.0, 255.0, 128.0, 64.0]);
    }

    #[test]
    fn truncated_body_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        fs::write(&path, b"P5 3 3 255\n\x01\x02").unwrap();
        let err = load_frame(&path).unwrap_err();
        assert!(matches!(err, ImageError::Malformed { .. }));
        assert!(err.to_string().contains("t.pgm"));
    }

    #[test]
    fn sixteen_bit_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pgm");
        fs::write(&path, b"P5 1 1 65535\n\x00\x01").unwrap();
        assert!(matches!(
            load_frame(&path),
            Err(ImageError::UnsupportedDepth { maxval: 65535, .. })
        ));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load_frame("/nonexistent/frame.pgm").unwrap_err();
        assert!(matches!(err, ImageError::NotFound { .. }));
        assert!(err.to_string().contains("/nonexistent/frame.pgm"));
    }

    #[test]
    fn color_ppm_is_channel_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[30, 60, 90, 255, 255, 0]);
        fs::write(&path, bytes).unwrap();
        let img = load_frame(&path).unwrap();
        assert_eq!(img.data(), &[60.0, 170.0]);
    }

    #[test]
    fn sequence_is_sorted_and_filtered() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v) in [("00002.pgm", 2.0), ("00001.pgm", 1.0), ("00010.pgm", 10.0)] {
            save_frame(dir.path().join(name), &GrayImage::from_fn(1, 1, |_, _| v)).unwrap();
        }
        fs::write(dir.path().join("groundtruth.txt"), "1,1,1,1\n").unwrap();
        let seq = load_sequence(dir.path()).unwrap();
        let firsts: Vec<f64> = seq.iter().map(|f| f.get(0, 0)).collect();
        assert_eq!(firsts, vec![1.0, 2.0, 10.0]);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_sequence(dir.path()),
            Err(ImageError::EmptySequence { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_lossless(w in 1usize..24, h in 1usize..24, seed in any::<u64>()) {
            let mut s = seed;
            let bytes: Vec<u8> = (0..w * h).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                (s >> 56) as u8
            }).collect();
            let img = GrayImage::from_u8(w, h, &bytes).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.pgm");
            save_frame(&path, &img).unwrap();
            let back = load_frame(&path).unwrap();
            prop_assert_eq!(back.to_u8(), bytes);
        }
    }
}
