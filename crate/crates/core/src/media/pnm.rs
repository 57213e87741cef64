use super::Frame;

/// Parses a binary PGM (P5) or PPM (P6) image with maxval 255.
pub fn read_pnm(bytes: &[u8]) -> Result<Frame, String> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or("missing magic number")?;
    let channels = match magic.as_slice() {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(format!("unsupported magic `{}`", String::from_utf8_lossy(other))),
    };
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| format!("missing {name}"))?;
        *slot = std::str::from_utf8(&tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad {name} `{}`", String::from_utf8_lossy(&tok)))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(format!("empty image {width}x{height}"));
    }
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported (only 255)"));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing raster".into());
    }
    pos += 1;
    let expected = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(format!("truncated raster: {} of {expected} bytes", raster.len()));
    }
    Frame::new(width, height, channels, raster[..expected].to_vec()).map_err(|e| e.to_string())
}

pub fn write_pnm(frame: &Frame) -> Vec<u8> {
    let magic = if frame.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.data);
    out
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<Vec<u8>> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| bytes[start..*pos].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # comment\n# another\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[3, 4]);
        let f = read_pnm(&bytes).unwrap();
        assert_eq!((f.width, f.height, f.data.clone()), (2, 1, vec![3, 4]));
    }

    #[test]
    fn rejects_16_bit() {
        assert!(read_pnm(b"P5\n1 1\n65535\n\0\0").unwrap_err().contains("maxval"));
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(w in 1usize..12, h in 1usize..12, color in any::<bool>(), seed in any::<u64>()) {
            let channels = if color { 3 } else { 1 };
            let data: Vec<u8> = (0..w * h * channels).map(|i| (seed.wrapping_mul(i as u64 + 7) >> 13) as u8).collect();
            let f = Frame::new(w, h, channels, data).unwrap();
            prop_assert_eq!(read_pnm(&write_pnm(&f)).unwrap(), f);
        }
    }
}
