//! Single-channel portable float maps.
//!
//! Layout: `Pf\n<width> <height>\n<scale>\n` followed by `width * height`
//! 32-bit floats, rows stored bottom to top. A negative scale means little
//! endian. Values are inverse depth in 1/mm.

use airmap::fusion::InverseDepthMap;

pub fn encode(map: &InverseDepthMap) -> Vec<u8> {
    let (w, h) = (map.width(), map.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h);
    for v in (0..h).rev() {
        for u in 0..w {
            out.extend_from_slice(&(map.get(u, v) as f32).to_le_bytes());
        }
    }
    out
}

/// Reads the next whitespace-delimited header token.
fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| std::str::from_utf8(&bytes[start..*pos]).ok())?
}

pub fn decode(bytes: &[u8]) -> Result<InverseDepthMap, String> {
    let mut pos = 0;
    match token(bytes, &mut pos) {
        Some("Pf") => {}
        Some("PF") => return Err("three-channel PFM; expected single-channel 'Pf'".into()),
        _ => return Err("not a PFM file (missing 'Pf' magic)".into()),
    }
    let mut field = |name: &str| -> Result<&str, String> {
        token(bytes, &mut pos).ok_or_else(|| format!("truncated header: missing {name}"))
    };
    let w: usize = field("width")?.parse().map_err(|e| format!("bad width: {e}"))?;
    let h: usize = field("height")?.parse().map_err(|e| format!("bad height: {e}"))?;
    let scale: f64 = field("scale")?.parse().map_err(|e| format!("bad scale: {e}"))?;
    if w == 0 || h == 0 {
        return Err(format!("empty image {w}x{h}"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(format!("invalid scale {scale}"));
    }
    // Exactly one whitespace byte separates the header from the data.
    pos += 1;
    let need = 4 * w * h;
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != need {
        return Err(format!(
            "expected {need} data bytes for {w}x{h}, found {}",
            data.len()
        ));
    }
    let little = scale < 0.0;
    let mut values = vec![0.0; w * h];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let b: [u8; 4] = chunk.try_into().expect("chunk of 4");
        let x = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (row, u) = (i / w, i % w);
        values[(h - 1 - row) * w + u] = x as f64;
    }
    InverseDepthMap::new(w, h, values).map_err(|e| e.to_string())
}
