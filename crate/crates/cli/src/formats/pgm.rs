//! Binary segmentation masks stored as 8-bit grayscale images with pixel
//! values 0 and 255. Binary PGM (`P5`) is written; PGM and PNG are read.

use airmap::image::SegmentationMask;
use std::io::Cursor;

pub fn encode(mask: &SegmentationMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.data().iter().map(|&m| if m == 1 { 255u8 } else { 0 }));
    out
}

/// Maps 0/255 pixels to 0/1; any other value is an error naming the first
/// offending pixel.
fn binarize(width: usize, height: usize, pixels: &[u8]) -> Result<SegmentationMask, String> {
    if let Some(i) = pixels.iter().position(|&p| p != 0 && p != 255) {
        return Err(format!(
            "non-binary mask: value {} at pixel ({}, {})",
            pixels[i],
            i % width,
            i / width
        ));
    }
    let data = pixels.iter().map(|&p| u8::from(p == 255)).collect();
    SegmentationMask::new(width, height, data).map_err(|e| e.to_string())
}

pub fn decode_pgm(bytes: &[u8]) -> Result<SegmentationMask, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if bytes.get(pos) == Some(&b'#') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(format!("unsupported PGM magic '{}' (expected P5)", fields[0]));
    }
    let parse = |s: &str, what: &str| s.parse::<usize>().map_err(|e| format!("bad {what}: {e}"));
    let (w, h, maxval) = (
        parse(&fields[1], "width")?,
        parse(&fields[2], "height")?,
        parse(&fields[3], "maxval")?,
    );
    if maxval != 255 {
        return Err(format!("mask maxval must be 255, got {maxval}"));
    }
    if w == 0 || h == 0 {
        return Err(format!("empty mask {w}x{h}"));
    }
    pos += 1;
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != w * h {
        return Err(format!(
            "expected {} pixel bytes for {w}x{h}, found {}",
            w * h,
            data.len()
        ));
    }
    binarize(w, h, data)
}

pub fn decode_png(bytes: &[u8]) -> Result<SegmentationMask, String> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or("PNG too large")?];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(format!("mask PNG must be 8-bit, got {:?}", info.bit_depth));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let pixels: Vec<u8> = match info.color_type {
        png::ColorType::Grayscale => buf[..w * h].to_vec(),
        png::ColorType::GrayscaleAlpha => buf[..2 * w * h].iter().step_by(2).copied().collect(),
        other => return Err(format!("mask PNG must be grayscale, got {other:?}")),
    };
    binarize(w, h, &pixels)
}
