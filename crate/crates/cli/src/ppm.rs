//! Binary PPM (P6) classification maps.

use crate::failure::Failure;

/// Index 0 is unlabeled; class `k` uses entry `1 + (k − 1) % 16`.
pub const PALETTE: [[u8; 3]; 17] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

pub fn color(label: u16) -> [u8; 3] {
    if label == 0 {
        PALETTE[0]
    } else {
        PALETTE[1 + (label as usize - 1) % 16]
    }
}

/// Encodes a row-major label grid.
pub fn encode(width: usize, height: usize, labels: &[u16]) -> Vec<u8> {
    assert_eq!(labels.len(), width * height, "label grid size");
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(3 * labels.len());
    for &l in labels {
        out.extend_from_slice(&color(l));
    }
    out
}

/// Parses a P6 file with maxval 255 into `(width, height, rgb)`.
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), Failure> {
    let bad = |m: &str| Failure::data(format!("invalid PPM: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad("expected P6 with maxval 255"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let body = &bytes[pos + 1..];
    if body.len() != 3 * width * height {
        return Err(bad("pixel data size"));
    }
    Ok((width, height, body.to_vec()))
}
