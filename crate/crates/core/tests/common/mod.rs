//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

/// Foreground pixel count and mean normalized column center, by double loop.
pub fn vision_oracle(
    background: &[f64],
    frame: &[u8],
    width: usize,
    height: usize,
    threshold: f64,
) -> (usize, Option<f64>) {
    let mut count = 0;
    let mut sum = 0.0;
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if (frame[i] as f64 - background[i]).abs() > threshold {
                count += 1;
                sum += (x as f64 + 0.5) / width as f64;
            }
        }
    }
    (count, (count > 0).then(|| sum / count as f64))
}

/// Polynomial long division over GF(2) by x^8 + x^2 + x + 1.
pub fn crc_oracle(data: &[u8]) -> u8 {
    let mut bits: Vec<u8> = data
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect();
    bits.extend([0; 8]);
    let generator = [1u8, 0, 0, 0, 0, 0, 1, 1, 1];
    for i in 0..bits.len() - 8 {
        if bits[i] == 1 {
            for (j, g) in generator.iter().enumerate() {
                bits[i + j] ^= g;
            }
        }
    }
    bits[bits.len() - 8..].iter().fold(0, |acc, &b| (acc << 1) | b)
}

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}
