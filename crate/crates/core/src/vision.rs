//! Presence sensing from grayscale frames.
//!
//! A per-pixel running-average background is compared against each incoming
//! frame. Pixels whose luma departs from the background by more than a
//! threshold form the foreground mask; the mask's size decides occupancy and
//! its horizontal centroid gives the visitor's normalized position.

use std::io::{Read, Write};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted frame edge, in pixels.
pub const MIN_FRAME_DIM: usize = 8;

/// Grayscale camera image, row-major luma.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    timestamp_ms: u64,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, timestamp_ms: u64) -> Result<Self> {
        if width < MIN_FRAME_DIM || height < MIN_FRAME_DIM {
            return Err(Error::invalid(format!(
                "frame {width}x{height} is below the {MIN_FRAME_DIM}x{MIN_FRAME_DIM} minimum"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "frame has {} pixels, expected {}x{} = {}",
                pixels.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
            timestamp_ms,
        })
    }

    pub fn filled(width: usize, height: usize, luma: u8, timestamp_ms: u64) -> Result<Self> {
        Frame::new(width, height, vec![luma; width * height], timestamp_ms)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }

    pub fn with_timestamp(mut self, timestamp_ms: u64) -> Self {
        self.timestamp_ms = timestamp_ms;
        self
    }

    /// Reads a binary portable graymap (P5, maxval 255).
    pub fn read_pgm<R: Read>(mut reader: R, timestamp_ms: u64) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if !bytes.starts_with(b"P5") {
            return Err(Error::invalid("not a binary graymap (missing P5 magic)"));
        }
        let img = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)?.into_luma8();
        let (w, h) = img.dimensions();
        Frame::new(w as usize, h as usize, img.into_raw(), timestamp_ms)
    }

    /// Writes the frame as a binary portable graymap (P5, maxval 255).
    pub fn write_pgm<W: Write>(&self, writer: W) -> Result<()> {
        PnmEncoder::new(writer)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(
                &self.pixels,
                self.width as u32,
                self.height as u32,
                ExtendedColorType::L8,
            )?;
        Ok(())
    }
}

/// Running per-pixel mean of the empty scene.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    width: usize,
    height: usize,
    mean: Vec<f64>,
}

impl BackgroundModel {
    /// Seeds the model with the frame's pixels.
    pub fn from_frame(frame: &Frame) -> Self {
        BackgroundModel {
            width: frame.width,
            height: frame.height,
            mean: frame.pixels.iter().map(|&p| f64::from(p)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn check_dims(&self, frame: &Frame) -> Result<()> {
        if frame.width != self.width || frame.height != self.height {
            return Err(Error::invalid(format!(
                "frame {}x{} does not match background {}x{}",
                frame.width, frame.height, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Exponential moving average toward `frame`: `mean' = (1 - alpha) mean + alpha pixel`.
    pub fn update(&mut self, frame: &Frame, alpha: f64) -> Result<()> {
        check_rate("alpha", alpha)?;
        self.check_dims(frame)?;
        for (m, &p) in self.mean.iter_mut().zip(&frame.pixels) {
            *m = blend(*m, p, alpha);
        }
        Ok(())
    }

    /// Like [`update`](Self::update), but pixels currently in the foreground
    /// (`|pixel - mean| > diff_threshold`) learn at `foreground_alpha` instead.
    ///
    /// With `foreground_alpha == alpha` this is exactly `update`.
    pub fn update_selective(
        &mut self,
        frame: &Frame,
        alpha: f64,
        foreground_alpha: f64,
        diff_threshold: f64,
    ) -> Result<()> {
        check_rate("alpha", alpha)?;
        check_rate("foreground_alpha", foreground_alpha)?;
        self.check_dims(frame)?;
        for (m, &p) in self.mean.iter_mut().zip(&frame.pixels) {
            let rate = if (f64::from(p) - *m).abs() > diff_threshold {
                foreground_alpha
            } else {
                alpha
            };
            *m = blend(*m, p, rate);
        }
        Ok(())
    }

    /// Compares `frame` against the background and summarizes the foreground.
    pub fn detect(&self, frame: &Frame, params: &DetectionParams) -> Result<PresenceObservation> {
        params.validate()?;
        self.check_dims(frame)?;
        let threshold = params.diff_threshold;
        let mut count = 0usize;
        let mut col_sum = 0.0f64;
        for (row_mean, row_px) in self
            .mean
            .chunks_exact(self.width)
            .zip(frame.pixels.chunks_exact(self.width))
        {
            for (col, (&m, &p)) in row_mean.iter().zip(row_px).enumerate() {
                if (f64::from(p) - m).abs() > threshold {
                    count += 1;
                    col_sum += col as f64 + 0.5;
                }
            }
        }
        let total = (self.width * self.height) as f64;
        let activity_ratio = count as f64 / total;
        let occupied = count > 0 && activity_ratio >= params.min_activity;
        let centroid_x = occupied.then(|| col_sum / (count as f64 * self.width as f64));
        Ok(PresenceObservation {
            occupied,
            centroid_x,
            activity_ratio,
            timestamp_ms: frame.timestamp_ms,
        })
    }
}

fn blend(mean: f64, pixel: u8, alpha: f64) -> f64 {
    ((1.0 - alpha) * mean + alpha * f64::from(pixel)).clamp(0.0, 255.0)
}

fn check_rate(name: &str, alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be in (0, 1], got {alpha}")))
    }
}

/// Thresholds for [`BackgroundModel::detect`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Luma delta above which a pixel counts as foreground.
    pub diff_threshold: f64,
    /// Minimum foreground fraction for the frame to count as occupied.
    pub min_activity: f64,
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.diff_threshold > 0.0 && self.diff_threshold < 255.0) {
            return Err(Error::invalid(format!(
                "diff_threshold must be in (0, 255), got {}",
                self.diff_threshold
            )));
        }
        if !(self.min_activity > 0.0 && self.min_activity < 1.0) {
            return Err(Error::invalid(format!(
                "min_activity must be in (0, 1), got {}",
                self.min_activity
            )));
        }
        Ok(())
    }
}

/// Occupancy and horizontal position derived from one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresenceObservation {
    pub occupied: bool,
    /// Normalized horizontal centroid of the foreground; `Some` iff occupied.
    pub centroid_x: Option<f64>,
    pub activity_ratio: f64,
    pub timestamp_ms: u64,
}

impl PresenceObservation {
    pub fn vacant(timestamp_ms: u64) -> Self {
        PresenceObservation {
            occupied: false,
            centroid_x: None,
            activity_ratio: 0.0,
            timestamp_ms,
        }
    }
}

pub fn init_background(frame: &Frame) -> BackgroundModel {
    BackgroundModel::from_frame(frame)
}

pub fn update_background(model: &BackgroundModel, frame: &Frame, alpha: f64) -> Result<BackgroundModel> {
    let mut next = model.clone();
    next.update(frame, alpha)?;
    Ok(next)
}

pub fn detect_presence(
    model: &BackgroundModel,
    frame: &Frame,
    params: &DetectionParams,
) -> Result<PresenceObservation> {
    model.detect(frame, params)
}

/// Maps a normalized position onto one of `n_regions` equal bands, 0 = leftmost.
pub fn quantize_region(centroid_x: f64, n_regions: usize) -> Result<usize> {
    if n_regions < 2 {
        return Err(Error::invalid(format!("n_regions must be >= 2, got {n_regions}")));
    }
    if !(0.0..=1.0).contains(&centroid_x) {
        return Err(Error::invalid(format!("centroid_x {centroid_x} outside [0, 1]")));
    }
    let idx = (centroid_x * n_regions as f64).floor() as usize;
    Ok(idx.min(n_regions - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(diff_threshold: f64, min_activity: f64) -> DetectionParams {
        DetectionParams {
            diff_threshold,
            min_activity,
        }
    }

    #[test]
    fn init_copies_pixels() {
        let uniform = Frame::filled(8, 8, 100, 0).unwrap();
        assert!(init_background(&uniform).mean().iter().all(|&m| m == 100.0));

        let gradient: Vec<u8> = (0..64).map(|i| (i * 4) as u8).collect();
        let frame = Frame::new(8, 8, gradient.clone(), 0).unwrap();
        let model = init_background(&frame);
        for (m, p) in model.mean().iter().zip(&gradient) {
            assert_eq!(*m, f64::from(*p));
        }
        assert_eq!((model.width(), model.height()), (8, 8));
    }

    #[test]
    fn undersized_frame_is_rejected() {
        assert!(matches!(Frame::filled(4, 8, 0, 0), Err(Error::InvalidInput(_))));
        assert!(Frame::new(8, 8, vec![0; 63], 0).is_err());
    }

    #[test]
    fn update_arithmetic() {
        let model = init_background(&Frame::filled(8, 8, 100, 0).unwrap());
        let bright = Frame::filled(8, 8, 200, 1).unwrap();
        let half = update_background(&model, &bright, 0.5).unwrap();
        assert!(half.mean().iter().all(|&m| m == 150.0));
        let replaced = update_background(&model, &bright, 1.0).unwrap();
        assert!(replaced.mean().iter().all(|&m| m == 200.0));
    }

    #[test]
    fn update_rejects_bad_rate_and_dims() {
        let model = init_background(&Frame::filled(8, 8, 0, 0).unwrap());
        let frame = Frame::filled(8, 8, 0, 0).unwrap();
        assert!(update_background(&model, &frame, 0.0).is_err());
        assert!(update_background(&model, &frame, 1.5).is_err());
        let other = Frame::filled(9, 8, 0, 0).unwrap();
        assert!(update_background(&model, &other, 0.5).is_err());
        assert!(detect_presence(&model, &other, &params(50.0, 0.05)).is_err());
    }

    #[test]
    fn convergence_matches_geometric_decay() {
        // Iterate the recurrence by hand and compare gaps against (1 - a)^k.
        let alpha = 0.1;
        let mut model = init_background(&Frame::filled(8, 8, 20, 0).unwrap());
        let target = Frame::filled(8, 8, 220, 0).unwrap();
        let initial_gap = 200.0f64;
        let mut expected = initial_gap;
        for _ in 0..50 {
            model.update(&target, alpha).unwrap();
            expected *= 1.0 - alpha;
            for &m in model.mean() {
                assert!(((220.0 - m) - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn selective_update_slows_foreground() {
        let mut model = init_background(&Frame::filled(8, 8, 30, 0).unwrap());
        let mut px = vec![30u8; 64];
        px[0] = 220;
        px[1] = 35;
        let frame = Frame::new(8, 8, px, 0).unwrap();
        model.update_selective(&frame, 0.5, 0.01, 40.0).unwrap();
        assert!((model.mean()[0] - (30.0 * 0.99 + 220.0 * 0.01)).abs() < 1e-12);
        assert!((model.mean()[1] - 32.5).abs() < 1e-12);
    }

    #[test]
    fn identical_frame_is_vacant() {
        let frame = Frame::filled(10, 10, 77, 5).unwrap();
        let model = init_background(&frame);
        let obs = detect_presence(&model, &frame, &params(1.0, 0.01)).unwrap();
        assert!(!obs.occupied);
        assert_eq!(obs.activity_ratio, 0.0);
        assert_eq!(obs.centroid_x, None);
        assert_eq!(obs.timestamp_ms, 5);
    }

    #[test]
    fn single_bright_column() {
        let model = init_background(&Frame::filled(10, 10, 0, 0).unwrap());
        let mut px = vec![0u8; 100];
        for row in 0..10 {
            px[row * 10 + 7] = 255;
        }
        let frame = Frame::new(10, 10, px, 1).unwrap();
        let obs = detect_presence(&model, &frame, &params(50.0, 0.05)).unwrap();
        assert!(obs.occupied);
        assert!((obs.centroid_x.unwrap() - 0.75).abs() < 1e-12);
        assert!((obs.activity_ratio - 0.10).abs() < 1e-12);
    }

    #[test]
    fn below_min_activity_is_vacant() {
        let model = init_background(&Frame::filled(10, 10, 0, 0).unwrap());
        let mut px = vec![0u8; 100];
        px[3] = 255;
        let frame = Frame::new(10, 10, px, 0).unwrap();
        let obs = detect_presence(&model, &frame, &params(50.0, 0.05)).unwrap();
        assert!(!obs.occupied);
        assert!((obs.activity_ratio - 0.01).abs() < 1e-12);
        assert_eq!(obs.centroid_x, None);
    }

    #[test]
    fn detection_params_are_validated() {
        let frame = Frame::filled(8, 8, 0, 0).unwrap();
        let model = init_background(&frame);
        for p in [
            params(0.0, 0.1),
            params(255.0, 0.1),
            params(10.0, 0.0),
            params(10.0, 1.0),
        ] {
            assert!(detect_presence(&model, &frame, &p).is_err());
        }
    }

    #[test]
    fn quantize_examples() {
        // 0.375 of 4 bands is the second band from the left.
        assert_eq!(quantize_region(0.375, 4).unwrap(), 1);
        assert_eq!(quantize_region(1.0, 4).unwrap(), 3);
        for n in 2..10 {
            assert_eq!(quantize_region(0.0, n).unwrap(), 0);
        }
        assert!(quantize_region(-0.01, 4).is_err());
        assert!(quantize_region(1.01, 4).is_err());
        assert!(quantize_region(f64::NAN, 4).is_err());
        assert!(quantize_region(0.5, 1).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let px: Vec<u8> = (0..12 * 9).map(|i| (i * 7 % 256) as u8).collect();
        let frame = Frame::new(12, 9, px, 42).unwrap();
        let mut buf = Vec::new();
        frame.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5"));
        let back = Frame::read_pgm(buf.as_slice(), 42).unwrap();
        assert_eq!(back, frame);
        assert!(Frame::read_pgm(&b"P2\n8 8\n255\n"[..], 0).is_err());
    }
}
