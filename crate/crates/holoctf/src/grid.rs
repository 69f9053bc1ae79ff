//! Discrete Fourier-grid conventions, unitary 2D transforms and padding.
//!
//! Frequencies follow ξ_n = 2π·n/N with n ∈ [−N/2, N/2) along each padded
//! axis; spectra are kept in transform ordering (zero frequency at index 0,
//! no fftshift anywhere in the data model). The transform pair is unitary,
//! i.e. Parseval holds and `ifft2(fft2(x)) = x`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Image grid with its padding convention.
///
/// `pad_factor` ≥ 1; the padded axis lengths are even (except for the
/// identity case `pad_factor == 1`, which keeps the original shape).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2D {
    pub height: usize,
    pub width: usize,
    pub pad_factor: f64,
}

impl Grid2D {
    pub const DEFAULT_PAD_FACTOR: f64 = 2.0;

    pub fn new(height: usize, width: usize, pad_factor: f64) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidGeometry(format!(
                "grid must be at least 2x2, got {height}x{width}"
            )));
        }
        if !pad_factor.is_finite() || pad_factor < 1.0 {
            return Err(Error::InvalidGeometry(format!(
                "pad_factor must be finite and >= 1, got {pad_factor}"
            )));
        }
        Ok(Self { height, width, pad_factor })
    }

    /// Default padding (factor 2).
    pub fn with_default_pad(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, Self::DEFAULT_PAD_FACTOR)
    }

    pub fn padded_height(&self) -> usize {
        padded_dim(self.height, self.pad_factor)
    }

    pub fn padded_width(&self) -> usize {
        padded_dim(self.width, self.pad_factor)
    }

    pub fn padded_shape(&self) -> (usize, usize) {
        (self.padded_height(), self.padded_width())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// |ξ|² = ξ_y² + ξ_x² at every padded-grid frequency sample, transform
    /// ordering (zero frequency at index (0,0)).
    pub fn freq_sq(&self) -> Array2<f64> {
        freq_sq_for(self.padded_height(), self.padded_width())
    }
}

fn padded_dim(n: usize, pad_factor: f64) -> usize {
    if pad_factor == 1.0 {
        return n;
    }
    let m = ((n as f64) * pad_factor).ceil() as usize;
    let m = m.max(n);
    if m % 2 == 0 {
        m
    } else {
        m + 1
    }
}

/// Frequency samples ξ_n = 2πn/N for one axis of length `n`, transform order.
pub fn freq_axis(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let idx = if 2 * k < n { k as i64 } else { k as i64 - n as i64 };
            2.0 * PI * idx as f64 / n as f64
        })
        .collect()
}

/// |ξ|² on an arbitrary (already padded) shape.
pub fn freq_sq_for(height: usize, width: usize) -> Array2<f64> {
    let fy = freq_axis(height);
    let fx = freq_axis(width);
    Array2::from_shape_fn((height, width), |(i, j)| fy[i] * fy[i] + fx[j] * fx[j])
}

/// How the padding margin is filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    /// Clamp to the nearest edge pixel.
    Replicate,
    /// Fill with the additive identity of the element type.
    Zero,
}

/// Embed `x` centered in the padded grid, filling the margin per `mode`.
pub fn pad<T: Copy + Default>(x: &Array2<T>, grid: &Grid2D, mode: PadMode) -> Result<Array2<T>> {
    if x.dim() != grid.shape() {
        return Err(Error::GridMismatch(format!(
            "pad: field is {:?}, grid is {:?}",
            x.dim(),
            grid.shape()
        )));
    }
    let (h, w) = grid.shape();
    let (ph, pw) = grid.padded_shape();
    let oy = (ph - h) / 2;
    let ox = (pw - w) / 2;
    let out = match mode {
        PadMode::Zero => {
            let mut out = Array2::<T>::default((ph, pw));
            for i in 0..h {
                for j in 0..w {
                    out[(oy + i, ox + j)] = x[(i, j)];
                }
            }
            out
        }
        PadMode::Replicate => Array2::from_shape_fn((ph, pw), |(i, j)| {
            let si = i.saturating_sub(oy).min(h - 1);
            let sj = j.saturating_sub(ox).min(w - 1);
            x[(si, sj)]
        }),
    };
    Ok(out)
}

/// Extract the centered original region; left inverse of [`pad`].
pub fn crop<T: Copy>(x: &Array2<T>, grid: &Grid2D) -> Result<Array2<T>> {
    let (h, w) = grid.shape();
    let (xh, xw) = x.dim();
    if xh < h || xw < w {
        return Err(Error::GridMismatch(format!(
            "crop: field {xh}x{xw} smaller than original {h}x{w}"
        )));
    }
    let oy = (xh - h) / 2;
    let ox = (xw - w) / 2;
    Ok(Array2::from_shape_fn((h, w), |(i, j)| x[(oy + i, ox + j)]))
}

/// Planned unitary 2D FFT pair for one array shape.
///
/// Both directions carry a 1/√(HW) factor so the pair is mutually inverse
/// and inner-product preserving.
pub struct Fft2 {
    fwd_row: Arc<dyn Fft<f64>>,
    fwd_col: Arc<dyn Fft<f64>>,
    inv_row: Arc<dyn Fft<f64>>,
    inv_col: Arc<dyn Fft<f64>>,
    height: usize,
    width: usize,
    scale: f64,
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fwd_row: planner.plan_fft_forward(width),
            fwd_col: planner.plan_fft_forward(height),
            inv_row: planner.plan_fft_inverse(width),
            inv_col: planner.plan_fft_inverse(height),
            height,
            width,
            scale: 1.0 / ((height * width) as f64).sqrt(),
        }
    }

    pub fn for_grid(grid: &Grid2D) -> Self {
        let (ph, pw) = grid.padded_shape();
        Self::new(ph, pw)
    }

    fn transform(
        &self,
        x: &Array2<Complex64>,
        row: &Arc<dyn Fft<f64>>,
        col: &Arc<dyn Fft<f64>>,
    ) -> Result<Array2<Complex64>> {
        if x.dim() != (self.height, self.width) {
            return Err(Error::GridMismatch(format!(
                "fft2: field is {:?}, plan is {}x{}",
                x.dim(),
                self.height,
                self.width
            )));
        }
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("fft2 input"));
        }
        let mut out = x.to_owned();
        for mut r in out.rows_mut() {
            row.process(r.as_slice_mut().expect("row-major rows are contiguous"));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.height];
        for j in 0..self.width {
            for i in 0..self.height {
                buf[i] = out[(i, j)];
            }
            col.process(&mut buf);
            for i in 0..self.height {
                out[(i, j)] = buf[i];
            }
        }
        let s = self.scale;
        out.mapv_inplace(|v| v * s);
        Ok(out)
    }

    pub fn forward(&self, x: &Array2<Complex64>) -> Result<Array2<Complex64>> {
        self.transform(x, &self.fwd_row, &self.fwd_col)
    }

    pub fn inverse(&self, x: &Array2<Complex64>) -> Result<Array2<Complex64>> {
        self.transform(x, &self.inv_row, &self.inv_col)
    }
}

/// One-shot unitary forward transform.
pub fn fft2(x: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let (h, w) = x.dim();
    Fft2::new(h, w).forward(x)
}

/// One-shot unitary inverse transform.
pub fn ifft2(x: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let (h, w) = x.dim();
    Fft2::new(h, w).inverse(x)
}

pub fn to_complex(x: &Array2<f64>) -> Array2<Complex64> {
    x.mapv(|v| Complex64::new(v, 0.0))
}

pub fn real_part(x: &Array2<Complex64>) -> Array2<f64> {
    x.mapv(|v| v.re)
}
