//! Linearized CTF forward operator, its adjoint, and the per-frequency
//! transfer functions for the plain and homogeneous (single-material) models.
//!
//! The factor 2 of the stacked transfer matrix stays inside the operators
//! here; the stability module works with the normalized matrices without it.

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::grid::{self, Fft2, Grid2D, PadMode};
use crate::{Error, Result};

/// The unknown f = (φ, μ): phase in radians, negated absorption, both
/// nonpositive by convention (soft, not enforced).
#[derive(Clone, Debug)]
pub struct ComplexObject {
    pub grid: Grid2D,
    pub phi: Array2<f64>,
    pub mu: Array2<f64>,
}

impl ComplexObject {
    pub fn new(grid: Grid2D, phi: Array2<f64>, mu: Array2<f64>) -> Result<Self> {
        if phi.dim() != grid.shape() || mu.dim() != grid.shape() {
            return Err(Error::GridMismatch(format!(
                "object fields {:?}/{:?} vs grid {:?}",
                phi.dim(),
                mu.dim(),
                grid.shape()
            )));
        }
        if phi.iter().chain(mu.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("object"));
        }
        Ok(Self { grid, phi, mu })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        let shape = grid.shape();
        Self { grid, phi: Array2::zeros(shape), mu: Array2::zeros(shape) }
    }

    /// Number of pixels violating the nonpositivity convention.
    pub fn sign_violations(&self) -> usize {
        self.phi.iter().chain(self.mu.iter()).filter(|&&v| v > 0.0).count()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { grid: self.grid, phi: &self.phi * t, mu: &self.mu * t }
    }
}

/// J unit-background-normalized intensity images with their pixel Fresnel
/// numbers.
#[derive(Clone, Debug)]
pub struct HologramStack {
    pub grid: Grid2D,
    pub images: Vec<Array2<f64>>,
    pub fresnel_numbers: Vec<f64>,
}

impl HologramStack {
    pub fn new(grid: Grid2D, images: Vec<Array2<f64>>, fresnel_numbers: Vec<f64>) -> Result<Self> {
        if images.is_empty() || images.len() != fresnel_numbers.len() {
            return Err(Error::InvalidConfig(format!(
                "stack needs J >= 1 images with matching Fresnel numbers, got {} and {}",
                images.len(),
                fresnel_numbers.len()
            )));
        }
        for im in &images {
            if im.dim() != grid.shape() {
                return Err(Error::GridMismatch(format!(
                    "hologram {:?} vs grid {:?}",
                    im.dim(),
                    grid.shape()
                )));
            }
            if im.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("hologram stack"));
            }
        }
        for &f in &fresnel_numbers {
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::InvalidGeometry(format!("Fresnel number must be positive, got {f}")));
            }
        }
        Ok(Self { grid, images, fresnel_numbers })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Duplicate Fresnel numbers are tolerated but degrade stability; callers
    /// may want to warn.
    pub fn has_duplicate_fresnel_numbers(&self) -> bool {
        let mut v = self.fresnel_numbers.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.windows(2).any(|w| w[0] == w[1])
    }

    /// Residual images I_j - 1.
    pub fn residuals(&self) -> Vec<Array2<f64>> {
        self.images.iter().map(|im| im.mapv(|v| v - 1.0)).collect()
    }
}

/// (s, c) = (sin, cos) of the phase chirp |ξ|²/(4π𝔣).
pub fn transfer_pair(xi_sq: f64, fresnel: f64) -> (f64, f64) {
    let chi = xi_sq / (4.0 * std::f64::consts::PI * fresnel);
    chi.sin_cos()
}

/// Per-frequency transfer quantities s_j, c_j on the padded grid.
#[derive(Clone, Debug)]
pub struct TransferSpectrum {
    pub grid: Grid2D,
    pub fresnel_numbers: Vec<f64>,
    pub s: Vec<Array2<f64>>,
    pub c: Vec<Array2<f64>>,
}

/// Sums over j of s², c² and s·c, used by the closed-form inversion.
#[derive(Clone, Debug)]
pub struct TransferSums {
    pub ss: Array2<f64>,
    pub cc: Array2<f64>,
    pub sc: Array2<f64>,
}

pub fn build_spectrum(fresnel_numbers: &[f64], grid: &Grid2D) -> Result<TransferSpectrum> {
    if fresnel_numbers.is_empty() {
        return Err(Error::InvalidConfig("need at least one Fresnel number".into()));
    }
    let xi_sq = grid.freq_sq();
    let mut s = Vec::with_capacity(fresnel_numbers.len());
    let mut c = Vec::with_capacity(fresnel_numbers.len());
    for &f in fresnel_numbers {
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::InvalidGeometry(format!("Fresnel number must be positive, got {f}")));
        }
        let mut sj = Array2::zeros(xi_sq.dim());
        let mut cj = Array2::zeros(xi_sq.dim());
        Zip::from(&mut sj).and(&mut cj).and(&xi_sq).for_each(|sv, cv, &q| {
            let (si, co) = transfer_pair(q, f);
            *sv = si;
            *cv = co;
        });
        s.push(sj);
        c.push(cj);
    }
    Ok(TransferSpectrum { grid: *grid, fresnel_numbers: fresnel_numbers.to_vec(), s, c })
}

impl TransferSpectrum {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn sums(&self) -> TransferSums {
        let shape = self.s[0].dim();
        let mut ss = Array2::zeros(shape);
        let mut cc = Array2::zeros(shape);
        let mut sc = Array2::zeros(shape);
        for (sj, cj) in self.s.iter().zip(self.c.iter()) {
            Zip::from(&mut ss).and(sj).for_each(|a, &v| *a += v * v);
            Zip::from(&mut cc).and(cj).for_each(|a, &v| *a += v * v);
            Zip::from(&mut sc).and(sj).and(cj).for_each(|a, &s, &c| *a += s * c);
        }
        TransferSums { ss, cc, sc }
    }
}

/// Zero-pad a real field and transform it on the padded grid.
pub(crate) fn padded_fft(x: &Array2<f64>, grid: &Grid2D, fft: &Fft2) -> Result<Array2<Complex64>> {
    let padded = grid::pad(&grid::to_complex(x), grid, PadMode::Zero)?;
    fft.forward(&padded)
}

/// Inverse-transform, take the real part and crop to the original region.
pub(crate) fn ifft_real_crop(x: &Array2<Complex64>, grid: &Grid2D, fft: &Fft2) -> Result<Array2<f64>> {
    let field = fft.inverse(x)?;
    grid::crop(&grid::real_part(&field), grid)
}

/// Linear CTF forward model: I_j = 1 + 2𝓕⁻¹(s_j·𝓕φ + c_j·𝓕μ).
pub fn ctf_forward(obj: &ComplexObject, spec: &TransferSpectrum) -> Result<HologramStack> {
    if obj.grid != spec.grid {
        return Err(Error::GridMismatch("ctf_forward: object vs spectrum".into()));
    }
    let fft = Fft2::for_grid(&obj.grid);
    let phi_hat = padded_fft(&obj.phi, &obj.grid, &fft)?;
    let mu_hat = padded_fft(&obj.mu, &obj.grid, &fft)?;
    let mut images = Vec::with_capacity(spec.len());
    for (sj, cj) in spec.s.iter().zip(spec.c.iter()) {
        let mut hat = Array2::zeros(phi_hat.dim());
        Zip::from(&mut hat)
            .and(&phi_hat)
            .and(&mu_hat)
            .and(sj)
            .and(cj)
            .for_each(|h, &p, &m, &s, &c| *h = 2.0 * (p * s + m * c));
        let mut im = ifft_real_crop(&hat, &obj.grid, &fft)?;
        im.mapv_inplace(|v| v + 1.0);
        images.push(im);
    }
    HologramStack::new(obj.grid, images, spec.fresnel_numbers.clone())
}

/// Adjoint of the linear CTF model applied to residuals r_j = I_j − 1:
/// 𝓕φ* = 2Σ_j s_j·𝓕r_j, 𝓕μ* = 2Σ_j c_j·𝓕r_j.
pub fn ctf_adjoint(residuals: &[Array2<f64>], spec: &TransferSpectrum) -> Result<ComplexObject> {
    if residuals.len() != spec.len() {
        return Err(Error::GridMismatch("ctf_adjoint: residual count vs spectrum".into()));
    }
    let grid = spec.grid;
    let fft = Fft2::for_grid(&grid);
    let shape = grid.padded_shape();
    let mut phi_hat = Array2::<Complex64>::zeros(shape);
    let mut mu_hat = Array2::<Complex64>::zeros(shape);
    for ((r, sj), cj) in residuals.iter().zip(spec.s.iter()).zip(spec.c.iter()) {
        let r_hat = padded_fft(r, &grid, &fft)?;
        Zip::from(&mut phi_hat).and(&r_hat).and(sj).for_each(|a, &v, &s| *a += 2.0 * s * v);
        Zip::from(&mut mu_hat).and(&r_hat).and(cj).for_each(|a, &v, &c| *a += 2.0 * c * v);
    }
    let phi = ifft_real_crop(&phi_hat, &grid, &fft)?;
    let mu = ifft_real_crop(&mu_hat, &grid, &fft)?;
    ComplexObject::new(grid, phi, mu)
}

/// Homogeneous-object CTF forward model: I_j = 1 + 2𝓕⁻¹((s_j + γc_j)·𝓕φ).
pub fn hom_forward(phi: &Array2<f64>, grid: &Grid2D, gamma: f64, spec: &TransferSpectrum) -> Result<HologramStack> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidConfig(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    if *grid != spec.grid {
        return Err(Error::GridMismatch("hom_forward: grid vs spectrum".into()));
    }
    let fft = Fft2::for_grid(grid);
    let phi_hat = padded_fft(phi, grid, &fft)?;
    let mut images = Vec::with_capacity(spec.len());
    for (sj, cj) in spec.s.iter().zip(spec.c.iter()) {
        let mut hat = Array2::zeros(phi_hat.dim());
        Zip::from(&mut hat)
            .and(&phi_hat)
            .and(sj)
            .and(cj)
            .for_each(|h, &p, &s, &c| *h = 2.0 * (s + gamma * c) * p);
        let mut im = ifft_real_crop(&hat, grid, &fft)?;
        im.mapv_inplace(|v| v + 1.0);
        images.push(im);
    }
    HologramStack::new(*grid, images, spec.fresnel_numbers.clone())
}

/// Adjoint of the homogeneous model: 𝓕φ* = 2Σ_j (s_j + γc_j)·𝓕r_j.
pub fn hom_adjoint(residuals: &[Array2<f64>], gamma: f64, spec: &TransferSpectrum) -> Result<Array2<f64>> {
    if residuals.len() != spec.len() {
        return Err(Error::GridMismatch("hom_adjoint: residual count vs spectrum".into()));
    }
    let grid = spec.grid;
    let fft = Fft2::for_grid(&grid);
    let mut phi_hat = Array2::<Complex64>::zeros(grid.padded_shape());
    for ((r, sj), cj) in residuals.iter().zip(spec.s.iter()).zip(spec.c.iter()) {
        let r_hat = padded_fft(r, &grid, &fft)?;
        Zip::from(&mut phi_hat)
            .and(&r_hat)
            .and(sj)
            .and(cj)
            .for_each(|a, &v, &s, &c| *a += 2.0 * (s + gamma * c) * v);
    }
    ifft_real_crop(&phi_hat, &grid, &fft)
}
