//! Exact (nonlinear) Fresnel free-space propagation and the holographic
//! forward operator used as simulation oracle.
//!
//! Propagation is the Fourier multiplier m_𝔣(ξ) = exp(−i|ξ|²/(4π𝔣)) on the
//! padded grid; the forward intensity is |𝒟(exp(μ + iφ))|² cropped back to
//! the original region.

use ndarray::Array2;
use num_complex::Complex64;

use crate::ctf::ComplexObject;
use crate::grid::{self, Fft2, PadMode};
use crate::{Error, Result};

/// Dimensionless pixel Fresnel number 𝔣 = s²/(λ·z₁₂).
///
/// `+∞` is admitted and acts as the identity propagator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FresnelNumber(f64);

impl FresnelNumber {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value <= 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "Fresnel number must be positive, got {value}"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }
}

/// Imaging geometry in SI units; `source_distance` present means cone beam.
#[derive(Clone, Copy, Debug)]
pub struct Geometry {
    pub wavelength: f64,
    pub distance: f64,
    pub pixel_size: f64,
    pub source_distance: Option<f64>,
}

/// Pixel Fresnel number from the geometry.
///
/// With a source distance present the Fresnel scaling theorem applies:
/// magnification M = (z₀₁ + z₁₂)/z₀₁, effective distance z₁₂/M, effective
/// pixel s/M.
pub fn fresnel_number(geom: &Geometry) -> Result<FresnelNumber> {
    let positive = |v: f64, name: &str| -> Result<f64> {
        if !v.is_finite() || v <= 0.0 {
            Err(Error::InvalidGeometry(format!("{name} must be positive, got {v}")))
        } else {
            Ok(v)
        }
    };
    let lambda = positive(geom.wavelength, "wavelength")?;
    let z12 = positive(geom.distance, "distance")?;
    let s = positive(geom.pixel_size, "pixel_size")?;
    let (s_eff, z_eff) = match geom.source_distance {
        None => (s, z12),
        Some(z01) => {
            let z01 = positive(z01, "source_distance")?;
            let m = (z01 + z12) / z01;
            (s / m, z12 / m)
        }
    };
    FresnelNumber::new(s_eff * s_eff / (lambda * z_eff))
}

fn transfer(xi_sq: f64, f: f64) -> Complex64 {
    Complex64::from_polar(1.0, -xi_sq / (4.0 * std::f64::consts::PI * f))
}

fn propagate_with(psi: &Array2<Complex64>, f: FresnelNumber, conjugate: bool) -> Result<Array2<Complex64>> {
    if f.is_infinite() {
        return Ok(psi.to_owned());
    }
    let (h, w) = psi.dim();
    let fft = Fft2::new(h, w);
    let mut spec = fft.forward(psi)?;
    let xi_sq = grid::freq_sq_for(h, w);
    for (v, &q) in spec.iter_mut().zip(xi_sq.iter()) {
        let m = transfer(q, f.value());
        *v *= if conjugate { m.conj() } else { m };
    }
    fft.inverse(&spec)
}

/// Fresnel propagation 𝓕⁻¹(m_𝔣 · 𝓕ψ); norm-preserving.
pub fn propagate(psi: &Array2<Complex64>, f: FresnelNumber) -> Result<Array2<Complex64>> {
    propagate_with(psi, f, false)
}

/// Inverse propagation via the conjugate transfer function.
pub fn backpropagate(psi: &Array2<Complex64>, f: FresnelNumber) -> Result<Array2<Complex64>> {
    propagate_with(psi, f, true)
}

/// Hologram intensity I = |𝒟(exp(μ + iφ))|² on the unpadded grid.
///
/// The transmission exp(f) is replicate-padded, so an object with empty
/// margins sees an exactly unit background.
pub fn forward_intensity(obj: &ComplexObject, f: FresnelNumber) -> Result<Array2<f64>> {
    let grid = &obj.grid;
    let trans = ndarray::Zip::from(&obj.phi)
        .and(&obj.mu)
        .map_collect(|&p, &m| Complex64::from_polar(m.exp(), p));
    let padded = grid::pad(&trans, grid, PadMode::Replicate)?;
    let prop = propagate(&padded, f)?;
    let intensity = prop.mapv(|v| v.norm_sqr());
    grid::crop(&intensity, grid)
}
