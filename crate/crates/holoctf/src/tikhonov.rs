//! Closed-form frequency-weighted Tikhonov inversion of the stacked CTF
//! system, for both the inhomogeneous (φ, μ) and homogeneous (φ only) models.
//!
//! Per frequency the normal equations read (M*M + A*A)f̂ = M*𝓕(I−1) with
//! M = 2(s_j c_j) stacked over j and A = diag(2√α_φ, 2√α_μ). Solved with the
//! explicit adjugate and the factor-16 determinant
//! D = 16{α_μα_φ + α_μΣs² + α_φΣc² + Σs²Σc² − (Σsc)²}.

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::ctf::{self, HologramStack, TransferSpectrum, TransferSums};
use crate::ctf::ComplexObject;
use crate::grid::{Fft2, Grid2D};
use crate::{Error, Result};

/// Frequency-dependent weights α_φ(ξ), α_μ(ξ) on the padded grid.
#[derive(Clone, Debug)]
pub struct RegularizationProfile {
    pub alpha_phi: Array2<f64>,
    pub alpha_mu: Array2<f64>,
}

impl RegularizationProfile {
    pub fn new(alpha_phi: Array2<f64>, alpha_mu: Array2<f64>) -> Result<Self> {
        for a in alpha_phi.iter().chain(alpha_mu.iter()) {
            if !a.is_finite() || *a < 0.0 {
                return Err(Error::InvalidConfig(format!("alpha must be finite and >= 0, got {a}")));
            }
        }
        if alpha_phi.dim() != alpha_mu.dim() {
            return Err(Error::GridMismatch("alpha_phi vs alpha_mu".into()));
        }
        Ok(Self { alpha_phi, alpha_mu })
    }

    pub fn constant(grid: &Grid2D, alpha_phi: f64, alpha_mu: f64) -> Result<Self> {
        let shape = grid.padded_shape();
        Self::new(Array2::from_elem(shape, alpha_phi), Array2::from_elem(shape, alpha_mu))
    }

    pub fn two_level(grid: &Grid2D, phi: &TwoLevelProfileSpec, mu: &TwoLevelProfileSpec) -> Result<Self> {
        Self::new(build_two_level(phi, grid)?, build_two_level(mu, grid)?)
    }
}

/// Scalar-channel weights α_γ(ξ) for the homogeneous model.
#[derive(Clone, Debug)]
pub struct HomRegularization {
    pub alpha_gamma: Array2<f64>,
}

impl HomRegularization {
    pub fn new(alpha_gamma: Array2<f64>) -> Result<Self> {
        for a in alpha_gamma.iter() {
            if !a.is_finite() || *a < 0.0 {
                return Err(Error::InvalidConfig(format!("alpha must be finite and >= 0, got {a}")));
            }
        }
        Ok(Self { alpha_gamma })
    }

    pub fn constant(grid: &Grid2D, alpha: f64) -> Result<Self> {
        Self::new(Array2::from_elem(grid.padded_shape(), alpha))
    }

    pub fn two_level(grid: &Grid2D, spec: &TwoLevelProfileSpec) -> Result<Self> {
        Self::new(build_two_level(spec, grid)?)
    }
}

/// Two-level frequency regularization with transition at the first
/// pure-phase CTF maximum |ξ|_c = √(2π²·cutoff_fresnel).
#[derive(Clone, Copy, Debug)]
pub struct TwoLevelProfileSpec {
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub cutoff_fresnel: f64,
    /// Radial blend band as a fraction of the cutoff radius; 0 = hard step.
    pub transition_width: f64,
}

impl TwoLevelProfileSpec {
    pub fn cutoff_radius(&self) -> f64 {
        (2.0 * std::f64::consts::PI.powi(2) * self.cutoff_fresnel).sqrt()
    }
}

/// Evaluate a two-level profile on the padded frequency grid.
pub fn build_two_level(spec: &TwoLevelProfileSpec, grid: &Grid2D) -> Result<Array2<f64>> {
    if !(spec.alpha_low >= 0.0) || !(spec.alpha_high >= 0.0) {
        return Err(Error::InvalidConfig("two-level alphas must be >= 0".into()));
    }
    if !(spec.cutoff_fresnel > 0.0) || !spec.cutoff_fresnel.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "cutoff_fresnel must be positive, got {}",
            spec.cutoff_fresnel
        )));
    }
    if !(spec.transition_width >= 0.0) {
        return Err(Error::InvalidConfig("transition_width must be >= 0".into()));
    }
    let rc = spec.cutoff_radius();
    let w = spec.transition_width;
    let out = grid.freq_sq().mapv(|q| {
        let r = q.sqrt();
        if w == 0.0 {
            if r < rc {
                spec.alpha_low
            } else {
                spec.alpha_high
            }
        } else {
            let r0 = rc * (1.0 - 0.5 * w);
            let r1 = rc * (1.0 + 0.5 * w);
            let t = ((r - r0) / (r1 - r0)).clamp(0.0, 1.0);
            let blend = t * t * (3.0 - 2.0 * t); // smooth monotone sigmoid
            spec.alpha_low + (spec.alpha_high - spec.alpha_low) * blend
        }
    });
    Ok(out)
}

/// Singularity guard threshold, dimensionally consistent with D's 16·J²
/// magnitude.
pub fn eps_d(j: usize) -> f64 {
    1e-14 * 16.0 * (j * j) as f64
}

/// Closed-form determinant D of M*M + A*A per frequency.
pub fn determinant(spec: &TransferSpectrum, reg: &RegularizationProfile) -> Array2<f64> {
    let sums = spec.sums();
    determinant_from(&sums, &reg.alpha_phi, &reg.alpha_mu)
}

pub(crate) fn determinant_from(sums: &TransferSums, alpha_phi: &Array2<f64>, alpha_mu: &Array2<f64>) -> Array2<f64> {
    let mut d = Array2::zeros(sums.ss.dim());
    Zip::from(&mut d)
        .and(&sums.ss)
        .and(&sums.cc)
        .and(&sums.sc)
        .and(alpha_phi)
        .for_each(|dv, &ss, &cc, &sc, &ap| {
            *dv = ap * cc + ss * cc - sc * sc;
        });
    Zip::from(&mut d)
        .and(&sums.ss)
        .and(alpha_phi)
        .and(alpha_mu)
        .for_each(|dv, &ss, &ap, &am| {
            *dv = 16.0 * (am * ap + am * ss + *dv);
        });
    d
}

/// Accumulate v_s = Σ_j s_j·𝓕(I_j−1) and v_c = Σ_j c_j·𝓕(I_j−1).
pub(crate) fn weighted_residual_sums(
    stack: &HologramStack,
    spec: &TransferSpectrum,
    fft: &Fft2,
) -> Result<(Array2<Complex64>, Array2<Complex64>)> {
    let shape = stack.grid.padded_shape();
    let mut vs = Array2::<Complex64>::zeros(shape);
    let mut vc = Array2::<Complex64>::zeros(shape);
    for ((im, sj), cj) in stack.images.iter().zip(spec.s.iter()).zip(spec.c.iter()) {
        let r = im.mapv(|v| v - 1.0);
        let r_hat = ctf::padded_fft(&r, &stack.grid, fft)?;
        Zip::from(&mut vs).and(&r_hat).and(sj).for_each(|a, &v, &s| *a += s * v);
        Zip::from(&mut vc).and(&r_hat).and(cj).for_each(|a, &v, &c| *a += c * v);
    }
    Ok((vs, vc))
}

/// Solve (M*M + A*A)x = b per frequency via the adjugate:
/// x = 4·adj(·)·b / D with adj = [[α_μ+Σc², −Σsc], [−Σsc, α_φ+Σs²]].
/// `d` is the precomputed factor-16 determinant for the same alphas.
pub(crate) fn solve_normal_equations(
    sums: &TransferSums,
    alpha_phi: &Array2<f64>,
    alpha_mu: &Array2<f64>,
    d: &Array2<f64>,
    b1: &Array2<Complex64>,
    b2: &Array2<Complex64>,
) -> (Array2<Complex64>, Array2<Complex64>) {
    let mut x1 = Array2::<Complex64>::zeros(b1.dim());
    let mut x2 = Array2::<Complex64>::zeros(b2.dim());
    Zip::from(&mut x1)
        .and(&mut x2)
        .and(b1)
        .and(b2)
        .and(&sums.sc)
        .for_each(|o1, o2, &r1, &r2, &sc| {
            *o1 = -sc * r2;
            *o2 = -sc * r1;
        });
    Zip::from(&mut x1)
        .and(b1)
        .and(&sums.cc)
        .and(alpha_mu)
        .and(d)
        .for_each(|o, &r1, &cc, &am, &dv| {
            *o = (*o + (am + cc) * r1) * (4.0 / dv);
        });
    Zip::from(&mut x2)
        .and(b2)
        .and(&sums.ss)
        .and(alpha_phi)
        .and(d)
        .for_each(|o, &r2, &ss, &ap, &dv| {
            *o = (*o + (ap + ss) * r2) * (4.0 / dv);
        });
    (x1, x2)
}

/// Closed-form Tikhonov inversion of the stacked CTF system.
pub fn invert(stack: &HologramStack, reg: &RegularizationProfile) -> Result<ComplexObject> {
    let grid = stack.grid;
    if reg.alpha_phi.dim() != grid.padded_shape() {
        return Err(Error::GridMismatch("regularization profile vs padded grid".into()));
    }
    let spec = ctf::build_spectrum(&stack.fresnel_numbers, &grid)?;
    let sums = spec.sums();
    let d = determinant_from(&sums, &reg.alpha_phi, &reg.alpha_mu);
    let eps = eps_d(stack.len());
    let count = d.iter().filter(|&&v| v <= eps).count();
    if count > 0 {
        return Err(Error::SingularSystem { eps, count });
    }
    let fft = Fft2::for_grid(&grid);
    let (vs, vc) = weighted_residual_sums(stack, &spec, &fft)?;
    let b1 = vs.mapv(|v| v * 2.0);
    let b2 = vc.mapv(|v| v * 2.0);
    let (phi_hat, mu_hat) = solve_normal_equations(&sums, &reg.alpha_phi, &reg.alpha_mu, &d, &b1, &b2);
    let phi = ctf::ifft_real_crop(&phi_hat, &grid, &fft)?;
    let mu = ctf::ifft_real_crop(&mu_hat, &grid, &fft)?;
    ComplexObject::new(grid, phi, mu)
}

/// Scalar per-frequency inversion of the homogeneous model:
/// 𝓕φ† = [Σ_j 2(s_j+γc_j)·𝓕(I_j−1)] / [4Σ_j(s_j+γc_j)² + 4α_γ].
pub fn invert_hom(stack: &HologramStack, gamma: f64, reg: &HomRegularization) -> Result<Array2<f64>> {
    let grid = stack.grid;
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidConfig(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    if reg.alpha_gamma.dim() != grid.padded_shape() {
        return Err(Error::GridMismatch("regularization profile vs padded grid".into()));
    }
    let spec = ctf::build_spectrum(&stack.fresnel_numbers, &grid)?;
    let denom = hom_denominator(&spec, gamma, &reg.alpha_gamma);
    let eps = 1e-14 * 4.0 * (stack.len() * stack.len()) as f64;
    let count = denom.iter().filter(|&&v| v <= eps).count();
    if count > 0 {
        return Err(Error::SingularSystem { eps, count });
    }
    let fft = Fft2::for_grid(&grid);
    let num = hom_weighted_residual_sum(stack, &spec, gamma, &fft)?;
    let mut phi_hat = num;
    Zip::from(&mut phi_hat).and(&denom).for_each(|v, &q| *v = *v * (2.0 / q));
    ctf::ifft_real_crop(&phi_hat, &grid, &fft)
}

/// 4Σ_j(s_j+γc_j)² + 4α_γ per frequency.
pub(crate) fn hom_denominator(spec: &TransferSpectrum, gamma: f64, alpha_gamma: &Array2<f64>) -> Array2<f64> {
    let mut denom = alpha_gamma.mapv(|a| 4.0 * a);
    for (sj, cj) in spec.s.iter().zip(spec.c.iter()) {
        Zip::from(&mut denom).and(sj).and(cj).for_each(|d, &s, &c| {
            let q = s + gamma * c;
            *d += 4.0 * q * q;
        });
    }
    denom
}

/// Σ_j (s_j+γc_j)·𝓕(I_j−1).
pub(crate) fn hom_weighted_residual_sum(
    stack: &HologramStack,
    spec: &TransferSpectrum,
    gamma: f64,
    fft: &Fft2,
) -> Result<Array2<Complex64>> {
    let mut acc = Array2::<Complex64>::zeros(stack.grid.padded_shape());
    for ((im, sj), cj) in stack.images.iter().zip(spec.s.iter()).zip(spec.c.iter()) {
        let r = im.mapv(|v| v - 1.0);
        let r_hat = ctf::padded_fft(&r, &stack.grid, fft)?;
        Zip::from(&mut acc)
            .and(&r_hat)
            .and(sj)
            .and(cj)
            .for_each(|a, &v, &s, &c| *a += (s + gamma * c) * v);
    }
    Ok(acc)
}
