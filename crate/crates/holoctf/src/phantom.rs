//! Synthetic two-material colloid phantoms: projected spheres under the
//! projection approximation (φ = −k∫δ dz, μ = −k∫β dz), plus photon noise.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Deserialize;

use crate::ctf::{ComplexObject, HologramStack};
use crate::fresnel::{self, FresnelNumber};
use crate::grid::Grid2D;
use crate::{Error, Result};

/// hc in eV·m; λ[m] = hc / (E[keV]·1000).
pub const HC_EV_M: f64 = 1.23984193e-6;

pub fn wavelength_m(energy_kev: f64) -> f64 {
    HC_EV_M / (energy_kev * 1e3)
}

/// Refractive index parts per n = 1 − δ + iβ.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialSpec {
    pub name: String,
    pub delta: f64,
    pub beta: f64,
}

impl MaterialSpec {
    pub fn new(name: impl Into<String>, delta: f64, beta: f64) -> Result<Self> {
        if !(delta > 0.0) || !(beta >= 0.0) || !delta.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "material needs delta > 0 and beta >= 0, got delta={delta}, beta={beta}"
            )));
        }
        Ok(Self { name: name.into(), delta, beta })
    }

    pub fn gamma(&self) -> f64 {
        self.beta / self.delta
    }

    /// Built-in presets at 13.8 keV.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "SiO2" => Some(Self { name: "SiO2".into(), delta: 1.86e-6, beta: 1.60e-8 }),
            "PS" => Some(Self { name: "PS".into(), delta: 1.23e-6, beta: 7.08e-10 }),
            _ => None,
        }
    }
}

/// Sphere center (x, y) and radius in pixel units.
#[derive(Clone, Debug)]
pub struct SphereSpec {
    pub center: (f64, f64),
    pub radius: f64,
    pub material: MaterialSpec,
}

impl SphereSpec {
    /// True if any part of the projected disk falls outside the grid.
    pub fn clips(&self, grid: &Grid2D) -> bool {
        let (cx, cy) = self.center;
        cx - self.radius < 0.0
            || cy - self.radius < 0.0
            || cx + self.radius > (grid.width - 1) as f64
            || cy + self.radius > (grid.height - 1) as f64
    }
}

#[derive(Clone, Debug)]
pub struct PhantomConfig {
    pub grid: Grid2D,
    /// Pixel size in meters; converts projected thickness to path length.
    pub pixel_size: f64,
    pub energy_kev: f64,
    pub spheres: Vec<SphereSpec>,
    /// Expected photons per pixel for Poisson noise; `None` = noiseless.
    pub photon_count: Option<f64>,
    pub rng_seed: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MaterialRef {
    Name(String),
    Inline { name: Option<String>, delta: f64, beta: f64 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereFile {
    center: [f64; 2],
    radius_px: f64,
    material: MaterialRef,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhantomConfigFile {
    height: usize,
    width: usize,
    #[serde(default = "default_pad")]
    pad_factor: f64,
    pixel_size_m: f64,
    #[serde(rename = "energy_keV")]
    energy_kev: f64,
    #[serde(default)]
    spheres: Vec<SphereFile>,
    #[serde(default)]
    photon_count: Option<f64>,
    #[serde(default)]
    rng_seed: u64,
}

fn default_pad() -> f64 {
    Grid2D::DEFAULT_PAD_FACTOR
}

impl PhantomConfig {
    /// Parse the documented JSON schema. Materials may be given inline or by
    /// preset name ("SiO2", "PS").
    pub fn from_json(text: &str) -> Result<Self> {
        let file: PhantomConfigFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let grid = Grid2D::new(file.height, file.width, file.pad_factor)?;
        if !(file.pixel_size_m > 0.0) || !(file.energy_kev > 0.0) {
            return Err(Error::InvalidConfig("pixel_size_m and energy_keV must be positive".into()));
        }
        if let Some(p) = file.photon_count {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::InvalidConfig(format!("photon_count must be positive, got {p}")));
            }
        }
        let mut spheres = Vec::with_capacity(file.spheres.len());
        for s in file.spheres {
            if !(s.radius_px > 0.0) {
                return Err(Error::InvalidConfig(format!("sphere radius must be positive, got {}", s.radius_px)));
            }
            let material = match s.material {
                MaterialRef::Name(name) => MaterialSpec::preset(&name).ok_or_else(|| {
                    Error::InvalidConfig(format!("unknown material preset '{name}' (built in: SiO2, PS)"))
                })?,
                MaterialRef::Inline { name, delta, beta } => {
                    MaterialSpec::new(name.unwrap_or_else(|| "custom".into()), delta, beta)?
                }
            };
            spheres.push(SphereSpec { center: (s.center[0], s.center[1]), radius: s.radius_px, material });
        }
        Ok(Self {
            grid,
            pixel_size: file.pixel_size_m,
            energy_kev: file.energy_kev,
            spheres,
            photon_count: file.photon_count,
            rng_seed: file.rng_seed,
        })
    }
}

const SUBSAMPLES: [f64; 4] = [-0.375, -0.125, 0.125, 0.375];

/// Projected sphere thickness at pixel (x, y), 4×4 subpixel-averaged, in
/// pixel units.
fn thickness(sphere: &SphereSpec, x: f64, y: f64) -> f64 {
    let r2 = sphere.radius * sphere.radius;
    let mut acc = 0.0;
    for dy in SUBSAMPLES {
        for dx in SUBSAMPLES {
            let rx = x + dx - sphere.center.0;
            let ry = y + dy - sphere.center.1;
            let rho2 = rx * rx + ry * ry;
            if rho2 < r2 {
                acc += 2.0 * (r2 - rho2).sqrt();
            }
        }
    }
    acc / 16.0
}

/// Projection-approximation ground truth: overlapping spheres add.
pub fn project(config: &PhantomConfig) -> ComplexObject {
    let (h, w) = config.grid.shape();
    let k = 2.0 * std::f64::consts::PI / wavelength_m(config.energy_kev);
    let mut phi = Array2::<f64>::zeros((h, w));
    let mut mu = Array2::<f64>::zeros((h, w));
    for sphere in &config.spheres {
        let (cx, cy) = sphere.center;
        let r = sphere.radius + 1.0;
        let y0 = ((cy - r).floor().max(0.0)) as usize;
        let y1 = ((cy + r).ceil().min((h - 1) as f64)) as usize;
        let x0 = ((cx - r).floor().max(0.0)) as usize;
        let x1 = ((cx + r).ceil().min((w - 1) as f64)) as usize;
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let t_px = thickness(sphere, ix as f64, iy as f64);
                if t_px > 0.0 {
                    let t_m = t_px * config.pixel_size;
                    phi[(iy, ix)] -= k * sphere.material.delta * t_m;
                    mu[(iy, ix)] -= k * sphere.material.beta * t_m;
                }
            }
        }
    }
    ComplexObject { grid: config.grid, phi, mu }
}

/// Simulate holograms of an object with the nonlinear Fresnel forward model,
/// optionally Poisson-degraded at `photon_count` expected photons per pixel.
pub fn simulate(
    object: &ComplexObject,
    fresnel_numbers: &[f64],
    photon_count: Option<f64>,
    rng_seed: u64,
) -> Result<HologramStack> {
    let mut images = fresnel_numbers
        .par_iter()
        .map(|&f| fresnel::forward_intensity(object, FresnelNumber::new(f)?))
        .collect::<Result<Vec<_>>>()?;
    if let Some(count) = photon_count {
        if !(count > 0.0) || !count.is_finite() {
            return Err(Error::InvalidConfig(format!("photon_count must be positive, got {count}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for im in &mut images {
            for v in im.iter_mut() {
                let lambda = (count * *v).max(0.0);
                *v = if lambda > 0.0 {
                    Poisson::new(lambda).expect("positive mean").sample(&mut rng) / count
                } else {
                    0.0
                };
            }
        }
    }
    HologramStack::new(object.grid, images, fresnel_numbers.to_vec())
}

/// Project the configured phantom and simulate its holograms; returns the
/// stack with the ground truth.
pub fn synthesize(config: &PhantomConfig, fresnel_numbers: &[f64]) -> Result<(HologramStack, ComplexObject)> {
    let truth = project(config);
    let stack = simulate(&truth, fresnel_numbers, config.photon_count, config.rng_seed)?;
    Ok((stack, truth))
}
