//! On-disk array containers: raw little-endian f64 payloads next to a
//! `meta.json` describing dtype, layout, and shape, plus 16-bit PGM previews.
//!
//! A container directory holds either an object (`phi.raw` and optionally
//! `mu.raw`, shape `[H, W]`) or a hologram stack (`data.raw`, shape
//! `[J, H, W]` with the matching `fresnel_numbers` list).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DTYPE: &str = "f64";
pub const BYTE_ORDER: &str = "little";
pub const LAYOUT: &str = "row-major";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContainerMeta {
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub shape: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fresnel_numbers: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pixel_size_m: Option<f64>,
    #[serde(
        rename = "energy_keV",
        skip_serializing_if = "Option::is_none",
        default
    )]
    pub energy_kev: Option<f64>,
}

impl ContainerMeta {
    pub fn new(shape: Vec<usize>) -> Self {
        Self {
            dtype: DTYPE.into(),
            byte_order: BYTE_ORDER.into(),
            layout: LAYOUT.into(),
            shape,
            fresnel_numbers: None,
            pixel_size_m: None,
            energy_kev: None,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        if self.dtype != DTYPE {
            return Err(Error::Container(format!("unsupported dtype {:?}", self.dtype)));
        }
        if self.byte_order != BYTE_ORDER {
            return Err(Error::Container(format!(
                "unsupported byte order {:?}",
                self.byte_order
            )));
        }
        if self.layout != LAYOUT {
            return Err(Error::Container(format!("unsupported layout {:?}", self.layout)));
        }
        match self.shape.len() {
            2 => Ok(()),
            3 => {
                let j = self.shape[0];
                match &self.fresnel_numbers {
                    Some(f) if f.len() == j => Ok(()),
                    Some(f) => Err(Error::Container(format!(
                        "{} fresnel numbers for {} images",
                        f.len(),
                        j
                    ))),
                    None => Err(Error::Container("stack container missing fresnel_numbers".into())),
                }
            }
            r => Err(Error::Container(format!("shape rank must be 2 or 3, got {r}"))),
        }
    }
}

fn write_raw(path: &Path, data: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_raw(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected_len * 8 {
        return Err(Error::Container(format!(
            "{}: expected {} bytes, found {}",
            path.display(),
            expected_len * 8,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_meta(dir: &Path, meta: &ContainerMeta) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)?;
    fs::write(dir.join("meta.json"), text + "\n")?;
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<ContainerMeta> {
    let text = fs::read_to_string(dir.join("meta.json"))?;
    let meta: ContainerMeta = serde_json::from_str(&text)?;
    meta.validate()?;
    Ok(meta)
}

fn contiguous(x: &Array2<f64>) -> Vec<f64> {
    x.iter().copied().collect()
}

/// Write an object container: `phi.raw` and (when present) `mu.raw`.
pub fn write_object(
    dir: &Path,
    phi: &Array2<f64>,
    mu: Option<&Array2<f64>>,
    pixel_size_m: Option<f64>,
    energy_kev: Option<f64>,
) -> Result<()> {
    if let Some(mu) = mu {
        if mu.dim() != phi.dim() {
            return Err(Error::GridMismatch(format!(
                "phi {:?} vs mu {:?}",
                phi.dim(),
                mu.dim()
            )));
        }
    }
    fs::create_dir_all(dir)?;
    let (h, w) = phi.dim();
    let mut meta = ContainerMeta::new(vec![h, w]);
    meta.pixel_size_m = pixel_size_m;
    meta.energy_kev = energy_kev;
    write_meta(dir, &meta)?;
    write_raw(&dir.join("phi.raw"), &contiguous(phi))?;
    if let Some(mu) = mu {
        write_raw(&dir.join("mu.raw"), &contiguous(mu))?;
    }
    Ok(())
}

/// Read an object container; `mu.raw` is optional.
pub fn read_object(dir: &Path) -> Result<(Array2<f64>, Option<Array2<f64>>, ContainerMeta)> {
    let meta = read_meta(dir)?;
    if meta.shape.len() != 2 {
        return Err(Error::Container(format!(
            "object container must have rank-2 shape, got {:?}",
            meta.shape
        )));
    }
    let (h, w) = (meta.shape[0], meta.shape[1]);
    let to_array = |data: Vec<f64>| {
        Array2::from_shape_vec((h, w), data)
            .map_err(|e| Error::Container(format!("phi/mu reshape: {e}")))
    };
    let phi = to_array(read_raw(&dir.join("phi.raw"), h * w)?)?;
    let mu_path = dir.join("mu.raw");
    let mu = if mu_path.exists() {
        Some(to_array(read_raw(&mu_path, h * w)?)?)
    } else {
        None
    };
    Ok((phi, mu, meta))
}

/// Write a hologram stack container: `data.raw` with shape `[J, H, W]`.
pub fn write_stack(
    dir: &Path,
    images: &[Array2<f64>],
    fresnel_numbers: &[f64],
    pixel_size_m: Option<f64>,
    energy_kev: Option<f64>,
) -> Result<()> {
    if images.is_empty() {
        return Err(Error::Container("empty stack".into()));
    }
    if images.len() != fresnel_numbers.len() {
        return Err(Error::Container(format!(
            "{} images vs {} fresnel numbers",
            images.len(),
            fresnel_numbers.len()
        )));
    }
    let (h, w) = images[0].dim();
    let mut data = Vec::with_capacity(images.len() * h * w);
    for im in images {
        if im.dim() != (h, w) {
            return Err(Error::GridMismatch(format!(
                "stack image {:?} vs {:?}",
                im.dim(),
                (h, w)
            )));
        }
        data.extend(im.iter().copied());
    }
    fs::create_dir_all(dir)?;
    let mut meta = ContainerMeta::new(vec![images.len(), h, w]);
    meta.fresnel_numbers = Some(fresnel_numbers.to_vec());
    meta.pixel_size_m = pixel_size_m;
    meta.energy_kev = energy_kev;
    write_meta(dir, &meta)?;
    write_raw(&dir.join("data.raw"), &data)
}

/// Read a hologram stack container.
pub fn read_stack(dir: &Path) -> Result<(Vec<Array2<f64>>, Vec<f64>, ContainerMeta)> {
    let meta = read_meta(dir)?;
    if meta.shape.len() != 3 {
        return Err(Error::Container(format!(
            "stack container must have rank-3 shape, got {:?}",
            meta.shape
        )));
    }
    let (j, h, w) = (meta.shape[0], meta.shape[1], meta.shape[2]);
    let data = read_raw(&dir.join("data.raw"), j * h * w)?;
    let cube = Array3::from_shape_vec((j, h, w), data)
        .map_err(|e| Error::Container(format!("stack reshape: {e}")))?;
    let images: Vec<Array2<f64>> =
        (0..j).map(|k| cube.index_axis(ndarray::Axis(0), k).to_owned()).collect();
    let fresnel = meta.fresnel_numbers.clone().unwrap_or_default();
    Ok((images, fresnel, meta))
}

/// Linear min-max scaling used by a PGM preview, recorded next to it.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PreviewScale {
    pub min: f64,
    pub max: f64,
}

/// Write a 16-bit big-endian binary PGM (P5) preview with linear min-max
/// scaling, plus a `<path>.json` sidecar recording the scaling.
pub fn write_pgm16(path: &Path, img: &Array2<f64>) -> Result<PreviewScale> {
    let (h, w) = img.dim();
    if h == 0 || w == 0 {
        return Err(Error::Container("empty image".into()));
    }
    if img.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("preview image"));
    }
    let min = img.iter().copied().fold(f64::INFINITY, f64::min);
    let max = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut out = Vec::with_capacity(64 + h * w * 2);
    write!(&mut out, "P5\n{w} {h}\n65535\n")?;
    for &v in img.iter() {
        let q = if span > 0.0 {
            ((v - min) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        out.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, out)?;
    let scale = PreviewScale { min, max };
    let sidecar = path.with_extension("pgm.json");
    fs::write(sidecar, serde_json::to_string_pretty(&scale)? + "\n")?;
    Ok(scale)
}
