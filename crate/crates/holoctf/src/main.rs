//! Command-line front end: phantom synthesis, hologram simulation, CTF
//! reconstruction and stability-curve export over documented file formats.
//!
//! Exit codes: 0 success, 1 unexpected failure, 2 config/schema violation,
//! 3 grid mismatch, 4 singular system, 5 non-convergence (artifacts are
//! still written).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use holoctf::admm::{self, AdmmConfig, Channels, ConstraintKind, ConstraintSpec, ConvergenceReport};
use holoctf::container;
use holoctf::ctf::{ComplexObject, HologramStack};
use holoctf::grid::Grid2D;
use holoctf::phantom::{self, PhantomConfig};
use holoctf::stability::{self, FresnelSet};
use holoctf::tikhonov::{self, HomRegularization, RegularizationProfile, TwoLevelProfileSpec};
use holoctf::{Error, Result};

#[derive(Parser)]
#[command(
    name = "holoctf",
    version,
    about = "CTF phase retrieval for X-ray near-field holograms"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a ground-truth phase/absorption object from a JSON config.
    Phantom {
        /// Phantom description (grid, materials, spheres, noise).
        #[arg(long)]
        config: PathBuf,
        /// Output object container directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write 16-bit PGM previews.
        #[arg(long)]
        preview: bool,
    },
    /// Propagate an object to a hologram stack at the given Fresnel numbers.
    Simulate {
        /// Input object container directory.
        #[arg(long)]
        object: PathBuf,
        /// Effective pixel Fresnel numbers, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        fresnel: Vec<f64>,
        /// Expected photons per pixel; omit for a noiseless stack.
        #[arg(long)]
        photons: Option<f64>,
        /// RNG seed for the photon noise.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Padding factor for the propagation grid.
        #[arg(long, default_value_t = Grid2D::DEFAULT_PAD_FACTOR)]
        pad_factor: f64,
        /// Output stack container directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct phase (and absorption) from a hologram stack.
    Reconstruct {
        /// Input stack container directory.
        #[arg(long)]
        stack: PathBuf,
        /// Reconstruction settings (method, constraint, regularization).
        #[arg(long)]
        run: PathBuf,
        /// Output container directory (phi.raw, mu.raw for method ctf).
        #[arg(long)]
        out: PathBuf,
        /// Convergence report path; defaults to <out>/report.json.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Line profile endpoints x0,y0,x1,y1 (pixels); writes profile.csv.
        #[arg(long, value_delimiter = ',')]
        profile: Option<Vec<f64>>,
    },
    /// Export singular-value stability curves for a Fresnel-number set.
    Stability {
        /// Fresnel numbers, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        fresnel: Vec<f64>,
        /// Single-material ratio γ = β/δ for the homogeneous curve.
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        /// Largest radial frequency |ξ| to sample.
        #[arg(long = "xi-max", default_value_t = 3.0)]
        xi_max: f64,
        /// Number of radial samples.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    if let Ok(threads) = std::env::var("HOLOCTF_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: HOLOCTF_THREADS must be a positive integer, got {threads:?}");
                std::process::exit(2);
            }
        }
    }
    let cli = Cli::parse();
    let code = match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::InvalidConstraint(_) | Error::Json(_) => 2,
        Error::GridMismatch(_) | Error::InvalidGeometry(_) => 3,
        Error::SingularSystem { .. } => 4,
        _ => 1,
    }
}

fn run(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Phantom { config, out, preview } => cmd_phantom(&config, &out, preview),
        Cmd::Simulate { object, fresnel, photons, seed, pad_factor, out } => {
            cmd_simulate(&object, &fresnel, photons, seed, pad_factor, &out)
        }
        Cmd::Reconstruct { stack, run, out, report, profile } => {
            cmd_reconstruct(&stack, &run, &out, report.as_deref(), profile.as_deref())
        }
        Cmd::Stability { fresnel, gamma, xi_max, samples, out } => {
            cmd_stability(&fresnel, gamma, xi_max, samples, &out)
        }
    }
}

fn cmd_phantom(config: &Path, out: &Path, preview: bool) -> Result<i32> {
    let text = fs::read_to_string(config)?;
    let cfg = PhantomConfig::from_json(&text)?;
    let obj = phantom::project(&cfg);
    container::write_object(out, &obj.phi, Some(&obj.mu), Some(cfg.pixel_size), Some(cfg.energy_kev))?;
    if preview {
        container::write_pgm16(&out.join("phi.pgm"), &obj.phi)?;
        container::write_pgm16(&out.join("mu.pgm"), &obj.mu)?;
    }
    Ok(0)
}

fn cmd_simulate(
    object: &Path,
    fresnel: &[f64],
    photons: Option<f64>,
    seed: u64,
    pad_factor: f64,
    out: &Path,
) -> Result<i32> {
    let (phi, mu, meta) = container::read_object(object)?;
    let (h, w) = phi.dim();
    let grid = Grid2D::new(h, w, pad_factor)?;
    let mu = mu.unwrap_or_else(|| Array2::zeros((h, w)));
    let obj = ComplexObject::new(grid, phi, mu)?;
    let stack = phantom::simulate(&obj, fresnel, photons, seed)?;
    container::write_stack(out, &stack.images, fresnel, meta.pixel_size_m, meta.energy_kev)?;
    Ok(0)
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Method {
    Ctf,
    Homctf,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ConstraintFile {
    None,
    Nonpositive,
    Box { lo: f64, hi: f64 },
    /// Mask read from an object container: phi.raw nonzero = inside.
    Support { mask: PathBuf },
}

#[derive(Deserialize, Clone, Copy, Default)]
#[serde(rename_all = "snake_case")]
enum ChannelsFile {
    PhiOnly,
    #[default]
    Both,
}

#[derive(Deserialize)]
struct RunConstraint {
    #[serde(flatten)]
    kind: ConstraintFile,
    #[serde(default)]
    channels: ChannelsFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    method: Method,
    #[serde(default)]
    constraint: Option<RunConstraint>,
    gamma: Option<f64>,
    alpha_phi_low: Option<f64>,
    alpha_phi_high: Option<f64>,
    alpha_mu_low: Option<f64>,
    alpha_mu_high: Option<f64>,
    alpha_gamma_low: Option<f64>,
    alpha_gamma_high: Option<f64>,
    /// Two-level transition frequency; defaults to the largest Fresnel number
    /// in the stack.
    cutoff_fresnel: Option<f64>,
    #[serde(default)]
    transition_width: f64,
    tau: Option<f64>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    accelerate: Option<bool>,
    restart: Option<bool>,
    pad_factor: Option<f64>,
}

#[derive(Serialize)]
struct ReportFile {
    method: &'static str,
    solver: &'static str,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    admm: Option<ConvergenceReport>,
}

fn load_constraint(rc: &Option<RunConstraint>) -> Result<ConstraintSpec> {
    let Some(rc) = rc else { return Ok(ConstraintSpec::none()) };
    let kind = match &rc.kind {
        ConstraintFile::None => ConstraintKind::None,
        ConstraintFile::Nonpositive => ConstraintKind::Nonpositive,
        ConstraintFile::Box { lo, hi } => ConstraintKind::Box { lo: *lo, hi: *hi },
        ConstraintFile::Support { mask } => {
            let (field, _, _) = container::read_object(mask)?;
            ConstraintKind::Support(field.mapv(|v| v != 0.0))
        }
    };
    let channels = match rc.channels {
        ChannelsFile::PhiOnly => Channels::PhiOnly,
        ChannelsFile::Both => Channels::Both,
    };
    Ok(ConstraintSpec { kind, channels })
}

fn cmd_reconstruct(
    stack_dir: &Path,
    run_path: &Path,
    out: &Path,
    report_path: Option<&Path>,
    profile: Option<&[f64]>,
) -> Result<i32> {
    let text = fs::read_to_string(run_path)?;
    let run: RunConfig =
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", run_path.display())))?;

    let (images, fresnel, meta) = container::read_stack(stack_dir)?;
    if fresnel.is_empty() {
        return Err(Error::InvalidConfig("stack has no Fresnel numbers".into()));
    }
    let (h, w) = images[0].dim();
    let grid = Grid2D::new(h, w, run.pad_factor.unwrap_or(Grid2D::DEFAULT_PAD_FACTOR))?;
    let stack = HologramStack::new(grid, images, fresnel.clone())?;

    let constraint = load_constraint(&run.constraint)?;
    let cutoff = run.cutoff_fresnel.unwrap_or_else(|| fresnel.iter().cloned().fold(0.0, f64::max));
    let two_level = |low: f64, high: f64| TwoLevelProfileSpec {
        alpha_low: low,
        alpha_high: high,
        cutoff_fresnel: cutoff,
        transition_width: run.transition_width,
    };
    let admm_cfg = AdmmConfig {
        tau: run.tau.unwrap_or(match run.method {
            Method::Ctf => 1e-4,
            Method::Homctf => 1e-2,
        }),
        max_iter: run.max_iter.unwrap_or(300),
        tol_primal: run.tol.unwrap_or(1e-6),
        tol_dual: run.tol.unwrap_or(1e-6),
        accelerate: run.accelerate.unwrap_or(true),
        restart: run.restart.unwrap_or(true),
    };

    let (phi, mu, report) = match run.method {
        Method::Ctf => {
            let reg = RegularizationProfile::two_level(
                &grid,
                &two_level(run.alpha_phi_low.unwrap_or(6e-5), run.alpha_phi_high.unwrap_or(5e-3)),
                &two_level(run.alpha_mu_low.unwrap_or(0.0), run.alpha_mu_high.unwrap_or(5e-1)),
            )?;
            if constraint.is_none() {
                let obj = tikhonov::invert(&stack, &reg)?;
                let report =
                    ReportFile { method: "ctf", solver: "closed_form", converged: true, admm: None };
                (obj.phi, Some(obj.mu), report)
            } else {
                let (obj, rep) = admm::solve(&stack, &reg, &constraint, &admm_cfg)?;
                let report = ReportFile {
                    method: "ctf",
                    solver: "admm",
                    converged: rep.converged,
                    admm: Some(rep),
                };
                (obj.phi, Some(obj.mu), report)
            }
        }
        Method::Homctf => {
            let gamma = run
                .gamma
                .ok_or_else(|| Error::InvalidConfig("method homctf requires gamma".into()))?;
            let reg = HomRegularization::two_level(
                &grid,
                &two_level(run.alpha_gamma_low.unwrap_or(0.0), run.alpha_gamma_high.unwrap_or(5e-3)),
            )?;
            if constraint.is_none() {
                let phi = tikhonov::invert_hom(&stack, gamma, &reg)?;
                let report =
                    ReportFile { method: "homctf", solver: "closed_form", converged: true, admm: None };
                (phi, None, report)
            } else {
                let (phi, rep) = admm::solve_hom(&stack, gamma, &reg, &constraint, &admm_cfg)?;
                let report = ReportFile {
                    method: "homctf",
                    solver: "admm",
                    converged: rep.converged,
                    admm: Some(rep),
                };
                (phi, None, report)
            }
        }
    };

    container::write_object(out, &phi, mu.as_ref(), meta.pixel_size_m, meta.energy_kev)?;
    container::write_pgm16(&out.join("phi.pgm"), &phi)?;
    if let Some(mu) = &mu {
        container::write_pgm16(&out.join("mu.pgm"), mu)?;
    }
    let report_dest = report_path.map(Path::to_path_buf).unwrap_or_else(|| out.join("report.json"));
    fs::write(&report_dest, serde_json::to_string_pretty(&report)? + "\n")?;
    if let Some(p) = profile {
        let csv = profile_csv(&phi, mu.as_ref(), p)?;
        fs::write(out.join("profile.csv"), csv)?;
    }
    if report.converged {
        Ok(0)
    } else {
        eprintln!("warning: ADMM did not reach tolerance; best iterate written");
        Ok(5)
    }
}

/// Bilinear interpolation at (row, col) with edge clamping.
fn bilinear(a: &Array2<f64>, y: f64, x: f64) -> f64 {
    let (h, w) = a.dim();
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = a[(y0, x0)] * (1.0 - fx) + a[(y0, x1)] * fx;
    let bot = a[(y1, x0)] * (1.0 - fx) + a[(y1, x1)] * fx;
    top * (1.0 - fy) + bot * fy
}

/// Sample fields along the segment (x0,y0)→(x1,y1) at ~1 px steps.
fn profile_csv(phi: &Array2<f64>, mu: Option<&Array2<f64>>, p: &[f64]) -> Result<String> {
    let [x0, y0, x1, y1]: [f64; 4] = p
        .try_into()
        .map_err(|_| Error::InvalidConfig("profile needs exactly x0,y0,x1,y1".into()))?;
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("profile endpoints must be finite".into()));
    }
    let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let n = (len.ceil() as usize).max(1) + 1;
    let mut csv = String::from(if mu.is_some() { "arclength,phi,mu\r\n" } else { "arclength,phi\r\n" });
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let s = t * len;
        let pv = bilinear(phi, y, x);
        match mu {
            Some(mu) => {
                csv.push_str(&format!("{:.6e},{:.12e},{:.12e}\r\n", s, pv, bilinear(mu, y, x)))
            }
            None => csv.push_str(&format!("{:.6e},{:.12e}\r\n", s, pv)),
        }
    }
    Ok(csv)
}

fn cmd_stability(fresnel: &[f64], gamma: f64, xi_max: f64, samples: usize, out: &Path) -> Result<i32> {
    if !(xi_max > 0.0) || samples < 2 {
        return Err(Error::InvalidConfig("need xi-max > 0 and samples >= 2".into()));
    }
    let set = FresnelSet::new(fresnel)?;
    println!("J = {}, N(J) = {}", set.len(), set.pair_count());
    let diffs = set.difference_fresnel_numbers();
    let formatted: Vec<String> = diffs.iter().map(|d| format!("{d:.4e}")).collect();
    println!("difference Fresnel numbers: {}", formatted.join(", "));
    let xi: Vec<f64> = (0..samples).map(|i| i as f64 * xi_max / (samples - 1) as f64).collect();
    let curves = stability::curve(&set, gamma, &xi);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(out, curves.to_csv())?;
    Ok(0)
}
