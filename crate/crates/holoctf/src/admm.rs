//! Constrained CTF phase retrieval by ADMM with closed-form subproblems and
//! optional Nesterov-type acceleration with adaptive restart.
//!
//! The f-update solves, per frequency, (M*M + A*A + τI)f̂ = M*𝓕(I−1) + τ𝓕(g−h).
//! Since M*M + A*A = 4[[α_φ+Σs², Σsc], [Σsc, α_μ+Σc²]], adding τI is the same
//! 2×2 system with α_φ and α_μ each augmented by τ/4, so the factor-16
//! determinant of the closed-form Tikhonov solution applies unchanged.
//!
//! Iterates live on the padded grid (support masks are embedded with a zero
//! margin, pointwise constraints extend verbatim); this keeps the per-frequency
//! subproblem exact, so with no constraint the fixed point coincides with the
//! closed-form Tikhonov inverse. Results are cropped back to the image grid.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::Serialize;

use crate::ctf::{self, ComplexObject, HologramStack, TransferSpectrum, TransferSums};
use crate::grid::Fft2;
use crate::tikhonov::{self, HomRegularization, RegularizationProfile};
use crate::{Error, Result};

/// Which object channels a constraint acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channels {
    PhiOnly,
    Both,
}

/// Closed convex constraint set; projections are idempotent and (for
/// support + sign) commute, so composites apply them in sequence.
#[derive(Clone, Debug)]
pub enum ConstraintKind {
    None,
    Nonpositive,
    /// Zero outside the mask (true = inside the support).
    Support(Array2<bool>),
    Box { lo: f64, hi: f64 },
    Composite(Vec<ConstraintKind>),
}

#[derive(Clone, Debug)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    pub channels: Channels,
}

impl ConstraintSpec {
    pub fn none() -> Self {
        Self { kind: ConstraintKind::None, channels: Channels::Both }
    }

    pub fn nonpositive(channels: Channels) -> Self {
        Self { kind: ConstraintKind::Nonpositive, channels }
    }

    pub fn is_none(&self) -> bool {
        matches!(self.kind, ConstraintKind::None)
    }

    pub fn validate(&self, shape: (usize, usize)) -> Result<()> {
        validate_kind(&self.kind, shape)
    }
}

fn validate_kind(kind: &ConstraintKind, shape: (usize, usize)) -> Result<()> {
    match kind {
        ConstraintKind::None | ConstraintKind::Nonpositive => Ok(()),
        ConstraintKind::Support(mask) => {
            if mask.dim() != shape {
                Err(Error::InvalidConstraint(format!(
                    "support mask {:?} vs field {:?}",
                    mask.dim(),
                    shape
                )))
            } else {
                Ok(())
            }
        }
        ConstraintKind::Box { lo, hi } => {
            if lo > hi || !lo.is_finite() || !hi.is_finite() {
                Err(Error::InvalidConstraint(format!("box requires lo <= hi, got [{lo}, {hi}]")))
            } else {
                Ok(())
            }
        }
        ConstraintKind::Composite(parts) => {
            parts.iter().try_for_each(|p| validate_kind(p, shape))
        }
    }
}

fn project_field(x: &Array2<f64>, kind: &ConstraintKind) -> Array2<f64> {
    match kind {
        ConstraintKind::None => x.to_owned(),
        ConstraintKind::Nonpositive => x.mapv(|v| v.min(0.0)),
        ConstraintKind::Support(mask) => {
            let mut out = x.to_owned();
            Zip::from(&mut out).and(mask).for_each(|v, &m| {
                if !m {
                    *v = 0.0;
                }
            });
            out
        }
        ConstraintKind::Box { lo, hi } => x.mapv(|v| v.clamp(*lo, *hi)),
        ConstraintKind::Composite(parts) => {
            let mut out = x.to_owned();
            for p in parts {
                out = project_field(&out, p);
            }
            out
        }
    }
}

/// Metric projection onto the constraint set.
pub fn project(f: &ComplexObject, c: &ConstraintSpec) -> Result<ComplexObject> {
    c.validate(f.grid.shape())?;
    let phi = project_field(&f.phi, &c.kind);
    let mu = match c.channels {
        Channels::Both => project_field(&f.mu, &c.kind),
        Channels::PhiOnly => f.mu.to_owned(),
    };
    ComplexObject::new(f.grid, phi, mu)
}

/// Projection of a single (φ) field for the homogeneous solver.
pub fn project_phi(phi: &Array2<f64>, c: &ConstraintSpec) -> Result<Array2<f64>> {
    c.validate(phi.dim())?;
    Ok(project_field(phi, &c.kind))
}

/// Extend a constraint from the image grid to the padded grid: support masks
/// get a zero (excluded) margin, pointwise constraints apply verbatim.
fn embed_kind(kind: &ConstraintKind, grid: &crate::grid::Grid2D) -> Result<ConstraintKind> {
    Ok(match kind {
        ConstraintKind::Support(mask) => {
            ConstraintKind::Support(crate::grid::pad(mask, grid, crate::grid::PadMode::Zero)?)
        }
        ConstraintKind::Composite(parts) => ConstraintKind::Composite(
            parts.iter().map(|p| embed_kind(p, grid)).collect::<Result<Vec<_>>>()?,
        ),
        other => other.clone(),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct AdmmConfig {
    /// Proximity parameter τ > 0.
    pub tau: f64,
    pub max_iter: usize,
    /// Relative primal tolerance on ‖f_k − g_k‖.
    pub tol_primal: f64,
    /// Relative dual tolerance on τ‖g_k − g_{k−1}‖.
    pub tol_dual: f64,
    pub accelerate: bool,
    pub restart: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            tau: 1e-2,
            max_iter: 300,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            accelerate: true,
            restart: true,
        }
    }
}

/// Per-solve diagnostics; serializes to JSON.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    pub primal_residuals: Vec<f64>,
    pub dual_residuals: Vec<f64>,
    pub objective: Vec<f64>,
    pub restarts: Vec<usize>,
    pub final_objective: f64,
}

fn l2(x: &Array2<f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn l2_pair(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a.iter().map(|v| v * v).sum::<f64>() + b.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

fn diff_norm(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

const RESTART_ETA: f64 = 0.999;

fn check_config(cfg: &AdmmConfig) -> Result<()> {
    if !(cfg.tau > 0.0) || !cfg.tau.is_finite() {
        return Err(Error::InvalidConfig(format!("tau must be positive, got {}", cfg.tau)));
    }
    if !(cfg.tol_primal > 0.0) || !(cfg.tol_dual > 0.0) {
        return Err(Error::InvalidConfig("tolerances must be positive".into()));
    }
    Ok(())
}

struct FullSystem<'a> {
    fft: Fft2,
    sums: TransferSums,
    spec: TransferSpectrum,
    reg: &'a RegularizationProfile,
    aug_phi: Array2<f64>,
    aug_mu: Array2<f64>,
    det_aug: Array2<f64>,
    b0_phi: Array2<Complex64>,
    b0_mu: Array2<Complex64>,
    r_hats: Vec<Array2<Complex64>>,
    tau: f64,
}

impl<'a> FullSystem<'a> {
    fn new(stack: &HologramStack, reg: &'a RegularizationProfile, tau: f64) -> Result<Self> {
        let grid = stack.grid;
        if reg.alpha_phi.dim() != grid.padded_shape() {
            return Err(Error::GridMismatch("regularization profile vs padded grid".into()));
        }
        let spec = ctf::build_spectrum(&stack.fresnel_numbers, &grid)?;
        let sums = spec.sums();
        let fft = Fft2::for_grid(&grid);
        let mut r_hats = Vec::with_capacity(stack.len());
        for im in &stack.images {
            r_hats.push(ctf::padded_fft(&im.mapv(|v| v - 1.0), &grid, &fft)?);
        }
        let shape = grid.padded_shape();
        let mut b0_phi = Array2::<Complex64>::zeros(shape);
        let mut b0_mu = Array2::<Complex64>::zeros(shape);
        for ((r, sj), cj) in r_hats.iter().zip(spec.s.iter()).zip(spec.c.iter()) {
            Zip::from(&mut b0_phi).and(r).and(sj).for_each(|a, &v, &s| *a += 2.0 * s * v);
            Zip::from(&mut b0_mu).and(r).and(cj).for_each(|a, &v, &c| *a += 2.0 * c * v);
        }
        let aug_phi = reg.alpha_phi.mapv(|a| a + 0.25 * tau);
        let aug_mu = reg.alpha_mu.mapv(|a| a + 0.25 * tau);
        let det_aug = tikhonov::determinant_from(&sums, &aug_phi, &aug_mu);
        Ok(Self { fft, sums, spec, reg, aug_phi, aug_mu, det_aug, b0_phi, b0_mu, r_hats, tau })
    }

    fn fft_real(&self, x: &Array2<f64>) -> Result<Array2<Complex64>> {
        self.fft.forward(&crate::grid::to_complex(x))
    }

    /// Proximal f-update from the accelerated splitting point (g − h), on the
    /// padded grid.
    fn f_update(&self, gh_phi: &Array2<f64>, gh_mu: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let gh_phi_hat = self.fft_real(gh_phi)?;
        let gh_mu_hat = self.fft_real(gh_mu)?;
        let mut b1 = self.b0_phi.clone();
        let mut b2 = self.b0_mu.clone();
        Zip::from(&mut b1).and(&gh_phi_hat).for_each(|a, &v| *a += self.tau * v);
        Zip::from(&mut b2).and(&gh_mu_hat).for_each(|a, &v| *a += self.tau * v);
        let (phi_hat, mu_hat) =
            tikhonov::solve_normal_equations(&self.sums, &self.aug_phi, &self.aug_mu, &self.det_aug, &b1, &b2);
        Ok((
            crate::grid::real_part(&self.fft.inverse(&phi_hat)?),
            crate::grid::real_part(&self.fft.inverse(&mu_hat)?),
        ))
    }

    /// Data-fit plus regularization objective evaluated at padded (φ, μ).
    fn objective(&self, phi: &Array2<f64>, mu: &Array2<f64>) -> Result<f64> {
        let phi_hat = self.fft_real(phi)?;
        let mu_hat = self.fft_real(mu)?;
        let mut data = 0.0;
        for ((r, sj), cj) in self.r_hats.iter().zip(self.spec.s.iter()).zip(self.spec.c.iter()) {
            let mut acc = 0.0;
            Zip::from(r).and(&phi_hat).and(&mu_hat).and(sj).and(cj).for_each(|&rv, &p, &m, &s, &c| {
                acc += (2.0 * (s * p + c * m) - rv).norm_sqr();
            });
            data += acc;
        }
        let mut reg = 0.0;
        Zip::from(&phi_hat).and(&self.reg.alpha_phi).for_each(|&p, &a| reg += 4.0 * a * p.norm_sqr());
        Zip::from(&mu_hat).and(&self.reg.alpha_mu).for_each(|&m, &a| reg += 4.0 * a * m.norm_sqr());
        Ok(data + reg)
    }
}

/// Constrained inhomogeneous CTF phase retrieval via the augmented splitting
/// above. Non-convergence is reported, not an error: the best iterate is
/// returned with `converged: false`.
pub fn solve(
    stack: &HologramStack,
    reg: &RegularizationProfile,
    constraint: &ConstraintSpec,
    cfg: &AdmmConfig,
) -> Result<(ComplexObject, ConvergenceReport)> {
    check_config(cfg)?;
    constraint.validate(stack.grid.shape())?;
    let sys = FullSystem::new(stack, reg, cfg.tau)?;
    let kind_p = embed_kind(&constraint.kind, &stack.grid)?;
    let shape = stack.grid.padded_shape();
    let zeros = || Array2::<f64>::zeros(shape);

    // g0 = h0 = 0
    let (mut g_phi, mut g_mu) = (zeros(), zeros());
    let (mut h_phi, mut h_mu) = (zeros(), zeros());
    let (mut acc_g_phi, mut acc_g_mu) = (zeros(), zeros());
    let (mut acc_h_phi, mut acc_h_mu) = (zeros(), zeros());
    let mut momentum = 1.0f64;
    let mut c_prev = f64::INFINITY;

    let mut report = ConvergenceReport {
        iterations: 0,
        converged: false,
        primal_residuals: Vec::new(),
        dual_residuals: Vec::new(),
        objective: Vec::new(),
        restarts: Vec::new(),
        final_objective: f64::INFINITY,
    };
    let mut best = (f64::INFINITY, g_phi.clone(), g_mu.clone());

    for k in 0..cfg.max_iter {
        let (f_phi, f_mu) = sys.f_update(&(&acc_g_phi - &acc_h_phi), &(&acc_g_mu - &acc_h_mu))?;
        let g_new_phi = project_field(&(&f_phi + &acc_h_phi), &kind_p);
        let g_new_mu = match constraint.channels {
            Channels::Both => project_field(&(&f_mu + &acc_h_mu), &kind_p),
            Channels::PhiOnly => &f_mu + &acc_h_mu,
        };
        let h_new_phi = &acc_h_phi + &f_phi - &g_new_phi;
        let h_new_mu = &acc_h_mu + &f_mu - &g_new_mu;

        // combined residual for the adaptive-restart rule
        let c_k = (1.0 / cfg.tau)
            * (diff_norm(&h_new_phi, &acc_h_phi).powi(2) + diff_norm(&h_new_mu, &acc_h_mu).powi(2))
            + cfg.tau * (diff_norm(&g_new_phi, &acc_g_phi).powi(2) + diff_norm(&g_new_mu, &acc_g_mu).powi(2));

        if cfg.accelerate && cfg.restart && c_k > RESTART_ETA * c_prev && k > 0 {
            // discard the accelerated point and re-expand from the last
            // accepted iterate
            momentum = 1.0;
            acc_g_phi = g_phi.clone();
            acc_g_mu = g_mu.clone();
            acc_h_phi = h_phi.clone();
            acc_h_mu = h_mu.clone();
            c_prev /= RESTART_ETA;
            report.restarts.push(k);
            report.iterations = k + 1;
            continue;
        }

        let primal = (diff_norm(&f_phi, &g_new_phi).powi(2) + diff_norm(&f_mu, &g_new_mu).powi(2)).sqrt();
        let dual = cfg.tau
            * (diff_norm(&g_new_phi, &g_phi).powi(2) + diff_norm(&g_new_mu, &g_mu).powi(2)).sqrt();
        let g_norm = l2_pair(&g_new_phi, &g_new_mu).max(f64::MIN_POSITIVE);
        let obj = sys.objective(&g_new_phi, &g_new_mu)?;

        if cfg.accelerate {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let w = (momentum - 1.0) / next;
            acc_g_phi = &g_new_phi + &((&g_new_phi - &g_phi) * w);
            acc_g_mu = &g_new_mu + &((&g_new_mu - &g_mu) * w);
            acc_h_phi = &h_new_phi + &((&h_new_phi - &h_phi) * w);
            acc_h_mu = &h_new_mu + &((&h_new_mu - &h_mu) * w);
            momentum = next;
        } else {
            acc_g_phi = g_new_phi.clone();
            acc_g_mu = g_new_mu.clone();
            acc_h_phi = h_new_phi.clone();
            acc_h_mu = h_new_mu.clone();
        }
        g_phi = g_new_phi;
        g_mu = g_new_mu;
        h_phi = h_new_phi;
        h_mu = h_new_mu;
        c_prev = c_k;

        report.primal_residuals.push(primal);
        report.dual_residuals.push(dual);
        report.objective.push(obj);
        report.iterations = k + 1;
        if obj < best.0 {
            best = (obj, g_phi.clone(), g_mu.clone());
        }
        if primal <= cfg.tol_primal * g_norm && dual <= cfg.tol_dual * g_norm {
            report.converged = true;
            break;
        }
    }

    let (obj, phi, mu) = if report.converged {
        (sys.objective(&g_phi, &g_mu)?, g_phi, g_mu)
    } else {
        best
    };
    report.final_objective = obj;
    let phi = crate::grid::crop(&phi, &stack.grid)?;
    let mu = crate::grid::crop(&mu, &stack.grid)?;
    Ok((ComplexObject::new(stack.grid, phi, mu)?, report))
}

struct HomSystem<'a> {
    fft: Fft2,
    spec: TransferSpectrum,
    gamma: f64,
    reg: &'a HomRegularization,
    denom_aug: Array2<f64>,
    b0: Array2<Complex64>,
    r_hats: Vec<Array2<Complex64>>,
    tau: f64,
}

impl<'a> HomSystem<'a> {
    fn new(stack: &HologramStack, gamma: f64, reg: &'a HomRegularization, tau: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::InvalidConfig(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        let grid = stack.grid;
        if reg.alpha_gamma.dim() != grid.padded_shape() {
            return Err(Error::GridMismatch("regularization profile vs padded grid".into()));
        }
        let spec = ctf::build_spectrum(&stack.fresnel_numbers, &grid)?;
        let fft = Fft2::for_grid(&grid);
        let mut r_hats = Vec::with_capacity(stack.len());
        for im in &stack.images {
            r_hats.push(ctf::padded_fft(&im.mapv(|v| v - 1.0), &grid, &fft)?);
        }
        let mut b0 = Array2::<Complex64>::zeros(grid.padded_shape());
        for ((r, sj), cj) in r_hats.iter().zip(spec.s.iter()).zip(spec.c.iter()) {
            Zip::from(&mut b0)
                .and(r)
                .and(sj)
                .and(cj)
                .for_each(|a, &v, &s, &c| *a += 2.0 * (s + gamma * c) * v);
        }
        let aug = reg.alpha_gamma.mapv(|a| a + 0.25 * tau);
        let denom_aug = tikhonov::hom_denominator(&spec, gamma, &aug);
        Ok(Self { fft, spec, gamma, reg, denom_aug, b0, r_hats, tau })
    }

    fn fft_real(&self, x: &Array2<f64>) -> Result<Array2<Complex64>> {
        self.fft.forward(&crate::grid::to_complex(x))
    }

    fn f_update(&self, gh: &Array2<f64>) -> Result<Array2<f64>> {
        let gh_hat = self.fft_real(gh)?;
        let mut hat = self.b0.clone();
        Zip::from(&mut hat).and(&gh_hat).and(&self.denom_aug).for_each(|a, &v, &d| {
            *a = (*a + self.tau * v) / d;
        });
        Ok(crate::grid::real_part(&self.fft.inverse(&hat)?))
    }

    fn objective(&self, phi: &Array2<f64>) -> Result<f64> {
        let phi_hat = self.fft_real(phi)?;
        let mut data = 0.0;
        for ((r, sj), cj) in self.r_hats.iter().zip(self.spec.s.iter()).zip(self.spec.c.iter()) {
            Zip::from(r).and(&phi_hat).and(sj).and(cj).for_each(|&rv, &p, &s, &c| {
                data += (2.0 * (s + self.gamma * c) * p - rv).norm_sqr();
            });
        }
        let mut reg = 0.0;
        Zip::from(&phi_hat).and(&self.reg.alpha_gamma).for_each(|&p, &a| reg += 4.0 * a * p.norm_sqr());
        Ok(data + reg)
    }
}

/// Constrained homogeneous (single-material) CTF phase retrieval.
pub fn solve_hom(
    stack: &HologramStack,
    gamma: f64,
    reg: &HomRegularization,
    constraint: &ConstraintSpec,
    cfg: &AdmmConfig,
) -> Result<(Array2<f64>, ConvergenceReport)> {
    check_config(cfg)?;
    constraint.validate(stack.grid.shape())?;
    let sys = HomSystem::new(stack, gamma, reg, cfg.tau)?;
    let kind_p = embed_kind(&constraint.kind, &stack.grid)?;
    let shape = stack.grid.padded_shape();

    let mut g = Array2::<f64>::zeros(shape);
    let mut h = Array2::<f64>::zeros(shape);
    let mut acc_g = g.clone();
    let mut acc_h = h.clone();
    let mut momentum = 1.0f64;
    let mut c_prev = f64::INFINITY;

    let mut report = ConvergenceReport {
        iterations: 0,
        converged: false,
        primal_residuals: Vec::new(),
        dual_residuals: Vec::new(),
        objective: Vec::new(),
        restarts: Vec::new(),
        final_objective: f64::INFINITY,
    };
    let mut best = (f64::INFINITY, g.clone());

    for k in 0..cfg.max_iter {
        let f = sys.f_update(&(&acc_g - &acc_h))?;
        let g_new = project_field(&(&f + &acc_h), &kind_p);
        let h_new = &acc_h + &f - &g_new;

        let c_k = (1.0 / cfg.tau) * diff_norm(&h_new, &acc_h).powi(2)
            + cfg.tau * diff_norm(&g_new, &acc_g).powi(2);
        if cfg.accelerate && cfg.restart && c_k > RESTART_ETA * c_prev && k > 0 {
            momentum = 1.0;
            acc_g = g.clone();
            acc_h = h.clone();
            c_prev /= RESTART_ETA;
            report.restarts.push(k);
            report.iterations = k + 1;
            continue;
        }

        let primal = diff_norm(&f, &g_new);
        let dual = cfg.tau * diff_norm(&g_new, &g);
        let g_norm = l2(&g_new).max(f64::MIN_POSITIVE);
        let obj = sys.objective(&g_new)?;

        if cfg.accelerate {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let w = (momentum - 1.0) / next;
            acc_g = &g_new + &((&g_new - &g) * w);
            acc_h = &h_new + &((&h_new - &h) * w);
            momentum = next;
        } else {
            acc_g = g_new.clone();
            acc_h = h_new.clone();
        }
        g = g_new;
        h = h_new;
        c_prev = c_k;

        report.primal_residuals.push(primal);
        report.dual_residuals.push(dual);
        report.objective.push(obj);
        report.iterations = k + 1;
        if obj < best.0 {
            best = (obj, g.clone());
        }
        if primal <= cfg.tol_primal * g_norm && dual <= cfg.tol_dual * g_norm {
            report.converged = true;
            break;
        }
    }

    let (obj, phi) = if report.converged { (sys.objective(&g)?, g) } else { best };
    report.final_objective = obj;
    Ok((crate::grid::crop(&phi, &stack.grid)?, report))
}
