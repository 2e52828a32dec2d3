//! Pseudo-spectral Crank-Nicolson solver for the 2-D incompressible
//! Navier-Stokes equations in vorticity form on the periodic unit square,
//! Gaussian-random-field initial conditions, both forcing terms, and the
//! rotation-closure check.
//!
//! Diffusion is treated implicitly and the advection and forcing terms
//! explicitly, so each step is a diagonal spectral solve. The quadratic
//! nonlinearity is formed in physical space and dealiased with the 2/3
//! rule.

use std::path::Path;

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{act_plane_modular, GroupElement, Stab};
use crate::io::{read_tensor, write_tensor};
use crate::rng::Rng;
use crate::spectral::fft2_raw;
use crate::tensor::{Dtype, Tensor};

pub const GENERATOR_VERSION: &str = "ns-gen-1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Forcing {
    NonSym,
    Sym,
}

impl Forcing {
    pub fn name(self) -> &'static str {
        match self {
            Forcing::NonSym => "nonsym",
            Forcing::Sym => "sym",
        }
    }

    pub fn parse(s: &str) -> Result<Forcing> {
        match s {
            "nonsym" => Ok(Forcing::NonSym),
            "sym" => Ok(Forcing::Sym),
            other => Err(Error::invalid(format!("unknown forcing `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NsConfig {
    /// Solver grid extent (n x n).
    pub n: usize,
    /// Viscosity.
    pub nu: f64,
    /// Solver step.
    pub dt: f64,
    /// Interval between recorded frames, an integer multiple of dt.
    pub record_dt: f64,
    /// Recorded horizon: frames at t = 0, record_dt, ..., horizon.
    pub horizon: usize,
    pub forcing: Forcing,
    pub seed: u64,
}

impl NsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 8 || self.n % 2 != 0 {
            return Err(Error::invalid(format!(
                "solver grid must be even and at least 8, got {}",
                self.n
            )));
        }
        if !(self.dt > 0.0) || !(self.nu > 0.0) {
            return Err(Error::invalid("dt and nu must be positive".to_string()));
        }
        let ratio = self.record_dt / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 0.5 {
            return Err(Error::invalid(format!(
                "record_dt = {} is not an integer multiple of dt = {}",
                self.record_dt, self.dt
            )));
        }
        Ok(())
    }

    pub fn steps_per_record(&self) -> usize {
        (self.record_dt / self.dt).round() as usize
    }
}

/// A solved rollout: frame 0 is the initial condition.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub frames: Tensor,
    pub config: NsConfig,
}

/// Solver failure carrying the recorded prefix for diagnosis.
#[derive(Debug)]
pub struct BlowUp {
    pub step: usize,
    pub time: f64,
    pub prefix: Vec<Tensor>,
}

impl From<BlowUp> for Error {
    fn from(b: BlowUp) -> Error {
        Error::BlowUp {
            step: b.step,
            time: b.time,
        }
    }
}

/// Periodic zero-mean Gaussian random field with per-mode amplitude
/// standard deviation sigma(xi) = tau^(alpha-1) (4 pi^2 |xi|^2 +
/// tau^2)^(-alpha/2), alpha = 2.5, tau = 7; deterministic per seed.
pub fn grf_sample(n: usize, seed: u64) -> Result<Tensor> {
    if n % 2 != 0 || n < 8 {
        return Err(Error::invalid(format!(
            "grf_sample needs an even grid of at least 8, got {n}"
        )));
    }
    let alpha: f64 = 2.5;
    let tau: f64 = 7.0;
    let mut rng = Rng::new(seed ^ 0x6772_665f);
    let mut spec = vec![C::new(0.0, 0.0); n * n];
    let scale = (n * n) as f64; // unnormalized-DFT coefficient scale
    for a in 0..n {
        let fa = signed_freq(a, n);
        for b in 0..n {
            let fb = signed_freq(b, n);
            let (ma, mb) = ((n - a) % n, (n - b) % n);
            if (a, b) > (ma, mb) {
                continue; // filled by the Hermitian mirror
            }
            if a == 0 && b == 0 {
                continue; // zero-mean field: DC stays zero
            }
            let k2 = 4.0 * std::f64::consts::PI.powi(2) * ((fa * fa + fb * fb) as f64);
            let sigma = tau.powf(alpha - 1.0) * (k2 + tau * tau).powf(-alpha / 2.0);
            if (a, b) == (ma, mb) {
                // Self-conjugate bin: real draw.
                spec[a * n + b] = C::new(scale * sigma * rng.normal(), 0.0);
            } else {
                let re = rng.normal() * std::f64::consts::FRAC_1_SQRT_2;
                let im = rng.normal() * std::f64::consts::FRAC_1_SQRT_2;
                let v = C::new(re, im) * (scale * sigma);
                spec[a * n + b] = v;
                spec[ma * n + mb] = v.conj();
            }
        }
    }
    fft2_raw(&mut spec, n, n, true);
    let norm = 1.0 / ((n * n) as f64);
    let vals: Vec<f64> = spec.iter().map(|c| c.re * norm).collect();
    // Imaginary residue is pure roundoff thanks to the symmetrization.
    debug_assert!(spec.iter().all(|c| (c.im * norm).abs() < 1e-10));
    Ok(Tensor::from_real(&[n, n], vals))
}

fn signed_freq(idx: usize, n: usize) -> i64 {
    if idx <= n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

/// Forcing fields on the unit square sampled at x = i/n.
pub fn forcing_field(kind: Forcing, n: usize) -> Tensor {
    let mut t = Tensor::zeros(Dtype::Real, &[n, n]);
    let tau = 2.0 * std::f64::consts::PI;
    for i in 0..n {
        let x1 = i as f64 / n as f64;
        for j in 0..n {
            let x2 = j as f64 / n as f64;
            let v = match kind {
                Forcing::NonSym => 0.1 * ((tau * (x1 + x2)).sin() + (tau * (x1 + x2)).cos()),
                Forcing::Sym => 0.1 * ((2.0 * tau * x1).cos() + (2.0 * tau * x2).cos()),
            };
            t.set_real(i * n + j, v);
        }
    }
    t
}

/// Reusable spectral machinery for one grid size.
pub struct NsSolver {
    n: usize,
    nu: f64,
    dt: f64,
    /// kappa^2 = |2 pi xi|^2 per bin.
    kappa2: Vec<f64>,
    /// 2 pi * signed frequency along each axis.
    k1: Vec<f64>,
    k2: Vec<f64>,
    /// 2/3-rule mask.
    dealias: Vec<f64>,
    forcing_hat: Vec<C>,
    // scratch buffers
    u1: Vec<C>,
    u2: Vec<C>,
    wx: Vec<C>,
    wy: Vec<C>,
    nl: Vec<C>,
    nl1: Vec<C>,
    pred: Vec<C>,
}

impl NsSolver {
    pub fn new(cfg: &NsConfig) -> Result<NsSolver> {
        cfg.validate()?;
        let n = cfg.n;
        let tau = 2.0 * std::f64::consts::PI;
        let mut kappa2 = vec![0.0; n * n];
        let mut k1 = vec![0.0; n * n];
        let mut k2 = vec![0.0; n * n];
        let mut dealias = vec![0.0; n * n];
        let cutoff = (n as f64) / 3.0;
        for a in 0..n {
            let fa = signed_freq(a, n) as f64;
            for b in 0..n {
                let fb = signed_freq(b, n) as f64;
                let idx = a * n + b;
                k1[idx] = tau * fa;
                k2[idx] = tau * fb;
                kappa2[idx] = tau * tau * (fa * fa + fb * fb);
                dealias[idx] = if fa.abs() < cutoff && fb.abs() < cutoff {
                    1.0
                } else {
                    0.0
                };
            }
        }
        let mut forcing_hat: Vec<C> = forcing_field(cfg.forcing, n)
            .data()
            .iter()
            .map(|&v| C::new(v, 0.0))
            .collect();
        fft2_raw(&mut forcing_hat, n, n, false);
        forcing_hat[0] = C::new(0.0, 0.0);

        Ok(NsSolver {
            n,
            nu: cfg.nu,
            dt: cfg.dt,
            kappa2,
            k1,
            k2,
            dealias,
            forcing_hat,
            u1: vec![C::new(0.0, 0.0); n * n],
            u2: vec![C::new(0.0, 0.0); n * n],
            wx: vec![C::new(0.0, 0.0); n * n],
            wy: vec![C::new(0.0, 0.0); n * n],
            nl: vec![C::new(0.0, 0.0); n * n],
            nl1: vec![C::new(0.0, 0.0); n * n],
            pred: vec![C::new(0.0, 0.0); n * n],
        })
    }

    /// One Crank-Nicolson step on the spectral state: diffusion implicit,
    /// advection and forcing explicit through a Heun predictor-corrector,
    /// so the update keeps the diagonal rational form
    /// w+ = [w (1 - dt nu kappa^2/2) + dt (f - N)] / (1 + dt nu kappa^2/2)
    /// with N the trapezoidal average of the two advection evaluations.
    pub fn step_spectral(&mut self, w_hat: &mut [C]) {
        let m = self.n * self.n;
        let half = 0.5 * self.dt * self.nu;

        advection_hat(
            self.n, &self.kappa2, &self.k1, &self.k2, w_hat, &mut self.u1, &mut self.u2,
            &mut self.wx, &mut self.wy, &mut self.nl,
        );
        for i in 0..m {
            self.nl1[i] = self.nl[i] * self.dealias[i];
            let rhs = w_hat[i] * (1.0 - half * self.kappa2[i])
                + (self.forcing_hat[i] - self.nl1[i]) * self.dt;
            self.pred[i] = rhs / (1.0 + half * self.kappa2[i]);
        }
        advection_hat(
            self.n, &self.kappa2, &self.k1, &self.k2, &self.pred, &mut self.u1, &mut self.u2,
            &mut self.wx, &mut self.wy, &mut self.nl,
        );
        for i in 0..m {
            let nl = 0.5 * (self.nl1[i] + self.nl[i] * self.dealias[i]);
            let rhs = w_hat[i] * (1.0 - half * self.kappa2[i])
                + (self.forcing_hat[i] - nl) * self.dt;
            w_hat[i] = rhs / (1.0 + half * self.kappa2[i]);
        }
    }

    /// Zero the forcing term (used by the unforced diagnostics).
    pub fn clear_forcing(&mut self) {
        for v in self.forcing_hat.iter_mut() {
            *v = C::new(0.0, 0.0);
        }
    }

    pub fn to_spectral(&self, w: &Tensor) -> Vec<C> {
        let n = self.n;
        let mut buf: Vec<C> = w.data().iter().map(|&v| C::new(v, 0.0)).collect();
        fft2_raw(&mut buf, n, n, false);
        buf
    }

    pub fn to_physical(&self, w_hat: &[C]) -> Tensor {
        let n = self.n;
        let mut buf = w_hat.to_vec();
        fft2_raw(&mut buf, n, n, true);
        let norm = 1.0 / (n * n) as f64;
        Tensor::from_real(&[n, n], buf.iter().map(|c| c.re * norm).collect())
    }

    /// Maximum spectral divergence of the velocity field derived from w;
    /// zero by construction up to roundoff.
    pub fn divergence_max(&self, w: &Tensor) -> f64 {
        let m = self.n * self.n;
        let w_hat = self.to_spectral(w);
        let mut worst = 0.0f64;
        for i in 0..m {
            let inv_k2 = if self.kappa2[i] > 0.0 {
                1.0 / self.kappa2[i]
            } else {
                0.0
            };
            let psi = w_hat[i] * inv_k2;
            let u1 = C::new(0.0, self.k2[i]) * psi;
            let u2 = -C::new(0.0, self.k1[i]) * psi;
            let div = C::new(0.0, self.k1[i]) * u1 + C::new(0.0, self.k2[i]) * u2;
            worst = worst.max(div.norm());
        }
        worst
    }
}

/// Spectral advection term u . grad(w): velocity from the stream
/// function, gradients spectrally, the product in physical space, then
/// the forward transform (undealiased; DC cleared since the integral of
/// the divergence-form advection vanishes analytically).
#[allow(clippy::too_many_arguments)]
fn advection_hat(
    n: usize,
    kappa2: &[f64],
    k1: &[f64],
    k2: &[f64],
    w_hat: &[C],
    u1: &mut Vec<C>,
    u2: &mut Vec<C>,
    wx: &mut Vec<C>,
    wy: &mut Vec<C>,
    nl: &mut Vec<C>,
) {
    let m = n * n;
    let inv_m = 1.0 / m as f64;
    for i in 0..m {
        let inv_k2 = if kappa2[i] > 0.0 { 1.0 / kappa2[i] } else { 0.0 };
        let psi = w_hat[i] * inv_k2;
        // u = (d psi / d x2, -d psi / d x1)
        u1[i] = C::new(0.0, k2[i]) * psi;
        u2[i] = -C::new(0.0, k1[i]) * psi;
        wx[i] = C::new(0.0, k1[i]) * w_hat[i];
        wy[i] = C::new(0.0, k2[i]) * w_hat[i];
    }
    fft2_raw(u1, n, n, true);
    fft2_raw(u2, n, n, true);
    fft2_raw(wx, n, n, true);
    fft2_raw(wy, n, n, true);
    for i in 0..m {
        let a = u1[i].re * inv_m * (wx[i].re * inv_m) + u2[i].re * inv_m * (wy[i].re * inv_m);
        nl[i] = C::new(a, 0.0);
    }
    fft2_raw(nl, n, n, false);
    nl[0] = C::new(0.0, 0.0);
}

/// One Crank-Nicolson step on a physical vorticity field.
pub fn ns_step(w: &Tensor, cfg: &NsConfig) -> Result<Tensor> {
    if w.shape() != [cfg.n, cfg.n] || !w.is_real() {
        return Err(Error::invalid(format!(
            "ns_step expects a real ({0}, {0}) field",
            cfg.n
        )));
    }
    if !w.is_finite() {
        return Err(Error::invalid("ns_step input is not finite".to_string()));
    }
    let mut solver = NsSolver::new(cfg)?;
    let mut w_hat = solver.to_spectral(w);
    solver.step_spectral(&mut w_hat);
    let out = solver.to_physical(&w_hat);
    if !out.is_finite() {
        return Err(Error::BlowUp { step: 0, time: cfg.dt });
    }
    Ok(out)
}

/// Integrate from the seeded random initial condition, recording a frame
/// every record_dt. Frame 0 is the initial condition.
pub fn ns_solve(cfg: &NsConfig) -> Result<Trajectory> {
    let mut solver = NsSolver::new(cfg)?;
    let w0 = grf_sample(cfg.n, cfg.seed)?;
    ns_solve_from(&mut solver, cfg, &w0).map_err(Error::from)
}

/// Integrate from an explicit initial condition.
pub fn ns_solve_from(
    solver: &mut NsSolver,
    cfg: &NsConfig,
    w0: &Tensor,
) -> std::result::Result<Trajectory, BlowUp> {
    let n = cfg.n;
    let steps_per_record = cfg.steps_per_record();
    let mut w_hat = solver.to_spectral(w0);
    let mut frames: Vec<Tensor> = Vec::with_capacity(cfg.horizon + 1);
    frames.push(w0.clone());

    let mut step = 0usize;
    for _ in 0..cfg.horizon {
        for _ in 0..steps_per_record {
            solver.step_spectral(&mut w_hat);
            step += 1;
        }
        let frame = solver.to_physical(&w_hat);
        if !frame.is_finite() {
            return Err(BlowUp {
                step,
                time: step as f64 * cfg.dt,
                prefix: frames,
            });
        }
        frames.push(frame);
    }

    let mut data = Vec::with_capacity(frames.len() * n * n);
    for f in &frames {
        data.extend_from_slice(f.data());
    }
    Ok(Trajectory {
        frames: Tensor::from_real(&[frames.len(), n, n], data),
        config: *cfg,
    })
}

/// Relative discrepancy between solving-then-rotating and
/// rotating-then-solving at frame `t_check`, using the modular rotation
/// the discrete transform commutes with.
pub fn closure_check(cfg: &NsConfig, t_check: usize, rot: usize) -> Result<f64> {
    if t_check > cfg.horizon {
        return Err(Error::invalid(format!(
            "t_check = {t_check} beyond horizon {}",
            cfg.horizon
        )));
    }
    let g = GroupElement::pure(Stab::p4(rot));
    let w0 = grf_sample(cfg.n, cfg.seed)?;
    let w0_rot = act_plane_modular(&g, &w0)?;

    let mut solver = NsSolver::new(cfg)?;
    let base = ns_solve_from(&mut solver, cfg, &w0).map_err(Error::from)?;
    let mut solver2 = NsSolver::new(cfg)?;
    let rotated = ns_solve_from(&mut solver2, cfg, &w0_rot).map_err(Error::from)?;

    let n = cfg.n;
    let frame = base.frames.slice0(t_check, 1).reshape(&[n, n])?;
    let frame_rot = rotated.frames.slice0(t_check, 1).reshape(&[n, n])?;
    let moved = act_plane_modular(&g, &frame)?;
    let denom = frame.norm2();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(moved.sub(&frame_rot)?.norm2() / denom)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n: usize,
    pub nu: f64,
    pub dt: f64,
    pub record_dt: f64,
    pub t: usize,
    pub forcing: String,
    pub seeds: Vec<u64>,
    pub generator_version: String,
}

/// Solve one trajectory per seed, in parallel across worker threads; the
/// output is deterministic regardless of scheduling.
pub fn generate_dataset(base: &NsConfig, seeds: &[u64], threads: usize) -> Result<Tensor> {
    base.validate()?;
    let n = base.n;
    let frames = base.horizon + 1;
    let mut results: Vec<Option<Tensor>> = vec![None; seeds.len()];
    let workers = threads.max(1).min(seeds.len().max(1));

    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for chunk_id in 0..workers {
            let seeds = seeds.to_vec();
            let base = *base;
            handles.push((
                chunk_id,
                scope.spawn(move || -> Result<Vec<(usize, Tensor)>> {
                    let mut out = Vec::new();
                    for (idx, &seed) in seeds.iter().enumerate() {
                        if idx % workers != chunk_id {
                            continue;
                        }
                        let cfg = NsConfig { seed, ..base };
                        let traj = ns_solve(&cfg).map_err(Error::from)?;
                        out.push((idx, traj.frames));
                    }
                    Ok(out)
                }),
            ));
        }
        for (_, handle) in handles {
            for (idx, frames) in handle.join().expect("worker panicked")? {
                results[idx] = Some(frames);
            }
        }
        Ok(())
    })?;

    let mut data = Tensor::zeros(Dtype::Real, &[seeds.len(), frames, n, n]);
    let stride = frames * n * n;
    for (i, r) in results.into_iter().enumerate() {
        let t = r.expect("every seed solved");
        data.data_mut()[i * stride..(i + 1) * stride].copy_from_slice(t.data());
    }
    Ok(data)
}

pub fn save_dataset(
    dir: impl AsRef<Path>,
    data: &Tensor,
    manifest: &DatasetManifest,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    write_tensor(data, dir.join("data.gft"))?;
    let m = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    let path = dir.join("manifest.json");
    std::fs::write(&path, m).map_err(|e| Error::Io { path, source: e })
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(Tensor, DatasetManifest)> {
    let dir = dir.as_ref();
    let data = read_tensor(dir.join("data.gft"))?;
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("bad manifest: {e}")))?;
    Ok((data, manifest))
}
