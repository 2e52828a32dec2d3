//! The property/oracle suite behind the `check` CLI command: transform
//! equivariance, the frequency-vs-spatial convolution oracle, exact model
//! equivariance, gradient correctness, solver correctness, the rotation
//! closure of the flow, and the reference parameter counts.

use crate::autodiff::{grad_check, Parameters};
use crate::error::Result;
use crate::group::{act_plane, act_plane_modular, Group, GroupElement, Stab};
use crate::operator::{
    gconv_freq, hermitian_project, param_count, GfnoModel, ModelConfig, PosEnc, SpectralPath,
    Variant,
};
use crate::oracle;
use crate::pde::{closure_check, ns_solve, Forcing, NsConfig, NsSolver};
use crate::rng::Rng;
use crate::spectral::{dft2, idft2, pad_band, Layout};
use crate::tensor::{numel_of, Dtype, Tensor};

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
        CheckOutcome {
            name,
            passed,
            detail,
        }
    }
}

fn random_real(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = numel_of(shape);
    Tensor::from_real(shape, (0..n).map(|_| rng.normal()).collect())
}

fn random_hermitian_bank(d: usize, d_g: usize, k: usize, rng: &mut Rng) -> Result<Tensor> {
    let bw = 2 * k - 1;
    let n = numel_of(&[d, d, d_g, bw, bw]);
    let vals: Vec<num_complex::Complex64> = (0..n)
        .map(|_| num_complex::Complex64::new(rng.normal(), rng.normal()))
        .collect();
    hermitian_project(&Tensor::from_complex(&[d, d, d_g, bw, bw], vals))
}

/// Transform equivariance: rotating/reflecting then transforming equals
/// transforming then rotating, with modular indices, plus the exact
/// translation phase; 50 random fields on 16x16 and 15x15 grids.
pub fn dft_equivariance_check() -> Result<CheckOutcome> {
    let mut rng = Rng::new(101);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let n = if trial % 2 == 0 { 16 } else { 15 };
        let x = random_real(&[n, n], &mut rng).to_complex();
        let spec = dft2(&x, Layout::Standard)?;
        for i in 0..8 {
            let g = GroupElement::pure(Stab::from_index(Group::P4m, i));
            let lhs = dft2(&act_plane_modular(&g, &x)?, Layout::Standard)?;
            let rhs = act_plane_modular(&g, &spec)?;
            worst = worst.max(lhs.sub(&rhs)?.max_abs());
        }
        // Affine identity for a pure translation.
        let b = [rng.below(n) as i64, rng.below(n) as i64];
        let shifted = act_plane_modular(&GroupElement::new(Stab::identity_p4(), b), &x)?;
        let spec_shifted = dft2(&shifted, Layout::Standard)?;
        for a in 0..n {
            for c in 0..n {
                let ang = -2.0 * std::f64::consts::PI
                    * (a as f64 * b[0] as f64 + c as f64 * b[1] as f64)
                    / n as f64;
                let phase = num_complex::Complex64::new(ang.cos(), ang.sin());
                let expect = spec.complex_at(a * n + c) * phase;
                let got = spec_shifted.complex_at(a * n + c);
                worst = worst.max((got - expect).norm());
            }
        }
    }
    Ok(CheckOutcome::new(
        "dft-equivariance",
        worst < 1e-10,
        format!("max |difference| = {worst:.3e} (tolerance 1e-10)"),
    ))
}

/// Frequency-domain group convolution against the brute-force spatial
/// double sum, full band, n in {5, 7}, d_z in {1, 2}, both groups.
pub fn freq_vs_spatial_check() -> Result<CheckOutcome> {
    let mut rng = Rng::new(102);
    let mut worst = 0.0f64;
    for group in [Group::P4, Group::P4m] {
        for (n, d_z) in [(5usize, 1usize), (7, 2)] {
            let d_g = group.d_g();
            let k = (n + 1) / 2;
            let f = random_real(&[d_z, d_g, n, n], &mut rng);
            let bank = random_hermitian_bank(d_z, d_g, k, &mut rng)?;
            let fast = gconv_freq(&f, &bank, group, SpectralPath::Half)?;
            let psi = idft2(&pad_band(&bank, (n, n))?, Layout::Centered)?.real_part();
            let slow = oracle::gconv_spatial(&f, &psi, group)?;
            worst = worst.max(fast.sub(&slow)?.max_abs());
        }
    }
    Ok(CheckOutcome::new(
        "freq-vs-spatial-oracle",
        worst < 1e-8,
        format!("max |difference| = {worst:.3e} (tolerance 1e-8)"),
    ))
}

/// Exact equivariance of a randomly initialized model (the desk-trained
/// variant is exercised by the acceptance suite).
pub fn model_equivariance_check() -> Result<CheckOutcome> {
    let mut rng = Rng::new(103);
    let mut worst = 0.0f64;
    for group in [Group::P4, Group::P4m] {
        let cfg = ModelConfig {
            variant: Variant::Gfno,
            group,
            d_z: 3,
            k: 3,
            layers: 2,
            pos_enc: PosEnc::Symmetric,
            in_steps: 2,
        };
        let model = GfnoModel::new(cfg, 55)?;
        let n = 12;
        let x = random_real(&[2, n, n], &mut rng);
        let base = model.forward_tensor(&x, SpectralPath::Half)?;
        for gi in 0..group.d_g() {
            let g = GroupElement::pure(Stab::from_index(group, gi));
            let lhs = model.forward_tensor(&act_plane(&g, &x)?, SpectralPath::Half)?;
            let rhs = act_plane(&g, &base)?;
            worst = worst.max(lhs.sub(&rhs)?.max_abs());
        }
    }
    Ok(CheckOutcome::new(
        "model-equivariance",
        worst < 1e-8,
        format!("max |difference| = {worst:.3e} (tolerance 1e-8)"),
    ))
}

/// Gradient correctness over every primitive kind and the one-step model
/// loss on an 8x8 input.
pub fn gradient_check_suite() -> Result<CheckOutcome> {
    let mut rng = Rng::new(104);
    let mut worst = 0.0f64;

    // Elementwise and contraction primitives.
    let mut params = Parameters::new();
    let a = params.add(random_real(&[6], &mut rng));
    let err = grad_check(
        |ps, tape| {
            let x = tape.param(ps, a);
            let y = tape.gelu(x)?;
            let z = tape.hadamard(y, y)?;
            let s = tape.scale(z, 0.5);
            tape.sum_all(s)
        },
        &mut params,
    )?;
    worst = worst.max(err);

    // Spectral chain with complex kernel parameters.
    let group = Group::P4;
    let n = 8;
    let k = 2;
    let bw = 2 * k - 1;
    let x = random_real(&[1, group.d_g(), n, n], &mut rng);
    let target = random_real(&[1, group.d_g(), n, n], &mut rng);
    let mut params = Parameters::new();
    let bank_vals: Vec<num_complex::Complex64> = (0..numel_of(&[1, 1, group.d_g(), bw, k]))
        .map(|_| num_complex::Complex64::new(rng.normal(), rng.normal()))
        .collect();
    let bank = params.add(Tensor::from_complex(&[1, 1, group.d_g(), bw, k], bank_vals));
    let err = grad_check(
        |ps, tape| {
            let xn = tape.constant(x.clone());
            let spec = tape.rdft2(xn)?;
            let band = tape.band_from_half(spec, k, n)?;
            let hb = tape.param(ps, bank);
            let full = tape.hermitian_extend(hb, k)?;
            let mixed = tape.gspectral_mix(band, full, group)?;
            let half = tape.half_from_band(mixed, n, n)?;
            let out = tape.irdft2(half, n)?;
            tape.rel_l2(out, target.clone())
        },
        &mut params,
    )?;
    worst = worst.max(err);

    // Full one-step model loss on an 8x8 input.
    let cfg = ModelConfig {
        variant: Variant::Gfno,
        group: Group::P4,
        d_z: 2,
        k: 2,
        layers: 1,
        pos_enc: PosEnc::Symmetric,
        in_steps: 2,
    };
    let model = GfnoModel::new(cfg, 5)?;
    let xin = random_real(&[2, 8, 8], &mut rng);
    let target = random_real(&[1, 8, 8], &mut rng);
    let mut params = model.params.clone();
    let err = grad_check(
        |ps, tape| {
            let xn = tape.constant(xin.clone());
            let y = model.forward_with(tape, ps, xn, SpectralPath::Half)?;
            tape.rel_l2(y, target.clone())
        },
        &mut params,
    )?;
    worst = worst.max(err);

    Ok(CheckOutcome::new(
        "gradient-correctness",
        worst < 1e-4,
        format!("max relative error = {worst:.3e} (tolerance 1e-4)"),
    ))
}

/// Solver correctness: single-mode Crank-Nicolson decay, Richardson
/// self-convergence, and unforced enstrophy decay, at n = 32.
pub fn solver_check() -> Result<CheckOutcome> {
    let n = 32;
    // Single-mode decay against the rational form.
    let nu = 0.05;
    let dt = 1e-2;
    let cfg = NsConfig {
        n,
        nu,
        dt,
        record_dt: dt,
        horizon: 0,
        forcing: Forcing::Sym,
        seed: 0,
    };
    let mut solver = NsSolver::new(&cfg)?;
    solver.clear_forcing();
    let mut w = Tensor::zeros(Dtype::Real, &[n, n]);
    for i in 0..n {
        let v = (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin();
        for j in 0..n {
            w.set_real(i * n + j, v);
        }
    }
    let kappa2 = 4.0 * std::f64::consts::PI.powi(2);
    let rho = (1.0 - 0.5 * dt * nu * kappa2) / (1.0 + 0.5 * dt * nu * kappa2);
    let m = 100;
    let mut w_hat = solver.to_spectral(&w);
    for _ in 0..m {
        solver.step_spectral(&mut w_hat);
    }
    let got = solver.to_physical(&w_hat);
    let decay_err = got.sub(&w.scale(rho.powi(m as i32)))?.max_abs();

    // Richardson self-convergence against a dt/8 reference.
    let solve_at = |dt: f64| -> Result<Tensor> {
        let cfg = NsConfig {
            n,
            nu: 1e-3,
            dt,
            record_dt: 0.5,
            horizon: 1,
            forcing: Forcing::NonSym,
            seed: 11,
        };
        Ok(ns_solve(&cfg)?.frames.slice0(1, 1))
    };
    let coarse = solve_at(4e-3)?;
    let mid = solve_at(2e-3)?;
    let fine = solve_at(5e-4)?;
    let ratio = coarse.sub(&fine)?.norm2() / mid.sub(&fine)?.norm2();

    // Zero-forcing enstrophy decay.
    let cfg = NsConfig {
        n,
        nu: 1e-4,
        dt: 1e-3,
        record_dt: 0.5,
        horizon: 4,
        forcing: Forcing::Sym,
        seed: 2,
    };
    let mut solver = NsSolver::new(&cfg)?;
    solver.clear_forcing();
    let w0 = crate::pde::grf_sample(n, 2)?;
    let traj = crate::pde::ns_solve_from(&mut solver, &cfg, &w0).map_err(crate::Error::from)?;
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for f in 0..=cfg.horizon {
        let e: f64 = traj.frames.slice0(f, 1).data().iter().map(|v| v * v).sum();
        if e > prev * (1.0 + 1e-8) {
            monotone = false;
        }
        prev = e;
    }

    let passed = decay_err < 1e-8 && (3.5..=4.5).contains(&ratio) && monotone;
    Ok(CheckOutcome::new(
        "solver-correctness",
        passed,
        format!(
            "decay error {decay_err:.3e} (< 1e-8), Richardson ratio {ratio:.2} (in [3.5, 4.5]), enstrophy non-increasing: {monotone}"
        ),
    ))
}

/// Rotation closure of the flow map: small for the invariant forcing,
/// order one otherwise (n = 64, t = 5).
pub fn closure_criterion_check() -> Result<CheckOutcome> {
    let cfg = NsConfig {
        n: 64,
        nu: 1e-4,
        dt: 1e-3,
        record_dt: 1.0,
        horizon: 5,
        forcing: Forcing::Sym,
        seed: 77,
    };
    let sym = closure_check(&cfg, 5, 1)?;
    let nonsym_cfg = NsConfig {
        forcing: Forcing::NonSym,
        ..cfg
    };
    let nonsym = closure_check(&nonsym_cfg, 5, 1)?;
    let passed = sym < 2e-2 && nonsym > 1e-1;
    Ok(CheckOutcome::new(
        "ns-rotation-closure",
        passed,
        format!("sym discrepancy {sym:.3e} (< 2e-2), nonsym {nonsym:.3e} (> 1e-1)"),
    ))
}

/// Reference parameter counts at the published configurations.
pub fn param_count_check() -> Result<CheckOutcome> {
    let cases = [
        ("fno", Variant::Fno, Group::None, 20, PosEnc::Cartesian, 930_000.0),
        ("gfno-p4", Variant::Gfno, Group::P4, 10, PosEnc::Symmetric, 850_000.0),
        ("gfno-p4m", Variant::Gfno, Group::P4m, 7, PosEnc::Symmetric, 840_000.0),
    ];
    let mut detail = String::new();
    let mut passed = true;
    for (name, variant, group, d_z, pos_enc, expect) in cases {
        let cfg = ModelConfig {
            variant,
            group,
            d_z,
            k: 12,
            layers: 4,
            pos_enc,
            in_steps: 10,
        };
        let count = param_count(&cfg);
        let rel = (count as f64 - expect).abs() / expect;
        if rel >= 0.05 {
            passed = false;
        }
        detail.push_str(&format!("{name}: {count} ({:.1}%) ", rel * 100.0));
    }
    Ok(CheckOutcome::new(
        "parameter-counts",
        passed,
        detail.trim_end().to_string(),
    ))
}

/// Run the full fast property/oracle suite.
pub fn run_all() -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        dft_equivariance_check()?,
        freq_vs_spatial_check()?,
        model_equivariance_check()?,
        gradient_check_suite()?,
        solver_check()?,
        closure_criterion_check()?,
        param_count_check()?,
    ])
}
