//! `gfno`: generate Navier-Stokes datasets, train and evaluate models,
//! and run the property/oracle check suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gfno_core::harness::{
    self, interp_baseline, rollout_eval, rotation_test, superres_eval, train, EvalReport,
    Strategy, TrainConfig,
};
use gfno_core::operator::{parse_group, GfnoModel, ModelConfig, PosEnc, Variant};
use gfno_core::pde::{
    generate_dataset, load_dataset, save_dataset, DatasetManifest, Forcing, NsConfig,
    GENERATOR_VERSION,
};
#[derive(Parser)]
#[command(name = "gfno", version, about = "Group-equivariant Fourier neural operators on periodic 2-D grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate Navier-Stokes vorticity trajectories.
    GenNs {
        /// Grid extent (even, at least 8).
        #[arg(long, default_value_t = 32)]
        n: usize,
        /// Viscosity.
        #[arg(long, default_value_t = 1e-4)]
        nu: f64,
        /// Solver step.
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Recorded horizon in time units (one frame per unit plus the
        /// initial condition).
        #[arg(long, default_value_t = 20)]
        t: usize,
        /// Forcing term: sym (rotation invariant) or nonsym.
        #[arg(long, default_value = "sym")]
        forcing: String,
        /// Number of trajectories.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Base seed; trajectory i uses seed + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a generated dataset.
    Train {
        /// Dataset directory (from gen-ns). The trailing 10% of
        /// trajectories (at least one) become the validation split unless
        /// --valid-count is given.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "gfno")]
        model: String,
        #[arg(long, default_value = "p4")]
        group: String,
        #[arg(long, default_value_t = 10)]
        dz: usize,
        #[arg(long, default_value_t = 8)]
        modes: usize,
        #[arg(long, default_value_t = 4)]
        layers: usize,
        /// Training strategy: markov, tf, or recurrent.
        #[arg(long, default_value = "tf")]
        strategy: String,
        /// Data augmentation group: none, p4, or p4m.
        #[arg(long, default_value = "none")]
        augment: String,
        #[arg(long = "pos-enc", default_value = "symmetric")]
        pos_enc: String,
        /// Conditioning window length.
        #[arg(long = "in-steps", default_value_t = 10)]
        in_steps: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 20)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long = "weight-decay", default_value_t = 1e-4)]
        weight_decay: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Validation trajectories taken from the end of the dataset.
        #[arg(long = "valid-count")]
        valid_count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated tasks: rollout, rot90, superres, interp.
        #[arg(long, default_value = "rollout,rot90")]
        tasks: String,
        /// Resolution ratio between --data and the training grid for the
        /// superres and interp tasks.
        #[arg(long, default_value_t = 2)]
        factor: usize,
        /// Write the JSON report here (stdout if omitted).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the property/oracle suite; exits nonzero on any failure.
    Check,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> gfno_core::Result<ExitCode> {
    match cli.command {
        Command::GenNs {
            n,
            nu,
            dt,
            t,
            forcing,
            count,
            seed,
            out,
        } => {
            let forcing = Forcing::parse(&forcing)?;
            let cfg = NsConfig {
                n,
                nu,
                dt,
                record_dt: 1.0,
                horizon: t,
                forcing,
                seed,
            };
            let seeds: Vec<u64> = (0..count as u64).map(|i| seed + i).collect();
            let threads = std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1);
            println!(
                "generating {count} trajectories on a {n}x{n} grid (T = {t}, {} forcing)",
                forcing.name()
            );
            let data = generate_dataset(&cfg, &seeds, threads)?;
            let manifest = DatasetManifest {
                n,
                nu,
                dt,
                record_dt: cfg.record_dt,
                t,
                forcing: forcing.name().to_string(),
                seeds,
                generator_version: GENERATOR_VERSION.to_string(),
            };
            save_dataset(&out, &data, &manifest)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            data,
            model,
            group,
            dz,
            modes,
            layers,
            strategy,
            augment,
            pos_enc,
            in_steps,
            epochs,
            batch,
            lr,
            weight_decay,
            seed,
            valid_count,
            out,
        } => {
            let (all, manifest) = load_dataset(&data)?;
            let n_traj = all.shape()[0];
            let n_valid = valid_count
                .unwrap_or_else(|| (n_traj / 10).max(1))
                .min(n_traj.saturating_sub(1))
                .max(1);
            let n_train = n_traj - n_valid;
            let train_data = all.slice0(0, n_train);
            let valid_data = all.slice0(n_train, n_valid);

            let strategy = Strategy::parse(&strategy)?;
            let in_steps = if strategy == Strategy::Markov { 1 } else { in_steps };
            let mcfg = ModelConfig {
                variant: Variant::parse(&model)?,
                group: parse_group(&group)?,
                d_z: dz,
                k: modes,
                layers,
                pos_enc: PosEnc::parse(&pos_enc)?,
                in_steps,
            };
            let tcfg = TrainConfig {
                strategy,
                in_steps,
                epochs,
                batch,
                lr0: lr,
                weight_decay,
                betas: (0.9, 0.999),
                augment: parse_group(&augment)?,
                seed,
            };
            println!(
                "training {} ({} parameters) on {} trajectories ({} validation) from {}",
                mcfg.variant.name(),
                gfno_core::operator::param_count(&mcfg),
                n_train,
                n_valid,
                data.display()
            );
            let mut model = GfnoModel::new(mcfg, seed)?;
            let report = train(&mut model, &train_data, &valid_data, &tcfg)?;
            for (epoch, (loss, val)) in report
                .loss_curve
                .iter()
                .zip(&report.val_curve)
                .enumerate()
            {
                println!(
                    "epoch {epoch:>3}: train {:.3}%  valid {:.3}%",
                    loss * 100.0,
                    val * 100.0
                );
            }
            println!(
                "best validation {:.3}% at epoch {} (dataset {}, generator {})",
                report.best_val * 100.0,
                report.best_epoch,
                manifest.forcing,
                manifest.generator_version
            );
            model.save(&out)?;
            let train_meta = serde_json::json!({
                "seed": seed,
                "strategy": tcfg.strategy.name(),
                "augment": tcfg.augment.name(),
                "epochs": epochs,
                "batch": batch,
                "lr0": lr,
                "weight_decay": weight_decay,
                "best_val": report.best_val,
                "best_epoch": report.best_epoch,
                "loss_curve": report.loss_curve,
                "val_curve": report.val_curve,
                "dataset_seeds": manifest.seeds,
            });
            let meta_path = out.join("train_report.json");
            std::fs::write(&meta_path, serde_json::to_string_pretty(&train_meta).unwrap())
                .map_err(|e| gfno_core::Error::Io { path: meta_path, source: e })?;
            println!("checkpoint written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            ckpt,
            data,
            tasks,
            factor,
            report,
        } => {
            let model = GfnoModel::load(&ckpt)?;
            let (test, manifest) = load_dataset(&data)?;
            let t_in = model.config.in_steps;
            let mut out = EvalReport {
                model_id: ckpt.display().to_string(),
                dataset_id: data.display().to_string(),
                test: None,
                test_rot90: None,
                superres: None,
                interp_baseline: None,
                seeds: manifest.seeds.clone(),
            };
            for task in tasks.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match task {
                    "rollout" => {
                        let v = rollout_eval(&model, &test, t_in)?;
                        println!("rollout R-MSE: {:.3}%", v * 100.0);
                        out.test = Some(v);
                    }
                    "rot90" => {
                        let v = rotation_test(&model, &test, t_in)?;
                        println!("rotated rollout R-MSE: {:.3}%", v * 100.0);
                        out.test_rot90 = Some(v);
                    }
                    "superres" => {
                        let v = superres_eval(&model, &test, t_in)?;
                        println!("super-resolution R-MSE: {:.3}%", v * 100.0);
                        out.superres = Some(v);
                    }
                    "interp" => {
                        let v = interp_baseline(&model, &test, t_in, factor)?;
                        println!("interpolation-baseline R-MSE: {:.3}%", v * 100.0);
                        out.interp_baseline = Some(v);
                    }
                    other => {
                        return Err(gfno_core::Error::Invalid(format!(
                            "unknown eval task `{other}`"
                        )))
                    }
                }
            }
            out.validate()?;
            let json = serde_json::to_string_pretty(&out).expect("report serializes");
            match report {
                Some(path) => {
                    std::fs::write(&path, &json).map_err(|e| gfno_core::Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    println!("report written to {}", path.display());
                }
                None => println!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check => {
            let outcomes = harness::check::run_all()?;
            let mut ok = true;
            for o in &outcomes {
                println!(
                    "[{}] {:<24} {}",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.detail
                );
                ok &= o.passed;
            }
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
