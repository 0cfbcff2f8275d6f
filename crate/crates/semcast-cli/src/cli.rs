//! Command-line entry points: training, transmission, sweeps, and
//! checkpoint inspection.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use semcast_core::ckpt::{
    decode_encoding, decode_grids, decode_mlp, decode_prior, encode_encoding, encode_mlp,
    save_esc, save_field, Container, FLAG_META_INIT,
};
use semcast_core::encoding::EncodingMode;
use semcast_core::esc::{analysis_transform, synthesis_transform};
use semcast_core::field::progressive_reconstruct;
use semcast_core::image::write_image;
use semcast_core::inr::sample_inr;
use semcast_core::loss::psnr;
use semcast_core::{Model, Scalar, Signal};

use crate::config::Config;
use crate::scheme::{
    build_scheme, channel_config, fit_field, fit_isc, meta_image_init, run_transmission,
    train_esc_model, RDPoint,
};
use crate::sweep::{cell_seed, cliff_report, rd_sweep, to_csv};

#[derive(Parser)]
#[command(
    name = "semcast",
    version,
    about = "Semantic transmission laboratory: train codecs, sweep channels, measure cliffs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured scheme; save checkpoints and clean reconstructions.
    Fit(RunArgs),
    /// Meta-train a shared initialization over the signal family.
    MetaTrain(RunArgs),
    /// Run one transmission and print its measurement.
    Transmit(RunArgs),
    /// Measure rate-distortion over the full SNR x budget x seed grid.
    Sweep(RunArgs),
    /// Compare digital and analog delivery across SNR at equal bandwidth.
    Cliff(RunArgs),
    /// Describe a checkpoint file.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the experiment seed and the replicate list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    /// Checkpoint file.
    path: PathBuf,
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.cmd {
        Command::Fit(a) => cmd_fit(&a),
        Command::MetaTrain(a) => cmd_meta_train(&a),
        Command::Transmit(a) => cmd_transmit(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Cliff(a) => cmd_cliff(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn setup(args: &RunArgs) -> Result<(Config, Vec<Signal>)> {
    let mut cfg = Config::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.experiment.seed = seed;
        cfg.experiment.seeds = vec![seed];
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create output dir {}", args.out.display()))?;
    let signals = crate::synth::load_signals(&cfg.signal)?;
    Ok((cfg, signals))
}

fn write_bytes(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// Reconstructions that have an image layout go out as netpbm files;
/// anything else is silently skipped.
fn write_recon(dir: &Path, stem: &str, signal: &Signal) -> Result<Option<PathBuf>> {
    if signal.shape().len() != 2 || !matches!(signal.channels(), 1 | 3) {
        return Ok(None);
    }
    let ext = if signal.channels() == 3 { "ppm" } else { "pgm" };
    let path = dir.join(format!("{stem}.{ext}"));
    write_image(&path, signal)?;
    Ok(Some(path))
}

fn cmd_fit(args: &RunArgs) -> Result<()> {
    let (cfg, signals) = setup(args)?;
    let seed = cfg.experiment.seed;
    match cfg.experiment.scheme.as_str() {
        "isc-analog" => {
            for (i, signal) in signals.iter().enumerate() {
                let fit = fit_isc(&cfg.inr, signal, seed)?;
                let mut c = Container::new();
                c.add("params", encode_mlp(&fit.params, 0))?;
                c.add("encoding", encode_encoding(&fit.enc)?)?;
                let path = write_bytes(&args.out, &format!("inr_sig{i}.ckpt"), &c.encode())?;
                let recon =
                    sample_inr(&fit.params, &fit.enc, signal.shape(), signal.lo(), signal.hi())?;
                let q = psnr(&recon, signal, signal.peak())?;
                println!(
                    "signal {i}: {} params, {} steps, clean psnr {q} dB, saved {}",
                    fit.params.param_count(),
                    fit.report.steps_run,
                    path.display()
                );
                write_recon(&args.out, &format!("fit_isc_sig{i}"), &recon)?;
            }
        }
        "esc-analog" | "esc-adaptive" => {
            let model = train_esc_model(&cfg.esc, &signals, seed)?;
            let path = write_bytes(&args.out, "esc.ckpt", &save_esc(&model)?)?;
            println!("trained codec on {} signals, saved {}", signals.len(), path.display());
            for (i, signal) in signals.iter().enumerate() {
                let (latents, layout) = analysis_transform(&model, signal)?;
                let recon =
                    synthesis_transform(&model, &latents, &layout, signal.lo(), signal.hi())?;
                let q = psnr(&recon, signal, signal.peak())?;
                println!("signal {i}: clean codec psnr {q} dB");
                write_recon(&args.out, &format!("fit_esc_sig{i}"), &recon)?;
            }
        }
        "hsc-fieldgrid" => {
            for (i, signal) in signals.iter().enumerate() {
                let fit = fit_field(&cfg.field, &cfg.inr, signal, seed)?;
                let bytes = save_field(&fit.model, &fit.grids, &fit.prior)?;
                let path = write_bytes(&args.out, &format!("field_sig{i}.ckpt"), &bytes)?;
                let recon = progressive_reconstruct(
                    &fit.model,
                    &fit.grids,
                    fit.grids.level_count(),
                    signal.shape(),
                    signal.lo(),
                    signal.hi(),
                )?;
                let q = psnr(&recon, signal, signal.peak())?;
                println!("signal {i}: clean psnr {q} dB, saved {}", path.display());
                write_recon(&args.out, &format!("fit_field_sig{i}"), &recon)?;
            }
        }
        "isc-meta" => {
            bail!("isc-meta trains with `semcast meta-train`; transmit and sweep adapt from it")
        }
        "digital-baseline" => bail!("digital-baseline has nothing to fit"),
        other => bail!("unknown scheme {other:?}"),
    }
    Ok(())
}

fn cmd_meta_train(args: &RunArgs) -> Result<()> {
    let (cfg, _signals) = setup(args)?;
    let (init, _enc, curve) = meta_image_init(&cfg, cfg.experiment.seed)?;
    let path = write_bytes(&args.out, "meta_init.ckpt", &encode_mlp(&init, FLAG_META_INIT))?;
    let first = curve.first().copied().unwrap_or(f64::NAN);
    let last = curve.last().copied().unwrap_or(f64::NAN);
    println!(
        "meta-trained {} params on {} tasks, outer loss {first:.4e} -> {last:.4e}, saved {}",
        init.param_count(),
        cfg.meta.tasks,
        path.display()
    );
    Ok(())
}

fn cmd_transmit(args: &RunArgs) -> Result<()> {
    let (cfg, signals) = setup(args)?;
    let exp = &cfg.experiment;
    let scheme = build_scheme(&cfg, &signals, 0)?;
    let (snr, budget, run_seed) = (exp.snrs_db[0], exp.budgets[0], exp.seeds[0]);
    let channel = channel_config(&exp.channel, exp.block_len, snr, cell_seed(run_seed, 0, 0, 0));
    let mut out = run_transmission(&scheme, &signals[0], &channel, budget)?;
    out.point.seed = run_seed;
    for (name, uses) in &out.stages {
        println!("stage {name}: {uses} uses");
    }
    println!("{}", RDPoint::CSV_HEADER);
    println!("{}", out.point.csv_row());
    write_bytes(&args.out, "transmit.csv", to_csv(std::slice::from_ref(&out.point)).as_bytes())?;
    if let Some(p) = write_recon(&args.out, "transmit_recon", &out.reconstruction)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_sweep(args: &RunArgs) -> Result<()> {
    let (cfg, signals) = setup(args)?;
    let out = rd_sweep(&cfg, &signals)?;
    let path = write_bytes(&args.out, "sweep.csv", out.csv.as_bytes())?;
    println!("wrote {} rows to {}", out.rows.len(), path.display());
    let mut images = 0;
    for (stem, recon) in &out.recons {
        if write_recon(&args.out, stem, recon)?.is_some() {
            images += 1;
        }
    }
    println!("wrote {images} reconstruction images to {}", args.out.display());
    Ok(())
}

fn cmd_cliff(args: &RunArgs) -> Result<()> {
    let (cfg, signals) = setup(args)?;
    let report = cliff_report(&cfg, &signals)?;
    print!("{}", report.text);
    write_bytes(&args.out, "cliff.txt", report.text.as_bytes())?;
    let path = write_bytes(&args.out, "cliff.csv", report.csv.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let bytes =
        std::fs::read(&args.path).with_context(|| format!("cannot read {}", args.path.display()))?;
    if let Ok(c) = Container::decode(&bytes) {
        println!("container with {} blobs", c.names().len());
        for name in c.names() {
            describe_blob(name, c.get(name)?);
        }
        return Ok(());
    }
    match decode_mlp::<Scalar>(&bytes) {
        Ok((params, flags)) => {
            println!("mlp, {}", mlp_summary(&params));
            if flags & FLAG_META_INIT != 0 {
                println!("flags: meta-trained initialization");
            }
            Ok(())
        }
        Err(_) => bail!("{} is not a recognized checkpoint", args.path.display()),
    }
}

fn mlp_summary(params: &Model) -> String {
    let mut dims = vec![params.in_dim()];
    dims.extend(params.layers().iter().map(|l| l.out_dim()));
    format!("{} params, layer widths {dims:?}", params.param_count())
}

fn describe_blob(name: &str, blob: &[u8]) {
    if let Ok((params, flags)) = decode_mlp::<Scalar>(blob) {
        let tag =
            if flags & FLAG_META_INIT != 0 { ", meta-trained initialization" } else { "" };
        println!("  {name}: mlp, {}{tag}", mlp_summary(&params));
    } else if let Ok(enc) = decode_encoding::<Scalar>(blob) {
        match enc.mode() {
            EncodingMode::None => {
                println!("  {name}: encoding, identity on {} inputs", enc.input_dim())
            }
            EncodingMode::Fourier => println!(
                "  {name}: encoding, {} fourier features (sigma {}) on {} inputs",
                enc.freq_count(),
                enc.sigma(),
                enc.input_dim()
            ),
        }
    } else if let Ok(prior) = decode_prior::<Scalar>(blob) {
        println!(
            "  {name}: prior, {:?} x{}, bin width {}",
            prior.family(),
            prior.components(),
            prior.delta()
        );
    } else if let Ok((grids, _)) = decode_grids::<Scalar>(blob) {
        let sizes: Vec<&[usize]> = grids.levels().iter().map(|l| l.sizes()).collect();
        println!(
            "  {name}: grids, {} features per vertex, levels {sizes:?}",
            grids.feature_dim()
        );
    } else {
        println!("  {name}: {} bytes", blob.len());
    }
}
