//! Acceptance checks for the laboratory. Each test prints one line on
//! success; tolerances and budgets are pinned, not tuned per run.

use std::time::Instant;

use semcast_core::channel::{bandwidth_report, ofdm_budget};
use semcast_core::encoding::Encoding;
use semcast_core::esc::{
    online_adapt_decoder, rate_allocate, train_esc, AdaptConfig, EscTrainConfig,
};
use semcast_core::field::progressive_reconstruct;
use semcast_core::inr::{fit_inr, siren_init, FitConfig};
use semcast_core::loss::mse;
use semcast_core::meta::{meta_train, steps_to_target, MetaAlgorithm, MetaConfig};
use semcast_core::nn::{mlp_backward, mlp_forward, Activation, Layer, ModelParams};
use semcast_core::prior::{quantize, LatentPrior, PriorFamily, MIN_BIN_PROB};
use semcast_core::rng::Prng;
use semcast_core::signal::lattice_coords;
use semcast_core::Scalar;
use semcast_cli::config::Config;
use semcast_cli::scheme::fit_field;
use semcast_cli::synth::{blobs_image, constant_image, sinusoid_family};

fn db(mse: f64, peak: f64) -> f64 {
    10.0 * (peak * peak / mse).log10()
}

// --- criterion 1: gradients match finite differences ---------------------------

fn random_net(rng: &mut Prng, arch: usize) -> ModelParams<f64> {
    let hidden_count = 1 + rng.index(2);
    let mut dims = vec![2 + rng.index(3)];
    for _ in 0..hidden_count {
        dims.push(3 + rng.index(4));
    }
    dims.push(1 + rng.index(3));
    let mut layers = Vec::new();
    for (li, w) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let last = li == dims.len() - 2;
        let activation = if last {
            Activation::Identity
        } else {
            match arch % 3 {
                0 => Activation::Sine { omega: 1.5 },
                1 => Activation::Relu,
                _ => Activation::Sine { omega: 30.0 },
            }
        };
        let scale = 1.0 / (fan_in as f64).sqrt();
        let weights = (0..fan_in * fan_out).map(|_| rng.uniform_in(-scale, scale)).collect();
        let bias = (0..fan_out).map(|_| rng.uniform_in(-0.1, 0.1)).collect();
        layers.push(Layer::new(fan_in, fan_out, weights, bias, activation).unwrap());
    }
    ModelParams::new(layers).unwrap()
}

fn squared_loss(net: &ModelParams<f64>, x: &[f64], t: &[f64]) -> f64 {
    let y = mlp_forward(net, x).unwrap();
    y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[test]
fn criterion_01_gradient_oracle() {
    let start = Instant::now();
    let mut rng = Prng::seed(101);
    let mut worst = 0.0f64;
    for arch in 0..20 {
        let net = random_net(&mut rng, arch);
        let x: Vec<f64> = (0..net.in_dim()).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let t: Vec<f64> = (0..net.out_dim()).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let y = mlp_forward(&net, &x).unwrap();
        let out_grad: Vec<f64> = y.iter().zip(&t).map(|(a, b)| 2.0 * (a - b)).collect();
        let (grads, _) = mlp_backward(&net, &x, &out_grad).unwrap();

        let flat = net.flatten();
        let gflat = grads.flatten();
        for i in 0..flat.len() {
            let h = 1e-5 * (1.0 + flat[i].abs());
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let fd = (squared_loss(&net.unflatten(&plus).unwrap(), &x, &t)
                - squared_loss(&net.unflatten(&minus).unwrap(), &x, &t))
                / (2.0 * h);
            let rel = (gflat[i] - fd).abs() / gflat[i].abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
            assert!(
                rel < 1e-4,
                "net {arch} param {i}: backprop {} vs finite difference {fd}, rel {rel:.2e}",
                gflat[i]
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "gradient oracle took {elapsed:.1}s");
    println!(
        "criterion 1: pass - 20 nets, worst relative gradient error {worst:.2e} in {elapsed:.2}s"
    );
}

// --- criterion 2: representation fitting quality --------------------------------

#[test]
fn criterion_02_inr_fitting() {
    let start = Instant::now();
    let image = blobs_image(64, 64, 11).unwrap();
    let enc = Encoding::fourier(2, 32, 10.0, 7).unwrap();
    let net = siren_init(&[enc.encoded_dim(), 64, 64, 1], 30.0, 7).unwrap();
    let cfg = FitConfig {
        steps: 5000,
        lr: 1e-3,
        batch: Some(1024),
        target_mse: Some(1.2e-3),
        record_every: 500,
        seed: 7,
    };
    let report = fit_inr(net, &enc, &image, &cfg).unwrap();
    let psnr = db(report.final_mse, image.peak());
    assert!(
        psnr >= 28.0,
        "image fit reached {psnr:.2} dB after {} steps",
        report.steps_run
    );
    assert!(report.steps_run <= 5000);

    let flat = constant_image(64, 64, 0.5).unwrap();
    let enc2 = Encoding::none(2).unwrap();
    let net2 = siren_init(&[2, 64, 64, 1], 30.0, 3).unwrap();
    let cfg2 = FitConfig {
        steps: 500,
        lr: 2e-3,
        batch: None,
        target_mse: Some(9e-7),
        record_every: 100,
        seed: 3,
    };
    let report2 = fit_inr(net2, &enc2, &flat, &cfg2).unwrap();
    assert!(
        report2.final_mse < 1e-6,
        "constant fit stuck at {:.2e} after {} steps",
        report2.final_mse,
        report2.steps_run
    );
    assert!(report2.steps_run <= 500);

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "fitting took {elapsed:.0}s");
    println!(
        "criterion 2: pass - 64x64 image {psnr:.2} dB in {} steps, constant mse {:.1e} in {} steps, {elapsed:.0}s",
        report.steps_run, report2.final_mse, report2.steps_run
    );
}

// --- criterion 3: code length matches numeric integration -----------------------

fn density(family: PriorFamily, mu: f64, scale: f64, x: f64) -> f64 {
    match family {
        PriorFamily::Gaussian => {
            let z = (x - mu) / scale;
            (-0.5 * z * z).exp() / (scale * (2.0 * std::f64::consts::PI).sqrt())
        }
        PriorFamily::Laplace => (-(x - mu).abs() / scale).exp() / (2.0 * scale),
    }
}

fn simpson(family: PriorFamily, mu: f64, scale: f64, lo: f64, hi: f64) -> f64 {
    let n = 4096usize;
    let h = (hi - lo) / n as f64;
    let mut acc = density(family, mu, scale, lo) + density(family, mu, scale, hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * density(family, mu, scale, lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// Bin mass by quadrature, split at the Laplace kink when it falls inside.
fn bin_mass_quadrature(family: PriorFamily, mu: f64, scale: f64, lo: f64, hi: f64) -> f64 {
    if lo < mu && mu < hi {
        simpson(family, mu, scale, lo, mu) + simpson(family, mu, scale, mu, hi)
    } else {
        simpson(family, mu, scale, lo, hi)
    }
}

#[test]
fn criterion_03_entropy_oracle() {
    let mut rng = Prng::seed(303);
    let mut checked = 0;
    let mut worst = 0.0f64;
    for family in [PriorFamily::Gaussian, PriorFamily::Laplace] {
        for _ in 0..50 {
            let mu = rng.uniform_in(-1.0, 1.0);
            let scale = rng.uniform_in(0.3, 1.2);
            let delta = rng.uniform_in(0.02, 0.2);
            let prior =
                LatentPrior::<f64>::with_params(family, vec![mu], vec![scale.ln()], delta).unwrap();

            let v = mu + rng.uniform_in(-3.0, 3.0) * scale;
            let got = prior.bits_for_value(0, v).unwrap();
            let k = quantize(v, delta).unwrap();
            let (lo, hi) = ((k as f64 - 0.5) * delta, (k as f64 + 0.5) * delta);
            let mass = bin_mass_quadrature(family, mu, scale, lo, hi);
            let want = -mass.max(MIN_BIN_PROB).log2();
            let err = (got - want).abs();
            worst = worst.max(err);
            assert!(
                err < 1e-6,
                "{family:?} mu {mu:.3} scale {scale:.3} delta {delta:.3} v {v:.3}: \
                 {got} vs quadrature {want} ({err:.2e} bits)"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 100);
    println!("criterion 3: pass - 100 values, worst error {worst:.2e} bits");
}

// --- criterion 4: rate allocation exactness --------------------------------------

#[test]
fn criterion_04_rate_allocation() {
    let mut rng = Prng::seed(404);
    for trial in 0..1000 {
        let count = 1 + rng.index(20);
        let cap = 1 + rng.index(16);
        let budget = rng.index(count * cap + 1);
        let entropies: Vec<f64> = (0..count).map(|_| rng.uniform_in(0.0, 8.0)).collect();
        let alloc = rate_allocate(&entropies, budget, cap).unwrap();
        let total: usize = alloc.uses().iter().sum();
        assert_eq!(total, budget, "trial {trial}: {count} patches, cap {cap}");
        assert!(alloc.uses().iter().all(|&u| u <= cap));
    }
    let alloc = rate_allocate(&[2.0, 1.0, 1.0], 8, 8).unwrap();
    assert_eq!(alloc.uses(), &[4, 2, 2]);
    println!("criterion 4: pass - 1000 random budgets exact, [2,1,1]/8 -> [4,2,2]");
}

// --- criterion 5: cliff vs graceful degradation ----------------------------------

#[test]
fn criterion_05_cliff_vs_graceful() {
    let start = Instant::now();
    let toml = r#"
        [experiment]
        scheme = "isc-analog"
        design_snr_db = 10.0
        seeds = [0, 1, 2, 3, 4]

        [signal]
        kind = "blobs"
        size = [64, 64]

        [inr]
        hidden = [64, 64]
        encoding = "fourier"
        frequencies = 32
        sigma = 10.0
        steps = 1500
        lr = 1e-3
        batch = 1024

        [digital]
        bits_per_sample = 8
    "#;
    let mut cfg = Config::parse(toml).unwrap();
    cfg.experiment.snrs_db = (-5..=20).map(f64::from).collect();
    let signals = semcast_cli::synth::load_signals(&cfg.signal).unwrap();
    let report = semcast_cli::sweep::cliff_report(&cfg, &signals).unwrap();

    let payload = 64.0 * 64.0 * 8.0;
    let capacity = 0.5 * (1.0 + 10f64.powf(1.0)).log2();
    assert_eq!(report.budget, (payload / capacity).ceil() as usize);

    let digital_steps: Vec<f64> =
        report.digital_psnr_db.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let big = digital_steps.iter().filter(|s| **s > 10.0).count();
    let rest = digital_steps.iter().filter(|s| **s <= 10.0).all(|s| *s < 1e-9);
    assert_eq!(big, 1, "digital series must have exactly one discontinuity");
    assert!(rest, "digital series must be flat away from its threshold");

    assert!(
        report.analog_max_step_db < 3.0,
        "analog max step {:.2} dB",
        report.analog_max_step_db
    );
    assert!(
        report.analog_spearman > 0.95,
        "analog spearman {:.4}",
        report.analog_spearman
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "cliff comparison took {elapsed:.0}s");
    println!(
        "criterion 5: pass - digital jump {:.1} dB, analog max step {:.2} dB, spearman {:.4}, {elapsed:.0}s",
        report.digital_max_step_db, report.analog_max_step_db, report.analog_spearman
    );
}

// --- criterion 6: progressive levels strictly improve ----------------------------

#[test]
fn criterion_06_progressive_levels() {
    // Blobs plus a fine grating: the grating sits above the 9x9 grid's
    // resolution but within the 17x17 grid's, so the last level carries
    // structure no earlier level can. The low-frequency decoder on raw
    // coordinates cannot memorize the image either.
    let base = blobs_image(32, 32, 21).unwrap();
    let amp = 0.12;
    let values: Vec<Scalar> = base
        .values()
        .iter()
        .zip(lattice_coords::<f64>(&[32, 32]))
        .map(|(v, p)| {
            let grating = (std::f64::consts::PI * 5.0 * p[0]).sin();
            ((*v as f64) * (1.0 - 2.0 * amp) + amp + amp * grating) as Scalar
        })
        .collect();
    let signal = base.with_values(values).unwrap();
    let toml = r#"
        [experiment]
        scheme = "hsc-fieldgrid"

        [inr]
        encoding = "none"
        omega0 = 1.0

        [field]
        levels = [[5, 5], [9, 9], [17, 17]]
        features = 2
        hidden = 32
        steps = 2000
        lr = 2e-3
        rate_lambda = 1e-5
        delta = 0.02
    "#;
    let cfg = Config::parse(toml).unwrap();
    let fit = fit_field(&cfg.field, &cfg.inr, &signal, 5).unwrap();

    let mut errs = Vec::new();
    for k in 0..=3 {
        let recon = progressive_reconstruct(
            &fit.model,
            &fit.grids,
            k,
            signal.shape(),
            signal.lo(),
            signal.hi(),
        )
        .unwrap();
        errs.push(mse(recon.values(), signal.values()).unwrap());
    }
    for k in 0..3 {
        assert!(
            errs[k + 1] < errs[k],
            "mse must strictly drop with each level: {errs:?}"
        );
    }
    println!(
        "criterion 6: pass - mse by level count {:?}",
        errs.iter().map(|e| format!("{e:.5e}")).collect::<Vec<_>>()
    );
}

// --- criterion 7: meta-initialization adapts faster -------------------------------

#[test]
fn criterion_07_meta_acceleration() {
    let sites = 32;
    let train = sinusoid_family(sites, 16, 500).unwrap();
    let held_out = sinusoid_family(sites, 20, 900).unwrap();
    let enc = Encoding::<Scalar>::none(1).unwrap();
    let dims = [1usize, 16, 16, 1];

    let start = siren_init(&dims, 30.0, 70).unwrap();
    let mc = MetaConfig {
        algorithm: MetaAlgorithm::FirstOrderMaml,
        inner_steps: 3,
        inner_lr: 1e-2,
        outer_lr: 2e-3,
        task_batch: 4,
        outer_iters: 400,
        seed: 70,
    };
    let (meta_init, _) = meta_train(start, &enc, &train, &mc).unwrap();

    let target_mse = 4e-3; // 30 dB at peak 2
    let max_steps = 2000;
    let mut wins = 0;
    for (i, task) in held_out.iter().enumerate() {
        let meta_steps = steps_to_target(&meta_init, &enc, task, 1e-2, target_mse, max_steps)
            .unwrap()
            .unwrap_or(max_steps + 1);
        let fresh = siren_init(&dims, 30.0, 7000 + i as u64).unwrap();
        let fresh_steps = steps_to_target(&fresh, &enc, task, 1e-2, target_mse, max_steps)
            .unwrap()
            .unwrap_or(max_steps + 1);
        if meta_steps < fresh_steps {
            wins += 1;
        }
    }
    assert!(wins >= 16, "meta init faster on only {wins}/20 held-out tasks");
    println!("criterion 7: pass - meta init reaches 30 dB first on {wins}/20 tasks");
}

// --- criterion 8: online decoder adaptation helps out of distribution -------------

#[test]
fn criterion_08_online_adaptation() {
    let train: Vec<_> = (0..6).map(|i| blobs_image(16, 16, i).unwrap()).collect();
    let mut tc = EscTrainConfig::new(4, 12);
    tc.hidden = 48;
    tc.epochs = 200;
    tc.lr = 1e-3;
    tc.rate_lambda = 1e-3;
    tc.snr_db = 10.0;
    tc.seed = 80;
    let (model, _) = train_esc(&train, &tc).unwrap();

    let ood = semcast_cli::synth::stripes_image(16, 16, 2).unwrap();
    let cfg = AdaptConfig { steps: 60, lr: 1e-3, delta_u: 1e-4, rd_lambda: 1e-7 };
    let outcome = online_adapt_decoder(&model, &ood, &cfg).unwrap();

    let rd_with = outcome.adapted_mse + cfg.rd_lambda * outcome.overhead_bits;
    assert!(
        rd_with <= outcome.base_mse + 1e-12,
        "adapted rd {rd_with:.6e} vs base {:.6e}",
        outcome.base_mse
    );

    let gain = 10.0 * (outcome.base_mse / outcome.adapted_mse).log10();
    assert!(
        gain >= 0.2,
        "adaptation gained only {gain:.3} dB (fell back: {})",
        outcome.fell_back
    );
    println!(
        "criterion 8: pass - adaptation gains {gain:.2} dB at {:.0} overhead bits",
        outcome.overhead_bits
    );
}

// --- criterion 9: bandwidth accounting anchors -----------------------------------

#[test]
fn criterion_09_bandwidth_accounting() {
    assert_eq!(ofdm_budget(1.0, 1).unwrap(), 14_000);
    let ratio = bandwidth_report(6980, 196_608).unwrap().ratio;
    assert!(
        (ratio - 0.0355).abs() < 5e-4,
        "bandwidth ratio {ratio:.6} off the 0.0355 anchor"
    );
    println!("criterion 9: pass - ofdm budget 14000, ratio {ratio:.4}");
}

// --- criterion 10: reruns are byte-identical ---------------------------------------

#[test]
fn criterion_10_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("exp.toml");
    std::fs::write(
        &config_path,
        r#"
        [experiment]
        scheme = "isc-analog"
        snrs_db = [5.0, 15.0]
        budgets = [200]
        seeds = [0, 1]

        [signal]
        kind = "blobs"
        size = [12, 12]

        [inr]
        hidden = [16]
        encoding = "none"
        steps = 80
        lr = 1e-3
        "#,
    )
    .unwrap();

    let bin = env!("CARGO_BIN_EXE_semcast");
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out_dir = dir.path().join(format!("out{run}"));
        let status = std::process::Command::new(bin)
            .args(["sweep", "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(&out_dir)
            .status()
            .unwrap();
        assert!(status.success());
        let mut files: Vec<_> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        let named: Vec<(String, Vec<u8>)> = files
            .iter()
            .map(|p| {
                (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap())
            })
            .collect();
        outputs.push(named);
    }
    assert!(outputs[0].iter().any(|(n, _)| n == "sweep.csv"));
    assert!(outputs[0].iter().any(|(n, _)| n.ends_with(".pgm")));
    assert_eq!(outputs[0].len(), outputs[1].len());
    for (a, b) in outputs[0].iter().zip(&outputs[1]) {
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1, "{} differs between reruns", a.0);
    }
    println!(
        "criterion 10: pass - {} output files byte-identical across reruns",
        outputs[0].len()
    );
}
