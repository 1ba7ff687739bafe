use std::str::FromStr;

use wconv_core::density::{phi_from_alpha, DensityFamily, DensityVector};
use wconv_core::experiments::report::{
    bench_csv, compare_csv, csv_bytes, evaluations_csv, outer_csv, outer_text, sweep_csv, sweep_text, symmetry_csv,
    trace_csv,
};
use wconv_core::experiments::{
    bench_overhead, check_symmetry_relaxation, compare_densities, density_search_config, gen_dataset, optimize_density,
    sweep_hyperparams, train_heldout_split, BenchConfig, DensityChoice, ExperimentConfig, SweepAxis, CENTER_VALUE,
};
use wconv_core::net::{report_header, sgd_train, Dataset};
use wconv_core::spectral::run_suite;
use wconv_core::tensor::{encode, read_tensor, Tensor};
use wconv_core::Error;

use crate::args::{BenchArgs, Cli, CompareArgs, DataArgs, GenDataArgs, OptimizeArgs, SweepArgs, TrainArgs};
use crate::output::OutDir;

/// Usage failures exit with 2, domain failures with 1.
#[derive(Debug)]
pub enum Failure {
    Usage(Error),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T> UsageExt<T> for wconv_core::Result<T> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(Failure::Usage)
    }
}

type Outcome = Result<(), Failure>;

pub fn base_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).usage()?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.model.seed = seed;
        cfg.dataset.seed = seed;
    }
    Ok(cfg)
}

fn load_data(cfg: &ExperimentConfig, args: &DataArgs) -> Result<Dataset, Failure> {
    match &args.data {
        Some(dir) => {
            let noisy = read_tensor(dir.join("noisy.wct"))?;
            let clean = read_tensor(dir.join("clean.wct"))?;
            Ok(Dataset::new(noisy, clean).usage()?)
        }
        None => {
            cfg.dataset.validate().usage()?;
            Ok(gen_dataset(&cfg.dataset)?)
        }
    }
}

fn full_alpha(values: &[f64]) -> wconv_core::Result<DensityVector> {
    if values.len() % 2 == 0 {
        return Err(Error::Parameter(format!("alpha needs an odd number of entries, got {}", values.len())));
    }
    DensityVector::new(values.to_vec(), values[values.len() / 2])
}

pub fn gen_data(cfg: &mut ExperimentConfig, args: &GenDataArgs, out: &OutDir) -> Outcome {
    args.data.apply(cfg);
    cfg.dataset.validate().usage()?;
    let data = gen_dataset(&cfg.dataset)?;
    out.write("noisy.wct", &encode(&data.noisy)?)?;
    out.write("clean.wct", &encode(&data.clean)?)?;
    let d = &cfg.dataset;
    println!(
        "{} image pairs of {}x{} (noise sigma {}, seed {}) written to noisy.wct / clean.wct",
        d.n_images, d.rows, d.cols, d.noise_sigma, d.seed
    );
    Ok(())
}

pub fn train(cfg: &mut ExperimentConfig, args: &TrainArgs, out: &OutDir) -> Outcome {
    if let Some(k) = args.kernel {
        cfg.model.kernel = k;
    }
    args.model.apply(cfg);
    args.data.apply(cfg);
    let mut model = cfg.model.to_config().usage()?;
    let alpha = match (&args.alpha, &args.density) {
        (Some(values), _) => Some(full_alpha(values).usage()?),
        (None, Some(name)) => {
            let family = DensityFamily::from_str(name).usage()?;
            Some(wconv_core::density::named_density(family, model.kernel).usage()?)
        }
        (None, None) => None,
    };
    if let Some(alpha) = alpha {
        model = model.with_density(phi_from_alpha(&alpha));
        model.validate().usage()?;
    }
    let data = load_data(cfg, &args.data)?;
    let outcome = sgd_train(&data, &model)?;
    let r = &outcome.report;
    out.write("train.csv", &csv_bytes(&report_header(model.kernel), &[r.csv_row(&model)])?)?;
    let losses: Vec<Vec<String>> = r
        .epoch_losses
        .iter()
        .enumerate()
        .map(|(i, l)| vec![(i + 1).to_string(), l.to_string()])
        .collect();
    out.write("losses.csv", &csv_bytes(&["epoch".into(), "loss".into()], &losses)?)?;
    let flat = outcome.params.to_vec();
    out.write("params.wct", &encode(&Tensor::new(vec![flat.len()], flat)?)?)?;
    println!(
        "trained {} parameters for {} epochs: loss {:.6} -> {:.6}",
        r.parameter_count, model.epochs, r.initial_loss, r.final_loss
    );
    Ok(())
}

pub fn optimize(cfg: &mut ExperimentConfig, args: &OptimizeArgs, out: &OutDir) -> Outcome {
    cfg.model.kernel = args.kernel;
    args.model.apply(cfg);
    args.data.apply(cfg);
    args.direct.apply(cfg);
    let model = cfg.model.to_config().usage()?;
    let data = load_data(cfg, &args.data)?;
    if args.relax_symmetry {
        if args.kernel != 3 {
            return Err(Failure::Usage(Error::Parameter("--relax-symmetry needs --kernel 3".into())));
        }
        cfg.direct.for_density(3, 2, CENTER_VALUE).validate().usage()?;
        let r = check_symmetry_relaxation(&model, &cfg.direct, &data)?;
        let text = format!(
            "alpha free:  alpha_1 = {:.4}, alpha_3 = {:.4}, |alpha_1 - alpha_3| = {:.4}, objective {:.6}\n\
             beta free:   alpha_1 = {:.4}, beta_1 = {:.4}, |alpha_1 - beta_1| = {:.4}, objective {:.6}\n",
            r.alpha1_free,
            r.alpha3,
            r.alpha_gap(),
            r.objective_free,
            r.alpha1_mixed,
            r.beta1,
            r.beta_gap(),
            r.objective_mixed
        );
        out.write("symmetry.csv", &symmetry_csv(&r)?)?;
        out.write("symmetry.txt", text.as_bytes())?;
        print!("{text}");
        return Ok(());
    }
    let direct = density_search_config(args.kernel, &cfg.direct);
    direct.validate().usage()?;
    let r = optimize_density(args.kernel, &model, &direct, &data)?;
    out.write("optimize.csv", &outer_csv(&r)?)?;
    out.write("optimize.txt", outer_text(&r).as_bytes())?;
    out.write("trace.csv", &trace_csv(&r.trace)?)?;
    out.write("evaluations.csv", &evaluations_csv(&r.evaluations)?)?;
    print!("{}", outer_text(&r));
    Ok(())
}

pub fn sweep(cfg: &mut ExperimentConfig, args: &SweepArgs, out: &OutDir) -> Outcome {
    let axis = SweepAxis::from_str(&args.axis).usage()?;
    if args.data.data.is_some() {
        return Err(Failure::Usage(Error::Parameter("sweep generates its own data; --data is not supported".into())));
    }
    if let Some(k) = args.kernel {
        cfg.model.kernel = k;
    }
    args.model.apply(cfg);
    args.data.apply(cfg);
    args.direct.apply(cfg);
    for &v in &args.values {
        let c = axis.apply(cfg, v);
        c.model.to_config().usage()?;
        c.dataset.validate().usage()?;
    }
    density_search_config(cfg.model.kernel, &cfg.direct).validate().usage()?;
    let rows = sweep_hyperparams(axis, &args.values, cfg)?;
    out.write("sweep.csv", &sweep_csv(&rows, cfg.model.kernel)?)?;
    let text = sweep_text(axis, &rows);
    out.write("sweep.txt", text.as_bytes())?;
    print!("{text}");
    Ok(())
}

pub fn compare(cfg: &mut ExperimentConfig, args: &CompareArgs, out: &OutDir) -> Outcome {
    if let Some(k) = args.kernel {
        cfg.model.kernel = k;
    }
    args.model.apply(cfg);
    args.data.apply(cfg);
    args.direct.apply(cfg);
    let model = cfg.model.to_config().usage()?;
    let k = model.kernel;
    let given = match &args.optimal_alpha {
        Some(v) => Some(full_alpha(v).usage()?),
        None => None,
    };
    let mut wanted = Vec::new();
    for name in &args.families {
        if name == "optimal" {
            wanted.push(None);
        } else {
            wanted.push(Some(DensityFamily::from_str(name).usage()?));
        }
    }
    let data = load_data(cfg, &args.data)?;
    let (train, heldout) = train_heldout_split(&data);
    let mut choices = Vec::with_capacity(wanted.len());
    for w in wanted {
        match w {
            Some(f) => choices.push(DensityChoice::Family(f)),
            None => {
                let alpha = match &given {
                    Some(a) => a.clone(),
                    None => {
                        let direct = density_search_config(k, &cfg.direct);
                        direct.validate().usage()?;
                        let r = optimize_density(k, &model, &direct, &train)?;
                        out.write("optimize.csv", &outer_csv(&r)?)?;
                        r.alpha
                    }
                };
                choices.push(DensityChoice::Given { label: "optimal".into(), alpha });
            }
        }
    }
    let rows = compare_densities(&choices, &model, &train, &heldout)?;
    out.write("compare.csv", &compare_csv(&rows)?)?;
    for r in &rows {
        println!("{:<10} final loss {:.6}  held-out mse {:.6}", r.family, r.final_loss, r.heldout_mse);
    }
    Ok(())
}

pub fn bench(args: &BenchArgs, out: &OutDir, seed: u64) -> Outcome {
    let image: [usize; 4] = args
        .image
        .as_slice()
        .try_into()
        .map_err(|_| Failure::Usage(Error::Parameter("--image takes batch,channels,rows,cols".into())))?;
    if args.kernels.iter().any(|k| k % 2 == 0) || image.contains(&0) || args.out_channels.contains(&0) {
        return Err(Failure::Usage(Error::Parameter("kernels must be odd and extents positive".into())));
    }
    if args.repeats < 10 {
        return Err(Failure::Usage(Error::Parameter(format!("--repeats must be >= 10, got {}", args.repeats))));
    }
    let cfg = BenchConfig {
        kernels: args.kernels.clone(),
        out_channels: args.out_channels.clone(),
        image,
        repeats: args.repeats,
        ..BenchConfig::default()
    };
    let rows = bench_overhead(&cfg, seed)?;
    out.write("bench.csv", &bench_csv(&rows)?)?;
    for r in &rows {
        println!(
            "K={} F={}: standard {:.3} ms, weighted {:.3} ms (x{:.3}), premultiplied {:.3} ms (x{:.3})",
            r.k, r.out_channels, r.standard_ms, r.weighted_ms, r.ratio, r.premultiplied_ms, r.premultiplied_ratio
        );
    }
    Ok(())
}

pub fn verify(out: &OutDir, seed: u64) -> Outcome {
    let reports = run_suite(seed)?;
    let mut text = String::new();
    for r in &reports {
        text.push_str(&format!("{r}\n"));
    }
    out.write("verify.txt", text.as_bytes())?;
    print!("{text}");
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure::Domain(Error::Invariant(format!("{failed} properties failed"))));
    }
    Ok(())
}
