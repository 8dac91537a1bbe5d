mod args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use expo_core::harness::{
    self, demo_toy, frontier_csv, stability_image_experiment, sweep, DemoConfig, SweepAxis, TrainConfig,
};
use expo_core::metrics::comparison_csv;
use expo_core::neighborhood::NeighborhoodSpec;
use expo_core::{Error, ErrorClass, MlpModel, Result};
use serde::Serialize;

use args::{Axis, Cli, Command, DemoArgs, TrainArgs};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_atomic(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn out_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

fn load_model(path: &Path) -> Result<MlpModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn check_model(model: &MlpModel, cfg: &TrainConfig) -> Result<(expo_core::Dataset, expo_core::Dataset)> {
    let (train, test) = cfg.data.prepare()?;
    let sizes = model.layer_sizes();
    if sizes[0] != test.dim() || sizes[sizes.len() - 1] != test.output_dim() {
        return Err(Error::BadShape(format!(
            "model maps {} -> {} but the data has {} features and {} outputs",
            sizes[0],
            sizes[sizes.len() - 1],
            test.dim(),
            test.output_dim()
        )));
    }
    Ok((train, test))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => train(&a),
        Command::Evaluate { model, train } => evaluate(&model, &train),
        Command::Sweep { axis, values, train } => run_sweep(axis, &values, &train),
        Command::DemoToy(a) => demo(&a),
        Command::StabilityImage { examples, train } => image(examples, &train),
        Command::Bound {
            model,
            delta,
            mc_samples,
            bound_points,
            train,
        } => bound(&model, delta, mc_samples, bound_points, &train),
        Command::Summary(a) => {
            let cfg = a.resolve()?;
            let ds = cfg.data.load()?;
            println!("{}", serde_json::to_string_pretty(&ds.summary())?);
            Ok(())
        }
    }
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = a.resolve()?;
    let dir = out_dir(&a.out)?;
    let exp = harness::run_experiment(&cfg)?;
    write_json(&dir.join("model.json"), &exp.model)?;
    write_json(&dir.join("report.json"), &exp.report)?;
    write_atomic(&dir.join("metrics.csv"), &exp.report.metrics.to_csv())?;
    let perf = &exp.report.metrics.performance;
    eprintln!(
        "run {}: test {} {:.6}, wrote {}",
        exp.report.run_id,
        perf.metric,
        perf.value,
        dir.display()
    );
    Ok(())
}

fn evaluate(model_path: &Path, a: &TrainArgs) -> Result<()> {
    let cfg = a.resolve()?;
    let model = load_model(model_path)?;
    let (_, test) = check_model(&model, &cfg)?;
    let dir = out_dir(&a.out)?;
    let label = if cfg.regularizer.is_inactive() {
        "none"
    } else {
        cfg.regularizer.kind.label()
    };
    let metrics = harness::evaluate(&model, &test, &cfg.eval, label)?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    write_atomic(&dir.join("metrics.csv"), &metrics.to_csv())?;
    Ok(())
}

fn run_sweep(axis: Axis, values: &[f64], a: &TrainArgs) -> Result<()> {
    let cfg = a.resolve()?;
    let axis = match axis {
        Axis::Gamma => SweepAxis::Gamma,
        Axis::SigmaReg => SweepAxis::SigmaReg,
        Axis::SigmaEval => SweepAxis::SigmaEval,
    };
    let dir = out_dir(&a.out)?;
    let points = sweep(&cfg, axis, values)?;
    write_json(&dir.join("sweep.json"), &points)?;
    write_atomic(&dir.join("frontier.csv"), &frontier_csv(&points))?;
    let failed = points.iter().filter(|p| p.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} sweep values failed; see frontier.csv", points.len());
    }
    Ok(())
}

fn demo(a: &DemoArgs) -> Result<()> {
    let mut cfg = DemoConfig::new(a.function.into());
    cfg.anchor = a.anchor;
    cfg.second_anchor = a.second_anchor;
    cfg.neighborhood = NeighborhoodSpec::uniform(a.radius, a.samples, a.seed);
    cfg.grid = a.grid;
    cfg.seed = a.seed;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    let dir = out_dir(&a.out)?;
    let (_, report) = demo_toy(&cfg)?;
    write_atomic(&dir.join("demo.csv"), &report.to_csv())?;
    write_json(&dir.join("demo.json"), &report)?;
    Ok(())
}

fn image(examples: usize, a: &TrainArgs) -> Result<()> {
    let mut a = a.clone();
    if a.config.is_none() && a.data.is_none() {
        a.preset = args::Preset::Image;
    }
    let cfg = a.resolve()?;
    let dir = out_dir(&a.out)?;
    let report = stability_image_experiment(&cfg, examples)?;
    write_json(&dir.join("report.json"), &report)?;
    let table = comparison_csv(&[report.baseline.metrics.clone(), report.regularized.metrics.clone()]);
    write_atomic(&dir.join("metrics.csv"), &table)?;
    eprintln!(
        "accuracy {:.4} -> {:.4}, saliency stability ratio {:.4}",
        report.baseline.metrics.performance.value,
        report.regularized.metrics.performance.value,
        report.stability_ratio().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn bound(model_path: &Path, delta: f64, mc: usize, max_points: Option<usize>, a: &TrainArgs) -> Result<()> {
    let mut cfg = a.resolve()?;
    let model = load_model(model_path)?;
    let (train, _) = check_model(&model, &cfg)?;
    cfg.eval.bound = Some(harness::BoundConfig {
        delta,
        mc_samples: mc,
        max_points,
    });
    let dir = out_dir(&a.out)?;
    let reports = harness::bounds(&model, &train, &cfg.eval)?;
    write_json(&dir.join("bound.json"), &reports)?;
    for r in &reports {
        println!(
            "output {}: mean residual {:.6}, C {:.6}, n {}, bound {:.6} (delta {})",
            r.output_index, r.mean_train_residual, r.variance_bound_c, r.n, r.bound_value, r.delta
        );
    }
    Ok(())
}
