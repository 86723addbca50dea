mod args;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{CommandFactory, Parser};
use ndarray::{ArrayD, IxDyn};
use serde::Serialize;
use serde_json::{json, Value};

use args::{Cli, Command, CvArgs, FitArgs, PermArgs, SimulateArgs, UsageError};
use waveir::estimators::{fit, Dataset, Transform};
use waveir::inference::{confounder_diagnostics, perm_test, PermutationScheme};
use waveir::io::{persist_fit, read_bundle, save_array, write_bundle, write_confounder_csv, write_perm_csv, Bundle};
use waveir::modelsel::{tune, CvConfig, GridSpec};
use waveir::simulate::{simulate, SimulationSpec};

#[derive(Serialize)]
struct Artifact<'a, S: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    settings: &'a S,
    result: &'a R,
}

fn write_json<S: Serialize, R: Serialize>(path: &Path, command: &str, settings: &S, result: &R) -> Result<()> {
    let a = Artifact {
        tool: "waveir",
        version: env!("CARGO_PKG_VERSION"),
        command,
        settings,
        result,
    };
    fs::write(path, serde_json::to_string_pretty(&a)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load(bundle: &Path) -> Result<Bundle> {
    let b = read_bundle(bundle).with_context(|| format!("reading bundle {}", bundle.display()))?;
    for w in &b.warnings {
        eprintln!("warning: {w}");
    }
    Ok(b)
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let family = a.family.into();
    let base_rate = match (family, a.base_rate) {
        (waveir::glm::Family::GaussianIdentity, Some(_)) => {
            return Err(UsageError("--base-rate applies only to --family binomial".into()).into())
        }
        (_, r) => r.unwrap_or(0.5),
    };
    let spec = SimulationSpec::new(a.design.into(), a.n, a.grid, family, a.r2, base_rate, a.seed);
    let sim = simulate(&spec)?;
    out_dir(&a.out)?;
    let beta = ArrayD::from_shape_vec(IxDyn(&spec.shape()), sim.truth.beta.clone())?;
    save_array(&a.out.join("beta_true.arr"), &beta)?;
    let mut truth = serde_json::to_value(&sim.truth)?;
    if let Value::Object(m) = &mut truth {
        m.remove("beta");
        m.insert("beta_file".into(), json!("beta_true.arr"));
    }
    write_bundle(&a.out, &sim.dataset, &[], Some(truth))?;
    println!(
        "wrote {} subjects on a {}x{} grid to {}",
        spec.n,
        spec.grid,
        spec.grid,
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FitSettings<'a> {
    bundle: &'a Path,
    config: waveir::estimators::EstimatorConfig,
    family: waveir::glm::Family,
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let mut config = a.model.config()?;
    let b = load(&a.bundle)?;
    config.transform = a.model.transform_for(b.dataset.images.shape())?;
    let f = fit(&b.dataset, &config)?;
    out_dir(&a.out)?;
    let settings = FitSettings {
        bundle: &a.bundle,
        config,
        family: b.dataset.family,
    };
    let run = json!({ "tool": "waveir", "version": env!("CARGO_PKG_VERSION"), "command": "fit", "settings": settings });
    persist_fit(&a.out.join("fit.json"), &f, Some(run))?;
    save_array(&a.out.join("beta.arr"), &f.beta_image)?;
    println!(
        "{} fit: {} nonzero coefficients, converged = {}",
        config.method.name(),
        f.support().len(),
        f.converged
    );
    println!("delta = {:?}", f.delta.to_vec());
    Ok(())
}

#[derive(Serialize)]
struct CvSettings<'a> {
    bundle: &'a Path,
    family: waveir::glm::Family,
    transform: Transform,
    grid: &'a GridSpec,
    cv: CvConfig,
}

fn run_cv(a: &CvArgs) -> Result<()> {
    let grid = a.model.grid()?;
    a.model.transform()?;
    let b = load(&a.bundle)?;
    let transform = a.model.transform_for(b.dataset.images.shape())?;
    let cv = a.cv.config(b.dataset.family);
    let r = tune(&b.dataset, &grid, &transform, &cv)?;
    out_dir(&a.out)?;
    let settings = CvSettings {
        bundle: &a.bundle,
        family: b.dataset.family,
        transform,
        grid: &grid,
        cv,
    };
    write_json(&a.out.join("cv.json"), "cv", &settings, &r)?;
    let csv = fs::File::create(a.out.join("cv.csv"))?;
    r.write_csv(csv)?;
    println!("best {:?}: CV score {:.6} ({} configurations)", r.best_config().method, r.best_score(), r.grid.len());
    Ok(())
}

fn run_permtest(a: &PermArgs) -> Result<()> {
    let grid = a.model.grid()?;
    a.model.transform()?;
    let b = load(&a.bundle)?;
    let transform = a.model.transform_for(b.dataset.images.shape())?;
    let cv = a.cv.config(b.dataset.family);
    let mut scheme = PermutationScheme::new(a.scheme.into(), a.permutations, a.cv.seed);
    scheme.allow_covariates = a.allow_covariates;
    let r = perm_test(&b.dataset, &grid, &transform, &cv, &scheme)?;
    out_dir(&a.out)?;
    let settings = json!({
        "bundle": a.bundle,
        "family": b.dataset.family,
        "transform": transform,
        "grid": grid,
        "cv": cv,
        "scheme": scheme,
    });
    write_json(&a.out.join("permtest.json"), "permtest", &settings, &r)?;
    write_perm_csv(&a.out.join("permtest.csv"), &r)?;
    let summary = r.summary();
    fs::write(a.out.join("permtest.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn run_diagnose(a: &CvArgs) -> Result<()> {
    let grid = a.model.grid()?;
    a.model.transform()?;
    let b = load(&a.bundle)?;
    let transform = a.model.transform_for(b.dataset.images.shape())?;
    let d = &b.dataset;
    let cv = a.cv.config(d.family);
    let images_only = Dataset::new(d.y.clone(), ndarray::Array2::ones((d.n(), 1)), d.images.clone(), d.family)?;
    let tuned = tune(&images_only, &grid, &transform, &cv)?;
    let f = fit(&images_only, tuned.best_config())?;
    let report = confounder_diagnostics(d, &f, Some(&b.covariate_names))?;
    out_dir(&a.out)?;
    let settings = json!({
        "bundle": a.bundle,
        "family": d.family,
        "transform": transform,
        "grid": grid,
        "cv": cv,
        "images_only_config": tuned.best_config(),
        "images_only_cv_score": tuned.best_score(),
    });
    write_json(&a.out.join("diagnose.json"), "diagnose", &settings, &report)?;
    write_confounder_csv(&a.out.join("diagnose.csv"), &report)?;
    let table = report.table();
    fs::write(a.out.join("diagnose.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Fit(a) => run_fit(a),
        Command::Cv(a) => run_cv(a),
        Command::Permtest(a) => run_permtest(a),
        Command::Diagnose(a) => run_diagnose(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<UsageError>() {
            Some(u) => Cli::command().error(clap::error::ErrorKind::ArgumentConflict, &u.0).exit(),
            None => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}
