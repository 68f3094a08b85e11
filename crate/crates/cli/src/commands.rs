use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ghplom::data::{generate_hermite_dataset, load_matrix, save_matrix, HermiteDatasetSpec, HermiteFamily, MatrixFormat};
use ghplom::pipeline::{self, diagnose, load_model, save_model, MODEL_FORMAT_VERSION};
use ghplom::{DataMatrix, FitConfig};
use serde::{Deserialize, Serialize};

use crate::config::{self, RunConfig};
use crate::error::{CliError, CliResult};
use crate::{ConfigArgs, EmbedArgs, FitArgs, HermiteGenArgs, SampleArgs};

/// Eigenvalues listed in the fit summary.
const SPECTRUM_HEAD: usize = 10;

/// Sidecar written next to generated datasets; also the source of row
/// labels for plom-bin files, which carry none.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetSidecar {
    dataset: String,
    n_samples: usize,
    noise_std: f64,
    seed: u64,
    n_rows: usize,
    labels: Vec<String>,
}

#[derive(Debug, Serialize)]
struct FitSummary {
    format_version: u32,
    model: String,
    n_features: usize,
    n_samples: usize,
    embedded_rows: Vec<usize>,
    lifted_only_rows: Vec<usize>,
    pca_components: Option<usize>,
    epsilon: f64,
    eigenvalues: Vec<f64>,
    residuals: Vec<f64>,
    selected: Vec<usize>,
    latent_dim: usize,
    kde_s: f64,
    kde_s_hat: f64,
    gh_eps2: f64,
    gh_modes: usize,
}

#[derive(Debug, Serialize)]
struct SampleSummary {
    n_realizations: usize,
    seed: u64,
    files: Vec<String>,
    report: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Loads a matrix, taking labels from a dataset sidecar when the file has none.
fn load_data(path: &Path) -> CliResult<DataMatrix> {
    if !path.exists() {
        return Err(CliError::usage(format!("data file {} does not exist", path.display())));
    }
    let mut data = load_matrix(path, MatrixFormat::from_path(path))?;
    let side = sidecar_path(path);
    if data.labels().is_none() && side.exists() {
        let text = fs::read_to_string(&side)?;
        let meta: DatasetSidecar = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("sidecar {}: {e}", side.display())))?;
        data.set_labels(Some(meta.labels))?;
    }
    Ok(data)
}

fn fit_config(args: &ConfigArgs) -> CliResult<FitConfig> {
    let file = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = file.to_fit_config()?;
    if let Some(s) = args.select {
        cfg.dmaps.selection = s.0;
    }
    if let Some(v) = args.eps_multiplier {
        cfg.dmaps.eps_multiplier = v;
    }
    if let Some(v) = args.kappa {
        cfg.dmaps.kappa = v;
    }
    if let Some(v) = args.n_eigen {
        cfg.dmaps.n_eigen = v;
    }
    if let Some(v) = args.delta {
        cfg.gh.delta = v;
    }
    if let Some(v) = args.eps2_factor {
        cfg.gh.eps_factor = v;
    }
    if args.no_whiten {
        cfg.whiten = false;
    }
    if let Some(v) = args.f0 {
        cfg.sampler.f0 = v;
    }
    if let Some(v) = args.burn_in {
        cfg.sampler.burn_in = v;
    }
    if let Some(v) = args.stride {
        cfg.sampler.stride = v;
    }
    config::validate(&cfg)?;
    Ok(cfg)
}

pub fn hermite_gen(args: &HermiteGenArgs) -> CliResult<()> {
    let family: HermiteFamily = args.dataset.parse()?;
    if args.n == 0 {
        return Err(CliError::usage("--n must be positive"));
    }
    let spec = HermiteDatasetSpec::new(family, args.n, args.noise, args.seed);
    let data = generate_hermite_dataset(&spec)?;
    save_matrix(&data, &args.out, MatrixFormat::from_path(&args.out))?;
    let meta = DatasetSidecar {
        dataset: family.id().to_string(),
        n_samples: args.n,
        noise_std: args.noise,
        seed: args.seed,
        n_rows: data.n_features(),
        labels: data.labels().map(<[String]>::to_vec).unwrap_or_default(),
    };
    write_json(&sidecar_path(&args.out), &meta)
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let cfg = fit_config(&args.cfg)?;
    let data = load_data(&args.data)?;
    let model = pipeline::fit(&data, &cfg)?;
    save_model(&model, &args.out)?;
    let summary = FitSummary {
        format_version: MODEL_FORMAT_VERSION,
        model: args.out.display().to_string(),
        n_features: model.n_features(),
        n_samples: model.n_samples(),
        embedded_rows: model.embed_rows.clone(),
        lifted_only_rows: model.other_rows.clone(),
        pca_components: model.pca.as_ref().map(|p| p.n_components()),
        epsilon: model.dmaps.epsilon,
        eigenvalues: model.dmaps.eigenvalues.iter().take(SPECTRUM_HEAD).copied().collect(),
        residuals: model.dmaps.residuals.clone(),
        selected: model.dmaps.selected.clone(),
        latent_dim: model.latent_dim(),
        kde_s: model.kde.s(),
        kde_s_hat: model.kde.s_hat(),
        gh_eps2: model.lift.eps2(),
        gh_modes: model.lift.n_modes(),
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

pub fn sample(args: &SampleArgs) -> CliResult<()> {
    if args.n_mc == 0 {
        return Err(CliError::usage("--n-mc must be at least 1"));
    }
    let format: MatrixFormat = args.format.parse()?;
    let ext = match format {
        MatrixFormat::Csv => "csv",
        MatrixFormat::PlomBin => "plom",
    };
    if !args.model.exists() {
        return Err(CliError::usage(format!("model file {} does not exist", args.model.display())));
    }
    let model = load_model(&args.model)?;
    let samples = pipeline::generate(&model, args.n_mc, args.seed)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut files = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let path = args.out_dir.join(format!("realization_{i:04}.{ext}"));
        save_matrix(s, &path, format)?;
        files.push(path.display().to_string());
    }
    let report = diagnose(&model, &samples)?;
    let report_path = args.out_dir.join("diagnostics.json");
    write_json(&report_path, &report)?;
    let summary = SampleSummary {
        n_realizations: samples.len(),
        seed: args.seed,
        files,
        report: report_path.display().to_string(),
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

/// Data and configuration for the embedding commands; small inputs never
/// ask for more eigenpairs than samples.
fn embed_inputs(args: &EmbedArgs) -> CliResult<(DataMatrix, FitConfig)> {
    let mut cfg = fit_config(&args.cfg)?;
    let data = load_data(&args.data)?;
    cfg.dmaps.n_eigen = cfg.dmaps.n_eigen.min(data.n_samples());
    Ok((data, cfg))
}

pub fn spectrum(args: &EmbedArgs) -> CliResult<()> {
    let (data, cfg) = embed_inputs(args)?;
    let eigenvalues = pipeline::spectrum(&data, &cfg)?;
    let mut out = String::from("index,eigenvalue\n");
    for (k, l) in eigenvalues.iter().enumerate() {
        out.push_str(&format!("{k},{l:e}\n"));
    }
    fs::write(&args.out, out)?;
    Ok(())
}

pub fn residuals(args: &EmbedArgs) -> CliResult<()> {
    let (data, cfg) = embed_inputs(args)?;
    let dmaps = pipeline::embedding(&data, &cfg)?;
    let mut out = String::from("index,residual,selected\n");
    for (k, r) in dmaps.residuals.iter().enumerate().skip(1) {
        out.push_str(&format!("{k},{r:e},{}\n", dmaps.selected.contains(&k)));
    }
    fs::write(&args.out, out)?;
    Ok(())
}
