//! Model container: magic, version, a JSON header, then every matrix as a
//! plom-bin block in the order the header lists.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{FitConfig, GhPlomModel, Whitening};
use crate::data::io::{read_plom_bin, write_plom_bin};
use crate::data::{DataMatrix, ScalingRecord};
use crate::density::KdeModel;
use crate::dmaps::{DmapsModel, KernelDenominator};
use crate::error::{Error, Result, Stage, StageExt};
use crate::gh::GhInterpolant;
use crate::pca::PcaModel;

pub const MODEL_MAGIC: &[u8; 8] = b"GHPLOMMD";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Upper bound on the JSON header, against corrupt length fields.
const MAX_HEADER_BYTES: u64 = 64 << 20;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: FitConfig,
    labels: Option<Vec<String>>,
    scaling: ScalingRecord,
    embed_rows: Vec<usize>,
    other_rows: Vec<usize>,
    pca_total_variance: Option<f64>,
    dmaps_epsilon: f64,
    dmaps_residuals: Vec<f64>,
    dmaps_selected: Vec<usize>,
    gh_eps2: f64,
    gh_delta: f64,
    gh_denominator: KernelDenominator,
    blocks: Vec<String>,
}

fn row(v: &Array1<f64>) -> Array2<f64> {
    v.clone().insert_axis(ndarray::Axis(0))
}

fn unrow(m: Array2<f64>, what: &'static str) -> Result<Array1<f64>> {
    if m.nrows() != 1 {
        return Err(Error::parse(format!("block '{what}' must have one row")));
    }
    Ok(m.row(0).to_owned())
}

pub fn write_model<W: Write>(w: &mut W, model: &GhPlomModel) -> Result<()> {
    let mut blocks: Vec<(&str, Array2<f64>)> = vec![("training", model.training.values().clone())];
    if let Some(p) = &model.pca {
        blocks.push(("pca_mean", row(&p.mean)));
        blocks.push(("pca_eigenvalues", row(&p.eigenvalues)));
        blocks.push(("pca_eigenvectors", p.eigenvectors.clone()));
    }
    let d = &model.dmaps;
    blocks.extend([
        ("dmaps_b", row(&d.b)),
        ("dmaps_d", row(&d.d)),
        ("dmaps_eigenvalues", row(&d.eigenvalues)),
        ("dmaps_eigenvectors", d.eigenvectors.clone()),
        ("dmaps_coordinates", d.coordinates.clone()),
        ("whitening_mean", row(&model.whitening.mean)),
        ("whitening_factor", model.whitening.factor.clone()),
        ("kde_centers", model.kde.centers().clone()),
        ("gh_inputs", model.lift.inputs().clone()),
        ("gh_sigma", row(model.lift.sigma())),
        ("gh_psi", model.lift.psi().clone()),
        ("gh_coefficients", model.lift.coefficients().clone()),
    ]);
    let header = Header {
        config: model.config.clone(),
        labels: model.training.labels().map(|l| l.to_vec()),
        scaling: model.scaling.clone(),
        embed_rows: model.embed_rows.clone(),
        other_rows: model.other_rows.clone(),
        pca_total_variance: model.pca.as_ref().map(|p| p.total_variance),
        dmaps_epsilon: d.epsilon,
        dmaps_residuals: d.residuals.clone(),
        dmaps_selected: d.selected.clone(),
        gh_eps2: model.lift.eps2(),
        gh_delta: model.lift.delta(),
        gh_denominator: model.lift.denominator(),
        blocks: blocks.iter().map(|(n, _)| n.to_string()).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::parse(e.to_string()))?;
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, m) in &blocks {
        write_plom_bin(w, m)?;
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<GhPlomModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::parse("file too short for a model header"))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::parse("not a model file (bad magic bytes)"));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(|_| Error::parse("truncated model header"))?;
    let version = u32::from_le_bytes(word);
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| Error::parse("truncated model header"))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER_BYTES {
        return Err(Error::parse(format!("model header length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(|_| Error::parse("truncated model header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| Error::Parse {
        message: format!("model header: {e}"),
        line: Some(e.line()),
        column: Some(e.column()),
    })?;

    let mut blocks = std::collections::HashMap::new();
    for name in &header.blocks {
        let m = read_plom_bin(r).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(format!("block '{name}': {message}")),
            other => other,
        })?;
        blocks.insert(name.clone(), m);
    }
    let mut take = |name: &'static str| {
        blocks
            .remove(name)
            .ok_or_else(|| Error::parse(format!("model file lacks block '{name}'")))
    };

    let training = match header.labels {
        Some(l) => DataMatrix::with_labels(take("training")?, l)?,
        None => DataMatrix::new(take("training")?)?,
    };
    let pca = match header.pca_total_variance {
        Some(total_variance) => Some(PcaModel {
            mean: unrow(take("pca_mean")?, "pca_mean")?,
            eigenvalues: unrow(take("pca_eigenvalues")?, "pca_eigenvalues")?,
            eigenvectors: take("pca_eigenvectors")?,
            total_variance,
        }),
        None => None,
    };
    let dmaps = DmapsModel {
        config: header.config.dmaps.clone(),
        epsilon: header.dmaps_epsilon,
        b: unrow(take("dmaps_b")?, "dmaps_b")?,
        d: unrow(take("dmaps_d")?, "dmaps_d")?,
        eigenvalues: unrow(take("dmaps_eigenvalues")?, "dmaps_eigenvalues")?,
        eigenvectors: take("dmaps_eigenvectors")?,
        coordinates: take("dmaps_coordinates")?,
        residuals: header.dmaps_residuals,
        selected: header.dmaps_selected,
    };
    let whitening = Whitening {
        mean: unrow(take("whitening_mean")?, "whitening_mean")?,
        factor: take("whitening_factor")?,
    };
    let kde = KdeModel::new(take("kde_centers")?)?;
    let lift = GhInterpolant::from_parts(
        take("gh_inputs")?,
        header.gh_eps2,
        header.gh_delta,
        header.gh_denominator,
        unrow(take("gh_sigma")?, "gh_sigma")?,
        take("gh_psi")?,
        take("gh_coefficients")?,
    )?;
    if kde.dim() != dmaps.selected.len() || lift.input_dim() != kde.dim() {
        return Err(Error::parse("model blocks disagree on the latent dimension"));
    }
    Ok(GhPlomModel {
        config: header.config,
        training,
        scaling: header.scaling,
        embed_rows: header.embed_rows,
        other_rows: header.other_rows,
        pca,
        dmaps,
        whitening,
        kde,
        lift,
    })
}

pub fn save_model(model: &GhPlomModel, path: impl AsRef<Path>) -> Result<()> {
    let run = || {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        write_model(&mut w, model)?;
        w.flush()?;
        Ok(())
    };
    run().stage(Stage::Persistence)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GhPlomModel> {
    let run = || {
        let mut r = BufReader::new(File::open(path.as_ref())?);
        read_model(&mut r)
    };
    run().stage(Stage::Persistence)
}
