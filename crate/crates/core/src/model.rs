//! A fitted availability model: posterior, feature subset and scaling, with
//! its text file format and the prediction of whole future periods.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bayes::{fit_batched, FitOptions, GaussianPosterior, GaussianPrior};
use crate::error::{Error, Result};
use crate::features::{DesignMatrix, Feature, FeatureVector, ObservationCounts, Standardization, N_FEATURES};
use crate::prediction::PredictionMatrix;
use crate::trace::{AvailabilityMatrix, SlotRange};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub features: Vec<Feature>,
    /// Statistics for `features`, in the same order; `None` for raw fits.
    pub standardization: Option<Standardization>,
    pub posterior: GaussianPosterior,
}

impl TrainedModel {
    /// Fits on `design` split into `batches` consecutive row blocks, each
    /// posterior becoming the next prior.
    pub fn fit(design: &DesignMatrix, batches: usize, opts: &FitOptions) -> Result<Self> {
        if design.is_empty() {
            return Err(Error::EmptyRange("design matrix"));
        }
        let batches = batches.clamp(1, design.n_rows());
        let n = design.n_rows();
        let parts: Vec<DesignMatrix> = (0..batches)
            .map(|b| design.slice_rows(b * n / batches, (b + 1) * n / batches))
            .collect();
        let prior = GaussianPrior::default_for(design.dim());
        let posterior = fit_batched(parts.iter(), &prior, opts)?;
        Ok(TrainedModel {
            features: design.features().to_vec(),
            standardization: design.standardization().cloned(),
            posterior,
        })
    }

    /// Model covariates (no intercept) for a full feature vector.
    pub fn covariates(&self, fv: &FeatureVector) -> Vec<f64> {
        self.features
            .iter()
            .enumerate()
            .map(|(c, &f)| {
                let x = fv.get(f);
                match &self.standardization {
                    Some(s) => s.apply(c, x),
                    None => x,
                }
            })
            .collect()
    }

    pub fn predict_features(&self, fv: &FeatureVector) -> Result<f64> {
        self.posterior.predict(&self.covariates(fv))
    }

    /// Predictions for every `(user, slot in target)` from observations in
    /// `obs_range` only.
    pub fn predict_period<S: AsRef<str> + Sync>(
        &self,
        obs: &AvailabilityMatrix,
        obs_range: SlotRange,
        target: SlotRange,
        users: &[S],
    ) -> Result<PredictionMatrix> {
        if target.is_empty() {
            return Err(Error::EmptyRange("prediction range"));
        }
        let counts = ObservationCounts::from_matrix(obs, obs_range)?;
        let idx: Vec<usize> = users
            .iter()
            .map(|u| obs.require_user(u.as_ref()))
            .collect::<Result<_>>()?;
        let rows: Vec<Vec<f64>> = idx
            .par_iter()
            .map(|&u| {
                target
                    .iter()
                    .map(|t| self.predict_features(&counts.features(u, t)))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let ids = users.iter().map(|u| u.as_ref().to_string()).collect();
        PredictionMatrix::new(ids, target, rows.concat())
    }

    /// Text format, one `key=value` per line; reals written with 17
    /// significant digits so files round-trip exactly.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let p = &self.posterior;
        let list = |xs: &mut dyn Iterator<Item = f64>| xs.map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
        if self.features != Feature::ALL {
            let keys: Vec<&str> = self.features.iter().map(|f| f.key()).collect();
            writeln!(w, "features={}", keys.join(","))?;
        }
        writeln!(w, "m={}", list(&mut p.mean.iter().copied()))?;
        let n = p.n_params();
        writeln!(w, "S={}", list(&mut (0..n * n).map(|k| p.cov[(k / n, k % n)])))?;
        writeln!(w, "standardize={}", self.standardization.is_some() as u8)?;
        if let Some(s) = &self.standardization {
            writeln!(w, "means={}", list(&mut s.means.iter().copied()))?;
            writeln!(w, "sds={}", list(&mut s.sds.iter().copied()))?;
        }
        writeln!(w, "converged={}", p.converged as u8)?;
        writeln!(w, "iterations={}", p.iterations)?;
        writeln!(w, "grad_norm={:.16e}", p.final_grad_norm)
    }

    pub fn read_from<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut features = Feature::ALL.to_vec();
        let (mut mean, mut cov, mut means, mut sds) = (None, None, None, None);
        let mut standardize = None;
        let mut converged = true;
        let mut iterations = 0;
        let mut grad_norm = 0.0;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(source_name, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::parse(source_name, lineno, msg);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let reals = || -> Result<Vec<f64>> {
                value
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| err(format!("bad real `{v}`"))))
                    .collect()
            };
            match key {
                "features" => {
                    features = value
                        .split(',')
                        .map(|k| Feature::parse(k.trim()).ok_or_else(|| err(format!("unknown feature `{k}`"))))
                        .collect::<Result<_>>()?
                }
                "m" => mean = Some(reals()?),
                "S" => cov = Some(reals()?),
                "means" => means = Some(reals()?),
                "sds" => sds = Some(reals()?),
                "standardize" => {
                    standardize = Some(match value {
                        "0" => false,
                        "1" => true,
                        _ => return Err(err(format!("standardize must be 0 or 1, got `{value}`"))),
                    })
                }
                "converged" => converged = value == "1",
                "iterations" => iterations = value.parse().map_err(|_| err(format!("bad count `{value}`")))?,
                "grad_norm" => grad_norm = value.parse().map_err(|_| err(format!("bad real `{value}`")))?,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        let missing = |k: &str| Error::parse(source_name, 0, format!("missing `{k}`"));
        let mean = mean.ok_or_else(|| missing("m"))?;
        let cov = cov.ok_or_else(|| missing("S"))?;
        let p = features.len() + 1;
        if mean.len() != p || cov.len() != p * p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: mean.len(),
            });
        }
        let standardization = match standardize.ok_or_else(|| missing("standardize"))? {
            false => None,
            true => {
                let s = Standardization {
                    means: means.ok_or_else(|| missing("means"))?,
                    sds: sds.ok_or_else(|| missing("sds"))?,
                };
                if s.means.len() != features.len() || s.sds.len() != features.len() {
                    return Err(Error::DimensionMismatch {
                        expected: features.len(),
                        actual: s.means.len(),
                    });
                }
                Some(s)
            }
        };
        debug_assert!(features.len() <= N_FEATURES);
        Ok(TrainedModel {
            features,
            standardization,
            posterior: GaussianPosterior {
                mean: DVector::from_vec(mean),
                cov: DMatrix::from_row_slice(p, p, &cov),
                converged,
                iterations,
                final_grad_norm: grad_norm,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file), &path.display().to_string())
    }
}
