//! JSON artifacts for synthesized barrier pairs and estimator designs.
//!
//! Matrices are stored row-major as nested arrays. Every artifact carries
//! the SHA-256 of the plant it was computed for so that mismatched files
//! are rejected on load.

use std::path::Path;

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::EstimatorDesign;
use crate::linalg::{from_rows, to_rows};
use crate::model::{Controller, UncertainPlant};
use crate::synthesis::{BarrierPair, CertificateReport, TransformedVars};

/// Hex SHA-256 of the plant's canonical JSON encoding.
pub fn plant_hash(plant: &UncertainPlant) -> String {
    let canonical = serde_json::to_string(plant).expect("plant serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

type Rows = Vec<Vec<f64>>;

fn matrix(rows: &Rows, name: &str, shape: (usize, usize)) -> Result<DMatrix<f64>> {
    let m = from_rows(rows).ok_or_else(|| Error::ArtifactMismatch(format!("{name} is ragged")))?;
    if m.shape() != shape {
        return Err(Error::ArtifactMismatch(format!(
            "{name} has shape {:?}, expected {shape:?}",
            m.shape()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::ArtifactMismatch(format!(
            "{name} has non-finite entries"
        )));
    }
    Ok(m)
}

fn vector(v: &[f64], name: &str, n: usize) -> Result<DVector<f64>> {
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::ArtifactMismatch(format!(
            "{name} must have {n} finite entries"
        )));
    }
    Ok(DVector::from_column_slice(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub name: String,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierPairArtifact {
    pub plant_hash: String,
    pub n: usize,
    pub epsilon: f64,
    pub mu_w: f64,
    pub mu_p: Vec<f64>,
    pub log_det_y: f64,
    #[serde(rename = "X")]
    pub x: Rows,
    #[serde(rename = "Y")]
    pub y: Rows,
    #[serde(rename = "V")]
    pub v: Rows,
    #[serde(rename = "W")]
    pub w: Rows,
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "E")]
    pub e: Rows,
    #[serde(rename = "F")]
    pub f: Vec<f64>,
    #[serde(rename = "G")]
    pub g: Vec<f64>,
    #[serde(rename = "A_k")]
    pub a_k: Rows,
    pub b_k: Vec<f64>,
    pub c_k: Vec<f64>,
    #[serde(default)]
    pub certificates: Vec<CertificateEntry>,
}

impl BarrierPairArtifact {
    pub fn new(
        plant: &UncertainPlant,
        bp: &BarrierPair,
        report: Option<&CertificateReport>,
    ) -> Self {
        Self {
            plant_hash: plant_hash(plant),
            n: bp.n(),
            epsilon: bp.epsilon,
            mu_w: bp.mu_w,
            mu_p: bp.mu_p.clone(),
            log_det_y: bp.log_det_y,
            x: to_rows(&bp.x),
            y: to_rows(&bp.y),
            v: to_rows(&bp.v),
            w: to_rows(&bp.w),
            p: to_rows(&bp.p),
            e: to_rows(&bp.transformed.e),
            f: bp.transformed.f.iter().copied().collect(),
            g: bp.transformed.g.iter().copied().collect(),
            a_k: to_rows(&bp.controller.a_k),
            b_k: bp.controller.b_k.iter().copied().collect(),
            c_k: bp.controller.c_k.iter().copied().collect(),
            certificates: report
                .map(|r| {
                    r.checks
                        .iter()
                        .map(|c| CertificateEntry {
                            name: c.name.to_string(),
                            margin: c.margin,
                        })
                        .collect()
                })
                .unwrap_or_default(),
        }
    }

    /// Rebuilds the pair after checking it belongs to `plant`.
    pub fn to_pair(&self, plant: &UncertainPlant) -> Result<BarrierPair> {
        check_hash(&self.plant_hash, plant)?;
        let n = self.n;
        if n != plant.n || self.mu_p.len() != plant.n_p() {
            return Err(Error::ArtifactMismatch(
                "barrier pair dimensions do not match the plant".into(),
            ));
        }
        let x = matrix(&self.x, "X", (n, n))?;
        let y = matrix(&self.y, "Y", (n, n))?;
        let transformed = TransformedVars {
            x: x.clone(),
            y: y.clone(),
            e: matrix(&self.e, "E", (n, n))?,
            f: vector(&self.f, "F", n)?,
            g: RowDVector::from_row_slice(vector(&self.g, "G", n)?.as_slice()),
        };
        Ok(BarrierPair {
            x,
            y,
            v: matrix(&self.v, "V", (n, n))?,
            w: matrix(&self.w, "W", (n, n))?,
            p: matrix(&self.p, "P", (2 * n, 2 * n))?,
            controller: Controller {
                a_k: matrix(&self.a_k, "A_k", (n, n))?,
                b_k: vector(&self.b_k, "b_k", n)?,
                c_k: RowDVector::from_row_slice(vector(&self.c_k, "c_k", n)?.as_slice()),
            },
            epsilon: self.epsilon,
            mu_w: self.mu_w,
            mu_p: self.mu_p.clone(),
            log_det_y: self.log_det_y,
            transformed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorArtifact {
    pub plant_hash: String,
    pub b_z: Vec<f64>,
    pub r_e: f64,
    pub mu_e: f64,
    #[serde(rename = "A_z")]
    pub a_z: Rows,
}

impl EstimatorArtifact {
    pub fn new(plant: &UncertainPlant, d: &EstimatorDesign) -> Self {
        Self {
            plant_hash: plant_hash(plant),
            b_z: d.b_z.iter().copied().collect(),
            r_e: d.r_e,
            mu_e: d.mu_e,
            a_z: to_rows(&d.a_z),
        }
    }

    pub fn to_design(&self, plant: &UncertainPlant) -> Result<EstimatorDesign> {
        check_hash(&self.plant_hash, plant)?;
        let b_z = vector(&self.b_z, "b_z", plant.n)?;
        if !(self.r_e >= 0.0) {
            return Err(Error::ArtifactMismatch("r_e must be nonnegative".into()));
        }
        let d = EstimatorDesign::from_gain(b_z, self.r_e, self.mu_e);
        let stored = matrix(&self.a_z, "A_z", (plant.n, plant.n))?;
        if (&stored - &d.a_z).amax() > 1e-12 {
            return Err(Error::ArtifactMismatch(
                "A_z is inconsistent with b_z".into(),
            ));
        }
        Ok(d)
    }
}

fn check_hash(stored: &str, plant: &UncertainPlant) -> Result<()> {
    let expected = plant_hash(plant);
    if stored != expected {
        return Err(Error::ArtifactMismatch(format!(
            "artifact was computed for plant {stored}, config plant is {expected}"
        )));
    }
    Ok(())
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = UncertainPlant::mass_spring(1.0, 10.0, 1.0, 0.05).unwrap();
        let b = UncertainPlant::mass_spring(1.0, 10.0, 1.0, 0.06).unwrap();
        assert_eq!(plant_hash(&a), plant_hash(&a.clone()));
        assert_ne!(plant_hash(&a), plant_hash(&b));
        assert_eq!(plant_hash(&a).len(), 64);
    }

    #[test]
    fn estimator_round_trip_and_mismatch() {
        let a = UncertainPlant::mass_spring(1.0, 10.0, 1.0, 0.05).unwrap();
        let b = UncertainPlant::mass_spring(2.0, 10.0, 1.0, 0.05).unwrap();
        let d = EstimatorDesign::from_gain(DVector::from_vec(vec![2.0, 3.0]), 0.05, 1.0);
        let art = EstimatorArtifact::new(&a, &d);
        let json = serde_json::to_string(&art).unwrap();
        let back: EstimatorArtifact = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_design(&a).unwrap(), d);
        assert!(matches!(
            back.to_design(&b),
            Err(Error::ArtifactMismatch(_))
        ));
    }
}
