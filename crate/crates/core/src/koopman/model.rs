use std::path::Path;

use nalgebra::{SMatrix, Vector2};
use serde::{Deserialize, Serialize};

use super::{assign_bin, BinGeometry, GradientMatrix, InputMatrix, LiftedState, OutputMatrix, SystemMatrix};
use crate::error::{Error, Result};

/// One curvature bin's lifted model
/// `z+ = A z + B u + Bg g`, `x = C z`.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub a: SystemMatrix,
    pub b: InputMatrix,
    pub bg: GradientMatrix,
    pub c: OutputMatrix,
    pub bin_index: usize,
    pub kappa_range: (f64, f64),
}

pub fn predict(model: &KoopmanModel, z: &LiftedState, u: &Vector2<f64>, g: &Vector2<f64>) -> LiftedState {
    model.a * z + model.b * u + model.bg * g
}

/// Polar pose `C z`.
pub fn project(model: &KoopmanModel, z: &LiftedState) -> Vector2<f64> {
    model.c * z
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFamily {
    pub geometry: BinGeometry,
    pub models: Vec<KoopmanModel>,
}

impl ModelFamily {
    pub fn new(geometry: BinGeometry, models: Vec<KoopmanModel>) -> Result<Self> {
        geometry.validate()?;
        let family = Self { geometry, models };
        family.check_complete()?;
        Ok(family)
    }

    pub fn check_complete(&self) -> Result<()> {
        if self.models.len() != self.geometry.q {
            return Err(Error::Config(format!(
                "model family has {} models for {} bins",
                self.models.len(),
                self.geometry.q
            )));
        }
        for (i, m) in self.models.iter().enumerate() {
            if m.bin_index != i {
                return Err(Error::Config(format!("model {i} is tagged for bin {}", m.bin_index)));
            }
        }
        Ok(())
    }

    pub fn select(&self, kappa: f64) -> Result<&KoopmanModel> {
        select_model(self, kappa)
    }
}

/// Switching law: the model of the bin containing `kappa`, clamped at the ends.
pub fn select_model(family: &ModelFamily, kappa: f64) -> Result<&KoopmanModel> {
    family.check_complete()?;
    Ok(&family.models[assign_bin(kappa, &family.geometry)])
}

#[derive(Serialize, Deserialize)]
struct BinDoc {
    range: [f64; 2],
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "Bg")]
    bg: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct FamilyDoc {
    kappa_max: f64,
    q: usize,
    bins: Vec<BinDoc>,
}

fn rows_of<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> Vec<Vec<f64>> {
    (0..R).map(|i| (0..C).map(|j| m[(i, j)]).collect()).collect()
}

fn matrix_of<const R: usize, const C: usize>(rows: &[Vec<f64>], what: &str, bin: usize) -> Result<SMatrix<f64, R, C>> {
    if rows.len() != R || rows.iter().any(|r| r.len() != C) {
        return Err(Error::Dimension(format!("bin {bin}: {what} must be {R}x{C}")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Format(format!("bin {bin}: {what} has non-finite entries")));
    }
    Ok(SMatrix::from_fn(|i, j| rows[i][j]))
}

impl ModelFamily {
    pub fn to_json(&self) -> Result<String> {
        let doc = FamilyDoc {
            kappa_max: self.geometry.kappa_max,
            q: self.geometry.q,
            bins: self
                .models
                .iter()
                .map(|m| BinDoc {
                    range: [m.kappa_range.0, m.kappa_range.1],
                    a: rows_of(&m.a),
                    b: rows_of(&m.b),
                    bg: rows_of(&m.bg),
                    c: rows_of(&m.c),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FamilyDoc = serde_json::from_str(text)?;
        let geometry = BinGeometry { q: doc.q, kappa_max: doc.kappa_max };
        geometry.validate()?;
        if doc.bins.len() != doc.q {
            return Err(Error::Dimension(format!("model file lists {} bins, q = {}", doc.bins.len(), doc.q)));
        }
        let mut models = Vec::with_capacity(doc.q);
        for (i, b) in doc.bins.iter().enumerate() {
            let (lo, hi) = geometry.range(i);
            if (b.range[0] - lo).abs() > 1e-9 || (b.range[1] - hi).abs() > 1e-9 {
                return Err(Error::Format(format!("bin {i} range {:?} does not match geometry", b.range)));
            }
            models.push(KoopmanModel {
                a: matrix_of::<7, 7>(&b.a, "A", i)?,
                b: matrix_of::<7, 2>(&b.b, "B", i)?,
                bg: matrix_of::<7, 2>(&b.bg, "Bg", i)?,
                c: matrix_of::<2, 7>(&b.c, "C", i)?,
                bin_index: i,
                kappa_range: (b.range[0], b.range[1]),
            });
        }
        Self::new(geometry, models)
    }
}

pub fn write_family(family: &ModelFamily, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, family.to_json()? + "\n")?;
    Ok(())
}

pub fn read_family(path: impl AsRef<Path>) -> Result<ModelFamily> {
    ModelFamily::from_json(&std::fs::read_to_string(path)?)
}
