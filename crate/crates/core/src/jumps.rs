use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite jump measure `nu = sum_j lambda_j delta_{e_j}` on the nonzero reals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JumpMeasure {
    marks: Vec<f64>,
    intensities: Vec<f64>,
}

impl JumpMeasure {
    pub fn new(marks: Vec<f64>, intensities: Vec<f64>) -> Result<Self> {
        if marks.len() != intensities.len() {
            return Err(Error::param(
                "jumps",
                format!("{} marks but {} intensities", marks.len(), intensities.len()),
            ));
        }
        if let Some(e) = marks.iter().find(|e| !e.is_finite() || **e == 0.0) {
            return Err(Error::param("marks", format!("marks must be finite and nonzero, got {e}")));
        }
        if let Some(l) = intensities.iter().find(|l| !l.is_finite() || **l <= 0.0) {
            return Err(Error::param("intensities", format!("intensities must be > 0, got {l}")));
        }
        Ok(Self { marks, intensities })
    }

    /// No jumps at all.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn total_intensity(&self) -> f64 {
        self.intensities.iter().sum()
    }

    /// `|u|_nu^2 = sum_j lambda_j u_j^2`.
    pub fn norm_sq(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.len());
        self.intensities.iter().zip(u).map(|(l, x)| l * x * x).sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.norm_sq(u).sqrt()
    }
}
