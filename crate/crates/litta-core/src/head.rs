//! The adaptable classification head: an affine map from frame features to
//! class logits. This is the full set of parameters adapted per utterance.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::ctc::LogitMatrix;
use crate::error::{Error, Result};
use crate::vocab::Vocab;

/// Affine head parameters: `logits_t = W * frame_t + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptableHead {
    /// C rows of D weights.
    #[serde(rename = "W")]
    pub weights: Vec<Vec<f64>>,
    /// Length-C bias.
    #[serde(rename = "b")]
    pub bias: Vec<f64>,
    pub vocab: Vocab,
}

impl AdaptableHead {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>, vocab: Vocab) -> Result<Self> {
        let head = AdaptableHead {
            weights,
            bias,
            vocab,
        };
        head.validate()?;
        Ok(head)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.vocab.size();
        if self.weights.len() != c || self.bias.len() != c {
            return Err(Error::InvalidArgument(format!(
                "head has {} weight rows and {} biases for {} classes",
                self.weights.len(),
                self.bias.len(),
                c
            )));
        }
        let d = self.feature_dim();
        for (i, row) in self.weights.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "weight row {i} has width {} but row 0 has {d}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("head weight row {i}")));
            }
        }
        if self.bias.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("head bias".into()));
        }
        Ok(())
    }

    /// Input feature dimension D.
    pub fn feature_dim(&self) -> usize {
        self.weights.first().map(|r| r.len()).unwrap_or(0)
    }

    /// Number of classes C including the blank.
    pub fn class_count(&self) -> usize {
        self.vocab.size()
    }

    /// Applies the head to every frame.
    pub fn logits(&self, frames: &[Vec<f64>]) -> Result<LogitMatrix> {
        let d = self.feature_dim();
        let mut rows = Vec::with_capacity(frames.len());
        for (t, frame) in frames.iter().enumerate() {
            if frame.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "frame {t} has dimension {} but the head expects {d}",
                    frame.len()
                )));
            }
            let row: Vec<f64> = self
                .weights
                .iter()
                .zip(&self.bias)
                .map(|(w, &b)| b + w.iter().zip(frame).map(|(wi, xi)| wi * xi).sum::<f64>())
                .collect();
            rows.push(row);
        }
        LogitMatrix::new(rows, self.vocab.clone())
    }

    /// Sum of squared weight and bias entries.
    pub fn param_norm_sq(&self) -> f64 {
        let w: f64 = self.weights.iter().flatten().map(|x| x * x).sum();
        let b: f64 = self.bias.iter().map(|x| x * x).sum();
        w + b
    }

    /// Copies parameters into one flat vector: W row-major, then b.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.class_count() * self.feature_dim() + self.class_count());
        for row in &self.weights {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.bias);
        out
    }

    /// Restores parameters from `flatten` order.
    pub fn unflatten_into(&mut self, flat: &[f64]) {
        let d = self.feature_dim();
        debug_assert_eq!(flat.len(), self.class_count() * d + self.class_count());
        let mut it = flat.iter();
        for row in self.weights.iter_mut() {
            for w in row.iter_mut() {
                *w = *it.next().unwrap();
            }
        }
        for b in self.bias.iter_mut() {
            *b = *it.next().unwrap();
        }
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let head: AdaptableHead = serde_json::from_reader(reader)?;
        head.validate()?;
        Ok(head)
    }
}
