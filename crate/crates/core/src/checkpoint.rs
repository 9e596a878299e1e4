//! Binary model files: magic bytes, a format version, a length-prefixed JSON
//! header describing shapes, then every tensor as little-endian f64.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::caci::{CatsLinear, ModelConfig};
use crate::classifier::{CnnClassifier, CnnConfig};
use crate::classifier::Classifier;
use crate::dataset::Standardizer;
use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::rng::stream_rng;

pub const MAGIC: &[u8; 8] = b"CATSLIN\0";
pub const FORMAT_VERSION: u32 = 1;

/// A trained model plus what is needed to apply it to raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: CatsLinear,
    pub scaler: Option<Standardizer>,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    cnn: Option<CnnConfig>,
    feature_names: Vec<String>,
    has_scaler: bool,
    /// Length of every tensor in the payload, in order.
    tensor_lengths: Vec<usize>,
}

fn model_tensors(model: &CatsLinear) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = vec![std::slice::from_ref(&model.revin.eps), &model.revin.affine.alpha, &model.revin.affine.beta];
    for p in &model.predictors {
        out.extend(p.tensors());
    }
    out.extend(model.classifier.tensors());
    if let Classifier::Cnn(c) = &model.classifier {
        for b in &c.blocks {
            out.push(b.running_mean.as_slice().expect("standard layout"));
            out.push(b.running_var.as_slice().expect("standard layout"));
        }
    }
    out
}

fn model_tensors_mut(model: &mut CatsLinear) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> =
        vec![std::slice::from_mut(&mut model.revin.eps), &mut model.revin.affine.alpha, &mut model.revin.affine.beta];
    for p in &mut model.predictors {
        out.extend(p.tensors_mut());
    }
    // The classifier's trainable tensors and its running statistics are
    // disjoint fields, so they are collected in two passes over raw parts.
    match &mut model.classifier {
        Classifier::Mlp(c) => out.extend(c.tensors_mut()),
        Classifier::Cnn(c) => {
            let CnnClassifier { blocks, fc_weight, fc_bias, .. } = c;
            let mut running = Vec::new();
            for b in blocks.iter_mut() {
                out.push(b.weight.as_slice_mut().expect("standard layout"));
                out.push(b.bias.as_slice_mut().expect("standard layout"));
                out.push(b.gamma.as_slice_mut().expect("standard layout"));
                out.push(b.beta.as_slice_mut().expect("standard layout"));
                running.push(b.running_mean.as_slice_mut().expect("standard layout"));
                running.push(b.running_var.as_slice_mut().expect("standard layout"));
            }
            out.push(fc_weight.as_slice_mut().expect("standard layout"));
            out.push(fc_bias.as_slice_mut().expect("standard layout"));
            out.extend(running);
        }
    }
    out
}

impl Checkpoint {
    pub fn new(model: CatsLinear, scaler: Option<Standardizer>, feature_names: Vec<String>) -> Self {
        Checkpoint { model, scaler, feature_names }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = model_tensors(&self.model);
        if let Some(s) = &self.scaler {
            tensors.push(&s.mean);
            tensors.push(&s.std);
        }
        let header = Header {
            config: self.model.config.clone(),
            cnn: match &self.model.classifier {
                Classifier::Cnn(c) => Some(c.config.clone()),
                Classifier::Mlp(_) => None,
            },
            feature_names: self.feature_names.clone(),
            has_scaler: self.scaler.is_some(),
            tensor_lengths: tensors.iter().map(|t| t.len()).collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let payload: usize = tensors.iter().map(|t| t.len()).sum();
        let mut out = Vec::with_capacity(MAGIC.len() + 12 + json.len() + 8 * payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in tensors.into_iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        let rest = bytes.strip_prefix(MAGIC.as_slice()).ok_or_else(|| bad("not a model file (bad magic)"))?;
        let (version, rest) = rest.split_at_checked(4).ok_or_else(|| bad("truncated header"))?;
        let version = u32::from_le_bytes(version.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let (len, rest) = rest.split_at_checked(8).ok_or_else(|| bad("truncated header"))?;
        let len = usize::try_from(u64::from_le_bytes(len.try_into().expect("8 bytes"))).map_err(|_| bad("header too large"))?;
        let (json, mut payload) = rest.split_at_checked(len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let config = header.config.clone();
        let mut model = CatsLinear::new(config.clone(), 0)?;
        if let Some(cnn) = header.cnn {
            let rng = &mut stream_rng(0, 0);
            model.classifier = Classifier::Cnn(CnnClassifier::new(config.predictor.lookback, config.classes, cnn, rng));
        }
        let mut scaler = header.has_scaler.then(|| Standardizer {
            mean: vec![0.0; config.n_features],
            std: vec![0.0; config.n_features],
        });
        {
            let mut slots = model_tensors_mut(&mut model);
            if let Some(s) = &mut scaler {
                slots.push(&mut s.mean);
                slots.push(&mut s.std);
            }
            let expected: Vec<usize> = slots.iter().map(|t| t.len()).collect();
            if expected != header.tensor_lengths {
                return Err(bad("tensor shapes do not match the configuration"));
            }
            for slot in slots {
                for v in slot.iter_mut() {
                    let (chunk, tail) = payload.split_first_chunk::<8>().ok_or_else(|| bad("truncated tensor data"))?;
                    *v = f64::from_le_bytes(*chunk);
                    payload = tail;
                }
            }
        }
        if !payload.is_empty() {
            return Err(bad("trailing bytes after tensor data"));
        }
        model.validate()?;
        Ok(Checkpoint { model, scaler, feature_names: header.feature_names })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }
}
