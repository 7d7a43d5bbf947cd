//! Ensemble directories: one safetensors checkpoint per class plus `manifest.json`.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};

use super::{Ensemble, EpochRecord, HeadConfig, HeadModel, RecurrentHead, TrainedHead, WeightPolicy};
use crate::labels::TriggerClass;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub class: usize,
    pub name: String,
    pub kind: String,
    pub checkpoint: Option<String>,
    pub selected_epoch: usize,
    pub validation_f1: f64,
    pub pos_weight: Option<f64>,
    pub threshold: f64,
    pub curve: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub store_fingerprint: String,
    pub input_dim: usize,
    pub head_config: HeadConfig,
    pub policy: WeightPolicy,
    pub classes: Vec<ClassEntry>,
}

fn f32_bytes(data: &[f32]) -> Vec<u8> {
    data.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn tensors(head: &RecurrentHead) -> Vec<(&'static str, Vec<usize>, Vec<u8>)> {
    let std = |a: &Array2<f32>| a.as_standard_layout().iter().copied().collect::<Vec<_>>();
    vec![
        ("lstm.weight_ih", head.w_ih.shape().to_vec(), f32_bytes(&std(&head.w_ih))),
        ("lstm.weight_hh", head.w_hh.shape().to_vec(), f32_bytes(&std(&head.w_hh))),
        ("lstm.bias", vec![head.bias.len()], f32_bytes(head.bias.as_slice().unwrap())),
        ("fc1.weight", head.fc1_w.shape().to_vec(), f32_bytes(&std(&head.fc1_w))),
        ("fc1.bias", vec![head.fc1_b.len()], f32_bytes(head.fc1_b.as_slice().unwrap())),
        ("fc2.weight", vec![head.fc2_w.len()], f32_bytes(head.fc2_w.as_slice().unwrap())),
        ("fc2.bias", vec![1], f32_bytes(&[head.fc2_b])),
    ]
}

fn write_head(path: &Path, head: &RecurrentHead) -> Result<()> {
    let owned = tensors(head);
    let views = owned
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes)
                .map(|v| (name.to_string(), v))
                .map_err(|e| checkpoint_err(path, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let bytes = safetensors::serialize(views, &None).map_err(|e| checkpoint_err(path, e))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn checkpoint_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn read_head(path: &Path) -> Result<RecurrentHead> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| checkpoint_err(path, e))?;
    let get = |name: &str| -> Result<(Vec<usize>, Vec<f32>)> {
        let t = st.tensor(name).map_err(|e| checkpoint_err(path, e))?;
        if t.dtype() != Dtype::F32 {
            return Err(checkpoint_err(path, format!("{name}: expected f32")));
        }
        let data = t
            .data()
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok((t.shape().to_vec(), data))
    };
    let mat = |name: &str| -> Result<Array2<f32>> {
        let (shape, data) = get(name)?;
        if shape.len() != 2 {
            return Err(checkpoint_err(path, format!("{name}: expected a matrix")));
        }
        Array2::from_shape_vec((shape[0], shape[1]), data).map_err(|e| checkpoint_err(path, e))
    };
    let vec = |name: &str| -> Result<Array1<f32>> { Ok(Array1::from(get(name)?.1)) };
    Ok(RecurrentHead {
        w_ih: mat("lstm.weight_ih")?,
        w_hh: mat("lstm.weight_hh")?,
        bias: vec("lstm.bias")?,
        fc1_w: mat("fc1.weight")?,
        fc1_b: vec("fc1.bias")?,
        fc2_w: vec("fc2.weight")?,
        fc2_b: vec("fc2.bias")?[0],
    })
}

impl Ensemble {
    pub fn save(
        &self,
        dir: &Path,
        store_fingerprint: &str,
        input_dim: usize,
        cfg: &HeadConfig,
        policy: &WeightPolicy,
    ) -> Result<EnsembleManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut classes = Vec::new();
        for head in self.heads() {
            let (kind, checkpoint) = match &head.model {
                HeadModel::Recurrent(model) => {
                    let file = format!("{}.safetensors", head.class.name());
                    write_head(&dir.join(&file), model)?;
                    ("recurrent", Some(file))
                }
                HeadModel::ConstantNegative => ("constant-negative", None),
            };
            classes.push(ClassEntry {
                class: head.class.number(),
                name: head.class.name().to_string(),
                kind: kind.to_string(),
                checkpoint,
                selected_epoch: head.selected_epoch,
                validation_f1: head.validation_f1,
                pos_weight: head.pos_weight,
                threshold: head.threshold,
                curve: head.curve.clone(),
            });
        }
        let manifest = EnsembleManifest {
            store_fingerprint: store_fingerprint.to_string(),
            input_dim,
            head_config: cfg.clone(),
            policy: policy.clone(),
            classes,
        };
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(".manifest.json.tmp");
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<(Ensemble, EnsembleManifest)> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: EnsembleManifest =
            serde_json::from_slice(&bytes).map_err(|e| checkpoint_err(&path, e))?;
        let mut by_class: HashMap<usize, TrainedHead> = HashMap::new();
        for entry in &manifest.classes {
            let class = TriggerClass::from_number(entry.class)
                .ok_or_else(|| checkpoint_err(&path, format!("bad class {}", entry.class)))?;
            let model = match entry.checkpoint.as_deref() {
                Some(file) => {
                    let head = read_head(&dir.join(file))?;
                    if head.input_dim() != manifest.input_dim {
                        return Err(Error::DimensionMismatch {
                            expected: manifest.input_dim,
                            found: head.input_dim(),
                        });
                    }
                    HeadModel::Recurrent(head)
                }
                None => HeadModel::ConstantNegative,
            };
            by_class.insert(
                entry.class,
                TrainedHead {
                    class,
                    model,
                    selected_epoch: entry.selected_epoch,
                    validation_f1: entry.validation_f1,
                    pos_weight: entry.pos_weight,
                    threshold: entry.threshold,
                    curve: entry.curve.clone(),
                },
            );
        }
        let ensemble = Ensemble::new(by_class.into_values().collect())?;
        Ok((ensemble, manifest))
    }
}
