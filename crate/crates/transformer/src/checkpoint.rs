//! Checkpoint directories: `config.json`, `model.safetensors`, `tokenizer.json`.
//!
//! Loading builds every parameter from the checkpoint when present. The classification
//! head may be missing (a plain pretrained encoder); it is then freshly initialized from
//! the run seed. Anything else missing is an error.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use candle_nn::{VarBuilder, VarMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::ModelConfig;
use crate::model::SequenceClassifier;
use crate::tokenize::{write_word_level_tokenizer, TOKENIZER_FILE};
use crate::{Error, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const WEIGHTS_FILE: &str = "model.safetensors";
const INIT_STD: f64 = 0.02;

pub struct LoadedModel {
    pub model: SequenceClassifier,
    pub varmap: VarMap,
    pub prefix: String,
}

pub fn check_dir(dir: &Path) -> Result<()> {
    for f in [CONFIG_FILE, WEIGHTS_FILE, TOKENIZER_FILE] {
        if !dir.join(f).is_file() {
            return Err(Error::MissingPretrained(dir.to_path_buf()));
        }
    }
    Ok(())
}

fn detect_prefix(names: impl Iterator<Item = impl AsRef<str>>) -> String {
    let mut prefix = String::new();
    for n in names {
        let n = n.as_ref();
        for p in ["roberta", "bert"] {
            if n.starts_with(&format!("{p}.embeddings.")) {
                prefix = p.to_string();
            }
        }
    }
    prefix
}

fn seeded_tensor(shape: &[usize], name: &str, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let leaf = name.rsplit('.').next().unwrap_or(name);
    let data: Vec<f32> = if name.contains("LayerNorm") && leaf == "weight" {
        vec![1.0; n]
    } else if leaf == "bias" || name.contains("LayerNorm") {
        vec![0.0; n]
    } else {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        (0..n).map(|_| normal.sample(rng) as f32).collect()
    };
    Ok(Tensor::from_vec(data, shape, &Device::Cpu)?)
}

/// Older checkpoints name LayerNorm parameters `gamma`/`beta`.
fn lookup<'a>(tensors: &'a HashMap<String, Tensor>, name: &str) -> Option<&'a Tensor> {
    tensors.get(name).or_else(|| {
        if !name.contains("LayerNorm") {
            return None;
        }
        let legacy = name
            .strip_suffix(".weight")
            .map(|s| format!("{s}.gamma"))
            .or_else(|| name.strip_suffix(".bias").map(|s| format!("{s}.beta")))?;
        tensors.get(&legacy)
    })
}

/// Loads a checkpoint for training or inference. `seed` drives the initialization of a
/// missing classification head so reruns start from identical weights.
pub fn load_model(dir: &Path, seed: u64) -> Result<LoadedModel> {
    check_dir(dir)?;
    let config = ModelConfig::read(&dir.join(CONFIG_FILE))?;
    let weights_path = dir.join(WEIGHTS_FILE);
    let tensors = candle_core::safetensors::load(&weights_path, &Device::Cpu)
        .map_err(|e| Error::checkpoint(&weights_path, e))?;
    let prefix = detect_prefix(tensors.keys());
    let varmap = VarMap::new();
    let vb = VarBuilder::from_varmap(&varmap, DType::F32, &Device::Cpu);
    let model = SequenceClassifier::new(&config, &prefix, vb)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names: Vec<String> = varmap.data().lock().unwrap().keys().cloned().collect();
    names.sort();
    let data = varmap.data().lock().unwrap();
    let mut fresh = 0usize;
    for name in &names {
        let var = &data[name];
        let dims = var.dims().to_vec();
        let value = match lookup(&tensors, name) {
            Some(t) => {
                if t.dims() != dims.as_slice() {
                    return Err(Error::checkpoint(
                        &weights_path,
                        format!("{name}: shape {:?}, expected {:?}", t.dims(), dims),
                    ));
                }
                t.to_dtype(DType::F32)?
            }
            None if name.starts_with("classifier.") => {
                fresh += 1;
                seeded_tensor(&dims, name, &mut rng)?
            }
            None => {
                return Err(Error::checkpoint(&weights_path, format!("missing tensor `{name}`")));
            }
        };
        var.set(&value)?;
    }
    drop(data);
    if fresh > 0 {
        log::info!("{}: initialized {fresh} classification-head tensors", dir.display());
    }
    Ok(LoadedModel {
        model,
        varmap,
        prefix,
    })
}

/// Writes `varmap` plus config and tokenizer (copied from `tokenizer_src`) to `dir`.
pub fn save_model(
    dir: &Path,
    config: &ModelConfig,
    varmap: &VarMap,
    tokenizer_src: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::checkpoint(dir, e))?;
    config.write(&dir.join(CONFIG_FILE))?;
    let weights = dir.join(WEIGHTS_FILE);
    varmap.save(&weights).map_err(|e| Error::checkpoint(&weights, e))?;
    let tok = dir.join(TOKENIZER_FILE);
    if tokenizer_src != tok {
        std::fs::copy(tokenizer_src, &tok).map_err(|e| Error::checkpoint(&tok, e))?;
    }
    Ok(())
}

/// Creates a randomly initialized "pretrained" checkpoint with a word-level tokenizer over
/// `vocabulary`. Used for desk-scale runs and tests where no downloaded model exists.
/// `config.vocab_size` is overwritten to fit the tokenizer.
pub fn init_checkpoint(dir: &Path, mut config: ModelConfig, vocabulary: &[String], seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::checkpoint(dir, e))?;
    let tok = dir.join(TOKENIZER_FILE);
    config.vocab_size = write_word_level_tokenizer(&tok, vocabulary)?;
    config.pad_token_id = crate::tokenize::PAD;
    config.validate()?;
    let prefix = if config.is_roberta() { "roberta" } else { "bert" };
    let varmap = VarMap::new();
    let vb = VarBuilder::from_varmap(&varmap, DType::F32, &Device::Cpu);
    SequenceClassifier::new(&config, prefix, vb)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    {
        let data = varmap.data().lock().unwrap();
        let mut names: Vec<&String> = data.keys().collect();
        names.sort();
        for name in names {
            let var = &data[name];
            let value = seeded_tensor(var.dims(), name, &mut rng)?;
            var.set(&value)?;
        }
    }
    // a pretrained encoder ships without the task head
    let mut tensors: HashMap<String, Tensor> = HashMap::new();
    for (name, var) in varmap.data().lock().unwrap().iter() {
        if !name.starts_with("classifier.") {
            tensors.insert(name.clone(), var.as_tensor().clone());
        }
    }
    let weights = dir.join(WEIGHTS_FILE);
    candle_core::safetensors::save(&tensors, &weights).map_err(|e| Error::checkpoint(&weights, e))?;
    config.write(&dir.join(CONFIG_FILE))?;
    Ok(dir.to_path_buf())
}
