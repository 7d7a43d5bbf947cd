//! A BERT/RoBERTa encoder with a two-layer multi-label head, built from candle
//! primitives so every op has a gradient on CPU.
//!
//! Parameter names follow the Hugging Face layout (`roberta.encoder.layer.0.attention.self.query.weight`,
//! `classifier.out_proj.bias`, …) so pretrained checkpoints load without renaming.

use candle_core::{DType, Device, Module, Tensor, D};
use candle_nn::{Embedding, Linear, VarBuilder};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::Result;

/// Seeded dropout. `None` means inference: no masks, fully deterministic.
pub struct Dropout<'a> {
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> Dropout<'a> {
    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        Dropout { rng: Some(rng) }
    }

    pub fn eval() -> Self {
        Dropout { rng: None }
    }

    fn apply(&mut self, x: &Tensor, p: f64) -> Result<Tensor> {
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x.clone());
        };
        if p <= 0.0 {
            return Ok(x.clone());
        }
        let scale = (1.0 / (1.0 - p)) as f32;
        let mask: Vec<f32> = (0..x.elem_count())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
            .collect();
        let mask = Tensor::from_vec(mask, x.shape(), x.device())?;
        Ok(x.mul(&mask)?)
    }
}

struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    fn new(size: usize, eps: f64, vb: VarBuilder) -> Result<Self> {
        Ok(LayerNorm {
            weight: vb.get(size, "weight")?,
            bias: vb.get(size, "bias")?,
            eps,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

fn linear(in_dim: usize, out_dim: usize, vb: VarBuilder) -> Result<Linear> {
    let weight = vb.get((out_dim, in_dim), "weight")?;
    let bias = vb.get(out_dim, "bias")?;
    Ok(Linear::new(weight, Some(bias)))
}

struct Layer {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: LayerNorm,
    intermediate: Linear,
    output: Linear,
    out_norm: LayerNorm,
}

impl Layer {
    fn new(cfg: &ModelConfig, vb: VarBuilder) -> Result<Self> {
        let h = cfg.hidden_size;
        let attn = vb.pp("attention");
        let sa = attn.pp("self");
        Ok(Layer {
            query: linear(h, h, sa.pp("query"))?,
            key: linear(h, h, sa.pp("key"))?,
            value: linear(h, h, sa.pp("value"))?,
            attn_out: linear(h, h, attn.pp("output").pp("dense"))?,
            attn_norm: LayerNorm::new(h, cfg.layer_norm_eps, attn.pp("output").pp("LayerNorm"))?,
            intermediate: linear(h, cfg.intermediate_size, vb.pp("intermediate").pp("dense"))?,
            output: linear(cfg.intermediate_size, h, vb.pp("output").pp("dense"))?,
            out_norm: LayerNorm::new(h, cfg.layer_norm_eps, vb.pp("output").pp("LayerNorm"))?,
        })
    }

    fn forward(&self, x: &Tensor, mask: &Tensor, cfg: &ModelConfig, drop: &mut Dropout) -> Result<Tensor> {
        let (b, s, h) = x.dims3()?;
        let nh = cfg.num_attention_heads;
        let hd = h / nh;
        let split = |t: Tensor| -> Result<Tensor> {
            Ok(t.reshape((b, s, nh, hd))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.query.forward(x)?)?;
        let k = split(self.key.forward(x)?)?;
        let v = split(self.value.forward(x)?)?;
        let scores = (q.matmul(&k.t()?)? / (hd as f64).sqrt())?.broadcast_add(mask)?;
        let probs = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let probs = drop.apply(&probs, cfg.attention_probs_dropout_prob)?;
        let ctx = probs.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, s, h))?;
        let attn = drop.apply(&self.attn_out.forward(&ctx)?, cfg.hidden_dropout_prob)?;
        let x = self.attn_norm.forward(&(attn + x)?)?;
        let inner = self.intermediate.forward(&x)?;
        let inner = match cfg.hidden_act.as_str() {
            "relu" => inner.relu()?,
            "gelu_new" => inner.gelu()?,
            _ => inner.gelu_erf()?,
        };
        let out = drop.apply(&self.output.forward(&inner)?, cfg.hidden_dropout_prob)?;
        self.out_norm.forward(&(out + x)?)
    }
}

/// Encoder plus `classifier.dense → tanh → classifier.out_proj` on the first token.
pub struct SequenceClassifier {
    pub config: ModelConfig,
    word: Embedding,
    position: Embedding,
    token_type: Embedding,
    emb_norm: LayerNorm,
    layers: Vec<Layer>,
    head_dense: Linear,
    head_out: Linear,
    device: Device,
}

impl SequenceClassifier {
    /// `prefix` is the checkpoint's encoder namespace (`roberta`, `bert`, or empty).
    pub fn new(cfg: &ModelConfig, prefix: &str, vb: VarBuilder) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.hidden_size;
        let enc = if prefix.is_empty() { vb.clone() } else { vb.pp(prefix) };
        let emb = enc.pp("embeddings");
        let embedding = |n: usize, name: &str| -> Result<Embedding> {
            Ok(Embedding::new(emb.get((n, h), &format!("{name}.weight"))?, h))
        };
        let word = embedding(cfg.vocab_size, "word_embeddings")?;
        let position = embedding(cfg.max_position_embeddings, "position_embeddings")?;
        let token_type = embedding(cfg.type_vocab_size.max(1), "token_type_embeddings")?;
        let emb_norm = LayerNorm::new(h, cfg.layer_norm_eps, emb.pp("LayerNorm"))?;
        let layers = (0..cfg.num_hidden_layers)
            .map(|i| Layer::new(cfg, enc.pp("encoder").pp("layer").pp(i.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let head = vb.pp("classifier");
        Ok(SequenceClassifier {
            config: cfg.clone(),
            word,
            position,
            token_type,
            emb_norm,
            layers,
            head_dense: linear(h, h, head.pp("dense"))?,
            head_out: linear(h, cfg.num_labels, head.pp("out_proj"))?,
            device: vb.device().clone(),
        })
    }

    fn position_ids(&self, ids: &[u32]) -> Vec<u32> {
        let pad = self.config.pad_token_id;
        if self.config.is_roberta() {
            // positions count real tokens only and start after the padding index
            let mut next = pad;
            ids.iter()
                .map(|&t| {
                    if t == pad {
                        pad
                    } else {
                        next += 1;
                        next
                    }
                })
                .collect()
        } else {
            (0..ids.len() as u32).collect()
        }
    }

    /// Last-layer hidden states, shape `(batch, seq, hidden)`.
    pub fn encode(&self, batch: &[Vec<u32>], drop: &mut Dropout) -> Result<Tensor> {
        let b = batch.len();
        let s = batch.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let pad = self.config.pad_token_id;
        let mut ids = Vec::with_capacity(b * s);
        let mut pos = Vec::with_capacity(b * s);
        let mut mask = Vec::with_capacity(b * s);
        for seq in batch {
            let mut padded = seq.clone();
            padded.resize(s, pad);
            pos.extend(self.position_ids(&padded));
            mask.extend((0..s).map(|i| if i < seq.len() { 0.0f32 } else { -1e4 }));
            ids.extend(padded);
        }
        let ids = Tensor::from_vec(ids, (b, s), &self.device)?;
        let pos = Tensor::from_vec(pos, (b, s), &self.device)?;
        let types = Tensor::zeros((b, s), DType::U32, &self.device)?;
        let mask = Tensor::from_vec(mask, (b, 1, 1, s), &self.device)?;
        let x = ((self.word.forward(&ids)? + self.position.forward(&pos)?)?
            + self.token_type.forward(&types)?)?;
        let mut x = drop.apply(&self.emb_norm.forward(&x)?, self.config.hidden_dropout_prob)?;
        for layer in &self.layers {
            x = layer.forward(&x, &mask, &self.config, drop)?;
        }
        Ok(x)
    }

    /// First-token (CLS) vectors, shape `(batch, hidden)`.
    pub fn cls(&self, batch: &[Vec<u32>], drop: &mut Dropout) -> Result<Tensor> {
        Ok(self.encode(batch, drop)?.narrow(1, 0, 1)?.squeeze(1)?)
    }

    /// Multi-label logits, shape `(batch, num_labels)`.
    pub fn logits(&self, batch: &[Vec<u32>], drop: &mut Dropout) -> Result<Tensor> {
        let cls = self.cls(batch, drop)?;
        let p = self.config.hidden_dropout_prob;
        let x = drop.apply(&cls, p)?;
        let x = self.head_dense.forward(&x)?.tanh()?;
        let x = drop.apply(&x, p)?;
        Ok(self.head_out.forward(&x)?)
    }
}

/// Binary cross-entropy with logits, summed over labels and averaged over the batch.
pub fn multilabel_bce(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    // max(z, 0) - z t + ln(1 + e^{-|z|})
    let softplus = (logits.abs()?.neg()?.exp()? + 1.0)?.log()?;
    let per = ((logits.relu()? - logits.mul(targets)?)? + softplus)?;
    let b = logits.dim(0)? as f64;
    Ok((per.sum_all()? / b)?)
}
