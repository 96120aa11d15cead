use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{HeadSpec, ModelConfig};
use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<R>,
}

impl<R: Real> Tensor<R> {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name, shape, data: vec![R::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Indices of one block's tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerIx {
    pub norm1: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub norm2: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Where every named parameter lives in [`Params::tensors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub audio_emb: Vec<usize>,
    pub l_a: usize,
    pub l_v: usize,
    pub tok_emb: usize,
    pub layers: Vec<LayerIx>,
    pub norm_f: usize,
    /// Per head: (weight, bias).
    pub heads: Vec<(usize, usize)>,
}

/// Parameter group of a tensor for the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// Embedding tables and the modality adapters.
    Embedding,
    /// Dense matrices inside the network and heads (decayed).
    Matrix,
    /// Norm gains and biases.
    Vector,
}

/// All learnable tensors plus the config and heads they were built for.
/// The same type holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<R> {
    pub config: ModelConfig,
    pub heads: Vec<HeadSpec>,
    pub layout: Layout,
    pub tensors: Vec<Tensor<R>>,
}

impl<R: Real> Params<R> {
    /// All tensors zero, norm gains included.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let heads = config.heads();
        let (d, f) = (config.d_model, config.d_ff);
        let mut tensors: Vec<Tensor<R>> = Vec::new();
        let mut add = |name: String, shape: Vec<usize>| {
            tensors.push(Tensor::zeros(name, shape));
            tensors.len() - 1
        };
        let audio_emb = (0..config.n_codebooks)
            .map(|i| add(format!("audio_emb.{i}"), vec![config.codebook_size, d]))
            .collect();
        let l_a = add("l_a".into(), vec![d, d]);
        let l_v = add("l_v".into(), vec![d, config.visual_dims]);
        let tok_emb = add("tok_emb".into(), vec![config.vocab_size, d]);
        let layers = (0..config.n_layers)
            .map(|l| LayerIx {
                norm1: add(format!("layers.{l}.norm1"), vec![d]),
                wq: add(format!("layers.{l}.wq"), vec![d, d]),
                wk: add(format!("layers.{l}.wk"), vec![d, d]),
                wv: add(format!("layers.{l}.wv"), vec![d, d]),
                wo: add(format!("layers.{l}.wo"), vec![d, d]),
                norm2: add(format!("layers.{l}.norm2"), vec![d]),
                w1: add(format!("layers.{l}.w1"), vec![f, d]),
                b1: add(format!("layers.{l}.b1"), vec![f]),
                w2: add(format!("layers.{l}.w2"), vec![d, f]),
                b2: add(format!("layers.{l}.b2"), vec![d]),
            })
            .collect();
        let norm_f = add("norm_f".into(), vec![d]);
        let head_ix = heads
            .iter()
            .map(|h| {
                (
                    add(format!("head.{}.w", h.name), vec![h.classes.len(), d]),
                    add(format!("head.{}.b", h.name), vec![h.classes.len()]),
                )
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            heads,
            layout: Layout { audio_emb, l_a, l_v, tok_emb, layers, norm_f, heads: head_ix },
            tensors,
        })
    }

    /// Gaussian init (std `config.init_std`), unit norm gains, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in p.tensors.iter_mut() {
            if is_gain(&t.name) {
                t.data.iter_mut().for_each(|x| *x = R::one());
            } else if !is_bias(&t.name) {
                t.data.iter_mut().for_each(|x| *x = R::of(normal.sample(&mut rng)));
            }
        }
        let d = config.d_model;
        let null = crate::grid::NULL.index();
        let tok = p.layout.tok_emb;
        p.t_mut(tok)[null * d..(null + 1) * d].fill(R::zero());
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            heads: self.heads.clone(),
            layout: self.layout.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor { name: t.name.clone(), shape: t.shape.clone(), data: vec![R::zero(); t.len()] })
                .collect(),
        }
    }

    pub fn t(&self, ix: usize) -> &[R] {
        &self.tensors[ix].data
    }

    pub fn t_mut(&mut self, ix: usize) -> &mut [R] {
        &mut self.tensors[ix].data
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn group(&self, ix: usize) -> Group {
        let name = &self.tensors[ix].name;
        if name.starts_with("audio_emb") || name == "l_a" || name == "l_v" || name == "tok_emb" {
            Group::Embedding
        } else if is_gain(name) || is_bias(name) {
            Group::Vector
        } else {
            Group::Matrix
        }
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn scale(&mut self, c: R) {
        for t in self.tensors.iter_mut() {
            t.data.iter_mut().for_each(|x| *x *= c);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, &y)| *x += y);
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors.iter().flat_map(|t| t.data.iter()).map(|x| x.f64() * x.f64()).sum()
    }

    /// Converts to another scalar type.
    pub fn cast<S: Real>(&self) -> Params<S> {
        Params {
            config: self.config.clone(),
            heads: self.heads.clone(),
            layout: self.layout.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor { name: t.name.clone(), shape: t.shape.clone(), data: t.data.iter().map(|x| S::of(x.f64())).collect() })
                .collect(),
        }
    }

    /// Copies every tensor whose name and shape match in `src`; returns the
    /// number copied.
    pub fn load_matching(&mut self, src: &Params<R>) -> usize {
        let mut n = 0;
        for t in self.tensors.iter_mut() {
            if let Some(s) = src.tensors.iter().find(|s| s.name == t.name && s.shape == t.shape) {
                t.data.copy_from_slice(&s.data);
                n += 1;
            }
        }
        n
    }
}

fn is_gain(name: &str) -> bool {
    name.ends_with("norm1") || name.ends_with("norm2") || name == "norm_f"
}

fn is_bias(name: &str) -> bool {
    name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_init() {
        let cfg = ModelConfig::small(36, 16, 2, 2);
        let p = Params::<f32>::init(&cfg, 1).unwrap();
        assert_eq!(p.layout.audio_emb.len(), 16);
        assert_eq!(p.tensors[p.layout.l_v].shape, vec![16, 16]);
        assert!(p.t(p.layout.norm_f).iter().all(|&x| x == 1.0));
        assert!(p.t(p.layout.heads[0].1).iter().all(|&x| x == 0.0));
        assert_eq!(p.group(p.layout.tok_emb), Group::Embedding);
        assert_eq!(p.group(p.layout.layers[0].wq), Group::Matrix);
        assert_eq!(p, Params::init(&cfg, 1).unwrap());
    }
}
