//! Tape-free incremental decoding with a key/value cache.

use super::beam::Decoder;
use super::layout::EOS;
use super::Model;
use crate::autodiff::{axpy, dot, gelu_scalar, softmax_in_place, LN_EPS};
use crate::error::{Error, Result};
use crate::lora;

struct Proj<'a> {
    w: &'a [f64],
    b: &'a [f64],
    d_out: usize,
    /// `(A [r×d_in], B [d_out×r], scaling)`
    adapter: Option<(&'a [f64], &'a [f64], usize, f64)>,
}

impl Proj<'_> {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, &self.w[i * self.d_out..(i + 1) * self.d_out], &mut out);
            }
        }
        if let Some((a, b, r, s)) = self.adapter {
            let d_in = x.len();
            let down: Vec<f64> = (0..r).map(|k| dot(x, &a[k * d_in..(k + 1) * d_in])).collect();
            for (j, o) in out.iter_mut().enumerate() {
                *o += s * dot(&down, &b[j * r..(j + 1) * r]);
            }
        }
        out
    }
}

struct Layer<'a> {
    ln1: (&'a [f64], &'a [f64]),
    q: Proj<'a>,
    k: Proj<'a>,
    v: Proj<'a>,
    o: Proj<'a>,
    ln2: (&'a [f64], &'a [f64]),
    fc: Proj<'a>,
    proj: Proj<'a>,
}

/// Borrowed view of a [`Model`] for generation.
pub struct InferenceModel<'a> {
    vocab: usize,
    context: usize,
    d: usize,
    heads: usize,
    tok_emb: &'a [f64],
    pos_emb: &'a [f64],
    layers: Vec<Layer<'a>>,
    ln_f: (&'a [f64], &'a [f64]),
    head: &'a [f64],
}

/// Per-layer keys and values of the positions decoded so far.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvCache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
}

impl KvCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

fn layer_norm(x: &[f64], (g, b): (&[f64], &[f64])) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let rs = 1.0 / (var + LN_EPS).sqrt();
    x.iter()
        .zip(g.iter().zip(b))
        .map(|(v, (g, b))| (v - mean) * rs * g + b)
        .collect()
}

impl<'a> InferenceModel<'a> {
    pub fn new(model: &'a Model) -> Result<Self> {
        let cfg = &model.config;
        let get = |name: &str| -> Result<&'a [f64]> {
            model
                .params
                .get(name)
                .map(|t| t.data())
                .ok_or_else(|| Error::Structure(format!("missing parameter {name}")))
        };
        let proj = |layer: &str, d_out: usize| -> Result<Proj<'a>> {
            let adapter = match &model.lora {
                Some(lc) if model.params.contains_key(&lora::a_name(layer)) => Some((
                    get(&lora::a_name(layer))?,
                    get(&lora::b_name(layer))?,
                    lc.rank,
                    lc.scaling(),
                )),
                _ => None,
            };
            Ok(Proj {
                w: get(&format!("{layer}.w"))?,
                b: get(&format!("{layer}.b"))?,
                d_out,
                adapter,
            })
        };
        let d = cfg.d_model;
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let n = |rest: &str| format!("h{l}.{rest}");
                Ok(Layer {
                    ln1: (get(&n("ln1.g"))?, get(&n("ln1.b"))?),
                    q: proj(&n("attn.q"), d)?,
                    k: proj(&n("attn.k"), d)?,
                    v: proj(&n("attn.v"), d)?,
                    o: proj(&n("attn.o"), d)?,
                    ln2: (get(&n("ln2.g"))?, get(&n("ln2.b"))?),
                    fc: proj(&n("mlp.fc"), cfg.d_ff())?,
                    proj: proj(&n("mlp.proj"), d)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            vocab: cfg.vocab_size,
            context: cfg.context_length,
            d,
            heads: cfg.n_heads,
            tok_emb: get("tok_emb")?,
            pos_emb: get("pos_emb")?,
            layers,
            ln_f: (get("ln_f.g")?, get("ln_f.b")?),
            head: get(if cfg.tie_embeddings { "tok_emb" } else { "lm_head.w" })?,
        })
    }

    /// Appends `token` at the next position and returns the logits there.
    pub fn forward_token(&self, cache: &mut KvCache, token: usize) -> Result<Vec<f64>> {
        if token >= self.vocab {
            return Err(Error::Index(format!("token {token} >= vocab_size {}", self.vocab)));
        }
        if cache.len >= self.context {
            return Err(Error::ContextOverflow {
                len: cache.len + 1,
                context: self.context,
            });
        }
        if cache.keys.is_empty() {
            cache.keys = vec![Vec::new(); self.layers.len()];
            cache.values = vec![Vec::new(); self.layers.len()];
        }
        let d = self.d;
        let pos = cache.len;
        let mut x: Vec<f64> = self.tok_emb[token * d..(token + 1) * d]
            .iter()
            .zip(&self.pos_emb[pos * d..(pos + 1) * d])
            .map(|(a, b)| a + b)
            .collect();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for (l, layer) in self.layers.iter().enumerate() {
            let h = layer_norm(&x, layer.ln1);
            let q = layer.q.apply(&h);
            cache.keys[l].extend(layer.k.apply(&h));
            cache.values[l].extend(layer.v.apply(&h));
            let (keys, values) = (&cache.keys[l], &cache.values[l]);
            let mut att = vec![0.0; d];
            let mut scores = vec![0.0; pos + 1];
            for hd in 0..self.heads {
                let qh = &q[hd * dh..(hd + 1) * dh];
                for (s, score) in scores.iter_mut().enumerate() {
                    *score = dot(qh, &keys[s * d + hd * dh..][..dh]) * scale;
                }
                softmax_in_place(&mut scores);
                let out = &mut att[hd * dh..(hd + 1) * dh];
                for (s, &p) in scores.iter().enumerate() {
                    axpy(p, &values[s * d + hd * dh..][..dh], out);
                }
            }
            let o = layer.o.apply(&att);
            for (xi, oi) in x.iter_mut().zip(&o) {
                *xi += oi;
            }
            let h = layer_norm(&x, layer.ln2);
            let f: Vec<f64> = layer.fc.apply(&h).into_iter().map(gelu_scalar).collect();
            let m = layer.proj.apply(&f);
            for (xi, mi) in x.iter_mut().zip(&m) {
                *xi += mi;
            }
        }
        cache.len += 1;
        let x = layer_norm(&x, self.ln_f);
        let logits: Vec<f64> = (0..self.vocab)
            .map(|v| dot(&x, &self.head[v * d..(v + 1) * d]))
            .collect();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("inference"));
        }
        Ok(logits)
    }
}

fn log_softmax(mut logits: Vec<f64>) -> Vec<f64> {
    let orig = logits.clone();
    let lse = softmax_in_place(&mut logits);
    orig.into_iter().map(|v| v - lse).collect()
}

impl Decoder for InferenceModel<'_> {
    type State = KvCache;

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn eos(&self) -> usize {
        EOS
    }

    fn max_len(&self) -> usize {
        self.context
    }

    fn start(&self, prefix: &[usize]) -> Result<(KvCache, Vec<f64>)> {
        if prefix.is_empty() {
            return Err(Error::Usage("generation needs a nonempty prefix".into()));
        }
        if prefix.len() >= self.context {
            return Err(Error::ContextOverflow {
                len: prefix.len(),
                context: self.context,
            });
        }
        let mut cache = KvCache::default();
        let mut logits = Vec::new();
        for &t in prefix {
            logits = self.forward_token(&mut cache, t)?;
        }
        Ok((cache, log_softmax(logits)))
    }

    fn step(&self, state: &mut KvCache, token: usize) -> Result<Vec<f64>> {
        Ok(log_softmax(self.forward_token(state, token)?))
    }
}
