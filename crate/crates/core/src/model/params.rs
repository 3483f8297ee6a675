use std::ops::Range;

use super::ModelConfig;

/// One named tensor inside the flat parameter buffer. Vectors have `rows == 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    /// Name without the layer index, e.g. `attn.qkv.w`.
    pub family: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Embeddings and weight matrices; these are initialized randomly and decayed.
    pub fn is_matrix(&self) -> bool {
        self.rows > 1
    }

    pub fn is_gain(&self) -> bool {
        self.family.ends_with(".g")
    }
}

/// Offsets of one transformer block's tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSlots {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub qkv_w: usize,
    pub qkv_b: usize,
    pub proj_w: usize,
    pub proj_b: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub fc1_w: usize,
    pub fc1_b: usize,
    pub fc2_w: usize,
    pub fc2_b: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    specs: Vec<TensorSpec>,
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub layers: Vec<LayerSlots>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub head_w: usize,
    pub head_b: usize,
    total: usize,
}

struct Builder {
    specs: Vec<TensorSpec>,
    offset: usize,
}

impl Builder {
    fn add(&mut self, name: String, family: &'static str, rows: usize, cols: usize) -> usize {
        let offset = self.offset;
        self.specs.push(TensorSpec {
            name,
            family,
            rows,
            cols,
            offset,
        });
        self.offset += rows * cols;
        offset
    }
}

impl ParamLayout {
    pub fn new(c: &ModelConfig) -> Self {
        let (d, ff, v) = (c.d_model, c.d_ff, c.vocab_size);
        let mut b = Builder {
            specs: Vec::new(),
            offset: 0,
        };
        let tok_emb = b.add("tok_emb".into(), "tok_emb", v, d);
        let pos_emb = b.add("pos_emb".into(), "pos_emb", c.context_len, d);
        let layers = (0..c.n_layers)
            .map(|l| {
                let mut t = |fam: &'static str, r, k| b.add(format!("layers.{l}.{fam}"), fam, r, k);
                LayerSlots {
                    ln1_g: t("ln1.g", 1, d),
                    ln1_b: t("ln1.b", 1, d),
                    qkv_w: t("attn.qkv.w", d, 3 * d),
                    qkv_b: t("attn.qkv.b", 1, 3 * d),
                    proj_w: t("attn.proj.w", d, d),
                    proj_b: t("attn.proj.b", 1, d),
                    ln2_g: t("ln2.g", 1, d),
                    ln2_b: t("ln2.b", 1, d),
                    fc1_w: t("mlp.fc1.w", d, ff),
                    fc1_b: t("mlp.fc1.b", 1, ff),
                    fc2_w: t("mlp.fc2.w", ff, d),
                    fc2_b: t("mlp.fc2.b", 1, d),
                }
            })
            .collect();
        let lnf_g = b.add("lnf.g".into(), "lnf.g", 1, d);
        let lnf_b = b.add("lnf.b".into(), "lnf.b", 1, d);
        let head_w = b.add("head.w".into(), "head.w", d, v);
        let head_b = b.add("head.b".into(), "head.b", 1, v);
        Self {
            specs: b.specs,
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
            total: b.offset,
        }
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Distinct tensor families in layout order.
    pub fn families(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for s in &self.specs {
            if !out.contains(&s.family) {
                out.push(s.family);
            }
        }
        out
    }
}
