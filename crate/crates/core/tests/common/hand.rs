use exlens::model::weights::names;
use exlens::model::{ModelConfig, Tensor, Vocabulary, WeightSet};

/// One layer, one head, `d_model = 2`, vocabulary of five specials plus one
/// word. Input `[CLS] [SEP]` has ids `[2, 3]`.
pub fn hand_model() -> (ModelConfig, WeightSet, Vocabulary) {
    let vocab =
        Vocabulary::from_tokens(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a"]).unwrap();
    let config = ModelConfig {
        num_layers: 1,
        num_heads: 1,
        d_model: 2,
        d_head: 2,
        vocab_size: 6,
        max_positions: 4,
        ffn_dim: 2,
        layernorm_eps: 1e-12,
        lowercase: false,
    };
    let mut w = WeightSet::random(&config, 0, 0.1);
    let mut set = |name: String, shape: Vec<usize>, data: Vec<f32>| {
        w.insert(name, Tensor::new(shape, data).unwrap());
    };
    set(
        names::WORD_EMBEDDINGS.into(),
        vec![6, 2],
        vec![
            0.0, 0.0, 0.1, 0.2, 0.5, -0.3, -0.2, 0.4, 0.3, 0.3, 1.0, -1.0,
        ],
    );
    set(
        names::POSITION_EMBEDDINGS.into(),
        vec![4, 2],
        vec![0.1, 0.0, 0.0, 0.2, -0.1, 0.1, 0.2, -0.2],
    );
    set(names::EMBEDDING_NORM_WEIGHT.into(), vec![2], vec![1.5, 0.5]);
    set(names::EMBEDDING_NORM_BIAS.into(), vec![2], vec![0.1, -0.2]);
    let l = |s: &str| names::layer(0, s);
    let m = |a: f32, b: f32, c: f32, d: f32| vec![a, b, c, d];
    set(
        l("attention.self.query.weight"),
        vec![2, 2],
        m(0.6, -0.4, 0.3, 0.9),
    );
    set(l("attention.self.query.bias"), vec![2], vec![0.05, -0.05]);
    set(
        l("attention.self.key.weight"),
        vec![2, 2],
        m(-0.2, 0.7, 0.8, 0.1),
    );
    set(l("attention.self.key.bias"), vec![2], vec![0.0, 0.1]);
    set(
        l("attention.self.value.weight"),
        vec![2, 2],
        m(1.1, 0.2, -0.5, 0.4),
    );
    set(l("attention.self.value.bias"), vec![2], vec![0.2, 0.0]);
    set(
        l("attention.output.dense.weight"),
        vec![2, 2],
        m(0.9, -0.3, 0.4, 0.6),
    );
    set(l("attention.output.dense.bias"), vec![2], vec![-0.1, 0.05]);
    set(
        l("attention.output.LayerNorm.weight"),
        vec![2],
        vec![0.8, 1.2],
    );
    set(
        l("attention.output.LayerNorm.bias"),
        vec![2],
        vec![0.0, 0.3],
    );
    set(
        l("intermediate.dense.weight"),
        vec![2, 2],
        m(0.5, -0.6, 0.7, 0.2),
    );
    set(l("intermediate.dense.bias"), vec![2], vec![0.1, -0.1]);
    set(l("output.dense.weight"), vec![2, 2], m(1.0, 0.3, -0.4, 0.8));
    set(l("output.dense.bias"), vec![2], vec![0.0, 0.2]);
    set(l("output.LayerNorm.weight"), vec![2], vec![1.1, 0.9]);
    set(l("output.LayerNorm.bias"), vec![2], vec![-0.05, 0.05]);
    (config, w, vocab)
}

// Frozen from an independent scalar computation of the hand model on
// [CLS] [SEP].
pub const HAND_ATTENTION: [[f64; 2]; 2] = [
    [0.06545349515396749, 0.9345465048460325],
    [0.8576675730859902, 0.1423324269140098],
];
pub const HAND_CONTEXT: [[f64; 2]; 2] = [
    [-1.2412767184096818, -0.14690930096893062],
    [1.7691367777235845, 0.011533514617030824],
];
pub const HAND_HIDDEN: [[f64; 2]; 2] = [
    [1.0499999999992047, -0.8499999999993492],
    [1.0499999999992047, -0.8499999999993493],
];
