mod common;

use common::*;
use waveformer_core::checkpoint::random_init;
use waveformer_core::decoder::{
    decode_chunk, decode_with_previous, embed_query, AttentionWeights, DecoderCache, DecoderWeights,
    QueryEmbedding,
};
use waveformer_core::model::Affine;
use waveformer_core::{MacTally, Model, ModelConfig, QueryVector, Tensor2};

fn decoder(cfg: &ModelConfig, seed: u64) -> DecoderWeights {
    Model::from_tensors(&random_init(cfg, seed).unwrap()).unwrap().decoder
}

fn attend_oracle(queries: &Mat, memory: &Mat, w: &AttentionWeights, heads: usize) -> Mat {
    let q = affine_oracle(queries, &w.q);
    let k = affine_oracle(memory, &w.k);
    let v = affine_oracle(memory, &w.v);
    affine_oracle(&attention_oracle(&q, &k, &v, heads), &w.o)
}

fn project_oracle(e: &Mat, l: &[f32], w: &DecoderWeights) -> (Mat, Mat, Mat) {
    let cond: Mat = e.iter().zip(l).map(|(row, &g)| row.iter().map(|v| v * g as f64).collect()).collect();
    let pe_self = relu_oracle(affine_oracle(&cond, &w.proj_self));
    let pe_cross = relu_oracle(affine_oracle(e, &w.proj_cross));
    (cond, pe_self, pe_cross)
}

/// The decoder dataflow written out once, straight-line, in `f64`.
fn decode_oracle(e: &Tensor2, prev: Option<&Tensor2>, l: &[f32], w: &DecoderWeights) -> Mat {
    let k = e.cols();
    let (cond, pe_self, pe_cross) = project_oracle(&to_mat(e), l, w);
    let (prev_self, prev_cross) = match prev {
        Some(p) => {
            let (_, s, c) = project_oracle(&to_mat(p), l, w);
            (s, c)
        }
        None => (vec![vec![0.0; k]; pe_self.len()], vec![vec![0.0; k]; pe_self.len()]),
    };
    let window = norm_oracle(&concat_mat(&prev_self, &pe_self), &w.norm1);
    let sa = attend_oracle(&last_cols(&window, k), &window, &w.self_attn, w.heads);
    let x = add_mat(&pe_self, &sa);
    let ca = attend_oracle(&norm_oracle(&x, &w.norm2), &concat_mat(&prev_cross, &pe_cross), &w.cross_attn, w.heads);
    let x = add_mat(&x, &ca);
    let h = relu_oracle(affine_oracle(&norm_oracle(&x, &w.norm3), &w.ffn1));
    let pm = add_mat(&x, &affine_oracle(&h, &w.ffn2));
    add_mat(&relu_oracle(affine_oracle(&pm, &w.proj_out)), &cond)
}

fn embedding_oracle(q: &QueryVector, w: &DecoderWeights) -> Vec<f64> {
    let x: Mat = q.bits().iter().map(|&b| vec![if b { 1.0 } else { 0.0 }]).collect();
    let h = relu_oracle(affine_oracle(&x, &w.embed.fc1));
    let h = relu_oracle(affine_oracle(&h, &w.embed.fc2));
    affine_oracle(&h, &w.embed.fc3).into_iter().map(|r| r[0]).collect()
}

#[test]
fn one_hot_class_3_embedding_matches_mlp_oracle() {
    for cfg in [ModelConfig::default(), compact_config()] {
        let w = decoder(&cfg, 5);
        let q = QueryVector::one_hot(cfg.num_classes, 3).unwrap();
        let l = embed_query(&q, &w.embed).unwrap();
        assert_eq!(l.0.len(), cfg.enc_dim);
        let oracle = embedding_oracle(&q, &w);
        let d = l.0.iter().zip(&oracle).map(|(a, b)| (*a as f64 - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-5, "{d}");
    }
}

#[test]
fn embedding_is_zero_for_zero_weights() {
    let mut w = decoder(&compact_config(), 1);
    for a in [&mut w.embed.fc1, &mut w.embed.fc2, &mut w.embed.fc3] {
        a.weight.data_mut().fill(0.0);
        a.bias.fill(0.0);
    }
    let l = embed_query(&QueryVector::multi_hot(41, &[0, 9, 40]).unwrap(), &w.embed).unwrap();
    assert!(l.0.iter().all(|&v| v == 0.0));
}

#[test]
fn decode_matches_dataflow_oracle() {
    for (i, cfg) in [tiny_config(), compact_config()].into_iter().enumerate() {
        for seed in 0..10u64 {
            let w = decoder(&cfg, seed + 100 * i as u64);
            let mut r = rng(seed + 40);
            let e = rand_t2(&mut r, cfg.enc_dim, cfg.chunk_frames, 2.0);
            let prev = rand_t2(&mut r, cfg.enc_dim, cfg.chunk_frames, 2.0);
            let l = rand_vec(&mut r, cfg.enc_dim, 1.5);
            let emb = QueryEmbedding(l.clone());
            let m = decode_with_previous(&e, Some(&prev), &emb, &w).unwrap();
            let d = max_diff(&m, &decode_oracle(&e, Some(&prev), &l, &w));
            assert!(d < 1e-5, "config {i} seed {seed}: {d}");

            let first = decode_with_previous(&e, None, &emb, &w).unwrap();
            let d = max_diff(&first, &decode_oracle(&e, None, &l, &w));
            assert!(d < 1e-5, "first chunk, config {i} seed {seed}: {d}");
        }
    }
}

#[test]
fn cache_starts_as_zero_window() {
    let cfg = tiny_config();
    let w = decoder(&cfg, 2);
    let e = rand_t2(&mut rng(3), cfg.enc_dim, cfg.chunk_frames, 1.0);
    let l = QueryEmbedding(rand_vec(&mut rng(4), cfg.enc_dim, 1.0));
    let mut cache = DecoderCache::zeros(cfg.dec_dim, cfg.chunk_frames);
    let m = decode_chunk(&e, &mut cache, &l, &w, &mut MacTally::new()).unwrap();
    assert_eq!(m, decode_with_previous(&e, None, &l, &w).unwrap());
}

#[test]
fn mask_ignores_chunks_older_than_previous() {
    let cfg = compact_config();
    let w = decoder(&cfg, 8);
    let l = QueryEmbedding(rand_vec(&mut rng(9), cfg.enc_dim, 1.0));
    let k = cfg.chunk_frames;
    let run = |chunks: &[Tensor2]| {
        let mut cache = DecoderCache::zeros(cfg.dec_dim, k);
        let mut tally = MacTally::new();
        chunks.iter().map(|e| decode_chunk(e, &mut cache, &l, &w, &mut tally).unwrap()).last().unwrap()
    };
    let mut r = rng(10);
    let chunks: Vec<Tensor2> = (0..6).map(|_| rand_t2(&mut r, cfg.enc_dim, k, 1.0)).collect();
    let base = run(&chunks);
    for j in 0..4 {
        let mut alt = chunks.clone();
        alt[j] = rand_t2(&mut r, cfg.enc_dim, k, 5.0);
        assert_eq!(run(&alt), base, "chunk {j} leaked into the mask");
    }
    let mut alt = chunks.clone();
    alt[4] = rand_t2(&mut r, cfg.enc_dim, k, 5.0);
    assert_ne!(run(&alt), base, "previous chunk must matter");
}

fn zero(a: &mut Affine) {
    a.weight.data_mut().fill(0.0);
    a.bias.fill(0.0);
}

#[test]
fn zeroed_transformer_leaves_only_the_skip() {
    let cfg = compact_config();
    let mut w = decoder(&cfg, 11);
    zero(&mut w.proj_self);
    zero(&mut w.proj_cross);
    for att in [&mut w.self_attn, &mut w.cross_attn] {
        zero(&mut att.q);
        zero(&mut att.k);
        zero(&mut att.v);
        zero(&mut att.o);
    }
    zero(&mut w.ffn1);
    zero(&mut w.ffn2);
    zero(&mut w.proj_out);
    let mut r = rng(12);
    let e = rand_t2(&mut r, cfg.enc_dim, cfg.chunk_frames, 1.0);
    let l = rand_vec(&mut r, cfg.enc_dim, 1.0);
    let m = decode_with_previous(&e, None, &QueryEmbedding(l.clone()), &w).unwrap();
    let expect = Tensor2::from_fn(e.rows(), e.cols(), |c, t| e.get(c, t) * l[c]);
    assert_eq!(m, expect);
}

#[test]
fn zero_query_and_zero_output_path_give_zero_mask() {
    let cfg = tiny_config();
    let mut w = decoder(&cfg, 13);
    zero(&mut w.proj_out);
    let e = rand_t2(&mut rng(14), cfg.enc_dim, cfg.chunk_frames, 1.0);
    let m = decode_with_previous(&e, None, &QueryEmbedding(vec![0.0; cfg.enc_dim]), &w).unwrap();
    assert!(m.data().iter().all(|&v| v == 0.0));
}

#[test]
fn unit_query_conditions_nothing() {
    let cfg = tiny_config();
    let mut w = decoder(&cfg, 15);
    zero(&mut w.proj_out);
    let e = rand_t2(&mut rng(16), cfg.enc_dim, cfg.chunk_frames, 1.0);
    let m = decode_with_previous(&e, None, &QueryEmbedding(vec![1.0; cfg.enc_dim]), &w).unwrap();
    assert_eq!(m, e);
}

#[test]
fn shape_errors() {
    let cfg = tiny_config();
    let w = decoder(&cfg, 1);
    let l = QueryEmbedding(vec![1.0; cfg.enc_dim]);
    let e = Tensor2::zeros(cfg.enc_dim + 1, cfg.chunk_frames);
    assert!(decode_with_previous(&e, None, &l, &w).is_err());
    let e = Tensor2::zeros(cfg.enc_dim, cfg.chunk_frames);
    let prev = Tensor2::zeros(cfg.enc_dim, cfg.chunk_frames + 1);
    assert!(decode_with_previous(&e, Some(&prev), &l, &w).is_err());
    let mut cache = DecoderCache::zeros(cfg.dec_dim, cfg.chunk_frames + 2);
    assert!(decode_chunk(&e, &mut cache, &l, &w, &mut MacTally::new()).is_err());
    assert!(embed_query(&QueryVector::one_hot(cfg.num_classes + 1, 0).unwrap(), &w.embed).is_err());
}
