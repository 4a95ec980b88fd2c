use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::numerics::{AdamWConfig, Tensor};

const V: usize = 40;
const OGT: usize = 30;
const PAD: usize = 31;

fn config() -> TransformerConfig {
    TransformerConfig {
        ogt_id: Some(OGT),
        pad_id: Some(PAD),
        new_token_start: 28,
        max_seq_len: 32,
        ..TransformerConfig::desk(V)
    }
}

fn model<T: Real>(seed: u64) -> TransformerModel<T> {
    TransformerModel::new(config(), GeomEncoderConfig::desk(64), seed).unwrap()
}

fn cloud<T: Real>(seed: u64) -> Tensor<T> {
    Tensor::randn([12, 3], 0.2, &mut rng::seeded(seed))
}

fn random_tokens(r: &mut rng::Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng::below(r, 28)).collect()
}

#[test]
fn logits_shape_and_purity() {
    let m = model::<f32>(0);
    let t = [1, 2, 3, 4, 5];
    let a = m.forward(&t, None).unwrap();
    assert_eq!(a.dims(), &[5, V]);
    assert_eq!(a, m.forward(&t, None).unwrap());
    assert_eq!(m.last_logits(&t, None).unwrap(), a.row(4));
    let long = vec![1; 33];
    assert_eq!(m.forward(&long, None), Err(Error::Length { len: 33, max: 32 }));
}

#[test]
fn geometry_injection() {
    let m = model::<f64>(1);
    let p = cloud::<f64>(2);
    let f = m.geometry_feature(&p).unwrap();
    let x = m.embed_tokens(&[3, OGT, 4], Some(&f)).unwrap();
    assert_eq!(x.row(1), f.row(0));
    assert_eq!(x.row(0), m.embed.value.row(3));
    let plain = m.embed_tokens(&[3, 4], None).unwrap();
    assert_eq!(plain.row(1), m.embed.value.row(4));
    assert_eq!(m.forward(&[3, OGT], None), Err(Error::Injection { seq: 0 }));

    let t = [5, 6, OGT, 7, 8];
    let a = m.forward(&t, Some(&p)).unwrap();
    let b = m.forward(&t, Some(&cloud(3))).unwrap();
    for i in 0..5 {
        let d: f64 = a.row(i).iter().zip(b.row(i)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if i < 2 {
            assert_eq!(d, 0.0);
        } else {
            assert!(d > 1e-9);
        }
    }
}

#[test]
fn causality() {
    let m = model::<f64>(2);
    let mut r = rng::seeded(5);
    for _ in 0..10 {
        let t = random_tokens(&mut r, 12);
        let base = m.forward(&t, None).unwrap();
        for i in 0..11 {
            let mut u = t.clone();
            for x in u.iter_mut().skip(i + 1) {
                *x = rng::below(&mut r, 28);
            }
            let other = m.forward(&u, None).unwrap();
            for j in 0..=i {
                let d = base.row(j).iter().zip(other.row(j)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(d < 1e-6);
            }
        }
    }
}

#[test]
fn left_padding_preserves_suffix() {
    let m = model::<f64>(3);
    let t = [4, 9, 2, 7, 7, 1];
    let mut padded = vec![PAD, PAD, PAD];
    padded.extend_from_slice(&t);
    let a = m.forward(&t, None).unwrap();
    let b = m.forward(&padded, None).unwrap();
    for i in 0..t.len() {
        let d = a.row(i).iter().zip(b.row(i + 3)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 1e-9, "{d}");
    }
}

/// Plain multi-head attention with one key/value head per query head.
fn naive_mha(q: &Tensor<f64>, k: &Tensor<f64>, v: &Tensor<f64>, heads: usize) -> Tensor<f64> {
    let (s, dk) = (q.rows(), q.cols() / heads);
    let mut out = Tensor::zeros([s, heads * dk]);
    for h in 0..heads {
        for i in 0..s {
            let sc: Vec<f64> = (0..=i)
                .map(|j| (0..dk).map(|c| q.row(i)[h * dk + c] * k.row(j)[h * dk + c]).sum::<f64>() / (dk as f64).sqrt())
                .collect();
            let mx = sc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = sc.iter().map(|x| (x - mx).exp()).sum();
            for j in 0..=i {
                let p = (sc[j] - mx).exp() / z;
                for c in 0..dk {
                    out.row_mut(i)[h * dk + c] += p * v.row(j)[h * dk + c];
                }
            }
        }
    }
    out
}

#[test]
fn gqa_degenerates_to_mha() {
    let mut r = rng::seeded(6);
    for _ in 0..10 {
        let q = Tensor::randn([7, 16], 1.0, &mut r);
        let k = Tensor::randn([7, 16], 1.0, &mut r);
        let v = Tensor::randn([7, 16], 1.0, &mut r);
        let (a, _) = gqa_attention(&q, &k, &v, 4, 4, &[true; 7]);
        assert!(a.max_abs_diff(&naive_mha(&q, &k, &v, 4)) < 1e-6);
    }
}

/// Central differences on a sample of coordinates of every trainable
/// parameter, compared as one vector.
fn sampled_gradient_error(m: &mut TransformerModel<f64>, ex: &LmExample<f64>, per_param: usize) -> f64 {
    m.zero_grad();
    let (_, count) = m.accumulate(ex, 1.0).unwrap();
    let loss = |m: &TransformerModel<f64>| m.score(ex).unwrap().0;
    let mut names = Vec::new();
    m.visit(&mut |p| {
        if p.trainable_len() > 0 {
            names.push((p.name.clone(), p.trainable_start(), p.value.len()));
        }
    });
    let mut r = rng::seeded(99);
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    let h = 1e-5;
    for (name, start, len) in names {
        for _ in 0..per_param {
            let i = start + rng::below(&mut r, len - start);
            let mut g = 0.0;
            m.visit(&mut |p| {
                if p.name == name {
                    g = p.grad.data()[i];
                }
            });
            let probe = |delta: f64, m: &mut TransformerModel<f64>| {
                m.with_param_mut(&name, &mut |p| p.value.data_mut()[i] += delta);
                let l = loss(m);
                m.with_param_mut(&name, &mut |p| p.value.data_mut()[i] -= delta);
                l
            };
            let n = (probe(h, m) - probe(-h, m)) / (2.0 * h);
            analytic.push(g);
            numeric.push(n);
        }
    }
    assert!(count > 0);
    let a = Tensor::new([analytic.len()], analytic).unwrap();
    let b = Tensor::new([numeric.len()], numeric).unwrap();
    assert!(a.norm() > 1e-3);
    relative_error(&a, &b)
}

fn example(r: &mut rng::Rng, with_geom: bool) -> LmExample<f64> {
    let mut tokens = random_tokens(r, 10);
    if with_geom {
        tokens[2] = OGT;
    }
    tokens[6] = 29;
    LmExample {
        mask: (0..10).map(|i| i >= 4).collect(),
        tokens,
        points: with_geom.then(|| cloud(7)),
    }
}

use crate::numerics::relative_error;

#[test]
fn full_model_gradient_check() {
    let mut r = rng::seeded(7);
    let mut m = model::<f64>(4);
    let ex = example(&mut r, true);
    let e = sampled_gradient_error(&mut m, &ex, 6);
    assert!(e < 1e-3, "{e}");

    let mut ln = TransformerModel::<f64>::new(
        TransformerConfig {
            norm: NormKind::Layer,
            ffn: FfnKind::Gelu,
            ..config()
        },
        GeomEncoderConfig::desk(64),
        5,
    )
    .unwrap();
    let e = sampled_gradient_error(&mut ln, &example(&mut r, false), 6);
    assert!(e < 1e-3, "{e}");
}

#[test]
fn adapter_gradient_check() {
    let mut r = rng::seeded(8);
    let mut m = model::<f64>(6);
    m.attach_lora(&LORA_TARGETS, 4, 2.0, 1).unwrap();
    m.visit_mut(&mut |p| {
        if p.name.ends_with("lora_b") {
            p.value = Tensor::randn(p.value.dims().to_vec(), 0.1, &mut rng::seeded(p.name.len() as u64));
        }
    });
    let e = sampled_gradient_error(&mut m, &example(&mut r, true), 6);
    assert!(e < 1e-3, "{e}");
}

#[test]
fn lora_zero_init_and_merge() {
    let base = model::<f64>(9);
    let t = [1, 5, 9, 13, 17, 21];
    let before = base.forward(&t, None).unwrap();
    let mut m = base.clone();
    m.attach_lora(&LORA_TARGETS, 4, 2.0, 3).unwrap();
    assert!(m.has_adapters());
    assert_eq!(m.forward(&t, None).unwrap(), before);

    m.visit_mut(&mut |p| {
        if p.name.contains("lora") {
            p.value = Tensor::randn(p.value.dims().to_vec(), 0.2, &mut rng::seeded(p.name.len() as u64 + 1));
        }
    });
    let attached = m.forward(&t, None).unwrap();
    assert!(attached.max_abs_diff(&before) > 1e-6);
    let mut merged = m.clone();
    merged.merge_lora();
    assert!(!merged.has_adapters());
    assert!(merged.forward(&t, None).unwrap().max_abs_diff(&attached) < 1e-5);

    // a second round composes additively on the merged weights
    merged.attach_lora(&["attn.q", "ffn.down"], 2, 1.0, 4).unwrap();
    merged.merge_lora();
    assert!(merged.forward(&t, None).unwrap().max_abs_diff(&attached) < 1e-12);
}

#[test]
fn lora_trainable_set() {
    let mut m = model::<f32>(10);
    assert_eq!(m.attach_lora(&["attn.x"], 4, 2.0, 0), Err(Error::UnknownTarget("attn.x".into())));
    m.attach_lora(&LORA_TARGETS, 4, 2.0, 0).unwrap();
    let names = m.trainable_names();
    assert!(names.iter().all(|n| n.contains("lora") || n.starts_with("geom.") || n == "embed.weight" || n == "lm_head.weight"));
    assert!(names.contains(&"layers.1.ffn.gate.lora_b".into()));
    assert_eq!(m.embed.trainable, Trainable::RowsFrom(28));
    let mut gelu = TransformerModel::<f32>::new(
        TransformerConfig { ffn: FfnKind::Gelu, ..config() },
        GeomEncoderConfig::desk(64),
        0,
    )
    .unwrap();
    assert!(gelu.attach_lora(&["ffn.gate"], 4, 2.0, 0).is_err());
}

#[test]
fn overfit_one_batch_descends() {
    let mut m = model::<f32>(11);
    let mut r = rng::seeded(12);
    let batch: Vec<LmExample<f32>> = (0..4)
        .map(|_| {
            let t = random_tokens(&mut r, 8);
            LmExample {
                mask: (0..8).map(|i| i >= 3).collect(),
                tokens: t,
                points: None,
            }
        })
        .collect();
    let mut opt = AdamW::new(AdamWConfig { lr: 3e-3, ..Default::default() });
    let first = m.train_step(&batch, &mut opt).unwrap();
    let mut last = first;
    for _ in 0..49 {
        last = m.train_step(&batch, &mut opt).unwrap();
    }
    assert!(last < 0.5 * first, "{first} -> {last}");
    let empty = [LmExample { tokens: vec![1, 2], mask: vec![true, false], points: None }];
    assert_eq!(m.train_step(&empty, &mut opt), Err(Error::DegenerateBatch));
}

#[test]
fn generation_rules() {
    let m = model::<f32>(13);
    let src = [1, 2, 3];
    let greedy = DecodeParams { max_new: 6, ..Default::default() };
    let out = m.generate(&src, None, &greedy, 0).unwrap();
    let mut seq = src.to_vec();
    for &t in &out {
        let l = m.last_logits(&seq, None).unwrap();
        assert_eq!(t, sample_next(&l, 0.0, 0, &mut rng::seeded(0)));
        seq.push(t);
    }
    assert_eq!(out.len(), 6);

    let first = out[0];
    let stop = DecodeParams { stop: vec![first], ..greedy.clone() };
    assert_eq!(m.generate(&src, None, &stop, 0).unwrap(), vec![first]);

    let hot = DecodeParams { temperature: 1.0, top_k: 10, max_new: 10, stop: vec![] };
    assert_eq!(m.generate(&src, None, &hot, 42).unwrap(), m.generate(&src, None, &hot, 42).unwrap());
}
