//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::time::{Duration, Instant};

use hoi::checkpoint::{load_lm, load_tokenizer};
use hoi::commands::{fit_length, gen_data, train_lm, train_tokenizer, Ctx, MotionKind};
use hoi::config::RunConfig;
use hoi::dataset::{load_dataset, read_vocab};
use hoi_core::data::{
    canonical_object_motion, generate_synthetic_dataset, make_pointcloud, rotate, transform_points, HumanMotion, JointLayout,
    ObjectMotion, ShapeTag, Template, TemplateSet,
};
use hoi_core::geom::{points_tensor, GeomEncoder, GeomEncoderConfig};
use hoi_core::lm::{
    gqa_attention, Block, DecodeParams, LmExample, Rope, TransformerConfig, TransformerModel, LORA_TARGETS,
};
use hoi_core::metrics::{chamfer, contact_flags, contact_metrics, e_c, e_v2v, frechet_distance, joint_errors, ContactStats};
use hoi_core::numerics::{finite_diff_grad, relative_error, rng, AdamWConfig, Conv1d, GroupNorm, Linear, Module, Tensor};
use hoi_core::tasks::{assemble, default_words, disassemble, sample_task, stage2_train, Conditions, StageConfig, Task, TokenizedSample};
use hoi_core::vocab::{Special, UnifiedVocab};
use hoi_core::vqvae::{probe_utilization, r_squared, Codebook, MotionTokenizer, TokenizerConfig, Trainer};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

// ------------------------------------------------------------ 1 gradients

/// Relative error of the analytic gradient of every parameter of `m`
/// against central differences of `probe`.
fn param_errors<M: Module<f64> + Clone>(m: &M, probe: impl Fn(&M) -> f64) -> Vec<(String, f64)> {
    let mut params = Vec::new();
    m.visit(&mut |p| params.push((p.name.clone(), p.value.clone(), p.grad.clone())));
    params
        .into_iter()
        .map(|(name, value, grad)| {
            let numeric = finite_diff_grad(
                |w| {
                    let mut m2 = m.clone();
                    m2.with_param_mut(&name, &mut |p| p.value = w.clone());
                    probe(&m2)
                },
                &value,
                1e-5,
            )
            .unwrap();
            let e = relative_error(&grad, &numeric);
            (name, e)
        })
        .collect()
}

fn worst(errs: &[(String, f64)]) -> (String, f64) {
    errs.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a })
}

fn gradient_suite() -> Outcome {
    let r = &mut rng::seeded(101);
    let mut report: Vec<(String, f64)> = Vec::new();
    let mut check = |what: &str, errs: Vec<(String, f64)>, tol: f64| -> Result<(), String> {
        let (name, e) = worst(&errs);
        match report.iter_mut().find(|(w, _)| w == what) {
            Some(slot) => slot.1 = slot.1.max(e),
            None => report.push((what.to_string(), e)),
        }
        ensure(e < tol, || format!("{what}: {name} relative error {e:.3e} >= {tol:e}"))
    };

    for _ in 0..5 {
        let mut conv = Conv1d::<f64>::new("conv", 3, 4, 3, 2, 1, r);
        conv.bias.value = Tensor::randn([4], 0.5, r);
        let x = Tensor::randn([9, 3], 1.0, r);
        let y = conv.forward(&x).unwrap();
        let head = Tensor::randn(y.dims().to_vec(), 1.0, r);
        let gx = conv.backward(&x, &head).unwrap();
        let nx = finite_diff_grad(|x| dot(&conv.forward(x).unwrap(), &head), &x, 1e-5).unwrap();
        let mut errs = vec![("input".to_string(), relative_error(&gx, &nx))];
        errs.extend(param_errors(&conv, |c| dot(&c.forward(&x).unwrap(), &head)));
        check("conv1d", errs, 1e-4)?;

        let mut gn = GroupNorm::<f64>::new("gn", 5);
        gn.gamma.value = Tensor::randn([5], 1.0, r);
        gn.beta.value = Tensor::randn([5], 1.0, r);
        let x = Tensor::randn([6, 5], 1.0, r);
        let (_, cache) = gn.forward(&x).unwrap();
        let head = Tensor::randn([6, 5], 1.0, r);
        let gx = gn.backward(&cache, &head).unwrap();
        let nx = finite_diff_grad(|x| dot(&gn.forward(x).unwrap().0, &head), &x, 1e-5).unwrap();
        let mut errs = vec![("input".to_string(), relative_error(&gx, &nx))];
        errs.extend(param_errors(&gn, |g| dot(&g.forward(&x).unwrap().0, &head)));
        check("groupnorm1", errs, 1e-4)?;

        let mut lin = Linear::<f64>::new("lin", 4, 3, true, 0.5, r);
        lin.bias.as_mut().unwrap().value = Tensor::randn([3], 0.5, r);
        let x = Tensor::randn([5, 4], 1.0, r);
        let head = Tensor::randn([5, 3], 1.0, r);
        let gx = lin.backward(&x, &head);
        let nx = finite_diff_grad(|x| dot(&lin.forward(x), &head), &x, 1e-5).unwrap();
        let mut errs = vec![("input".to_string(), relative_error(&gx, &nx))];
        errs.extend(param_errors(&lin, |l| dot(&l.forward(&x), &head)));
        check("linear", errs, 1e-4)?;
    }

    let small = TransformerConfig {
        d_model: 8,
        n_q_heads: 2,
        n_kv_heads: 1,
        d_kv: 4,
        d_ff: 12,
        ..TransformerConfig::desk(16)
    };
    for _ in 0..3 {
        let mut block = Block::<f64>::new(0, &small, r);
        block.visit_mut(&mut |p| {
            if p.name.contains("norm") {
                p.value = Tensor::randn(p.value.dims().to_vec(), 0.5, &mut rng::seeded(p.name.len() as u64));
                p.value.data_mut().iter_mut().for_each(|v| *v += 1.0);
            }
        });
        let rope = Rope::<f64>::new(small.d_kv, 16, small.rope_base);
        let valid = [true, false, true, true, true];
        let x = Tensor::randn([5, 8], 1.0, r);
        let head = Tensor::randn([5, 8], 1.0, r);
        let (_, cache) = block.forward(&x, &rope, &valid);
        let gx = block.backward(&cache, &rope, &head).unwrap();
        let probe = |b: &Block<f64>| dot(&b.forward(&x, &rope, &valid).0, &head);
        let nx = finite_diff_grad(|x| dot(&block.forward(x, &rope, &valid).0, &head), &x, 1e-5).unwrap();
        let mut errs = vec![("input".to_string(), relative_error(&gx, &nx))];
        errs.extend(param_errors(&block, probe));
        check("attention block", errs, 1e-4)?;
    }

    let gcfg = GeomEncoderConfig {
        conv_widths: vec![4, 5, 6],
        mlp_hidden: vec![5, 4],
        d_model: 3,
    };
    for _ in 0..3 {
        let mut enc = GeomEncoder::<f64>::new(gcfg.clone(), r);
        enc.visit_mut(&mut |p| {
            if p.name.contains("norm") {
                p.value = Tensor::randn(p.value.dims().to_vec(), 0.5, &mut rng::seeded(p.name.len() as u64));
            }
        });
        let x = Tensor::<f64>::randn([7, 3], 1.0, r);
        let head = Tensor::<f64>::randn([1, 3], 1.0, r);
        let (_, cache) = enc.forward(&x).unwrap();
        enc.backward(&cache, &head).unwrap();
        check("geometry encoder", param_errors(&enc, |e| dot(&e.encode(&x).unwrap(), &head)), 1e-4)?;
    }

    // Full two-layer LM: sampled coordinates of every parameter as one vector.
    let (v, ogt) = (40, 30);
    let cfg = TransformerConfig {
        ogt_id: Some(ogt),
        pad_id: Some(31),
        new_token_start: 28,
        max_seq_len: 32,
        ..TransformerConfig::desk(v)
    };
    let mut m = TransformerModel::<f64>::new(cfg, GeomEncoderConfig::desk(64), 4).unwrap();
    let mut tokens: Vec<usize> = (0..10).map(|_| rng::below(r, 28)).collect();
    tokens[2] = ogt;
    tokens[6] = 29;
    let ex = LmExample {
        mask: (0..10).map(|i| i >= 4).collect(),
        tokens,
        points: Some(Tensor::randn([12, 3], 0.2, r)),
    };
    m.zero_grad();
    m.accumulate(&ex, 1.0).unwrap();
    let mut coords = Vec::new();
    m.visit(&mut |p| {
        for _ in 0..4 {
            coords.push((p.name.clone(), rng::below(r, p.value.len()), p.grad.data()[0]));
        }
    });
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for (name, i, _) in &coords {
        let mut g = 0.0;
        m.visit(&mut |p| {
            if &p.name == name {
                g = p.grad.data()[*i];
            }
        });
        let mut at = |delta: f64| {
            m.with_param_mut(name, &mut |p| p.value.data_mut()[*i] += delta);
            let l = m.score(&ex).unwrap().0;
            m.with_param_mut(name, &mut |p| p.value.data_mut()[*i] -= delta);
            l
        };
        let h = 1e-5;
        numeric.push((at(h) - at(-h)) / (2.0 * h));
        analytic.push(g);
    }
    let e = relative_error(&Tensor::new([analytic.len()], analytic).unwrap(), &Tensor::new([numeric.len()], numeric).unwrap());
    ensure(e < 1e-3, || format!("full LM relative error {e:.3e} >= 1e-3"))?;
    report.push(("full LM".into(), e));
    Ok(report.iter().map(|(w, e)| format!("{w} {e:.1e}")).collect::<Vec<_>>().join(", "))
}

// ------------------------------------------------------------ 2 quantizer

fn quantizer_oracle() -> Outcome {
    let r = &mut rng::seeded(202);
    let mut checked = 0;
    for c in 0..10 {
        let (k, d) = (8 + 7 * c, 2 + c % 5);
        let cb = Codebook::<f64>::new(k, d, 1.0, r);
        let z = Tensor::<f64>::randn([100, d], 1.2, r);
        let (q, idx) = cb.quantize(&z);
        for i in 0..100 {
            let dist = |j: usize| -> f64 { (0..d).map(|c| (z.row(i)[c] - cb.entries.value.row(j)[c]).powi(2)).sum() };
            let best = (1..k).fold(0, |b, j| if dist(j) < dist(b) { j } else { b });
            ensure(idx[i] == best, || format!("codebook {c} latent {i}: got {} want {best}", idx[i]))?;
            ensure(q.row(i) == cb.entries.value.row(best), || format!("codebook {c} latent {i}: wrong vector"))?;
            checked += 1;
        }
    }
    // exact ties go to the lowest index
    let mut cb = Codebook::<f64>::new(6, 3, 1.0, r);
    let e2 = cb.entries.value.row(2).to_vec();
    cb.entries.value.row_mut(4).copy_from_slice(&e2);
    let (_, idx) = cb.quantize(&Tensor::new([1, 3], e2).unwrap());
    ensure(idx == [2], || format!("tie resolved to {idx:?}"))?;
    Ok(format!("{checked} latents over 10 codebooks match exhaustive search, tie -> lowest index"))
}

// ------------------------------------------------------------ 3 tokenizer

fn tokenizer_training() -> Outcome {
    let frames = |seed, n| -> Vec<Tensor<f32>> {
        generate_synthetic_dataset(seed, n, 32, 32, &TemplateSet::all())
            .unwrap()
            .into_iter()
            .map(|s| s.human.frames)
            .collect()
    };
    let (train, held) = (frames(301, 200), frames(302, 50));
    let run = |reset: bool| -> Result<(f64, f64), String> {
        let cfg = TokenizerConfig {
            reset,
            ..TokenizerConfig::human_desk()
        };
        if (cfg.codebook_size, cfg.code_dim) != (64, 32) {
            return Err(format!("desk codebook is {}x{}", cfg.codebook_size, cfg.code_dim));
        }
        let mut tok = MotionTokenizer::<f32>::new(cfg, 7).map_err(|e| e.to_string())?;
        tok.fit_normalization(&train);
        let mut t = Trainer::new(tok, AdamWConfig { lr: 2e-4, ..Default::default() }, 16, 7);
        t.train(&train, 30).map_err(|e| e.to_string())?;
        let r2 = r_squared(&t.tokenizer, &held).map_err(|e| e.to_string())?;
        let util = probe_utilization(&t.tokenizer, &train).map_err(|e| e.to_string())?;
        Ok((r2, util))
    };
    let (r2, util) = run(true)?;
    let (r2_nr, util_nr) = run(false)?;
    let detail = format!("held-out R2 {r2:.3}, utilization {util:.3} (no reset: R2 {r2_nr:.3}, utilization {util_nr:.3})");
    ensure(r2 > 0.9, || format!("R2 too low: {detail}"))?;
    ensure(util >= 0.5 && util > util_nr, || format!("utilization: {detail}"))?;
    Ok(detail)
}

// ------------------------------------------------------------ 4 vocabulary

fn desk_vocab() -> UnifiedVocab {
    let h = TokenizerConfig::human_desk();
    let o = TokenizerConfig::object_desk();
    UnifiedVocab::build(&default_words(), h.codebook_size, o.codebook_size).unwrap()
}

/// Samples with random code indices so the round trip sees varied codes.
fn random_code_samples(vocab: &UnifiedVocab, seed: u64, n: usize, frames: usize, templates: &TemplateSet) -> Vec<TokenizedSample> {
    let ht = MotionTokenizer::<f32>::new(TokenizerConfig::human_desk(), 1).unwrap();
    let ot = MotionTokenizer::<f32>::new(TokenizerConfig::object_desk(), 2).unwrap();
    let r = &mut rng::seeded(seed ^ 0xC0DE);
    generate_synthetic_dataset(seed, n, frames, 32, templates)
        .unwrap()
        .iter()
        .map(|s| {
            let mut t = TokenizedSample::from_sample(s, &ht, &ot, vocab).unwrap();
            t.human.indices.iter_mut().for_each(|i| *i = rng::below(r, vocab.human_size()));
            t.object.indices.iter_mut().for_each(|i| *i = rng::below(r, vocab.object_size()));
            t
        })
        .collect()
}

fn vocabulary_round_trip() -> Outcome {
    let v = desk_vocab();
    for id in 0..v.total() {
        let k = v.classify(id).map_err(|e| e.to_string())?;
        ensure(v.compose(k) == Ok(id), || format!("compose(classify({id})) != {id}"))?;
    }
    ensure(v.classify(v.total()).is_err(), || "id past the end classified".into())?;
    let ogt = v.special(Special::Ogt);
    let samples = random_code_samples(&v, 401, 100, 32, &TemplateSet::all());
    let mut n = 0;
    for s in &samples {
        for t in Task::ALL {
            let ex = assemble(s, t, &v).map_err(|e| e.to_string())?;
            ensure(ex.source.iter().filter(|&&x| x == ogt).count() == 1, || "OGT count".into())?;
            let (c, g) = disassemble(&ex, &v).map_err(|e| e.to_string())?;
            let got = [c.caption.or(g.caption), c.human.or(g.human), c.object.or(g.object)];
            let want = [s.caption.clone(), s.human.indices.clone(), s.object.indices.clone()];
            for (m, (a, b)) in got.into_iter().zip(want).enumerate() {
                ensure(a.as_ref() == Some(&b), || format!("{} sample {} modality {m} differs", t.name(), s.id))?;
            }
            let lm: LmExample<f32> = ex.to_lm(s.points.as_ref());
            ensure(lm.mask.iter().enumerate().all(|(i, &m)| m == (i >= ex.source.len())), || "mask covers source".into())?;
            n += 1;
        }
    }
    Ok(format!("{} ids exhaustive, {n} assemble/disassemble round trips exact", v.total()))
}

// ------------------------------------------------------------ 5 geometry

fn geometry_encoder() -> Outcome {
    let r = &mut rng::seeded(501);
    let enc = GeomEncoder::<f32>::new(GeomEncoderConfig::desk(64), r);
    let x = points_tensor(&make_pointcloud(ShapeTag::Cylinder, 64, 3, [0.1, 0.2, 0.15]).points).unwrap();
    let y = enc.encode(&x).unwrap();
    let mut max = 0.0f32;
    for _ in 0..50 {
        let mut order: Vec<usize> = (0..64).collect();
        rng::shuffle(r, &mut order);
        let p = Tensor::from_fn([64, 3], |i| x.row(order[i / 3])[i % 3]);
        max = max.max(enc.encode(&p).unwrap().max_abs_diff(&y));
    }
    let count = GeomEncoderConfig::paper().param_count();
    let rel = (count as f64 - 24e6).abs() / 24e6;
    let desk = GeomEncoderConfig::desk(64);
    let built = GeomEncoder::<f32>::new(desk.clone(), r).param_count();
    let detail = format!("max permutation deviation {max:.1e}, full-scale parameters {count} ({:.1}% from 24M)", 100.0 * rel);
    ensure(max < 1e-5, || detail.clone())?;
    ensure(rel <= 0.2, || detail.clone())?;
    ensure(built == desk.param_count(), || format!("formula {} vs built {built}", desk.param_count()))?;
    Ok(detail)
}

// ------------------------------------------------------------ 6 LM structure

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
            for (j, s) in sc.iter().enumerate() {
                let p = (s - mx).exp() / z;
                for c in 0..dk {
                    out.row_mut(i)[h * dk + c] += p * v.row(j)[h * dk + c];
                }
            }
        }
    }
    out
}

fn lm_structure() -> Outcome {
    let r = &mut rng::seeded(601);
    let cfg = TransformerConfig {
        max_seq_len: 32,
        ..TransformerConfig::desk(40)
    };
    let m = TransformerModel::<f64>::new(cfg, GeomEncoderConfig::desk(64), 1).unwrap();
    let mut causal = 0.0f64;
    for _ in 0..10 {
        let t: Vec<usize> = (0..12).map(|_| rng::below(r, 40)).collect();
        let base = m.forward(&t, None).unwrap();
        for i in 0..11 {
            let mut u = t.clone();
            u.iter_mut().skip(i + 1).for_each(|x| *x = rng::below(r, 40));
            let other = m.forward(&u, None).unwrap();
            for j in 0..=i {
                causal = base.row(j).iter().zip(other.row(j)).map(|(a, b)| (a - b).abs()).fold(causal, f64::max);
            }
        }
    }
    ensure(causal < 1e-6, || format!("prefix logits moved by {causal:e}"))?;

    let mut gqa = 0.0f64;
    for _ in 0..10 {
        let q = Tensor::randn([7, 16], 1.0, r);
        let k = Tensor::randn([7, 16], 1.0, r);
        let v = Tensor::randn([7, 16], 1.0, r);
        let (a, _) = gqa_attention(&q, &k, &v, 4, 4, &[true; 7]);
        gqa = gqa.max(a.max_abs_diff(&naive_mha(&q, &k, &v, 4)));
    }
    ensure(gqa < 1e-6, || format!("GQA with H_kv = H_q differs from MHA by {gqa:e}"))?;

    let t = [1, 5, 9, 13, 17, 21];
    let before = m.forward(&t, None).unwrap();
    let mut ad = m.clone();
    ad.attach_lora(&LORA_TARGETS, 4, 2.0, 3).map_err(|e| e.to_string())?;
    ensure(ad.forward(&t, None).unwrap() == before, || "zero-initialized adapters changed the logits".into())?;
    ad.visit_mut(&mut |p| {
        if p.name.contains("lora") {
            p.value = Tensor::randn(p.value.dims().to_vec(), 0.2, &mut rng::seeded(p.name.len() as u64 + 1));
        }
    });
    let attached = ad.forward(&t, None).unwrap();
    let mut merged = ad.clone();
    merged.merge_lora();
    let merge = merged.forward(&t, None).unwrap().max_abs_diff(&attached);
    ensure(merge < 1e-5 && attached.max_abs_diff(&before) > 1e-6, || format!("merge deviation {merge:e}"))?;
    Ok(format!("causality {causal:.1e}, GQA vs MHA {gqa:.1e}, zero-init bit-exact, merge {merge:.1e}"))
}

// ------------------------------------------------------------ 7 overfit probe

fn overfit_probe() -> Outcome {
    let vocab = desk_vocab();
    let hcfg = TokenizerConfig::human_desk();
    let ht = MotionTokenizer::<f32>::new(hcfg.clone(), 1).unwrap();
    let ot = MotionTokenizer::<f32>::new(TokenizerConfig::object_desk(), 2).unwrap();
    let all = Template::all();
    let picks: Vec<Template> = (0..8).map(|i| all[i * 8 + 1]).collect();
    let data: Vec<TokenizedSample> = picks
        .iter()
        .enumerate()
        .flat_map(|(i, &t)| random_code_samples(&vocab, 77 + i as u64, 1, 32, &TemplateSet::only(vec![t])))
        .collect();
    let captions: std::collections::BTreeSet<&Vec<usize>> = data.iter().map(|s| &s.caption).collect();
    ensure(captions.len() == 8, || "probe captions are not distinct".into())?;

    let cfg = TransformerConfig::desk(0).for_vocab(&vocab);
    let mut model = TransformerModel::<f32>::new(cfg.clone(), GeomEncoderConfig::desk(cfg.d_model), 7).unwrap();
    let stage = StageConfig {
        epochs: 75,
        batch_size: 2,
        lr: 2e-2,
        ..StageConfig::stage1()
    };
    let log = stage2_train(&mut model, &data, &vocab, Task::T2hoi, &stage, 3, &mut |_| {}).map_err(|e| e.to_string())?;
    let last: Vec<f64> = log.iter().filter(|s| s.epoch + 1 == stage.epochs).map(|s| s.loss).collect();
    let tail = last.iter().sum::<f64>() / last.len() as f64;
    ensure(log.len() <= 300, || format!("{} steps", log.len()))?;
    ensure(tail < 0.1, || format!("final-epoch loss {tail:.4} after {} steps", log.len()))?;

    let mut exact = 0;
    for s in &data {
        let cond = Conditions {
            caption: Some(s.caption.clone()),
            points: s.points.clone(),
            ..Default::default()
        };
        let g = sample_task(&model, &ht, &ot, &vocab, Task::T2hoi, &cond, &DecodeParams::default(), 0, false)
            .map_err(|e| format!("{}: {e}", s.id))?;
        let g2 = sample_task(&model, &ht, &ot, &vocab, Task::T2hoi, &cond, &DecodeParams::default(), 99, false).map_err(|e| e.to_string())?;
        ensure(g.tokens == g2.tokens, || "greedy decoding depends on the seed".into())?;
        let h = g.human.as_ref().unwrap();
        ensure(h.cols() == hcfg.input_dim && h.rows() % (1 << hcfg.downsample) == 0, || format!("decoded shape {:?}", h.dims()))?;
        if g.parsed.human.as_ref() == Some(&s.human.indices) && g.parsed.object.as_ref() == Some(&s.object.indices) {
            exact += 1;
        }
    }
    ensure(exact == 8, || format!("{exact}/8 sequences reproduced exactly"))?;
    Ok(format!("{} steps, final-epoch loss {tail:.4}, 8/8 motion token sequences reproduced", log.len()))
}

// ------------------------------------------------- 8 and 9 end to end

struct Pipeline {
    _dir: tempfile::TempDir,
    ctx: Ctx,
    paired: Vec<(Task, f64, f64)>,
    elapsed: Duration,
}

fn pipeline() -> Result<Pipeline, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = RunConfig {
        name: "acceptance".into(),
        ..RunConfig::default()
    };
    cfg.data.n = 500;
    let ctx = Ctx::with_config(cfg, dir.path()).map_err(|e| e.to_string())?;
    let err = |e: hoi::HoiError| e.line();
    gen_data(&ctx, true).map_err(err)?;
    train_tokenizer::<f32>(&ctx, MotionKind::Human, false).map_err(err)?;
    train_tokenizer::<f32>(&ctx, MotionKind::Object, false).map_err(err)?;
    train_lm::<f32>(&ctx, 1, None).map_err(err)?;
    let mut paired = Vec::new();
    for task in [Task::T2hoi, Task::To2h, Task::H2to] {
        let o = train_lm::<f32>(&ctx, 2, Some(task)).map_err(err)?;
        let r = o.stage2.expect("stage 2 reports losses");
        paired.push((task, r.before, r.after));
    }
    Ok(Pipeline {
        _dir: dir,
        ctx,
        paired,
        elapsed: start.elapsed(),
    })
}

fn conditional_learning(p: &Pipeline) -> Outcome {
    let ctx = &p.ctx;
    let vocab = read_vocab(&ctx.run.vocab()).map_err(|e| e.line())?;
    let (ht, _) = load_tokenizer::<f32>(&ctx.run.tokenizer("human")).map_err(|e| e.line())?;
    let (ot, _) = load_tokenizer::<f32>(&ctx.run.tokenizer("object")).map_err(|e| e.line())?;
    let (model, _) = load_lm::<f32>(&ctx.run.lm(2, Some("t2hoi")), &vocab).map_err(|e| e.line())?;
    let test = load_dataset(&ctx.run.test_manifest()).map_err(|e| e.line())?;
    let layout = JointLayout::synthetic();
    let n = test.len();
    let threshold = ctx.cfg.eval.contact_threshold;
    let (mut agree, mut failed) = (0usize, 0usize);
    let (mut ec, mut ec_shuffled) = (Vec::new(), Vec::new());
    for (i, s) in test.iter().enumerate() {
        let tmpl = s.template.ok_or("test sample without template")?;
        let canon = canonical_object_motion(&tmpl, s.len());
        let points = points_tensor(&s.points.points).map_err(|e| e.to_string())?;
        for shuffled in [false, true] {
            let caption = if shuffled { &test[(i + n / 2) % n].caption } else { &s.caption };
            let cond = Conditions {
                caption: Some(vocab.encode_caption(caption)),
                points: Some(points.clone()),
                ..Default::default()
            };
            let Ok(g) = sample_task(&model, &ht, &ot, &vocab, Task::T2hoi, &cond, &ctx.cfg.decode, i as u64, false) else {
                failed += usize::from(!shuffled);
                continue;
            };
            let object = ObjectMotion::new(fit_length(g.object.as_ref().unwrap(), s.len())).map_err(|e| e.to_string())?;
            let e = e_c(&object.poses(), &canon.poses()).map_err(|e| e.to_string())?;
            if shuffled {
                ec_shuffled.push(e);
                continue;
            }
            ec.push(e);
            let human = HumanMotion::new(fit_length(g.human.as_ref().unwrap(), s.len()), layout).map_err(|e| e.to_string())?;
            let world: Vec<Vec<[f32; 3]>> = object.poses().iter().map(|p| transform_points(&s.points.points, p)).collect();
            let flags = contact_flags(&human.hands(), &world, threshold).map_err(|e| e.to_string())?;
            if flags.iter().any(|&f| f) == tmpl.verb.has_contact() {
                agree += 1;
            }
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::INFINITY } else { v.iter().sum::<f64>() / v.len() as f64 };
    let rate = agree as f64 / n as f64;
    let (a, b) = (mean(&ec), mean(&ec_shuffled));
    let detail = format!(
        "contact agreement {agree}/{n} ({:.0}%, {failed} malformed), E_c {a:.4} vs shuffled-caption {b:.4}, pipeline {:.0}s",
        100.0 * rate,
        p.elapsed.as_secs_f64()
    );
    ensure(rate > 0.8, || detail.clone())?;
    ensure(a < b, || detail.clone())?;
    ensure(p.elapsed < Duration::from_secs(3600), || format!("{detail}; over the 60 min budget"))?;
    Ok(detail)
}

fn ablation_directionality(p: &Pipeline) -> Outcome {
    let parts: Vec<String> = p.paired.iter().map(|(t, b, a)| format!("{} {b:.4} -> {a:.4}", t.name())).collect();
    let detail = parts.join(", ");
    ensure(p.paired.iter().all(|(_, b, a)| a <= b), || detail.clone())?;
    Ok(detail)
}

// ------------------------------------------------------------ 10 metrics

fn rodrigues(w: [f64; 3]) -> [[f64; 3]; 3] {
    let th = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    let k = w.map(|v| v / th);
    let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let kk: f64 = (0..3).map(|l| kx[i][l] * kx[l][j]).sum();
            f64::from(u8::from(i == j)) + th.sin() * kx[i][j] + (1.0 - th.cos()) * kk
        })
    })
}

fn brute_pose(p: [f32; 3], q: &[f32; 6]) -> [f64; 3] {
    let m = rodrigues([q[3] as f64, q[4] as f64, q[5] as f64]);
    std::array::from_fn(|i| (0..3).map(|j| m[i][j] * p[j] as f64).sum::<f64>() + q[i] as f64)
}

fn d3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn metric_oracles() -> Outcome {
    let r = &mut rng::seeded(1001);
    let pt = |r: &mut rng::Rng| -> [f32; 3] { std::array::from_fn(|_| rng::normal(r) as f32 * 0.5) };
    let pose = |r: &mut rng::Rng| -> [f32; 6] { std::array::from_fn(|i| (rng::normal(r) * if i < 3 { 0.5 } else { 1.0 }) as f32) };
    let f64p = |p: [f32; 3]| p.map(f64::from);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (nx, ny, frames) = (1 + rng::below(r, 20), 1 + rng::below(r, 20), 1 + rng::below(r, 6));
        let x: Vec<[f32; 3]> = (0..nx).map(|_| pt(r)).collect();
        let y: Vec<[f32; 3]> = (0..ny).map(|_| pt(r)).collect();
        let nearest = |a: &[[f32; 3]], b: &[[f32; 3]]| {
            a.iter().map(|&p| b.iter().map(|&q| d3(f64p(p), f64p(q))).fold(f64::INFINITY, f64::min)).sum::<f64>() / a.len() as f64
        };
        let want = nearest(&x, &y) + nearest(&y, &x);
        worst = worst.max((chamfer(&x, &y).unwrap() - want).abs());

        let pa: Vec<[f32; 6]> = (0..frames).map(|_| pose(r)).collect();
        let pb: Vec<[f32; 6]> = (0..frames).map(|_| pose(r)).collect();
        let v2v: f64 = pa
            .iter()
            .zip(&pb)
            .map(|(a, b)| x.iter().map(|&p| d3(brute_pose(p, a), brute_pose(p, b)).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / frames as f64;
        worst = worst.max((e_v2v(&pa, &pb, &x).unwrap() - v2v).abs());
        let c: f64 = pa.iter().zip(&pb).map(|(a, b)| d3(brute_pose([0.0; 3], a), brute_pose([0.0; 3], b))).sum::<f64>() / frames as f64;
        worst = worst.max((e_c(&pa, &pb).unwrap() - c).abs());

        let joints = 8;
        let ja: Vec<Vec<[f32; 3]>> = (0..frames).map(|_| (0..joints).map(|_| pt(r)).collect()).collect();
        let jb: Vec<Vec<[f32; 3]>> = (0..frames).map(|_| (0..joints).map(|_| pt(r)).collect()).collect();
        let hands = [4, 5];
        let (mut all, mut hand) = (0.0, 0.0);
        for (fa, fb) in ja.iter().zip(&jb) {
            for j in 0..joints {
                let d = d3(f64p(fa[j]), f64p(fb[j]));
                all += d;
                if hands.contains(&j) {
                    hand += d;
                }
            }
        }
        let (h, m) = joint_errors(&ja, &jb, &hands).unwrap();
        worst = worst.max((h - 100.0 * hand / (2 * frames) as f64).abs()).max((m - 100.0 * all / (joints * frames) as f64).abs());
    }
    ensure(worst < 1e-5, || format!("distance metrics deviate by {worst:e}"))?;
    // the rotation used by the metrics agrees with the independent matrix form
    let w = [0.3, -1.1, 0.7];
    let rot = rotate(w, [0.2, 0.5, -0.4]);
    let m = rodrigues(w);
    let want: [f64; 3] = std::array::from_fn(|i| m[i][0] * 0.2 + m[i][1] * 0.5 - m[i][2] * 0.4);
    ensure(d3(rot, want) < 1e-12, || "rotation convention".into())?;

    // six frames against one object point at the origin
    let hands = |l: f32, rr: f32| [[l, 0.0, 0.0], [0.0, rr, 0.0]];
    let obj = vec![vec![[0.0f32; 3]]; 6];
    let pred = [hands(0.01, 1.0), hands(1.0, 0.04), hands(0.2, 0.3), hands(0.049, 0.9), hands(0.06, 0.07), hands(0.5, 0.5)];
    let gt = [hands(0.02, 1.0), hands(0.3, 0.3), hands(0.0, 0.3), hands(0.051, 0.8), hands(0.9, 0.9), hands(0.5, 0.03)];
    let s: ContactStats = contact_metrics(&pred, &gt, &obj, 0.05).unwrap();
    ensure((s.tp, s.fp, s.fn_, s.tn) == (1, 2, 2, 1), || format!("truth table counts {:?}", (s.tp, s.fp, s.fn_, s.tn)))?;
    ensure(s.precision() == 1.0 / 3.0 && s.recall() == 1.0 / 3.0 && s.accuracy() == 2.0 / 6.0, || "truth table rates".into())?;

    // 2-D Gaussians: Tr((AB)^½) = sqrt(Tr(AB) + 2 sqrt(det A det B))
    let sample = |r: &mut rng::Rng, n: usize, mu: [f64; 2], l: [[f64; 2]; 2]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let (a, b) = (rng::normal(r), rng::normal(r));
                vec![mu[0] + l[0][0] * a, mu[1] + l[1][0] * a + l[1][1] * b]
            })
            .collect()
    };
    let cov = |l: [[f64; 2]; 2]| -> [[f64; 2]; 2] { std::array::from_fn(|i| std::array::from_fn(|j| l[i][0] * l[j][0] + l[i][1] * l[j][1])) };
    let (la, lb) = ([[1.2, 0.0], [0.5, 0.7]], [[0.6, 0.0], [-0.4, 1.1]]);
    let (mua, mub): ([f64; 2], [f64; 2]) = ([0.5, 1.0], [-0.5, 0.2]);
    let (ca, cb) = (cov(la), cov(lb));
    let tr_ab: f64 = (0..2).map(|i| (0..2).map(|k| ca[i][k] * cb[k][i]).sum::<f64>()).sum();
    let det = |m: [[f64; 2]; 2]| m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let want = (mua[0] - mub[0]).powi(2) + (mua[1] - mub[1]).powi(2) + ca[0][0] + ca[1][1] + cb[0][0] + cb[1][1]
        - 2.0 * (tr_ab + 2.0 * (det(ca) * det(cb)).sqrt()).sqrt();
    let got = frechet_distance(&sample(r, 40000, mua, la), &sample(r, 40000, mub, lb)).unwrap();
    let rel = (got - want).abs() / want;
    ensure(rel < 0.02, || format!("Fréchet {got:.4} vs closed form {want:.4}"))?;
    let threshold = RunConfig::default().eval.contact_threshold;
    ensure(threshold == 0.05, || format!("default contact threshold {threshold}"))?;
    Ok(format!("distances within {worst:.1e}, truth table exact, Fréchet {got:.4} vs {want:.4} ({:.2}%), threshold 0.05", 100.0 * rel))
}

// ------------------------------------------------------------ driver

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let mut out = f();
        let took = t.elapsed();
        if let (Ok(detail), Some(l)) = (&out, limit) {
            if took > l {
                out = Err(format!("{detail}; took {took:.0?}, limit {l:?}"));
            }
        }
        match out {
            Ok(d) => println!("PASS {n:>2} {name}: {d} [{:.1}s]", took.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {e} [{:.1}s]", took.as_secs_f64());
            }
        }
    };
    let min = |m: u64| Some(Duration::from_secs(60 * m));
    report(1, "gradient suite", min(2), &mut gradient_suite);
    report(2, "quantizer oracle", None, &mut quantizer_oracle);
    report(3, "tokenizer training", min(10), &mut tokenizer_training);
    report(4, "vocabulary round trip", None, &mut vocabulary_round_trip);
    report(5, "geometry encoder", None, &mut geometry_encoder);
    report(6, "LM structure", None, &mut lm_structure);
    report(7, "overfit probe", min(5), &mut overfit_probe);
    let t = Instant::now();
    let p = pipeline();
    let pipeline_time = t.elapsed();
    report(8, "end-to-end conditional learning", min(60), &mut || {
        let p = p.as_ref().map_err(Clone::clone)?;
        conditional_learning(p)
    });
    report(9, "ablation directionality", None, &mut || ablation_directionality(p.as_ref().map_err(Clone::clone)?));
    report(10, "metric oracles", None, &mut metric_oracles);
    println!("pipeline training took {:.0}s", pipeline_time.as_secs_f64());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
