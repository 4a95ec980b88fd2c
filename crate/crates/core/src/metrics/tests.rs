use alloc::vec::Vec;

use super::*;
use crate::data::{generate_synthetic_dataset, TemplateSet};
use crate::geom::GeomEncoderConfig;
use crate::lm::{TransformerConfig, TransformerModel};
use crate::tasks::{default_words, TokenizedSample};
use crate::vocab::UnifiedVocab;
use crate::vqvae::{MotionTokenizer, TokenizerConfig};

#[test]
fn report_table_lists_every_field() {
    let mut r = MetricReport::default();
    r.set_contact(&ContactStats::from_flags(&[true, false], &[true, true], 0.05).unwrap());
    let t = r.table();
    assert_eq!(t.lines().count(), 16);
    assert!(t.contains("c_prec") && t.contains("1.0000") && t.contains("fid"));
    assert!(!r.degenerate);
}

#[test]
fn r_precision_chance_and_exhaustive() {
    let h = TokenizerConfig::human_desk();
    let o = TokenizerConfig::object_desk();
    let vocab = UnifiedVocab::build(&default_words(), h.codebook_size, o.codebook_size).unwrap();
    let (ht, ot) = (MotionTokenizer::<f32>::new(h, 1).unwrap(), MotionTokenizer::<f32>::new(o, 2).unwrap());
    let data: Vec<TokenizedSample> = generate_synthetic_dataset(5, 150, 16, 32, &TemplateSet::all())
        .unwrap()
        .iter()
        .map(|s| TokenizedSample::from_sample(s, &ht, &ot, &vocab).unwrap())
        .collect();
    let pool: Vec<Vec<usize>> = data.iter().map(|s| s.caption.clone()).collect();
    let cfg = TransformerConfig::desk(0).for_vocab(&vocab);
    let m = TransformerModel::<f32>::new(cfg, GeomEncoderConfig::desk(64), 3).unwrap();
    let b = 4;
    let rates = r_precision_surrogate(&m, &vocab, &data, &pool, b, &[1, b], 7).unwrap();
    assert_eq!(rates[1], 1.0);
    let n = data.len() as f64;
    let p = 1.0 / b as f64;
    let sigma = (p * (1.0 - p) / n).sqrt();
    assert!((rates[0] - p).abs() < 3.0 * sigma, "top-1 {} vs chance {p}", rates[0]);
    assert!(matches!(
        r_precision_surrogate(&m, &vocab, &data[..1], &pool[..2], b, &[1], 7),
        Err(crate::Error::Config(_))
    ));
}

#[test]
fn pooled_latent_width() {
    let tok = MotionTokenizer::<f32>::new(TokenizerConfig::object_desk(), 0).unwrap();
    let s = &generate_synthetic_dataset(1, 1, 16, 16, &TemplateSet::all()).unwrap()[0];
    assert_eq!(pooled_latents(&tok, &s.object.frames).unwrap().len(), tok.config.code_dim);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn cloud(max: usize) -> impl Strategy<Value = Vec<[f32; 3]>> {
        prop::collection::vec(prop::array::uniform3(-2.0f32..2.0), 1..max)
    }

    fn poses(n: usize) -> impl Strategy<Value = Vec<[f32; 6]>> {
        prop::collection::vec(prop::array::uniform6(-1.5f32..1.5), n)
    }

    proptest! {
        #[test]
        fn chamfer_nonnegative_symmetric(x in cloud(12), y in cloud(12)) {
            let c = chamfer(&x, &y).unwrap();
            prop_assert!(c >= 0.0);
            prop_assert!((c - chamfer(&y, &x).unwrap()).abs() < 1e-9);
            prop_assert_eq!(chamfer(&x, &x).unwrap(), 0.0);
        }

        #[test]
        fn pose_errors_nonnegative(a in poses(4), b in poses(4), pts in cloud(8)) {
            prop_assert!(e_v2v(&a, &b, &pts).unwrap() >= 0.0);
            prop_assert!(e_c(&a, &b).unwrap() >= 0.0);
            prop_assert_eq!(e_v2v(&a, &a, &pts).unwrap(), 0.0);
            prop_assert_eq!(e_c(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn contact_rates_from_counts(flags in prop::collection::vec((any::<bool>(), any::<bool>()), 1..40)) {
            let (p, g): (Vec<bool>, Vec<bool>) = flags.into_iter().unzip();
            let s = ContactStats::from_flags(&p, &g, 0.05).unwrap();
            prop_assert_eq!(s.frames(), p.len());
            prop_assert_eq!(s.accuracy(), (s.tp + s.tn) as f64 / p.len() as f64);
            for r in [s.precision(), s.recall(), s.accuracy(), s.contact_pct()] {
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }
    }
}
