use proptest::prelude::*;

use geocompass::decoder::{DecoderModel, OutputMode};
use geocompass::mutang::mutang;
use geocompass::peptide::{Alphabet, Peptide, PAD};
use geocompass::surrogate::{fingerprint, levenshtein, tanimoto, within};
use nalgebra::DVector;

fn peptide(max_len: usize) -> impl Strategy<Value = Peptide> {
    prop::collection::vec(0..PAD, 0..=max_len).prop_map(|v| Peptide::from_positions(&v))
}

proptest! {
    #[test]
    fn string_round_trip(p in peptide(12)) {
        let s = p.to_string();
        prop_assert_eq!(s.parse::<Peptide>().unwrap(), p);
    }

    #[test]
    fn pad_truncates(prefix in prop::collection::vec(0..PAD, 0..6), tail in prop::collection::vec(0..=PAD, 0..6)) {
        let mut v = prefix.clone();
        v.push(PAD);
        v.extend(tail);
        prop_assert_eq!(Peptide::from_positions(&v), Peptide::from_positions(&prefix));
    }

    #[test]
    fn within_agrees_with_distance(p in peptide(8), q in peptide(8), k in 0usize..10) {
        prop_assert_eq!(within(&p, &q, k), levenshtein(&p, &q) <= k);
    }

    #[test]
    fn levenshtein_is_a_metric(p in peptide(7), q in peptide(7), r in peptide(7)) {
        prop_assert_eq!(levenshtein(&p, &q), levenshtein(&q, &p));
        prop_assert_eq!(levenshtein(&p, &p), 0);
        prop_assert!(levenshtein(&p, &r) <= levenshtein(&p, &q) + levenshtein(&q, &r));
        prop_assert!(levenshtein(&p, &q) <= p.len().max(q.len()));
    }

    #[test]
    fn tanimoto_bounds(p in peptide(10), q in peptide(10)) {
        let (fp, fq) = (fingerprint(&p), fingerprint(&q));
        let s = tanimoto(&fp, &fq);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, tanimoto(&fq, &fp));
        prop_assert_eq!(tanimoto(&fp, &fp), 1.0);
    }

    #[test]
    fn mutations_contain_decoded_peptide(seed in 0u64..500, z in prop::collection::vec(-2.0f64..2.0, 3), theta in 0.05f64..0.4) {
        let model = DecoderModel::random_flat_linear(seed, 3, 4, 1.0, OutputMode::Probability);
        let z = DVector::from_vec(z);
        let set = mutang(&model, &z, 1e-6, theta, 4096).unwrap();
        let p = model.argmax_peptide(&z).unwrap();
        prop_assert!(set.contains(&p));
        for q in &set {
            prop_assert!(q.len() <= 4);
            prop_assert!(q.to_string().chars().all(|c| Alphabet::index_of(c).is_some_and(|i| i < PAD)));
        }
    }
}
