//! Randomized checks of the structural guarantees each module promises.

use std::collections::{BTreeMap, BTreeSet};

use embinv_core::baselines::{remaining_sizes, MlcModel, WordVocab};
use embinv_core::corpus::{apply_split, split_counts, DatasetId, SentenceRecord, Split};
use embinv_core::embedder::{similarity, ToyAdditive, Victim};
use embinv_core::geia::{AttackerModel, DecodeParams, DecoderConfig};
use embinv_core::metrics::{micro_prf1, perplexity, rouge_bleu, stopword_rate, LmScorer};
use embinv_core::reasoner::parse_response;
use embinv_core::textops::{
    stopword_set, word_tokens, DictionaryNer, EntityLabel, NerPort, Tokenizer, WordTokenizer,
    UNK_ID,
};
use proptest::prelude::*;

fn rec(i: usize) -> SentenceRecord {
    SentenceRecord {
        id: format!("r{i}"),
        text: format!("sentence number {i}"),
        dataset: DatasetId::Pc,
        split: Split::Train,
    }
}

fn ratio_strategy() -> impl Strategy<Value = (u8, u8, u8)> {
    (0u8..=100)
        .prop_flat_map(|a| (Just(a), 0u8..=100 - a))
        .prop_map(|(a, b)| (a, b, 100 - a - b))
}

fn join(words: &[String]) -> String {
    words.join(" ")
}

proptest! {
    #[test]
    fn split_partitions_records_and_counts_depend_only_on_size(
        n in 0usize..40,
        ratios in ratio_strategy(),
        seed in any::<u64>(),
    ) {
        let records: Vec<_> = (0..n).map(rec).collect();
        let out = apply_split(records.clone(), ratios, seed).unwrap();

        // partition: every record survives exactly once, untouched except split
        prop_assert_eq!(out.len(), n);
        let texts_in: BTreeMap<&str, &str> =
            records.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect();
        let mut seen = BTreeSet::new();
        for r in &out {
            prop_assert!(seen.insert(r.id.clone()), "duplicate id {}", r.id);
            prop_assert_eq!(texts_in[r.id.as_str()], r.text.as_str());
            prop_assert_eq!(r.dataset, DatasetId::Pc);
        }

        // counts follow half-up rounding of the cumulative ratios
        let c1 = (n as f64 * ratios.0 as f64 / 100.0 + 0.5).floor() as usize;
        let c2 = (n as f64 * (ratios.0 + ratios.1) as f64 / 100.0 + 0.5).floor() as usize;
        prop_assert_eq!(split_counts(&out), (c1, c2 - c1, n - c2));

        // determinism: identical inputs give the identical assignment
        let again = apply_split(records.clone(), ratios, seed).unwrap();
        prop_assert_eq!(&out, &again);

        // counts ignore input order
        let mut reversed = records;
        reversed.reverse();
        let out_rev = apply_split(reversed, ratios, seed).unwrap();
        prop_assert_eq!(split_counts(&out), split_counts(&out_rev));
    }

    #[test]
    fn split_rejects_ratios_off_100(
        n in 0usize..10,
        a in 0u8..=100,
        b in 0u8..=100,
        c in 0u8..=100,
    ) {
        prop_assume!(a as u32 + b as u32 + c as u32 != 100);
        let records: Vec<_> = (0..n).map(rec).collect();
        prop_assert!(apply_split(records, (a, b, c), 1).is_err());
    }
}

proptest! {
    #[test]
    fn similarity_is_symmetric_and_scale_invariant(
        (a, b) in (1usize..10).prop_flat_map(|d| {
            (
                prop::collection::vec(-10.0f32..10.0, d),
                prop::collection::vec(-10.0f32..10.0, d),
            )
        }),
        k in 0.01f32..64.0,
    ) {
        match (similarity(&a, &b), similarity(&b, &a)) {
            (Ok(ab), Ok(ba)) => {
                prop_assert_eq!(ab.to_bits(), ba.to_bits());
                prop_assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&ab));
                let ka: Vec<f32> = a.iter().map(|x| x * k).collect();
                let scaled = similarity(&ka, &b).unwrap();
                prop_assert!((scaled - ab).abs() < 1e-5, "{scaled} vs {ab}");
            }
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "asymmetric outcome: {x:?} vs {y:?}"),
        }
    }

    #[test]
    fn toy_additive_embeds_deterministically(
        words in prop::collection::vec("[a-z]{1,5}", 1..6),
        dim in 1usize..12,
        seed in any::<u64>(),
        text in "[a-z]{1,5}( [a-z]{1,5}){0,3}",
    ) {
        let vocab: Vec<String> = words;
        let v = ToyAdditive::new("toy", &vocab, dim, seed);
        prop_assert_eq!(v.descriptor().dim, dim);
        let e1 = v.embed_batch(&[&text]).unwrap();
        let e2 = v.embed_batch(&[&text]).unwrap();
        prop_assert_eq!(&e1, &e2);
        prop_assert_eq!(e1[0].len(), dim);
    }
}

proptest! {
    #[test]
    fn word_tokens_are_lowercase_and_anchored_on_alphanumerics(text in "[ -~]{0,40}") {
        let toks = word_tokens(&text);
        for t in &toks {
            prop_assert!(!t.is_empty());
            prop_assert!(!t.chars().any(|c| c.is_uppercase()), "{t}");
            prop_assert!(t.chars().any(|c| c.is_alphanumeric()), "{t}");
            prop_assert!(!t.chars().any(|c| c.is_whitespace()), "{t}");
        }
        // fixpoint: re-tokenizing the tokens changes nothing
        prop_assert_eq!(word_tokens(&toks.join(" ")), toks);
    }

    #[test]
    fn tokenizer_offsets_index_token_surfaces(
        vocab in prop::collection::vec("[a-z]{1,5}", 1..8),
        text in "([a-z]{1,5} ){0,6}[a-z]{0,5}",
    ) {
        let tok = WordTokenizer::new(vocab);
        let seq = tok.tokenize(&text);
        prop_assert_eq!(&seq, &tok.tokenize(&text));
        prop_assert_eq!(seq.ids.len(), seq.offsets.len());
        let chars: Vec<char> = text.chars().collect();
        for (&id, &(s, e)) in seq.ids.iter().zip(&seq.offsets) {
            prop_assert!(s < e && e <= chars.len());
            let surface: String = chars[s..e].iter().collect();
            prop_assert!(!surface.chars().any(|c| c.is_whitespace()));
            match tok.word_id(&surface) {
                Some(expect) => prop_assert_eq!(id, expect),
                None => prop_assert_eq!(id, UNK_ID),
            }
        }
    }

    #[test]
    fn tokenizer_round_trips_in_vocab_text(
        (vocab, picks) in prop::collection::vec("[a-z]{1,5}", 1..8).prop_flat_map(|v| {
            let n = v.len();
            (Just(v), prop::collection::vec(0usize..n, 0..8))
        }),
    ) {
        let tok = WordTokenizer::new(vocab.clone());
        let words = tok.words().to_vec();
        let text = join(&picks.iter().map(|&i| words[i % words.len()].clone()).collect::<Vec<_>>());
        let seq = tok.tokenize(&text);
        prop_assert_eq!(tok.decode(&seq.ids), text);
    }

    #[test]
    fn dictionary_ner_spans_ascend_and_quote_the_text(
        picks in prop::collection::vec(
            prop::sample::select(vec![
                "Alice", "alice", "ALICE", "Bob", "Smith", "bob", "smith",
                "Acme", "Corp", "acme", "corp", "Paris", "paris", "visits", "the", "x",
            ]),
            0..10,
        ),
    ) {
        let ner = DictionaryNer::new([
            ("alice".to_string(), EntityLabel::Person),
            ("bob smith".to_string(), EntityLabel::Person),
            ("acme corp".to_string(), EntityLabel::Organization),
            ("paris".to_string(), EntityLabel::Location),
        ]);
        let text = picks.join(" ");
        let spans = ner.recognize(&text);
        let chars: Vec<char> = text.chars().collect();
        let mut prev_end = 0usize;
        for sp in &spans {
            let (s, e) = sp.span;
            prop_assert!(s >= prev_end, "overlap or disorder at {s}");
            prop_assert!(s < e && e <= chars.len());
            let surface: String = chars[s..e].iter().collect();
            prop_assert_eq!(&surface, &sp.surface);
            prev_end = e;
        }
    }
}

proptest! {
    #[test]
    fn micro_prf1_ignores_pair_order_and_stays_bounded(
        pairs in prop::collection::vec(
            (
                prop::collection::vec("[a-c]", 0..5),
                prop::collection::vec("[a-c]", 0..5),
            ),
            1..6,
        ),
    ) {
        let pred: Vec<Vec<String>> = pairs.iter().map(|(p, _)| p.clone()).collect();
        let gold: Vec<Vec<String>> = pairs.iter().map(|(_, g)| g.clone()).collect();
        let (p, r, f) = micro_prf1(&pred, &gold).unwrap();
        for v in [p, r, f] {
            prop_assert!((0.0..=1.0).contains(&v), "{v}");
        }
        let mut pred_rev = pred.clone();
        let mut gold_rev = gold.clone();
        pred_rev.reverse();
        gold_rev.reverse();
        prop_assert_eq!(micro_prf1(&pred_rev, &gold_rev).unwrap(), (p, r, f));
    }

    #[test]
    fn micro_prf1_is_perfect_on_identical_sides(
        gold in prop::collection::vec(prop::collection::vec("[a-c]", 0..5), 1..6),
    ) {
        prop_assume!(gold.iter().map(|g| g.len()).sum::<usize>() > 0);
        prop_assert_eq!(micro_prf1(&gold, &gold).unwrap(), (1.0, 1.0, 1.0));
    }

    #[test]
    fn stopword_rate_ignores_token_order(
        sentences in prop::collection::vec(
            prop::collection::vec(
                prop::sample::select(vec!["the", "of", "and", "cat", "qubit", "xylem"]),
                1..6,
            ),
            1..5,
        ),
    ) {
        let lexicon: BTreeSet<String> =
            stopword_set().unwrap().iter().map(|s| s.to_string()).collect();
        let sents: Vec<Vec<String>> = sentences
            .iter()
            .map(|s| s.iter().map(|w| w.to_string()).collect())
            .collect();
        let rate = stopword_rate(&sents, &lexicon).unwrap();
        prop_assert!((0.0..=100.0).contains(&rate));
        let mut shuffled: Vec<Vec<String>> = sents
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.reverse();
                s
            })
            .collect();
        shuffled.reverse();
        prop_assert_eq!(stopword_rate(&shuffled, &lexicon).unwrap(), rate);
    }

    #[test]
    fn perplexity_rises_as_the_scorer_loses_confidence(
        texts in prop::collection::vec("[a-z]{1,4}( [a-z]{1,4}){0,4}", 1..4),
        lp_hi in -5.0f64..-0.01,
        delta in 0.01f64..3.0,
    ) {
        struct Flat(f64);
        impl LmScorer for Flat {
            fn id(&self) -> &str {
                "flat"
            }
            fn token_logprobs(&self, text: &str) -> embinv_core::Result<Vec<f64>> {
                Ok(word_tokens(text).iter().map(|_| self.0).collect())
            }
        }
        let ppl_hi = perplexity(&texts, &Flat(lp_hi)).unwrap();
        let ppl_lo = perplexity(&texts, &Flat(lp_hi - delta)).unwrap();
        // a flat scorer pins perplexity at exp(−logp) regardless of the corpus
        prop_assert!((ppl_hi - (-lp_hi).exp()).abs() < 1e-9 * ppl_hi);
        prop_assert!(ppl_hi < ppl_lo, "{ppl_hi} !< {ppl_lo}");
    }

    #[test]
    fn rouge_l_never_exceeds_rouge_1(
        pairs in prop::collection::vec(
            (
                prop::collection::vec("[a-d]", 0..6),
                prop::collection::vec("[a-d]", 1..6),
            ),
            1..5,
        ),
    ) {
        let pred: Vec<String> = pairs.iter().map(|(p, _)| p.join(" ")).collect();
        let gold: Vec<String> = pairs.iter().map(|(_, g)| g.join(" ")).collect();
        let q = rouge_bleu(&pred, &gold).unwrap();
        prop_assert_eq!(q.skipped_pairs, 0);
        for v in [q.rouge1, q.rouge_l, q.bleu1, q.bleu2, q.bleu4] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{v}");
        }
        prop_assert!(q.rouge_l <= q.rouge1 + 1e-12, "{} > {}", q.rouge_l, q.rouge1);
    }

    #[test]
    fn generation_metrics_are_perfect_on_identical_sides(
        texts in prop::collection::vec("[a-d]( [a-d]){0,5}", 1..5),
    ) {
        let q = rouge_bleu(&texts, &texts).unwrap();
        prop_assert!((q.rouge1 - 1.0).abs() < 1e-12);
        prop_assert!((q.rouge_l - 1.0).abs() < 1e-12);
        prop_assert!((q.bleu1 - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn parse_response_round_trips_masked_text_and_placeholders(
        (labels, anchors) in prop::collection::vec("[A-Z]{1,5}", 0..4).prop_flat_map(|ls| {
            let n = ls.len();
            (Just(ls), prop::collection::vec("[a-z]{1,4}", n + 1))
        }),
        original in "[a-z]{1,4}( [a-z]{1,4}){0,4}",
        alternative in "[a-z]{1,4}( [a-z]{1,4}){0,4}",
    ) {
        let masked = if labels.is_empty() {
            original.clone()
        } else {
            let mut parts = vec![anchors[0].clone()];
            for (l, a) in labels.iter().zip(&anchors[1..]) {
                parts.push(format!("<{l}>"));
                parts.push(a.clone());
            }
            parts.join(" ")
        };
        let raw = format!("Masked version: {masked} [SEP] Alternative version: {alternative}");
        let parsed = parse_response(&raw, &original, "test-reasoner").unwrap();
        prop_assert_eq!(&parsed.triple.original, &original);
        prop_assert_eq!(&parsed.triple.masked, &masked);
        prop_assert_eq!(&parsed.triple.alternative, &alternative);
        prop_assert_eq!(parsed.triple.placeholders.len(), labels.len());
        let chars: Vec<char> = masked.chars().collect();
        for (p, l) in parsed.triple.placeholders.iter().zip(&labels) {
            prop_assert_eq!(&p.label, l);
            let surface: String = chars[p.start..p.end].iter().collect();
            prop_assert_eq!(surface, format!("<{l}>"));
        }
        // one warning per label used more than once, nothing else
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for l in &labels {
            *counts.entry(l.as_str()).or_default() += 1;
        }
        let dupes = counts.values().filter(|&&n| n > 1).count();
        prop_assert_eq!(parsed.triple.placeholders.len(), labels.len());
        prop_assert_eq!(parsed.warnings.len(), dupes);
    }
}

proptest! {
    #[test]
    fn remaining_pool_counts_down_one_word_per_step(
        words in 0usize..40,
        steps in 0usize..12,
    ) {
        let sizes = remaining_sizes(words, steps);
        prop_assert_eq!(sizes.len(), steps);
        for (t, &s) in sizes.iter().enumerate() {
            prop_assert_eq!(s, words.saturating_sub(t));
        }
        for w in sizes.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn mlc_predictions_shrink_as_the_threshold_rises(
        words in prop::collection::vec("[a-z]{1,4}", 2..8),
        seed in any::<u64>(),
        embedding in prop::collection::vec(-1.0f32..1.0, 8),
        t1 in 0.05f64..0.90,
        bump in 0.01f64..0.05,
    ) {
        let model = MlcModel::init(WordVocab::new(words), 8, "toy", seed);
        let t2 = t1 + bump;
        let lo: BTreeSet<String> = model.predict_at(&embedding, t1).unwrap().into_iter().collect();
        let hi: BTreeSet<String> = model.predict_at(&embedding, t2).unwrap().into_iter().collect();
        prop_assert!(hi.is_subset(&lo), "{hi:?} ⊄ {lo:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn inversion_score_never_falls_below_the_greedy_floor(
        seed in any::<u64>(),
        embedding in prop::collection::vec(-1.0f32..1.0, 6),
        beam in 2usize..5,
    ) {
        let tok = WordTokenizer::new(["aa", "bb", "cc", "dd"].map(String::from));
        let cfg = DecoderConfig { layers: 1, hidden_dim: 16, heads: 2, max_len: 4 };
        let model = AttackerModel::init(cfg, tok, 6, "toy", false, seed);
        let greedy = model
            .invert(&embedding, &DecodeParams { beam_size: 1, max_len: 4 })
            .unwrap();
        let wide = model
            .invert(&embedding, &DecodeParams { beam_size: beam, max_len: 4 })
            .unwrap();
        prop_assert!(wide.logprob.is_finite());
        prop_assert!(wide.token_ids.len() <= 4);
        prop_assert!(
            wide.logprob + 1e-9 >= greedy.logprob,
            "beam {} scored {} below greedy {}",
            beam,
            wide.logprob,
            greedy.logprob
        );
    }
}
