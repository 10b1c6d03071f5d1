//! Attack-evaluation metrics: token micro P/R/F1, stopword rate, named-entity
//! recovery, embedding similarity, perplexity, ROUGE-1/L, BLEU-1/2/4.
//!
//! Token-overlap metrics work on lowercase word tokens (see
//! [`crate::textops::word_tokens`]); multiset semantics throughout, so
//! repeated words must be recovered as many times as they occur.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::embedder::{similarity, Victim};
use crate::error::{Error, Result};
use crate::textops::{word_tokens, NerPort};

/// Everything reported for one attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Stopword rate of the predictions, in percent.
    pub swr: f64,
    /// swr(predictions) − swr(reference test set), in percentage points.
    pub swr_diff_vs_test: f64,
    pub nerr: f64,
    /// Mean cosine similarity between prediction and gold embeddings.
    pub es: f64,
    pub ppl: f64,
    pub rouge1: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu4: f64,
}

fn counts(tokens: &[String]) -> BTreeMap<&str, usize> {
    let mut m: BTreeMap<&str, usize> = BTreeMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_default() += 1;
    }
    m
}

fn multiset_overlap(a: &[String], b: &[String]) -> usize {
    let ca = counts(a);
    let cb = counts(b);
    ca.iter()
        .map(|(t, &n)| n.min(cb.get(t).copied().unwrap_or(0)))
        .sum()
}

/// Micro-averaged precision/recall/F1 over token multisets.
///
/// True positives per pair = multiset-intersection size; aggregation divides
/// by total predicted and total gold token counts. Empty denominators score 0.
pub fn micro_prf1(predicted: &[Vec<String>], gold: &[Vec<String>]) -> Result<(f64, f64, f64)> {
    if predicted.len() != gold.len() {
        return Err(Error::Metric(format!(
            "prediction/gold length mismatch: {} vs {}",
            predicted.len(),
            gold.len()
        )));
    }
    let mut tp = 0usize;
    let mut n_pred = 0usize;
    let mut n_gold = 0usize;
    for (p, g) in predicted.iter().zip(gold.iter()) {
        tp += multiset_overlap(p, g);
        n_pred += p.len();
        n_gold += g.len();
    }
    let precision = if n_pred == 0 { 0.0 } else { tp as f64 / n_pred as f64 };
    let recall = if n_gold == 0 { 0.0 } else { tp as f64 / n_gold as f64 };
    Ok((precision, recall, f1_of(precision, recall)))
}

pub fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Corpus stopword rate in percent.
pub fn stopword_rate(sentences: &[Vec<String>], lexicon: &BTreeSet<String>) -> Result<f64> {
    let total: usize = sentences.iter().map(|s| s.len()).sum();
    if total == 0 {
        return Err(Error::Metric("stopword rate over zero tokens".into()));
    }
    let hits: usize = sentences
        .iter()
        .flat_map(|s| s.iter())
        .filter(|t| lexicon.contains(t.as_str()))
        .count();
    Ok(100.0 * hits as f64 / total as f64)
}

/// Named-entity recovery ratio: fraction of gold entity surfaces whose
/// lowercase form occurs (substring) in the paired prediction. Pairs with
/// zero gold entities are excluded entirely.
pub fn nerr(predicted_texts: &[String], gold_texts: &[String], ner: &dyn NerPort) -> Result<f64> {
    if predicted_texts.len() != gold_texts.len() {
        return Err(Error::Metric(format!(
            "prediction/gold length mismatch: {} vs {}",
            predicted_texts.len(),
            gold_texts.len()
        )));
    }
    let mut recovered = 0usize;
    let mut total = 0usize;
    for (pred, gold) in predicted_texts.iter().zip(gold_texts.iter()) {
        let spans = ner.recognize(gold);
        if spans.is_empty() {
            continue;
        }
        let pred_lower = pred.to_lowercase();
        for span in &spans {
            total += 1;
            if pred_lower.contains(&span.surface.to_lowercase()) {
                recovered += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Metric(
            "NERR undefined: no gold entities in any pair".into(),
        ));
    }
    Ok(recovered as f64 / total as f64)
}

/// Language-model port for perplexity.
pub trait LmScorer {
    fn id(&self) -> &str;
    /// Per-token log-probabilities of the text under the scorer's own
    /// tokenization. Empty texts yield an empty list.
    fn token_logprobs(&self, text: &str) -> Result<Vec<f64>>;
}

/// Assigns every word token probability 1/V.
pub struct UniformScorer {
    pub vocab_size: usize,
}

impl LmScorer for UniformScorer {
    fn id(&self) -> &str {
        "uniform"
    }

    fn token_logprobs(&self, text: &str) -> Result<Vec<f64>> {
        let logp = -(self.vocab_size as f64).ln();
        Ok(word_tokens(text).iter().map(|_| logp).collect())
    }
}

/// Token-weighted corpus perplexity: exp(−Σ log p / Σ tokens).
pub fn perplexity(texts: &[String], scorer: &dyn LmScorer) -> Result<f64> {
    let mut total_logp = 0.0f64;
    let mut total_tokens = 0usize;
    for t in texts {
        let lps = scorer.token_logprobs(t)?;
        total_logp += lps.iter().sum::<f64>();
        total_tokens += lps.len();
    }
    if total_tokens == 0 {
        return Err(Error::Metric("perplexity over zero tokens".into()));
    }
    Ok((-total_logp / total_tokens as f64).exp())
}

/// Generation-quality scores plus the count of pairs skipped for empty golds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenQuality {
    pub rouge1: f64,
    pub rouge_l: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu4: f64,
    pub skipped_pairs: usize,
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut m: BTreeMap<&[String], usize> = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_default() += 1;
        }
    }
    m
}

const BLEU_EPS: f64 = 1e-9;

/// ROUGE-1/L F-measures (mean over pairs) and corpus-level BLEU-1/2/4 with
/// brevity penalty. Zero n-gram precisions are floored at a small epsilon so
/// the geometric mean stays defined. Pairs whose gold tokenizes empty are
/// skipped and counted.
pub fn rouge_bleu(predicted: &[String], gold: &[String]) -> Result<GenQuality> {
    if predicted.len() != gold.len() {
        return Err(Error::Metric(format!(
            "prediction/gold length mismatch: {} vs {}",
            predicted.len(),
            gold.len()
        )));
    }
    let mut skipped = 0usize;
    let mut rouge1_sum = 0.0f64;
    let mut rouge_l_sum = 0.0f64;
    let mut used = 0usize;
    // corpus BLEU accumulators, indexed by n-gram order
    const ORDERS: usize = 4;
    let mut clipped = [0usize; ORDERS];
    let mut candidates = [0usize; ORDERS];
    let mut pred_len_total = 0usize;
    let mut gold_len_total = 0usize;

    for (p_text, g_text) in predicted.iter().zip(gold.iter()) {
        let p = word_tokens(p_text);
        let g = word_tokens(g_text);
        if g.is_empty() {
            skipped += 1;
            continue;
        }
        used += 1;
        // ROUGE-1 F
        let overlap = multiset_overlap(&p, &g);
        let r1p = if p.is_empty() { 0.0 } else { overlap as f64 / p.len() as f64 };
        let r1r = overlap as f64 / g.len() as f64;
        rouge1_sum += f1_of(r1p, r1r);
        // ROUGE-L F
        let lcs = lcs_len(&p, &g);
        let rlp = if p.is_empty() { 0.0 } else { lcs as f64 / p.len() as f64 };
        let rlr = lcs as f64 / g.len() as f64;
        rouge_l_sum += f1_of(rlp, rlr);
        // BLEU counts
        pred_len_total += p.len();
        gold_len_total += g.len();
        for (k, slot) in clipped.iter_mut().enumerate() {
            let n = k + 1;
            let pc = ngram_counts(&p, n);
            let gc = ngram_counts(&g, n);
            for (gram, &c) in &pc {
                *slot += c.min(gc.get(gram).copied().unwrap_or(0));
                candidates[k] += c;
            }
        }
    }
    if used == 0 {
        return Err(Error::Metric("all pairs skipped (empty golds)".into()));
    }

    let bp = if pred_len_total == 0 {
        0.0
    } else if pred_len_total >= gold_len_total {
        1.0
    } else {
        (1.0 - gold_len_total as f64 / pred_len_total as f64).exp()
    };
    let precision = |k: usize| -> f64 {
        if candidates[k] == 0 {
            BLEU_EPS
        } else if clipped[k] == 0 {
            BLEU_EPS
        } else {
            clipped[k] as f64 / candidates[k] as f64
        }
    };
    let bleu_n = |n: usize| -> f64 {
        let log_mean: f64 = (0..n).map(|k| precision(k).ln()).sum::<f64>() / n as f64;
        bp * log_mean.exp()
    };

    Ok(GenQuality {
        rouge1: rouge1_sum / used as f64,
        rouge_l: rouge_l_sum / used as f64,
        bleu1: bleu_n(1),
        bleu2: bleu_n(2),
        bleu4: bleu_n(4),
        skipped_pairs: skipped,
    })
}

/// Mean cosine similarity between victim embeddings of prediction/gold pairs.
/// Pairs where either side embeds to a zero-norm vector are skipped; errors
/// if nothing remains.
pub fn embedding_similarity(
    predicted: &[String],
    gold: &[String],
    victim: &dyn Victim,
) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::Metric(format!(
            "prediction/gold length mismatch: {} vs {}",
            predicted.len(),
            gold.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Metric("embedding similarity over zero pairs".into()));
    }
    let p_refs: Vec<&str> = predicted.iter().map(|s| s.as_str()).collect();
    let g_refs: Vec<&str> = gold.iter().map(|s| s.as_str()).collect();
    let pe = victim.embed_batch(&p_refs)?;
    let ge = victim.embed_batch(&g_refs)?;
    let mut sum = 0.0f64;
    let mut used = 0usize;
    for (a, b) in pe.iter().zip(ge.iter()) {
        match similarity(a, b) {
            Ok(s) => {
                sum += s;
                used += 1;
            }
            Err(Error::UndefinedSimilarity(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::Metric(
            "embedding similarity undefined for every pair".into(),
        ));
    }
    Ok(sum / used as f64)
}

/// Assemble the full bundle for one run.
///
/// `test_texts` supplies the stopword-rate baseline the predictions are
/// compared against; `scorer` names the perplexity model.
pub fn compute_bundle(
    predicted: &[String],
    gold: &[String],
    test_texts: &[String],
    victim: &dyn Victim,
    scorer: &dyn LmScorer,
    ner: &dyn NerPort,
    stopwords: &BTreeSet<String>,
) -> Result<MetricsBundle> {
    let pred_tokens: Vec<Vec<String>> = predicted.iter().map(|s| word_tokens(s)).collect();
    let gold_tokens: Vec<Vec<String>> = gold.iter().map(|s| word_tokens(s)).collect();
    let (precision, recall, f1) = micro_prf1(&pred_tokens, &gold_tokens)?;
    let swr = stopword_rate(&pred_tokens, stopwords)?;
    let test_tokens: Vec<Vec<String>> = test_texts.iter().map(|s| word_tokens(s)).collect();
    let swr_test = stopword_rate(&test_tokens, stopwords)?;
    let nerr_v = match nerr(predicted, gold, ner) {
        Ok(v) => v,
        // a corpus without gold entities reports 0 recovery rather than failing the run
        Err(Error::Metric(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let es = embedding_similarity(predicted, gold, victim)?;
    let ppl = perplexity(predicted, scorer)?;
    let gq = rouge_bleu(predicted, gold)?;
    Ok(MetricsBundle {
        precision,
        recall,
        f1,
        swr,
        swr_diff_vs_test: swr - swr_test,
        nerr: nerr_v,
        es,
        ppl,
        rouge1: gq.rouge1,
        rouge_l: gq.rouge_l,
        bleu1: gq.bleu1,
        bleu2: gq.bleu2,
        bleu4: gq.bleu4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::ToyAdditive;
    use crate::textops::{stopword_set, DictionaryNer, EntityLabel};

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    fn texts(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    /// Victim with pinned, exactly-representable token vectors.
    fn pinned_victim() -> ToyAdditive {
        let mut v = BTreeMap::new();
        v.insert("a".into(), vec![1.0, 0.0]);
        v.insert("b".into(), vec![0.0, 1.0]);
        v.insert("c".into(), vec![3.0, 4.0]);
        ToyAdditive::with_vectors("pinned", v, 2)
    }

    #[test]
    fn micro_counts_multiset_overlap() {
        // {a,a,b} ∩ {a,b,c} = {a,b} → tp=2 over 3 predicted / 3 gold
        let (p, r, f) = micro_prf1(&[toks(&["a", "a", "b"])], &[toks(&["a", "b", "c"])]).unwrap();
        assert_eq!(p, 2.0 / 3.0);
        assert_eq!(r, 2.0 / 3.0);
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn micro_accumulates_across_pairs() {
        let pred = vec![toks(&["a", "b"]), toks(&["c"])];
        let gold = vec![toks(&["a"]), toks(&["c", "d"])];
        // tp = 1 + 1, predicted = 3, gold = 3
        let (p, r, f) = micro_prf1(&pred, &gold).unwrap();
        assert_eq!(p, 2.0 / 3.0);
        assert_eq!(r, 2.0 / 3.0);
        assert!(f > 0.0);
    }

    #[test]
    fn micro_empty_sides_score_zero() {
        let (p, r, f) = micro_prf1(&[vec![]], &[toks(&["a"])]).unwrap();
        assert_eq!((p, r, f), (0.0, 0.0, 0.0));
        let (p, r, f) = micro_prf1(&[vec![]], &[vec![]]).unwrap();
        assert_eq!((p, r, f), (0.0, 0.0, 0.0));
    }

    #[test]
    fn micro_length_mismatch_errors() {
        let res = micro_prf1(&[vec![]], &[]);
        assert!(matches!(res, Err(Error::Metric(_))));
    }

    #[test]
    fn f1_guards_zero_denominator() {
        assert_eq!(f1_of(0.0, 0.0), 0.0);
        assert_eq!(f1_of(1.0, 1.0), 1.0);
        assert!((f1_of(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn stopword_rate_is_percentage() {
        let mut lex = BTreeSet::new();
        lex.insert("the".to_string());
        let rate = stopword_rate(&[toks(&["the", "cat"])], &lex).unwrap();
        assert_eq!(rate, 50.0);
    }

    #[test]
    fn stopword_rate_zero_tokens_errors() {
        let lex = BTreeSet::new();
        assert!(matches!(
            stopword_rate(&[vec![]], &lex),
            Err(Error::Metric(_))
        ));
    }

    #[test]
    fn stopword_rate_with_bundled_lexicon() {
        let lex: BTreeSet<String> = stopword_set()
            .unwrap()
            .into_iter()
            .map(str::to_string)
            .collect();
        assert!(lex.contains("the"));
        assert!(!lex.contains("cat"));
        let rate = stopword_rate(&[toks(&["the", "cat"])], &lex).unwrap();
        assert_eq!(rate, 50.0);
    }

    fn people_ner() -> DictionaryNer {
        DictionaryNer::new(vec![
            ("Alice".to_string(), EntityLabel::Person),
            ("Bob".to_string(), EntityLabel::Person),
            ("Carol".to_string(), EntityLabel::Person),
        ])
    }

    #[test]
    fn nerr_counts_entities_over_entity_bearing_pairs() {
        let gold = texts(&["Alice went home", "nothing here", "see Bob and Carol"]);
        let pred = texts(&["alice stayed", "whatever", "bob was seen"]);
        // pair 2 has no entities and is excluded; Alice and Bob recovered, Carol not
        let v = nerr(&pred, &gold, &people_ner()).unwrap();
        assert_eq!(v, 2.0 / 3.0);
    }

    #[test]
    fn nerr_matches_case_insensitive_substrings() {
        let gold = texts(&["Alice"]);
        let pred = texts(&["ALICE!"]);
        assert_eq!(nerr(&pred, &gold, &people_ner()).unwrap(), 1.0);
    }

    #[test]
    fn nerr_without_entities_errors() {
        let gold = texts(&["no names at all"]);
        let pred = texts(&["same"]);
        assert!(matches!(
            nerr(&pred, &gold, &people_ner()),
            Err(Error::Metric(_))
        ));
    }

    #[test]
    fn nerr_length_mismatch_errors() {
        assert!(matches!(
            nerr(&texts(&["a"]), &[], &people_ner()),
            Err(Error::Metric(_))
        ));
    }

    #[test]
    fn uniform_perplexity_equals_vocab_size() {
        let scorer = UniformScorer { vocab_size: 50 };
        let ppl = perplexity(&texts(&["a b", "c"]), &scorer).unwrap();
        assert!((ppl - 50.0).abs() < 1e-9);
    }

    /// Scorer whose per-token log-prob depends on the text, to expose the
    /// token-weighted (not sentence-weighted) aggregation.
    struct StepScorer;

    impl LmScorer for StepScorer {
        fn id(&self) -> &str {
            "step"
        }

        fn token_logprobs(&self, text: &str) -> Result<Vec<f64>> {
            let lp = if text.contains('x') { -1.0 } else { -2.0 };
            Ok(word_tokens(text).iter().map(|_| lp).collect())
        }
    }

    #[test]
    fn perplexity_weights_by_tokens_not_sentences() {
        // 3 tokens at -1 plus 1 token at -2 → exp(5/4), not exp(3/2)
        let ppl = perplexity(&texts(&["x x x", "y"]), &StepScorer).unwrap();
        assert!((ppl - 1.25f64.exp()).abs() < 1e-12);
        assert!((ppl - 1.5f64.exp()).abs() > 1e-2);
    }

    #[test]
    fn perplexity_zero_tokens_errors() {
        let scorer = UniformScorer { vocab_size: 10 };
        assert!(matches!(
            perplexity(&texts(&["", "..."]), &scorer),
            Err(Error::Metric(_))
        ));
    }

    #[test]
    fn identical_corpora_score_one_everywhere() {
        let t = texts(&["the quick brown fox", "jumps over the lazy dog"]);
        let q = rouge_bleu(&t, &t).unwrap();
        assert_eq!(q.rouge1, 1.0);
        assert_eq!(q.rouge_l, 1.0);
        assert_eq!(q.bleu1, 1.0);
        assert_eq!(q.bleu2, 1.0);
        assert_eq!(q.bleu4, 1.0);
        assert_eq!(q.skipped_pairs, 0);
    }

    #[test]
    fn bleu_unigram_and_bigram_hand_case() {
        // pred "a b x d" vs gold "a b c d": 3/4 unigrams, 1/3 bigrams, BP=1
        let q = rouge_bleu(&texts(&["a b x d"]), &texts(&["a b c d"])).unwrap();
        assert!((q.bleu1 - 0.75).abs() < 1e-12);
        // sqrt(0.75 * 1/3) = 0.5
        assert!((q.bleu2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bleu4_floors_zero_ngram_precisions() {
        // no common 3- or 4-grams: floored, tiny but defined and positive
        let q = rouge_bleu(&texts(&["a b x d"]), &texts(&["a b c d"])).unwrap();
        assert!(q.bleu4 > 0.0);
        assert!(q.bleu4 < 1e-3);
    }

    #[test]
    fn brevity_penalty_hand_case() {
        // pred 2 tokens, gold 4: unigram precision 1, BP = exp(1 - 4/2) = e^-1
        let q = rouge_bleu(&texts(&["a b"]), &texts(&["a b c d"])).unwrap();
        assert!((q.bleu1 - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let q = rouge_bleu(&texts(&[""]), &texts(&["a b"])).unwrap();
        assert_eq!(q.rouge1, 0.0);
        assert_eq!(q.rouge_l, 0.0);
        assert_eq!(q.bleu1, 0.0);
        assert_eq!(q.bleu4, 0.0);
    }

    #[test]
    fn rouge_f_measure_hand_case() {
        // overlap 1: P=1/3, R=1/2 → F = 0.4; LCS is also 1
        let q = rouge_bleu(&texts(&["a b c"]), &texts(&["a d"])).unwrap();
        assert!((q.rouge1 - 0.4).abs() < 1e-12);
        assert!((q.rouge_l - 0.4).abs() < 1e-12);
    }

    #[test]
    fn rouge_l_respects_word_order() {
        // bag identical (ROUGE-1 = 1) but LCS of "c b a" vs "a b c" is 1
        let q = rouge_bleu(&texts(&["c b a"]), &texts(&["a b c"])).unwrap();
        assert_eq!(q.rouge1, 1.0);
        assert!((q.rouge_l - 1.0 / 3.0).abs() < 1e-12);
        assert!(q.rouge_l < q.rouge1);
    }

    #[test]
    fn bleu_clips_repeated_ngrams() {
        // "a a a" vs "a": clipped unigrams 1 of 3, pred longer so BP=1
        let q = rouge_bleu(&texts(&["a a a"]), &texts(&["a"])).unwrap();
        assert!((q.bleu1 - 1.0 / 3.0).abs() < 1e-12);
        // ROUGE-1: P=1/3, R=1 → F=0.5
        assert!((q.rouge1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_gold_pairs_are_skipped_and_counted() {
        let pred = texts(&["a b", "anything"]);
        let gold = texts(&["a b", "..."]);
        let q = rouge_bleu(&pred, &gold).unwrap();
        assert_eq!(q.skipped_pairs, 1);
        // surviving pair is exact
        assert_eq!(q.rouge1, 1.0);
        assert_eq!(q.bleu1, 1.0);
    }

    #[test]
    fn all_empty_golds_error() {
        assert!(matches!(
            rouge_bleu(&texts(&["a"]), &texts(&[""])),
            Err(Error::Metric(_))
        ));
    }

    #[test]
    fn rouge_bleu_length_mismatch_errors() {
        assert!(matches!(
            rouge_bleu(&texts(&["a"]), &[]),
            Err(Error::Metric(_))
        ));
    }

    #[test]
    fn embedding_similarity_hand_cosines() {
        let victim = pinned_victim();
        // cos([1,0],[0,1]) = 0; cos([1,1],[3,4]) = 7/(√2·5)
        let es = embedding_similarity(
            &texts(&["a", "a b"]),
            &texts(&["b", "c"]),
            &victim,
        )
        .unwrap();
        let expected = (0.0 + 7.0 / (2.0f64.sqrt() * 5.0)) / 2.0;
        assert!((es - expected).abs() < 1e-9);
    }

    #[test]
    fn embedding_similarity_skips_zero_norm_pairs() {
        let victim = pinned_victim();
        // empty text embeds to the zero vector: that pair is dropped
        let es = embedding_similarity(&texts(&["", "a"]), &texts(&["b", "a"]), &victim).unwrap();
        assert!((es - 1.0).abs() < 1e-9);
    }

    #[test]
    fn embedding_similarity_all_undefined_errors() {
        let victim = pinned_victim();
        assert!(matches!(
            embedding_similarity(&texts(&[""]), &texts(&["a"]), &victim),
            Err(Error::Metric(_))
        ));
    }

    #[test]
    fn bundle_hand_case_and_entity_free_fallback() {
        let victim = pinned_victim();
        let scorer = UniformScorer { vocab_size: 4 };
        let ner = DictionaryNer::new(Vec::<(String, EntityLabel)>::new());
        let mut stop = BTreeSet::new();
        stop.insert("the".to_string());

        let pred = texts(&["a b", "a"]);
        let gold = texts(&["a b", "b"]);
        let test_set = texts(&["the cat"]);
        let b = compute_bundle(&pred, &gold, &test_set, &victim, &scorer, &ner, &stop).unwrap();

        assert_eq!(b.precision, 2.0 / 3.0);
        assert_eq!(b.recall, 2.0 / 3.0);
        // no gold entities anywhere: reported as zero recovery, not an error
        assert_eq!(b.nerr, 0.0);
        assert_eq!(b.swr, 0.0);
        assert_eq!(b.swr_diff_vs_test, -50.0);
        // pairs: cos=1 and cos=0
        assert!((b.es - 0.5).abs() < 1e-9);
        assert!((b.ppl - 4.0).abs() < 1e-9);
        assert!((b.bleu1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((b.rouge1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bundle_serde_round_trip() {
        let b = MetricsBundle {
            precision: 0.5,
            recall: 0.25,
            f1: 1.0 / 3.0,
            swr: 12.5,
            swr_diff_vs_test: -3.25,
            nerr: 0.75,
            es: 0.9,
            ppl: 42.0,
            rouge1: 0.6,
            rouge_l: 0.5,
            bleu1: 0.4,
            bleu2: 0.3,
            bleu4: 0.2,
        };
        let j = serde_json::to_string(&b).unwrap();
        assert!(j.contains("\"rougeL\""));
        let back: MetricsBundle = serde_json::from_str(&j).unwrap();
        assert_eq!(back, b);
    }
}
