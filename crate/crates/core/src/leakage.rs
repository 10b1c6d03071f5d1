//! Training-data leakage audit.
//!
//! Given (original, masked, alternative) triples, the audit aligns each
//! placeholder to the entity spans it replaced, scores original and
//! alternative under the attacker with and without the embedding of the
//! masked sentence as prefix, and compares the two likelihood distributions
//! (paired t-test over per-sample differences). A victim that leaks its
//! training data shows a significant positive gap on the masked tokens when
//! the prefix is present; a blind victim does not.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::embedder::Victim;
use crate::error::{Error, Result};
use crate::geia::AttackerModel;
use crate::reasoner::MaskedTriple;

/// Minimum fraction of anchor characters that must match in both the
/// original and the alternative for a sample to stay in the audit.
pub const ANCHOR_COVERAGE_FLOOR: f64 = 0.9;

/// Char spans (half-open) of the entity text behind each placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanAlignment {
    pub original_spans: Vec<(usize, usize)>,
    pub alternative_spans: Vec<(usize, usize)>,
    pub anchor_coverage: f64,
}

/// Why a sample fell out of the audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExclusionReason {
    AlignFail,
    ScoreFail,
}

fn find_chars(haystack: &[char], needle: &[char], from: usize) -> Option<usize> {
    if needle.is_empty() || from > haystack.len() {
        return None;
    }
    haystack[from..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

struct AnchorMatch {
    anchor_spans: Vec<(usize, usize)>,
    matched_chars: usize,
}

/// Greedy left-to-right match: each anchor is placed at the leftmost
/// occurrence of its longest prefix found after the previous match.
fn match_anchors(target: &[char], anchors: &[Vec<char>]) -> AnchorMatch {
    let mut cursor = 0usize;
    let mut spans = Vec::with_capacity(anchors.len());
    let mut matched = 0usize;
    for (i, anchor) in anchors.iter().enumerate() {
        if anchor.is_empty() {
            // an empty trailing anchor pins the last placeholder to the end
            let pos = if i == anchors.len() - 1 { target.len() } else { cursor };
            spans.push((pos, pos));
            cursor = pos;
            continue;
        }
        let mut placed = false;
        for len in (1..=anchor.len()).rev() {
            if let Some(p) = find_chars(target, &anchor[..len], cursor) {
                spans.push((p, p + len));
                matched += len;
                cursor = p + len;
                placed = true;
                break;
            }
        }
        if !placed {
            spans.push((cursor, cursor));
        }
    }
    AnchorMatch { anchor_spans: spans, matched_chars: matched }
}

/// Align the masked text's placeholders to char spans in the original and
/// alternative texts.
///
/// The masked text is split at its placeholders into literal anchors; the
/// text between consecutive matched anchors is the span for the placeholder
/// in between. Coverage below [`ANCHOR_COVERAGE_FLOOR`] in either target
/// rejects the sample.
pub fn align_spans(triple: &MaskedTriple) -> Result<SpanAlignment> {
    let masked: Vec<char> = triple.masked.chars().collect();
    // anchors: text before the first placeholder, between consecutive ones,
    // and after the last
    let mut anchors: Vec<Vec<char>> = Vec::with_capacity(triple.placeholders.len() + 1);
    let mut prev_end = 0usize;
    for p in &triple.placeholders {
        if p.start < prev_end || p.end > masked.len() || p.start > p.end {
            return Err(Error::AlignFail(format!(
                "placeholder spans invalid in {:?}",
                triple.masked
            )));
        }
        anchors.push(masked[prev_end..p.start].to_vec());
        prev_end = p.end;
    }
    anchors.push(masked[prev_end..].to_vec());

    if triple.placeholders.is_empty() {
        // no entities: nothing to align, sample participates only in
        // whole-sentence aggregation
        return Ok(SpanAlignment {
            original_spans: Vec::new(),
            alternative_spans: Vec::new(),
            anchor_coverage: 1.0,
        });
    }

    let total_anchor_chars: usize = anchors.iter().map(|a| a.len()).sum();
    let orig: Vec<char> = triple.original.chars().collect();
    let alt: Vec<char> = triple.alternative.chars().collect();
    let m_orig = match_anchors(&orig, &anchors);
    let m_alt = match_anchors(&alt, &anchors);
    let coverage = |m: &AnchorMatch| {
        if total_anchor_chars == 0 {
            1.0
        } else {
            m.matched_chars as f64 / total_anchor_chars as f64
        }
    };
    let anchor_coverage = coverage(&m_orig).min(coverage(&m_alt));
    if anchor_coverage < ANCHOR_COVERAGE_FLOOR {
        return Err(Error::AlignFail(format!(
            "anchor coverage {anchor_coverage:.3} below floor {ANCHOR_COVERAGE_FLOOR} for {:?}",
            triple.masked
        )));
    }
    let spans_between = |m: &AnchorMatch| -> Vec<(usize, usize)> {
        (0..triple.placeholders.len())
            .map(|j| (m.anchor_spans[j].1, m.anchor_spans[j + 1].0))
            .collect()
    };
    Ok(SpanAlignment {
        original_spans: spans_between(&m_orig),
        alternative_spans: spans_between(&m_alt),
        anchor_coverage,
    })
}

/// Mean log-likelihoods for one (text, prefix) condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellScores {
    /// Mean per-token log-prob over the whole sentence.
    pub whole: f64,
    /// Mean over tokens intersecting the aligned spans; absent when no token
    /// intersects (e.g. placeholder-free samples).
    pub masked_only: Option<f64>,
}

/// All four conditions for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodReport {
    pub orig_with: CellScores,
    pub orig_without: CellScores,
    pub sim_with: CellScores,
    pub sim_without: CellScores,
}

fn cell_scores(
    attacker: &AttackerModel,
    text: &str,
    prefix: Option<&[f32]>,
    spans: &[(usize, usize)],
) -> Result<CellScores> {
    let scored = attacker.score_sequence(text, prefix)?;
    let n = scored.token_logprobs.len();
    if n == 0 {
        return Err(Error::Data(format!("no tokens to score in {text:?}")));
    }
    let whole = scored.token_logprobs.iter().sum::<f64>() / n as f64;
    let mut masked_sum = 0.0f64;
    let mut masked_n = 0usize;
    for (i, &(ts, te)) in scored.tokens.offsets.iter().enumerate() {
        let hit = spans.iter().any(|&(s, e)| ts < e && s < te);
        if hit {
            masked_sum += scored.token_logprobs[i];
            masked_n += 1;
        }
    }
    let masked_only = if masked_n == 0 { None } else { Some(masked_sum / masked_n as f64) };
    Ok(CellScores { whole, masked_only })
}

/// Score one triple in all four conditions. The prefix is always the victim
/// embedding of the **masked** sentence; "without" scores use a zero prefix.
pub fn score_conditions(
    attacker: &AttackerModel,
    victim: &dyn Victim,
    triple: &MaskedTriple,
    alignment: &SpanAlignment,
) -> Result<LikelihoodReport> {
    let desc = victim.descriptor();
    if attacker.victim_id != desc.victim_id {
        return Err(Error::Audit(format!(
            "attacker was trained against victim {:?}, audit victim is {:?}",
            attacker.victim_id, desc.victim_id
        )));
    }
    let f_masked = victim.embed(&triple.masked)?;
    Ok(LikelihoodReport {
        orig_with: cell_scores(attacker, &triple.original, Some(&f_masked), &alignment.original_spans)?,
        orig_without: cell_scores(attacker, &triple.original, None, &alignment.original_spans)?,
        sim_with: cell_scores(attacker, &triple.alternative, Some(&f_masked), &alignment.alternative_spans)?,
        sim_without: cell_scores(attacker, &triple.alternative, None, &alignment.alternative_spans)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Whole,
    MaskedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    With,
    Without,
}

/// Two-sided paired-t p-value, or a flag when the test is degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PValue {
    Value(f64),
    NotComputable,
}

impl PValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(*v),
            Self::NotComputable => None,
        }
    }
}

impl Serialize for PValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Value(v) => s.serialize_f64(*v),
            Self::NotComputable => s.serialize_str("NOT_COMPUTABLE"),
        }
    }
}

impl<'de> Deserialize<'de> for PValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(PValue::Value)
                .ok_or_else(|| serde::de::Error::custom("p_value not representable as f64")),
            serde_json::Value::String(s) if s == "NOT_COMPUTABLE" => Ok(PValue::NotComputable),
            other => Err(serde::de::Error::custom(format!("invalid p_value {other}"))),
        }
    }
}

/// One Table-style cell: distribution comparison for a fixed
/// (aggregation, condition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellVerdict {
    pub aggregation: Aggregation,
    pub condition: Condition,
    pub mean_orig: f64,
    pub mean_sim: f64,
    /// 100 × (mean_orig − mean_sim) / |mean_orig|.
    pub percent_diff: f64,
    /// Paired t statistic; absent when the differences have zero variance.
    pub t_statistic: Option<f64>,
    pub p_value: PValue,
    pub n_included: usize,
    pub n_excluded: usize,
}

fn pick(report: &LikelihoodReport, condition: Condition) -> (CellScores, CellScores) {
    match condition {
        Condition::With => (report.orig_with, report.sim_with),
        Condition::Without => (report.orig_without, report.sim_without),
    }
}

fn agg_value(scores: CellScores, aggregation: Aggregation) -> Option<f64> {
    match aggregation {
        Aggregation::Whole => Some(scores.whole),
        Aggregation::MaskedOnly => scores.masked_only,
    }
}

/// Compare original vs alternative likelihoods over samples for one cell.
///
/// percent_diff = 100 × (L_orig − L_sim) / |L_orig| (the formula implied by
/// the reference results); p-value from a paired two-sided t-test on the
/// per-sample differences, df = n−1.
pub fn compare_distributions(
    reports: &[LikelihoodReport],
    aggregation: Aggregation,
    condition: Condition,
) -> Result<CellVerdict> {
    let mut orig_vals = Vec::new();
    let mut sim_vals = Vec::new();
    for r in reports {
        let (o, s) = pick(r, condition);
        if let (Some(ov), Some(sv)) = (agg_value(o, aggregation), agg_value(s, aggregation)) {
            orig_vals.push(ov);
            sim_vals.push(sv);
        }
    }
    let n = orig_vals.len();
    if n < 2 {
        return Err(Error::Audit(format!(
            "cell {aggregation:?}/{condition:?} has {n} included samples; need at least 2"
        )));
    }
    let mean_orig = orig_vals.iter().sum::<f64>() / n as f64;
    let mean_sim = sim_vals.iter().sum::<f64>() / n as f64;
    if mean_orig == 0.0 {
        return Err(Error::Audit("original mean likelihood is zero; percent difference undefined".into()));
    }
    let percent_diff = 100.0 * (mean_orig - mean_sim) / mean_orig.abs();

    let diffs: Vec<f64> = orig_vals.iter().zip(sim_vals.iter()).map(|(o, s)| o - s).collect();
    let mean_d = diffs.iter().sum::<f64>() / n as f64;
    let var_d = diffs.iter().map(|d| (d - mean_d).powi(2)).sum::<f64>() / (n - 1) as f64;
    let (t_statistic, p_value) = if var_d == 0.0 {
        (None, PValue::NotComputable)
    } else {
        let t = mean_d / (var_d.sqrt() / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map_err(|e| Error::Audit(format!("t distribution: {e}")))?;
        let p = 2.0 * (1.0 - dist.cdf(t.abs()));
        (Some(t), PValue::Value(p.clamp(0.0, 1.0)))
    };

    Ok(CellVerdict {
        aggregation,
        condition,
        mean_orig,
        mean_sim,
        percent_diff,
        t_statistic,
        p_value,
        n_included: n,
        n_excluded: reports.len() - n,
    })
}

/// Per-sample exclusion entry in the audit report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedSample {
    pub index: usize,
    pub reason: ExclusionReason,
    pub detail: String,
}

/// Full four-cell audit output (Table-shaped).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub victim_id: String,
    pub reasoner_id: String,
    pub n_triples: usize,
    pub n_scored: usize,
    pub excluded: Vec<ExcludedSample>,
    /// Keys: "whole/with", "whole/without", "masked_only/with",
    /// "masked_only/without".
    pub cells: BTreeMap<String, CellVerdict>,
}

pub fn cell_key(aggregation: Aggregation, condition: Condition) -> String {
    let a = match aggregation {
        Aggregation::Whole => "whole",
        Aggregation::MaskedOnly => "masked_only",
    };
    let c = match condition {
        Condition::With => "with",
        Condition::Without => "without",
    };
    format!("{a}/{c}")
}

/// Run the full audit: align → score → compare for all four cells.
///
/// Samples failing alignment or scoring are excluded with accounting; the
/// audit aborts if fewer than half the triples survive.
pub fn audit(
    triples: &[MaskedTriple],
    attacker: &AttackerModel,
    victim: &dyn Victim,
) -> Result<AuditReport> {
    if triples.is_empty() {
        return Err(Error::Data("no triples to audit".into()));
    }
    let mut reports = Vec::with_capacity(triples.len());
    let mut excluded = Vec::new();
    for (index, triple) in triples.iter().enumerate() {
        let alignment = match align_spans(triple) {
            Ok(a) => a,
            Err(Error::AlignFail(detail)) => {
                excluded.push(ExcludedSample { index, reason: ExclusionReason::AlignFail, detail });
                continue;
            }
            Err(e) => return Err(e),
        };
        match score_conditions(attacker, victim, triple, &alignment) {
            Ok(r) => reports.push(r),
            Err(Error::Data(detail)) => {
                excluded.push(ExcludedSample { index, reason: ExclusionReason::ScoreFail, detail });
            }
            Err(e) => return Err(e),
        }
    }
    let n_scored = reports.len();
    if (n_scored as f64) < 0.5 * triples.len() as f64 {
        return Err(Error::Audit(format!(
            "inclusion rate {n_scored}/{} below 50%; refusing to aggregate",
            triples.len()
        )));
    }
    let mut cells = BTreeMap::new();
    for aggregation in [Aggregation::Whole, Aggregation::MaskedOnly] {
        for condition in [Condition::With, Condition::Without] {
            let mut cell = compare_distributions(&reports, aggregation, condition)?;
            // account for samples that never reached scoring
            cell.n_excluded += triples.len() - n_scored;
            cells.insert(cell_key(aggregation, condition), cell);
        }
    }
    Ok(AuditReport {
        victim_id: victim.descriptor().victim_id.clone(),
        reasoner_id: triples[0].reasoner_id.clone(),
        n_triples: triples.len(),
        n_scored,
        excluded,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::ToyAdditive;
    use crate::geia::DecoderConfig;
    use crate::reasoner::{parse_response, GLM4_ID};
    use crate::textops::WordTokenizer;

    fn rep(o: f64, s: f64) -> LikelihoodReport {
        let c = |v: f64| CellScores { whole: v, masked_only: Some(v) };
        LikelihoodReport {
            orig_with: c(o),
            orig_without: c(o),
            sim_with: c(s),
            sim_without: c(s),
        }
    }

    fn reports(pairs: &[(f64, f64)]) -> Vec<LikelihoodReport> {
        pairs.iter().map(|&(o, s)| rep(o, s)).collect()
    }

    /// percent_diff for a cell whose per-sample values all sit at the two means.
    fn percent_from_means(orig: f64, sim: f64) -> f64 {
        let r = reports(&[(orig, sim), (orig, sim)]);
        compare_distributions(&r, Aggregation::Whole, Condition::With)
            .unwrap()
            .percent_diff
    }

    #[test]
    fn published_grid_cells_reproduce_within_a_cent() {
        // (mean_orig, mean_sim, printed %) — whole-sentence block then
        // masked-tokens block, with/without prefix interleaved per row
        let cases: [(f64, f64, f64); 16] = [
            (-5.15, -5.61, 8.93),
            (-4.83, -5.44, 12.63),
            (-5.56, -5.96, 7.19),
            (-4.91, -5.36, 9.16),
            (-5.28, -5.62, 6.44),
            (-4.94, -5.44, 10.12),
            (-5.71, -6.00, 5.08),
            (-5.03, -5.37, 6.76),
            (-10.4, -13.33, 28.17),
            (-11.05, -11.26, 1.9),
            (-10.66, -13.36, 25.33),
            (-11.06, -11.20, 1.27),
            (-9.99, -13.36, 33.73),
            (-11.08, -11.04, -0.36),
            (-10.21, -13.26, 29.87),
            (-11.11, -10.99, -1.08),
        ];
        for (orig, sim, expected) in cases {
            let got = percent_from_means(orig, sim);
            assert!(
                (got - expected).abs() < 0.01,
                "({orig}, {sim}): got {got:.4}%, printed {expected}%"
            );
        }
    }

    #[test]
    fn positive_percent_means_original_more_likely() {
        // less-negative original log-likelihood → leak signal is positive
        assert!(percent_from_means(-5.0, -6.0) > 0.0);
        assert!(percent_from_means(-6.0, -5.0) < 0.0);
        assert!((percent_from_means(-5.0, -6.0) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn paired_t_matches_closed_form_df2() {
        // diffs 1, 2, 3 → t = 2√3; for df = 2 the two-sided p-value has the
        // elementary form 1 − t/√(2+t²)
        let r = reports(&[(10.0, 9.0), (10.0, 8.0), (10.0, 7.0)]);
        let cell = compare_distributions(&r, Aggregation::Whole, Condition::With).unwrap();
        let t = cell.t_statistic.unwrap();
        assert!((t - 2.0 * 3.0f64.sqrt()).abs() < 1e-12);
        let p = cell.p_value.value().unwrap();
        let expected_p = 1.0 - t / (2.0 + t * t).sqrt();
        assert!((p - expected_p).abs() < 1e-9, "p {p} vs closed form {expected_p}");
        assert_eq!(cell.n_included, 3);
        assert_eq!(cell.n_excluded, 0);
    }

    #[test]
    fn paired_t_matches_closed_form_df1() {
        // diffs 1, 3 → t = 2; for df = 1 the CDF is arctan-based
        let r = reports(&[(10.0, 9.0), (10.0, 7.0)]);
        let cell = compare_distributions(&r, Aggregation::Whole, Condition::With).unwrap();
        let t = cell.t_statistic.unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        let expected_p = 1.0 - 2.0 * t.atan() / std::f64::consts::PI;
        let p = cell.p_value.value().unwrap();
        assert!((p - expected_p).abs() < 1e-9, "p {p} vs closed form {expected_p}");
    }

    #[test]
    fn zero_variance_differences_are_flagged() {
        let r = reports(&[(5.0, 3.0), (5.0, 3.0)]);
        let cell = compare_distributions(&r, Aggregation::Whole, Condition::With).unwrap();
        assert_eq!(cell.t_statistic, None);
        assert_eq!(cell.p_value, PValue::NotComputable);
        assert!((cell.percent_diff - 40.0).abs() < 1e-12);
    }

    #[test]
    fn swapping_sides_negates_t_and_flips_percent_sign() {
        let pairs = [(-5.0, -6.0), (-5.5, -5.9), (-4.7, -6.1)];
        let fwd = reports(&pairs);
        let swapped: Vec<LikelihoodReport> =
            pairs.iter().map(|&(o, s)| rep(s, o)).collect();
        let a = compare_distributions(&fwd, Aggregation::Whole, Condition::With).unwrap();
        let b = compare_distributions(&swapped, Aggregation::Whole, Condition::With).unwrap();
        assert_eq!(b.t_statistic.unwrap(), -a.t_statistic.unwrap());
        assert_eq!(b.p_value.value().unwrap(), a.p_value.value().unwrap());
        assert!(a.percent_diff > 0.0);
        assert!(b.percent_diff < 0.0);
    }

    #[test]
    fn samples_without_masked_tokens_leave_masked_cells_only() {
        let mut rs = reports(&[(10.0, 9.0), (10.0, 7.0)]);
        rs.push(LikelihoodReport {
            orig_with: CellScores { whole: 10.0, masked_only: None },
            orig_without: CellScores { whole: 10.0, masked_only: None },
            sim_with: CellScores { whole: 8.0, masked_only: None },
            sim_without: CellScores { whole: 8.0, masked_only: None },
        });
        let whole = compare_distributions(&rs, Aggregation::Whole, Condition::With).unwrap();
        assert_eq!((whole.n_included, whole.n_excluded), (3, 0));
        let masked = compare_distributions(&rs, Aggregation::MaskedOnly, Condition::With).unwrap();
        assert_eq!((masked.n_included, masked.n_excluded), (2, 1));
    }

    #[test]
    fn comparison_needs_two_samples_and_nonzero_mean() {
        let one = reports(&[(10.0, 9.0)]);
        assert!(matches!(
            compare_distributions(&one, Aggregation::Whole, Condition::With),
            Err(Error::Audit(_))
        ));
        let zero_mean = reports(&[(1.0, 0.5), (-1.0, 0.5)]);
        assert!(matches!(
            compare_distributions(&zero_mean, Aggregation::Whole, Condition::With),
            Err(Error::Audit(_))
        ));
    }

    #[test]
    fn p_value_serde_uses_sentinel_string() {
        assert_eq!(serde_json::to_string(&PValue::Value(0.05)).unwrap(), "0.05");
        assert_eq!(
            serde_json::to_string(&PValue::NotComputable).unwrap(),
            "\"NOT_COMPUTABLE\""
        );
        let v: PValue = serde_json::from_str("0.25").unwrap();
        assert_eq!(v, PValue::Value(0.25));
        let v: PValue = serde_json::from_str("\"NOT_COMPUTABLE\"").unwrap();
        assert_eq!(v, PValue::NotComputable);
        assert!(serde_json::from_str::<PValue>("\"bogus\"").is_err());
    }

    #[test]
    fn cell_verdict_round_trips_with_missing_t() {
        let cell = CellVerdict {
            aggregation: Aggregation::MaskedOnly,
            condition: Condition::Without,
            mean_orig: -10.4,
            mean_sim: -13.33,
            percent_diff: 28.17,
            t_statistic: None,
            p_value: PValue::NotComputable,
            n_included: 2,
            n_excluded: 1,
        };
        let j = serde_json::to_string(&cell).unwrap();
        assert!(j.contains("\"masked_only\""));
        assert!(j.contains("\"without\""));
        let back: CellVerdict = serde_json::from_str(&j).unwrap();
        assert_eq!(back, cell);
    }

    // --- alignment ---

    fn triple(raw: &str, original: &str) -> MaskedTriple {
        parse_response(raw, original, GLM4_ID).unwrap().triple
    }

    #[test]
    fn alignment_recovers_entity_spans() {
        let t = triple(
            "Masked version: <PERSON> visited <LOCATION>[SEP]Alternative version: eve visited rome",
            "alice visited paris",
        );
        let a = align_spans(&t).unwrap();
        assert_eq!(a.anchor_coverage, 1.0);
        assert_eq!(a.original_spans, vec![(0, 5), (14, 19)]);
        assert_eq!(a.alternative_spans, vec![(0, 3), (12, 16)]);
        let orig: Vec<char> = t.original.chars().collect();
        let (s, e) = a.original_spans[0];
        assert_eq!(orig[s..e].iter().collect::<String>(), "alice");
        let (s, e) = a.original_spans[1];
        assert_eq!(orig[s..e].iter().collect::<String>(), "paris");
    }

    #[test]
    fn alignment_handles_interior_placeholder() {
        let t = triple(
            "Masked version: she saw <PERSON> leave[SEP]Alternative version: she saw bob leave",
            "she saw alice leave",
        );
        let a = align_spans(&t).unwrap();
        assert_eq!(a.original_spans, vec![(8, 13)]);
        assert_eq!(a.alternative_spans, vec![(8, 11)]);
    }

    #[test]
    fn alignment_counts_multibyte_text_in_chars() {
        let t = triple(
            "Masked version: <PERSON> war Führer der Gruppe[SEP]Alternative version: Müller war Führer der Gruppe",
            "Jürgen war Führer der Gruppe",
        );
        let a = align_spans(&t).unwrap();
        assert_eq!(a.original_spans, vec![(0, 6)]);
        let orig: Vec<char> = t.original.chars().collect();
        let (s, e) = a.original_spans[0];
        assert_eq!(orig[s..e].iter().collect::<String>(), "Jürgen");
        let alt: Vec<char> = t.alternative.chars().collect();
        let (s, e) = a.alternative_spans[0];
        assert_eq!(alt[s..e].iter().collect::<String>(), "Müller");
    }

    #[test]
    fn placeholder_free_triples_align_trivially() {
        let t = triple(
            "Masked version: nothing secret here[SEP]Alternative version: nothing secret here",
            "nothing secret here",
        );
        let a = align_spans(&t).unwrap();
        assert!(a.original_spans.is_empty());
        assert!(a.alternative_spans.is_empty());
        assert_eq!(a.anchor_coverage, 1.0);
    }

    #[test]
    fn unrelated_masked_text_fails_alignment() {
        let t = triple(
            "Masked version: <PERSON> went to the market yesterday evening[SEP]Alternative version: bob went to the market yesterday evening",
            "completely different words here altogether",
        );
        match align_spans(&t) {
            Err(Error::AlignFail(msg)) => assert!(msg.contains("coverage")),
            other => panic!("expected AlignFail, got {other:?}"),
        }
    }

    #[test]
    fn malformed_placeholder_spans_fail_alignment() {
        use crate::reasoner::Placeholder;
        let t = MaskedTriple {
            original: "a b c".into(),
            masked: "a <X> c".into(),
            alternative: "a d c".into(),
            placeholders: vec![
                Placeholder { label: "X".into(), start: 5, end: 8 },
                Placeholder { label: "X".into(), start: 2, end: 4 },
            ],
            reasoner_id: GLM4_ID.into(),
        };
        assert!(matches!(align_spans(&t), Err(Error::AlignFail(_))));
    }

    // --- end-to-end audit plumbing ---

    fn audit_fixture() -> (Vec<MaskedTriple>, AttackerModel, ToyAdditive) {
        let triples = vec![
            triple(
                "Masked version: <PERSON> visited <LOCATION>[SEP]Alternative version: eve visited rome",
                "alice visited paris",
            ),
            triple(
                "Masked version: <PERSON> saw the old tower[SEP]Alternative version: bob saw the old tower",
                "carol saw the old tower",
            ),
            triple(
                "Masked version: <PERSON> went to the market yesterday evening[SEP]Alternative version: bob went to the market yesterday evening",
                "completely different words here altogether",
            ),
        ];
        let words: Vec<String> = [
            "alice", "visited", "paris", "eve", "rome", "carol", "saw", "the", "old", "tower",
            "bob", "went", "to", "market", "yesterday", "evening",
        ]
        .iter()
        .map(|w| w.to_string())
        .collect();
        let tokenizer = WordTokenizer::new(words.iter().cloned());
        let victim = ToyAdditive::new("toy-additive", &words, 16, 3);
        let dec = DecoderConfig { layers: 1, hidden_dim: 32, heads: 2, max_len: 12 };
        let attacker = AttackerModel::init(dec, tokenizer, 16, "toy-additive", false, 5);
        (triples, attacker, victim)
    }

    #[test]
    fn audit_accounts_for_every_triple() {
        let (triples, attacker, victim) = audit_fixture();
        let report = audit(&triples, &attacker, &victim).unwrap();
        assert_eq!(report.n_triples, 3);
        assert_eq!(report.n_scored, 2);
        assert_eq!(report.excluded.len(), 1);
        assert_eq!(report.excluded[0].index, 2);
        assert_eq!(report.excluded[0].reason, ExclusionReason::AlignFail);
        assert_eq!(report.victim_id, "toy-additive");
        assert_eq!(report.reasoner_id, GLM4_ID);
        let keys: Vec<&str> = report.cells.keys().map(|k| k.as_str()).collect();
        assert_eq!(keys, ["masked_only/with", "masked_only/without", "whole/with", "whole/without"]);
        for cell in report.cells.values() {
            assert_eq!(cell.n_included + cell.n_excluded, 3);
            assert!(cell.n_included >= 2);
        }
    }

    #[test]
    fn audit_refuses_majority_exclusion() {
        let (mut triples, attacker, victim) = audit_fixture();
        // keep only the unalignable sample twice: inclusion drops to zero
        let bad = triples.pop().unwrap();
        let triples = vec![bad.clone(), bad];
        assert!(matches!(audit(&triples, &attacker, &victim), Err(Error::Audit(_))));
    }

    #[test]
    fn audit_requires_matching_victim() {
        let (triples, attacker, _) = audit_fixture();
        let words: Vec<String> = vec!["alice".into(), "visited".into(), "paris".into()];
        let other = ToyAdditive::new("some-other-victim", &words, 16, 3);
        assert!(matches!(audit(&triples, &attacker, &other), Err(Error::Audit(_))));
    }

    #[test]
    fn audit_rejects_empty_input() {
        let (_, attacker, victim) = audit_fixture();
        assert!(matches!(audit(&[], &attacker, &victim), Err(Error::Data(_))));
    }

    #[test]
    fn cell_keys_are_stable() {
        assert_eq!(cell_key(Aggregation::Whole, Condition::With), "whole/with");
        assert_eq!(cell_key(Aggregation::MaskedOnly, Condition::Without), "masked_only/without");
    }
}
