//! Annotation-quality statistics: score distributions, confusion matrices,
//! rank agreement, cross-facet patterns and disagreement reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotator::LabeledPair;
use crate::facet::Facet;
use crate::io::{self, IoError};
use crate::metrics::MetricError;

#[derive(Debug, thiserror::Error)]
pub enum AgreementError {
    #[error("no labels given")]
    Empty,
    #[error("annotator sets are not aligned: {missing_in_second} id(s) missing from the second set, {missing_in_first} from the first (e.g. {examples:?})")]
    KeyMismatch {
        missing_in_first: usize,
        missing_in_second: usize,
        examples: Vec<String>,
    },
    #[error("duplicate pair id `{0}`")]
    DuplicateId(String),
    #[error("score {0} outside 0-3")]
    ScoreRange(u8),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Anything carrying a 0-3 grade per facet.
pub trait FacetScores {
    fn facet_score(&self, facet: Facet) -> u8;
}

impl FacetScores for LabeledPair {
    fn facet_score(&self, facet: Facet) -> u8 {
        self.score(facet)
    }
}

/// Line format of `human_labels.jsonl` (and of any aligned label set).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub pair_id: String,
    pub bg_score: u8,
    pub mt_score: u8,
}

impl FacetScores for ScoreRecord {
    fn facet_score(&self, facet: Facet) -> u8 {
        match facet {
            Facet::Background => self.bg_score,
            Facet::Method => self.mt_score,
        }
    }
}

impl From<&LabeledPair> for ScoreRecord {
    fn from(l: &LabeledPair) -> Self {
        Self {
            pair_id: l.pair_id(),
            bg_score: l.background.score,
            mt_score: l.method.score,
        }
    }
}

pub fn read_score_records(path: &Path) -> Result<Vec<ScoreRecord>, AgreementError> {
    Ok(io::read_jsonl(path)?)
}

/// Reads either aligned score records or a full `labels.jsonl`.
pub fn read_any_scores(path: &Path) -> Result<Vec<ScoreRecord>, AgreementError> {
    let first = io::read_lines(path)?.into_iter().next();
    let is_label_file = first
        .and_then(|(_, l)| serde_json::from_str::<serde_json::Value>(&l).ok())
        .is_some_and(|v| v.get("seed_id").is_some());
    if is_label_file {
        let labels: Vec<LabeledPair> = io::read_jsonl(path)?;
        Ok(labels.iter().map(ScoreRecord::from).collect())
    } else {
        read_score_records(path)
    }
}

/// The 100-pair human/LLM validation sample shipped with the crate.
pub fn validation_sample() -> (Vec<ScoreRecord>, Vec<ScoreRecord>) {
    let parse = |text: &str| -> Vec<ScoreRecord> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).expect("bundled fixture is valid"))
            .collect()
    };
    (
        parse(include_str!("../fixtures/agreement/human_labels.jsonl")),
        parse(include_str!("../fixtures/agreement/llm_labels.jsonl")),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetDistribution {
    pub facet: Facet,
    pub counts: [usize; 4],
    pub percentages: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub n: usize,
    pub background: FacetDistribution,
    pub method: FacetDistribution,
}

impl ScoreDistribution {
    pub fn facet(&self, facet: Facet) -> &FacetDistribution {
        match facet {
            Facet::Background => &self.background,
            Facet::Method => &self.method,
        }
    }
}

pub fn score_distribution<T: FacetScores>(labels: &[T]) -> Result<ScoreDistribution, AgreementError> {
    if labels.is_empty() {
        return Err(AgreementError::Empty);
    }
    let n = labels.len();
    let dist = |facet: Facet| -> Result<FacetDistribution, AgreementError> {
        let mut counts = [0usize; 4];
        for l in labels {
            let s = l.facet_score(facet);
            *counts.get_mut(s as usize).ok_or(AgreementError::ScoreRange(s))? += 1;
        }
        let percentages = counts.map(|c| 100.0 * c as f64 / n as f64);
        Ok(FacetDistribution {
            facet,
            counts,
            percentages,
        })
    };
    Ok(ScoreDistribution {
        n,
        background: dist(Facet::Background)?,
        method: dist(Facet::Method)?,
    })
}

/// Counts indexed `[human][llm]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub facet: Facet,
    pub counts: [[u64; 4]; 4],
    pub n: u64,
}

impl ConfusionMatrix {
    pub fn from_counts(facet: Facet, counts: [[u64; 4]; 4]) -> Self {
        let n = counts.iter().flatten().sum();
        Self { facet, counts, n }
    }

    /// Human-score marginal.
    pub fn row_sums(&self) -> [u64; 4] {
        self.counts.map(|row| row.iter().sum())
    }

    /// LLM-score marginal.
    pub fn col_sums(&self) -> [u64; 4] {
        let mut out = [0; 4];
        for row in &self.counts {
            for (j, c) in row.iter().enumerate() {
                out[j] += c;
            }
        }
        out
    }

    /// Tie-aware Spearman correlation between the two annotators, computed
    /// directly from joint counts: every cell's members share the averaged
    /// rank of their score on each axis.
    pub fn spearman(&self) -> Result<f64, MetricError> {
        let rows = self.row_sums();
        let cols = self.col_sums();
        let mid_ranks = |marg: [u64; 4]| {
            let mut start = 0u64;
            marg.map(|c| {
                let r = start as f64 + (c as f64 + 1.0) / 2.0;
                start += c;
                r
            })
        };
        let (rh, rg) = (mid_ranks(rows), mid_ranks(cols));
        let n = self.n as f64;
        if self.n < 2 {
            return Err(MetricError::Length(self.n as usize, self.n as usize));
        }
        let mean = (n + 1.0) / 2.0;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..4 {
            sxx += rows[i] as f64 * (rh[i] - mean).powi(2);
            syy += cols[i] as f64 * (rg[i] - mean).powi(2);
            for j in 0..4 {
                sxy += self.counts[i][j] as f64 * (rh[i] - mean) * (rg[j] - mean);
            }
        }
        if sxx == 0.0 || syy == 0.0 {
            return Err(MetricError::Constant);
        }
        Ok(sxy / (sxx * syy).sqrt())
    }

    /// Expands the matrix to aligned (human, llm) score lists in cell order.
    pub fn expand(&self) -> (Vec<f64>, Vec<f64>) {
        let mut h = Vec::with_capacity(self.n as usize);
        let mut g = Vec::with_capacity(self.n as usize);
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                for _ in 0..c {
                    h.push(i as f64);
                    g.push(j as f64);
                }
            }
        }
        (h, g)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| Human \\ LLM | 0 | 1 | 2 | 3 | Total |");
        let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|");
        for (i, row) in self.counts.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, c)| if i == j { format!("**{c}**") } else { c.to_string() })
                .collect();
            let _ = writeln!(s, "| {i} | {} | {} |", cells.join(" | "), self.row_sums()[i]);
        }
        let cols: Vec<String> = self.col_sums().iter().map(u64::to_string).collect();
        let _ = writeln!(s, "| Total | {} | {} |", cols.join(" | "), self.n);
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("human,llm_0,llm_1,llm_2,llm_3\n");
        for (i, row) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{},{},{}", row[0], row[1], row[2], row[3]);
        }
        s
    }
}

fn keyed(list: &[(String, u8)]) -> Result<HashMap<&str, u8>, AgreementError> {
    let mut map = HashMap::with_capacity(list.len());
    for (id, s) in list {
        if *s > 3 {
            return Err(AgreementError::ScoreRange(*s));
        }
        if map.insert(id.as_str(), *s).is_some() {
            return Err(AgreementError::DuplicateId(id.clone()));
        }
    }
    Ok(map)
}

fn check_aligned<V>(a: &HashMap<&str, V>, b: &HashMap<&str, V>) -> Result<(), AgreementError> {
    let mut missing_second: Vec<&str> = a.keys().filter(|k| !b.contains_key(*k)).copied().collect();
    let mut missing_first: Vec<&str> = b.keys().filter(|k| !a.contains_key(*k)).copied().collect();
    if missing_first.is_empty() && missing_second.is_empty() {
        return Ok(());
    }
    missing_second.sort_unstable();
    missing_first.sort_unstable();
    Err(AgreementError::KeyMismatch {
        missing_in_first: missing_first.len(),
        missing_in_second: missing_second.len(),
        examples: missing_second
            .iter()
            .chain(&missing_first)
            .take(10)
            .map(|s| s.to_string())
            .collect(),
    })
}

pub fn confusion_matrix(
    human: &[(String, u8)],
    llm: &[(String, u8)],
    facet: Facet,
) -> Result<ConfusionMatrix, AgreementError> {
    let h = keyed(human)?;
    let g = keyed(llm)?;
    check_aligned(&h, &g)?;
    let mut counts = [[0u64; 4]; 4];
    for (id, hs) in &h {
        counts[*hs as usize][g[id] as usize] += 1;
    }
    Ok(ConfusionMatrix::from_counts(facet, counts))
}

fn facet_column(records: &[ScoreRecord], facet: Facet) -> Vec<(String, u8)> {
    records
        .iter()
        .map(|r| (r.pair_id.clone(), r.facet_score(facet)))
        .collect()
}

/// Share of pairs that look alike on one facet but not the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternCounts {
    pub n: usize,
    /// BG <= 1 and MT >= 2.
    pub cross_domain_same_method: usize,
    /// BG >= 2 and MT <= 1.
    pub same_domain_different_method: usize,
}

impl PatternCounts {
    pub fn cross_domain_same_method_pct(&self) -> f64 {
        100.0 * self.cross_domain_same_method as f64 / self.n.max(1) as f64
    }

    pub fn same_domain_different_method_pct(&self) -> f64 {
        100.0 * self.same_domain_different_method as f64 / self.n.max(1) as f64
    }
}

pub fn pattern_counts<T: FacetScores>(labels: &[T]) -> PatternCounts {
    let mut out = PatternCounts {
        n: labels.len(),
        cross_domain_same_method: 0,
        same_domain_different_method: 0,
    };
    for l in labels {
        let (bg, mt) = (l.facet_score(Facet::Background), l.facet_score(Facet::Method));
        if bg <= 1 && mt >= 2 {
            out.cross_domain_same_method += 1;
        }
        if bg >= 2 && mt <= 1 {
            out.same_domain_different_method += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub pair_id: String,
    /// `human - llm`
    pub bg_delta: i8,
    pub mt_delta: i8,
    pub flagged: Vec<Facet>,
}

impl Disagreement {
    pub fn max_abs_delta(&self) -> u8 {
        self.bg_delta.unsigned_abs().max(self.mt_delta.unsigned_abs())
    }
}

fn index_scores(rs: &[ScoreRecord]) -> Result<HashMap<&str, (u8, u8)>, AgreementError> {
    let mut m = HashMap::new();
    for r in rs {
        if m.insert(r.pair_id.as_str(), (r.bg_score, r.mt_score)).is_some() {
            return Err(AgreementError::DuplicateId(r.pair_id.clone()));
        }
    }
    Ok(m)
}

/// Pairs whose |human - llm| reaches `threshold` on at least one facet,
/// largest disagreement first, ties by pair id.
pub fn disagreement_report(
    human: &[ScoreRecord],
    llm: &[ScoreRecord],
    threshold: u8,
) -> Result<Vec<Disagreement>, AgreementError> {
    let h = index_scores(human)?;
    let g = index_scores(llm)?;
    check_aligned(&h, &g)?;
    let mut out: Vec<Disagreement> = h
        .iter()
        .filter_map(|(id, &(hb, hm))| {
            let (gb, gm) = g[id];
            let bg_delta = hb as i8 - gb as i8;
            let mt_delta = hm as i8 - gm as i8;
            let mut flagged = Vec::new();
            if bg_delta.unsigned_abs() >= threshold {
                flagged.push(Facet::Background);
            }
            if mt_delta.unsigned_abs() >= threshold {
                flagged.push(Facet::Method);
            }
            (!flagged.is_empty()).then(|| Disagreement {
                pair_id: id.to_string(),
                bg_delta,
                mt_delta,
                flagged,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.max_abs_delta()
            .cmp(&a.max_abs_delta())
            .then_with(|| a.pair_id.cmp(&b.pair_id))
    });
    Ok(out)
}

/// Everything the `agreement report` command prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n: usize,
    pub human_distribution: ScoreDistribution,
    pub llm_distribution: ScoreDistribution,
    pub background: ConfusionMatrix,
    pub method: ConfusionMatrix,
    pub spearman: BTreeMap<Facet, f64>,
    pub disagreement_threshold: u8,
    pub disagreements: Vec<Disagreement>,
}

pub fn agreement_report(
    human: &[ScoreRecord],
    llm: &[ScoreRecord],
    threshold: u8,
) -> Result<AgreementReport, AgreementError> {
    let background = confusion_matrix(
        &facet_column(human, Facet::Background),
        &facet_column(llm, Facet::Background),
        Facet::Background,
    )?;
    let method = confusion_matrix(
        &facet_column(human, Facet::Method),
        &facet_column(llm, Facet::Method),
        Facet::Method,
    )?;
    let spearman = BTreeMap::from([
        (Facet::Background, background.spearman()?),
        (Facet::Method, method.spearman()?),
    ]);
    Ok(AgreementReport {
        n: human.len(),
        human_distribution: score_distribution(human)?,
        llm_distribution: score_distribution(llm)?,
        background,
        method,
        spearman,
        disagreement_threshold: threshold,
        disagreements: disagreement_report(human, llm, threshold)?,
    })
}

impl AgreementReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "## Agreement (Spearman rho, n={})\n", self.n);
        let _ = writeln!(s, "| Comparison | Background | Method |");
        let _ = writeln!(s, "|---|---:|---:|");
        let _ = writeln!(
            s,
            "| Human vs. LLM | {:.2} | {:.2} |\n",
            self.spearman[&Facet::Background],
            self.spearman[&Facet::Method]
        );
        let _ = writeln!(s, "## Score distribution\n");
        let _ = writeln!(s, "| Score | BG Human | BG LLM | MT Human | MT LLM |");
        let _ = writeln!(s, "|---:|---:|---:|---:|---:|");
        for k in 0..4 {
            let _ = writeln!(
                s,
                "| {k} | {} | {} | {} | {} |",
                self.human_distribution.background.counts[k],
                self.llm_distribution.background.counts[k],
                self.human_distribution.method.counts[k],
                self.llm_distribution.method.counts[k],
            );
        }
        let _ = writeln!(s, "\n## Background confusion matrix\n\n{}", self.background.to_markdown());
        let _ = writeln!(s, "## Method confusion matrix\n\n{}", self.method.to_markdown());
        let _ = writeln!(
            s,
            "## Disagreements\n\n{} pairs with |diff| >= {} on at least one facet.\n",
            self.disagreements.len(),
            self.disagreement_threshold
        );
        if !self.disagreements.is_empty() {
            let _ = writeln!(s, "| Pair | BG delta | MT delta |");
            let _ = writeln!(s, "|---|---:|---:|");
            for d in &self.disagreements {
                let _ = writeln!(s, "| {} | {:+} | {:+} |", d.pair_id, d.bg_delta, d.mt_delta);
            }
        }
        s
    }

    pub fn disagreements_csv(&self) -> String {
        let mut s = String::from("pair_id,bg_delta,mt_delta,flagged\n");
        for d in &self.disagreements {
            let flagged: Vec<&str> = d.flagged.iter().map(|f| f.short()).collect();
            let _ = writeln!(s, "{},{},{},{}", d.pair_id, d.bg_delta, d.mt_delta, flagged.join("|"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    const BG: [[u64; 4]; 4] = [[5, 24, 3, 0], [0, 18, 9, 4], [0, 5, 11, 8], [0, 4, 0, 9]];
    const MT: [[u64; 4]; 4] = [[20, 15, 32, 0], [0, 2, 18, 0], [0, 0, 5, 0], [0, 2, 3, 3]];

    fn rec(id: &str, bg: u8, mt: u8) -> ScoreRecord {
        ScoreRecord { pair_id: id.into(), bg_score: bg, mt_score: mt }
    }

    #[test]
    fn bundled_sample_reproduces_published_matrices() {
        let (human, llm) = validation_sample();
        let report = agreement_report(&human, &llm, 2).unwrap();
        assert_eq!(report.background.counts, BG);
        assert_eq!(report.method.counts, MT);
        assert_eq!(report.background.counts[0][1], 24);
        assert_eq!(report.method.counts[0][2], 32);
        assert_eq!(report.background.row_sums(), [32, 31, 24, 13]);
        assert_eq!(report.background.col_sums(), [5, 51, 23, 21]);
        assert_eq!(report.method.row_sums(), [67, 20, 5, 8]);
        assert_eq!(report.method.col_sums(), [20, 19, 58, 3]);
        assert_eq!(report.disagreements.len(), 38);
    }

    #[test]
    fn marginals_equal_input_distributions() {
        let (human, llm) = validation_sample();
        let report = agreement_report(&human, &llm, 2).unwrap();
        let as_u64 = |c: [usize; 4]| c.map(|x| x as u64);
        assert_eq!(report.background.row_sums(), as_u64(report.human_distribution.background.counts));
        assert_eq!(report.method.col_sums(), as_u64(report.llm_distribution.method.counts));
    }

    #[test]
    fn perfect_agreement_is_diagonal() {
        let h: Vec<(String, u8)> = (0..8).map(|i| (format!("p{i}"), (i % 4) as u8)).collect();
        let m = confusion_matrix(&h, &h, Facet::Method).unwrap();
        for (i, row) in m.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                assert_eq!(c > 0, i == j);
            }
        }
        assert!((m.spearman().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn key_mismatch_lists_missing_ids() {
        let h = vec![("a".to_string(), 1), ("b".to_string(), 2)];
        let g = vec![("a".to_string(), 1), ("c".to_string(), 2)];
        match confusion_matrix(&h, &g, Facet::Background) {
            Err(AgreementError::KeyMismatch { examples, .. }) => {
                assert_eq!(examples, ["b", "c"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn distribution_examples() {
        let all_two: Vec<_> = (0..5).map(|i| rec(&i.to_string(), 1, 2)).collect();
        let d = score_distribution(&all_two).unwrap();
        assert_eq!(d.method.percentages, [0.0, 0.0, 100.0, 0.0]);
        let half: Vec<_> = (0..10).map(|i| rec(&i.to_string(), 0, (i % 2) as u8)).collect();
        assert_eq!(score_distribution(&half).unwrap().method.percentages, [50.0, 50.0, 0.0, 0.0]);
        assert!(matches!(score_distribution::<ScoreRecord>(&[]), Err(AgreementError::Empty)));
    }

    #[test]
    fn distribution_at_full_dataset_scale() {
        // Background marginals of the full 5,891-pair label set.
        let counts = [408usize, 2136, 1954, 1393];
        let mut labels = Vec::new();
        for (s, &c) in counts.iter().enumerate() {
            labels.extend((0..c).map(|i| rec(&format!("{s}-{i}"), s as u8, 0)));
        }
        let d = score_distribution(&labels).unwrap();
        assert_eq!(d.n, 5891);
        assert_eq!(d.background.counts[0], 408);
        assert_eq!(format!("{:.1}", d.background.percentages[0]), "6.9");
        assert_eq!(format!("{:.1}", d.background.percentages[3]), "23.6");
    }

    #[test]
    fn pattern_examples() {
        let mixed = [rec("a", 0, 2), rec("b", 1, 3), rec("c", 3, 0), rec("d", 2, 1)];
        let p = pattern_counts(&mixed);
        assert_eq!(p.cross_domain_same_method_pct(), 50.0);
        assert_eq!(p.same_domain_different_method_pct(), 50.0);
        let p = pattern_counts(&[rec("a", 3, 3), rec("b", 3, 3)]);
        assert_eq!((p.cross_domain_same_method, p.same_domain_different_method), (0, 0));
    }

    #[test]
    fn pattern_shares_consistent_with_full_dataset_marginals() {
        // A joint table with the published BG/MT marginals (n = 5,891) in
        // which 961 pairs are cross-domain/same-method. The other pattern
        // count is then forced to 1,329 by the marginals.
        let mut labels = Vec::new();
        let mut push = |bg: u8, mt: u8, n: usize| {
            for _ in 0..n {
                let id = labels.len().to_string();
                labels.push(rec(&id, bg, mt));
            }
        };
        // BG<=1 (408 + 2136 = 2544): 961 with MT>=2, 1583 with MT<=1.
        push(0, 0, 408);
        push(1, 0, 667);
        push(1, 1, 508);
        push(1, 2, 961);
        // BG>=2 (1954 + 1393 = 3347): 1329 with MT<=1, 2018 with MT>=2.
        push(2, 1, 1329);
        push(2, 2, 625);
        push(3, 2, 1119);
        push(3, 3, 274);
        let d = score_distribution(&labels).unwrap();
        assert_eq!(d.background.counts, [408, 2136, 1954, 1393]);
        assert_eq!(d.method.counts, [1075, 1837, 2705, 274]);
        let p = pattern_counts(&labels);
        assert_eq!(format!("{:.1}", p.cross_domain_same_method_pct()), "16.3");
        assert_eq!(format!("{:.1}", p.same_domain_different_method_pct()), "22.6");
    }

    #[test]
    fn disagreement_examples() {
        let h = [rec("x", 3, 0)];
        let g = [rec("x", 1, 0)];
        let d = disagreement_report(&h, &g, 2).unwrap();
        assert_eq!(d[0].flagged, vec![Facet::Background]);
        assert_eq!(d[0].bg_delta, 2);

        let h = [rec("a", 1, 1), rec("b", 2, 2), rec("c", 0, 3)];
        let g = [rec("a", 1, 1), rec("b", 0, 2), rec("c", 0, 0)];
        assert_eq!(disagreement_report(&h, &g, 0).unwrap().len(), 3);
        let ids: Vec<_> = disagreement_report(&h, &g, 1).unwrap().into_iter().map(|d| d.pair_id).collect();
        assert_eq!(ids, ["c", "b"]);
    }

    #[test]
    fn report_renders_tables() {
        let (human, llm) = validation_sample();
        let report = agreement_report(&human, &llm, 2).unwrap();
        let md = report.to_markdown();
        assert!(md.contains("| Human vs. LLM | 0.61 | 0.44 |"));
        assert!(md.contains("| 0 | **5** | 24 | 3 | 0 | 32 |"));
        assert!(report.background.to_csv().starts_with("human,llm_0"));
        assert_eq!(report.disagreements_csv().lines().count(), 39);
    }

    proptest! {
        #[test]
        fn matrix_spearman_equals_expanded_list_oracle(cells in prop::array::uniform16(0u64..12)) {
            let mut counts = [[0u64; 4]; 4];
            for (k, c) in cells.iter().enumerate() {
                counts[k / 4][k % 4] = *c;
            }
            let m = ConfusionMatrix::from_counts(Facet::Background, counts);
            let (h, g) = m.expand();
            match (m.spearman(), crate::metrics::spearman(&h, &g)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}"),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "disagree: {a:?} vs {b:?}"),
            }
        }

        #[test]
        fn distribution_is_order_invariant(
            scores in prop::collection::vec((0u8..=3, 0u8..=3), 1..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let recs: Vec<_> = scores.iter().enumerate().map(|(i, (b, m))| rec(&i.to_string(), *b, *m)).collect();
            let mut shuffled = recs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(score_distribution(&recs).unwrap(), score_distribution(&shuffled).unwrap());
            let pct: f64 = score_distribution(&recs).unwrap().background.percentages.iter().sum();
            prop_assert!((pct - 100.0).abs() < 1e-9);
        }
    }
}
