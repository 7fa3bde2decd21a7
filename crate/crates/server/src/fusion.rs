//! Score normalization, fusion and ranking for one candidate pool.

use facetrank_core::metrics::{rank_candidates, MetricError};
use serde::{Deserialize, Serialize};

/// Min-max scaling to [0, 1]; a constant pool maps to 0.5 everywhere.
pub fn min_max(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 && span.is_finite() {
        scores.iter().map(|s| (s - lo) / span).collect()
    } else {
        vec![0.5; scores.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScores {
    pub candidate_id: String,
    pub bg_score: f64,
    pub mt_score: f64,
    pub bg_norm: f64,
    pub mt_norm: f64,
    pub fused: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rankings {
    pub bg: Vec<String>,
    pub mt: Vec<String>,
    pub fused: Vec<String>,
}

/// Per-candidate scores in request order plus the three rankings.
/// `fused = alpha * bg_norm + (1 - alpha) * mt_norm`.
pub fn fuse(ids: &[String], bg: &[f64], mt: &[f64], alpha: f64) -> Result<(Vec<CandidateScores>, Rankings), MetricError> {
    assert!(ids.len() == bg.len() && ids.len() == mt.len(), "score vectors must align with ids");
    let bg_norm = min_max(bg);
    let mt_norm = min_max(mt);
    let rows: Vec<CandidateScores> = (0..ids.len())
        .map(|i| CandidateScores {
            candidate_id: ids[i].clone(),
            bg_score: bg[i],
            mt_score: mt[i],
            bg_norm: bg_norm[i],
            mt_norm: mt_norm[i],
            fused: alpha * bg_norm[i] + (1.0 - alpha) * mt_norm[i],
        })
        .collect();
    let rank = |f: fn(&CandidateScores) -> f64| {
        rank_candidates(&rows.iter().map(|r| (r.candidate_id.as_str(), f(r))).collect::<Vec<_>>())
    };
    let rankings = Rankings {
        bg: rank(|r| r.bg_score)?,
        mt: rank(|r| r.mt_score)?,
        fused: rank(|r| r.fused)?,
    };
    Ok((rows, rankings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn min_max_bounds_and_constant_pools() {
        assert_eq!(min_max(&[2.0, 4.0, 3.0]), vec![0.0, 1.0, 0.5]);
        assert_eq!(min_max(&[1.5, 1.5]), vec![0.5, 0.5]);
        assert_eq!(min_max(&[7.0]), vec![0.5]);
        assert!(min_max(&[]).is_empty());
    }

    #[test]
    fn opposite_facets_tie_at_half_and_break_by_id() {
        let ids = vec!["b".to_string(), "a".to_string()];
        let (rows, r) = fuse(&ids, &[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap();
        assert_eq!((rows[0].bg_norm, rows[0].mt_norm), (1.0, 0.0));
        assert_eq!((rows[0].fused, rows[1].fused), (0.5, 0.5));
        assert_eq!(r.fused, vec!["a", "b"]);
    }

    #[test]
    fn extreme_alpha_reproduces_single_facet_rankings() {
        let ids = ids(6);
        let bg = [0.3, -1.0, 0.3, 2.0, 0.1, 0.3];
        let mt = [5.0, 4.0, -2.0, 4.0, 0.0, 1.0];
        let (_, r1) = fuse(&ids, &bg, &mt, 1.0).unwrap();
        assert_eq!(r1.fused, r1.bg);
        let (_, r0) = fuse(&ids, &bg, &mt, 0.0).unwrap();
        assert_eq!(r0.fused, r0.mt);
    }

    #[test]
    fn rankings_are_argsorts_of_reported_scores() {
        let ids = ids(5);
        let (rows, r) = fuse(&ids, &[0.2, 0.9, 0.1, 0.9, 0.5], &[1.0, 0.0, 0.5, 0.7, 0.2], 0.3).unwrap();
        let by_id = |id: &str| rows.iter().find(|x| x.candidate_id == id).unwrap().clone();
        for w in r.fused.windows(2) {
            let (a, b) = (by_id(&w[0]), by_id(&w[1]));
            assert!(a.fused > b.fused || (a.fused == b.fused && a.candidate_id < b.candidate_id));
        }
        assert_eq!(r.bg, vec!["c1", "c3", "c4", "c0", "c2"]);
    }
}
