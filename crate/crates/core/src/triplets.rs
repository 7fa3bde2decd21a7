//! Ranking triplets from graded pools, seed-level splits and per-epoch
//! subsampling.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotator::LabeledPair;
use crate::facet::Facet;
use crate::io::{self, IoError};

#[derive(Debug, thiserror::Error)]
pub enum TripletError {
    #[error("label {0} outside 0-3")]
    LabelRange(u8),
    #[error("split fractions must be non-negative and sum to 1 (got {0:?})")]
    BadFractions([f64; 3]),
    #[error("{seeds} seed(s) cannot fill {needed} non-empty split(s)")]
    TooFewSeeds { seeds: usize, needed: usize },
    #[error("per-seed cap must be at least 1")]
    ZeroCap,
    #[error("merge mapping must be monotone non-decreasing")]
    NotMonotone,
    #[error(transparent)]
    Io(#[from] IoError),
}

/// `(seed, preferred, dispreferred)` for one facet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub facet: Facet,
    pub seed_id: String,
    pub pos_id: String,
    pub neg_id: String,
    pub pos_label: u8,
    pub neg_label: u8,
}

/// Maps raw 0-3 grades to the effective grades used for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePolicy {
    pub facet: Facet,
    pub mapping: [u8; 4],
}

impl MergePolicy {
    pub fn identity(facet: Facet) -> Self {
        Self {
            facet,
            mapping: [0, 1, 2, 3],
        }
    }

    /// Collapses grades 2 and 3 into 2.
    pub fn merged_top(facet: Facet) -> Self {
        Self {
            facet,
            mapping: [0, 1, 2, 2],
        }
    }

    /// Identity for Background, merged top grades for Method.
    pub fn default_for(facet: Facet) -> Self {
        match facet {
            Facet::Background => Self::identity(facet),
            Facet::Method => Self::merged_top(facet),
        }
    }

    pub fn from_scale(facet: Facet, scale: LabelScale) -> Self {
        match scale {
            LabelScale::Full => Self::identity(facet),
            LabelScale::Merged => Self::merged_top(facet),
        }
    }

    pub fn new(facet: Facet, mapping: [u8; 4]) -> Result<Self, TripletError> {
        if mapping.windows(2).any(|w| w[0] > w[1]) {
            return Err(TripletError::NotMonotone);
        }
        Ok(Self { facet, mapping })
    }
}

/// Grade scale selector for the Method facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelScale {
    /// 0-3, unchanged.
    #[serde(rename = "0-3")]
    Full,
    /// 0-2, with 3 merged into 2.
    #[serde(rename = "0-2")]
    Merged,
}

impl FromStr for LabelScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0-3" => Ok(LabelScale::Full),
            "0-2" => Ok(LabelScale::Merged),
            other => Err(format!("unknown label scale `{other}` (expected 0-3 or 0-2)")),
        }
    }
}

impl fmt::Display for LabelScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelScale::Full => "0-3",
            LabelScale::Merged => "0-2",
        })
    }
}

pub fn merge_method_scale(label: u8, policy: &MergePolicy) -> Result<u8, TripletError> {
    policy
        .mapping
        .get(label as usize)
        .copied()
        .ok_or(TripletError::LabelRange(label))
}

/// Every ordered pair with a strictly higher grade becomes a triplet,
/// sorted by `(pos_id, neg_id)`.
pub fn enumerate_triplets<S: AsRef<str>>(pool_labels: &[(S, u8)], seed_id: &str, facet: Facet) -> Vec<Triplet> {
    let mut out = Vec::new();
    for (pi, pl) in pool_labels {
        for (ni, nl) in pool_labels {
            if pl > nl {
                out.push(Triplet {
                    facet,
                    seed_id: seed_id.to_string(),
                    pos_id: pi.as_ref().to_string(),
                    neg_id: ni.as_ref().to_string(),
                    pos_label: *pl,
                    neg_label: *nl,
                });
            }
        }
    }
    out.sort_by(|a, b| (&a.pos_id, &a.neg_id).cmp(&(&b.pos_id, &b.neg_id)));
    out
}

/// Labels grouped by seed with grades mapped through `policy`. Seed and
/// candidate order follow first appearance in `labels`.
pub fn effective_pools(
    labels: &[LabeledPair],
    policy: &MergePolicy,
) -> Result<Vec<(String, Vec<(String, u8)>)>, TripletError> {
    let mut order: Vec<String> = Vec::new();
    let mut pools: HashMap<String, Vec<(String, u8)>> = HashMap::new();
    for l in labels {
        let grade = merge_method_scale(l.score(policy.facet), policy)?;
        let entry = pools.entry(l.seed_id.clone()).or_insert_with(|| {
            order.push(l.seed_id.clone());
            Vec::new()
        });
        entry.push((l.candidate_id.clone(), grade));
    }
    Ok(order
        .into_iter()
        .map(|s| {
            let p = pools.remove(&s).unwrap_or_default();
            (s, p)
        })
        .collect())
}

/// Triplets for every seed, keyed by seed id. Seeds that yield nothing are
/// logged and left out.
pub fn build_triplets(
    labels: &[LabeledPair],
    policy: &MergePolicy,
) -> Result<BTreeMap<String, Vec<Triplet>>, TripletError> {
    let mut out = BTreeMap::new();
    for (seed, pool) in effective_pools(labels, policy)? {
        let ts = enumerate_triplets(&pool, &seed, policy.facet);
        if ts.is_empty() {
            tracing::info!(seed = %seed, facet = %policy.facet, "seed yields no triplets; skipped");
            continue;
        }
        out.insert(seed, ts);
    }
    Ok(out)
}

pub fn write_triplets(path: &Path, by_seed: &BTreeMap<String, Vec<Triplet>>) -> Result<(), TripletError> {
    Ok(io::write_jsonl(path, by_seed.values().flatten())?)
}

pub fn read_triplets(path: &Path) -> Result<BTreeMap<String, Vec<Triplet>>, TripletError> {
    let mut out: BTreeMap<String, Vec<Triplet>> = BTreeMap::new();
    for t in io::read_jsonl::<Triplet>(path)? {
        out.entry(t.seed_id.clone()).or_default().push(t);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

/// Seed-level assignment to train/val/test (`split.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub assignment: BTreeMap<String, SplitPart>,
    pub rng_seed: u64,
    pub fractions: [f64; 3],
}

impl SplitSpec {
    pub fn seeds(&self, part: SplitPart) -> BTreeSet<&str> {
        self.assignment
            .iter()
            .filter(|(_, p)| **p == part)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    pub fn part_of(&self, seed: &str) -> Option<SplitPart> {
        self.assignment.get(seed).copied()
    }

    pub fn write(&self, path: &Path) -> Result<(), TripletError> {
        Ok(io::write_json(path, self)?)
    }

    pub fn read(path: &Path) -> Result<Self, TripletError> {
        Ok(io::read_json(path)?)
    }
}

/// Shuffles the (deduplicated, sorted) seed ids under `rng_seed` and cuts
/// them into contiguous train/val/test blocks.
pub fn split_by_seed<S: AsRef<str>>(
    seed_ids: &[S],
    fractions: [f64; 3],
    rng_seed: u64,
) -> Result<SplitSpec, TripletError> {
    if fractions.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(TripletError::BadFractions(fractions));
    }
    let mut seeds: Vec<&str> = seed_ids.iter().map(AsRef::as_ref).collect::<BTreeSet<_>>().into_iter().collect();
    let n = seeds.len();
    let needed = fractions.iter().filter(|f| **f > 0.0).count();
    if n < needed {
        return Err(TripletError::TooFewSeeds { seeds: n, needed });
    }
    seeds.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));

    // Round each block, then make sure every non-empty fraction gets a seed.
    let mut counts = [0usize; 3];
    counts[0] = (fractions[0] * n as f64).round() as usize;
    counts[1] = (fractions[1] * n as f64).round() as usize;
    for i in 0..2 {
        if fractions[i] > 0.0 {
            counts[i] = counts[i].max(1);
        } else {
            counts[i] = 0;
        }
    }
    while counts[0] + counts[1] > n {
        let i = if counts[0] >= counts[1] { 0 } else { 1 };
        counts[i] -= 1;
    }
    counts[2] = n - counts[0] - counts[1];
    if fractions[2] > 0.0 && counts[2] == 0 {
        let donor = if counts[0] >= counts[1] { 0 } else { 1 };
        counts[donor] -= 1;
        counts[2] = 1;
    }
    if fractions[2] == 0.0 && counts[2] > 0 {
        counts[0] += counts[2];
        counts[2] = 0;
    }

    let parts = [SplitPart::Train, SplitPart::Val, SplitPart::Test];
    let mut assignment = BTreeMap::new();
    let mut it = seeds.into_iter();
    for (part, count) in parts.iter().zip(counts) {
        for s in it.by_ref().take(count) {
            assignment.insert(s.to_string(), *part);
        }
    }
    Ok(SplitSpec {
        assignment,
        rng_seed,
        fractions,
    })
}

/// RNG stream for one epoch of one run.
pub fn epoch_rng(rng_seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(epoch.wrapping_add(1));
    rng
}

/// Up to `cap` triplets per seed, drawn uniformly without replacement from
/// a stream fixed by `(rng_seed, epoch)`. Seeds are visited in key order and
/// each seed's sample keeps its canonical order.
pub fn epoch_sample(
    triplets_by_seed: &BTreeMap<String, Vec<Triplet>>,
    cap: usize,
    rng_seed: u64,
    epoch: u64,
) -> Result<Vec<Triplet>, TripletError> {
    if cap == 0 {
        return Err(TripletError::ZeroCap);
    }
    let mut rng = epoch_rng(rng_seed, epoch);
    let mut out = Vec::new();
    for ts in triplets_by_seed.values() {
        if ts.len() <= cap {
            out.extend(ts.iter().cloned());
        } else {
            let mut picked = index::sample(&mut rng, ts.len(), cap).into_vec();
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|i| ts[i].clone()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;

    fn ids(ts: &[Triplet]) -> Vec<(&str, &str)> {
        ts.iter().map(|t| (t.pos_id.as_str(), t.neg_id.as_str())).collect()
    }

    #[test]
    fn merge_examples() {
        let p = MergePolicy::default_for(Facet::Method);
        assert_eq!(merge_method_scale(3, &p).unwrap(), 2);
        assert_eq!(merge_method_scale(2, &p).unwrap(), 2);
        assert_eq!(merge_method_scale(0, &p).unwrap(), 0);
        assert!(merge_method_scale(4, &p).is_err());
        assert_eq!(MergePolicy::default_for(Facet::Background).mapping, [0, 1, 2, 3]);
        assert!(MergePolicy::new(Facet::Method, [0, 2, 1, 3]).is_err());
    }

    #[test]
    fn enumerates_strictly_ordered_pairs() {
        let pool = [("c1", 3), ("c2", 1), ("c3", 1), ("c4", 0)];
        let ts = enumerate_triplets(&pool, "s", Facet::Background);
        assert_eq!(ids(&ts), [("c1", "c2"), ("c1", "c3"), ("c1", "c4"), ("c2", "c4"), ("c3", "c4")]);
        assert!(enumerate_triplets(&[("a", 2), ("b", 2)], "s", Facet::Method).is_empty());
        assert!(enumerate_triplets(&[("a", 2)], "s", Facet::Method).is_empty());
    }

    #[test]
    fn facets_can_reverse_roles() {
        let bg = enumerate_triplets(&[("ci", 3), ("cj", 1)], "s", Facet::Background);
        let mt = enumerate_triplets(&[("ci", 0), ("cj", 2)], "s", Facet::Method);
        assert_eq!(ids(&bg), [("ci", "cj")]);
        assert_eq!(ids(&mt), [("cj", "ci")]);
    }

    #[test]
    fn split_examples() {
        let seeds: Vec<String> = (0..20).map(|i| format!("s{i:02}")).collect();
        let all_train = split_by_seed(&seeds, [1.0, 0.0, 0.0], 7).unwrap();
        assert_eq!(all_train.seeds(SplitPart::Train).len(), 20);
        let a = split_by_seed(&seeds, [0.7, 0.15, 0.15], 7).unwrap();
        let b = split_by_seed(&seeds, [0.7, 0.15, 0.15], 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            [a.seeds(SplitPart::Train).len(), a.seeds(SplitPart::Val).len(), a.seeds(SplitPart::Test).len()],
            [14, 3, 3]
        );
        assert_ne!(a, split_by_seed(&seeds, [0.7, 0.15, 0.15], 8).unwrap());
        assert!(matches!(split_by_seed(&seeds[..2], [0.5, 0.25, 0.25], 1), Err(TripletError::TooFewSeeds { .. })));
        assert!(matches!(split_by_seed(&seeds, [0.5, 0.2, 0.2], 1), Err(TripletError::BadFractions(_))));
    }

    fn fake_triplets(n: usize) -> Vec<Triplet> {
        (0..n)
            .map(|i| Triplet {
                facet: Facet::Method,
                seed_id: "s".into(),
                pos_id: format!("p{i:03}"),
                neg_id: "n".into(),
                pos_label: 1,
                neg_label: 0,
            })
            .collect()
    }

    #[test]
    fn epoch_sample_caps_and_is_reproducible() {
        let by_seed = BTreeMap::from([("a".to_string(), fake_triplets(25)), ("b".to_string(), fake_triplets(4))]);
        let e0 = epoch_sample(&by_seed, 10, 42, 0).unwrap();
        assert_eq!(e0.len(), 14);
        assert_eq!(e0, epoch_sample(&by_seed, 10, 42, 0).unwrap());
        assert_ne!(e0, epoch_sample(&by_seed, 10, 42, 1).unwrap());
        let unique: HashSet<_> = e0[..10].iter().collect();
        assert_eq!(unique.len(), 10);
        assert!(matches!(epoch_sample(&by_seed, 0, 1, 0), Err(TripletError::ZeroCap)));
    }

    fn naive(pool: &[(String, u8)]) -> BTreeSet<(String, String)> {
        let mut s = BTreeSet::new();
        for i in 0..pool.len() {
            for j in 0..pool.len() {
                if pool[i].1 > pool[j].1 {
                    s.insert((pool[i].0.clone(), pool[j].0.clone()));
                }
            }
        }
        s
    }

    fn pool_strategy() -> impl Strategy<Value = Vec<(String, u8, u8)>> {
        prop::collection::vec((0u8..=3, 0u8..=3), 0..=10).prop_map(|g| {
            g.into_iter().enumerate().map(|(i, (a, b))| (format!("c{i}"), a, b)).collect()
        })
    }

    proptest! {
        #[test]
        fn matches_naive_double_loop(pool in pool_strategy()) {
            let bg: Vec<(String, u8)> = pool.iter().map(|(c, b, _)| (c.clone(), *b)).collect();
            let got: BTreeSet<_> = enumerate_triplets(&bg, "s", Facet::Background)
                .into_iter().map(|t| (t.pos_id, t.neg_id)).collect();
            prop_assert_eq!(got, naive(&bg));
        }

        #[test]
        fn unused_facet_never_matters(pool in pool_strategy(), noise in prop::collection::vec(0u8..=3, 10)) {
            let mk = |mt: &dyn Fn(usize, u8) -> u8| -> Vec<LabeledPair> {
                pool.iter().enumerate().map(|(i, (c, b, m))| labeled("s", c, *b, mt(i, *m))).collect()
            };
            let a = build_triplets(&mk(&|_, m| m), &MergePolicy::default_for(Facet::Background)).unwrap();
            let b = build_triplets(&mk(&|i, _| noise[i]), &MergePolicy::default_for(Facet::Background)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn merged_method_ignores_two_versus_three(pool in pool_strategy()) {
            let policy = MergePolicy::default_for(Facet::Method);
            let raw: Vec<LabeledPair> = pool.iter().map(|(c, b, m)| labeled("s", c, *b, *m)).collect();
            let relabeled: Vec<LabeledPair> = pool.iter().map(|(c, b, m)| labeled("s", c, *b, if *m == 3 { 2 } else { *m })).collect();
            prop_assert_eq!(build_triplets(&raw, &policy).unwrap(), build_triplets(&relabeled, &policy).unwrap());
        }

        #[test]
        fn splits_are_disjoint_and_complete(n in 3usize..60, rng in any::<u64>(), a in 0.2f64..0.8) {
            let seeds: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
            let rest = 1.0 - a;
            let spec = split_by_seed(&seeds, [a, rest / 2.0, rest / 2.0], rng).unwrap();
            prop_assert_eq!(spec.assignment.len(), n);
            let tr = spec.seeds(SplitPart::Train);
            let va = spec.seeds(SplitPart::Val);
            let te = spec.seeds(SplitPart::Test);
            prop_assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
            prop_assert!(!tr.is_empty() && !va.is_empty() && !te.is_empty());
        }
    }

    pub(crate) fn labeled(seed: &str, cand: &str, bg: u8, mt: u8) -> LabeledPair {
        use crate::annotator::{AnnotatorMeta, FacetLabel};
        LabeledPair {
            seed_id: seed.into(),
            candidate_id: cand.into(),
            background: FacetLabel { facet: Facet::Background, score: bg, reason: "r".into() },
            method: FacetLabel { facet: Facet::Method, score: mt, reason: "r".into() },
            annotator_meta: AnnotatorMeta {
                model: "m".into(),
                temperature: 0.0,
                prompt_hash: "h".into(),
                timestamp: "t".into(),
            },
        }
    }
}
