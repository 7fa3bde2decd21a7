//! Facet-aware reranking of scientific papers.
//!
//! Seed/candidate pairs are graded on two independent facets, Background
//! (what problem is solved) and Method (how it is solved). Graded pools are
//! turned into ranking triplets, one pairwise cross-encoder is trained per
//! facet, and the trained scorers are evaluated with graded-relevance
//! metrics and served for interactive exploration.
//!
//! Pipeline order: [`corpus`] → [`annotator`] → [`agreement`] →
//! [`triplets`] → [`trainer`] (over [`encoder`]) → [`benchmark`], wired by
//! [`pipeline`].

pub mod agreement;
pub mod annotator;
pub mod benchmark;
pub mod corpus;
pub mod encoder;
pub mod facet;
pub mod io;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod synthetic;
pub mod trainer;
pub mod triplets;

pub use annotator::{FacetLabel, LabeledPair};
pub use corpus::{CandidatePool, Paper};
pub use encoder::{EncodedPair, FacetModel};
pub use facet::Facet;
pub use triplets::Triplet;
