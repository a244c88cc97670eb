//! Training-dynamics characterization of classification datasets.
//!
//! The pipeline reads a per-epoch logit log ([`dynamics`]), turns it into
//! per-instance feature vectors ([`features`]), clusters them with a Gaussian
//! mixture and orders the clusters into easy / ambiguous / hard ([`gmm`]).
//! [`heuristics`] and [`stats`] quantify lexical shortcuts per split,
//! [`baselines`] holds the percentile selection baselines and [`report`]
//! assembles split summaries.

pub mod baselines;
pub mod cli;
pub mod dynamics;
pub mod features;
pub mod gmm;
pub mod heuristics;
pub mod numeric;
pub mod pipeline;
pub mod report;
pub mod stats;
