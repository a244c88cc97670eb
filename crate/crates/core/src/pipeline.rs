//! End-to-end characterization: features, scaling, mixture fit, cluster
//! assignment and difficulty ranking.

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::DynamicsLog;
use crate::features::{build_feature_vectors, FeatureError, FeatureLayout, FeatureSet, ScaledFeatureMatrix, CONF_PH};
use crate::gmm::{fit_gmm, rank_difficulty, ClusterRanking, DifficultyAssignment, GmmConfig, GmmError, GmmFit};

/// Refits attempted after a fit leaves a cluster without hard-assigned members.
pub const MAX_REFITS: u64 = 5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error("every fit left an empty cluster (seeds {0:?})")]
    PersistentEmptyCluster(Vec<u64>),
}

/// A fit discarded because cluster `cluster` received no instances.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Refit {
    pub seed: u64,
    pub empty_cluster: usize,
}

#[derive(Clone, Debug)]
pub struct Characterization {
    pub features: FeatureSet,
    pub scaled: ScaledFeatureMatrix,
    pub fit: GmmFit,
    pub ranking: ClusterRanking,
    pub assignment: DifficultyAssignment,
    /// Seeds of discarded fits, in the order they were tried.
    pub refits: Vec<Refit>,
}

/// Run the full characterization on `log`.
///
/// If the chosen fit leaves a cluster empty it is refit with seeds
/// `seed + 1`, `seed + 2`, ... up to [`MAX_REFITS`] times.
pub fn characterize(log: &DynamicsLog, layout: FeatureLayout, cfg: &GmmConfig) -> Result<Characterization, PipelineError> {
    cfg.validate()?;
    let features = build_feature_vectors(log, layout)?;
    let scaled = features.standard_scale()?;
    let raw_conf = features.column(CONF_PH);

    let mut refits = Vec::new();
    for attempt in 0..=MAX_REFITS {
        let seed = cfg.seed.wrapping_add(attempt);
        let fit = fit_gmm(&scaled.rows, &GmmConfig { seed, ..cfg.clone() })?;
        let resp = fit.model.responsibilities(&scaled.rows)?;
        let labels = resp.hard_labels();
        match rank_difficulty(&labels, &raw_conf, cfg.k) {
            Ok(ranking) => {
                let assignment =
                    DifficultyAssignment::new(&scaled.instance_ids, &labels, &resp.max_per_row(), &ranking);
                return Ok(Characterization { features, scaled, fit, ranking, assignment, refits });
            }
            Err(GmmError::EmptyCluster(c)) => {
                log::warn!("fit with seed {seed} left cluster {c} empty; refitting");
                refits.push(Refit { seed, empty_cluster: c });
            }
            Err(e) => return Err(e.into()),
        }
    }
    Err(PipelineError::PersistentEmptyCluster(refits.iter().map(|r| r.seed).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::parse_log_str;
    use crate::gmm::Difficulty;

    fn grouped_log() -> DynamicsLog {
        let mut text = String::from(
            r#"{"kind":"header","labels":["a","b","c"],"epochs":{"ph":3,"h":3}}"#,
        );
        text.push('\n');
        let groups = [[4.0, 4.1, 3.9], [0.2, -0.3, 0.1], [-3.0, -3.2, -2.9]];
        for (g, group) in groups.iter().enumerate() {
            for i in 0..12 {
                let id = format!("g{g}-{i:02}");
                text.push_str(&format!(
                    r#"{{"kind":"instance","id":"{id}","premise":"p","hypothesis":"h","gold":"a"}}"#
                ));
                text.push('\n');
                for s in ["ph", "h"] {
                    for (e, base) in group.iter().enumerate() {
                        let jitter = 0.01 * (i as f64) - 0.05;
                        text.push_str(&format!(
                            r#"{{"kind":"record","id":"{id}","setting":"{s}","epoch":{},"logits":[{},0.0,0.0]}}"#,
                            e + 1,
                            base + jitter
                        ));
                        text.push('\n');
                    }
                }
            }
        }
        parse_log_str(&text).unwrap()
    }

    #[test]
    fn three_groups_map_to_three_difficulties() {
        let log = grouped_log();
        let out = characterize(&log, FeatureLayout::Paired, &GmmConfig { n_init: 3, ..GmmConfig::default() }).unwrap();
        let map = out.assignment.difficulty_map();
        for (id, d) in &map {
            let expected = match &id[..2] {
                "g0" => Difficulty::Easy,
                "g1" => Difficulty::Ambiguous,
                _ => Difficulty::Hard,
            };
            assert_eq!(*d, expected, "{id}");
        }
        assert!(out.refits.is_empty());
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        let log = grouped_log();
        let cfg = GmmConfig { k: 200, n_init: 1, ..GmmConfig::default() };
        assert!(characterize(&log, FeatureLayout::Paired, &cfg).is_err());
    }
}
