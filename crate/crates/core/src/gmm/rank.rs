//! Ordering clusters into difficulty levels by their mean raw P+H confidence.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GmmError;
use crate::features::{csv_field, format_sig17};
use crate::numeric::compensated_sum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Ambiguous,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Ambiguous, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Ambiguous => "ambiguous",
            Difficulty::Hard => "hard",
        }
    }

    /// Difficulty for the cluster at `rank` (0 = most confident) out of `k`.
    /// The most confident cluster is easy, the least confident is hard and
    /// anything in between is ambiguous.
    pub fn from_rank(rank: usize, k: usize) -> Difficulty {
        if rank == 0 {
            Difficulty::Easy
        } else if rank + 1 == k {
            Difficulty::Hard
        } else {
            Difficulty::Ambiguous
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "ambiguous" => Ok(Difficulty::Ambiguous),
            "hard" => Ok(Difficulty::Hard),
            other => Err(format!("unknown difficulty {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub rank: usize,
    pub difficulty: Difficulty,
    pub size: usize,
    pub mean_confidence_ph: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRanking {
    /// Indexed by cluster id.
    pub clusters: Vec<ClusterSummary>,
}

impl ClusterRanking {
    pub fn difficulty_of(&self, cluster: usize) -> Difficulty {
        self.clusters[cluster].difficulty
    }
}

/// Rank `k` clusters by the mean of the raw (unscaled) P+H confidence of
/// their members, descending. Equal means put the lower cluster id first.
pub fn rank_difficulty(labels: &[usize], raw_confidence_ph: &[f64], k: usize) -> Result<ClusterRanking, GmmError> {
    if labels.len() != raw_confidence_ph.len() {
        return Err(GmmError::InvalidParameter(format!(
            "{} labels but {} confidence values",
            labels.len(),
            raw_confidence_ph.len()
        )));
    }
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (&l, &c) in labels.iter().zip(raw_confidence_ph) {
        if l >= k {
            return Err(GmmError::InvalidParameter(format!("label {l} out of range for k = {k}")));
        }
        members[l].push(c);
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(GmmError::EmptyCluster(empty));
    }
    let means: Vec<f64> = members
        .iter()
        .map(|m| compensated_sum(m.iter().copied()) / m.len() as f64)
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    let mut clusters: Vec<ClusterSummary> = (0..k)
        .map(|c| ClusterSummary {
            cluster_id: c,
            rank: 0,
            difficulty: Difficulty::Easy,
            size: members[c].len(),
            mean_confidence_ph: means[c],
        })
        .collect();
    for (rank, &c) in order.iter().enumerate() {
        clusters[c].rank = rank;
        clusters[c].difficulty = Difficulty::from_rank(rank, k);
    }
    Ok(ClusterRanking { clusters })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDifficulty {
    pub instance_id: String,
    pub cluster_id: usize,
    pub difficulty: Difficulty,
    pub max_responsibility: f64,
}

/// Per-instance difficulty plus the cluster ranking that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyAssignment {
    pub instances: Vec<InstanceDifficulty>,
    pub clusters: Vec<ClusterSummary>,
}

impl DifficultyAssignment {
    pub fn new(ids: &[String], labels: &[usize], max_responsibility: &[f64], ranking: &ClusterRanking) -> Self {
        let instances = ids
            .iter()
            .zip(labels)
            .zip(max_responsibility)
            .map(|((id, &c), &r)| InstanceDifficulty {
                instance_id: id.clone(),
                cluster_id: c,
                difficulty: ranking.difficulty_of(c),
                max_responsibility: r,
            })
            .collect();
        Self { instances, clusters: ranking.clusters.clone() }
    }

    pub fn difficulty_map(&self) -> BTreeMap<String, Difficulty> {
        self.instances.iter().map(|i| (i.instance_id.clone(), i.difficulty)).collect()
    }

    /// CSV `instance_id,cluster_id,difficulty,max_responsibility`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "instance_id,cluster_id,difficulty,max_responsibility")?;
        for i in &self.instances {
            writeln!(
                w,
                "{},{},{},{}",
                csv_field(&i.instance_id),
                i.cluster_id,
                i.difficulty,
                format_sig17(i.max_responsibility)
            )?;
        }
        Ok(())
    }
}

/// Read an assignment CSV back into per-instance rows.
pub fn read_assignment_csv<R: Read>(r: R) -> Result<Vec<InstanceDifficulty>, String> {
    let mut reader = csv::Reader::from_reader(r);
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let expected = ["instance_id", "cluster_id", "difficulty", "max_responsibility"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(format!("unexpected assignment header {:?}", headers.iter().collect::<Vec<_>>()));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = i + 2;
        let parse_err = |what: &str| format!("assignment line {row}: bad {what}");
        out.push(InstanceDifficulty {
            instance_id: rec[0].to_owned(),
            cluster_id: rec[1].parse().map_err(|_| parse_err("cluster_id"))?,
            difficulty: rec[2].parse().map_err(|_| parse_err("difficulty"))?,
            max_responsibility: rec[3].parse().map_err(|_| parse_err("max_responsibility"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_mean_confidence() {
        // Clusters 0/1/2 with means 0.3/0.9/0.6.
        let labels = [0, 1, 2, 0, 1, 2];
        let conf = [0.2, 0.9, 0.6, 0.4, 0.9, 0.6];
        let r = rank_difficulty(&labels, &conf, 3).unwrap();
        assert_eq!(r.difficulty_of(1), Difficulty::Easy);
        assert_eq!(r.difficulty_of(2), Difficulty::Ambiguous);
        assert_eq!(r.difficulty_of(0), Difficulty::Hard);
    }

    #[test]
    fn ties_favor_lower_cluster_id() {
        let labels = [0, 1, 2];
        let conf = [0.5, 0.9, 0.5];
        let r = rank_difficulty(&labels, &conf, 3).unwrap();
        assert_eq!(r.difficulty_of(1), Difficulty::Easy);
        assert_eq!(r.difficulty_of(0), Difficulty::Ambiguous);
        assert_eq!(r.difficulty_of(2), Difficulty::Hard);
    }

    #[test]
    fn empty_cluster_is_reported() {
        assert!(matches!(rank_difficulty(&[0, 0, 2], &[0.1, 0.2, 0.3], 3), Err(GmmError::EmptyCluster(1))));
    }

    #[test]
    fn ordering_invariant_holds() {
        let labels = [2, 2, 1, 0, 1, 0, 2];
        let conf = [0.1, 0.3, 0.8, 0.5, 0.7, 0.55, 0.2];
        let r = rank_difficulty(&labels, &conf, 3).unwrap();
        let mean_of = |d: Difficulty| r.clusters.iter().find(|c| c.difficulty == d).unwrap().mean_confidence_ph;
        assert!(mean_of(Difficulty::Easy) >= mean_of(Difficulty::Ambiguous));
        assert!(mean_of(Difficulty::Ambiguous) >= mean_of(Difficulty::Hard));
    }

    #[test]
    fn csv_round_trip() {
        let ranking = rank_difficulty(&[0, 1], &[0.9, 0.1], 2).unwrap();
        let a = DifficultyAssignment::new(&["x,1".into(), "y".into()], &[0, 1], &[0.75, 1.0], &ranking);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let back = read_assignment_csv(buf.as_slice()).unwrap();
        assert_eq!(back, a.instances);
    }
}
