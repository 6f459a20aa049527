//! Pairing clusters across clusterings by overlap.
//!
//! Matching works on publication identifiers, so clusterings of different
//! node universes (a year slice and the combined graph) compare directly.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::NamedClusters;
use crate::graph::GraphError;
use crate::metrics::ClusterMetrics;

/// Best counterpart of one source cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMatch {
    pub source_cluster_id: usize,
    pub target_label: String,
    /// `None` when no target cluster intersects the source.
    pub target_cluster_id: Option<usize>,
    pub source_size: usize,
    pub target_size: usize,
    pub intersection: usize,
    pub jaccard: f64,
    pub proportion: f64,
}

pub fn jaccard(intersection: usize, a: usize, b: usize) -> f64 {
    let union = a + b - intersection;
    if union == 0 {
        0.0
    } else {
        intersection as f64 / union as f64
    }
}

/// Lookup from publication to the target clusters containing it.
pub struct TargetIndex<'a> {
    targets: Vec<&'a NamedClusters>,
    sizes: Vec<Vec<usize>>,
    owner: HashMap<&'a str, Vec<(usize, usize)>>,
}

impl<'a> TargetIndex<'a> {
    pub fn new(targets: &[&'a NamedClusters]) -> Self {
        let mut owner: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
        let mut sizes = Vec::with_capacity(targets.len());
        for (t, tc) in targets.iter().enumerate() {
            let mut s = Vec::with_capacity(tc.clusters.len());
            for (pos, c) in tc.clusters.iter().enumerate() {
                let distinct: HashSet<&str> = c.members.iter().map(String::as_str).collect();
                s.push(distinct.len());
                for id in distinct {
                    owner.entry(id).or_default().push((t, pos));
                }
            }
            sizes.push(s);
        }
        TargetIndex {
            targets: targets.to_vec(),
            sizes,
            owner,
        }
    }

    /// Target cluster with the largest intersection; ties go to the larger
    /// Jaccard coefficient, then the earlier target clustering, then the
    /// lowest cluster id.
    pub fn best_match<S: AsRef<str>>(&self, source_id: usize, source: &[S]) -> ClusterMatch {
        let distinct: HashSet<&str> = source.iter().map(|s| s.as_ref()).collect();
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for id in &distinct {
            if let Some(owners) = self.owner.get(id) {
                for &o in owners {
                    *counts.entry(o).or_insert(0) += 1;
                }
            }
        }
        let n = distinct.len();
        let mut best: Option<(usize, f64, usize, usize, usize)> = None;
        for (&(t, pos), &inter) in &counts {
            let cid = self.targets[t].clusters[pos].id;
            let jc = jaccard(inter, n, self.sizes[t][pos]);
            let better = match best {
                None => true,
                Some((bi, bj, bt, bc, _)) => {
                    inter > bi || (inter == bi && jc > bj) || (inter == bi && jc == bj && (t, cid) < (bt, bc))
                }
            };
            if better {
                best = Some((inter, jc, t, cid, pos));
            }
        }
        match best {
            Some((inter, jc, t, cid, pos)) => ClusterMatch {
                source_cluster_id: source_id,
                target_label: self.targets[t].label.clone(),
                target_cluster_id: Some(cid),
                source_size: n,
                target_size: self.sizes[t][pos],
                intersection: inter,
                jaccard: jc,
                proportion: inter as f64 / n as f64,
            },
            None => ClusterMatch {
                source_cluster_id: source_id,
                target_label: self.targets.first().map(|t| t.label.clone()).unwrap_or_default(),
                target_cluster_id: None,
                source_size: n,
                target_size: 0,
                intersection: 0,
                jaccard: 0.0,
                proportion: 0.0,
            },
        }
    }
}

/// Best match of a single cluster against one target clustering.
pub fn best_match<S: AsRef<str>>(source: &[S], target: &NamedClusters) -> ClusterMatch {
    TargetIndex::new(&[target]).best_match(0, source)
}

/// Best match for every source cluster, searched over the union of all
/// target clusterings.
pub fn match_all(source: &NamedClusters, targets: &[&NamedClusters]) -> Vec<ClusterMatch> {
    let index = TargetIndex::new(targets);
    source
        .clusters
        .par_iter()
        .map(|c| index.best_match(c.id, &c.members))
        .collect()
}

pub const MATCHES_HEADER: &str = "source_id,target_label,target_id,intersection,jaccard,proportion";

pub fn write_matches_csv<W: Write>(w: &mut W, matches: &[ClusterMatch]) -> std::io::Result<()> {
    writeln!(w, "{MATCHES_HEADER}")?;
    for m in matches {
        let tid = m.target_cluster_id.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            m.source_cluster_id, m.target_label, tid, m.intersection, m.jaccard, m.proportion
        )?;
    }
    w.flush()
}

pub fn save_matches(path: &Path, matches: &[ClusterMatch]) -> Result<(), GraphError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| GraphError::io(path, e))?);
    write_matches_csv(&mut f, matches).map_err(|e| GraphError::io(path, e))
}

/// Read a matches CSV. Cluster sizes are not stored, so `source_size` is
/// recovered from the proportion and `target_size` from the Jaccard value.
pub fn read_matches(path: &Path) -> Result<Vec<ClusterMatch>, GraphError> {
    let body = std::fs::read_to_string(path).map_err(|e| GraphError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate().skip(1) {
        let bad = || GraphError::Parse {
            line: i + 1,
            message: format!("malformed match row {line:?}"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let intersection: usize = f[3].parse().map_err(|_| bad())?;
        let jaccard: f64 = f[4].parse().map_err(|_| bad())?;
        let proportion: f64 = f[5].parse().map_err(|_| bad())?;
        let source_size = if proportion > 0.0 {
            (intersection as f64 / proportion).round() as usize
        } else {
            0
        };
        let target_size = if jaccard > 0.0 {
            ((intersection as f64 / jaccard).round() as usize + intersection).saturating_sub(source_size)
        } else {
            0
        };
        out.push(ClusterMatch {
            source_cluster_id: f[0].parse().map_err(|_| bad())?,
            target_label: f[1].to_string(),
            target_cluster_id: if f[2].is_empty() {
                None
            } else {
                Some(f[2].parse().map_err(|_| bad())?)
            },
            source_size,
            target_size,
            intersection,
            jaccard,
            proportion,
        });
    }
    Ok(out)
}

/// Thresholds for keeping a cluster as a community candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionCriteria {
    pub min_size: usize,
    pub max_size: usize,
    pub max_conductance: f64,
    pub min_jaccard: f64,
}

impl Default for SelectionCriteria {
    fn default() -> Self {
        SelectionCriteria {
            min_size: 30,
            max_size: 350,
            max_conductance: 0.5,
            min_jaccard: 0.9,
        }
    }
}

impl SelectionCriteria {
    pub fn size_ok(&self, size: usize) -> bool {
        (self.min_size..=self.max_size).contains(&size)
    }

    pub fn admits(&self, size: usize, conductance: f64, jaccard: f64) -> bool {
        self.size_ok(size) && conductance <= self.max_conductance && jaccard > self.min_jaccard
    }
}

/// Cluster ids passing every criterion, ascending. A cluster without a
/// match row is treated as unmatched (Jaccard 0).
pub fn select_candidates(
    metrics: &[ClusterMetrics],
    matches: &[ClusterMatch],
    criteria: &SelectionCriteria,
) -> Vec<usize> {
    assert!(criteria.min_size <= criteria.max_size, "min_size exceeds max_size");
    let jc: HashMap<usize, f64> = matches.iter().map(|m| (m.source_cluster_id, m.jaccard)).collect();
    let mut out: Vec<usize> = metrics
        .iter()
        .filter(|m| criteria.admits(m.size, m.conductance, jc.get(&m.cluster_id).copied().unwrap_or(0.0)))
        .map(|m| m.cluster_id)
        .collect();
    out.sort_unstable();
    out
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let comb2 = |x: usize| (x as f64) * (x as f64 - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let index: f64 = table.values().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| comb2(c)).sum();
    let expected = sum_rows * sum_cols / comb2(n);
    let max = (sum_rows + sum_cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::NamedCluster;

    fn named(label: &str, clusters: &[&[u32]]) -> NamedClusters {
        NamedClusters {
            label: label.into(),
            clusters: clusters
                .iter()
                .enumerate()
                .map(|(id, c)| NamedCluster {
                    id,
                    members: c.iter().map(|x| format!("p{x}")).collect(),
                })
                .collect(),
        }
    }

    fn ids(xs: impl IntoIterator<Item = u32>) -> Vec<String> {
        xs.into_iter().map(|x| format!("p{x}")).collect()
    }

    #[test]
    fn identical_cluster_matches_fully() {
        let t = named("t", &[&[1, 2, 3], &[4, 5]]);
        let m = best_match(&ids([4, 5]), &t);
        assert_eq!(m.target_cluster_id, Some(1));
        assert_eq!(m.jaccard, 1.0);
        assert_eq!(m.proportion, 1.0);
    }

    #[test]
    fn large_overlap_jaccard() {
        // 190-article source, 194-article target sharing 188
        let source = ids(0..190);
        let target: Vec<u32> = (2..190).chain(1000..1006).collect();
        let t = named("1988", &[&target, &[5000]]);
        let m = best_match(&source, &t);
        assert_eq!(m.intersection, 188);
        assert_eq!(m.target_size, 194);
        assert!((m.jaccard - 188.0 / 196.0).abs() < 1e-15);
        assert_eq!((m.jaccard * 100.0).round() / 100.0, 0.96);
    }

    #[test]
    fn disjoint_source_has_no_match() {
        let t = named("t", &[&[1, 2]]);
        let m = best_match(&ids([7, 8]), &t);
        assert_eq!(m.target_cluster_id, None);
        assert_eq!(m.jaccard, 0.0);
        assert_eq!(m.proportion, 0.0);
    }

    #[test]
    fn ties_prefer_higher_jaccard_then_lower_id() {
        // source {1,2}; target A={1,9,10} and B={2}: both intersect once,
        // B has the higher Jaccard (1/2 vs 1/4)
        let t = named("t", &[&[1, 9, 10], &[2]]);
        assert_eq!(best_match(&ids([1, 2]), &t).target_cluster_id, Some(1));
        let t = named("t", &[&[1, 9], &[2, 8]]);
        assert_eq!(best_match(&ids([1, 2]), &t).target_cluster_id, Some(0));
    }

    #[test]
    fn match_all_identity() {
        let s = named("s", &[&[1, 2, 3], &[4, 5], &[6]]);
        let ms = match_all(&s, &[&s]);
        assert!(ms.iter().all(|m| m.jaccard == 1.0));
    }

    #[test]
    fn split_cluster_halves_jaccard() {
        let s = named("s", &[&[1, 2, 3, 4, 5, 6, 7, 8], &[9, 10]]);
        let t = named("t", &[&[1, 2, 3, 4], &[5, 6, 7, 8], &[9, 10]]);
        let ms = match_all(&s, &[&t]);
        assert_eq!(ms[0].jaccard, 0.5);
        assert_eq!(ms[0].proportion, 0.5);
        assert_eq!(ms[1].jaccard, 1.0);
    }

    #[test]
    fn multi_slice_records_winning_label() {
        let s = named("combined", &[&[1, 2, 3, 4]]);
        let a = named("1990", &[&[1, 2], &[3]]);
        let b = named("1991", &[&[1, 2, 3, 9]]);
        let ms = match_all(&s, &[&a, &b]);
        assert_eq!(ms[0].target_label, "1991");
        assert_eq!(ms[0].intersection, 3);
        assert!((ms[0].proportion - 0.75).abs() < 1e-15);
    }

    #[test]
    fn proportions_are_bounded_and_dominate_jaccard() {
        let s = named("s", &[&[1, 2, 3], &[4, 5, 6, 7], &[8]]);
        let t = named("t", &[&[1, 2, 4], &[3, 5, 6, 7, 8, 9]]);
        for m in match_all(&s, &[&t]) {
            assert!((0.0..=1.0).contains(&m.proportion));
            assert!(m.proportion >= m.jaccard);
        }
    }

    fn row(id: usize, size: usize, cond: f64) -> ClusterMetrics {
        ClusterMetrics {
            cluster_id: id,
            size,
            internal_edges: 0,
            cut_edges: 0,
            conductance: cond,
        }
    }

    fn mt(id: usize, jc: f64) -> ClusterMatch {
        ClusterMatch {
            source_cluster_id: id,
            target_label: "g".into(),
            target_cluster_id: Some(id),
            source_size: 0,
            target_size: 0,
            intersection: 0,
            jaccard: jc,
            proportion: jc,
        }
    }

    #[test]
    fn selection_rules() {
        let c = SelectionCriteria::default();
        let metrics = [
            row(0, 20, 0.01),
            row(1, 100, 0.03),
            row(2, 30, 0.5),
            row(3, 350, 0.1),
            row(4, 351, 0.1),
            row(5, 100, 0.2),
        ];
        let matches = [
            mt(0, 0.99),
            mt(1, 0.95),
            mt(2, 0.91),
            mt(3, 0.95),
            mt(4, 0.99),
            mt(5, 0.9),
        ];
        assert_eq!(select_candidates(&metrics, &matches, &c), vec![1, 2, 3]);
    }

    #[test]
    fn matches_csv_roundtrip() {
        let ms = vec![
            ClusterMatch {
                source_cluster_id: 3,
                target_label: "1990".into(),
                target_cluster_id: Some(7),
                source_size: 4,
                target_size: 5,
                intersection: 3,
                jaccard: 0.5,
                proportion: 0.75,
            },
            ClusterMatch {
                source_cluster_id: 4,
                target_label: "1990".into(),
                target_cluster_id: None,
                source_size: 0,
                target_size: 0,
                intersection: 0,
                jaccard: 0.0,
                proportion: 0.0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        save_matches(&p, &ms).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(
            "source_id,target_label,target_id,intersection,jaccard,proportion\n3,1990,7,3,0.5,0.75\n4,1990,,0,0,0\n"
        ));
        assert_eq!(read_matches(&p).unwrap(), ms);
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 9, 9]), 1.0);
        // sklearn: adjusted_rand_score([0,0,1,1],[0,0,1,2]) = 0.5714285714
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]);
        assert!((v - 4.0 / 7.0).abs() < 1e-12, "{v}");
        // sklearn: adjusted_rand_score([0,0,0,1,1,1],[0,1,0,1,0,1]) = -1/9
        let v = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 1, 0, 1, 0, 1]);
        assert!((v + 1.0 / 9.0).abs() < 1e-12, "{v}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn labels(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
            prop::collection::vec(0..k, n)
        }

        fn to_named(label: &str, l: &[usize]) -> NamedClusters {
            let k = l.iter().max().map_or(0, |m| m + 1);
            let mut groups: Vec<Vec<u32>> = vec![Vec::new(); k];
            for (i, &c) in l.iter().enumerate() {
                groups[c].push(i as u32);
            }
            groups.retain(|g| !g.is_empty());
            let refs: Vec<&[u32]> = groups.iter().map(Vec::as_slice).collect();
            named(label, &refs)
        }

        proptest! {
            #[test]
            fn jaccard_is_symmetric(a in prop::collection::btree_set(0u32..20, 1..10),
                                    b in prop::collection::btree_set(0u32..20, 1..10)) {
                let inter = a.intersection(&b).count();
                prop_assert_eq!(jaccard(inter, a.len(), b.len()), jaccard(inter, b.len(), a.len()));
                prop_assert_eq!(jaccard(a.len(), a.len(), a.len()), 1.0);
            }

            #[test]
            fn best_match_has_max_intersection(s in labels(20, 5), t in labels(20, 6)) {
                let (sn, tn) = (to_named("s", &s), to_named("t", &t));
                for m in match_all(&sn, &[&tn]) {
                    let src: HashSet<&String> = sn.clusters[m.source_cluster_id].members.iter().collect();
                    for c in &tn.clusters {
                        let inter = c.members.iter().filter(|x| src.contains(x)).count();
                        prop_assert!(m.intersection >= inter);
                    }
                }
            }

            #[test]
            fn ari_is_one_on_relabeling(s in labels(30, 4)) {
                let renamed: Vec<usize> = s.iter().map(|x| 10 - x).collect();
                prop_assert!((adjusted_rand_index(&s, &renamed) - 1.0).abs() < 1e-12);
            }
        }
    }
}
