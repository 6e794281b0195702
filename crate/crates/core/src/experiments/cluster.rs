// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{holm_bonferroni, paired_tost, FoldTable, TostResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub model_a: String,
    pub model_b: String,
    pub tost: TostResult,
    pub p_holm: f64,
    pub equivalent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Members in the order they joined.
    pub members: Vec<String>,
    pub delta: f64,
    pub level: f64,
    pub pairs: Vec<PairTest>,
}

/// Greedy TOST equivalence cluster.
///
/// Every pair of models is tested and the p-values are Holm-adjusted as one
/// family. The cluster starts from the best mean model; the others are
/// visited by descending mean (ties by name) and join when they are
/// equivalent to every current member.
pub fn equivalence_cluster(table: &FoldTable, delta: f64, level: f64) -> Result<ClusterReport> {
    let m = table.models();
    if m == 0 {
        return Err(Error::InsufficientData("no models to cluster".into()));
    }
    let means: Vec<f64> = (0..m).map(|i| table.mean(i)).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        means[b]
            .total_cmp(&means[a])
            .then_with(|| table.model_names[a].cmp(&table.model_names[b]))
    });

    // tested in canonical (sorted) order so the report does not depend on
    // the row order of the input table
    let mut index = vec![vec![usize::MAX; m]; m];
    let mut tests = Vec::with_capacity(m * (m - 1) / 2);
    for (x, &i) in order.iter().enumerate() {
        for &j in &order[x + 1..] {
            index[i][j] = tests.len();
            index[j][i] = tests.len();
            tests.push((i, j, paired_tost(&table.values[i], &table.values[j], delta, level)?));
        }
    }
    let raw: Vec<f64> = tests.iter().map(|t| t.2.p_tost).collect();
    let adjusted = holm_bonferroni(&raw)?;
    let pairs: Vec<PairTest> = tests
        .iter()
        .zip(&adjusted)
        .map(|(&(i, j, tost), &p)| PairTest {
            model_a: table.model_names[i].clone(),
            model_b: table.model_names[j].clone(),
            tost,
            p_holm: p,
            equivalent: p < level,
        })
        .collect();

    let mut members = vec![order[0]];
    for &candidate in &order[1..] {
        if members.iter().all(|&mem| pairs[index[candidate][mem]].equivalent) {
            members.push(candidate);
        }
    }
    Ok(ClusterReport {
        members: members.iter().map(|&i| table.model_names[i].clone()).collect(),
        delta,
        level,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(names: &[&str], values: Vec<Vec<f64>>) -> FoldTable {
        FoldTable::new(names.iter().map(|s| s.to_string()).collect(), values).unwrap()
    }

    #[test]
    fn identical_models_all_join() {
        let t = table(&["a", "b", "c"], vec![vec![0.5, 0.6, 0.55]; 3]);
        let c = equivalence_cluster(&t, 0.03, 0.05).unwrap();
        assert_eq!(c.members.len(), 3);
        assert_eq!(c.pairs.len(), 3);
    }

    #[test]
    fn single_model() {
        let t = table(&["only"], vec![vec![0.5, 0.6]]);
        assert_eq!(equivalence_cluster(&t, 0.03, 0.05).unwrap().members, vec!["only"]);
    }

    #[test]
    fn top_member_first() {
        let t = table(&["low", "high"], vec![vec![0.1, 0.2, 0.15], vec![0.5, 0.6, 0.55]]);
        let c = equivalence_cluster(&t, 0.03, 0.05).unwrap();
        assert_eq!(c.members, vec!["high"]);
    }
}
