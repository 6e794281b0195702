// SPDX-License-Identifier: MIT OR Apache-2.0

//! Published numbers replayed through the statistics and experiment code.

use std::path::PathBuf;

use probekit::experiments::{equivalence_cluster, LayerCurve};
use probekit::similarity::{cka_gap_analysis, CkaMatrix};
use probekit::stats::{friedman, nemenyi_cd, spearman, FoldTable};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn read_rows(name: &str) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(false)
        .from_path(fixture(name))
        .unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

fn published_pairs() -> Vec<(f64, f64)> {
    read_rows("cka_gap_pairs.csv")
        .into_iter()
        .skip(1)
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect()
}

fn published_r2() -> Vec<f64> {
    read_rows("encoder_r2.csv").into_iter().skip(1).map(|r| r[1].parse().unwrap()).collect()
}

#[test]
fn published_pairs_are_uncorrelated() {
    let pairs = published_pairs();
    assert_eq!(pairs.len(), 28);
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let s = spearman(&x, &y).unwrap().unwrap();
    assert!((s.rho - 0.03).abs() <= 0.01, "rho {}", s.rho);
    assert!((s.p - 0.88).abs() <= 0.02, "p {}", s.p);
}

#[test]
fn matrix_and_r2_reproduce_the_pair_list() {
    let cka = CkaMatrix::read_csv(fixture("cka_encoders.csv")).unwrap();
    assert_eq!(cka.len(), 8);
    let gap = cka_gap_analysis(&cka, &published_r2()).unwrap();
    assert_eq!(gap.pairs.len(), 28);
    let mut ours: Vec<(i64, i64)> = gap
        .pairs
        .iter()
        .map(|p| ((p.cka * 1000.0).round() as i64, (p.abs_delta_r2 * 1000.0).round() as i64))
        .collect();
    let mut printed: Vec<(i64, i64)> = published_pairs()
        .iter()
        .map(|&(c, d)| ((c * 1000.0).round() as i64, (d * 1000.0).round() as i64))
        .collect();
    ours.sort_unstable();
    printed.sort_unstable();
    assert_eq!(ours, printed);
    let s = gap.spearman.unwrap();
    assert!((s.rho - 0.03).abs() <= 0.01);
    assert!((s.p - 0.88).abs() <= 0.02);
}

#[test]
fn layer_curves_pick_the_bold_layers() {
    let rows = read_rows("layer_curves.csv");
    let header = &rows[0];
    let expected = [
        ("DINOv2", 20, 0.523),
        ("DINOv3", 20, 0.556),
        ("SigLIP", 16, 0.550),
        ("SigLIP2", 16, 0.559),
        ("CLIP", 20, 0.551),
        ("InternViT", 20, 0.547),
    ];
    for (model, layer, r2) in expected {
        let col = header.iter().position(|h| h == model).unwrap();
        let (layers, values): (Vec<usize>, Vec<f64>) = rows[1..]
            .iter()
            .filter(|r| !r[col].is_empty())
            .map(|r| (r[0].parse::<usize>().unwrap(), r[col].parse::<f64>().unwrap()))
            .unzip();
        let curve = LayerCurve::from_values(layers.clone(), values.clone()).unwrap();
        assert_eq!(curve.best_layer, layer, "{model}");
        assert_eq!(curve.best_r2(), r2);
        // relabeling layers monotonically moves the argmax with them
        let relabeled = LayerCurve::from_values(layers.iter().map(|l| 3 * l + 1).collect(), values).unwrap();
        assert_eq!(relabeled.best_layer, 3 * layer + 1);
    }
}

#[test]
fn critical_difference_for_eleven_models() {
    let cd = nemenyi_cd(11, 10, 0.05).unwrap();
    // The published footnote gives 4.45; the studentized-range table gives 4.77.
    assert!((cd - 4.774).abs() < 1e-3);
    assert!((cd - 4.45).abs() > 0.3);
}

#[test]
fn two_group_fold_table() {
    let mut names = Vec::new();
    let mut values = Vec::new();
    for m in 0..6 {
        let level = if m < 3 { 0.55 } else { 0.35 };
        names.push(format!("model_{m}"));
        values.push((0..10).map(|f| level + 0.002 * ((m * 7 + f * 3) % 5) as f64).collect());
    }
    let table = FoldTable::new(names.clone(), values.clone()).unwrap();
    let cluster = equivalence_cluster(&table, 0.03, 0.05).unwrap();
    let mut members = cluster.members.clone();
    members.sort();
    assert_eq!(members, vec!["model_0", "model_1", "model_2"]);
    assert_eq!(cluster.pairs.len(), 15);

    // row order does not matter
    let rev = FoldTable::new(names.into_iter().rev().collect(), values.into_iter().rev().collect()).unwrap();
    let mut again = equivalence_cluster(&rev, 0.03, 0.05).unwrap().members;
    again.sort();
    assert_eq!(again, members);
    assert_eq!(cluster.members[0], equivalence_cluster(&rev, 0.03, 0.05).unwrap().members[0]);

    let f = friedman(&table).unwrap();
    assert_eq!(f.df, 5);
    assert!(f.p < 0.01);
}

#[test]
fn fold_table_csv_round_trip() {
    let table = FoldTable::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![vec![0.5, 0.25, 0.125], vec![0.1, 0.2, 0.3], vec![1.0, -1.0, 0.0]],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("folds.csv");
    table.write_csv(&path).unwrap();
    assert_eq!(FoldTable::read_csv(&path).unwrap(), table);
}
