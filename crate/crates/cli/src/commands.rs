// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use probekit::arraystore::{load_dataset, FeatureSet, TargetSet};
use probekit::experiments::{
    equivalence_cluster, head_entropy_correlation, layer_sweep, nested_cv, patch_ablation_experiment,
    per_head_probe, sweep_split, validity_controls, ClusterReport, CvConfig, EntropyCorrelation, HeadResult,
    LayerCurve, LayerSweep, SweepSummary,
};
use probekit::metrics::{r2_per_target, uniform_mean};
use probekit::probes::{load_probe, predict, save_probe, SweepCell};
use probekit::similarity::{cka_gap_analysis, CkaMatrix, GapAnalysis};
use probekit::stats::{bca_ci, friedman, nemenyi_cd, BootstrapCI, BootstrapConfig, FoldTable, FriedmanResult};
use probekit::synth::{
    gen_concentrated, gen_low_variance_target, gen_pixels, gen_planted_linear, write_dataset, SynthSpec,
};
use probekit::Matrix;

use crate::output::{num, opt, OutDir};
use crate::{Cli, Command};

const PUBLISHED_DELTA: f64 = 0.03;
const PUBLISHED_TEST_LEVEL: f64 = 0.05;
const PUBLISHED_B: usize = 10_000;
const PUBLISHED_CI_LEVEL: f64 = 0.95;
const PUBLISHED_OUTER_FOLDS: usize = 10;

/// Bad flag combinations detected after parsing (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Planted,
    Concentrated,
    LowVariance,
}

/// `value`, or the published one when `paper` is set.
fn pinned<T: PartialEq + Debug + Copy>(flag: &str, value: T, published: T, paper: bool) -> T {
    if !paper {
        return value;
    }
    if value != published {
        log::warn!("--paper-defaults overrides --{flag} {value:?} with {published:?}");
    }
    published
}

pub fn run(cli: &Cli) -> Result<()> {
    let paper = cli.paper_defaults;
    let out = OutDir::create(&cli.out)?;
    match &cli.command {
        Command::Fit { manifest, grid } => fit(&out, manifest, grid.grid(paper)?),
        Command::Compare { folds, delta, level } => compare(
            &out,
            folds,
            pinned("delta", *delta, PUBLISHED_DELTA, paper),
            pinned("level", *level, PUBLISHED_TEST_LEVEL, paper),
        ),
        Command::Cka { manifest, matrix, r2 } => cka(&out, manifest, matrix.as_deref(), r2.as_deref()),
        Command::Bootstrap {
            manifest,
            probe,
            resamples,
            level,
            seed,
        } => bootstrap(
            &out,
            manifest,
            probe,
            BootstrapConfig {
                b: pinned("b", *resamples, PUBLISHED_B, paper),
                level: pinned("level", *level, PUBLISHED_CI_LEVEL, paper),
                seed: *seed,
            },
        ),
        Command::Layers {
            manifest,
            values,
            column,
            grid,
        } => match values {
            Some(path) => layer_table(&out, path, column.as_deref()),
            None => layers(&out, manifest, &grid.grid(paper)?),
        },
        Command::Cv {
            manifest,
            outer_folds,
            inner_folds,
            seed,
            grid,
        } => cv(
            &out,
            manifest,
            &grid.grid(paper)?,
            &CvConfig {
                outer_folds: pinned("outer-folds", *outer_folds, PUBLISHED_OUTER_FOLDS, paper),
                inner_folds: *inner_folds,
                seed: *seed,
            },
        ),
        Command::Ablate { manifest, k, seed, grid } => ablate(&out, manifest, *k, *seed, &grid.grid(paper)?),
        Command::Heads { manifest, heads, grid } => heads_cmd(&out, manifest, *heads, &grid.grid(paper)?),
        Command::Validate { manifest, seed, grid } => validate(&out, manifest, *seed, &grid.grid(paper)?),
        Command::Synth {
            kind,
            n,
            t,
            d,
            k,
            rank,
            sigma,
            signal_patches,
            target_stds,
            pixels,
            test_fraction,
            seed,
        } => {
            let spec = SynthSpec {
                n: *n,
                t: *t,
                d: *d,
                k: *k,
                rank: *rank,
                noise_sigma: *sigma,
                signal_patches: (!signal_patches.is_empty()).then(|| signal_patches.clone()),
                target_stds: (!target_stds.is_empty()).then(|| target_stds.clone()),
                seed: *seed,
                test_fraction: *test_fraction,
            };
            synth(&out, *kind, &spec, *pixels)
        }
    }
}

fn load(path: &Path) -> Result<(FeatureSet, TargetSet)> {
    Ok(load_dataset(path)?)
}

fn summary_row(s: &SweepSummary) -> Vec<String> {
    vec![
        s.best_rank.to_string(),
        num(s.best_alpha),
        num(s.report.r2_uniform_mean),
        num(s.report.mae),
    ]
}

fn grid_rows(cells: &[SweepCell]) -> Vec<Vec<String>> {
    cells
        .iter()
        .map(|c| {
            vec![
                c.rank.to_string(),
                num(c.alpha),
                opt(c.holdout_r2_uniform),
                opt(c.mae),
                c.error.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

const GRID_HEADER: [&str; 5] = ["rank", "alpha", "r2_uniform_mean", "mae", "error"];

#[derive(Serialize)]
struct FitReport<'a> {
    model_id: &'a str,
    layer: usize,
    dataset_name: &'a str,
    n_features: usize,
    n_train: usize,
    #[serde(flatten)]
    summary: SweepSummary,
    probe_dir: &'a str,
}

fn fit(out: &OutDir, manifest: &Path, grid: probekit::probes::Grid) -> Result<()> {
    let (fs, ts) = load(manifest)?;
    let x = fs.pooled()?;
    let result = sweep_split(&x, &ts.values, &fs.split, &grid, &ts.names)?;
    let probe = result.best_probe.clone().with_identity(fs.model_id.clone(), fs.layer);
    save_probe(out.path("probe"), &probe)?;
    let summary = SweepSummary::from(&result);
    out.csv("fit_grid.csv", &GRID_HEADER, &grid_rows(&summary.grid))?;
    out.json(
        "fit_report.json",
        &FitReport {
            model_id: &fs.model_id,
            layer: fs.layer,
            dataset_name: &fs.dataset_name,
            n_features: x.ncols(),
            n_train: fs.split.train_indices.len(),
            summary,
            probe_dir: "probe",
        },
    )?;
    println!(
        "{} L{}: rank {} alpha {} r2 {:.4}",
        fs.model_id, fs.layer, result.best.0, result.best.1, result.best_report.r2_uniform_mean
    );
    Ok(())
}

#[derive(Serialize)]
struct CompareReport {
    models: Vec<String>,
    folds: usize,
    means: Vec<f64>,
    friedman: Option<FriedmanResult>,
    nemenyi_cd: Option<f64>,
    cluster: ClusterReport,
    notices: Vec<String>,
}

fn compare(out: &OutDir, folds: &Path, delta: f64, level: f64) -> Result<()> {
    let table = FoldTable::read_csv(folds)?;
    let mut notices = Vec::new();
    let (fr, cd) = if table.models() < 3 {
        notices.push(format!("Friedman test skipped: needs >= 3 models, got {}", table.models()));
        (None, None)
    } else {
        let fr = friedman(&table)?;
        let cd = match nemenyi_cd(table.models(), table.folds(), level) {
            Ok(cd) => Some(cd),
            Err(e) => {
                notices.push(format!("Nemenyi critical difference unavailable: {e}"));
                None
            }
        };
        (Some(fr), cd)
    };
    let cluster = equivalence_cluster(&table, delta, level)?;
    let rows: Vec<Vec<String>> = cluster
        .pairs
        .iter()
        .map(|p| {
            vec![
                p.model_a.clone(),
                p.model_b.clone(),
                num(p.tost.mean_diff),
                num(p.tost.p_tost),
                num(p.p_holm),
                p.equivalent.to_string(),
            ]
        })
        .collect();
    out.csv(
        "compare_pairs.csv",
        &["model_a", "model_b", "mean_diff", "p_tost", "p_holm", "equivalent"],
        &rows,
    )?;
    for n in &notices {
        log::warn!("{n}");
    }
    println!("cluster: {}", cluster.members.join(", "));
    out.json(
        "compare.json",
        &CompareReport {
            models: table.model_names.clone(),
            folds: table.folds(),
            means: (0..table.models()).map(|i| table.mean(i)).collect(),
            friedman: fr,
            nemenyi_cd: cd,
            cluster,
            notices,
        },
    )?;
    Ok(())
}

/// Model names for a list of feature sets, made unique with the layer and
/// then the position when needed.
fn unique_names(sets: &[FeatureSet]) -> Vec<String> {
    let distinct = |names: &[String]| {
        let mut s = names.to_vec();
        s.sort();
        s.dedup();
        s.len() == names.len()
    };
    let names: Vec<String> = sets.iter().map(|f| f.model_id.clone()).collect();
    if distinct(&names) {
        return names;
    }
    let names: Vec<String> = sets.iter().map(|f| format!("{}_L{}", f.model_id, f.layer)).collect();
    if distinct(&names) {
        return names;
    }
    names.iter().enumerate().map(|(i, n)| format!("{n}_{i}")).collect()
}

fn read_r2_table(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut map = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let (Some(model), Some(value)) = (record.get(0), record.get(1)) else {
            bail!(probekit::Error::Manifest(format!("{}: rows must be model,r2", path.display())));
        };
        let v: f64 = value
            .parse()
            .map_err(|_| probekit::Error::Manifest(format!("bad R² '{value}' for {model}")))?;
        map.insert(model.to_string(), v);
    }
    Ok(map)
}

fn cka(out: &OutDir, manifests: &[PathBuf], matrix: Option<&Path>, r2: Option<&Path>) -> Result<()> {
    let cka = match matrix {
        Some(path) => CkaMatrix::read_csv(path)?,
        None => {
            if manifests.len() < 2 {
                return Err(usage("cka needs --matrix or at least two --manifest paths"));
            }
            let loaded = manifests.iter().map(|m| load(m)).collect::<Result<Vec<_>>>()?;
            let (first_fs, first_ts) = &loaded[0];
            for (fs, ts) in &loaded[1..] {
                if ts.values != first_ts.values {
                    bail!(probekit::Error::Alignment(format!(
                        "{} and {} do not list the same samples in the same order",
                        first_fs.model_id, fs.model_id
                    )));
                }
            }
            let sets: Vec<FeatureSet> = loaded.iter().map(|(f, _)| f.clone()).collect();
            let features = sets.iter().map(|f| f.pooled()).collect::<probekit::Result<Vec<Matrix>>>()?;
            CkaMatrix::from_features(unique_names(&sets), &features)?
        }
    };
    let rows: Vec<Vec<String>> = cka
        .models
        .iter()
        .zip(&cka.values)
        .map(|(m, row)| std::iter::once(m.clone()).chain(row.iter().map(|&v| num(v))).collect())
        .collect();
    let header: Vec<&str> = std::iter::once("model").chain(cka.models.iter().map(String::as_str)).collect();
    out.csv("cka_matrix.csv", &header, &rows)?;
    out.json("cka_matrix.json", &cka)?;

    if let Some(path) = r2 {
        let table = read_r2_table(path)?;
        let values = cka
            .models
            .iter()
            .map(|m| {
                table
                    .get(m)
                    .copied()
                    .ok_or_else(|| probekit::Error::InvalidArgument(format!("no R² for model {m} in {}", path.display())))
            })
            .collect::<probekit::Result<Vec<f64>>>()?;
        let gap: GapAnalysis = cka_gap_analysis(&cka, &values)?;
        let rows: Vec<Vec<String>> = gap
            .pairs
            .iter()
            .map(|p| vec![p.model_a.clone(), p.model_b.clone(), num(p.cka), num(p.abs_delta_r2)])
            .collect();
        out.csv("cka_pairs.csv", &["model_a", "model_b", "cka", "abs_delta_r2"], &rows)?;
        match &gap.spearman {
            Some(s) => println!("spearman rho {:.4} p {:.4} over {} pairs", s.rho, s.p, s.n),
            None => println!("spearman undefined: constant column"),
        }
        out.json("cka_gap.json", &gap)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BootstrapReport<'a> {
    model_id: &'a str,
    layer: usize,
    n_test: usize,
    statistic: &'static str,
    ci: BootstrapCI,
}

fn bootstrap(out: &OutDir, manifest: &Path, probe_dir: &Path, config: BootstrapConfig) -> Result<()> {
    let (fs, ts) = load(manifest)?;
    let probe = load_probe(probe_dir)?;
    let test = &fs.split.test_indices;
    let x = fs.pooled()?.select_rows(test);
    if x.ncols() != probe.n_features() || ts.values.ncols() != probe.n_targets() {
        bail!(probekit::Error::Shape(format!(
            "probe maps {} features to {} targets; data has {} and {}",
            probe.n_features(),
            probe.n_targets(),
            x.ncols(),
            ts.values.ncols()
        )));
    }
    let y = ts.values.select_rows(test);
    let yhat = predict(&probe, &x)?;
    let statistic = |idx: &[usize]| {
        r2_per_target(&y.select_rows(idx), &yhat.select_rows(idx))
            .ok()
            .and_then(|r| uniform_mean(&r))
            .unwrap_or(f64::NAN)
    };
    let ci = bca_ci(test.len(), statistic, &config)?;
    let model = probe.model_id.clone();
    out.csv(
        "bootstrap.csv",
        &["model", "point", "lower", "upper"],
        &[vec![model.clone(), num(ci.point), num(ci.lower), num(ci.upper)]],
    )?;
    println!("{model}: {:.4} [{:.4}, {:.4}]", ci.point, ci.lower, ci.upper);
    out.json(
        "bootstrap.json",
        &BootstrapReport {
            model_id: &model,
            layer: probe.layer,
            n_test: test.len(),
            statistic: "r2_uniform_mean",
            ci,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct LayerReport<'a> {
    model_id: &'a str,
    dataset_name: &'a str,
    #[serde(flatten)]
    sweep: LayerSweep,
}

fn layers(out: &OutDir, manifests: &[PathBuf], grid: &probekit::probes::Grid) -> Result<()> {
    if manifests.is_empty() {
        return Err(usage("layers needs --values or at least one --manifest"));
    }
    let loaded = manifests.iter().map(|m| load(m)).collect::<Result<Vec<_>>>()?;
    let model = loaded[0].0.model_id.clone();
    let dataset = loaded[0].0.dataset_name.clone();
    if let Some((fs, _)) = loaded.iter().find(|(f, _)| f.model_id != model) {
        return Err(usage(format!("layers expects one model, got {model} and {}", fs.model_id)));
    }
    let sweep = layer_sweep(&loaded, grid)?;
    let rows: Vec<Vec<String>> = sweep
        .curve
        .layers
        .iter()
        .zip(&sweep.per_layer)
        .map(|(l, s)| {
            let mut row = vec![model.clone(), l.to_string()];
            row.extend(summary_row(s));
            row.push((*l == sweep.curve.best_layer).to_string());
            row
        })
        .collect();
    out.csv(
        "layers.csv",
        &["model", "layer", "best_rank", "best_alpha", "r2_uniform_mean", "mae", "best"],
        &rows,
    )?;
    println!("{model}: best layer {} r2 {:.4}", sweep.curve.best_layer, sweep.curve.best_r2());
    out.json(
        "layers.json",
        &LayerReport {
            model_id: &model,
            dataset_name: &dataset,
            sweep,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ModelCurve {
    model: String,
    curve: LayerCurve,
}

/// One model column of a layer table: name, layers present, R² values.
type LayerColumn = (String, Vec<usize>, Vec<f64>);

/// Reads `layer,<model...>` with blank cells for missing layers.
fn read_layer_table(path: &Path) -> Result<Vec<LayerColumn>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let models: Vec<String> = reader.headers()?.iter().skip(1).map(str::to_owned).collect();
    let mut cols: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); models.len()];
    for record in reader.records() {
        let record = record?;
        let layer_field = record.get(0).unwrap_or_default();
        let layer: usize = layer_field
            .trim_start_matches(['L', 'l'])
            .parse()
            .map_err(|_| probekit::Error::Manifest(format!("bad layer '{layer_field}'")))?;
        for (j, col) in cols.iter_mut().enumerate() {
            match record.get(j + 1) {
                None | Some("") => {}
                Some(v) => {
                    let v: f64 = v
                        .parse()
                        .map_err(|_| probekit::Error::Manifest(format!("bad R² '{v}' at layer {layer}")))?;
                    col.0.push(layer);
                    col.1.push(v);
                }
            }
        }
    }
    Ok(models.into_iter().zip(cols).map(|(m, (l, v))| (m, l, v)).collect())
}

fn layer_table(out: &OutDir, path: &Path, column: Option<&str>) -> Result<()> {
    let mut table = read_layer_table(path)?;
    if let Some(c) = column {
        table.retain(|(m, _, _)| m == c);
        if table.is_empty() {
            return Err(usage(format!("column {c} not found in {}", path.display())));
        }
    }
    let curves = table
        .into_iter()
        .map(|(model, layers, r2)| Ok(ModelCurve { model, curve: LayerCurve::from_values(layers, r2)? }))
        .collect::<probekit::Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for mc in &curves {
        for (l, v) in mc.curve.layers.iter().zip(&mc.curve.r2) {
            rows.push(vec![
                mc.model.clone(),
                l.to_string(),
                num(*v),
                (*l == mc.curve.best_layer).to_string(),
            ]);
        }
        println!("{}: best layer {} r2 {}", mc.model, mc.curve.best_layer, mc.curve.best_r2());
    }
    out.csv("layers.csv", &["model", "layer", "r2_uniform_mean", "best"], &rows)?;
    out.json("layers.json", &curves)?;
    Ok(())
}

#[derive(Serialize)]
struct CvReport<'a> {
    model_id: &'a str,
    layer: usize,
    config: CvConfig,
    #[serde(flatten)]
    result: probekit::experiments::CvResult,
}

fn cv(out: &OutDir, manifest: &Path, grid: &probekit::probes::Grid, config: &CvConfig) -> Result<()> {
    let (fs, ts) = load(manifest)?;
    let result = nested_cv(&fs.pooled()?, &ts.values, grid, config)?;
    let rows: Vec<Vec<String>> = result
        .per_fold_r2
        .iter()
        .zip(&result.chosen_hp_per_fold)
        .enumerate()
        .map(|(f, (r2, hp))| {
            vec![
                f.to_string(),
                opt(*r2),
                hp.map(|h| h.0.to_string()).unwrap_or_default(),
                hp.map(|h| num(h.1)).unwrap_or_default(),
            ]
        })
        .collect();
    out.csv("cv.csv", &["fold", "r2_uniform_mean", "rank", "alpha"], &rows)?;
    println!("{}: mean r2 {:.4} over {} folds", fs.model_id, result.mean, config.outer_folds);
    out.json(
        "cv.json",
        &CvReport {
            model_id: &fs.model_id,
            layer: fs.layer,
            config: *config,
            result,
        },
    )?;
    Ok(())
}

fn ablate(out: &OutDir, manifest: &Path, k: usize, seed: u64, grid: &probekit::probes::Grid) -> Result<()> {
    let (fs, ts) = load(manifest)?;
    if fs.pre_pooled {
        bail!(probekit::Error::InvalidArgument(
            "ablation needs token-level features, the manifest holds pooled vectors".into()
        ));
    }
    let cmp = patch_ablation_experiment(&fs.tokens, &fs.mask, &ts.values, &fs.split, k, grid, seed, &ts.names)?;
    let rows: Vec<Vec<String>> = [&cmp.top_norm, &cmp.random]
        .iter()
        .map(|r| {
            vec![
                r.mode.to_string(),
                r.k.to_string(),
                num(r.baseline_r2),
                num(r.ablated_r2),
                num(r.delta),
            ]
        })
        .collect();
    out.csv("ablation.csv", &["mode", "k", "baseline_r2", "ablated_r2", "delta"], &rows)?;
    println!(
        "{}: top-norm delta {:.4}, random delta {:.4}",
        fs.model_id, cmp.top_norm.delta, cmp.random.delta
    );
    out.json("ablation.json", &cmp)?;
    Ok(())
}

#[derive(Serialize)]
struct HeadsReport {
    heads: Vec<HeadResult>,
    entropy_correlation: Option<EntropyCorrelation>,
}

fn heads_cmd(out: &OutDir, manifest: &Path, heads: usize, grid: &probekit::probes::Grid) -> Result<()> {
    let (fs, ts) = load(manifest)?;
    let results = per_head_probe(&fs.tokens, heads, &fs.mask, &ts.values, &fs.split, grid, &ts.names)?;
    let entropy_correlation = match &fs.entropies {
        Some(e) => Some(head_entropy_correlation(e, &ts.values)?),
        None => None,
    };
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|h| {
            let mut row = vec![h.head.to_string(), h.channel_start.to_string(), h.channel_end.to_string()];
            row.extend(summary_row(&h.sweep));
            row
        })
        .collect();
    out.csv(
        "heads.csv",
        &["head", "channel_start", "channel_end", "best_rank", "best_alpha", "r2_uniform_mean", "mae"],
        &rows,
    )?;
    if let Some(best) = results
        .iter()
        .max_by(|a, b| a.sweep.report.r2_uniform_mean.total_cmp(&b.sweep.report.r2_uniform_mean))
    {
        println!("best head {} r2 {:.4}", best.head, best.sweep.report.r2_uniform_mean);
    }
    out.json(
        "heads.json",
        &HeadsReport {
            heads: results,
            entropy_correlation,
        },
    )?;
    Ok(())
}

fn validate(out: &OutDir, manifest: &Path, seed: u64, grid: &probekit::probes::Grid) -> Result<()> {
    let (fs, ts) = load(manifest)?;
    let report = validity_controls(
        &fs.pooled()?,
        &ts.values,
        &fs.split,
        grid,
        fs.pixels.as_ref(),
        seed,
        &ts.names,
    )?;
    let mut rows = vec![{
        let mut row = vec!["baseline".to_string()];
        row.extend(summary_row(&report.baseline));
        row
    }];
    let controls = [Some(&report.shuffled_targets), Some(&report.random_features), report.pixel_baseline.as_ref()];
    for c in controls.into_iter().flatten() {
        let mut row = vec![c.name.clone()];
        row.extend(summary_row(&c.sweep));
        rows.push(row);
    }
    out.csv("validity.csv", &["control", "best_rank", "best_alpha", "r2_uniform_mean", "mae"], &rows)?;
    for row in &rows {
        println!("{}: r2 {}", row[0], row[3]);
    }
    for n in &report.notices {
        log::warn!("{n}");
    }
    out.json("validity.json", &report)?;
    Ok(())
}

#[derive(Serialize)]
struct SynthReport<'a> {
    kind: &'static str,
    spec: &'a SynthSpec,
    analytic_r2: Vec<f64>,
    manifest: String,
    pixel_dim: Option<usize>,
}

fn synth(out: &OutDir, kind: SynthKind, spec: &SynthSpec, pixels: Option<usize>) -> Result<()> {
    let (data, label) = match kind {
        SynthKind::Planted => (gen_planted_linear(spec)?, "planted"),
        SynthKind::Concentrated => (gen_concentrated(spec)?, "concentrated"),
        SynthKind::LowVariance => (gen_low_variance_target(spec)?, "low-variance"),
    };
    let pixel_matrix = pixels.map(|dim| gen_pixels(spec.n, dim, spec.seed));
    let manifest = write_dataset(
        out.root(),
        &data,
        &format!("synthetic-{label}"),
        0,
        pixel_matrix.as_ref(),
    )?;
    let name = manifest
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.json(
        "synth_spec.json",
        &SynthReport {
            kind: label,
            spec,
            analytic_r2: data.analytic_r2(),
            manifest: name,
            pixel_dim: pixels,
        },
    )?;
    println!("{}", manifest.display());
    Ok(())
}
