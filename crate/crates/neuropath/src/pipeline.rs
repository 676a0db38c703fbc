//! The four stages (train, localize, synthesize, evaluate). Each stage reads
//! its inputs from disk and writes its outputs under `<out>`, so any stage
//! can be rerun on its own.

use std::path::PathBuf;

use log::info;
use neuropath_core::evaluation::{coverage_of_inputs, synthesized_metrics, ActivationQuantifier};
use neuropath_core::localization::{overlap_ratio, rank_top_k, suspiciousness, Measure, Suspect, SuspiciousSet};
use neuropath_core::stats::{a12, spearman, wilcoxon_rank_sum};
use neuropath_core::synthesis::SynthesisParams;
use neuropath_core::train::{accuracy, cross_entropy, train};
use neuropath_core::{Dataset, Network};
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    read_spectrum, read_synth_run, synth_run_name, write_csv, write_json, write_spectrum, write_synth_run,
    SpectrumMeta, StageLossRow, SynthIndexEntry, SynthMeta, SynthRun, PLOTS_DIR, REPORT_JSON, SYNTH_DATA_FILE,
    SYNTH_DIR,
};
use crate::config::{Resolved, RunConfig};
use crate::datasets::load_mnist_split;
use crate::error::{Error, Result};
use crate::model_io::{load_model, save_model};
use crate::parallel::{accumulate_parallel, synthesize_parallel, with_pool};

fn limited(data: Dataset, limit: Option<usize>) -> Dataset {
    match limit {
        Some(n) if n < data.len() => data.truncated(n),
        _ => data,
    }
}

pub fn load_train_set(cfg: &RunConfig) -> Result<Dataset> {
    Ok(limited(load_mnist_split(&cfg.data_dir, "train")?, cfg.train_limit))
}

pub fn load_test_set(cfg: &RunConfig) -> Result<Dataset> {
    Ok(limited(load_mnist_split(&cfg.data_dir, "t10k")?, cfg.test_limit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model_dir: PathBuf,
    pub train_samples: usize,
    pub parameters: usize,
    pub test_accuracy: f64,
}

pub fn train_stage(cfg: &RunConfig, r: &Resolved) -> Result<TrainSummary> {
    let train_set = load_train_set(cfg)?;
    let test_set = load_test_set(cfg)?;
    let init = r.architecture.build(&[train_set.dim()], cfg.seed)?;
    info!(
        "training {} ({} parameters) on {} samples for {} epochs",
        r.architecture,
        init.parameter_count(),
        train_set.len(),
        r.train.epochs
    );
    let net = train(&init, &train_set, &r.train)?;
    let test_accuracy = 100.0 * accuracy(&net, &test_set)?;
    info!("test accuracy {test_accuracy:.2}%");
    let model_dir = cfg.model_dir();
    save_model(&net, &model_dir)?;
    Ok(TrainSummary {
        model_dir,
        train_samples: train_set.len(),
        parameters: net.parameter_count(),
        test_accuracy,
    })
}

/// Accumulates the hit spectrum over the test set and writes
/// `spectrum.csv`.
pub fn localize_stage(cfg: &RunConfig, r: &Resolved, jobs: usize) -> Result<SpectrumMeta> {
    let net = load_model(&cfg.model_dir())?;
    let test = load_test_set(cfg)?;
    let indices: Vec<usize> = (0..test.len()).collect();
    if indices.is_empty() {
        return Err(Error::Usage("the test set is empty".into()));
    }
    let spectrum = with_pool(jobs, || accumulate_parallel(&net, &test, &indices, &r.analysis))??;
    let meta = SpectrumMeta {
        dataset: test.name.clone(),
        samples: test.len(),
        analyzed: spectrum.analyzed,
        degenerate: spectrum.degenerate,
        widths: spectrum.widths(),
        alpha: r.analysis.alpha,
        beta: r.analysis.beta,
    };
    info!(
        "localized over {} inputs ({} degenerate)",
        meta.analyzed, meta.degenerate
    );
    write_spectrum(&cfg.out, &spectrum, &meta)?;
    Ok(meta)
}

/// Suspicious neurons for one measure and `k`, from the stored spectrum.
fn select_targets(cfg: &RunConfig, r: &Resolved, measure: Measure, k: usize) -> Result<SuspiciousSet> {
    let (spectrum, _) = read_spectrum(&cfg.out)?;
    Ok(rank_top_k(&suspiciousness(&spectrum, measure), k, r.mode)?)
}

/// Test inputs synthesis starts from: the first `synth_limit` correctly
/// classified ones.
pub fn synthesis_inputs(net: &Network, test: &Dataset, limit: usize) -> Result<Vec<usize>> {
    let mut picked = Vec::new();
    for i in 0..test.len() {
        if picked.len() == limit {
            break;
        }
        if net.forward(test.input(i))?.predicted_class == test.label(i) {
            picked.push(i);
        }
    }
    Ok(picked)
}

fn run_dir(cfg: &RunConfig, measure: Measure, k: usize, method: &str) -> PathBuf {
    cfg.out.join(SYNTH_DIR).join(synth_run_name(measure, k, method))
}

/// Synthesizes one set per (measure, k, synthesizer) and writes it under
/// `synth/`.
pub fn synthesize_stage(cfg: &RunConfig, r: &Resolved, jobs: usize) -> Result<Vec<PathBuf>> {
    let net = load_model(&cfg.model_dir())?;
    let test = load_test_set(cfg)?;
    let inputs = synthesis_inputs(&net, &test, cfg.synth_limit)?;
    if inputs.is_empty() {
        return Err(Error::Usage("no correctly classified test inputs to synthesize from".into()));
    }
    let mut written = Vec::new();
    for &measure in &r.measures {
        for &k in &cfg.k {
            let targets = select_targets(cfg, r, measure, k)?;
            for &method in &r.methods {
                let params = SynthesisParams {
                    method,
                    ..r.synthesis
                };
                let results = with_pool(jobs, || synthesize_parallel(&net, &test, &inputs, &targets, &params))??;
                let mut index = Vec::new();
                let mut synthesized = Vec::new();
                let mut losses = Vec::new();
                for (&i, res) in inputs.iter().zip(results) {
                    let Some(res) = res else { continue };
                    index.push(SynthIndexEntry {
                        original_idx: i,
                        label: res.label,
                        final_class: res.final_class,
                        misclassified: res.misclassified,
                        iterations_run: res.iterations_run,
                        steps: res.steps,
                        l1: res.distances.l1,
                        l2: res.distances.l2,
                        linf: res.distances.linf,
                    });
                    losses.extend(res.stage_losses.iter().map(|s| StageLossRow {
                        original_idx: i,
                        iteration: s.iteration,
                        stage: s.stage,
                        loss: s.loss,
                    }));
                    synthesized.push(res.synthesized);
                }
                let run = SynthRun {
                    meta: SynthMeta {
                        measure: measure.name().into(),
                        k,
                        mode: r.mode.name().into(),
                        method: method.name().into(),
                        step: params.step,
                        d_max: params.d_max,
                        iterations: params.iterations,
                        distance_mode: params.bound.name().into(),
                        mga_anchor: params.anchor,
                        dim: test.dim(),
                        count: synthesized.len(),
                        targets: targets.suspects.iter().map(|s| (s.layer, s.neuron)).collect(),
                        data_file: SYNTH_DATA_FILE.into(),
                    },
                    index,
                    inputs: synthesized,
                };
                let misclassified = run.index.iter().filter(|e| e.misclassified).count();
                info!(
                    "{measure} k={k} {method}: {misclassified}/{} misclassified",
                    run.meta.count
                );
                let dir = run_dir(cfg, measure, k, method.name());
                write_synth_run(&dir, &run, &losses)?;
                written.push(dir);
            }
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub architecture: String,
    pub parameters: usize,
    pub test_samples: usize,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub measure: String,
    pub k: usize,
    pub method: String,
    pub n_synth: usize,
    pub n_failed: usize,
    /// Percent of synthesized inputs activating every target neuron.
    pub c: f64,
    /// Percent of misclassified synthesized inputs activating every target.
    pub f: f64,
    pub accuracy: f64,
    pub loss: f64,
    pub mean_l1: f64,
    pub mean_l2: f64,
    pub mean_linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub method: String,
    pub n: usize,
    /// Spearman rho between C and F; absent when either series is constant.
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
}

/// Per-input synthesized loss of MGA against GA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub measure: String,
    pub k: usize,
    pub mga_loss: f64,
    pub ga_loss: f64,
    pub z: f64,
    pub p_value: f64,
    pub a12: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub k: usize,
    pub first: String,
    pub second: String,
    /// Jaccard index of the selected neurons, per hidden layer.
    pub per_layer: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    pub model: ModelSummary,
    pub localization: SpectrumMeta,
    pub runs: Vec<RunSummary>,
    pub correlations: Vec<Correlation>,
    pub comparisons: Vec<Comparison>,
    pub overlaps: Vec<Overlap>,
}

impl Report {
    pub fn run(&self, measure: Measure, k: usize, method: &str) -> Option<&RunSummary> {
        self.runs
            .iter()
            .find(|r| r.measure == measure.name() && r.k == k && r.method == method)
    }
}

fn targets_from_meta(meta: &SynthMeta, r: &Resolved, widths: &[usize]) -> SuspiciousSet {
    SuspiciousSet {
        mode: r.mode,
        k: meta.k,
        suspects: meta
            .targets
            .iter()
            .map(|&(layer, neuron)| Suspect {
                layer,
                neuron,
                score: 0.0,
            })
            .collect(),
        widths: widths.to_vec(),
    }
}

/// Computes every metric from the artifacts on disk and writes
/// `report.json` and `plots/`.
pub fn evaluate_stage(cfg: &RunConfig, r: &Resolved) -> Result<Report> {
    let net = load_model(&cfg.model_dir())?;
    let test = load_test_set(cfg)?;
    let (spectrum, localization) = read_spectrum(&cfg.out)?;
    let model = ModelSummary {
        architecture: r.architecture.to_string(),
        parameters: net.parameter_count(),
        test_samples: test.len(),
        test_accuracy: 100.0 * accuracy(&net, &test)?,
    };

    let mut runs = Vec::new();
    let mut per_input_loss = Vec::new();
    for &measure in &r.measures {
        for &k in &cfg.k {
            let expected = rank_top_k(&suspiciousness(&spectrum, measure), k, r.mode)?;
            for &method in &r.methods {
                let dir = run_dir(cfg, measure, k, method.name());
                let run = read_synth_run(&dir)?;
                let targets = targets_from_meta(&run.meta, r, &spectrum.widths());
                if targets.per_layer() != expected.per_layer() {
                    return Err(Error::format(
                        dir.join("meta.json"),
                        "targets do not match the current spectrum; rerun synthesize",
                    ));
                }
                if run.inputs.is_empty() {
                    return Err(Error::format(dir, "synthesized set is empty"));
                }
                let labels: Vec<usize> = run.index.iter().map(|e| e.label).collect();
                let originals: Vec<Vec<f64>> = run
                    .index
                    .iter()
                    .map(|e| {
                        (e.original_idx < test.len())
                            .then(|| test.input(e.original_idx).to_vec())
                            .ok_or_else(|| Error::format(dir.join("index.json"), "original_idx outside the test set"))
                    })
                    .collect::<Result<_>>()?;
                let views: Vec<&[f64]> = run.inputs.iter().map(Vec::as_slice).collect();
                let cov =
                    coverage_of_inputs(&net, &views, &labels, &targets, r.analysis.beta, ActivationQuantifier::All)?;
                let m = synthesized_metrics(&net, &originals, &labels, &run.inputs)?;
                let losses: Vec<f64> = run
                    .inputs
                    .iter()
                    .zip(&labels)
                    .map(|(x, &l)| net.forward(x).map(|t| cross_entropy(&t.logits, l)))
                    .collect::<std::result::Result<_, _>>()?;
                per_input_loss.push((measure, k, method.name(), losses));
                runs.push(RunSummary {
                    measure: measure.name().into(),
                    k,
                    method: method.name().into(),
                    n_synth: cov.n_synth,
                    n_failed: cov.n_failed,
                    c: cov.c,
                    f: cov.f,
                    accuracy: m.accuracy,
                    loss: m.loss,
                    mean_l1: m.mean_l1,
                    mean_l2: m.mean_l2,
                    mean_linf: m.mean_linf,
                });
            }
        }
    }

    let correlations = r
        .methods
        .iter()
        .map(|method| {
            let (c, f): (Vec<f64>, Vec<f64>) =
                runs.iter().filter(|s| s.method == method.name()).map(|s| (s.c, s.f)).unzip();
            let (rho, p_value) = match spearman(&c, &f) {
                Ok(s) => (Some(s.statistic), s.p_value),
                Err(_) => (None, None),
            };
            Correlation {
                method: method.name().into(),
                n: c.len(),
                rho,
                p_value,
            }
        })
        .collect();

    let mut comparisons = Vec::new();
    for &measure in &r.measures {
        for &k in &cfg.k {
            let find = |m: &str| {
                per_input_loss
                    .iter()
                    .find(|(a, b, c, _)| *a == measure && *b == k && *c == m)
                    .map(|t| &t.3)
            };
            if let (Some(mga), Some(ga)) = (find("mga"), find("ga")) {
                let w = wilcoxon_rank_sum(mga, ga)?;
                comparisons.push(Comparison {
                    measure: measure.name().into(),
                    k,
                    mga_loss: mga.iter().sum::<f64>() / mga.len() as f64,
                    ga_loss: ga.iter().sum::<f64>() / ga.len() as f64,
                    z: w.statistic,
                    p_value: w.p_value.unwrap_or(1.0),
                    a12: a12(mga, ga)?.statistic,
                });
            }
        }
    }

    let mut overlaps = Vec::new();
    for &k in &cfg.k {
        let sets: Vec<(Measure, SuspiciousSet)> = r
            .measures
            .iter()
            .map(|&m| Ok((m, rank_top_k(&suspiciousness(&spectrum, m), k, r.mode)?)))
            .collect::<Result<_>>()?;
        for (i, (ma, a)) in sets.iter().enumerate() {
            for (mb, b) in &sets[i + 1..] {
                overlaps.push(Overlap {
                    k,
                    first: ma.name().into(),
                    second: mb.name().into(),
                    per_layer: overlap_ratio(a, b)?,
                });
            }
        }
    }

    let report = Report {
        config: cfg.clone(),
        model,
        localization,
        runs,
        correlations,
        comparisons,
        overlaps,
    };
    write_json(&cfg.out.join(REPORT_JSON), &report)?;
    write_plots(cfg, &report)?;
    Ok(report)
}

#[derive(Serialize)]
struct CfPoint<'a> {
    measure: &'a str,
    k: usize,
    x_c: f64,
    y_f: f64,
}

#[derive(Serialize)]
struct AccuracyPoint<'a> {
    measure: &'a str,
    k: usize,
    method: &'a str,
    accuracy: f64,
    loss: f64,
}

#[derive(Serialize)]
struct OverlapPoint {
    k: usize,
    pair: String,
    layer: usize,
    jaccard: f64,
}

fn write_plots(cfg: &RunConfig, report: &Report) -> Result<()> {
    let dir = cfg.out.join(PLOTS_DIR);
    let mut methods: Vec<&str> = report.runs.iter().map(|r| r.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    for method in methods {
        let points: Vec<CfPoint> = report
            .runs
            .iter()
            .filter(|r| r.method == method)
            .map(|r| CfPoint {
                measure: &r.measure,
                k: r.k,
                x_c: r.c,
                y_f: r.f,
            })
            .collect();
        write_csv(&dir.join(format!("cf_{method}.csv")), &points)?;
    }
    let acc: Vec<AccuracyPoint> = report
        .runs
        .iter()
        .map(|r| AccuracyPoint {
            measure: &r.measure,
            k: r.k,
            method: &r.method,
            accuracy: r.accuracy,
            loss: r.loss,
        })
        .collect();
    write_csv(&dir.join("accuracy.csv"), &acc)?;
    let overlap: Vec<OverlapPoint> = report
        .overlaps
        .iter()
        .flat_map(|o| {
            o.per_layer.iter().enumerate().map(move |(layer, &jaccard)| OverlapPoint {
                k: o.k,
                pair: format!("{}-{}", o.first, o.second),
                layer,
                jaccard,
            })
        })
        .collect();
    write_csv(&dir.join("overlap.csv"), &overlap)
}

/// Runs all four stages in order.
pub fn run_pipeline(cfg: &RunConfig, jobs: usize) -> Result<Report> {
    let r = cfg.resolve()?;
    train_stage(cfg, &r)?;
    localize_stage(cfg, &r, jobs)?;
    synthesize_stage(cfg, &r, jobs)?;
    evaluate_stage(cfg, &r)
}
