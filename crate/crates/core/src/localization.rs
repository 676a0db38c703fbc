//! Hit spectra over critical neurons, suspiciousness scores, and top-k
//! selection of suspicious neurons.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{ActivationTrace, Network};
use crate::pathways::{extract_cdp, AnalysisConfig, CriticalPath};
use crate::relevance::propagate_relevance;

/// Coverage counters of one neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HitCounts {
    /// Critical and active on a correctly classified input (`A_p^c`).
    pub active_passed: u64,
    /// Critical and inactive on a correctly classified input (`A_p^n`).
    pub inactive_passed: u64,
    /// Critical and active on a misclassified input (`A_f^c`).
    pub active_failed: u64,
    /// Critical and inactive on a misclassified input (`A_f^n`).
    pub inactive_failed: u64,
}

impl HitCounts {
    pub const fn new(
        active_passed: u64,
        inactive_passed: u64,
        active_failed: u64,
        inactive_failed: u64,
    ) -> Self {
        HitCounts {
            active_passed,
            inactive_passed,
            active_failed,
            inactive_failed,
        }
    }

    pub fn total(&self) -> u64 {
        self.active_passed + self.inactive_passed + self.active_failed + self.inactive_failed
    }

    fn add(&mut self, other: &HitCounts) {
        self.active_passed += other.active_passed;
        self.inactive_passed += other.inactive_passed;
        self.active_failed += other.active_failed;
        self.inactive_failed += other.inactive_failed;
    }
}

/// Per-neuron counters for every hidden layer, plus input tallies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HitSpectrum {
    pub layers: Vec<Vec<HitCounts>>,
    /// Inputs whose critical path was recorded.
    pub analyzed: u64,
    /// Inputs skipped because `g_f(x) <= 0`.
    pub degenerate: u64,
}

impl HitSpectrum {
    pub fn new(widths: &[usize]) -> Self {
        HitSpectrum {
            layers: widths.iter().map(|&w| vec![HitCounts::default(); w]).collect(),
            analyzed: 0,
            degenerate: 0,
        }
    }

    /// Empty spectrum shaped like the hidden layers of `net`.
    pub fn for_network(net: &Network) -> Self {
        let widths: Vec<usize> = net
            .hidden_layers()
            .iter()
            .map(|&l| net.layers()[l].output_len())
            .collect();
        Self::new(&widths)
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn get(&self, layer: usize, neuron: usize) -> HitCounts {
        self.layers[layer][neuron]
    }

    /// Counts one analyzed input: every critical neuron gets exactly one
    /// counter incremented, chosen by (post-activation > beta, passed).
    pub fn record(
        &mut self,
        trace: &ActivationTrace,
        hidden_layers: &[usize],
        path: &CriticalPath,
        passed: bool,
        beta: f64,
    ) {
        for ((counts, &layer), critical) in self.layers.iter_mut().zip(hidden_layers).zip(&path.per_layer) {
            let post = &trace.post_activations[layer];
            for &n in critical {
                let c = &mut counts[n];
                match (post[n] > beta, passed) {
                    (true, true) => c.active_passed += 1,
                    (false, true) => c.inactive_passed += 1,
                    (true, false) => c.active_failed += 1,
                    (false, false) => c.inactive_failed += 1,
                }
            }
        }
        self.analyzed += 1;
    }

    /// Adds another partial spectrum counter by counter.
    pub fn merge(&mut self, other: &HitSpectrum) -> Result<()> {
        if self.widths() != other.widths() {
            return Err(Error::Usage("cannot merge spectra of different shapes".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.iter_mut().zip(b) {
                x.add(y);
            }
        }
        self.analyzed += other.analyzed;
        self.degenerate += other.degenerate;
        Ok(())
    }
}

/// Outcome of analyzing a single input.
#[derive(Debug, Clone, PartialEq)]
pub enum InputAnalysis {
    Critical {
        trace: ActivationTrace,
        path: CriticalPath,
        passed: bool,
    },
    Degenerate,
}

/// Predict, propagate relevance from the predicted logit and extract the
/// critical path of one input.
pub fn analyze_input(
    net: &Network,
    input: &[f64],
    label: usize,
    cfg: &AnalysisConfig,
) -> Result<InputAnalysis> {
    let trace = net.forward(input)?;
    let rmap = propagate_relevance(net, &trace, trace.predicted_class)?;
    match extract_cdp(&rmap, cfg.alpha) {
        Ok(path) => Ok(InputAnalysis::Critical {
            passed: trace.predicted_class == label,
            trace,
            path,
        }),
        Err(Error::Degenerate(_)) => Ok(InputAnalysis::Degenerate),
        Err(e) => Err(e),
    }
}

/// Adds the inputs at `indices` to `spectrum`.
pub fn accumulate_into(
    spectrum: &mut HitSpectrum,
    net: &Network,
    data: &Dataset,
    indices: impl IntoIterator<Item = usize>,
    cfg: &AnalysisConfig,
) -> Result<()> {
    let hidden = net.hidden_layers();
    for i in indices {
        match analyze_input(net, data.input(i), data.label(i), cfg)? {
            InputAnalysis::Critical {
                trace,
                path,
                passed,
            } => spectrum.record(&trace, &hidden, &path, passed, cfg.beta),
            InputAnalysis::Degenerate => spectrum.degenerate += 1,
        }
    }
    Ok(())
}

/// Indices of the samples analyzed for an optional true-class filter.
pub fn analysis_indices(data: &Dataset, class_filter: Option<usize>) -> Vec<usize> {
    (0..data.len())
        .filter(|&i| class_filter.is_none_or(|c| data.label(i) == c))
        .collect()
}

/// Single-pass hit spectrum over `data`, optionally restricted to inputs of
/// one true class.
pub fn accumulate_spectrum(
    net: &Network,
    data: &Dataset,
    cfg: &AnalysisConfig,
    class_filter: Option<usize>,
) -> Result<HitSpectrum> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Usage("analysis set is empty".into()));
    }
    let mut spectrum = HitSpectrum::for_network(net);
    accumulate_into(
        &mut spectrum,
        net,
        data,
        analysis_indices(data, class_filter),
        cfg,
    )?;
    Ok(spectrum)
}

/// Spectrum-based suspiciousness measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    Tarantula,
    Ochiai,
    Barinel,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Tarantula, Measure::Ochiai, Measure::Barinel];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Tarantula => "tarantula",
            Measure::Ochiai => "ochiai",
            Measure::Barinel => "barinel",
        }
    }

    /// Score in `[0, 1]`. A neuron never critical on a failing input scores
    /// 0; an empty passing denominator counts as a passing ratio of 0.
    pub fn score(self, c: &HitCounts) -> f64 {
        let cp = c.active_passed as f64;
        let np = c.inactive_passed as f64;
        let cf = c.active_failed as f64;
        let nf = c.inactive_failed as f64;
        if c.active_failed == 0 {
            return 0.0;
        }
        match self {
            Measure::Tarantula => {
                let failed = cf / (cf + nf);
                let passed = if c.active_passed + c.inactive_passed == 0 {
                    0.0
                } else {
                    cp / (cp + np)
                };
                failed / (failed + passed)
            }
            Measure::Ochiai => cf / libm::sqrt((cf + nf) * (cf + cp)),
            Measure::Barinel => 1.0 - cp / (cf + cp),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tarantula" => Ok(Measure::Tarantula),
            "ochiai" => Ok(Measure::Ochiai),
            "barinel" => Ok(Measure::Barinel),
            _ => Err(Error::Usage(format!(
                "unknown measure `{s}` (expected tarantula, ochiai or barinel)"
            ))),
        }
    }
}

/// Suspiciousness score of every hidden neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub measure: Measure,
    pub layers: Vec<Vec<f64>>,
}

pub fn suspiciousness(spectrum: &HitSpectrum, measure: Measure) -> ScoreTable {
    ScoreTable {
        measure,
        layers: spectrum
            .layers
            .iter()
            .map(|l| l.iter().map(|c| measure.score(c)).collect())
            .collect(),
    }
}

/// How suspicious neurons are selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionMode {
    /// Top `k` in every hidden layer.
    Pathway,
    /// Top `k` across the whole network.
    Neuron,
}

impl SelectionMode {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMode::Pathway => "pathway",
            SelectionMode::Neuron => "neuron",
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pathway" => Ok(SelectionMode::Pathway),
            "neuron" => Ok(SelectionMode::Neuron),
            _ => Err(Error::Usage(format!(
                "unknown mode `{s}` (expected pathway or neuron)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Suspect {
    /// Position among the hidden layers.
    pub layer: usize,
    pub neuron: usize,
    pub score: f64,
}

/// Selected suspicious neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct SuspiciousSet {
    pub mode: SelectionMode,
    pub k: usize,
    /// Pathway mode: grouped by layer, each group by descending score.
    /// Neuron mode: one global list by descending score.
    pub suspects: Vec<Suspect>,
    pub widths: Vec<usize>,
}

impl SuspiciousSet {
    pub fn num_layers(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.suspects.is_empty()
    }

    pub fn len(&self) -> usize {
        self.suspects.len()
    }

    /// Selected neuron indices of one hidden layer, ascending.
    pub fn layer(&self, layer: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .suspects
            .iter()
            .filter(|s| s.layer == layer)
            .map(|s| s.neuron)
            .collect();
        v.sort_unstable();
        v
    }

    /// Selected neuron indices for every hidden layer.
    pub fn per_layer(&self) -> Vec<Vec<usize>> {
        (0..self.num_layers()).map(|l| self.layer(l)).collect()
    }
}

fn by_score_then_position(a: &Suspect, b: &Suspect) -> core::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.layer.cmp(&b.layer))
        .then(a.neuron.cmp(&b.neuron))
}

/// Ranks neurons by descending score and keeps the top `k` per layer
/// (pathway mode) or overall (neuron mode). Ties go to the lower layer,
/// then the lower index. A `k` larger than the available neurons is
/// truncated with a warning.
pub fn rank_top_k(scores: &ScoreTable, k: usize, mode: SelectionMode) -> Result<SuspiciousSet> {
    if k == 0 {
        return Err(Error::Usage("k must be at least 1".into()));
    }
    let widths: Vec<usize> = scores.layers.iter().map(Vec::len).collect();
    let all = |layer: usize| {
        scores.layers[layer]
            .iter()
            .enumerate()
            .map(move |(neuron, &score)| Suspect {
                layer,
                neuron,
                score,
            })
    };
    let suspects = match mode {
        SelectionMode::Pathway => {
            let mut out = Vec::new();
            for (layer, &w) in widths.iter().enumerate() {
                if k > w {
                    log::warn!("k = {k} exceeds width {w} of hidden layer {layer}; truncating");
                }
                let mut ranked: Vec<Suspect> = all(layer).collect();
                ranked.sort_by(by_score_then_position);
                ranked.truncate(k);
                out.extend(ranked);
            }
            out
        }
        SelectionMode::Neuron => {
            let total: usize = widths.iter().sum();
            if k > total {
                log::warn!("k = {k} exceeds the {total} hidden neurons; truncating");
            }
            let mut ranked: Vec<Suspect> = (0..widths.len()).flat_map(all).collect();
            ranked.sort_by(by_score_then_position);
            ranked.truncate(k);
            ranked
        }
    };
    Ok(SuspiciousSet {
        mode,
        k,
        suspects,
        widths,
    })
}

/// 1-based position of every neuron in the network-wide ranking.
pub fn global_ranks(scores: &ScoreTable) -> Vec<Vec<usize>> {
    let mut all: Vec<Suspect> = scores
        .layers
        .iter()
        .enumerate()
        .flat_map(|(layer, l)| {
            l.iter().enumerate().map(move |(neuron, &score)| Suspect {
                layer,
                neuron,
                score,
            })
        })
        .collect();
    all.sort_by(by_score_then_position);
    let mut ranks: Vec<Vec<usize>> = scores.layers.iter().map(|l| vec![0; l.len()]).collect();
    for (r, s) in all.iter().enumerate() {
        ranks[s.layer][s.neuron] = r + 1;
    }
    ranks
}

/// Per-layer Jaccard index of two selections (1 when both are empty).
pub fn overlap_ratio(a: &SuspiciousSet, b: &SuspiciousSet) -> Result<Vec<f64>> {
    if a.widths != b.widths {
        return Err(Error::Usage(format!(
            "selections come from different architectures ({:?} vs {:?})",
            a.widths, b.widths
        )));
    }
    Ok((0..a.num_layers())
        .map(|l| {
            let (x, y) = (a.layer(l), b.layer(l));
            let common = x.iter().filter(|n| y.binary_search(n).is_ok()).count();
            let union = x.len() + y.len() - common;
            if union == 0 {
                1.0
            } else {
                common as f64 / union as f64
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(layers: Vec<Vec<f64>>) -> ScoreTable {
        ScoreTable {
            measure: Measure::Ochiai,
            layers,
        }
    }

    #[test]
    fn hand_evaluated_measures() {
        let c = HitCounts::new(2, 4, 3, 1);
        let t = Measure::Tarantula.score(&c);
        assert!((t - 0.75 / (0.75 + 1.0 / 3.0)).abs() < 1e-12);
        assert!((t - 0.6923).abs() < 1e-4);
        let o = Measure::Ochiai.score(&c);
        assert!((o - 3.0 / 20f64.sqrt()).abs() < 1e-12);
        assert!((o - 0.6708).abs() < 1e-4);
        assert!((Measure::Barinel.score(&c) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn never_failing_scores_zero() {
        let c = HitCounts::new(7, 3, 0, 4);
        for m in Measure::ALL {
            assert_eq!(m.score(&c), 0.0);
        }
        for m in Measure::ALL {
            assert_eq!(m.score(&HitCounts::default()), 0.0);
        }
    }

    #[test]
    fn perfect_failure_association() {
        let c = HitCounts::new(0, 5, 5, 0);
        for m in Measure::ALL {
            assert_eq!(m.score(&c), 1.0);
        }
        // No passing coverage at all: passed ratio counts as 0.
        assert_eq!(Measure::Tarantula.score(&HitCounts::new(0, 0, 2, 1)), 1.0);
    }

    #[test]
    fn parse_measure_and_mode() {
        assert_eq!("Ochiai".parse::<Measure>().unwrap(), Measure::Ochiai);
        assert!("dstar".parse::<Measure>().is_err());
        assert_eq!("neuron".parse::<SelectionMode>().unwrap(), SelectionMode::Neuron);
        assert!("path".parse::<SelectionMode>().is_err());
    }

    #[test]
    fn equal_scores_take_first_indices() {
        let s = rank_top_k(&table(vec![vec![0.5; 4], vec![0.5; 3]]), 2, SelectionMode::Pathway)
            .unwrap();
        assert_eq!(s.per_layer(), vec![vec![0, 1], vec![0, 1]]);
        let s = rank_top_k(&table(vec![vec![0.5; 4], vec![0.5; 3]]), 2, SelectionMode::Neuron)
            .unwrap();
        assert_eq!(s.per_layer(), vec![vec![0, 1], vec![]]);
    }

    #[test]
    fn pathway_and_neuron_modes() {
        let t = table(vec![vec![0.1, 0.9, 0.3], vec![0.8, 0.2, 0.95]]);
        let p = rank_top_k(&t, 1, SelectionMode::Pathway).unwrap();
        assert_eq!(p.per_layer(), vec![vec![1], vec![2]]);
        let n = rank_top_k(&t, 3, SelectionMode::Neuron).unwrap();
        let order: Vec<(usize, usize)> = n.suspects.iter().map(|s| (s.layer, s.neuron)).collect();
        assert_eq!(order, vec![(1, 2), (0, 1), (1, 0)]);
        assert_eq!(global_ranks(&t), vec![vec![6, 2, 4], vec![3, 5, 1]]);
    }

    #[test]
    fn oversized_k_truncates() {
        let t = table(vec![vec![0.1, 0.2], vec![0.3]]);
        let p = rank_top_k(&t, 5, SelectionMode::Pathway).unwrap();
        assert_eq!(p.len(), 3);
        assert!(rank_top_k(&t, 0, SelectionMode::Pathway).is_err());
    }

    #[test]
    fn jaccard_overlap() {
        let t1 = table(vec![vec![0.0, 0.9, 0.9, 0.9, 0.0]]);
        let t2 = table(vec![vec![0.0, 0.0, 0.9, 0.9, 0.9]]);
        let a = rank_top_k(&t1, 3, SelectionMode::Pathway).unwrap();
        let b = rank_top_k(&t2, 3, SelectionMode::Pathway).unwrap();
        assert_eq!(overlap_ratio(&a, &b).unwrap(), vec![0.5]);
        assert_eq!(overlap_ratio(&a, &a).unwrap(), vec![1.0]);
        let t3 = table(vec![vec![0.9, 0.0, 0.0, 0.0, 0.9]]);
        let c = rank_top_k(&t3, 1, SelectionMode::Pathway).unwrap();
        let d = rank_top_k(&table(vec![vec![0.0, 0.9, 0.0, 0.0, 0.0]]), 1, SelectionMode::Pathway)
            .unwrap();
        assert_eq!(overlap_ratio(&c, &d).unwrap(), vec![0.0]);
        let other = rank_top_k(&table(vec![vec![0.1; 4]]), 1, SelectionMode::Pathway).unwrap();
        assert!(overlap_ratio(&a, &other).is_err());
    }

    #[test]
    fn merge_requires_same_shape() {
        let mut a = HitSpectrum::new(&[2, 3]);
        let b = HitSpectrum::new(&[2]);
        assert!(a.merge(&b).is_err());
    }
}
