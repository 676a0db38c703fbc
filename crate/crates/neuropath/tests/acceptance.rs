//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! The end-to-end criteria need the MNIST IDX files, looked up in
//! `NEUROPATH_MNIST_DIR` and then `<workspace>/data/mnist`
//! (`scripts/fetch-mnist.sh` downloads them).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use neuropath::config::RunConfig;
use neuropath::core::data::Dataset;
use neuropath::core::localization::{accumulate_into, HitCounts, HitSpectrum, Measure};
use neuropath::core::network::{Activation, Dense, Layer, Network, Objective, Unit};
use neuropath::core::pathways::AnalysisConfig;
use neuropath::core::relevance::{propagate_relevance, LrpRule};
use neuropath::core::stats::{a12, mann_whitney_u, spearman, wilcoxon_rank_sum};
use neuropath::pipeline::{run_pipeline, Report};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn report(id: &str, title: &str, outcome: &Outcome, elapsed: Duration) -> bool {
    println!(
        "criterion {id}: {} {title} ({:.2}s) {}",
        if outcome.pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        outcome.detail
    );
    outcome.pass
}

// ---------------------------------------------------------------- helpers

fn random_net(rng: &mut ChaCha8Rng, widths: &[usize], with_bias: bool) -> Network {
    let mut layers = Vec::new();
    for (i, pair) in widths.windows(2).enumerate() {
        let (inp, out) = (pair[0], pair[1]);
        let w = (0..inp * out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = (0..out)
            .map(|_| if with_bias { rng.random_range(-0.5..0.5) } else { 0.0 })
            .collect();
        let act = if i + 2 == widths.len() {
            Activation::Identity
        } else {
            Activation::Relu
        };
        layers.push(Layer::Dense(Dense::new(inp, out, w, b, act).unwrap()));
    }
    Network::new(vec![widths[0]], layers).unwrap()
}

/// Widths of a net with `layers` dense layers, each at most 16 wide.
fn random_widths(rng: &mut ChaCha8Rng, layers: usize) -> Vec<usize> {
    let mut w = vec![rng.random_range(2..=16)];
    for _ in 1..layers {
        w.push(rng.random_range(2..=16));
    }
    w.push(rng.random_range(2..=10));
    w
}

fn unit_input(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

fn dense(net: &Network, l: usize) -> &Dense {
    match &net.layers()[l] {
        Layer::Dense(d) => d,
        other => panic!("layer {l} is {}", other.kind()),
    }
}

// ------------------------------------------------------------ criterion 1

/// The three measure formulas evaluated directly, with the zero-denominator conventions: no
/// failing coverage scores 0 and an empty passing denominator counts as 0.
fn oracle_measure(m: Measure, c: &HitCounts) -> f64 {
    let (cp, np, cf, nf) = (
        c.active_passed as f64,
        c.inactive_passed as f64,
        c.active_failed as f64,
        c.inactive_failed as f64,
    );
    if cf == 0.0 {
        return 0.0;
    }
    match m {
        Measure::Tarantula => {
            let fail_ratio = cf / (cf + nf);
            let pass_ratio = if cp + np == 0.0 { 0.0 } else { cp / (cp + np) };
            fail_ratio / (fail_ratio + pass_ratio)
        }
        Measure::Ochiai => cf / ((cf + nf) * (cf + cp)).sqrt(),
        Measure::Barinel => 1.0 - cp / (cf + cp),
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draw = |rng: &mut ChaCha8Rng| -> u64 {
        match rng.random_range(0..4) {
            0 => 0,
            1 => rng.random_range(1..4),
            2 => rng.random_range(0..1000),
            _ => rng.random_range(0..10_000_000),
        }
    };
    let start = Instant::now();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let c = HitCounts::new(draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
        for m in Measure::ALL {
            if m.score(&c).to_bits() != oracle_measure(m, &c).to_bits() {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        mismatches == 0 && elapsed < Duration::from_secs(1),
        format!("{mismatches} bitwise mismatches over 3000 scores in {:.1} ms", elapsed.as_secs_f64() * 1e3),
    )
}

// ------------------------------------------------------------ criterion 2

/// Largest `|sum R^l - f(x)| / |f(x)|` over the layers, or `None` when some
/// unit carrying relevance has a bias-free denominator at or below 1e-9.
fn conservation_error(net: &Network, x: &[f64]) -> Option<f64> {
    let trace = net.forward(x).unwrap();
    let r = propagate_relevance(net, &trace, trace.predicted_class).unwrap();
    for l in 0..net.num_layers() {
        let d = dense(net, l);
        let input = trace.layer_input(l);
        for (k, &rk) in r.layer(l).iter().enumerate() {
            let z: f64 = (0..d.inputs).map(|i| input[i] * d.weight(k, i)).sum();
            if rk != 0.0 && z.abs() <= 1e-9 {
                return None;
            }
        }
    }
    let f = r.output;
    let worst = r
        .per_layer
        .iter()
        .map(|layer| (layer.iter().sum::<f64>() - f).abs())
        .fold(0.0, f64::max);
    Some(if f == 0.0 { worst } else { worst / f.abs() })
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_plain, mut worst_bias, mut skipped) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..100 {
        let layers = rng.random_range(2..=4);
        let widths = random_widths(&mut rng, layers);
        let plain = random_net(&mut rng, &widths, false);
        let biased = random_net(&mut rng, &widths, true);
        for _ in 0..10 {
            let x = unit_input(&mut rng, widths[0]);
            match conservation_error(&plain, &x) {
                Some(e) => worst_plain = worst_plain.max(e),
                None => skipped += 1,
            }
            match conservation_error(&biased, &x) {
                Some(e) => worst_bias = worst_bias.max(e),
                None => skipped += 1,
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst_plain <= 1e-9 && worst_bias <= 1e-4 && elapsed < Duration::from_secs(10),
        format!(
            "max relative error zero-bias {worst_plain:.3e}, with bias {worst_bias:.3e}; \
             {skipped} of 2000 cases had a vanishing denominator"
        ),
    )
}

// ------------------------------------------------------------ criterion 3

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut nets = 0;
    while nets < 100 {
        let layers = rng.random_range(2..=4);
        let widths = random_widths(&mut rng, layers);
        let net = random_net(&mut rng, &widths, true);
        let x = unit_input(&mut rng, widths[0]);
        let trace = net.forward(&x).unwrap();
        if trace.pre_activations.iter().flatten().any(|v| v.abs() < 1e-4) {
            continue;
        }
        nets += 1;
        let mut objectives = vec![Objective::single(Unit::Logit(trace.predicted_class))];
        let hidden = rng.random_range(0..widths[1]);
        objectives.push(Objective::single(Unit::Pre { layer: 0, index: hidden }));
        for obj in &objectives {
            let g = net.input_gradient(&x, obj).unwrap();
            for i in 0..x.len() {
                let (mut up, mut down) = (x.clone(), x.clone());
                up[i] += h;
                down[i] -= h;
                let fd = (obj.evaluate(&net.forward(&up).unwrap()) - obj.evaluate(&net.forward(&down).unwrap()))
                    / (2.0 * h);
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst < 1e-3 && elapsed < Duration::from_secs(30),
        format!("max relative error {worst:.3e} over 100 nets"),
    )
}

// ------------------------------------------------------------ criterion 4

/// The spectrum accumulation simulated directly for a net `input -> relu hidden -> logits`.
fn brute_force_spectrum(
    net: &Network,
    samples: &[Vec<f64>],
    labels: &[usize],
    alpha: f64,
    beta: f64,
) -> (Vec<HitCounts>, u64) {
    let eps = LrpRule::default().epsilon;
    let stab = |d: f64| d + if d >= 0.0 { eps } else { -eps };
    let (h, o) = (dense(net, 0), dense(net, 1));
    let mut counts = vec![HitCounts::default(); h.outputs];
    let mut degenerate = 0;
    for (x, &label) in samples.iter().zip(labels) {
        let z_h: Vec<f64> = (0..h.outputs)
            .map(|j| (0..h.inputs).map(|i| x[i] * h.weight(j, i)).sum())
            .collect();
        let a: Vec<f64> = (0..h.outputs).map(|j| (z_h[j] + h.bias[j]).max(0.0)).collect();
        let logits: Vec<f64> = (0..o.outputs)
            .map(|c| (0..o.inputs).map(|j| a[j] * o.weight(c, j)).sum::<f64>() + o.bias[c])
            .collect();
        let mut pred = 0;
        for c in 1..logits.len() {
            if logits[c] > logits[pred] {
                pred = c;
            }
        }
        let z_out: f64 = (0..o.inputs).map(|j| a[j] * o.weight(pred, j)).sum();
        let r_hidden: Vec<f64> = (0..h.outputs)
            .map(|j| a[j] * o.weight(pred, j) / stab(z_out) * logits[pred])
            .collect();
        let g: f64 = (0..h.inputs)
            .map(|i| {
                (0..h.outputs)
                    .map(|j| x[i] * h.weight(j, i) / stab(z_h[j]) * r_hidden[j])
                    .sum::<f64>()
            })
            .sum();
        if g <= 0.0 {
            degenerate += 1;
            continue;
        }
        let mut order: Vec<usize> = (0..h.outputs).filter(|&j| r_hidden[j] > 0.0).collect();
        order.sort_by(|&p, &q| r_hidden[q].partial_cmp(&r_hidden[p]).unwrap().then(p.cmp(&q)));
        let mut critical = Vec::new();
        let mut sum = 0.0;
        for j in order {
            critical.push(j);
            sum += r_hidden[j];
            if sum > alpha * g {
                break;
            }
        }
        let passed = pred == label;
        for j in critical {
            let c = &mut counts[j];
            match (a[j] > beta, passed) {
                (true, true) => c.active_passed += 1,
                (false, true) => c.inactive_passed += 1,
                (true, false) => c.active_failed += 1,
                (false, false) => c.inactive_failed += 1,
            }
        }
    }
    (counts, degenerate)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatched_sets = 0;
    let mut recorded = 0u64;
    let sets = 40;
    for s in 0..sets {
        let inputs = rng.random_range(2..8);
        let hidden = rng.random_range(2..10);
        let classes = rng.random_range(2..4);
        let net = random_net(&mut rng, &[inputs, hidden, classes], true);
        let n = rng.random_range(1..=50);
        let samples: Vec<Vec<f64>> = (0..n).map(|_| unit_input(&mut rng, inputs)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let alpha = [0.3, 0.5, 0.7, 0.9][s % 4];
        let beta = if s % 5 == 0 { 0.2 } else { 0.0 };
        let cfg = AnalysisConfig { alpha, beta };
        let data = Dataset::from_samples("replay", &samples, labels.clone(), classes).unwrap();
        let mut spectrum = HitSpectrum::for_network(&net);
        accumulate_into(&mut spectrum, &net, &data, 0..n, &cfg).unwrap();
        let (expected, degenerate) = brute_force_spectrum(&net, &samples, &labels, alpha, beta);
        recorded += spectrum.analyzed;
        if spectrum.layers[0] != expected || spectrum.degenerate != degenerate {
            mismatched_sets += 1;
        }
    }
    Outcome::new(
        mismatched_sets == 0,
        format!("{mismatched_sets} of {sets} replayed sets differ ({recorded} inputs recorded)"),
    )
}

// ---------------------------------------------------------- criteria 5-7

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("NEUROPATH_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data/mnist"))
}

fn full_run(out: &Path) -> Result<Report, String> {
    let dir = mnist_dir();
    if !dir.join("t10k-images-idx3-ubyte").exists() {
        return Err(format!("MNIST not found in {} (run scripts/fetch-mnist.sh)", dir.display()));
    }
    let cfg = RunConfig {
        data_dir: dir,
        out: out.to_path_buf(),
        ..RunConfig::default()
    };
    run_pipeline(&cfg, 1).map_err(|e| e.to_string())
}

fn criterion_5(report: &Report) -> Outcome {
    let acc = report.model.test_accuracy;
    let Some(run) = report.run(Measure::Tarantula, 5, "mga") else {
        return Outcome::new(false, "no tarantula k=5 mga run in the report");
    };
    Outcome::new(
        acc >= 93.0 && run.accuracy <= 50.0 && run.f >= 80.0,
        format!(
            "test accuracy {acc:.2}% (>= 93), synthesized accuracy {:.2}% (<= 50), F {:.2}% (>= 80), C {:.2}%, \
             {} of {} synthesized inputs misclassified",
            run.accuracy, run.f, run.c, run.n_failed, run.n_synth
        ),
    )
}

fn criterion_6(report: &Report) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for m in Measure::ALL {
        let (Some(mga), Some(ga)) = (report.run(m, 5, "mga"), report.run(m, 5, "ga")) else {
            return Outcome::new(false, format!("missing k=5 runs for {m}"));
        };
        wins += (mga.accuracy < ga.accuracy) as usize;
        parts.push(format!("{m} mga {:.2}% vs ga {:.2}%", mga.accuracy, ga.accuracy));
    }
    Outcome::new(wins >= 2, format!("{wins}/3 measures: {}", parts.join(", ")))
}

fn criterion_7(report: &Report) -> Outcome {
    let mga: Vec<_> = report.runs.iter().filter(|r| r.method == "mga").collect();
    let c: Vec<f64> = mga.iter().map(|r| r.c).collect();
    let f: Vec<f64> = mga.iter().map(|r| r.f).collect();
    let pairs = format!("C {c:?}, F {f:?}");
    if mga.len() != 9 {
        return Outcome::new(false, format!("expected 9 mga instances, found {}", mga.len()));
    }
    match spearman(&c, &f) {
        Ok(r) => {
            let p = r.p_value.unwrap_or(f64::NAN);
            Outcome::new(
                r.statistic >= 0.8 && p < 0.05,
                format!("rho {:.4}, p {p:.4e} over 9 instances; {pairs}", r.statistic),
            )
        }
        Err(e) => Outcome::new(false, format!("{e}; {pairs}")),
    }
}

// ------------------------------------------------------------ criterion 8

fn criterion_8() -> Outcome {
    let rho = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap().statistic;
    let effect = a12(&[1.0, 2.0], &[1.0, 3.0]).unwrap().statistic;
    let a: Vec<f64> = (1..=10).map(f64::from).collect();
    let b: Vec<f64> = (101..=110).map(f64::from).collect();
    let u = mann_whitney_u(&a, &b);
    let p = wilcoxon_rank_sum(&a, &b).unwrap().p_value.unwrap();
    Outcome::new(
        (rho - 0.8).abs() < 1e-12 && effect == 0.375 && u == 0.0 && p < 0.001,
        format!("rho {rho}, A12 {effect}, U {u}, p {p:.3e}"),
    )
}

// ------------------------------------------------------------ criterion 9

/// Writes a small class-structured dataset in the MNIST IDX layout: class
/// `c` brightens rows `2c+4..2c+7`, plus noise.
fn write_idx_split(dir: &Path, split: &str, n: usize, rng: &mut ChaCha8Rng) {
    let mut images = Vec::with_capacity(16 + n * 784);
    images.extend_from_slice(&0x0803u32.to_be_bytes());
    for d in [n as u32, 28, 28] {
        images.extend_from_slice(&d.to_be_bytes());
    }
    let mut labels = Vec::with_capacity(8 + n);
    labels.extend_from_slice(&0x0801u32.to_be_bytes());
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    for i in 0..n {
        let class = (i % 10) as u8;
        labels.push(class);
        let band = 2 * class as usize + 4;
        for row in 0..28 {
            for _ in 0..28 {
                let base: u8 = if (band..band + 3).contains(&row) { 180 } else { 0 };
                images.push(base.saturating_add(rng.random_range(0..60)));
            }
        }
    }
    fs::write(dir.join(format!("{split}-images-idx3-ubyte")), images).unwrap();
    fs::write(dir.join(format!("{split}-labels-idx1-ubyte")), labels).unwrap();
}

fn run_binary(data: &Path, out: &Path, jobs: usize) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_neuropath"))
        .args(["pipeline", "--arch", "2 * <16>, <10>", "--epochs", "2", "--synth-limit", "12", "--k", "1,3"])
        .args(["--seed", "11", "--jobs", &jobs.to_string()])
        .arg("--data-dir")
        .arg(data)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    fs::read(out.join("report.json")).map_err(|e| e.to_string())
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir_all(&data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    write_idx_split(&data, "train", 400, &mut rng);
    write_idx_split(&data, "t10k", 150, &mut rng);
    let out = tmp.path().join("out");
    let mut reports = Vec::new();
    for jobs in [1, 3, 1, 4] {
        match run_binary(&data, &out, jobs) {
            Ok(bytes) => reports.push((jobs, bytes)),
            Err(e) => return Outcome::new(false, format!("pipeline with --jobs {jobs} failed: {e}")),
        }
    }
    let identical = reports.windows(2).all(|w| w[0].1 == w[1].1);
    Outcome::new(
        identical,
        format!(
            "{} runs (--jobs 1, 3, 1, 4), report.json {} bytes, {}",
            reports.len(),
            reports[0].1.len(),
            if identical { "byte-identical" } else { "reports differ" }
        ),
    )
}

// -------------------------------------------------------------------- main

fn main() {
    let suite = Instant::now();
    let mut all = true;

    type Check = fn() -> Outcome;
    let early: [(&str, &str, Check); 4] = [
        ("1", "suspiciousness measures match a brute-force oracle", criterion_1),
        ("2", "relevance conservation", criterion_2),
        ("3", "input gradient matches finite differences", criterion_3),
        ("4", "spectrum replay against a brute-force simulation", criterion_4),
    ];
    for (id, title, check) in early {
        let t = Instant::now();
        let o = check();
        all &= report(id, title, &o, t.elapsed());
    }

    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let full = full_run(tmp.path());
    let run_time = t.elapsed();
    type ReportCheck = fn(&Report) -> Outcome;
    let end_to_end: [(&str, &str, ReportCheck); 3] = [
        ("5", "MNIST end to end", criterion_5),
        ("6", "MGA lowers accuracy more than GA", criterion_6),
        ("7", "Spearman correlation of C and F", criterion_7),
    ];
    for (id, title, check) in end_to_end {
        let t = Instant::now();
        let o = match &full {
            Ok(r) => check(r),
            Err(e) => Outcome::new(false, e.clone()),
        };
        let elapsed = if id == "5" { run_time } else { t.elapsed() };
        all &= report(id, title, &o, elapsed);
    }

    let late: [(&str, &str, Check); 2] = [
        ("8", "statistics on hand-enumerable cases", criterion_8),
        ("9", "byte-identical reports across runs and --jobs", criterion_9),
    ];
    for (id, title, check) in late {
        let t = Instant::now();
        let o = check();
        all &= report(id, title, &o, t.elapsed());
    }

    let total = suite.elapsed();
    let within = total < Duration::from_secs(30 * 60);
    println!(
        "runtime: {} total {:.1}s (limit 30 min)",
        if within { "PASS" } else { "FAIL" },
        total.as_secs_f64()
    );
    all &= within;
    println!("acceptance: {}", if all { "all criteria passed" } else { "some criteria FAILED" });
    if !all {
        std::process::exit(1);
    }
}
