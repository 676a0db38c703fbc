//! On-disk artifacts written by one stage and read by the next:
//! `spectrum.csv` (+ `spectrum.json`), `synth/<run>/` and `report.json`.

use std::fs;
use std::path::{Path, PathBuf};

use neuropath_core::localization::{global_ranks, suspiciousness, HitCounts, HitSpectrum, Measure};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPECTRUM_CSV: &str = "spectrum.csv";
pub const SPECTRUM_META: &str = "spectrum.json";
pub const SYNTH_DIR: &str = "synth";
pub const REPORT_JSON: &str = "report.json";
pub const PLOTS_DIR: &str = "plots";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, format!("CSV: {e}"))
}

/// Serializes `rows` as a CSV file with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// One hidden neuron of `spectrum.csv`. `layer` counts hidden layers from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub layer: usize,
    pub neuron: usize,
    pub a_cp: u64,
    pub a_np: u64,
    pub a_cf: u64,
    pub a_nf: u64,
    pub tarantula: f64,
    pub ochiai: f64,
    pub barinel: f64,
    pub tarantula_rank: usize,
    pub ochiai_rank: usize,
    pub barinel_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub dataset: String,
    pub samples: usize,
    pub analyzed: u64,
    pub degenerate: u64,
    pub widths: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
}

pub fn write_spectrum(out: &Path, spectrum: &HitSpectrum, meta: &SpectrumMeta) -> Result<()> {
    let [t, o, b] = Measure::ALL.map(|m| suspiciousness(spectrum, m));
    let ranks = [&t, &o, &b].map(global_ranks);
    let mut rows = Vec::new();
    for (layer, counts) in spectrum.layers.iter().enumerate() {
        for (neuron, c) in counts.iter().enumerate() {
            rows.push(SpectrumRow {
                layer,
                neuron,
                a_cp: c.active_passed,
                a_np: c.inactive_passed,
                a_cf: c.active_failed,
                a_nf: c.inactive_failed,
                tarantula: t.layers[layer][neuron],
                ochiai: o.layers[layer][neuron],
                barinel: b.layers[layer][neuron],
                tarantula_rank: ranks[0][layer][neuron],
                ochiai_rank: ranks[1][layer][neuron],
                barinel_rank: ranks[2][layer][neuron],
            });
        }
    }
    write_csv(&out.join(SPECTRUM_CSV), &rows)?;
    write_json(&out.join(SPECTRUM_META), meta)
}

/// Rebuilds the hit spectrum from the counters in `spectrum.csv`.
pub fn read_spectrum(out: &Path) -> Result<(HitSpectrum, SpectrumMeta)> {
    let meta: SpectrumMeta = read_json(&out.join(SPECTRUM_META))?;
    let path = out.join(SPECTRUM_CSV);
    let rows: Vec<SpectrumRow> = read_csv(&path)?;
    let mut spectrum = HitSpectrum::new(&meta.widths);
    spectrum.analyzed = meta.analyzed;
    spectrum.degenerate = meta.degenerate;
    let expected: usize = meta.widths.iter().sum();
    if rows.len() != expected {
        return Err(Error::format(&path, format!("{} rows, expected {expected}", rows.len())));
    }
    for r in rows {
        let slot = spectrum
            .layers
            .get_mut(r.layer)
            .and_then(|l| l.get_mut(r.neuron))
            .ok_or_else(|| Error::format(&path, format!("neuron ({}, {}) outside the network", r.layer, r.neuron)))?;
        *slot = HitCounts::new(r.a_cp, r.a_np, r.a_cf, r.a_nf);
    }
    Ok((spectrum, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthIndexEntry {
    /// Position of the source input in the test set.
    pub original_idx: usize,
    pub label: usize,
    pub final_class: usize,
    pub misclassified: bool,
    pub iterations_run: usize,
    pub steps: usize,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub measure: String,
    pub k: usize,
    pub mode: String,
    pub method: String,
    pub step: f64,
    pub d_max: f64,
    pub iterations: usize,
    pub distance_mode: String,
    pub mga_anchor: bool,
    pub dim: usize,
    pub count: usize,
    /// `(hidden layer, neuron)` pairs, in selection order.
    pub targets: Vec<(usize, usize)>,
    pub data_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLossRow {
    pub original_idx: usize,
    pub iteration: usize,
    pub stage: usize,
    pub loss: f64,
}

/// A synthesized set as stored under `synth/<name>/`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRun {
    pub meta: SynthMeta,
    pub index: Vec<SynthIndexEntry>,
    pub inputs: Vec<Vec<f64>>,
}

pub fn synth_run_name(measure: Measure, k: usize, method: &str) -> String {
    format!("{}-k{k}-{method}", measure.name())
}

pub const SYNTH_DATA_FILE: &str = "synthesized.f64";

/// Writes one synthesized set. Inputs are stored as raw little-endian
/// `f64`, one after another, so evaluation sees exactly what synthesis
/// produced.
pub fn write_synth_run(dir: &Path, run: &SynthRun, losses: &[StageLossRow]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes: Vec<u8> = run.inputs.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
    let data = dir.join(&run.meta.data_file);
    fs::write(&data, bytes).map_err(|e| Error::io(&data, e))?;
    write_json(&dir.join("index.json"), &run.index)?;
    write_json(&dir.join("meta.json"), &run.meta)?;
    write_csv(&dir.join("losses.csv"), losses)
}

pub fn read_synth_run(dir: &Path) -> Result<SynthRun> {
    let meta: SynthMeta = read_json(&dir.join("meta.json"))?;
    let index: Vec<SynthIndexEntry> = read_json(&dir.join("index.json"))?;
    let data = dir.join(&meta.data_file);
    let bytes = fs::read(&data).map_err(|e| Error::io(&data, e))?;
    if index.len() != meta.count || bytes.len() != 8 * meta.count * meta.dim {
        return Err(Error::format(
            &data,
            format!(
                "{} bytes and {} index entries do not hold {} inputs of length {}",
                bytes.len(),
                index.len(),
                meta.count,
                meta.dim
            ),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let inputs = if meta.dim == 0 {
        Vec::new()
    } else {
        values.chunks_exact(meta.dim).map(<[f64]>::to_vec).collect()
    };
    Ok(SynthRun { meta, index, inputs })
}

/// Synthesized-set directories under `<out>/synth`, sorted by name.
pub fn list_synth_runs(out: &Path) -> Result<Vec<PathBuf>> {
    let root = out.join(SYNTH_DIR);
    let mut dirs = Vec::new();
    for entry in fs::read_dir(&root).map_err(|e| Error::io(&root, e))? {
        let entry = entry.map_err(|e| Error::io(&root, e))?;
        if entry.path().join("meta.json").is_file() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = HitSpectrum::new(&[2, 3]);
        s.layers[0][1] = HitCounts::new(1, 2, 3, 4);
        s.layers[1][2] = HitCounts::new(0, 0, 5, 0);
        s.analyzed = 10;
        let meta = SpectrumMeta {
            dataset: "toy".into(),
            samples: 10,
            analyzed: 10,
            degenerate: 0,
            widths: vec![2, 3],
            alpha: 0.7,
            beta: 0.0,
        };
        write_spectrum(dir.path(), &s, &meta).unwrap();
        let header = fs::read_to_string(dir.path().join(SPECTRUM_CSV)).unwrap();
        assert!(header.starts_with("layer,neuron,a_cp,a_np,a_cf,a_nf,tarantula,ochiai,barinel,"));
        let (back, m) = read_spectrum(dir.path()).unwrap();
        assert_eq!(back, s);
        assert_eq!(m, meta);
    }

    #[test]
    fn synth_run_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let run = SynthRun {
            meta: SynthMeta {
                measure: "tarantula".into(),
                k: 1,
                mode: "pathway".into(),
                method: "mga".into(),
                step: 5.0,
                d_max: 0.006,
                iterations: 10,
                distance_mode: "per-step".into(),
                mga_anchor: false,
                dim: 2,
                count: 2,
                targets: vec![(0, 1)],
                data_file: SYNTH_DATA_FILE.into(),
            },
            index: (0..2)
                .map(|i| SynthIndexEntry {
                    original_idx: i,
                    label: 1,
                    final_class: 0,
                    misclassified: true,
                    iterations_run: 1,
                    steps: 1,
                    l1: 0.1,
                    l2: 0.1,
                    linf: 0.1,
                })
                .collect(),
            inputs: vec![vec![0.1, 0.2], vec![1.0 / 3.0, 0.0]],
        };
        write_synth_run(dir.path(), &run, &[]).unwrap();
        assert_eq!(fs::metadata(dir.path().join(SYNTH_DATA_FILE)).unwrap().len(), 32);
        assert_eq!(read_synth_run(dir.path()).unwrap(), run);
    }
}
