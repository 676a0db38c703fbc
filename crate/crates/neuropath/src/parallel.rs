//! Per-input stages spread over a rayon pool. Results never depend on the
//! number of workers: spectra merge by integer addition and synthesized
//! inputs come back in input order.

use neuropath_core::localization::{accumulate_into, HitSpectrum, SuspiciousSet};
use neuropath_core::pathways::AnalysisConfig;
use neuropath_core::synthesis::{synthesize, SynthesisParams, SynthesisResult};
use neuropath_core::{Dataset, Network};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Inputs per spectrum chunk.
const CHUNK: usize = 256;

/// Runs `f` inside a pool of `jobs` threads (0 means one per CPU).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Usage(format!("--jobs {jobs}: {e}")))?;
    Ok(pool.install(f))
}

/// Hit spectrum over `indices`, accumulated in chunks and merged.
pub fn accumulate_parallel(
    net: &Network,
    data: &Dataset,
    indices: &[usize],
    cfg: &AnalysisConfig,
) -> Result<HitSpectrum> {
    let parts: Vec<HitSpectrum> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s = HitSpectrum::for_network(net);
            accumulate_into(&mut s, net, data, chunk.iter().copied(), cfg).map(|()| s)
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut total = HitSpectrum::for_network(net);
    for p in &parts {
        total.merge(p)?;
    }
    Ok(total)
}

/// Synthesizes from every input in `indices`, preserving order.
pub fn synthesize_parallel(
    net: &Network,
    data: &Dataset,
    indices: &[usize],
    targets: &SuspiciousSet,
    params: &SynthesisParams,
) -> Result<Vec<Option<SynthesisResult>>> {
    Ok(indices
        .par_iter()
        .map(|&i| synthesize(net, data.input(i), data.label(i), targets, params))
        .collect::<std::result::Result<_, _>>()?)
}
