use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{simulate_protocol, AgingParameterSet, CellParameters, SimConfig};
use crate::error::{Error, Result};
use crate::protocol::Protocol;

use super::dataset::{Dataset, Normalization, SegmentRecord};
use super::segment::{segment_trace, SourceId, DEFAULT_DELTA_Q, DEFAULT_STRIDE_Q};

/// Independent RNG stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// One cell to simulate. The base parameters are shared between the many
/// variants of one trajectory.
#[derive(Debug, Clone)]
pub struct ParamSet {
    pub source: SourceId,
    pub base: Arc<CellParameters>,
    pub aging: AgingParameterSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub master_seed: u64,
    /// Initial SOC is drawn uniformly from [0, soc0_max].
    pub soc0_max: f64,
    pub delta_q: f64,
    pub stride_q: f64,
    /// Keep at most this many windows per charge, chosen at random.
    pub max_segments_per_set: Option<usize>,
    pub norm: Normalization,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            soc0_max: 0.3,
            delta_q: DEFAULT_DELTA_Q,
            stride_q: DEFAULT_STRIDE_Q,
            max_segments_per_set: None,
            norm: Normalization::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dataset: Dataset,
    pub simulated: usize,
    pub skipped: usize,
}

fn one_set(set: &ParamSet, index: usize, protocol: &Protocol, sim: SimConfig, config: &CorpusConfig) -> Result<Vec<SegmentRecord>> {
    let mut rng = stream_rng(config.master_seed, index as u64);
    let soc0 = rng.random_range(0.0..=config.soc0_max);
    let trace = simulate_protocol(&set.base, &set.aging, protocol, soc0, sim)?;
    let mut segs = segment_trace(&trace.samples, trace.final_capacity, set.source, config.delta_q, config.stride_q);
    if let Some(k) = config.max_segments_per_set {
        if segs.len() > k {
            let mut keep = index::sample(&mut rng, segs.len(), k).into_vec();
            keep.sort_unstable();
            segs = keep.into_iter().map(|i| segs[i].clone()).collect();
        }
    }
    segs.iter().map(|s| SegmentRecord::from_segment(s, &config.norm)).collect()
}

/// Simulates every set's charge, segments it and packs the windows. Sets
/// that fail to simulate are logged and skipped. Output order follows
/// `sets` regardless of thread count.
pub fn generate_corpus(sets: &[ParamSet], protocol: &Protocol, sim: SimConfig, config: &CorpusConfig) -> Result<Corpus> {
    if sets.is_empty() {
        return Err(Error::invalid("corpus generation needs at least one parameter set"));
    }
    if !(0.0..1.0).contains(&config.soc0_max) {
        return Err(Error::invalid("soc0_max must lie in [0, 1)"));
    }
    protocol.validate()?;
    sim.validate()?;
    let results: Vec<Result<Vec<SegmentRecord>>> = sets
        .par_iter()
        .enumerate()
        .map(|(i, s)| one_set(s, i, protocol, sim, config))
        .collect();
    let mut dataset = Dataset::new(config.norm);
    let mut skipped = 0;
    for (set, r) in sets.iter().zip(results) {
        match r {
            Ok(recs) => dataset.records.extend(recs),
            Err(e) => {
                skipped += 1;
                log::warn!("skipping parameter set {:?}: {e}", set.source);
            }
        }
    }
    Ok(Corpus {
        dataset,
        simulated: sets.len() - skipped,
        skipped,
    })
}
