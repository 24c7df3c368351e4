//! Synthetic training data: aging-parameter expansion, fade trajectories,
//! batch simulation, charge segmentation and tensor packing.

mod corpus;
mod dataset;
mod fade;
mod perturb;
mod segment;

pub(crate) use dataset::hex;
pub use corpus::{generate_corpus, stream_rng, Corpus, CorpusConfig, ParamSet};
pub use dataset::{read_dataset, write_dataset, Dataset, Normalization, SegmentRecord, MAGIC, RECORD_BYTES, SCHEMA_VERSION};
pub use fade::{synth_fade_trajectory, FadeCoefficients, FadeKind};
pub use perturb::{perturb_all, perturb_parameters, PerturbationConfig};
pub use segment::{
    pack_segment, segment_trace, unpack_tensor, Segment, SegmentTensor, SourceId, DEFAULT_DELTA_Q, DEFAULT_STRIDE_Q,
    POINTS, TENSOR_LEN,
};
