//! Feature files, manifests, padded batches and the synthetic corpus.

mod batch;
mod features;
mod manifest;
mod synthetic;

pub use batch::{batch_plan, encode_target, make_batches, Batch, Dataset, Example, BUCKET_WIDTH};
pub use features::{load_features, FeatureSequence, MAGIC as FEATURE_MAGIC};
pub use manifest::{Manifest, Record, HEADER as MANIFEST_HEADER};
pub use synthetic::{generate_synthetic, SynthConfig, SynthItem, SynthLanguage};
