//! Images, manifests, the synthetic corpus and the feature file container.

mod features;
mod image;
mod manifest;
mod synth;

pub use self::features::{decode_features, encode_features, read_features, write_features, FEATURE_MAGIC, FEATURE_VERSION};
pub use self::image::{decode_image, gaussian_blur, load_image, resize_bilinear, resize_grid, GrayImage, DEFAULT_IMAGE_SIZE};
pub use self::manifest::{Manifest, ManifestEntry, QualityGrade};
pub(crate) use self::manifest::csv_err;
pub use self::synth::{generate_synthetic_corpus, synth_id, DegradationRanges, SynthCorpusSpec};
