//! Conditional coupling-flow density model over pyramid positions.

mod coupling;
mod decoder;
mod model;
mod pe;

pub use self::coupling::{CouplingBlock, Parity};
pub use self::decoder::{FlowArch, PositionSet, ScaleDecoder, TrainConfig, TrainingLog, INIT_WEIGHT_STD};
pub use self::model::FlowModel;
pub use self::pe::{encoding_table, positional_encoding, PositionalEncodingConfig};
