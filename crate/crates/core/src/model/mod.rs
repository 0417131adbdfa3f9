//! Single- and multi-level attention models.

mod arch;
mod network;
mod weights;

pub use arch::{format_arch, parse_arch, ArchSpec, DEFAULT_HIDDEN_UNITS, PRESET_ARCHS};
pub use network::{
    stack_z, ClipPrediction, HiddenLayer, HiddenLayerGrads, ModelGrads, MultiLevelModel,
};
pub use weights::{
    load_weights, load_weights_file, read_weights_header, save_weights, save_weights_file,
    WEIGHTS_MAGIC, WEIGHTS_VERSION,
};
