//! Dataset loading and the noisy-label sidecar format.

pub mod idx;
pub mod sidecar;
pub mod synth;

pub use idx::load_idx;
pub use sidecar::{apply_sidecar, read_sidecar, write_sidecar, SidecarFile, SidecarHeader, SidecarRow};
pub use synth::synth_clusters;
