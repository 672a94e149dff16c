//! Tensor files, dataset manifests and split generation.

mod level;
mod manifest;
pub mod npy;
mod tensor;

pub use level::{LevelSpec, Preprocess};
pub use manifest::{
    draw_heldout, load_manifest, make_instance_split, DatasetManifest, Modality, SampleRecord,
    SplitRole, FIXED_COLUMNS, LEVEL_COLUMNS,
};
pub use npy::{read_tensor, write_tensor};
pub use tensor::ActivationTensor;

/// Reads a tensor and tags it with its extraction level.
pub fn read_level_tensor(
    path: impl AsRef<std::path::Path>,
    level: u8,
) -> crate::Result<ActivationTensor> {
    let mut t = read_tensor(path)?;
    t.set_level_tag(level);
    Ok(t)
}
