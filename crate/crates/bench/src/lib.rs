//! Fixtures shared by the criterion benches.

use randrnn::synthetic::SyntheticTask;
use randrnn::{ActivationTensor, EncoderConfig};

/// Canonical 64x8x8 blocks and their labels from the default synthetic task.
pub fn blocks(n_per_class: usize) -> (Vec<ActivationTensor>, Vec<usize>) {
    let task = SyntheticTask {
        train_per_class: n_per_class,
        test_per_class: 1,
        ..SyntheticTask::default()
    };
    task.generate(&[])
        .expect("valid task")
        .into_iter()
        .filter(|s| s.role == randrnn::tensor_io::SplitRole::Train)
        .map(|s| (s.tensor, s.category))
        .unzip()
}

pub fn encoder(num_rnns: usize) -> EncoderConfig {
    EncoderConfig {
        num_rnns,
        ..EncoderConfig::default()
    }
}
