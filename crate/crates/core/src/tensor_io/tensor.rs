use crate::error::{Error, Result};

/// Dense single-precision activation tensor, row-major.
///
/// Rank 1 holds a flat level output (`[M]`), rank 3 holds `[K, s, s]` maps.
/// The level tag is 1..=7 for backbone levels and 0 when the tensor is not
/// tied to an extraction level (e.g. colorized images, encoded features).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    level_tag: u8,
}

impl ActivationTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::with_level(shape, data, 0)
    }

    pub fn with_level(shape: Vec<usize>, data: Vec<f32>, level_tag: u8) -> Result<Self> {
        validate_shape(&shape)?;
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} holds {count} elements but data has {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        if level_tag > 7 {
            return Err(Error::InvalidTensor(format!(
                "level tag {level_tag} outside 0..=7"
            )));
        }
        Ok(Self {
            shape,
            data,
            level_tag,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let count = shape.iter().product();
        Self::new(shape, vec![0.0; count])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn level_tag(&self) -> u8 {
        self.level_tag
    }

    pub fn set_level_tag(&mut self, level: u8) {
        self.level_tag = level;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(K, s)` for a square rank-3 tensor.
    pub fn maps_and_side(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            &[k, h, w] if h == w => Some((k, h)),
            _ => None,
        }
    }

    /// Row-major reinterpretation under a new shape of equal element count.
    pub fn reshaped(self, shape: Vec<usize>) -> Result<Self> {
        validate_shape(&shape)?;
        let count: usize = shape.iter().product();
        if count != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) into {shape:?} ({count} elements)",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Self {
            shape,
            data: self.data,
            level_tag: self.level_tag,
        })
    }

    pub fn flattened(self) -> Self {
        let n = self.data.len();
        Self {
            shape: vec![n],
            data: self.data,
            level_tag: self.level_tag,
        }
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if !(shape.len() == 1 || shape.len() == 3) {
        return Err(Error::InvalidTensor(format!(
            "rank {} not supported (expected 1 or 3)",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidTensor(format!(
            "shape {shape:?} has a zero extent"
        )));
    }
    Ok(())
}
