use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a raw level output reaches its canonical `[K', s', s']` form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocess {
    Reshape,
    PoolMaps,
    PoolSpatial,
    PoolBoth,
}

impl Preprocess {
    pub fn pools(self) -> bool {
        !matches!(self, Preprocess::Reshape)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub level: u8,
    pub raw_shape: Vec<usize>,
    pub target_shape: [usize; 3],
    pub preprocess: Preprocess,
}

impl LevelSpec {
    pub fn new(
        level: u8,
        raw_shape: Vec<usize>,
        target_shape: [usize; 3],
        preprocess: Preprocess,
    ) -> Result<Self> {
        let spec = Self {
            level,
            raw_shape,
            target_shape,
            preprocess,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("level {}: {msg}", self.level)));
        if !(1..=7).contains(&self.level) {
            return fail("level must lie in 1..=7".into());
        }
        let [tk, ts, ts2] = self.target_shape;
        if ts != ts2 || tk == 0 || ts == 0 {
            return fail(format!(
                "target {:?} is not a non-empty square [K, s, s]",
                self.target_shape
            ));
        }
        let raw_count: usize = self.raw_shape.iter().product();
        let target_count = tk * ts * ts;
        if raw_count == 0 || !(self.raw_shape.len() == 1 || self.raw_shape.len() == 3) {
            return fail(format!(
                "raw shape {:?} must be rank 1 or 3",
                self.raw_shape
            ));
        }
        if target_count > raw_count {
            return fail(format!(
                "target {:?} has more elements than raw {:?}",
                self.target_shape, self.raw_shape
            ));
        }

        if self.preprocess == Preprocess::Reshape {
            if raw_count != target_count {
                return fail(format!(
                    "reshape needs equal element counts ({raw_count} != {target_count})"
                ));
            }
            return Ok(());
        }

        let (rk, rs) = match self.raw_shape.as_slice() {
            &[k, h, w] if h == w => (k, h),
            _ => {
                return fail(format!(
                    "pooling needs a square [K, s, s] raw shape, got {:?}",
                    self.raw_shape
                ))
            }
        };
        let pool_maps = matches!(self.preprocess, Preprocess::PoolMaps | Preprocess::PoolBoth);
        let pool_space = matches!(
            self.preprocess,
            Preprocess::PoolSpatial | Preprocess::PoolBoth
        );
        if pool_maps {
            if !(tk < rk && rk % tk == 0) {
                return fail(format!(
                    "map pooling {rk} -> {tk} needs K' < K and K % K' == 0"
                ));
            }
        } else if tk != rk {
            return fail(format!("map count must stay {rk} without map pooling"));
        }
        if pool_space {
            if !(ts < rs && rs % ts == 0) {
                return fail(format!(
                    "spatial pooling {rs} -> {ts} needs s' < s and s % s' == 0"
                ));
            }
        } else if ts != rs {
            return fail(format!("side must stay {rs} without spatial pooling"));
        }
        Ok(())
    }
}
