//! Per-image visual cache and the sliding-window text cache.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::subspace::VisualFeatureMatrix;

/// Visual features captured for one image. The matrix is shared and never
/// mutated, so every read sees the same data.
#[derive(Debug, Clone)]
pub struct VisualCache {
    image_id: String,
    features: Arc<VisualFeatureMatrix>,
}

impl VisualCache {
    pub fn capture(image_id: impl Into<String>, features: VisualFeatureMatrix) -> Self {
        Self {
            image_id: image_id.into(),
            features: Arc::new(features),
        }
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn features(&self) -> &VisualFeatureMatrix {
        &self.features
    }

    pub fn shared(&self) -> Arc<VisualFeatureMatrix> {
        Arc::clone(&self.features)
    }
}

/// FIFO window over the most recent non-visual hidden states.
#[derive(Debug, Clone)]
pub struct TextCache {
    dim: usize,
    capacity: usize,
    rows: VecDeque<DVector<f64>>,
}

impl TextCache {
    pub fn new(dim: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "text cache needs d >= 1 and capacity >= 1".into(),
            ));
        }
        Ok(Self {
            dim,
            capacity,
            rows: VecDeque::with_capacity(capacity),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends a state, evicting the oldest one when full. The evicted
    /// buffer is reused, so a push never allocates once the window is full.
    pub fn push(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "text cache push",
                expected: self.dim,
                found: state.len(),
            });
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("text cache push"));
        }
        if self.rows.len() == self.capacity {
            let mut recycled = self.rows.pop_front().expect("capacity >= 1");
            recycled.copy_from_slice(state);
            self.rows.push_back(recycled);
        } else {
            self.rows.push_back(DVector::from_column_slice(state));
        }
        Ok(())
    }

    /// Dense `n_t × d` copy, oldest row first.
    pub fn snapshot(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows.len(), self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            out.set_row(i, &row.transpose());
        }
        out
    }

    pub fn clear(&mut self) {
        self.rows.clear();
    }
}
