use crate::tensor::{Element, Tensor};

/// Fixed sinusoidal position encodings.
///
/// Row `p` (for positions `p >= 1`) holds `sin(p / 10000^(2i/d))` in the
/// first half of the columns and the matching cosines in the second half.
/// Row 0 is all zeros and is used for padding.
#[derive(Clone, Debug, PartialEq)]
pub struct SinusoidalTable<T = f32> {
    table: Tensor<T>,
}

impl<T: Element> SinusoidalTable<T> {
    pub fn new(max_positions: usize, dim: usize) -> Self {
        let half = dim / 2;
        let mut table = Tensor::zeros([max_positions + 1, dim]);
        for p in 1..=max_positions {
            for i in 0..half {
                let angle = p as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
                table.data_mut()[p * dim + i] = T::from_f64_lossy(angle.sin());
                table.data_mut()[p * dim + half + i] = T::from_f64_lossy(angle.cos());
            }
        }
        SinusoidalTable { table }
    }

    pub fn max_positions(&self) -> usize {
        self.table.shape()[0] - 1
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    /// Encoding of 1-based position `p`; `p == 0` gives the zero row.
    pub fn row(&self, p: usize) -> &[T] {
        self.table.row(p)
    }
}
