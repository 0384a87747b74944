//! Dense integer weight matrices with the 8-bit even-value constraint.
//!
//! Plastic weights live on an even-integer grid inside `[-256, 254]` so that
//! every copy of a matrix sees the same deterministic `±2` updates. The
//! asymmetry of the range matters: `-256` is representable but its negation
//! is not, so negated copies saturate at `+254` (see [`QuantMatrix::negated`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inclusive lower bound of the plastic weight range.
pub const WEIGHT_MIN: i16 = -256;
/// Inclusive upper bound of the plastic weight range.
pub const WEIGHT_MAX: i16 = 254;

/// Which copy of a logical weight matrix a synapse group carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightRole {
    /// The reference forward matrix.
    Forward,
    /// A same-direction duplicate of the forward matrix.
    ForwardCopy,
    /// The element-wise transpose of the forward matrix.
    Transpose,
    /// The negated transpose of the forward matrix.
    NegatedTranspose,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuantError {
    #[error("value {value} at ({row}, {col}) outside [{WEIGHT_MIN}, {WEIGHT_MAX}] or odd")]
    InvalidValue { row: usize, col: usize, value: i32 },
    #[error("data length {len} does not match {rows}x{cols}")]
    ShapeMismatch { len: usize, rows: usize, cols: usize },
}

/// Row-major integer matrix; rows index the target (post) side, columns the
/// source (pre) side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i16>,
    role: WeightRole,
}

impl QuantMatrix {
    pub fn zeros(rows: usize, cols: usize, role: WeightRole) -> Self {
        Self { rows, cols, data: vec![0; rows * cols], role }
    }

    /// Builds a matrix from row-major data, validating the even-value range.
    pub fn from_data(
        rows: usize,
        cols: usize,
        data: Vec<i16>,
        role: WeightRole,
    ) -> Result<Self, QuantError> {
        if data.len() != rows * cols {
            return Err(QuantError::ShapeMismatch { len: data.len(), rows, cols });
        }
        for (k, &v) in data.iter().enumerate() {
            if !(WEIGHT_MIN..=WEIGHT_MAX).contains(&v) || v % 2 != 0 {
                return Err(QuantError::InvalidValue {
                    row: k / cols,
                    col: k % cols,
                    value: v as i32,
                });
            }
        }
        Ok(Self { rows, cols, data, role })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn role(&self) -> WeightRole {
        self.role
    }

    pub fn with_role(mut self, role: WeightRole) -> Self {
        self.role = role;
        self
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i16 {
        self.data[row * self.cols + col]
    }

    /// Sets an entry without range validation; test and fault-injection hook.
    pub fn set_unchecked(&mut self, row: usize, col: usize, value: i16) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[i16] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[i16] {
        &self.data
    }

    /// Adds `delta` to one entry, saturating at the range bounds. Returns the
    /// change that was actually applied.
    #[inline]
    pub fn saturating_add(&mut self, row: usize, col: usize, delta: i16) -> i16 {
        let idx = row * self.cols + col;
        let old = self.data[idx];
        let new = (old + delta).clamp(WEIGHT_MIN, WEIGHT_MAX);
        self.data[idx] = new;
        new - old
    }

    pub fn transposed(&self) -> QuantMatrix {
        let mut data = vec![0i16; self.rows * self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.get(r, c);
            }
        }
        QuantMatrix { rows: self.cols, cols: self.rows, data, role: WeightRole::Transpose }
    }

    /// Element-wise negation, clamped back into the representable range
    /// (`-(-256)` saturates to `254`).
    pub fn negated(&self) -> QuantMatrix {
        let data = self.data.iter().map(|&v| (-v).clamp(WEIGHT_MIN, WEIGHT_MAX)).collect();
        QuantMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
            role: WeightRole::NegatedTranspose,
        }
    }

    /// Maximum absolute elementwise difference, with the first offending
    /// coordinate if nonzero.
    pub fn max_abs_diff(&self, other: &QuantMatrix) -> (i32, Option<(usize, usize)>) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let mut max = 0i32;
        let mut at = None;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let d = (self.get(r, c) as i32 - other.get(r, c) as i32).abs();
                if d > max {
                    max = d;
                    at = Some((r, c));
                }
            }
        }
        (max, at)
    }

    /// True when every entry is an even integer inside the weight range.
    pub fn is_valid(&self) -> bool {
        self.data.iter().all(|&v| (WEIGHT_MIN..=WEIGHT_MAX).contains(&v) && v % 2 == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_and_out_of_range() {
        assert!(QuantMatrix::from_data(1, 2, vec![2, 3], WeightRole::Forward).is_err());
        assert!(QuantMatrix::from_data(1, 2, vec![2, 256], WeightRole::Forward).is_err());
        assert!(QuantMatrix::from_data(1, 2, vec![-256, 254], WeightRole::Forward).is_ok());
        assert!(QuantMatrix::from_data(1, 1, vec![2, 4], WeightRole::Forward).is_err());
    }

    #[test]
    fn saturation_at_bounds() {
        let mut m = QuantMatrix::from_data(1, 1, vec![254], WeightRole::Forward).unwrap();
        assert_eq!(m.saturating_add(0, 0, 2), 0);
        assert_eq!(m.get(0, 0), 254);
        let mut m = QuantMatrix::from_data(1, 1, vec![-256], WeightRole::Forward).unwrap();
        assert_eq!(m.saturating_add(0, 0, -2), 0);
        assert_eq!(m.get(0, 0), -256);
        assert_eq!(m.saturating_add(0, 0, 2), 2);
        assert_eq!(m.get(0, 0), -254);
    }

    #[test]
    fn negation_clamps_lower_rail() {
        let m = QuantMatrix::from_data(1, 2, vec![-256, 100], WeightRole::Forward).unwrap();
        let n = m.negated();
        assert_eq!(n.get(0, 0), 254);
        assert_eq!(n.get(0, 1), -100);
    }

    #[test]
    fn transpose_round_trip() {
        let m = QuantMatrix::from_data(2, 3, vec![0, 2, 4, -2, -4, 254], WeightRole::Forward)
            .unwrap();
        let t = m.transposed();
        assert_eq!(t.rows(), 3);
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(m.get(r, c), t.get(c, r));
            }
        }
    }
}
