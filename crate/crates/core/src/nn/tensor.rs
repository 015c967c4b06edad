//! Dense 4-D tensor in [batch, channels, height, width] layout, f64 throughout.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    data: Vec<f64>,
    shape: [usize; 4],
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor4 {
            data: vec![0.0; shape.iter().product()],
            shape,
        }
    }

    pub fn from_vec(data: Vec<f64>, shape: [usize; 4]) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("all dimensions must be >= 1, got {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {shape:?} ({expected} elements)",
                data.len()
            )));
        }
        Ok(Tensor4 { data, shape })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Owned-vector view, for code that walks parameter tensors uniformly.
    pub fn data_vec(&self) -> &Vec<f64> {
        &self.data
    }

    pub fn data_vec_mut(&mut self) -> &mut Vec<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn idx(&self, b: usize, c: usize, h: usize, w: usize) -> usize {
        ((b * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.idx(b, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, c: usize, h: usize, w: usize) -> &mut f64 {
        let i = self.idx(b, c, h, w);
        &mut self.data[i]
    }

    /// Reinterpret without copying; the element count must be unchanged.
    pub fn reshape(self, shape: [usize; 4]) -> Result<Tensor4> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) into {shape:?} ({expected} elements)",
                self.shape,
                self.data.len()
            )));
        }
        Tensor4::from_vec(self.data, shape)
    }

    /// One batch item's [K] row when the tensor is [B, K, 1, 1].
    pub fn row(&self, b: usize) -> &[f64] {
        let k = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[b * k..(b + 1) * k]
    }

    pub fn row_mut(&mut self, b: usize) -> &mut [f64] {
        let k = self.shape[1] * self.shape[2] * self.shape[3];
        &mut self.data[b * k..(b + 1) * k]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor4::from_vec((0..24).map(|v| v as f64).collect(), [2, 3, 2, 2]).unwrap();
        assert_eq!(t.at(0, 0, 0, 0), 0.0);
        assert_eq!(t.at(0, 0, 0, 1), 1.0);
        assert_eq!(t.at(0, 1, 0, 0), 4.0);
        assert_eq!(t.at(1, 0, 0, 0), 12.0);
        assert_eq!(t.at(1, 2, 1, 1), 23.0);
    }

    #[test]
    fn from_vec_validates_shape() {
        assert!(Tensor4::from_vec(vec![0.0; 5], [1, 2, 3, 1]).is_err());
        assert!(Tensor4::from_vec(vec![], [0, 1, 1, 1]).is_err());
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor4::from_vec((0..8).map(|v| v as f64).collect(), [2, 4, 1, 1]).unwrap();
        let r = t.clone().reshape([2, 2, 2, 1]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshape([3, 3, 1, 1]).is_err());
    }
}
