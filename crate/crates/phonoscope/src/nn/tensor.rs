//! Flat row-major parameter container.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Shape plus a flat f64 buffer; `product(shape) == data.len()` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/buffer disagree");
        Self { shape: shape.to_vec(), data }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    /// Uniform init in [-limit, limit].
    pub fn uniform(shape: &[usize], limit: f64, rng: &mut ChaCha8Rng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
        Self { shape: shape.to_vec(), data }
    }

    /// Uniform init scaled by 1/sqrt(fan_in), the project's standard for
    /// dense, convolutional, and recurrent weights.
    pub fn fan_in_init(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::uniform(shape, 1.0 / (fan_in as f64).sqrt(), rng)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seeded_rng;

    #[test]
    fn shape_invariant_holds() {
        let t = Tensor::zeros(&[3, 4]);
        assert_eq!(t.len(), 12);
        assert_eq!(t.shape(), &[3, 4]);
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let mut r1 = seeded_rng(5);
        let mut r2 = seeded_rng(5);
        let a = Tensor::fan_in_init(&[10, 10], 10, &mut r1);
        let b = Tensor::fan_in_init(&[10, 10], 10, &mut r2);
        assert_eq!(a, b);
        let limit = 1.0 / 10f64.sqrt();
        assert!(a.data().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    #[should_panic(expected = "shape/buffer disagree")]
    fn mismatched_buffer_panics() {
        let _ = Tensor::from_vec(&[2, 2], vec![0.0; 3]);
    }
}
