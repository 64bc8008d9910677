//! Dense row-major tensors of rank 1 or 2.

use super::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Tensor<S> {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match data length {}",
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Tensor<S> {
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); shape.iter().product()],
        }
    }

    pub fn scalar(v: S) -> Tensor<S> {
        Tensor::new(vec![1, 1], vec![v])
    }

    pub fn row(data: Vec<S>) -> Tensor<S> {
        Tensor::new(vec![1, data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Tensor<S> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Rows of a rank-2 tensor (a rank-1 tensor counts as one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            r => panic!("rank-{r} tensor has no row count"),
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            r => panic!("rank-{r} tensor has no column count"),
        }
    }

    pub fn at(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        let cols = self.cols();
        self.data[i * cols + j] = v;
    }

    pub fn item(&self) -> S {
        assert_eq!(self.numel(), 1, "item() needs a single-element tensor");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Converts element-wise through f64.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| T::fr(v.to_f64().expect("scalar converts to f64")))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<S>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}
