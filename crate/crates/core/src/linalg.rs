//! Row-major dense matrices and affine maps, sized for a few thousand
//! parameters.

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `acc += scale * x`
#[inline]
pub fn axpy(acc: &mut [f64], scale: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += scale * v;
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `y = W x + b`, with `W` stored as an out × in matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(input: usize, output: usize) -> Self {
        Affine { weight: Matrix::zeros(output, input), bias: vec![0.0; output] }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weight.data.chunks_exact(self.weight.cols).zip(&self.bias)) {
            *o = dot(row, x) + b;
        }
    }

    /// Accumulates parameter gradients into `grad` and the input gradient into
    /// `dx` (added, not overwritten).
    #[inline]
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Affine, dx: &mut [f64]) {
        let cols = self.weight.cols;
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            axpy(&mut grad.weight.data[o * cols..(o + 1) * cols], g, x);
            axpy(dx, g, &self.weight.data[o * cols..(o + 1) * cols]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_apply_and_backward() {
        let a = Affine {
            weight: Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]),
            bias: vec![0.5, -0.5, 1.0],
        };
        let mut y = [0.0; 3];
        a.apply(&[1.0, -1.0], &mut y);
        assert_eq!(y, [-0.5, -1.5, 0.0]);

        let mut g = Affine::zeros(2, 3);
        let mut dx = [0.0; 2];
        a.backward(&[1.0, -1.0], &[1.0, 0.0, 2.0], &mut g, &mut dx);
        assert_eq!(dx, [11.0, 14.0]);
        assert_eq!(g.bias, vec![1.0, 0.0, 2.0]);
        assert_eq!(g.weight.as_slice(), &[1.0, -1.0, 0.0, 0.0, 2.0, -2.0]);
    }
}
