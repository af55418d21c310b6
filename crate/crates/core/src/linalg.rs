//! Small dense symmetric solvers for the normal equations.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// Rank-one update `self += w · x xᵀ`.
    pub fn add_outer(&mut self, x: &[f64], w: f64) {
        for i in 0..self.n {
            let xi = w * x[i];
            if xi == 0.0 {
                continue;
            }
            for j in 0..self.n {
                self.data[i * self.n + j] += xi * x[j];
            }
        }
    }

    pub fn mul(&self, other: &SquareMatrix) -> SquareMatrix {
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    #[cfg(test)]
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn scaled(&self, a: f64) -> SquareMatrix {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }
}

/// Lower Cholesky factor of a positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: SquareMatrix,
}

impl Cholesky {
    /// Factor `a`. On failure returns the indices of columns that are
    /// numerically dependent on the preceding ones: column `j` is dependent
    /// when its residual pivot falls below `rel_tol · a[j][j]`.
    pub fn factor(a: &SquareMatrix, rel_tol: f64) -> Result<Self, Vec<usize>> {
        let n = a.dim();
        let mut l = SquareMatrix::zeros(n);
        let mut dependent = Vec::new();
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if !(d > rel_tol * a.get(j, j).abs()) || d <= 0.0 {
                // Treat the column as absent so later columns are still judged.
                dependent.push(j);
                continue;
            }
            let djj = d.sqrt();
            l.set(j, j, djj);
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / djj);
            }
        }
        if dependent.is_empty() {
            Ok(Self { l })
        } else {
            Err(dependent)
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l.get(k, i) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        y
    }

    pub fn inverse(&self) -> SquareMatrix {
        let n = self.l.dim();
        let mut inv = SquareMatrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for (i, v) in col.into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        inv
    }
}
