/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Lower Cholesky factor `L` of a symmetric positive-definite matrix,
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factorizes the row-major `n × n` matrix `a + jitter·I`; only the lower
    /// triangle of `a` is read. `None` if a pivot is not positive.
    pub fn new(a: &[f64], n: usize, jitter: f64) -> Option<Self> {
        assert_eq!(a.len(), n * n, "matrix must be n × n");
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (head, row_i) = l.split_at_mut(i * n);
                let li = &row_i[..j];
                let s = if i == j {
                    a[i * n + i] + jitter - dot(li, li)
                } else {
                    a[i * n + j] - dot(li, &head[j * n..j * n + j])
                };
                if i == j {
                    if !(s > 0.0 && s.is_finite()) {
                        return None;
                    }
                    row_i[i] = s.sqrt();
                } else {
                    row_i[j] = s / head[j * n + j];
                }
            }
        }
        Some(Cholesky { n, l, jitter })
    }

    /// Tries no jitter first, then `1e-8`, growing tenfold up to `max_jitter`.
    pub fn with_jitter_escalation(a: &[f64], n: usize, max_jitter: f64) -> Option<Self> {
        if let Some(c) = Self::new(a, n, 0.0) {
            return Some(c);
        }
        let mut jitter = 1e-8;
        while jitter <= max_jitter * (1.0 + 1e-12) {
            if let Some(c) = Self::new(a, n, jitter) {
                return Some(c);
            }
            jitter *= 10.0;
        }
        None
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &[f64] {
        &self.l
    }

    /// `log det(A)` as `2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// Solves `L y = b` in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            b[i] = (b[i] - dot(row, &b[..i])) / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward_solve(&self, y: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            y[i] /= self.l[i * n + i];
            let xi = y[i];
            let row = &self.l[i * n..i * n + i];
            for (yk, lik) in y[..i].iter_mut().zip(row) {
                *yk -= lik * xi;
            }
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.forward_solve(b);
        self.backward_solve(b);
    }
}
