use ndarray::{Array2, Zip};

/// Adam with bias correction. One moment pair per parameter block.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. `params[i]` and `grads[i]` must match the i-th shape
    /// given at construction; a `None` gradient counts as zero.
    pub fn update(&mut self, params: &mut [&mut Array2<f64>], grads: &[Option<&Array2<f64>>]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (i, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            match grads[i] {
                Some(g) => Zip::from(&mut **p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }),
                None => Zip::from(&mut **p).and(m).and(v).for_each(|p, m, v| {
                    *m *= b1;
                    *v *= b2;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut opt = Adam::new(0.1, &[(1, 2)]);
        let mut p = array![[1.0, -1.0]];
        let g = array![[3.0, -0.5]];
        opt.update(&mut [&mut p], &[Some(&g)]);
        assert!((p[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((p[[0, 1]] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = Adam::new(0.05, &[(1, 1)]);
        let mut x = array![[5.0]];
        for _ in 0..2000 {
            let g = &x * 2.0;
            opt.update(&mut [&mut x], &[Some(&g)]);
        }
        assert!(x[[0, 0]].abs() < 1e-3);
    }
}
