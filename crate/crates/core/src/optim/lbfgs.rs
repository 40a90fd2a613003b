/// Limited-memory inverse-Hessian approximation (two-loop recursion) on flat
/// vectors.
#[derive(Clone, Debug)]
pub struct Lbfgs {
    memory: usize,
    pairs: Vec<(Vec<f64>, Vec<f64>, f64)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Lbfgs {
    pub fn new(memory: usize) -> Self {
        Self {
            memory: memory.max(1),
            pairs: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Stores (s, y) when the curvature condition sᵀy > 0 holds clearly.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        let scale = dot(&s, &s).sqrt() * dot(&y, &y).sqrt();
        if !(sy > 1e-10 * scale) {
            return false;
        }
        if self.pairs.len() == self.memory {
            self.pairs.remove(0);
        }
        self.pairs.push((s, y, 1.0 / sy));
        true
    }

    /// Applies the inverse-Hessian approximation to `g`, using `h0` as the
    /// initial scaling when memory is empty.
    pub fn apply(&self, g: &[f64], h0: f64) -> Vec<f64> {
        let gamma = match self.pairs.last() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => h0,
        };
        self.apply_with(g, |q| q.iter().map(|v| gamma * v).collect())
    }

    /// Two-loop recursion with `initial` as the seed inverse Hessian.
    pub fn apply_with(&self, g: &[f64], initial: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = vec![0.0; self.pairs.len()];
        for (i, (s, y, rho)) in self.pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &q);
            alphas[i] = a;
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        }
        let mut q = initial(&q);
        for (i, (s, y, rho)) in self.pairs.iter().enumerate() {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (alphas[i] - b) * si);
        }
        q
    }

    /// Most recent pair, for seed scaling.
    pub fn last(&self) -> Option<(&[f64], &[f64])> {
        self.pairs.last().map(|(s, y, _)| (s.as_slice(), y.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_a_diagonal_quadratic() {
        // f = ½Σ d_i x_i²; after n exact pairs the approximation is exact on
        // the spanned directions.
        let d = [1.0, 4.0, 9.0];
        let mut l = Lbfgs::new(5);
        for i in 0..3 {
            let mut s = vec![0.0; 3];
            s[i] = 1.0;
            let y: Vec<f64> = s.iter().zip(&d).map(|(a, b)| a * b).collect();
            assert!(l.push(s, y));
        }
        let r = l.apply(&[1.0, 4.0, 9.0], 1.0);
        for v in r {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(!l.push(vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]));
    }
}
