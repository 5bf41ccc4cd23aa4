use num_complex::Complex64 as C64;

use crate::gnn::ParamStore;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam with bias correction. Real and imaginary parts of a complex
/// parameter are treated as independent real parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Vec<C64>>,
    /// Second moments of the real and imaginary parts, stored as `re + j·im`.
    v: Vec<Vec<C64>>,
    t: i32,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<C64>> = store.params.iter().map(|p| vec![C64::new(0.0, 0.0); p.value.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Descends along `grads` (one entry per parameter, `∂/∂Re + j∂/∂Im`).
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<C64>], lr: f64) {
        assert_eq!(grads.len(), store.params.len(), "one gradient per parameter");
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let update = |m: &mut f64, v: &mut f64, g: f64| -> f64 {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            lr * (*m / c1) / ((*v / c2).sqrt() + EPS)
        };
        for (i, p) in store.params.iter_mut().enumerate() {
            for (j, z) in p.value.iter_mut().enumerate() {
                let g = grads[i][j];
                let (m, v) = (&mut self.m[i][j], &mut self.v[i][j]);
                z.re -= update(&mut m.re, &mut v.re, g.re);
                if !p.real {
                    z.im -= update(&mut m.im, &mut v.im, g.im);
                }
            }
        }
    }
}
