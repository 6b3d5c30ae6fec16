use super::layers::Slot;
use super::network::Network;
use super::tensor::Scalar;

/// Adam with L2 regularization added to the gradient.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: i32,
    moments: Vec<(Vec<S>, Vec<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Applies one update from the gradients currently stored in `net`.
    pub fn step(&mut self, net: &mut Network<S>) {
        self.step += 1;
        let b1 = S::from_f64_lossy(self.beta1);
        let b2 = S::from_f64_lossy(self.beta2);
        let c1 = S::one() - b1;
        let c2 = S::one() - b2;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let lr_t = S::from_f64_lossy(self.learning_rate * bc2.sqrt() / bc1);
        let eps_t = S::from_f64_lossy(self.eps * bc2.sqrt());
        let wd = S::from_f64_lossy(self.weight_decay);
        let mut i = 0;
        let moments = &mut self.moments;
        net.visit(&mut |_, slot| {
            let Slot::Param(p) = slot else { return };
            if moments.len() == i {
                moments.push((vec![S::zero(); p.value.len()], vec![S::zero(); p.value.len()]));
            }
            let (m, v) = &mut moments[i];
            for (((w, &g), m), v) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g + wd * *w;
                *m = b1 * *m + c1 * g;
                *v = b2 * *v + c2 * g * g;
                // Equivalent to lr * m_hat / (sqrt(v_hat) + eps).
                *w -= lr_t * *m / (v.sqrt() + eps_t);
            }
            i += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::super::layers::Param;

    /// Reference update written directly from the bias-corrected definition.
    fn adam_scalar(w0: f64, grads: &[f64], lr: f64, wd: f64) -> f64 {
        let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
        for (t, &g) in grads.iter().enumerate() {
            let g = g + wd * w;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            w -= lr * mh / (vh.sqrt() + 1e-8);
        }
        w
    }

    #[test]
    fn matches_textbook_update() {
        use super::super::network::{Architecture, Backend, Network};
        let arch = Architecture {
            backend: Backend::ReferenceCnn,
            classes: 2,
            head_units: 4,
            dropout: 0.0,
            input_size: 32,
        };
        let mut net = Network::<f64>::new(&arch, 1);
        let mut first: Option<f64> = None;
        net.visit(&mut |_, slot| {
            if let super::Slot::Param(p) = slot {
                first.get_or_insert(p.value[0]);
            }
        });
        let w0 = first.unwrap();
        let grads = [0.5, -0.2, 0.05, 1.5];
        let mut adam = super::Adam::new(1e-2, 1e-4);
        for &g in &grads {
            net.visit(&mut |_, slot| {
                if let super::Slot::Param(p) = slot {
                    let p: &mut Param<f64> = p;
                    p.grad.iter_mut().for_each(|x| *x = g);
                }
            });
            adam.step(&mut net);
        }
        let mut got = None;
        net.visit(&mut |_, slot| {
            if let super::Slot::Param(p) = slot {
                got.get_or_insert(p.value[0]);
            }
        });
        let want = adam_scalar(w0, &grads, 1e-2, 1e-4);
        assert!((got.unwrap() - want).abs() < 1e-12, "{got:?} vs {want}");
    }
}
