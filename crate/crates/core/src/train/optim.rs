use crate::scalar::Real;
use crate::{Error, Result};

/// SGD-with-momentum state: hyperparameters, cosine schedule position and
/// one velocity buffer per parameter tensor.
#[derive(Clone, Debug)]
pub struct OptimState<T> {
    pub lr0: T,
    pub lr_min: T,
    /// Learning rate used by the next [`sgd_step`].
    pub lr: T,
    pub momentum: T,
    pub weight_decay: T,
    step: usize,
    total_steps: usize,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> OptimState<T> {
    /// Zero velocities shaped like `params`, scheduled over `total_steps`.
    pub fn new(params: &[&[T]], lr0: T, lr_min: T, momentum: T, weight_decay: T, total_steps: usize) -> Self {
        Self {
            lr0,
            lr_min,
            lr: lr0,
            momentum,
            weight_decay,
            step: 0,
            total_steps,
            velocity: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }

    /// Advance the schedule by one step and set `lr` for it. The last of
    /// `total_steps` steps runs at exactly `lr_min`.
    pub fn advance(&mut self) -> Result<T> {
        if self.step >= self.total_steps {
            return Err(Error::Training(format!(
                "schedule exhausted after {} steps",
                self.total_steps
            )));
        }
        self.step += 1;
        self.lr = cosine_lr(self.step, self.total_steps, self.lr0, self.lr_min)?;
        Ok(self.lr)
    }
}

/// `lr_min + ½(lr0 − lr_min)(1 + cos(πt/T))`.
pub fn cosine_lr<T: Real>(t: usize, total: usize, lr0: T, lr_min: T) -> Result<T> {
    if total == 0 {
        return Err(Error::Argument("cosine schedule needs T > 0".into()));
    }
    if t > total {
        return Err(Error::Argument(format!("step {t} beyond schedule length {total}")));
    }
    if t == total {
        return Ok(lr_min);
    }
    let frac = T::from_usize_lossy(t) / T::from_usize_lossy(total);
    Ok(lr_min + T::lit(0.5) * (lr0 - lr_min) * (T::one() + (T::PI() * frac).cos()))
}

/// One momentum step: `g' = g + wd·θ; v ← m·v + g'; θ ← θ − lr·v`.
///
/// Gradients are checked before anything is written, so a rejected step
/// leaves parameters and velocities untouched.
pub fn sgd_step<T: Real>(params: Vec<&mut [T]>, grads: Vec<&[T]>, opt: &mut OptimState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != opt.velocity.len() {
        return Err(Error::Argument(format!(
            "{} parameter tensors, {} gradients, {} velocity buffers",
            params.len(),
            grads.len(),
            opt.velocity.len()
        )));
    }
    for (k, ((p, g), v)) in params.iter().zip(&grads).zip(&opt.velocity).enumerate() {
        if p.len() != g.len() || p.len() != v.len() {
            return Err(Error::Argument(format!(
                "tensor {k}: parameter {} / gradient {} / velocity {} lengths differ",
                p.len(),
                g.len(),
                v.len()
            )));
        }
        if let Some(i) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite gradient {} in tensor {k} at index {i} (step {}, lr {})",
                g[i], opt.step, opt.lr
            )));
        }
    }
    let (lr, m, wd) = (opt.lr, opt.momentum, opt.weight_decay);
    for ((p, g), v) in params.into_iter().zip(grads).zip(&mut opt.velocity) {
        for ((theta, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            let gd = gi + wd * *theta;
            *vi = m * *vi + gd;
            *theta -= lr * *vi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(lr: f64, m: f64, wd: f64) -> OptimState<f64> {
        OptimState::new(&[&[0.0]], lr, 0.0, m, wd, 10)
    }

    #[test]
    fn plain_step() {
        let mut opt = state(0.1, 0.0, 0.0);
        let mut theta = [0.0];
        sgd_step(vec![&mut theta], vec![&[1.0]], &mut opt).unwrap();
        assert!((theta[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn momentum_recurrence() {
        let mut opt = state(0.1, 0.9, 0.0);
        let mut theta = [0.0];
        sgd_step(vec![&mut theta], vec![&[1.0]], &mut opt).unwrap();
        assert!((opt.velocity()[0][0] - 1.0).abs() < 1e-15);
        assert!((theta[0] + 0.1).abs() < 1e-15);
        sgd_step(vec![&mut theta], vec![&[1.0]], &mut opt).unwrap();
        assert!((opt.velocity()[0][0] - 1.9).abs() < 1e-12);
        assert!((theta[0] + 0.29).abs() < 1e-12);
    }

    #[test]
    fn decay_only() {
        let mut opt = state(1.0, 0.0, 1e-4);
        let mut theta = [1.0];
        sgd_step(vec![&mut theta], vec![&[0.0]], &mut opt).unwrap();
        assert!((theta[0] - (1.0 - 1e-4)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejected_untouched() {
        let mut opt = state(0.1, 0.9, 0.0);
        let mut a = [1.0, 2.0];
        let mut opt2 = OptimState::new(&[&a[..]], 0.1, 0.0, 0.9, 0.0, 1);
        let err = sgd_step(vec![&mut a], vec![&[0.5, f64::NAN]], &mut opt2).unwrap_err();
        assert!(matches!(err, Error::Training(ref m) if m.contains("index 1")));
        assert_eq!(a, [1.0, 2.0]);
        let mut b = [0.0, 0.0];
        assert!(matches!(sgd_step(vec![&mut b], vec![&[1.0]], &mut opt), Err(Error::Argument(_))));
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(0, 10, 0.05, 0.001).unwrap(), 0.05);
        assert_eq!(cosine_lr(10, 10, 0.05, 0.001).unwrap(), 0.001);
        assert!((cosine_lr(5, 10, 0.05f64, 0.001).unwrap() - 0.0255).abs() < 1e-15);
        assert!(matches!(cosine_lr(0, 0, 0.1, 0.0), Err(Error::Argument(_))));
        assert!(matches!(cosine_lr(11, 10, 0.1, 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn advance_ends_at_lr_min() {
        let mut opt = OptimState::new(&[&[0.0f64]], 0.1, 0.003, 0.9, 0.0, 7);
        let mut last = 0.0;
        for _ in 0..7 {
            last = opt.advance().unwrap();
        }
        assert_eq!(last, 0.003);
        assert!(opt.advance().is_err());
    }
}
