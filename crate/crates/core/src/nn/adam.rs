use crate::error::{Error, Result};
use crate::nn::tensor::Parameter;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon.is_finite()
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::Param(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
///
/// All gradients are checked before any parameter is touched, so a
/// non-finite gradient leaves the whole set unchanged.
pub fn adam_step(params: &mut [&mut Parameter], t: u64, cfg: &AdamConfig) -> Result<()> {
    if t == 0 {
        return Err(Error::Param("Adam step index starts at 1".into()));
    }
    if let Some(p) = params.iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient in parameter {}",
            p.name
        )));
    }
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let correct1 = 1.0 - cfg.beta1.powi(exp);
    let correct2 = 1.0 - cfg.beta2.powi(exp);
    for p in params.iter_mut() {
        let Parameter { value, grad, m, v, .. } = &mut **p;
        for (((w, g), m), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn scalar(value: f64) -> Parameter {
        Parameter::new("w", Tensor::from_vec(&[1], vec![value]).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_value() {
        let mut p = scalar(3.0);
        adam_step(&mut [&mut p], 1, &AdamConfig::default()).unwrap();
        assert_eq!(p.value.data()[0], 3.0);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.0);
        p.grad.data_mut()[0] = 1.0;
        let cfg = AdamConfig::default();
        adam_step(&mut [&mut p], 1, &cfg).unwrap();
        let expected = -0.001 * (1.0 / (1.0 + cfg.epsilon));
        assert!((p.value.data()[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn beats_plain_sgd_on_quadratic() {
        // At lr = 1 plain SGD on w² flips sign every step without shrinking.
        let cfg = AdamConfig { lr: 1.0, ..AdamConfig::default() };
        let mut p = scalar(5.0);
        let mut sgd = 5.0_f64;
        for t in 1..=100 {
            p.grad.data_mut()[0] = 2.0 * p.value.data()[0];
            adam_step(&mut [&mut p], t, &cfg).unwrap();
            sgd -= cfg.lr * 2.0 * sgd;
        }
        let w = p.value.data()[0];
        assert_eq!(sgd.abs(), 5.0);
        assert!(w.abs() < 5.0);
        assert!(w.abs() < sgd.abs(), "adam {w} vs sgd {sgd}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut a = scalar(1.0);
        let mut b = Parameter::new("lstm1.r", Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        b.grad.data_mut()[1] = f64::NAN;
        a.grad.data_mut()[0] = 1.0;
        match adam_step(&mut [&mut a, &mut b], 1, &AdamConfig::default()) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("lstm1.r")),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(a.value.data()[0], 1.0);
    }
}
