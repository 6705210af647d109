use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::rng::SeededStream;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_DROPOUT_RATE: f64 = 0.2;

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Derivative of [`leaky_relu`]; the value at exactly zero is `slope`.
#[inline]
pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

pub fn leaky_relu_tensor(x: &Tensor, slope: f64) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = leaky_relu(*v, slope));
    y
}

/// `dy ⊙ leaky_relu'(x)`.
pub fn leaky_relu_backward(x: &Tensor, dy: &Tensor, slope: f64) -> Result<Tensor> {
    if x.shape() != dy.shape() {
        return Err(Error::Shape(format!(
            "leaky relu backward: {:?} vs {:?}",
            x.shape(),
            dy.shape()
        )));
    }
    let mut dx = dy.clone();
    for (d, xv) in dx.data_mut().iter_mut().zip(x.data()) {
        *d *= leaky_relu_grad(*xv, slope);
    }
    Ok(dx)
}

/// Inverted dropout.
///
/// In training mode each element is kept with probability `1 − rate`
/// (kept when a uniform draw is `≥ rate`) and survivors are scaled by
/// `1 / (1 − rate)`. Returns the output and the 0/1 keep mask. Inference
/// mode, or `rate == 0`, is the identity and draws nothing.
pub fn dropout(
    x: &Tensor,
    rate: f64,
    training: bool,
    rng: &mut SeededStream,
) -> Result<(Tensor, Tensor)> {
    check_rate(rate)?;
    let mut mask = Tensor::zeros(x.shape());
    mask.fill(1.0);
    if !training || rate == 0.0 {
        return Ok((x.clone(), mask));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut y = x.clone();
    for (yv, m) in y.data_mut().iter_mut().zip(mask.data_mut()) {
        if rng.uniform() >= rate {
            *yv *= keep_scale;
        } else {
            *m = 0.0;
            *yv = 0.0;
        }
    }
    Ok((y, mask))
}

pub fn dropout_backward(dy: &Tensor, mask: &Tensor, rate: f64) -> Result<Tensor> {
    check_rate(rate)?;
    if dy.shape() != mask.shape() {
        return Err(Error::Shape("dropout backward: mask shape mismatch".into()));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut dx = dy.clone();
    for (d, m) in dx.data_mut().iter_mut().zip(mask.data()) {
        *d *= m * keep_scale;
    }
    Ok(dx)
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Param(format!("dropout rate {rate} must lie in [0, 1)")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Tensor {
        Tensor::from_vec(&[n], (0..n).map(|i| i as f64 * 0.5 - 3.0).collect()).unwrap()
    }

    #[test]
    fn leaky_relu_values() {
        assert_eq!(leaky_relu(3.0, 0.01), 3.0);
        assert!((leaky_relu(-2.0, 0.01) + 0.02).abs() < 1e-15);
        assert_eq!(leaky_relu_grad(0.0, 0.01), 0.01);
    }

    #[test]
    fn leaky_relu_grad_matches_differences_away_from_zero() {
        let h = 1e-6;
        for &x in &[-3.0, -0.7, -0.01, 0.02, 0.4, 5.0] {
            let numeric = (leaky_relu(x + h, 0.01) - leaky_relu(x - h, 0.01)) / (2.0 * h);
            let analytic = leaky_relu_grad(x, 0.01);
            assert!((numeric - analytic).abs() / analytic.abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn zero_rate_and_inference_are_identity() {
        let x = ramp(20);
        let mut rng = SeededStream::new(0, 0, 0, 0);
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap().0, x);
        assert_eq!(dropout(&x, 0.7, false, &mut rng).unwrap().0, x);
    }

    #[test]
    fn rate_one_is_rejected() {
        let mut rng = SeededStream::new(0, 0, 0, 0);
        assert!(matches!(dropout(&ramp(3), 1.0, true, &mut rng), Err(Error::Param(_))));
    }

    #[test]
    fn inverted_dropout_preserves_mean() {
        let n = 1_000_000;
        let x = Tensor::from_vec(&[n], (0..n).map(|i| 1.0 + (i % 7) as f64).collect()).unwrap();
        let mut rng = SeededStream::new(42, 0, 0, 0);
        let (y, mask) = dropout(&x, 0.5, true, &mut rng).unwrap();
        let mx = x.data().iter().sum::<f64>() / n as f64;
        let my = y.data().iter().sum::<f64>() / n as f64;
        assert!((my - mx).abs() / mx < 0.01, "{my} vs {mx}");
        let kept = mask.data().iter().sum::<f64>() / n as f64;
        assert!((kept - 0.5).abs() < 0.01);
    }

    #[test]
    fn dropout_backward_routes_through_mask() {
        let x = ramp(50);
        let mut rng = SeededStream::new(1, 0, 0, 0);
        let (_, mask) = dropout(&x, 0.3, true, &mut rng).unwrap();
        let dy = Tensor::from_vec(&[50], vec![1.0; 50]).unwrap();
        let dx = dropout_backward(&dy, &mask, 0.3).unwrap();
        for (d, m) in dx.data().iter().zip(mask.data()) {
            assert!((d - m / 0.7).abs() < 1e-15);
        }
    }
}
