//! SGD with momentum and decoupled-from-nothing weight decay: the decay
//! term joins the gradient before the momentum update, the classical form.

/// `v <- momentum * v + (grad + weight_decay * param)`,
/// `param <- param - lr * v`.
pub fn sgd_step(
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    velocity: &mut [f64],
) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), velocity.len());
    for i in 0..params.len() {
        velocity[i] = momentum * velocity[i] + (grads[i] + weight_decay * params[i]);
        params[i] -= lr * velocity[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lr_keeps_params_bit_identical() {
        let mut p = vec![0.5, -1.25, 3.0];
        let before = p.clone();
        let mut v = vec![0.0; 3];
        sgd_step(&mut p, &[1.0, 2.0, -3.0], 0.0, 0.937, 5e-4, &mut v);
        assert_eq!(p, before);
    }

    #[test]
    fn plain_gradient_descent_when_momentum_and_decay_are_zero() {
        let mut p = vec![1.0, 2.0];
        let mut v = vec![0.0; 2];
        sgd_step(&mut p, &[0.5, -0.25], 0.1, 0.0, 0.0, &mut v);
        assert_eq!(p, vec![1.0 - 0.05, 2.0 + 0.025]);
    }

    #[test]
    fn two_momentum_steps_match_the_hand_unrolled_recurrence() {
        let momentum = 0.9;
        let wd = 0.01;
        let lr = 0.1;
        let p0 = 2.0;
        let (g1, g2) = (0.3, -0.2);

        let mut p = vec![p0];
        let mut v = vec![0.0];
        sgd_step(&mut p, &[g1], lr, momentum, wd, &mut v);
        sgd_step(&mut p, &[g2], lr, momentum, wd, &mut v);

        // hand-unrolled
        let v1 = g1 + wd * p0;
        let p1 = p0 - lr * v1;
        let v2 = momentum * v1 + (g2 + wd * p1);
        let p2 = p1 - lr * v2;
        assert!((p[0] - p2).abs() < 1e-15);
        assert!((v[0] - v2).abs() < 1e-15);
    }
}
