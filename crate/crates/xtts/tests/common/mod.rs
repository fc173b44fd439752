//! Shared test helpers. The gradient checker is an independent oracle: it
//! never touches the tape, only forward evaluations at perturbed inputs.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xtts::numcore::{Real, Tape, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_values(rng: &mut ChaCha8Rng, n: usize, scale: Real) -> Vec<Real> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Maximum relative error between tape gradients and central finite
/// differences of `f` over every element of every input.
///
/// `f` must build a scalar loss from its inputs and be pure: the checker
/// calls it once on tracked leaves for the tape pass and many times on
/// perturbed constants for the difference quotients. The denominator is
/// floored at 1e-4 so true-zero gradients compare against the difference
/// noise floor instead of dividing by zero.
pub fn max_grad_rel_err(
    inputs: &[(&[usize], Vec<Real>)],
    f: impl Fn(&[Tensor]) -> Tensor,
) -> Real {
    let h = 1e-5;

    let tape = Tape::new();
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|(shape, values)| tape.var_from(shape, values.clone()))
        .collect();
    let loss = f(&leaves);
    assert_eq!(loss.len(), 1, "gradient check needs a scalar loss");
    tape.backward(&loss).expect("backward failed");
    let grads: Vec<Vec<Real>> = leaves
        .iter()
        .map(|leaf| {
            tape.grad(leaf)
                .map(|g| g.values().to_vec())
                .unwrap_or_else(|| vec![0.0; leaf.len()])
        })
        .collect();

    let eval = |point: &[(&[usize], Vec<Real>)]| -> Real {
        let consts: Vec<Tensor> = point
            .iter()
            .map(|(shape, values)| Tensor::from_vec(shape, values.clone()))
            .collect();
        f(&consts).item()
    };

    let mut worst: Real = 0.0;
    for (k, (_, values)) in inputs.iter().enumerate() {
        for i in 0..values.len() {
            let mut plus: Vec<(&[usize], Vec<Real>)> = inputs.to_vec();
            plus[k].1[i] += h;
            let mut minus: Vec<(&[usize], Vec<Real>)> = inputs.to_vec();
            minus[k].1[i] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let ad = grads[k][i];
            let err = (ad - fd).abs() / (ad.abs() + fd.abs()).max(1e-4);
            if err > worst {
                worst = err;
            }
        }
    }
    worst
}

/// Assert the tape gradient of `f` matches finite differences to 1e-4.
pub fn check_grads(name: &str, inputs: &[(&[usize], Vec<Real>)], f: impl Fn(&[Tensor]) -> Tensor) {
    let err = max_grad_rel_err(inputs, f);
    assert!(
        err < 1e-4,
        "{name}: max relative gradient error {err:.3e} exceeds 1e-4"
    );
}
