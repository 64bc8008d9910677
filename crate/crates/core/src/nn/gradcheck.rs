//! Central finite-difference gradient checking on the f64 path.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ModelParams;
use super::tape::{Bindings, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Fraction of coordinates sampled per parameter.
    pub sample_rate: f64,
    /// Sample floor per parameter (capped at the parameter size).
    pub min_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            sample_rate: 0.01,
            min_coords: 10,
            seed: 17,
        }
    }
}

/// Compares reverse-mode gradients of `build`'s scalar loss against
/// central differences on a random coordinate sample, returning the
/// maximum relative error `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(
    build: impl Fn(&Tape<f64>, &Bindings) -> Var,
    params: &ModelParams<f64>,
    options: &GradCheckOptions,
) -> f64 {
    let eval = |p: &ModelParams<f64>| -> f64 {
        let tape = Tape::new(0);
        let bindings = tape.bind(p);
        tape.value(build(&tape, &bindings)).item()
    };

    let tape = Tape::new(0);
    let bindings = tape.bind(params);
    let loss = build(&tape, &bindings);
    let grads = tape.backward(loss).expect("loss is scalar");

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut worst = 0.0f64;
    let mut perturbed = params.clone();
    for (name, tensor) in params.iter() {
        let numel = tensor.numel();
        let want = ((numel as f64 * options.sample_rate).ceil() as usize)
            .max(options.min_coords)
            .min(numel);
        let mut coords: Vec<usize> = (0..numel).collect();
        coords.shuffle(&mut rng);
        coords.truncate(want);
        let analytic = grads.get(name).expect("gradient present");
        for &c in &coords {
            let original = tensor.data()[c];
            perturbed.get_mut(name).unwrap().data_mut()[c] = original + options.eps;
            let up = eval(&perturbed);
            perturbed.get_mut(name).unwrap().data_mut()[c] = original - options.eps;
            let down = eval(&perturbed);
            perturbed.get_mut(name).unwrap().data_mut()[c] = original;
            let numeric = (up - down) / (2.0 * options.eps);
            let a = analytic.data()[c];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if err > worst {
                worst = err;
            }
        }
    }
    worst
}
