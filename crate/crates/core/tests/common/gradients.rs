//! Gradient check of a whole model against finite differences.

use msast::model::{Mode, Model, ModelConfig};
use msast::numerics::gradcheck::{finite_diff_check_piecewise, DEFAULT_EPS};
use msast::numerics::{GradCheckReport, Matrix, ParamStore};
use msast::training::{total_loss, LossWeights};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const WEIGHTS: LossWeights = LossWeights {
    smooth_tau: 4.0,
    smooth_lambda: 0.15,
    detach_previous: false,
};

fn inputs(t: usize, d: usize, classes: usize, seed: u64) -> (Matrix<f64>, Vec<usize>) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_fn(t, d, |_, _| rng.random_range(-1.0..1.0));
    let labels = (0..t).map(|_| rng.random_range(0..classes)).collect();
    (x, labels)
}

fn loss(
    cfg: &ModelConfig,
    params: &ParamStore<f64>,
    x: &Matrix<f64>,
    labels: &[usize],
) -> (f64, Vec<bool>) {
    let model = Model::from_params(cfg, params.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (tape, vars) = model.forward_tape(x, Mode::Infer, &mut rng).unwrap();
    let outs: Vec<_> = vars.iter().map(|&v| tape.value(v).clone()).collect();
    (total_loss(&outs, labels, &WEIGHTS).unwrap().0, tape.relu_pattern())
}

/// Full-model gradient check on a random 12-frame input; dropout must be
/// off in `cfg`.
pub fn model_gradient_check(cfg: &ModelConfig, seed: u64) -> GradCheckReport {
    let mut model = Model::<f64>::build(cfg, seed).unwrap();
    let (x, labels) = inputs(12, cfg.input_dim, cfg.num_classes, seed + 100);
    let grads = {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (tape, vars) = model.forward_tape(&x, Mode::Infer, &mut rng).unwrap();
        let outs: Vec<_> = vars.iter().map(|&v| tape.value(v).clone()).collect();
        let (_, d) = total_loss(&outs, &labels, &WEIGHTS).unwrap();
        tape.backward(vars.into_iter().zip(d).collect())
    };
    model.params_mut().zero_grad();
    model.params_mut().accumulate(&grads);
    let mut params = model.params().clone();
    finite_diff_check_piecewise(&mut params, DEFAULT_EPS, |p| Ok(loss(cfg, p, &x, &labels))).unwrap()
}
