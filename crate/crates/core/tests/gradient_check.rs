//! Backpropagation against central finite differences.

use complens::nn::{backward, forward, LayerSpec, Mode, ModelSpec, ParamSet, TrainedModel};
use complens::rng::Rng;
use complens::tensor::Tensor;
use complens::train::cross_entropy;

const EPS: f64 = 1e-5;
const REL_TOL: f64 = 1e-6;

/// Every layer kind on a 2×6×6 input.
fn tiny_spec(dropout: f64) -> ModelSpec {
    ModelSpec {
        input_shape: [2, 6, 6],
        num_classes: 3,
        layers: vec![
            LayerSpec::Conv2d { filters: 3, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::Maxpool2x2,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 5 },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: dropout },
            LayerSpec::Dense { units: 3 },
            LayerSpec::SoftmaxOutput,
        ],
    }
}

fn random_batch(b: usize, seed: u64) -> (Tensor, Vec<usize>) {
    let mut rng = Rng::new(seed);
    let x = (0..b * 72).map(|_| rng.uniform()).collect();
    let y = (0..b).map(|_| rng.below(3) as usize).collect();
    (Tensor::new(vec![b, 2, 6, 6], x).unwrap(), y)
}

/// Mean cross-entropy with the dropout mask replayed from `mask_seed`.
fn loss(model: &TrainedModel, x: &Tensor, y: &[usize], mask_seed: u64) -> f64 {
    let (probs, _) = forward(model, x, Mode::Train, &mut Rng::new(mask_seed)).unwrap();
    cross_entropy(&probs, y).unwrap()
}

fn analytic(model: &TrainedModel, x: &Tensor, y: &[usize], mask_seed: u64) -> ParamSet {
    let (probs, cache) = forward(model, x, Mode::Train, &mut Rng::new(mask_seed)).unwrap();
    backward(model, &cache, &probs, y).unwrap()
}

/// Relative errors `|a − n| / max(|a|, |n|)` over every coordinate; exact
/// zeros on both sides count as agreement.
fn relative_errors(model: &TrainedModel, x: &Tensor, y: &[usize], mask_seed: u64) -> Vec<(String, f64)> {
    let grads = analytic(model, x, y, mask_seed);
    let mut out = Vec::new();
    for (name, g) in &grads {
        for k in 0..g.len() {
            let mut plus = model.clone();
            plus.params.get_mut(name).unwrap().data_mut()[k] += EPS;
            let mut minus = model.clone();
            minus.params.get_mut(name).unwrap().data_mut()[k] -= EPS;
            let numeric = (loss(&plus, x, y, mask_seed) - loss(&minus, x, y, mask_seed)) / (2.0 * EPS);
            let a = g.data()[k];
            let scale = a.abs().max(numeric.abs());
            let rel = if scale == 0.0 { 0.0 } else { (a - numeric).abs() / scale };
            out.push((format!("{name}[{k}]"), rel));
        }
    }
    out
}

fn assert_all_within(errors: &[(String, f64)]) {
    let worst = errors.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert!(worst.1 <= REL_TOL, "worst coordinate {} has relative error {:e}", worst.0, worst.1);
}

#[test]
fn gradients_match_central_differences_without_dropout() {
    let model = TrainedModel::init(tiny_spec(0.0), 3).unwrap();
    let (x, y) = random_batch(4, 10);
    let errors = relative_errors(&model, &x, &y, 0);
    assert_eq!(errors.len(), model.spec.param_count().unwrap());
    assert_all_within(&errors);
}

#[test]
fn gradients_match_central_differences_with_fixed_dropout_mask() {
    let model = TrainedModel::init(tiny_spec(0.4), 5).unwrap();
    let (x, y) = random_batch(3, 11);
    assert_all_within(&relative_errors(&model, &x, &y, 77));
}

#[test]
fn gradients_match_central_differences_on_dense_only_model() {
    let spec = ModelSpec {
        input_shape: [1, 2, 3],
        num_classes: 4,
        layers: vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 6 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: 4 },
            LayerSpec::SoftmaxOutput,
        ],
    };
    let model = TrainedModel::init(spec, 8).unwrap();
    let mut rng = Rng::new(4);
    let x = Tensor::new(vec![5, 1, 2, 3], (0..30).map(|_| rng.uniform()).collect()).unwrap();
    let y = vec![0, 1, 2, 3, 1];
    assert_all_within(&relative_errors(&model, &x, &y, 0));
}

#[test]
fn batch_gradient_is_mean_of_per_sample_gradients() {
    let model = TrainedModel::init(tiny_spec(0.0), 9).unwrap();
    let (x, y) = random_batch(4, 12);
    let batch = analytic(&model, &x, &y, 0);
    let per = 72;
    let singles: Vec<ParamSet> = (0..4)
        .map(|i| {
            let xi = Tensor::new(vec![1, 2, 6, 6], x.data()[i * per..(i + 1) * per].to_vec()).unwrap();
            analytic(&model, &xi, &y[i..i + 1], 0)
        })
        .collect();
    for (name, g) in &batch {
        for k in 0..g.len() {
            let mean = singles.iter().map(|s| s[name].data()[k]).sum::<f64>() / 4.0;
            assert!((g.data()[k] - mean).abs() <= 1e-12 * (1.0 + mean.abs()), "{name}[{k}]");
        }
    }
}
