//! Forward and backward passes over a batch laid out as `b×C×H×W`.

use super::model::{ParamSet, TrainedModel};
use super::spec::{bias_name, weight_name, LayerSpec, Shape};
use crate::error::{dim_err, Error, Result};
use crate::rng::Rng;
use crate::tensor::{col2im, gemm, im2col, softmax_in_place, MatRef, Tensor};

/// Samples per chunk for inference; bounds activation memory.
const INFER_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug)]
enum LayerCache {
    Conv { input: Vec<f64> },
    Dense { input: Vec<f64> },
    Relu { mask: Vec<bool> },
    Dropout { mask: Option<Vec<f64>> },
    Pool { argmax: Vec<u32> },
    Flatten,
    Softmax,
    Empty,
}

impl LayerCache {
    fn matches(&self, spec: &LayerSpec) -> bool {
        matches!(
            (self, spec),
            (LayerCache::Conv { .. }, LayerSpec::Conv2d { .. })
                | (LayerCache::Dense { .. }, LayerSpec::Dense { .. })
                | (LayerCache::Relu { .. }, LayerSpec::Relu)
                | (LayerCache::Dropout { .. }, LayerSpec::Dropout { .. })
                | (LayerCache::Pool { .. }, LayerSpec::Maxpool2x2)
                | (LayerCache::Flatten, LayerSpec::Flatten)
                | (LayerCache::Softmax, LayerSpec::SoftmaxOutput)
        )
    }
}

/// Intermediates recorded by a train-mode [`forward`] for [`backward`].
#[derive(Debug)]
pub struct ActivationCache {
    mode: Mode,
    batch: usize,
    layers: Vec<LayerCache>,
}

impl ActivationCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }
}

fn check_batch(model: &TrainedModel, batch: &Tensor) -> Result<usize> {
    let s = batch.shape();
    if s.len() != 4 || s[1..] != model.spec.input_shape {
        return dim_err(format!("batch shape {:?} does not match model input b×{:?}", s, model.spec.input_shape));
    }
    Ok(s[0])
}

/// Runs the network. Dropout masks are drawn from `rng` only in train mode;
/// in infer mode the cache is empty and `rng` is untouched.
pub fn forward(model: &TrainedModel, batch: &Tensor, mode: Mode, rng: &mut Rng) -> Result<(Tensor, ActivationCache)> {
    let b = check_batch(model, batch)?;
    forward_impl(model, batch.data().to_vec(), b, mode, Some(rng))
}

/// Class probabilities in infer mode.
pub fn predict_proba(model: &TrainedModel, batch: &Tensor) -> Result<Tensor> {
    let b = check_batch(model, batch)?;
    let per_sample: usize = model.spec.input_shape.iter().product();
    let n = model.spec.num_classes;
    let mut out = Vec::with_capacity(b * n);
    for chunk in batch.data().chunks(INFER_CHUNK * per_sample) {
        let rows = chunk.len() / per_sample;
        let (probs, _) = forward_impl(model, chunk.to_vec(), rows, Mode::Infer, None)?;
        out.extend_from_slice(probs.data());
    }
    Tensor::new(vec![b, n], out)
}

fn forward_impl(
    model: &TrainedModel,
    mut x: Vec<f64>,
    b: usize,
    mode: Mode,
    mut rng: Option<&mut Rng>,
) -> Result<(Tensor, ActivationCache)> {
    let shapes = model.spec.infer_shapes()?;
    let train = mode == Mode::Train;
    let mut caches = Vec::with_capacity(model.spec.layers.len());
    for (i, layer) in model.spec.layers.iter().enumerate() {
        let (input, output) = (shapes[i], shapes[i + 1]);
        let cache = match *layer {
            LayerSpec::Conv2d { kernel, .. } => {
                let (Shape::Image { c, h, w }, Shape::Image { c: co, h: ho, w: wo }) = (input, output) else {
                    unreachable!("validated by infer_shapes")
                };
                let weight = param(model, &weight_name(i, layer))?;
                let bias = param(model, &bias_name(i, layer))?;
                let k = c * kernel * kernel;
                let p = ho * wo;
                // One sample's column matrix at a time; backward rebuilds it
                // from the cached input rather than holding b of them.
                let mut col = vec![0.0; k * p];
                let mut out = vec![0.0; b * co * p];
                for s in 0..b {
                    im2col(&x[s * c * h * w..(s + 1) * c * h * w], (c, h, w), (kernel, kernel), &mut col);
                    let dst = &mut out[s * co * p..(s + 1) * co * p];
                    for (o, plane) in dst.chunks_mut(p).enumerate() {
                        plane.fill(bias.data()[o]);
                    }
                    gemm(MatRef::new(weight.data(), co, k), MatRef::new(&col, k, p), 1.0, dst);
                }
                let input = std::mem::replace(&mut x, out);
                if train {
                    LayerCache::Conv { input }
                } else {
                    LayerCache::Empty
                }
            }
            LayerSpec::Dense { units } => {
                let n = input.numel();
                let weight = param(model, &weight_name(i, layer))?;
                let bias = param(model, &bias_name(i, layer))?;
                let mut out = vec![0.0; b * units];
                for row in out.chunks_mut(units) {
                    row.copy_from_slice(bias.data());
                }
                gemm(MatRef::new(&x, b, n), MatRef::new(weight.data(), n, units), 1.0, &mut out);
                let input = std::mem::replace(&mut x, out);
                if train {
                    LayerCache::Dense { input }
                } else {
                    LayerCache::Empty
                }
            }
            LayerSpec::Relu => {
                x.iter_mut().for_each(|v| *v = v.max(0.0));
                if train {
                    LayerCache::Relu { mask: x.iter().map(|&v| v > 0.0).collect() }
                } else {
                    LayerCache::Empty
                }
            }
            LayerSpec::Dropout { rate } => {
                if train {
                    if rate > 0.0 {
                        let rng = rng
                            .as_deref_mut()
                            .ok_or_else(|| Error::Consistency("train-mode forward needs an rng".into()))?;
                        let keep = 1.0 / (1.0 - rate);
                        let mask: Vec<f64> =
                            (0..x.len()).map(|_| if rng.uniform() < rate { 0.0 } else { keep }).collect();
                        x.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                        LayerCache::Dropout { mask: Some(mask) }
                    } else {
                        LayerCache::Dropout { mask: None }
                    }
                } else {
                    LayerCache::Empty
                }
            }
            LayerSpec::Maxpool2x2 => {
                let (Shape::Image { c, h, w }, Shape::Image { h: ho, w: wo, .. }) = (input, output) else {
                    unreachable!("validated by infer_shapes")
                };
                let mut out = vec![0.0; b * c * ho * wo];
                let mut argmax = if train { vec![0u32; out.len()] } else { Vec::new() };
                for plane in 0..b * c {
                    let base = plane * h * w;
                    for oy in 0..ho {
                        let top = base + 2 * oy * w;
                        let (r0, r1) = (&x[top..top + w], &x[top + w..top + 2 * w]);
                        let o_row = (plane * ho + oy) * wo;
                        for ox in 0..wo {
                            // Window order (0,0), (0,1), (1,0), (1,1); the first maximum wins.
                            let (mut best, mut v) = (2 * ox, r0[2 * ox]);
                            if r0[2 * ox + 1] > v {
                                (best, v) = (2 * ox + 1, r0[2 * ox + 1]);
                            }
                            if r1[2 * ox] > v {
                                (best, v) = (w + 2 * ox, r1[2 * ox]);
                            }
                            if r1[2 * ox + 1] > v {
                                (best, v) = (w + 2 * ox + 1, r1[2 * ox + 1]);
                            }
                            out[o_row + ox] = v;
                            if train {
                                argmax[o_row + ox] = (top + best) as u32;
                            }
                        }
                    }
                }
                x = out;
                if train {
                    LayerCache::Pool { argmax }
                } else {
                    LayerCache::Empty
                }
            }
            LayerSpec::Flatten => {
                if train {
                    LayerCache::Flatten
                } else {
                    LayerCache::Empty
                }
            }
            LayerSpec::SoftmaxOutput => {
                for row in x.chunks_mut(model.spec.num_classes) {
                    softmax_in_place(row);
                }
                if train {
                    LayerCache::Softmax
                } else {
                    LayerCache::Empty
                }
            }
        };
        caches.push(cache);
    }
    debug_assert!(x.iter().all(|v| v.is_finite()), "non-finite activation");
    let probs = Tensor::new(vec![b, model.spec.num_classes], x)?;
    Ok((probs, ActivationCache { mode, batch: b, layers: caches }))
}

fn param<'a>(model: &'a TrainedModel, name: &str) -> Result<&'a Tensor> {
    model.params.get(name).ok_or_else(|| Error::Consistency(format!("model has no parameter {name}")))
}

/// Gradients of the mean cross-entropy over the batch with respect to every
/// parameter. The output layer delta is `(probs - onehot) / b`.
pub fn backward(model: &TrainedModel, cache: &ActivationCache, probs: &Tensor, labels: &[usize]) -> Result<ParamSet> {
    let layers = &model.spec.layers;
    let n = model.spec.num_classes;
    if cache.mode != Mode::Train {
        return Err(Error::Consistency("backward needs a train-mode cache".into()));
    }
    if cache.layers.len() != layers.len() || cache.layers.iter().zip(layers).any(|(c, l)| !c.matches(l)) {
        return Err(Error::Consistency("activation cache was produced by a different model".into()));
    }
    let b = cache.batch;
    if probs.shape() != [b, n] {
        return Err(Error::Consistency(format!("probs shape {:?} does not match cached batch {b}×{n}", probs.shape())));
    }
    if labels.len() != b {
        return Err(Error::Consistency(format!("{} labels for a batch of {b}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
        return Err(Error::Validation(format!("label {bad} out of range [0, {n})")));
    }
    let shapes = model.spec.infer_shapes()?;

    let mut delta = probs.data().to_vec();
    for (row, &label) in delta.chunks_mut(n).zip(labels) {
        row[label] -= 1.0;
    }
    let inv_b = 1.0 / b as f64;
    delta.iter_mut().for_each(|v| *v *= inv_b);

    let mut grads = ParamSet::new();
    for i in (0..layers.len()).rev() {
        let layer = &layers[i];
        let (input, output) = (shapes[i], shapes[i + 1]);
        let need_input_grad = i > 0;
        match (&cache.layers[i], *layer) {
            (LayerCache::Softmax, _) | (LayerCache::Flatten, _) => {}
            (LayerCache::Dense { input: x }, LayerSpec::Dense { units }) => {
                let fan_in = input.numel();
                let weight = param(model, &weight_name(i, layer))?;
                let mut dw = vec![0.0; fan_in * units];
                gemm(MatRef::new(x, b, fan_in).t(), MatRef::new(&delta, b, units), 0.0, &mut dw);
                let mut db = vec![0.0; units];
                for row in delta.chunks(units) {
                    db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                }
                grads.insert(weight_name(i, layer), Tensor::new(vec![fan_in, units], dw)?);
                grads.insert(bias_name(i, layer), Tensor::new(vec![units], db)?);
                if need_input_grad {
                    let mut dx = vec![0.0; b * fan_in];
                    gemm(MatRef::new(&delta, b, units), MatRef::new(weight.data(), fan_in, units).t(), 0.0, &mut dx);
                    delta = dx;
                }
            }
            (LayerCache::Conv { input: x }, LayerSpec::Conv2d { kernel, .. }) => {
                let (Shape::Image { c, h, w }, Shape::Image { c: co, h: ho, w: wo }) = (input, output) else {
                    unreachable!("validated by infer_shapes")
                };
                let weight = param(model, &weight_name(i, layer))?;
                let k = c * kernel * kernel;
                let p = ho * wo;
                let mut dw = vec![0.0; co * k];
                let mut db = vec![0.0; co];
                let mut dx = if need_input_grad { vec![0.0; b * c * h * w] } else { Vec::new() };
                let mut dcols = if need_input_grad { vec![0.0; k * p] } else { Vec::new() };
                let mut col = vec![0.0; k * p];
                for s in 0..b {
                    let d = &delta[s * co * p..(s + 1) * co * p];
                    im2col(&x[s * c * h * w..(s + 1) * c * h * w], (c, h, w), (kernel, kernel), &mut col);
                    gemm(MatRef::new(d, co, p), MatRef::new(&col, k, p).t(), 1.0, &mut dw);
                    for (o, plane) in d.chunks(p).enumerate() {
                        db[o] += plane.iter().sum::<f64>();
                    }
                    if need_input_grad {
                        gemm(MatRef::new(weight.data(), co, k).t(), MatRef::new(d, co, p), 0.0, &mut dcols);
                        col2im(&dcols, (c, h, w), (kernel, kernel), &mut dx[s * c * h * w..(s + 1) * c * h * w]);
                    }
                }
                grads.insert(weight_name(i, layer), Tensor::new(vec![co, c, kernel, kernel], dw)?);
                grads.insert(bias_name(i, layer), Tensor::new(vec![co], db)?);
                if need_input_grad {
                    delta = dx;
                }
            }
            (LayerCache::Relu { mask }, _) => {
                delta.iter_mut().zip(mask).for_each(|(d, &m)| {
                    if !m {
                        *d = 0.0
                    }
                });
            }
            (LayerCache::Dropout { mask }, _) => {
                if let Some(mask) = mask {
                    delta.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
                }
            }
            (LayerCache::Pool { argmax }, _) => {
                let mut dx = vec![0.0; b * input.numel()];
                for (&j, &d) in argmax.iter().zip(&delta) {
                    dx[j as usize] += d;
                }
                delta = dx;
            }
            _ => unreachable!("cache kinds checked above"),
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::ModelSpec;

    fn tiny() -> ModelSpec {
        ModelSpec {
            input_shape: [1, 6, 6],
            num_classes: 3,
            layers: vec![
                LayerSpec::Conv2d { filters: 2, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::Maxpool2x2,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 3 },
                LayerSpec::SoftmaxOutput,
            ],
        }
    }

    fn batch(b: usize, seed: u64) -> Tensor {
        let mut r = Rng::new(seed);
        Tensor::new(vec![b, 1, 6, 6], (0..b * 36).map(|_| r.uniform()).collect()).unwrap()
    }

    #[test]
    fn infer_mode_ignores_rng() {
        let m = TrainedModel::init(tiny(), 1).unwrap();
        let x = batch(4, 2);
        let (a, _) = forward(&m, &x, Mode::Infer, &mut Rng::new(1)).unwrap();
        let (b, _) = forward(&m, &x, Mode::Infer, &mut Rng::new(999)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_output_weights_give_uniform_probs() {
        let mut m = TrainedModel::init(tiny(), 1).unwrap();
        m.params.get_mut("005.dense.weight").unwrap().data_mut().fill(0.0);
        let p = predict_proba(&m, &batch(3, 4)).unwrap();
        assert!(p.data().iter().all(|&v| v == 1.0 / 3.0));
    }

    #[test]
    fn train_mode_replays_with_same_seed() {
        let m = TrainedModel::init(tiny(), 1).unwrap();
        let x = batch(5, 3);
        let (a, _) = forward(&m, &x, Mode::Train, &mut Rng::new(8)).unwrap();
        let (b, _) = forward(&m, &x, Mode::Train, &mut Rng::new(8)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn predict_proba_equals_infer_forward() {
        let m = TrainedModel::init(tiny(), 5).unwrap();
        let x = batch(7, 6);
        let (f, _) = forward(&m, &x, Mode::Infer, &mut Rng::new(0)).unwrap();
        assert_eq!(predict_proba(&m, &x).unwrap(), f);
    }

    #[test]
    fn predict_proba_rows_normalized() {
        let m = TrainedModel::init(tiny(), 5).unwrap();
        let p = predict_proba(&m, &batch(9, 1)).unwrap();
        for row in p.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_batch_shape_is_dimension_error() {
        let m = TrainedModel::init(tiny(), 5).unwrap();
        let x = Tensor::zeros(&[2, 1, 5, 6]);
        assert!(matches!(predict_proba(&m, &x), Err(Error::Dimension(_))));
    }

    #[test]
    fn uniform_probs_output_delta() {
        // n=2, uniform probs, label 0 -> delta row [-0.5, 0.5] / b; with a
        // flatten-dense model the bias gradient is exactly that delta.
        let spec = ModelSpec {
            input_shape: [1, 1, 2],
            num_classes: 2,
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 2 }, LayerSpec::SoftmaxOutput],
        };
        let mut m = TrainedModel::init(spec, 0).unwrap();
        m.params.get_mut("001.dense.weight").unwrap().data_mut().fill(0.0);
        let x = Tensor::new(vec![1, 1, 1, 2], vec![0.3, 0.7]).unwrap();
        let (p, cache) = forward(&m, &x, Mode::Train, &mut Rng::new(0)).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
        let g = backward(&m, &cache, &p, &[0]).unwrap();
        assert_eq!(g["001.dense.bias"].data(), &[-0.5, 0.5]);
    }

    #[test]
    fn backward_rejects_infer_cache() {
        let m = TrainedModel::init(tiny(), 1).unwrap();
        let x = batch(2, 3);
        let (p, cache) = forward(&m, &x, Mode::Infer, &mut Rng::new(0)).unwrap();
        assert!(matches!(backward(&m, &cache, &p, &[0, 1]), Err(Error::Consistency(_))));
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let m = TrainedModel::init(tiny(), 1).unwrap();
        let other = TrainedModel::init(ModelSpec::reference_cnn([1, 6, 6], 3), 1).unwrap();
        let x = batch(2, 3);
        let (p, cache) = forward(&other, &x, Mode::Train, &mut Rng::new(0)).unwrap();
        assert!(matches!(backward(&m, &cache, &p, &[0, 1]), Err(Error::Consistency(_))));
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let spec = ModelSpec {
            input_shape: [1, 1, 4],
            num_classes: 4,
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense { units: 4 },
                LayerSpec::SoftmaxOutput,
            ],
        };
        let mut m = TrainedModel::init(spec, 0).unwrap();
        // Identity dense layer so the cached dense input is the dropout output.
        let w = m.params.get_mut("002.dense.weight").unwrap();
        *w = Tensor::identity(4);
        let act = [0.2, 0.4, 0.6, 0.8];
        let x = Tensor::new(vec![1, 1, 1, 4], act.to_vec()).unwrap();
        let mut rng = Rng::new(17);
        let draws = 40_000;
        let mut sum = [0.0; 4];
        for _ in 0..draws {
            let (_, cache) = forward(&m, &x, Mode::Train, &mut rng).unwrap();
            let LayerCache::Dense { input } = &cache.layers[2] else { panic!() };
            sum.iter_mut().zip(input).for_each(|(s, v)| *s += v);
        }
        for (s, a) in sum.iter().zip(act) {
            let mean = s / draws as f64;
            assert!((mean - a).abs() <= 0.02 * a, "mean {mean} vs {a}");
        }
    }
}
