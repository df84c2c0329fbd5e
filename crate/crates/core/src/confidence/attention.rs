//! Occlusion saliency: how much the predicted-class probability drops when a
//! gray patch hides each region of the input.

use crate::data::SubsetView;
use crate::error::{invalid, Result};
use crate::nn::{predict_proba, TrainedModel};
use crate::rng::{stream, Rng};
use crate::tensor::{argmax, Tensor};

pub const OCCLUDER_VALUE: f64 = 0.5;

fn positions(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    (0..=extent - patch).step_by(stride).collect()
}

/// `map[y, x]` is `p_k(image) - p_k(image with patch at (y·stride, x·stride))`
/// for the class `k` predicted on the clean image.
pub fn occlusion_attention_map(
    model: &TrainedModel,
    image: &Tensor,
    patch_size: usize,
    stride: usize,
) -> Result<Tensor> {
    let [c, h, w] = model.spec.input_shape;
    if image.shape() != [c, h, w] {
        return Err(crate::Error::Dimension(format!(
            "image shape {:?} does not match model input {:?}",
            image.shape(),
            model.spec.input_shape
        )));
    }
    if patch_size == 0 || stride == 0 {
        return invalid("patch size and stride must be positive");
    }
    if patch_size > h || patch_size > w {
        return invalid(format!("patch {patch_size} larger than image {h}×{w}"));
    }
    let clean = predict_proba(model, &image.clone().reshape(&[1, c, h, w])?)?;
    let k = argmax(clean.row(0));
    let base = clean.row(0)[k];

    let (ys, xs) = (positions(h, patch_size, stride), positions(w, patch_size, stride));
    let mut batch = Vec::with_capacity(ys.len() * xs.len() * image.len());
    for &y0 in &ys {
        for &x0 in &xs {
            let mut occluded = image.data().to_vec();
            for ci in 0..c {
                for y in y0..y0 + patch_size {
                    let row = (ci * h + y) * w;
                    occluded[row + x0..row + x0 + patch_size].fill(OCCLUDER_VALUE);
                }
            }
            batch.extend_from_slice(&occluded);
        }
    }
    let probs = predict_proba(model, &Tensor::new(vec![ys.len() * xs.len(), c, h, w], batch)?)?;
    let map = probs.rows().map(|row| base - row[k]).collect();
    Tensor::new(vec![ys.len(), xs.len()], map)
}

/// Spreads an occlusion map back to `h×w`: each pixel averages the values of
/// every patch position covering it (zero if none does).
pub fn upsample_occlusion_map(map: &Tensor, (h, w): (usize, usize), patch_size: usize, stride: usize) -> Tensor {
    let (mh, mw) = (map.shape()[0], map.shape()[1]);
    let mut sum = vec![0.0; h * w];
    let mut hits = vec![0u32; h * w];
    for my in 0..mh {
        for mx in 0..mw {
            let v = map.data()[my * mw + mx];
            for y in my * stride..(my * stride + patch_size).min(h) {
                for x in mx * stride..(mx * stride + patch_size).min(w) {
                    sum[y * w + x] += v;
                    hits[y * w + x] += 1;
                }
            }
        }
    }
    let data = sum.iter().zip(&hits).map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect();
    Tensor::new(vec![h, w], data).expect("h×w map")
}

/// Average input-sized attention map over up to `sample_cap` samples of
/// `class_id`, chosen by `seed`.
pub fn class_mean_attention(
    model: &TrainedModel,
    view: &SubsetView<'_>,
    class_id: usize,
    sample_cap: usize,
    patch_size: usize,
    stride: usize,
    seed: u64,
) -> Result<Tensor> {
    if sample_cap == 0 {
        return invalid("sample_cap must be ≥ 1");
    }
    let mut members: Vec<usize> = (0..view.len()).filter(|&p| view.label(p) == class_id).collect();
    if members.is_empty() {
        return invalid(format!("class {class_id} does not occur in the view"));
    }
    Rng::with_stream(seed, stream::SAMPLING).shuffle(&mut members);
    members.truncate(sample_cap);
    let [c, h, w] = model.spec.input_shape;
    let mut acc = vec![0.0; h * w];
    for &p in &members {
        let (x, _) = view.gather(&[p]);
        let map = occlusion_attention_map(model, &x.reshape(&[c, h, w])?, patch_size, stride)?;
        let up = upsample_occlusion_map(&map, (h, w), patch_size, stride);
        acc.iter_mut().zip(up.data()).for_each(|(a, v)| *a += v);
    }
    let n = members.len() as f64;
    Tensor::new(vec![h, w], acc.into_iter().map(|v| v / n).collect())
}

/// Binary PGM (P5, maxval 255), min-max normalized; a flat map encodes as zeros.
pub fn to_pgm(map: &Tensor) -> Vec<u8> {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let lo = map.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(map.data().iter().map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 }));
    out
}
