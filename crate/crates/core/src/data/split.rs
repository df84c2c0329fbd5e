use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, SubsetView};
use crate::error::{invalid, Result};
use crate::rng::{stream, Rng};
use crate::tensor::Tensor;

/// Cuts a seeded permutation of the dataset into train/validation/test views.
///
/// Train and validation sizes are `floor(N·f)`; the test view takes the rest.
pub fn split(
    ds: &LabeledDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(SubsetView<'_>, SubsetView<'_>, SubsetView<'_>)> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return invalid(format!("split fractions must be positive, got {fractions:?}"));
    }
    if (ft + fv + fs - 1.0).abs() > 1e-9 {
        return invalid(format!("split fractions sum to {}, expected 1", ft + fv + fs));
    }
    let n = ds.len();
    // The epsilon absorbs representation error, e.g. 60000 · (2/3).
    let cut = |f: f64| ((n as f64) * f + 1e-6).floor() as usize;
    let n_train = cut(ft);
    let n_val = cut(fv).min(n - n_train);
    let perm = Rng::with_stream(seed, stream::SPLIT).permutation(n);
    let (train, rest) = perm.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    for (name, part) in [("train", train), ("validation", val), ("test", test)] {
        if part.is_empty() {
            return invalid(format!("{name} split of {n} samples with {fractions:?} is empty"));
        }
    }
    Ok((SubsetView::new(ds, train.to_vec())?, SubsetView::new(ds, val.to_vec())?, SubsetView::new(ds, test.to_vec())?))
}

/// Lossless augmentations: right-angle rotations and mirror flips.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentOps {
    /// Counter-clockwise rotations in degrees; each of 90, 180, 270.
    #[serde(default)]
    pub rotations: Vec<u32>,
    #[serde(default)]
    pub hflip: bool,
    #[serde(default)]
    pub vflip: bool,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Rot(u32),
    HFlip,
    VFlip,
}

fn transform_plane(src: &[f64], h: usize, w: usize, op: Op, dst: &mut Vec<f64>) {
    // Output dims: rotations by 90/270 swap h and w (only square images reach here).
    let (oh, ow) = match op {
        Op::Rot(90) | Op::Rot(270) => (w, h),
        _ => (h, w),
    };
    for y in 0..oh {
        for x in 0..ow {
            let (sy, sx) = match op {
                Op::Rot(90) => (x, w - 1 - y),
                Op::Rot(180) => (h - 1 - y, w - 1 - x),
                Op::Rot(270) => (h - 1 - x, y),
                Op::HFlip => (y, w - 1 - x),
                Op::VFlip => (h - 1 - y, x),
                Op::Rot(_) => unreachable!("validated"),
            };
            dst.push(src[sy * w + sx]);
        }
    }
}

/// Materializes the view followed by one transformed copy of it per enabled
/// op (rotations in the given order, then horizontal flip, then vertical).
pub fn augment(view: &SubsetView<'_>, ops: &AugmentOps) -> Result<LabeledDataset> {
    if view.is_empty() {
        return invalid("cannot augment an empty view");
    }
    let [c, h, w] = view.base().sample_shape();
    let mut plan = Vec::new();
    for &deg in &ops.rotations {
        if !matches!(deg, 90 | 180 | 270) {
            return invalid(format!("rotation {deg} is not a right angle (90, 180 or 270)"));
        }
        if deg != 180 && h != w {
            return invalid(format!("rotation by {deg} needs square images, got {h}×{w}"));
        }
        plan.push(Op::Rot(deg));
    }
    if ops.hflip {
        plan.push(Op::HFlip);
    }
    if ops.vflip {
        plan.push(Op::VFlip);
    }
    let (batch, labels) = view.to_batch();
    let per = c * h * w;
    let copies = plan.len() + 1;
    let mut data = Vec::with_capacity(copies * batch.len());
    data.extend_from_slice(batch.data());
    for &op in &plan {
        for sample in batch.data().chunks(per) {
            for plane in sample.chunks(h * w) {
                transform_plane(plane, h, w, op, &mut data);
            }
        }
    }
    let all_labels = labels.iter().copied().cycle().take(labels.len() * copies).collect();
    let images = Tensor::new(vec![labels.len() * copies, c, h, w], data)?;
    LabeledDataset::new(images, all_labels, view.base().class_names().to_vec())
}
