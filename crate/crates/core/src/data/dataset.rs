use std::collections::HashSet;

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Images in `[0, 1]` laid out `N×C×H×W`, with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Tensor,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(images: Tensor, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if images.shape().len() != 4 {
            return invalid(format!("images must be N×C×H×W, got {:?}", images.shape()));
        }
        let n = images.shape()[0];
        if labels.len() != n {
            return invalid(format!("{} labels for {n} images", labels.len()));
        }
        if class_names.len() < 2 {
            return invalid(format!("need at least two classes, got {}", class_names.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return invalid(format!("label {bad} out of range for {} classes", class_names.len()));
        }
        if let Some(v) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return invalid(format!("pixel value {v} outside [0, 1]"));
        }
        Ok(LabeledDataset { images, labels, class_names })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[C, H, W]`
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let per: usize = self.sample_shape().iter().product();
        &self.images.data()[i * per..(i + 1) * per]
    }

    pub fn full_view(&self) -> SubsetView<'_> {
        SubsetView { base: self, indices: (0..self.len()).collect() }
    }
}

/// An ordered selection of samples from a dataset; holds indices only.
#[derive(Debug, Clone)]
pub struct SubsetView<'a> {
    base: &'a LabeledDataset,
    indices: Vec<usize>,
}

impl<'a> SubsetView<'a> {
    pub fn new(base: &'a LabeledDataset, indices: Vec<usize>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(indices.len());
        for &i in &indices {
            if i >= base.len() {
                return invalid(format!("index {i} out of range for {} samples", base.len()));
            }
            if !seen.insert(i) {
                return invalid(format!("duplicate index {i} in view"));
            }
        }
        Ok(SubsetView { base, indices })
    }

    pub fn base(&self) -> &'a LabeledDataset {
        self.base
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn label(&self, pos: usize) -> usize {
        self.base.labels[self.indices[pos]]
    }

    pub fn labels(&self) -> Vec<usize> {
        self.indices.iter().map(|&i| self.base.labels[i]).collect()
    }

    /// Keeps the view positions for which `keep` is true, in order.
    pub fn filter_positions(&self, mut keep: impl FnMut(usize) -> bool) -> SubsetView<'a> {
        let indices = (0..self.len()).filter(|&p| keep(p)).map(|p| self.indices[p]).collect();
        SubsetView { base: self.base, indices }
    }

    /// The first `n` samples of the view.
    pub fn truncated(&self, n: usize) -> SubsetView<'a> {
        SubsetView { base: self.base, indices: self.indices[..n.min(self.len())].to_vec() }
    }

    /// Gathers the samples at view positions `positions` into a batch.
    pub fn gather(&self, positions: &[usize]) -> (Tensor, Vec<usize>) {
        let [c, h, w] = self.base.sample_shape();
        let per = c * h * w;
        let mut data = Vec::with_capacity(positions.len() * per);
        let mut labels = Vec::with_capacity(positions.len());
        for &p in positions {
            let i = self.indices[p];
            data.extend_from_slice(self.base.image(i));
            labels.push(self.base.labels[i]);
        }
        let images = Tensor::new(vec![positions.len(), c, h, w], data).expect("gathered batch is consistent");
        (images, labels)
    }

    /// The whole view as one batch.
    pub fn to_batch(&self) -> (Tensor, Vec<usize>) {
        let all: Vec<usize> = (0..self.len()).collect();
        self.gather(&all)
    }
}
