use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One layer of a feed-forward classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid square convolution, stride 1.
    Conv2d {
        filters: usize,
        kernel: usize,
    },
    Dense {
        units: usize,
    },
    Relu,
    /// Inverted dropout; `rate` is the drop probability.
    Dropout {
        rate: f64,
    },
    Maxpool2x2,
    Flatten,
    SoftmaxOutput,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Maxpool2x2 => "maxpool2x2",
            LayerSpec::Flatten => "flatten",
            LayerSpec::SoftmaxOutput => "softmax_output",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }
}

/// Activation shape of a single sample between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Image { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn numel(self) -> usize {
        match self {
            Shape::Image { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `[C, H, W]`
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

/// Parameter tensors a layer owns: `(name, shape)` pairs.
pub(crate) type ParamShapes = Vec<(String, Vec<usize>)>;

pub(crate) fn weight_name(layer: usize, spec: &LayerSpec) -> String {
    format!("{layer:03}.{}.weight", spec.name())
}

pub(crate) fn bias_name(layer: usize, spec: &LayerSpec) -> String {
    format!("{layer:03}.{}.bias", spec.name())
}

impl ModelSpec {
    /// Two 3×3 convolutions (32 and 64 filters), 2×2 max-pooling, dropout
    /// 0.25, a 128-unit hidden layer, dropout 0.5 and a softmax output.
    pub fn reference_cnn(input_shape: [usize; 3], num_classes: usize) -> Self {
        ModelSpec {
            input_shape,
            num_classes,
            layers: vec![
                LayerSpec::Conv2d { filters: 32, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::Conv2d { filters: 64, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::Maxpool2x2,
                LayerSpec::Dropout { rate: 0.25 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 128 },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense { units: num_classes },
                LayerSpec::SoftmaxOutput,
            ],
        }
    }

    pub fn input(&self) -> Shape {
        let [c, h, w] = self.input_shape;
        Shape::Image { c, h, w }
    }

    /// Checks the layer chain and returns each layer's input shape, followed
    /// by the final output shape.
    pub fn infer_shapes(&self) -> Result<Vec<Shape>> {
        let [c, h, w] = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return invalid(format!("input shape {:?} has a zero extent", self.input_shape));
        }
        if self.num_classes < 2 {
            return invalid(format!("num_classes must be ≥ 2, got {}", self.num_classes));
        }
        let softmax_count = self.layers.iter().filter(|l| matches!(l, LayerSpec::SoftmaxOutput)).count();
        if softmax_count != 1 || !matches!(self.layers.last(), Some(LayerSpec::SoftmaxOutput)) {
            return invalid("exactly one softmax_output layer is required and it must be last");
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = self.input();
        for (i, layer) in self.layers.iter().enumerate() {
            shapes.push(cur);
            let bad = |msg: String| invalid(format!("layer {i} ({}): {msg}", layer.name()));
            cur = match (*layer, cur) {
                (LayerSpec::Conv2d { filters, kernel }, Shape::Image { h, w, .. }) => {
                    if filters == 0 || kernel == 0 {
                        return bad("filters and kernel must be positive".into());
                    }
                    if kernel > h || kernel > w {
                        return bad(format!("kernel {kernel} larger than input {h}×{w}"));
                    }
                    Shape::Image { c: filters, h: h - kernel + 1, w: w - kernel + 1 }
                }
                (LayerSpec::Conv2d { .. }, Shape::Flat(_)) => return bad("needs an image input".into()),
                (LayerSpec::Maxpool2x2, Shape::Image { c, h, w }) => {
                    if h < 2 || w < 2 {
                        return bad(format!("input {h}×{w} too small to pool"));
                    }
                    Shape::Image { c, h: h / 2, w: w / 2 }
                }
                (LayerSpec::Maxpool2x2, Shape::Flat(_)) => return bad("needs an image input".into()),
                (LayerSpec::Dense { units }, Shape::Flat(_)) => {
                    if units == 0 {
                        return bad("units must be positive".into());
                    }
                    Shape::Flat(units)
                }
                (LayerSpec::Dense { .. }, Shape::Image { .. }) => {
                    return bad("needs a flat input; add a flatten layer".into())
                }
                (LayerSpec::Dropout { rate }, s) => {
                    if !(0.0..1.0).contains(&rate) {
                        return bad(format!("rate {rate} outside [0, 1)"));
                    }
                    s
                }
                (LayerSpec::Relu, s) => s,
                (LayerSpec::Flatten, s) => Shape::Flat(s.numel()),
                (LayerSpec::SoftmaxOutput, s) => {
                    if s != Shape::Flat(self.num_classes) {
                        return bad(format!("expects a flat input of width {}, got {s:?}", self.num_classes));
                    }
                    s
                }
            };
        }
        shapes.push(cur);
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.infer_shapes().map(|_| ())
    }

    /// Names and shapes of every parameter tensor, in layer order.
    pub(crate) fn param_shapes(&self) -> Result<ParamShapes> {
        let shapes = self.infer_shapes()?;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match (*layer, shapes[i]) {
                (LayerSpec::Conv2d { filters, kernel }, Shape::Image { c, .. }) => {
                    out.push((weight_name(i, layer), vec![filters, c, kernel, kernel]));
                    out.push((bias_name(i, layer), vec![filters]));
                }
                (LayerSpec::Dense { units }, Shape::Flat(n)) => {
                    out.push((weight_name(i, layer), vec![n, units]));
                    out.push((bias_name(i, layer), vec![units]));
                }
                _ => {}
            }
        }
        Ok(out)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.param_shapes()?.iter().map(|(_, s)| s.iter().product::<usize>()).sum())
    }
}
