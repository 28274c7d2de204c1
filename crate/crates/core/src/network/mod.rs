//! Fully connected ReLU networks and their per-region linear structure.
//!
//! A network with `L` hidden layers partitions its input space
//! hierarchically: the level-`l` hyperplanes of a region are the rows of
//! `Ŵˡ x + b̂ˡ`, where `Ŵ¹ = W¹`, and each later level is obtained by zeroing
//! the rows of inactive neurons and multiplying through by the next layer.

mod code;
pub mod io;

use serde::{Deserialize, Serialize};

pub use code::ActivationCode;
pub use io::{load_network, save_network, NetworkFormat};

use crate::error::{check_dim, Error, Result};
use crate::lp::{dot, DenseMatrix, DenseVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub weights: DenseMatrix,
    pub bias: DenseVector,
}

impl LayerSpec {
    pub fn new(weights: DenseMatrix, bias: DenseVector) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::invalid(format!(
                "layer has {} weight rows but {} biases",
                weights.rows(),
                bias.len()
            )));
        }
        Ok(LayerSpec { weights, bias })
    }

    pub fn from_rows(weights: &[Vec<f64>], bias: Vec<f64>) -> Result<Self> {
        LayerSpec::new(DenseMatrix::from_rows(weights)?, DenseVector::new(bias)?)
    }

    pub fn width(&self) -> usize {
        self.weights.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.weights.matvec(x)?;
        out.iter_mut().zip(self.bias.iter()).for_each(|(o, b)| *o += b);
        Ok(out)
    }
}

/// Per-feature input normalization `x ↦ (x − mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNormalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Output rescaling `o ↦ o · scale + mean`, shared by every output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputScaling {
    pub mean: f64,
    pub scale: f64,
}

/// Declared valid input box (NNet min/max lines). Informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Feed-forward ReLU network: `L ≥ 1` hidden layers and a linear output layer.
///
/// Normalizations are folded into working copies of the first and output
/// layers, so every downstream computation sees a plain network over raw
/// inputs. The stored layers stay untouched for lossless round trips.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    input_dim: usize,
    hidden: Vec<LayerSpec>,
    output: LayerSpec,
    labels: Option<Vec<String>>,
    normalization: Option<InputNormalization>,
    output_scaling: Option<OutputScaling>,
    input_bounds: Option<InputBounds>,
    working_hidden: Vec<LayerSpec>,
    working_output: LayerSpec,
}

impl ReluNetwork {
    pub fn new(input_dim: usize, hidden: Vec<LayerSpec>, output: LayerSpec) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        if hidden.is_empty() {
            return Err(Error::invalid("network needs at least one hidden layer"));
        }
        let mut prev = input_dim;
        for (l, layer) in hidden.iter().enumerate() {
            if layer.width() == 0 {
                return Err(Error::invalid(format!("hidden layer {} has no neurons", l + 1)));
            }
            if layer.weights.cols() != prev {
                return Err(Error::invalid(format!(
                    "hidden layer {} expects {} inputs, previous layer provides {prev}",
                    l + 1,
                    layer.weights.cols()
                )));
            }
            prev = layer.width();
        }
        if output.width() == 0 {
            return Err(Error::invalid("output layer has no neurons"));
        }
        if output.weights.cols() != prev {
            return Err(Error::invalid(format!(
                "output layer expects {} inputs, last hidden layer provides {prev}",
                output.weights.cols()
            )));
        }
        Ok(ReluNetwork {
            input_dim,
            working_hidden: hidden.clone(),
            working_output: output.clone(),
            hidden,
            output,
            labels: None,
            normalization: None,
            output_scaling: None,
            input_bounds: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_dim(self.output_dim(), labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_normalization(mut self, norm: InputNormalization) -> Result<Self> {
        check_dim(self.input_dim, norm.mean.len())?;
        check_dim(self.input_dim, norm.scale.len())?;
        if norm.mean.iter().chain(&norm.scale).any(|v| !v.is_finite()) || norm.scale.contains(&0.0) {
            return Err(Error::invalid(
                "normalization needs finite means and non-zero finite scales",
            ));
        }
        self.normalization = Some(norm);
        self.refold();
        Ok(self)
    }

    pub fn with_output_scaling(mut self, scaling: OutputScaling) -> Result<Self> {
        if !scaling.mean.is_finite() || !scaling.scale.is_finite() || scaling.scale == 0.0 {
            return Err(Error::invalid(
                "output scaling needs a finite mean and non-zero finite scale",
            ));
        }
        self.output_scaling = Some(scaling);
        self.refold();
        Ok(self)
    }

    pub fn with_input_bounds(mut self, bounds: InputBounds) -> Result<Self> {
        check_dim(self.input_dim, bounds.lower.len())?;
        check_dim(self.input_dim, bounds.upper.len())?;
        if bounds.lower.iter().zip(&bounds.upper).any(|(l, u)| l > u) {
            return Err(Error::invalid("input bounds have lower > upper"));
        }
        self.input_bounds = Some(bounds);
        Ok(self)
    }

    fn refold(&mut self) {
        let mut first = self.hidden[0].clone();
        if let Some(norm) = &self.normalization {
            let (rows, cols) = (first.weights.rows(), first.weights.cols());
            let mut w = first.weights.as_slice().to_vec();
            let mut b = first.bias.to_vec();
            for i in 0..rows {
                for j in 0..cols {
                    let v = w[i * cols + j] / norm.scale[j];
                    b[i] -= v * norm.mean[j];
                    w[i * cols + j] = v;
                }
            }
            first = LayerSpec {
                weights: DenseMatrix::from_finite(rows, cols, w),
                bias: DenseVector::from_finite(b),
            };
        }
        self.working_hidden[0] = first;
        let mut out = self.output.clone();
        if let Some(s) = self.output_scaling {
            let (rows, cols) = (out.weights.rows(), out.weights.cols());
            let w = out.weights.as_slice().iter().map(|v| v * s.scale).collect();
            let b = out.bias.iter().map(|v| v * s.scale + s.mean).collect();
            out = LayerSpec {
                weights: DenseMatrix::from_finite(rows, cols, w),
                bias: DenseVector::from_finite(b),
            };
        }
        self.working_output = out;
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output.width()
    }

    /// Number of hidden layers `L`.
    pub fn num_levels(&self) -> usize {
        self.hidden.len()
    }

    /// Neurons per hidden layer.
    pub fn widths(&self) -> Vec<usize> {
        self.hidden.iter().map(LayerSpec::width).collect()
    }

    pub fn hidden_layers(&self) -> &[LayerSpec] {
        &self.hidden
    }

    pub fn output_layer(&self) -> &LayerSpec {
        &self.output
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn normalization(&self) -> Option<&InputNormalization> {
        self.normalization.as_ref()
    }

    pub fn output_scaling(&self) -> Option<OutputScaling> {
        self.output_scaling
    }

    pub fn input_bounds(&self) -> Option<&InputBounds> {
        self.input_bounds.as_ref()
    }

    /// Hidden layer `l` (1-based) with any input normalization folded in.
    pub(crate) fn working_layer(&self, l: usize) -> &LayerSpec {
        &self.working_hidden[l - 1]
    }

    /// Network output (pre-link: no sigmoid or softmax).
    pub fn forward(&self, x: &[f64]) -> Result<DenseVector> {
        check_dim(self.input_dim, x.len())?;
        let mut h = x.to_vec();
        for layer in &self.working_hidden {
            h = layer.apply(&h)?;
            h.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Ok(DenseVector::from_finite(self.working_output.apply(&h)?))
    }

    /// Activation code of `x` for levels `1..=up_to_level`; a pre-activation
    /// of exactly zero counts as on.
    pub fn encode(&self, x: &[f64], up_to_level: usize) -> Result<ActivationCode> {
        check_dim(self.input_dim, x.len())?;
        if up_to_level == 0 || up_to_level > self.num_levels() {
            return Err(Error::invalid(format!(
                "level {up_to_level} outside 1..={}",
                self.num_levels()
            )));
        }
        let mut code = ActivationCode::empty();
        let mut h = x.to_vec();
        for layer in &self.working_hidden[..up_to_level] {
            h = layer.apply(&h)?;
            code.push_level(h.iter().map(|v| *v >= 0.0).collect());
            h.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Ok(code)
    }

    /// Argmax of the output (lowest index on ties); for a scalar output,
    /// class 1 iff the output is at least `threshold`.
    pub fn predicted_class(&self, x: &[f64], threshold: f64) -> Result<usize> {
        Ok(class_of(&self.forward(x)?, threshold))
    }

    /// `Ŵˡ, b̂ˡ` (and the masked pair when the code covers level `l`).
    pub fn level_coefficients(&self, code: &ActivationCode, level: usize) -> Result<LevelCoefficients> {
        if level == 0 || level > self.num_levels() {
            return Err(Error::invalid(format!(
                "level {level} outside 1..={}",
                self.num_levels()
            )));
        }
        if code.num_levels() + 1 < level {
            return Err(Error::invalid(format!(
                "level {level} coefficients need {} code levels, code has {}",
                level - 1,
                code.num_levels()
            )));
        }
        self.check_code_shape(code)?;
        let mut effective = self.first_level();
        for l in 1..level {
            let masked = mask(&effective, code.level(l));
            effective = self.next_level(&masked, l + 1);
        }
        let masked = (code.num_levels() >= level).then(|| mask(&effective, code.level(level)));
        Ok(LevelCoefficients {
            level,
            effective_weights: effective.weights,
            effective_bias: effective.bias,
            masked_weights: masked.as_ref().map(|m| m.weights.clone()),
            masked_bias: masked.map(|m| m.bias),
        })
    }

    /// The affine map the network computes on the level-`L` region `code`.
    pub fn local_linear_model(&self, code: &ActivationCode) -> Result<LocalLinearModel> {
        if code.num_levels() != self.num_levels() {
            return Err(Error::invalid(format!(
                "local model needs a code with {} levels, got {}",
                self.num_levels(),
                code.num_levels()
            )));
        }
        self.check_code_shape(code)?;
        let mut effective = self.first_level();
        for l in 1..=self.num_levels() {
            let masked = mask(&effective, code.level(l));
            effective = if l == self.num_levels() {
                self.output_of(&masked)
            } else {
                self.next_level(&masked, l + 1)
            };
        }
        Ok(LocalLinearModel {
            weights: effective.weights,
            bias: effective.bias,
        })
    }

    fn check_code_shape(&self, code: &ActivationCode) -> Result<()> {
        if code.num_levels() > self.num_levels() {
            return Err(Error::invalid("code has more levels than the network"));
        }
        for (l, bits) in code.levels().iter().enumerate() {
            if bits.len() != self.hidden[l].width() {
                return Err(Error::invalid(format!(
                    "code level {} has {} bits, layer has {} neurons",
                    l + 1,
                    bits.len(),
                    self.hidden[l].width()
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn first_level(&self) -> LayerSpec {
        self.working_hidden[0].clone()
    }

    /// `Ŵˡ = Wˡ W̃ˡ⁻¹`, `b̂ˡ = Wˡ b̃ˡ⁻¹ + bˡ` for `level ≥ 2`.
    pub(crate) fn next_level(&self, masked_prev: &LayerSpec, level: usize) -> LayerSpec {
        compose(self.working_layer(level), masked_prev)
    }

    pub(crate) fn output_of(&self, masked_last: &LayerSpec) -> LayerSpec {
        compose(&self.working_output, masked_last)
    }
}

fn compose(outer: &LayerSpec, inner: &LayerSpec) -> LayerSpec {
    let weights = outer
        .weights
        .matmul(&inner.weights)
        .expect("layer dimensions validated at construction");
    let mut bias = outer
        .weights
        .matvec(&inner.bias)
        .expect("layer dimensions validated at construction");
    bias.iter_mut().zip(outer.bias.iter()).for_each(|(v, b)| *v += b);
    LayerSpec {
        weights,
        bias: DenseVector::from_finite(bias),
    }
}

/// Zero the rows of inactive neurons.
pub(crate) fn mask(layer: &LayerSpec, bits: &[bool]) -> LayerSpec {
    let mut weights = layer.weights.clone();
    let mut bias = layer.bias.to_vec();
    for (i, &on) in bits.iter().enumerate() {
        if !on {
            for j in 0..weights.cols() {
                weights.set(i, j, 0.0);
            }
            bias[i] = 0.0;
        }
    }
    LayerSpec {
        weights,
        bias: DenseVector::from_finite(bias),
    }
}

/// Argmax with lowest-index ties; scalar outputs compare against `threshold`.
pub fn class_of(output: &[f64], threshold: f64) -> usize {
    if output.len() == 1 {
        return usize::from(output[0] >= threshold);
    }
    let mut best = 0;
    for (i, v) in output.iter().enumerate() {
        if *v > output[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelCoefficients {
    pub level: usize,
    pub effective_weights: DenseMatrix,
    pub effective_bias: DenseVector,
    pub masked_weights: Option<DenseMatrix>,
    pub masked_bias: Option<DenseVector>,
}

/// `o = Ŵᵒ x + b̂ᵒ`, valid on one level-`L` region.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLinearModel {
    pub weights: DenseMatrix,
    pub bias: DenseVector,
}

impl LocalLinearModel {
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut o = self.weights.matvec(x)?;
        o.iter_mut().zip(self.bias.iter()).for_each(|(v, b)| *v += b);
        Ok(o)
    }

    /// Output `k` as an affine function `(w, b)`.
    pub fn output_row(&self, k: usize) -> (&[f64], f64) {
        (self.weights.row(k), self.bias[k])
    }

    /// `(Ŵᵢ − Ŵⱼ, b̂ᵢ − b̂ⱼ)`: the margin of output `i` over output `j`.
    pub fn margin_row(&self, i: usize, j: usize) -> (Vec<f64>, f64) {
        let w = self
            .weights
            .row(i)
            .iter()
            .zip(self.weights.row(j))
            .map(|(a, b)| a - b)
            .collect();
        (w, self.bias[i] - self.bias[j])
    }

    pub fn evaluate_row(&self, k: usize, x: &[f64]) -> f64 {
        dot(self.weights.row(k), x) + self.bias[k]
    }
}

impl Serialize for LocalLinearModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("LocalLinearModel", 2)?;
        st.serialize_field("weights", &self.weights.to_rows())?;
        st.serialize_field("bias", &self.bias)?;
        st.end()
    }
}
