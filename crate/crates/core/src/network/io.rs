//! Network serialization: the JSON interchange schema and the NNet text
//! format used to distribute ACAS Xu style networks.
//!
//! JSON:
//!
//! ```text
//! {"input_dim": P,
//!  "hidden": [{"weights": [[..]..], "bias": [..]}, ...],
//!  "output": {"weights": [[..]..], "bias": [..]},
//!  "labels": [..]?,
//!  "normalization": {"mean": [..], "scale": [..]}?,
//!  "output_scaling": {"mean": m, "scale": s}?,
//!  "input_bounds": {"lower": [..], "upper": [..]}?}
//! ```
//!
//! NNet: `//` header comments, then the counts line (layers, inputs,
//! outputs, max layer size), layer sizes, a legacy flag, input minimums,
//! input maximums, means and ranges (inputs then one output entry), then
//! per layer the weight rows followed by one bias per line.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::str::FromStr;

use super::{InputBounds, InputNormalization, LayerSpec, OutputScaling, ReluNetwork};
use crate::error::{Error, Result};
use crate::lp::{DenseMatrix, DenseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkFormat {
    Json,
    Nnet,
}

impl FromStr for NetworkFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(NetworkFormat::Json),
            "nnet" => Ok(NetworkFormat::Nnet),
            other => Err(Error::parse("format", format!("unknown network format {other:?}"))),
        }
    }
}

impl NetworkFormat {
    /// Guess from a file name's extension.
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .ok_or_else(|| Error::parse(path.display().to_string(), "missing file extension"))?
            .parse()
    }
}

pub fn load_network(source: &[u8], format: NetworkFormat) -> Result<ReluNetwork> {
    let text = std::str::from_utf8(source).map_err(|e| Error::parse("input", e.to_string()))?;
    match format {
        NetworkFormat::Json => from_json(text),
        NetworkFormat::Nnet => from_nnet(text),
    }
}

pub fn save_network(net: &ReluNetwork, format: NetworkFormat) -> Result<String> {
    match format {
        NetworkFormat::Json => Ok(to_json(net)),
        NetworkFormat::Nnet => to_nnet(net),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    input_dim: usize,
    hidden: Vec<LayerFile>,
    output: LayerFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalization: Option<InputNormalization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_scaling: Option<OutputScaling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_bounds: Option<InputBounds>,
}

fn layer_from_file(layer: &LayerFile, cols: usize, field: &str) -> Result<LayerSpec> {
    for (i, row) in layer.weights.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::parse(
                format!("{field}.weights[{i}]"),
                format!("row has {} entries, expected {cols}", row.len()),
            ));
        }
    }
    if layer.weights.len() != layer.bias.len() {
        return Err(Error::parse(
            format!("{field}.bias"),
            format!("{} biases for {} weight rows", layer.bias.len(), layer.weights.len()),
        ));
    }
    let data = layer.weights.iter().flatten().copied().collect();
    let weights = DenseMatrix::new(layer.weights.len(), cols, data)
        .map_err(|e| Error::parse(format!("{field}.weights"), e.to_string()))?;
    let bias =
        DenseVector::new(layer.bias.clone()).map_err(|e| Error::parse(format!("{field}.bias"), e.to_string()))?;
    Ok(LayerSpec { weights, bias })
}

fn layer_to_file(layer: &LayerSpec) -> LayerFile {
    LayerFile {
        weights: layer.weights.to_rows(),
        bias: layer.bias.to_vec(),
    }
}

fn from_json(text: &str) -> Result<ReluNetwork> {
    let file: NetworkFile = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    let mut cols = file.input_dim;
    let mut hidden = Vec::with_capacity(file.hidden.len());
    for (l, layer) in file.hidden.iter().enumerate() {
        let spec = layer_from_file(layer, cols, &format!("hidden[{l}]"))?;
        cols = spec.width();
        hidden.push(spec);
    }
    let output = layer_from_file(&file.output, cols, "output")?;
    let mut net =
        ReluNetwork::new(file.input_dim, hidden, output).map_err(|e| Error::parse("network", e.to_string()))?;
    if let Some(labels) = file.labels {
        net = net
            .with_labels(labels)
            .map_err(|e| Error::parse("labels", e.to_string()))?;
    }
    if let Some(norm) = file.normalization {
        net = net
            .with_normalization(norm)
            .map_err(|e| Error::parse("normalization", e.to_string()))?;
    }
    if let Some(s) = file.output_scaling {
        net = net
            .with_output_scaling(s)
            .map_err(|e| Error::parse("output_scaling", e.to_string()))?;
    }
    if let Some(b) = file.input_bounds {
        net = net
            .with_input_bounds(b)
            .map_err(|e| Error::parse("input_bounds", e.to_string()))?;
    }
    Ok(net)
}

fn to_json(net: &ReluNetwork) -> String {
    let file = NetworkFile {
        input_dim: net.input_dim(),
        hidden: net.hidden_layers().iter().map(layer_to_file).collect(),
        output: layer_to_file(net.output_layer()),
        labels: net.labels().map(<[String]>::to_vec),
        normalization: net.normalization().cloned(),
        output_scaling: net.output_scaling(),
        input_bounds: net.input_bounds().cloned(),
    };
    serde_json::to_string_pretty(&file).expect("network serializes")
}

/// Data lines of an NNet file with their 1-based line numbers.
struct NnetLines<'a> {
    lines: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last_line: usize,
}

impl<'a> NnetLines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .skip_while(|(_, l)| l.starts_with("//") || l.is_empty())
                .filter(|(_, l)| !l.is_empty()),
        );
        NnetLines {
            lines: it.peekable(),
            last_line: 0,
        }
    }

    fn next_values(&mut self, what: &str) -> Result<(usize, Vec<f64>)> {
        let (no, line) = self.lines.next().ok_or_else(|| {
            Error::parse(
                format!("line {}", self.last_line + 1),
                format!("unexpected end of file, expected {what}"),
            )
        })?;
        self.last_line = no;
        let values = line
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                let v: f64 = t
                    .parse()
                    .map_err(|_| Error::parse(format!("line {no}"), format!("invalid number {t:?} in {what}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::parse(
                        format!("line {no}"),
                        format!("non-finite value in {what}"),
                    ))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((no, values))
    }

    fn expect(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let (no, values) = self.next_values(what)?;
        if values.len() != n {
            return Err(Error::parse(
                format!("line {no}"),
                format!("{what}: expected {n} values, found {}", values.len()),
            ));
        }
        Ok(values)
    }
}

fn as_count(v: f64, line: usize, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::parse(
            format!("line {line}"),
            format!("{what} must be a non-negative integer"),
        ))
    }
}

fn from_nnet(text: &str) -> Result<ReluNetwork> {
    let mut lines = NnetLines::new(text);
    let (no, head) = lines.next_values("counts line")?;
    if head.len() < 4 {
        return Err(Error::parse(
            format!("line {no}"),
            "counts line needs layers, inputs, outputs, max size",
        ));
    }
    let n_layers = as_count(head[0], no, "layer count")?;
    let n_in = as_count(head[1], no, "input size")?;
    let n_out = as_count(head[2], no, "output size")?;
    if n_layers < 2 {
        return Err(Error::parse(
            format!("line {no}"),
            "need at least one hidden layer plus the output layer",
        ));
    }
    let sizes_line = lines.last_line + 1;
    let sizes = lines
        .expect(n_layers + 1, "layer sizes")?
        .into_iter()
        .map(|v| as_count(v, sizes_line, "layer size"))
        .collect::<Result<Vec<usize>>>()?;
    if sizes[0] != n_in || sizes[n_layers] != n_out {
        return Err(Error::parse(
            format!("line {}", lines.last_line),
            format!(
                "layer sizes start at {} and end at {}, counts line declares {n_in} inputs and {n_out} outputs",
                sizes[0], sizes[n_layers]
            ),
        ));
    }
    lines.next_values("legacy flag")?;
    let mins = lines.expect(n_in, "input minimums")?;
    let maxs = lines.expect(n_in, "input maximums")?;
    let means = lines.expect(n_in + 1, "means")?;
    let ranges = lines.expect(n_in + 1, "ranges")?;

    let mut layers = Vec::with_capacity(n_layers);
    for k in 0..n_layers {
        let (rows, cols) = (sizes[k + 1], sizes[k]);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(lines.expect(cols, &format!("layer {} weight row {}", k + 1, r + 1))?);
        }
        let mut bias = Vec::with_capacity(rows);
        for r in 0..rows {
            bias.extend(lines.expect(1, &format!("layer {} bias {}", k + 1, r + 1))?);
        }
        layers.push(LayerSpec {
            weights: DenseMatrix::from_finite(rows, cols, data),
            bias: DenseVector::from_finite(bias),
        });
    }
    if let Some((no, _)) = lines.lines.next() {
        return Err(Error::parse(format!("line {no}"), "trailing data after the last layer"));
    }
    let output = layers.pop().expect("n_layers ≥ 2");
    let mut net = ReluNetwork::new(n_in, layers, output).map_err(|e| Error::parse("network", e.to_string()))?;

    let identity_input = means[..n_in].iter().all(|v| *v == 0.0) && ranges[..n_in].iter().all(|v| *v == 1.0);
    if !identity_input {
        net = net
            .with_normalization(InputNormalization {
                mean: means[..n_in].to_vec(),
                scale: ranges[..n_in].to_vec(),
            })
            .map_err(|e| Error::parse("normalization", e.to_string()))?;
    }
    if !(means[n_in] == 0.0 && ranges[n_in] == 1.0) {
        net = net
            .with_output_scaling(OutputScaling {
                mean: means[n_in],
                scale: ranges[n_in],
            })
            .map_err(|e| Error::parse("output normalization", e.to_string()))?;
    }
    let unbounded = mins.iter().all(|v| *v == -f64::MAX) && maxs.iter().all(|v| *v == f64::MAX);
    if !unbounded {
        net = net
            .with_input_bounds(InputBounds {
                lower: mins,
                upper: maxs,
            })
            .map_err(|e| Error::parse("input bounds", e.to_string()))?;
    }
    Ok(net)
}

/// Shortest round-trip text for `v`, switching to exponent form for very
/// large or small magnitudes.
fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.push_str(&fmt_num(v));
        out.push(',');
    }
    out.push('\n');
}

fn to_nnet(net: &ReluNetwork) -> Result<String> {
    if net.labels().is_some() {
        // Labels have no NNet representation; they are dropped.
    }
    let p = net.input_dim();
    let mut sizes = vec![p];
    sizes.extend(net.widths());
    sizes.push(net.output_dim());
    let mut out = String::new();
    out.push_str("// Written by polytraverse\n");
    let _ = writeln!(
        out,
        "{},{},{},{},",
        sizes.len() - 1,
        p,
        net.output_dim(),
        sizes.iter().max().copied().unwrap_or(0)
    );
    push_row(&mut out, sizes.iter().map(|&s| s as f64));
    out.push_str("0,\n");
    match net.input_bounds() {
        Some(b) => {
            push_row(&mut out, b.lower.iter().copied());
            push_row(&mut out, b.upper.iter().copied());
        }
        None => {
            push_row(&mut out, std::iter::repeat_n(-f64::MAX, p));
            push_row(&mut out, std::iter::repeat_n(f64::MAX, p));
        }
    }
    let (mut means, mut ranges) = match net.normalization() {
        Some(n) => (n.mean.clone(), n.scale.clone()),
        None => (vec![0.0; p], vec![1.0; p]),
    };
    let s = net.output_scaling().unwrap_or(OutputScaling { mean: 0.0, scale: 1.0 });
    means.push(s.mean);
    ranges.push(s.scale);
    push_row(&mut out, means);
    push_row(&mut out, ranges);
    for layer in net.hidden_layers().iter().chain(std::iter::once(net.output_layer())) {
        for row in layer.weights.row_iter() {
            push_row(&mut out, row.iter().copied());
        }
        for &b in layer.bias.iter() {
            push_row(&mut out, [b]);
        }
    }
    Ok(out)
}
