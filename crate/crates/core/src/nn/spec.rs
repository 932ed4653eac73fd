//! Declarative model descriptions and the two architecture builders.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};

/// One entry of a layer stack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    DilatedCausalConv {
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    Dense {
        units: usize,
    },
    Flatten,
    ResidualBlock {
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
        dropout_rate: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_length: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

/// Activation shape flowing between layers of one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Flow {
    Sequence { steps: usize, channels: usize },
    Vector(usize),
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(arg_err(format!("dropout rate must be in [0, 1), got {rate}")))
    }
}

fn check_positive(what: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(arg_err(format!("{what} must be >= 1")))
    } else {
        Ok(())
    }
}

impl ModelSpec {
    /// Walks the stack, checking every layer against the incoming shape, and
    /// returns the shape entering each layer.
    pub(crate) fn flows(&self) -> Result<Vec<Flow>> {
        check_positive("input_length", self.input_length)?;
        check_positive("input_channels", self.input_channels)?;
        check_positive("num_classes", self.num_classes)?;
        let mut flow = Flow::Sequence {
            steps: self.input_length,
            channels: self.input_channels,
        };
        let mut flows = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            flows.push(flow);
            flow = match (*layer, flow) {
                (
                    LayerSpec::DilatedCausalConv { out_channels, kernel_size, dilation }
                    | LayerSpec::ResidualBlock { out_channels, kernel_size, dilation, .. },
                    Flow::Sequence { steps, .. },
                ) => {
                    check_positive("out_channels", out_channels)?;
                    check_positive("kernel_size", kernel_size)?;
                    check_positive("dilation", dilation)?;
                    if let LayerSpec::ResidualBlock { dropout_rate, .. } = layer {
                        check_rate(*dropout_rate)?;
                    }
                    Flow::Sequence { steps, channels: out_channels }
                }
                (LayerSpec::Flatten, Flow::Sequence { steps, channels }) => Flow::Vector(steps * channels),
                (LayerSpec::Dense { units }, Flow::Vector(_)) => {
                    check_positive("units", units)?;
                    Flow::Vector(units)
                }
                (LayerSpec::Relu, f) => f,
                (LayerSpec::Dropout { rate }, f) => {
                    check_rate(rate)?;
                    f
                }
                (l, f) => return Err(arg_err(format!("layer {i} ({l:?}) cannot follow shape {f:?}"))),
            };
        }
        match (self.layers.last(), flow) {
            (Some(LayerSpec::Dense { .. }), Flow::Vector(n)) if n == self.num_classes => Ok(flows),
            _ => Err(arg_err(format!(
                "the last layer must be Dense emitting {} logits",
                self.num_classes
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.flows().map(|_| ())
    }

    /// Total trainable parameter count.
    pub fn parameter_count(&self) -> Result<usize> {
        let flows = self.flows()?;
        let conv = |k: usize, i: usize, o: usize| k * i * o + o;
        Ok(self
            .layers
            .iter()
            .zip(flows)
            .map(|(layer, flow)| match (*layer, flow) {
                (LayerSpec::DilatedCausalConv { out_channels, kernel_size, .. }, Flow::Sequence { channels, .. }) => {
                    conv(kernel_size, channels, out_channels)
                }
                (LayerSpec::ResidualBlock { out_channels, kernel_size, .. }, Flow::Sequence { channels, .. }) => {
                    conv(kernel_size, channels, out_channels)
                        + conv(kernel_size, out_channels, out_channels)
                        + if channels != out_channels { conv(1, channels, out_channels) } else { 0 }
                }
                (LayerSpec::Dense { units }, Flow::Vector(d)) => d * units + units,
                _ => 0,
            })
            .sum())
    }

    /// Dilations of the residual blocks in stack order.
    pub fn block_dilations(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::ResidualBlock { dilation, .. } => Some(*dilation),
                _ => None,
            })
            .collect()
    }

    /// Number of logits emitted by the final layer.
    pub fn output_units(&self) -> Option<usize> {
        match self.layers.last() {
            Some(LayerSpec::Dense { units }) => Some(*units),
            _ => None,
        }
    }
}

/// Input timesteps that can influence one output position of the
/// convolutional stack: `1 + Σ (kernel_size − 1)·dilation` over every causal
/// convolution, two per residual block.
pub fn receptive_field(spec: &ModelSpec) -> usize {
    1 + spec
        .layers
        .iter()
        .map(|l| match *l {
            LayerSpec::DilatedCausalConv { kernel_size, dilation, .. } => (kernel_size - 1) * dilation,
            LayerSpec::ResidualBlock { kernel_size, dilation, .. } => 2 * (kernel_size - 1) * dilation,
            _ => 0,
        })
        .sum::<usize>()
}

/// Settings shared by both builders. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub input_length: usize,
    pub input_channels: usize,
    pub num_classes: usize,
    pub channels: usize,
    pub kernel_size: usize,
    /// Residual block dilations (TCN only).
    pub dilations: Vec<usize>,
    pub block_dropout: f64,
    pub head_units: usize,
    pub head_dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input_length: 92,
            input_channels: 1,
            num_classes: 15,
            channels: 64,
            kernel_size: 3,
            dilations: vec![1, 2, 4],
            block_dropout: 0.1,
            head_units: 128,
            head_dropout: 0.3,
        }
    }
}

impl ArchConfig {
    fn head(&self) -> [LayerSpec; 5] {
        [
            LayerSpec::Flatten,
            LayerSpec::Dense { units: self.head_units },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: self.head_dropout },
            LayerSpec::Dense { units: self.num_classes },
        ]
    }

    fn finish(&self, mut layers: Vec<LayerSpec>) -> Result<ModelSpec> {
        layers.extend(self.head());
        let spec = ModelSpec {
            input_length: self.input_length,
            input_channels: self.input_channels,
            layers,
            num_classes: self.num_classes,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Which builder produced a spec.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Tcn,
    CnnBaseline,
}

impl ModelKind {
    pub fn build(self, config: &ArchConfig) -> Result<ModelSpec> {
        match self {
            ModelKind::Tcn => build_tcn(config),
            ModelKind::CnnBaseline => build_cnn_baseline(config),
        }
    }

    /// Row label used in comparison tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Tcn => "TCN",
            ModelKind::CnnBaseline => "1D CNN",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Tcn => "tcn",
            ModelKind::CnnBaseline => "cnn_baseline",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tcn" => Ok(ModelKind::Tcn),
            "cnn_baseline" | "cnn" => Ok(ModelKind::CnnBaseline),
            other => Err(arg_err(format!("unknown model `{other}` (expected tcn or cnn_baseline)"))),
        }
    }
}

/// Builder choice plus the settings it was given; recorded in model files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub kind: ModelKind,
    pub arch: ArchConfig,
}

/// Residual blocks at each configured dilation, then the dense head.
pub fn build_tcn(config: &ArchConfig) -> Result<ModelSpec> {
    if config.dilations.is_empty() {
        return Err(arg_err("a TCN needs at least one residual block"));
    }
    let blocks = config
        .dilations
        .iter()
        .map(|&dilation| LayerSpec::ResidualBlock {
            out_channels: config.channels,
            kernel_size: config.kernel_size,
            dilation,
            dropout_rate: config.block_dropout,
        })
        .collect();
    config.finish(blocks)
}

/// Two undilated convolutions with ReLU, then the same dense head as the TCN.
pub fn build_cnn_baseline(config: &ArchConfig) -> Result<ModelSpec> {
    let conv = LayerSpec::DilatedCausalConv {
        out_channels: config.channels,
        kernel_size: config.kernel_size,
        dilation: 1,
    };
    config.finish(vec![conv, LayerSpec::Relu, conv, LayerSpec::Relu])
}
