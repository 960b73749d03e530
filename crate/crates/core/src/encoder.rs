//! Small MLP encoder producing unit-norm embeddings, with exact analytic
//! gradients and a plain SGD optimizer.
//!
//! Hidden layers use ReLU; the final linear output is L2-normalized row-wise,
//! and the normalization Jacobian is part of the backward pass. The normalized
//! output doubles as the projection features used for clustering.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{ColtError, Result};
use crate::numkit::{row_normalize, Matrix, RngStream};

/// One dense layer; `weights` is `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// All encoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

/// Parameter gradients, with the same shapes as [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// He-style uniform fan-in initialization, biases zero. Each layer draws
    /// from its own named substream.
    pub fn init(sizes: &[usize], rng: &RngStream) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(ColtError::Parameter(
                "encoder needs at least input and output sizes".to_string(),
            ));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(ColtError::Parameter(
                "encoder layer sizes must be positive".to_string(),
            ));
        }
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let mut s = rng.substream_indexed("init", l as u64);
                let data: Vec<f64> = (0..fan_in * fan_out)
                    .map(|_| (s.next_f64() * 2.0 - 1.0) * limit)
                    .collect();
                Layer {
                    weights: Matrix::from_vec(fan_in, fan_out, data).expect("shape by construction"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        for w in layers.windows(2) {
            if w[0].weights.cols() != w[1].weights.rows() {
                return Err(ColtError::Parameter(
                    "layer shapes do not chain".to_string(),
                ));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.cols() {
                return Err(ColtError::Parameter(format!(
                    "layer {} bias length {} does not match fan-out {}",
                    i,
                    l.bias.len(),
                    l.weights.cols()
                )));
            }
        }
        if layers.is_empty() {
            return Err(ColtError::Parameter("encoder has no layers".to_string()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_mut(&mut self, index: usize) -> &mut Layer {
        &mut self.layers[index]
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.cols()
    }

    /// Layer size chain `[d_in, hidden.., d_out]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.weights.cols()));
        sizes
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows() * l.weights.cols() + l.bias.len())
            .sum()
    }
}

/// Cached activations from one forward call, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: Matrix,
    /// Pre-activations per layer.
    pre_acts: Vec<Matrix>,
    /// ReLU outputs for all but the last layer.
    hidden_acts: Vec<Matrix>,
    /// Row norms of the final pre-normalization output.
    norms: Vec<f64>,
    embeddings: Matrix,
}

/// Runs the encoder on a batch (rows are samples), returning unit-norm
/// embeddings and the trace needed for the backward pass.
pub fn forward(params: &MlpParams, batch: &Matrix) -> Result<(Matrix, ForwardTrace)> {
    if batch.cols() != params.input_dim() {
        return Err(ColtError::Parameter(format!(
            "batch has {} columns, encoder expects {}",
            batch.cols(),
            params.input_dim()
        )));
    }
    let num_layers = params.layers.len();
    let mut pre_acts = Vec::with_capacity(num_layers);
    let mut hidden_acts = Vec::with_capacity(num_layers.saturating_sub(1));
    let mut current = batch.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = current.matmul(&layer.weights);
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        pre_acts.push(z.clone());
        if l + 1 < num_layers {
            let mut h = z;
            for i in 0..h.rows() {
                for v in h.row_mut(i) {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            hidden_acts.push(h.clone());
            current = h;
        } else {
            current = z;
        }
    }
    let norms = current.row_norms();
    let embeddings = row_normalize(&current)?;
    let trace = ForwardTrace {
        input: batch.clone(),
        pre_acts,
        hidden_acts,
        norms,
        embeddings: embeddings.clone(),
    };
    Ok((embeddings, trace))
}

/// Backpropagates `grad_embeddings` (dL/d-embedding) through the normalization
/// layer and the MLP, returning gradients for every parameter.
pub fn backward(params: &MlpParams, trace: &ForwardTrace, grad_embeddings: &Matrix) -> Result<MlpGrads> {
    let num_layers = params.layers.len();
    if trace.pre_acts.len() != num_layers
        || trace.input.cols() != params.input_dim()
        || trace.embeddings.cols() != params.output_dim()
        || trace
            .pre_acts
            .iter()
            .zip(&params.layers)
            .any(|(pre, layer)| pre.cols() != layer.weights.cols())
    {
        return Err(ColtError::Contract(
            "forward trace does not match encoder parameters".to_string(),
        ));
    }
    if grad_embeddings.rows() != trace.embeddings.rows()
        || grad_embeddings.cols() != trace.embeddings.cols()
    {
        return Err(ColtError::Contract(
            "gradient shape does not match trace embeddings".to_string(),
        ));
    }

    // Jacobian of y = v / ||v||: dv = (g - (g . y) y) / ||v||
    let mut delta = Matrix::zeros(grad_embeddings.rows(), grad_embeddings.cols());
    for i in 0..delta.rows() {
        let g = grad_embeddings.row(i);
        let y = trace.embeddings.row(i);
        let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
        let norm = trace.norms[i];
        for (j, d) in delta.row_mut(i).iter_mut().enumerate() {
            *d = (g[j] - dot * y[j]) / norm;
        }
    }

    let mut grads: Vec<Layer> = params
        .layers
        .iter()
        .map(|l| Layer {
            weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
            bias: vec![0.0; l.bias.len()],
        })
        .collect();

    for l in (0..num_layers).rev() {
        let input_act = if l == 0 {
            &trace.input
        } else {
            &trace.hidden_acts[l - 1]
        };
        grads[l].weights = input_act.transpose_matmul(&delta);
        for i in 0..delta.rows() {
            for (b, d) in grads[l].bias.iter_mut().zip(delta.row(i)) {
                *b += d;
            }
        }
        if l > 0 {
            let mut prev = delta.matmul_transpose(&params.layers[l].weights);
            // transpose convention: delta * W^T where W is fan_in x fan_out
            debug_assert_eq!(prev.cols(), params.layers[l].weights.rows());
            let pre = &trace.pre_acts[l - 1];
            for i in 0..prev.rows() {
                for (v, z) in prev.row_mut(i).iter_mut().zip(pre.row(i)) {
                    if *z <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            delta = prev;
        }
    }

    Ok(MlpGrads { layers: grads })
}

/// One SGD step: `p <- p - lr * (g + weight_decay * p)`.
pub fn sgd_step(mut params: MlpParams, grads: &MlpGrads, lr: f64, weight_decay: f64) -> MlpParams {
    assert!(lr >= 0.0, "learning rate must be >= 0");
    for (layer, grad) in params.layers.iter_mut().zip(&grads.layers) {
        let rows = layer.weights.rows();
        for i in 0..rows {
            for (p, g) in layer.weights.row_mut(i).iter_mut().zip(grad.weights.row(i)) {
                *p -= lr * (g + weight_decay * *p);
            }
        }
        for (p, g) in layer.bias.iter_mut().zip(&grad.bias) {
            *p -= lr * (g + weight_decay * *p);
        }
    }
    params
}

const CHECKPOINT_MAGIC: &str = "COLT-MLP-CHECKPOINT v1";

/// Writes parameters as a versioned text dump that round-trips bit-exactly
/// (f64 values serialized as hexadecimal bit patterns).
pub fn save_checkpoint<P: AsRef<Path>>(params: &MlpParams, path: P) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(out, "{}", CHECKPOINT_MAGIC)?;
    let sizes: Vec<String> = params.sizes().iter().map(|s| s.to_string()).collect();
    writeln!(out, "sizes {}", sizes.join(" "))?;
    for (l, layer) in params.layers.iter().enumerate() {
        writeln!(out, "layer {}", l)?;
        for i in 0..layer.weights.rows() {
            let row: Vec<String> = layer
                .weights
                .row(i)
                .iter()
                .map(|v| format!("{:016x}", v.to_bits()))
                .collect();
            writeln!(out, "w {}", row.join(" "))?;
        }
        let bias: Vec<String> = layer
            .bias
            .iter()
            .map(|v| format!("{:016x}", v.to_bits()))
            .collect();
        writeln!(out, "b {}", bias.join(" "))?;
    }
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<MlpParams> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        lines
            .next()
            .ok_or_else(|| ColtError::Parse {
                line: 0,
                message: format!("unexpected end of checkpoint, expected {}", expect),
            })
            .and_then(|(i, l)| Ok((i + 1, l?)))
    };

    let (_, magic) = next_line("magic header")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(ColtError::Parse {
            line: 1,
            message: format!("unsupported checkpoint header '{}'", magic),
        });
    }
    let (line_no, sizes_line) = next_line("sizes")?;
    let sizes: Vec<usize> = sizes_line
        .strip_prefix("sizes ")
        .ok_or_else(|| ColtError::Parse {
            line: line_no,
            message: "expected sizes line".to_string(),
        })?
        .split_whitespace()
        .map(|t| {
            t.parse().map_err(|_| ColtError::Parse {
                line: line_no,
                message: format!("bad size '{}'", t),
            })
        })
        .collect::<Result<_>>()?;
    if sizes.len() < 2 {
        return Err(ColtError::Parse {
            line: line_no,
            message: "checkpoint must contain at least two sizes".to_string(),
        });
    }

    let parse_bits = |line_no: usize, tokens: &str, expected: usize| -> Result<Vec<f64>> {
        let values: Vec<f64> = tokens
            .split_whitespace()
            .map(|t| {
                u64::from_str_radix(t, 16)
                    .map(f64::from_bits)
                    .map_err(|_| ColtError::Parse {
                        line: line_no,
                        message: format!("bad hex value '{}'", t),
                    })
            })
            .collect::<Result<_>>()?;
        if values.len() != expected {
            return Err(ColtError::Parse {
                line: line_no,
                message: format!("expected {} values, got {}", expected, values.len()),
            });
        }
        Ok(values)
    };

    let mut layers = Vec::new();
    for l in 0..sizes.len() - 1 {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let (line_no, header) = next_line("layer header")?;
        if header != format!("layer {}", l) {
            return Err(ColtError::Parse {
                line: line_no,
                message: format!("expected 'layer {}', got '{}'", l, header),
            });
        }
        let mut data = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in {
            let (line_no, row) = next_line("weight row")?;
            let row = row.strip_prefix("w ").ok_or_else(|| ColtError::Parse {
                line: line_no,
                message: "expected weight row".to_string(),
            })?;
            data.extend(parse_bits(line_no, row, fan_out)?);
        }
        let (line_no, bias_line) = next_line("bias row")?;
        let bias_line = bias_line
            .strip_prefix("b ")
            .ok_or_else(|| ColtError::Parse {
                line: line_no,
                message: "expected bias row".to_string(),
            })?;
        let bias = parse_bits(line_no, bias_line, fan_out)?;
        layers.push(Layer {
            weights: Matrix::from_vec(fan_in, fan_out, data).map_err(|e| ColtError::Parse {
                line: line_no,
                message: e.to_string(),
            })?,
            bias,
        });
    }
    MlpParams::from_layers(layers)
}
