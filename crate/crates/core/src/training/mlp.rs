use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{dot, FeatureMatrix, FeatureVector, Matrix};

/// Fully connected layer, `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn uniform(rng: &mut impl Rng, input: usize, output: usize) -> Layer {
        let r = 1.0 / (input as f64).sqrt();
        let weight = (0..input * output)
            .map(|_| rng.random_range(-r..=r))
            .collect();
        let bias = (0..output).map(|_| rng.random_range(-r..=r)).collect();
        Layer {
            weight: Matrix::from_vec(output, input, weight).expect("finite init"),
            bias,
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }
}

/// Feed-forward embedding network with rectifiers between layers and a
/// linear output, optionally scaled to unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMap {
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub normalize: bool,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input of each layer (post-rectifier for hidden layers).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Unit output and the norm it was divided by, when normalizing.
    unit: Option<(Vec<f64>, f64)>,
}

fn unit(z: Vec<f64>) -> (Vec<f64>, f64) {
    let n = dot(&z, &z).sqrt();
    if n > 0.0 {
        (z.into_iter().map(|v| v / n).collect(), n)
    } else {
        (z, 0.0)
    }
}

impl EmbeddingMap {
    /// `hidden` rectified layers of width `width`, then a linear projection
    /// to `output`. Weights are uniform in `±1/sqrt(fan_in)`.
    pub fn new(
        rng: &mut impl Rng,
        input: usize,
        hidden: usize,
        width: usize,
        output: usize,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden + 1);
        let mut fan_in = input;
        for _ in 0..hidden {
            layers.push(Layer::uniform(rng, fan_in, width));
            fan_in = width;
        }
        layers.push(Layer::uniform(rng, fan_in, output));
        EmbeddingMap {
            layers,
            normalize: false,
        }
    }

    pub fn normalized(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .last()
            .expect("at least one layer")
            .weight
            .rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if l < last {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        if self.normalize {
            h = unit(h).0;
        }
        h
    }

    pub fn forward_traced(&self, x: &[f64]) -> (Vec<f64>, Trace) {
        let last = self.layers.len() - 1;
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
            unit: None,
        };
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            trace.inputs.push(h);
            h = if l < last {
                let a = z.iter().map(|v| v.max(0.0)).collect();
                trace.pre.push(z);
                a
            } else {
                z
            };
        }
        if self.normalize {
            let (u, n) = unit(h);
            trace.unit = Some((u.clone(), n));
            h = u;
        }
        (h, trace)
    }

    /// Accumulates parameter gradients for `d loss / d output = grad_out`.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut EmbeddingMap) {
        let mut g = match &trace.unit {
            Some((u, n)) if *n > 0.0 => {
                let along = dot(u, grad_out);
                grad_out
                    .iter()
                    .zip(u)
                    .map(|(g, u)| (g - along * u) / n)
                    .collect()
            }
            _ => grad_out.to_vec(),
        };
        for l in (0..self.layers.len()).rev() {
            let input = &trace.inputs[l];
            let gl = &mut grads.layers[l];
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                gl.bias[o] += go;
                for (w, x) in gl.weight.row_mut(o).iter_mut().zip(input) {
                    *w += go * x;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.layers[l].weight;
            let pre = &trace.pre[l - 1];
            g = (0..w.cols())
                .map(|c| {
                    // rectifier subgradient is 0 at the kink
                    if pre[c] > 0.0 {
                        (0..w.rows()).map(|o| g[o] * w.get(o, c)).sum()
                    } else {
                        0.0
                    }
                })
                .collect();
        }
    }

    /// Same shape, all zeros.
    pub fn zeros_like(&self) -> EmbeddingMap {
        EmbeddingMap {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            normalize: self.normalize,
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    /// Applies every row of `x` through the map.
    pub fn forward_rows(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.rows() > 0 && x.cols() != self.input_dim() {
            return Err(Error::Compatibility(format!(
                "features have dim {}, embedding expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let rows: Vec<Vec<f64>> = x.iter_rows().map(|r| self.forward(r)).collect();
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, self.output_dim()));
        }
        Matrix::from_rows(&rows)
    }

    pub fn embed(&self, f: &FeatureVector) -> Result<FeatureVector> {
        if f.dim() != self.input_dim() {
            return Err(Error::Compatibility(format!(
                "feature has dim {}, embedding expects {}",
                f.dim(),
                self.input_dim()
            )));
        }
        FeatureVector::new(self.forward(f.as_slice()))
    }

    /// Shape check used when loading parameters from disk.
    pub(crate) fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("embedding map has no layers"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.weight.as_slice().len() != layer.weight.rows() * layer.weight.cols() {
                return Err(Error::invalid(format!("layer {l}: weight size mismatch")));
            }
            if layer.bias.len() != layer.weight.rows() {
                return Err(Error::invalid(format!("layer {l}: bias length mismatch")));
            }
            if l > 0 && layer.weight.cols() != self.layers[l - 1].weight.rows() {
                return Err(Error::invalid(format!("layer {l}: input width mismatch")));
            }
        }
        if !self.is_finite() {
            return Err(Error::invalid("embedding map has non-finite parameters"));
        }
        Ok(())
    }
}
