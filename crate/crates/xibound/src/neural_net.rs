//! A small fully connected discriminator with hand-rolled backprop and Adam.
//! Everything is `f64`; matrix products go through BLAS via `ndarray::dot`.
//!
//! The network scores a concatenated pair `[u, v] ∈ ℝ^{2d}` with two hidden
//! ReLU layers (256 units each by default) and a scalar linear output.

use ndarray::{Array1, Array2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::RngCore;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 256;

/// One dense layer, weights stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    /// Uniform `±1/sqrt(fan_in)` weights, zero biases.
    fn init(fan_in: usize, fan_out: usize, rng: &mut impl RngCore) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let w = Array2::from_shape_fn((fan_out, fan_in), |_| dist.sample(rng));
        Layer {
            w,
            b: Array1::zeros(fan_out),
        }
    }
}

/// MLP scoring function `s: ℝ^{2d} → ℝ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorNet {
    pub layers: Vec<Layer>,
}

/// Per-layer pre-activations kept from the forward pass for backprop.
pub struct ForwardCache {
    /// Input batch, `n × in_dim`.
    input: Array2<f64>,
    /// Post-activation outputs of each hidden layer, `n × h`.
    hidden: Vec<Array2<f64>>,
}

/// Gradients with the same shapes as the corresponding [`Layer`] fields.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl DiscriminatorNet {
    /// Standard benchmark architecture: `2d → 256 → 256 → 1`.
    pub fn init(d: usize, rng: &mut impl RngCore) -> Result<Self> {
        Self::with_dims(2 * d, &[DEFAULT_HIDDEN, DEFAULT_HIDDEN], rng)
    }

    pub fn with_dims(in_dim: usize, hidden: &[usize], rng: &mut impl RngCore) -> Result<Self> {
        if in_dim == 0 || hidden.contains(&0) {
            return Err(Error::Shape("zero-width layer".into()));
        }
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = in_dim;
        for &h in hidden {
            layers.push(Layer::init(prev, h, rng));
            prev = h;
        }
        layers.push(Layer::init(prev, 1, rng));
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    /// Scores a batch (`n × in_dim`), returning `n` scalars.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        Ok(self.forward_cached(x)?.1)
    }

    /// Forward pass that keeps the activations needed by [`backward`].
    ///
    /// [`backward`]: DiscriminatorNet::backward
    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<(ForwardCache, Array1<f64>)> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, net expects {}",
                x.ncols(),
                self.in_dim()
            )));
        }
        let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len() - 1);
        for layer in &self.layers[..self.layers.len() - 1] {
            let below = hidden.last().unwrap_or(x);
            let mut z = below.dot(&layer.w.t());
            z += &layer.b;
            z.mapv_inplace(|v| v.max(0.0));
            hidden.push(z);
        }
        let out = &self.layers[self.layers.len() - 1];
        let mut s = hidden.last().unwrap_or(x).dot(&out.w.t());
        s += &out.b;
        let scores = s.index_axis(Axis(1), 0).to_owned();
        Ok((
            ForwardCache {
                input: x.clone(),
                hidden,
            },
            scores,
        ))
    }

    /// Backpropagates `dL/ds` (one value per batch row) through the cached
    /// forward pass. For each layer, `dW = Gᵀ·X` and `db = ΣG`; the ReLU
    /// derivative is read off the cached post-activations (`z > 0`).
    pub fn backward(&self, cache: &ForwardCache, dscore: &Array1<f64>) -> Result<Gradients> {
        let n = cache.input.nrows();
        if dscore.len() != n {
            return Err(Error::Shape(format!(
                "gradient has {} entries for a batch of {n}",
                dscore.len()
            )));
        }
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        // Output layer.
        let g = dscore.view().insert_axis(Axis(1)).to_owned(); // n × 1
        let last_hidden = cache.hidden.last().expect("net has a hidden layer");
        let out = self.layers.len() - 1;
        grads.push(Layer {
            w: g.t().dot(last_hidden),
            b: g.sum_axis(Axis(0)),
        });
        // Propagate into the hidden stack.
        let mut g = g.dot(&self.layers[out].w); // n × h
        for l in (0..out).rev() {
            let act = &cache.hidden[l];
            g.zip_mut_with(act, |gi, &zi| {
                if zi <= 0.0 {
                    *gi = 0.0;
                }
            });
            let below: &Array2<f64> = if l == 0 { &cache.input } else { &cache.hidden[l - 1] };
            grads.push(Layer {
                w: g.t().dot(below),
                b: g.sum_axis(Axis(0)),
            });
            if l > 0 {
                g = g.dot(&self.layers[l].w);
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }

    /// Writes the parameters as a plain-text checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "xibound-net v1 layers={}", self.layers.len())?;
        for l in &self.layers {
            writeln!(f, "layer {} {}", l.w.nrows(), l.w.ncols())?;
            for row in l.w.rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(f, "{}", line.join(" "))?;
            }
            let line: Vec<String> = l.b.iter().map(|v| format!("{v:?}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let bad = |msg: &str| Error::Config(format!("checkpoint {path:?}: {msg}"));
        let header = lines.next().ok_or_else(|| bad("empty file"))??;
        let n_layers: usize = header
            .strip_prefix("xibound-net v1 layers=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad header"))?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let shape = lines.next().ok_or_else(|| bad("truncated"))??;
            let dims: Vec<usize> = shape
                .strip_prefix("layer ")
                .map(|s| s.split_whitespace().filter_map(|t| t.parse().ok()).collect())
                .ok_or_else(|| bad("bad layer header"))?;
            let (&rows, &cols) = match dims.as_slice() {
                [r, c] => (r, c),
                _ => return Err(bad("bad layer shape")),
            };
            let mut w = Array2::zeros((rows, cols));
            for r in 0..rows {
                let line = lines.next().ok_or_else(|| bad("truncated weights"))??;
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| bad("bad float")))
                    .collect::<Result<_>>()?;
                if vals.len() != cols {
                    return Err(bad("row width mismatch"));
                }
                for (c, v) in vals.into_iter().enumerate() {
                    w[[r, c]] = v;
                }
            }
            let line = lines.next().ok_or_else(|| bad("truncated biases"))??;
            let b: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad float")))
                .collect::<Result<_>>()?;
            if b.len() != rows {
                return Err(bad("bias length mismatch"));
            }
            layers.push(Layer {
                w,
                b: Array1::from_vec(b),
            });
        }
        if layers.is_empty() {
            return Err(bad("no layers"));
        }
        Ok(Self { layers })
    }
}

/// Adam optimizer state; one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

impl AdamState {
    /// Benchmark defaults: lr 2e-3, β₁ 0.9, β₂ 0.999, ε 1e-8.
    pub fn new(net: &DiscriminatorNet) -> Self {
        Self::with_lr(net, 2e-3)
    }

    pub fn with_lr(net: &DiscriminatorNet, lr: f64) -> Self {
        let zeros = |l: &Layer| Layer {
            w: Array2::zeros(l.w.dim()),
            b: Array1::zeros(l.b.len()),
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: net.layers.iter().map(zeros).collect(),
            v: net.layers.iter().map(zeros).collect(),
        }
    }

    /// One bias-corrected Adam update, descending `grads`.
    pub fn step(&mut self, net: &mut DiscriminatorNet, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers.len() {
            return Err(Error::Shape("gradient/net layer count mismatch".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let scale = self.lr / bc1;
        for ((layer, grad), (m, v)) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            update_tensor(
                layer.w.as_slice_mut().expect("contiguous"),
                grad.w.as_slice().expect("contiguous"),
                m.w.as_slice_mut().expect("contiguous"),
                v.w.as_slice_mut().expect("contiguous"),
                self.beta1,
                self.beta2,
                self.eps,
                scale,
                bc2,
            );
            update_tensor(
                layer.b.as_slice_mut().expect("contiguous"),
                grad.b.as_slice().expect("contiguous"),
                m.b.as_slice_mut().expect("contiguous"),
                v.b.as_slice_mut().expect("contiguous"),
                self.beta1,
                self.beta2,
                self.eps,
                scale,
                bc2,
            );
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn update_tensor(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    beta1: f64,
    beta2: f64,
    eps: f64,
    scale: f64,
    bc2: f64,
) {
    for i in 0..p.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        p[i] -= scale * m[i] / ((v[i] / bc2).sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth_data::derive_rng;

    fn tiny_net(seed: u64) -> DiscriminatorNet {
        DiscriminatorNet::with_dims(4, &[8, 8], &mut derive_rng(seed, 0)).unwrap()
    }

    fn random_batch(n: usize, d: usize, seed: u64) -> Array2<f64> {
        use rand::Rng;
        let mut rng = derive_rng(seed, 1);
        Array2::from_shape_fn((n, d), |_| rng.gen::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn init_shapes_and_bounds() {
        let net = DiscriminatorNet::init(5, &mut derive_rng(3, 0)).unwrap();
        assert_eq!(net.layers.len(), 3);
        assert_eq!(net.layers[0].w.dim(), (256, 10));
        assert_eq!(net.layers[1].w.dim(), (256, 256));
        assert_eq!(net.layers[2].w.dim(), (1, 256));
        let bound = 1.0 / 10f64.sqrt();
        assert!(net.layers[0].w.iter().all(|&w| w.abs() <= bound));
        assert!(net.layers[0].b.iter().all(|&b| b == 0.0));
        assert!(net.params_finite());
    }

    #[test]
    fn forward_matches_manual_relu_mlp() {
        let net = tiny_net(1);
        let x = random_batch(3, 4, 2);
        let s = net.forward(&x).unwrap();
        for i in 0..3 {
            // manual per-row evaluation
            let mut a: Vec<f64> = x.row(i).to_vec();
            for (li, layer) in net.layers.iter().enumerate() {
                let mut next = vec![0.0; layer.w.nrows()];
                for (r, out) in next.iter_mut().enumerate() {
                    let mut acc = layer.b[r];
                    for (c, &ai) in a.iter().enumerate() {
                        acc += layer.w[[r, c]] * ai;
                    }
                    *out = if li + 1 < net.layers.len() { acc.max(0.0) } else { acc };
                }
                a = next;
            }
            assert!((s[i] - a[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut net = tiny_net(5);
        let x = random_batch(6, 4, 6);
        // loss = sum of scores (dL/ds = 1 per row)
        let (cache, _) = net.forward_cached(&x).unwrap();
        let grads = net.backward(&cache, &Array1::ones(6)).unwrap();
        let eps = 1e-6;
        for l in 0..net.layers.len() {
            for &(r, c) in &[(0usize, 0usize), (1, 2)] {
                if r >= net.layers[l].w.nrows() || c >= net.layers[l].w.ncols() {
                    continue;
                }
                let orig = net.layers[l].w[[r, c]];
                net.layers[l].w[[r, c]] = orig + eps;
                let lp: f64 = net.forward(&x).unwrap().sum();
                net.layers[l].w[[r, c]] = orig - eps;
                let lm: f64 = net.forward(&x).unwrap().sum();
                net.layers[l].w[[r, c]] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                assert!(
                    (grads.layers[l].w[[r, c]] - fd).abs() < 1e-5,
                    "layer {l} w[{r},{c}]: analytic {} fd {fd}",
                    grads.layers[l].w[[r, c]]
                );
            }
            let orig = net.layers[l].b[0];
            net.layers[l].b[0] = orig + eps;
            let lp: f64 = net.forward(&x).unwrap().sum();
            net.layers[l].b[0] = orig - eps;
            let lm: f64 = net.forward(&x).unwrap().sum();
            net.layers[l].b[0] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            assert!((grads.layers[l].b[0] - fd).abs() < 1e-5, "layer {l} bias");
        }
    }

    #[test]
    fn adam_descends_a_quadratic_surrogate() {
        // Train the net to output 3.0 on a fixed batch; squared loss must fall.
        let mut net = tiny_net(9);
        let mut opt = AdamState::new(&net);
        let x = random_batch(8, 4, 10);
        let loss = |net: &DiscriminatorNet| -> f64 {
            net.forward(&x).unwrap().mapv(|s| (s - 3.0).powi(2)).mean().unwrap()
        };
        let start = loss(&net);
        for _ in 0..300 {
            let (cache, s) = net.forward_cached(&x).unwrap();
            let d = s.mapv(|si| 2.0 * (si - 3.0) / 8.0);
            let g = net.backward(&cache, &d).unwrap();
            opt.step(&mut net, &g).unwrap();
        }
        let end = loss(&net);
        assert!(end < start * 0.01, "loss {start} -> {end}");
        assert!(net.params_finite());
    }

    #[test]
    fn adam_first_step_size_is_lr() {
        // With bias correction, |Δp| ≈ lr for any nonzero gradient on step 1.
        let mut net = tiny_net(11);
        let before = net.layers[0].w[[0, 0]];
        let mut opt = AdamState::new(&net);
        let x = random_batch(4, 4, 12);
        let (cache, _) = net.forward_cached(&x).unwrap();
        let g = net.backward(&cache, &Array1::ones(4)).unwrap();
        let gw = g.layers[0].w[[0, 0]];
        opt.step(&mut net, &g).unwrap();
        let delta = net.layers[0].w[[0, 0]] - before;
        if gw.abs() > 1e-9 {
            assert!((delta.abs() - 2e-3).abs() < 1e-5, "delta {delta}");
            assert_eq!(delta.signum(), -gw.signum());
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = tiny_net(21);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.txt");
        net.save(&path).unwrap();
        let loaded = DiscriminatorNet::load(&path).unwrap();
        assert_eq!(net, loaded);
        let x = random_batch(5, 4, 22);
        assert_eq!(net.forward(&x).unwrap(), loaded.forward(&x).unwrap());
    }

    #[test]
    fn shape_errors() {
        let net = tiny_net(31);
        assert!(net.forward(&Array2::zeros((3, 5))).is_err());
        let (cache, _) = net.forward_cached(&Array2::zeros((3, 4))).unwrap();
        assert!(net.backward(&cache, &Array1::zeros(2)).is_err());
        assert!(DiscriminatorNet::with_dims(0, &[4], &mut derive_rng(1, 0)).is_err());
    }
}
