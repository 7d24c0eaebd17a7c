use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::conv::{conv2d_backward_into, conv2d_forward, ConvGeometry};
use super::dense::{dropout, dropout_backward, fc_backward_into, fc_forward, relu_backward, relu_forward, softmax_xent, DropoutMode};
use super::init::glorot_uniform;
use super::lrn::{lrn_backward, lrn_forward};
use super::pool::{maxpool_backward, maxpool_forward};
use super::spec::{LayerSpec, NetworkSpec, Width};
use super::{FeatureVector, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::par::Execution;

/// Samples per gradient-accumulation chunk. Fixed so that the reduction
/// order, and therefore the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 4;

/// Weights and bias of one conv or fully connected layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<F> {
    pub weights: Tensor<F>,
    pub bias: Tensor<F>,
}

impl<F: Scalar> Params<F> {
    fn zeros_like(&self) -> Self {
        Params {
            weights: Tensor::zeros(self.weights.shape()),
            bias: Tensor::zeros(self.bias.shape()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    Inference,
    /// Dropout active; masks drawn from a generator seeded with `seed`.
    Train { seed: u64 },
}

/// Instantiated network: a resolved [`NetworkSpec`] plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<F> {
    spec: NetworkSpec,
    params: Vec<Option<Params<F>>>,
    shapes: Vec<Vec<usize>>,
}

/// Parameter gradients, laid out like [`Network::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<Option<Params<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(net: &Network<F>) -> Self {
        Gradients {
            layers: net.params.iter().map(|p| p.as_ref().map(Params::zeros_like)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<F>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                for (x, &y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                    *x += y;
                }
                for (x, &y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                    *x += y;
                }
            }
        }
    }

    pub fn scale(&mut self, k: F) {
        for p in self.layers.iter_mut().flatten() {
            p.weights.data_mut().iter_mut().for_each(|x| *x *= k);
            p.bias.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }
}

/// Per-layer state recorded by a training forward pass.
enum Cache<F> {
    Plain,
    Pool(Vec<usize>),
    Dropout(Option<Vec<F>>),
}

/// Inputs of every layer plus the auxiliary state backward needs.
struct Trace<F> {
    inputs: Vec<Tensor<F>>,
    caches: Vec<Cache<F>>,
}

/// Summed loss, correct-prediction count and summed gradients of a batch.
pub struct BatchOutcome<F> {
    pub loss_sum: f64,
    pub correct: usize,
    pub grads: Gradients<F>,
}

impl<F: Scalar> Network<F> {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: &NetworkSpec, classes: usize, seed: u64) -> Result<Self> {
        let spec = spec.resolve(classes);
        let shapes = spec.activation_shapes(classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_shape = spec.input.to_vec();
        let mut params = Vec::with_capacity(spec.layers.len());
        for (layer, out_shape) in spec.layers.iter().zip(&shapes) {
            params.push(match *layer {
                LayerSpec::Conv {
                    filters,
                    kernel_h,
                    kernel_w,
                    ..
                } => Some(Params {
                    weights: glorot_uniform(&[filters, in_shape[0], kernel_h, kernel_w], &mut rng),
                    bias: Tensor::zeros(&[filters]),
                }),
                LayerSpec::Fc(_) => {
                    let fan_in = in_shape.iter().product();
                    Some(Params {
                        weights: glorot_uniform(&[out_shape[0], fan_in], &mut rng),
                        bias: Tensor::zeros(&[out_shape[0]]),
                    })
                }
                _ => None,
            });
            in_shape = out_shape.clone();
        }
        Ok(Network { spec, params, shapes })
    }

    /// Assembles a network from a resolved spec and matching parameters.
    pub fn from_parts(spec: NetworkSpec, params: Vec<Option<Params<F>>>) -> Result<Self> {
        if spec.layers.iter().any(|l| matches!(l, LayerSpec::Fc(Width::Classes))) {
            return Err(Error::config("network spec must be resolved before loading parameters"));
        }
        let classes = match spec.layers.get(spec.classifier_index().unwrap_or(0)) {
            Some(LayerSpec::Fc(Width::Units(u))) => *u,
            _ => return Err(Error::config("network has no classifier layer")),
        };
        let shapes = spec.activation_shapes(classes)?;
        if params.len() != spec.layers.len() {
            return Err(Error::shape(format!(
                "{} parameter slots for {} layers",
                params.len(),
                spec.layers.len()
            )));
        }
        let net = Network { spec, params, shapes };
        let fresh = Network::<F>::new(&net.spec, classes, 0)?;
        for (i, (a, b)) in net.params.iter().zip(&fresh.params).enumerate() {
            let ok = match (a, b) {
                (None, None) => true,
                (Some(a), Some(b)) => a.weights.shape() == b.weights.shape() && a.bias.shape() == b.bias.shape(),
                _ => false,
            };
            if !ok {
                return Err(Error::shape(format!("layer {i}: parameter shapes do not match the network spec")));
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Option<Params<F>>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<Params<F>>] {
        &mut self.params
    }

    /// Activation shape after each layer.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn classes(&self) -> usize {
        self.shapes.last().map_or(0, |s| s[0])
    }

    fn classifier_index(&self) -> usize {
        self.spec.classifier_index().expect("validated spec has a classifier")
    }

    /// Length of the feature vector: the input width of the classifier.
    pub fn feature_len(&self) -> usize {
        let i = self.classifier_index();
        if i == 0 {
            self.spec.input.iter().product()
        } else {
            self.shapes[i - 1].iter().product()
        }
    }

    pub fn cast<G: Scalar>(&self) -> Network<G> {
        Network {
            spec: self.spec.clone(),
            params: self
                .params
                .iter()
                .map(|p| {
                    p.as_ref().map(|p| Params {
                        weights: p.weights.cast(),
                        bias: p.bias.cast(),
                    })
                })
                .collect(),
            shapes: self.shapes.clone(),
        }
    }

    fn check_input(&self, input: &Tensor<F>) -> Result<()> {
        if input.shape() != self.spec.input {
            return Err(Error::shape(format!(
                "network expects input {:?}, got {:?}",
                self.spec.input,
                input.shape()
            )));
        }
        Ok(())
    }

    /// Runs layers `0..end`, optionally recording a trace for backward.
    fn run(&self, input: &Tensor<F>, end: usize, mode: ForwardMode, mut trace: Option<&mut Trace<F>>) -> Result<Tensor<F>> {
        self.check_input(input)?;
        let (drop_mode, seed) = match mode {
            ForwardMode::Inference => (DropoutMode::Inference, 0),
            ForwardMode::Train { seed } => (DropoutMode::Train, seed),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = input.clone();
        for (i, layer) in self.spec.layers[..end].iter().enumerate() {
            let params = self.params[i].as_ref();
            let (y, cache) = match *layer {
                LayerSpec::Conv { stride, pad, .. } => {
                    let p = params.expect("conv layer has params");
                    (conv2d_forward(&x, &p.weights, &p.bias, ConvGeometry { stride, pad })?, Cache::Plain)
                }
                LayerSpec::Lrn(lp) => (lrn_forward(&x, &lp)?, Cache::Plain),
                LayerSpec::MaxPool(g) => {
                    let (y, arg) = maxpool_forward(&x, g)?;
                    (y, Cache::Pool(arg))
                }
                LayerSpec::Fc(_) => {
                    let p = params.expect("fc layer has params");
                    (fc_forward(&x, &p.weights, &p.bias)?, Cache::Plain)
                }
                LayerSpec::Relu => (relu_forward(&x), Cache::Plain),
                LayerSpec::Dropout(p) => {
                    let (y, mask) = dropout(&x, p, drop_mode, &mut rng)?;
                    (y, Cache::Dropout(mask))
                }
                // the loss applies softmax to the logits
                LayerSpec::Softmax => (x.clone(), Cache::Plain),
            };
            debug_assert!(y.all_finite(), "non-finite activation after layer {i} ({})", layer.kind());
            if let Some(t) = trace.as_deref_mut() {
                t.inputs.push(std::mem::replace(&mut x, y));
                t.caches.push(cache);
            } else {
                x = y;
            }
        }
        Ok(x)
    }

    /// Logits (pre-softmax outputs) for one input.
    pub fn forward(&self, input: &Tensor<F>, mode: ForwardMode) -> Result<Tensor<F>> {
        self.run(input, self.spec.layers.len(), mode, None)
    }

    /// Class probabilities at inference.
    pub fn predict_proba(&self, input: &Tensor<F>) -> Result<Vec<F>> {
        Ok(super::dense::softmax(self.forward(input, ForwardMode::Inference)?.data()))
    }

    /// Inference-mode activations entering the classifier layer, i.e. the
    /// output of the last hidden layer.
    pub fn extract_features(&self, input: &Tensor<F>) -> Result<FeatureVector> {
        let x = self.run(input, self.classifier_index(), ForwardMode::Inference, None)?;
        Ok(FeatureVector(x.data().iter().map(|v| v.as_f64() as f32).collect()))
    }

    pub fn extract_features_batch(&self, inputs: &[Tensor<F>], exec: Execution) -> Result<Vec<FeatureVector>> {
        exec.map(inputs, |x| self.extract_features(x)).into_iter().collect()
    }

    fn backward_into(&self, trace: &Trace<F>, grad_logits: Tensor<F>, grads: &mut Gradients<F>) -> Result<()> {
        let mut g = grad_logits;
        for i in (0..self.spec.layers.len()).rev() {
            let x = &trace.inputs[i];
            let need_input = i > 0;
            g = match (&self.spec.layers[i], &trace.caches[i]) {
                (LayerSpec::Softmax, _) => g,
                (LayerSpec::Conv { stride, pad, .. }, _) => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let gp = grads.layers[i].as_mut().expect("conv grads");
                    let geometry = ConvGeometry { stride: *stride, pad: *pad };
                    match conv2d_backward_into(&g, x, &p.weights, &p.bias, geometry, gp.weights.data_mut(), gp.bias.data_mut(), need_input)? {
                        Some(gi) => gi,
                        None => return Ok(()),
                    }
                }
                (LayerSpec::Fc(_), _) => {
                    let p = self.params[i].as_ref().expect("fc params");
                    let gp = grads.layers[i].as_mut().expect("fc grads");
                    match fc_backward_into(&g, x, &p.weights, &p.bias, gp.weights.data_mut(), gp.bias.data_mut(), need_input)? {
                        Some(gi) => gi,
                        None => return Ok(()),
                    }
                }
                (LayerSpec::Lrn(lp), _) => lrn_backward(&g, x, lp)?,
                (LayerSpec::MaxPool(_), Cache::Pool(arg)) => maxpool_backward(&g, arg, x.shape())?,
                (LayerSpec::Relu, _) => relu_backward(&g, x)?,
                (LayerSpec::Dropout(_), Cache::Dropout(mask)) => dropout_backward(&g, mask.as_deref()),
                (layer, _) => unreachable!("cache mismatch for {}", layer.kind()),
            };
        }
        Ok(())
    }

    /// Cross-entropy loss of one sample and its parameter gradients, added
    /// into `grads`. Returns `(loss, predicted_class)`.
    pub fn accumulate_sample(
        &self,
        input: &Tensor<F>,
        label: usize,
        mode: ForwardMode,
        grads: &mut Gradients<F>,
    ) -> Result<(f64, usize)> {
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.spec.layers.len()),
            caches: Vec::with_capacity(self.spec.layers.len()),
        };
        let logits = self.run(input, self.spec.layers.len(), mode, Some(&mut trace))?;
        let (loss, grad) = softmax_xent(logits.data(), label)?;
        let predicted = argmax(logits.data());
        self.backward_into(&trace, Tensor::from_vec(logits.shape(), grad)?, grads)?;
        Ok((loss.as_f64(), predicted))
    }

    /// Summed loss and gradients over a batch in training mode. `seeds[i]`
    /// drives the dropout masks of sample `i`.
    pub fn batch_gradients(
        &self,
        inputs: &[&Tensor<F>],
        labels: &[usize],
        seeds: &[u64],
        exec: Execution,
    ) -> Result<BatchOutcome<F>> {
        if inputs.len() != labels.len() || inputs.len() != seeds.len() {
            return Err(Error::shape("inputs, labels and seeds must have equal length"));
        }
        let idx: Vec<usize> = (0..inputs.len()).collect();
        let partials = exec.map_chunks(&idx, GRAD_CHUNK, |chunk| -> Result<BatchOutcome<F>> {
            let mut out = BatchOutcome {
                loss_sum: 0.0,
                correct: 0,
                grads: Gradients::zeros_like(self),
            };
            for &i in chunk {
                let (loss, pred) =
                    self.accumulate_sample(inputs[i], labels[i], ForwardMode::Train { seed: seeds[i] }, &mut out.grads)?;
                out.loss_sum += loss;
                out.correct += (pred == labels[i]) as usize;
            }
            Ok(out)
        });
        let mut total = BatchOutcome {
            loss_sum: 0.0,
            correct: 0,
            grads: Gradients::zeros_like(self),
        };
        for p in partials {
            let p = p?;
            total.loss_sum += p.loss_sum;
            total.correct += p.correct;
            total.grads.add_assign(&p.grads);
        }
        Ok(total)
    }

    /// Mean inference-mode loss and accuracy.
    pub fn evaluate(&self, inputs: &[&Tensor<F>], labels: &[usize], exec: Execution) -> Result<(f64, f64)> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::config("evaluation needs a nonempty, labelled set"));
        }
        let idx: Vec<usize> = (0..inputs.len()).collect();
        let per = exec.map(&idx, |&i| -> Result<(f64, bool)> {
            let logits = self.forward(inputs[i], ForwardMode::Inference)?;
            let (loss, _) = softmax_xent(logits.data(), labels[i])?;
            Ok((loss.as_f64(), argmax(logits.data()) == labels[i]))
        });
        let (mut loss, mut correct) = (0.0, 0usize);
        for r in per {
            let (l, c) = r?;
            loss += l;
            correct += c as usize;
        }
        let n = inputs.len() as f64;
        Ok((loss / n, correct as f64 / n))
    }
}

fn argmax<F: Scalar>(v: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
