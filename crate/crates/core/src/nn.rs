//! Minimal MLP function approximator: explicit forward pass, reverse-mode
//! gradients, an Adam optimizer and a time-delayed target copy.
//!
//! Networks are flat parameter vectors with a shape map, so optimizer state,
//! soft updates and checkpointing all operate on plain slices. Output heads
//! project slices of the final pre-activation: `Simplex` heads emit a
//! probability vector via softmax and `UnitInterval` heads squash into
//! `[0, hi]`, which makes downstream action constraints hold by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input length {got} does not match first layer size {want}")]
    InputLength { got: usize, want: usize },
    #[error("upstream length {got} does not match output width {want}")]
    UpstreamLength { got: usize, want: usize },
    #[error("gradient length {got} does not match parameter count {want}")]
    GradientLength { got: usize, want: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("soft-update epsilon {0} outside [0, 1]")]
    EpsilonOutOfRange(f64),
    #[error("invalid network spec: {0}")]
    InvalidSpec(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HiddenActivation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeadActivation {
    /// Identity.
    Linear,
    /// Softmax over the head slice; output is a probability vector.
    Simplex,
    /// Sigmoid scaled to `[0, hi]`.
    UnitInterval { hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub width: usize,
    pub activation: HeadActivation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub heads: Vec<Head>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, hidden_activation: HiddenActivation, heads: Vec<Head>) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 {
            return Err(NnError::InvalidSpec("at least two layers required"));
        }
        if layer_sizes.contains(&0) {
            return Err(NnError::InvalidSpec("layer sizes must be positive"));
        }
        if heads.is_empty() {
            return Err(NnError::InvalidSpec("at least one output head required"));
        }
        if heads.iter().any(|h| h.width == 0) {
            return Err(NnError::InvalidSpec("head widths must be positive"));
        }
        let head_sum: usize = heads.iter().map(|h| h.width).sum();
        if head_sum != *layer_sizes.last().unwrap() {
            return Err(NnError::InvalidSpec("head widths must sum to the final layer width"));
        }
        Ok(Self { layer_sizes, hidden_activation, heads })
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig<R: Real> {
    pub learning_rate: R,
    pub beta1: R,
    pub beta2: R,
    pub epsilon: R,
}

impl<R: Real> AdamConfig<R> {
    pub fn with_learning_rate(learning_rate: R) -> Self {
        Self {
            learning_rate,
            beta1: R::real(0.9),
            beta2: R::real(0.999),
            epsilon: R::real(1e-8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepDirection {
    Descend,
    Ascend,
}

/// Gradient of `upstream . output` with respect to parameters and input.
#[derive(Debug, Clone)]
pub struct Gradient<R: Real> {
    pub params: Vec<R>,
    pub input: Vec<R>,
}

/// MLP with optimizer state and a target copy of its parameters.
///
/// Parameter layout per affine layer `l`: weight matrix (rows = out,
/// row-major) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet<R: Real> {
    spec: MlpSpec,
    params: Vec<R>,
    target: Vec<R>,
    moment1: Vec<R>,
    moment2: Vec<R>,
    steps: u64,
}

impl<R: Real> MlpNet<R> {
    /// Fresh network: scaled-uniform weights, zero biases, target == online.
    pub fn init(spec: MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = spec.param_count();
        let mut params = vec![R::zero(); n];
        let mut offset = 0;
        for w in spec.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in params[offset..offset + fan_in * fan_out].iter_mut() {
                *p = R::real(rng.gen_range(-bound..bound));
            }
            offset += fan_in * fan_out + fan_out; // biases stay zero
        }
        let target = params.clone();
        Self { spec, moment1: vec![R::zero(); n], moment2: vec![R::zero(); n], params, target, steps: 0 }
    }

    /// Rebuilds a network from checkpointed parameter vectors.
    pub fn from_parts(spec: MlpSpec, params: Vec<R>, target: Vec<R>) -> Result<Self, NnError> {
        let n = spec.param_count();
        if params.len() != n || target.len() != n {
            return Err(NnError::GradientLength { got: params.len(), want: n });
        }
        Ok(Self { spec, moment1: vec![R::zero(); n], moment2: vec![R::zero(); n], params, target, steps: 0 })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[R] {
        &self.params
    }

    pub fn target_params(&self) -> &[R] {
        &self.target
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.steps
    }

    /// Online forward pass; output is head-structured.
    pub fn forward(&self, input: &[R]) -> Result<Vec<R>, NnError> {
        let preact = final_preactivation(&self.spec, &self.params, input)?;
        Ok(apply_heads(&self.spec, &preact))
    }

    /// Forward pass on the target parameters.
    pub fn forward_target(&self, input: &[R]) -> Result<Vec<R>, NnError> {
        let preact = final_preactivation(&self.spec, &self.target, input)?;
        Ok(apply_heads(&self.spec, &preact))
    }

    /// Forward pass with Gaussian exploration noise added to the final
    /// pre-activation, so head projections keep the output feasible.
    pub fn forward_noisy<G: Rng>(&self, input: &[R], noise_scale: R, rng: &mut G) -> Result<Vec<R>, NnError> {
        let mut preact = final_preactivation(&self.spec, &self.params, input)?;
        if noise_scale > R::zero() {
            for z in preact.iter_mut() {
                let draw: f64 = rng.sample(rand_distr::StandardNormal);
                *z += noise_scale * R::real(draw);
            }
        }
        Ok(apply_heads(&self.spec, &preact))
    }

    /// Reverse-mode gradient of `upstream . output` w.r.t. all parameters
    /// and the input.
    pub fn gradient(&self, input: &[R], upstream: &[R]) -> Result<Gradient<R>, NnError> {
        let (params, input) = backprop(&self.spec, &self.params, input, upstream, true)?;
        Ok(Gradient { params: params.unwrap(), input })
    }

    /// Gradient w.r.t. the input only; skips parameter accumulation.
    pub fn input_gradient(&self, input: &[R], upstream: &[R]) -> Result<Vec<R>, NnError> {
        let (_, input) = backprop(&self.spec, &self.params, input, upstream, false)?;
        Ok(input)
    }

    /// One bias-corrected Adam update in the requested direction.
    pub fn adam_step(&mut self, grad: &[R], cfg: &AdamConfig<R>, direction: StepDirection) -> Result<(), NnError> {
        if grad.len() != self.params.len() {
            return Err(NnError::GradientLength { got: grad.len(), want: self.params.len() });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient);
        }
        self.steps += 1;
        let t = self.steps as i32;
        let bias1 = R::one() - cfg.beta1.powi(t);
        let bias2 = R::one() - cfg.beta2.powi(t);
        let sign = match direction {
            StepDirection::Descend => -R::one(),
            StepDirection::Ascend => R::one(),
        };
        for (((p, g), m), v) in self
            .params
            .iter_mut()
            .zip(grad.iter())
            .zip(self.moment1.iter_mut())
            .zip(self.moment2.iter_mut())
        {
            *m = cfg.beta1 * *m + (R::one() - cfg.beta1) * *g;
            *v = cfg.beta2 * *v + (R::one() - cfg.beta2) * *g * *g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p += sign * cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        Ok(())
    }

    /// Polyak step of the target toward the online parameters.
    pub fn soft_update(&mut self, epsilon: R) -> Result<(), NnError> {
        if !(epsilon >= R::zero() && epsilon <= R::one()) {
            return Err(NnError::EpsilonOutOfRange(epsilon.as_f64()));
        }
        for (t, p) in self.target.iter_mut().zip(self.params.iter()) {
            *t = (R::one() - epsilon) * *t + epsilon * *p;
        }
        Ok(())
    }
}

fn activate<R: Real>(kind: HiddenActivation, z: R) -> R {
    match kind {
        HiddenActivation::Relu => z.max(R::zero()),
        HiddenActivation::Tanh => z.tanh(),
    }
}

fn activate_grad<R: Real>(kind: HiddenActivation, z: R) -> R {
    match kind {
        HiddenActivation::Relu => {
            if z > R::zero() {
                R::one()
            } else {
                R::zero()
            }
        }
        HiddenActivation::Tanh => {
            let t = z.tanh();
            R::one() - t * t
        }
    }
}

fn check_input<R: Real>(spec: &MlpSpec, input: &[R]) -> Result<(), NnError> {
    if input.len() != spec.input_width() {
        return Err(NnError::InputLength { got: input.len(), want: spec.input_width() });
    }
    Ok(())
}

/// Affine/activation stack up to (and including) the final pre-activation.
fn final_preactivation<R: Real>(spec: &MlpSpec, params: &[R], input: &[R]) -> Result<Vec<R>, NnError> {
    check_input(spec, input)?;
    let mut h = input.to_vec();
    let mut offset = 0;
    let last = spec.layer_sizes.len() - 2;
    for (l, w) in spec.layer_sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &params[offset..offset + n_in * n_out];
        let biases = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        let mut z = vec![R::zero(); n_out];
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &weights[o * n_in..(o + 1) * n_in];
            let mut acc = biases[o];
            for (wv, hv) in row.iter().zip(h.iter()) {
                acc += *wv * *hv;
            }
            *zo = acc;
        }
        if l < last {
            for zv in z.iter_mut() {
                *zv = activate(spec.hidden_activation, *zv);
            }
        }
        h = z;
        offset += n_in * n_out + n_out;
    }
    Ok(h)
}

/// Head projections over slices of the final pre-activation.
pub(crate) fn apply_heads<R: Real>(spec: &MlpSpec, preact: &[R]) -> Vec<R> {
    let mut out = Vec::with_capacity(preact.len());
    let mut start = 0;
    for head in &spec.heads {
        let slice = &preact[start..start + head.width];
        match head.activation {
            HeadActivation::Linear => out.extend_from_slice(slice),
            HeadActivation::Simplex => {
                let max = slice.iter().cloned().fold(R::neg_infinity(), R::max);
                let exps: Vec<R> = slice.iter().map(|&z| (z - max).exp()).collect();
                let sum: R = exps.iter().cloned().sum();
                out.extend(exps.into_iter().map(|e| e / sum));
            }
            HeadActivation::UnitInterval { hi } => {
                let hi = R::real(hi);
                out.extend(slice.iter().map(|&z| hi / (R::one() + (-z).exp())));
            }
        }
        start += head.width;
    }
    out
}

/// Pulls the upstream cotangent back through the head projections.
fn head_backprop<R: Real>(spec: &MlpSpec, preact: &[R], output: &[R], upstream: &[R]) -> Vec<R> {
    let mut g = vec![R::zero(); preact.len()];
    let mut start = 0;
    for head in &spec.heads {
        let range = start..start + head.width;
        let u = &upstream[range.clone()];
        let y = &output[range.clone()];
        let gz = &mut g[range];
        match head.activation {
            HeadActivation::Linear => gz.copy_from_slice(u),
            HeadActivation::Simplex => {
                let dot: R = u.iter().zip(y.iter()).map(|(&a, &b)| a * b).sum();
                for ((gzi, &ui), &yi) in gz.iter_mut().zip(u.iter()).zip(y.iter()) {
                    *gzi = yi * (ui - dot);
                }
            }
            HeadActivation::UnitInterval { hi } => {
                let hi = R::real(hi);
                for ((gzi, &ui), &yi) in gz.iter_mut().zip(u.iter()).zip(y.iter()) {
                    // y = hi * s(z) => dy/dz = y * (1 - y / hi)
                    *gzi = ui * yi * (R::one() - yi / hi);
                }
            }
        }
        start += head.width;
    }
    g
}

fn backprop<R: Real>(
    spec: &MlpSpec,
    params: &[R],
    input: &[R],
    upstream: &[R],
    want_params: bool,
) -> Result<(Option<Vec<R>>, Vec<R>), NnError> {
    check_input(spec, input)?;
    if upstream.len() != spec.output_width() {
        return Err(NnError::UpstreamLength { got: upstream.len(), want: spec.output_width() });
    }

    let layers = spec.layer_sizes.len() - 1;
    let last = layers - 1;

    // Forward with caches: post-activation h per layer and pre-activation z.
    let mut activations: Vec<Vec<R>> = Vec::with_capacity(layers + 1);
    let mut preacts: Vec<Vec<R>> = Vec::with_capacity(layers);
    activations.push(input.to_vec());
    let mut offset = 0;
    let mut offsets = Vec::with_capacity(layers);
    for (l, w) in spec.layer_sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        offsets.push(offset);
        let weights = &params[offset..offset + n_in * n_out];
        let biases = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        let h = activations.last().unwrap();
        let mut z = vec![R::zero(); n_out];
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &weights[o * n_in..(o + 1) * n_in];
            let mut acc = biases[o];
            for (wv, hv) in row.iter().zip(h.iter()) {
                acc += *wv * *hv;
            }
            *zo = acc;
        }
        let act = if l < last {
            z.iter().map(|&zv| activate(spec.hidden_activation, zv)).collect()
        } else {
            z.clone()
        };
        preacts.push(z);
        activations.push(act);
        offset += n_in * n_out + n_out;
    }

    let output = apply_heads(spec, &preacts[last]);
    let mut grad_z = head_backprop(spec, &preacts[last], &output, upstream);

    let mut param_grad = if want_params { Some(vec![R::zero(); params.len()]) } else { None };

    for l in (0..layers).rev() {
        let n_in = spec.layer_sizes[l];
        let n_out = spec.layer_sizes[l + 1];
        let weights = &params[offsets[l]..offsets[l] + n_in * n_out];
        let h_in = &activations[l];

        if let Some(pg) = param_grad.as_mut() {
            let (w_grad, b_grad) = pg[offsets[l]..offsets[l] + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (o, &gz) in grad_z.iter().enumerate() {
                b_grad[o] = gz;
                let row = &mut w_grad[o * n_in..(o + 1) * n_in];
                for (wg, &hv) in row.iter_mut().zip(h_in.iter()) {
                    *wg = gz * hv;
                }
            }
        }

        let mut grad_h = vec![R::zero(); n_in];
        for (o, &gz) in grad_z.iter().enumerate() {
            let row = &weights[o * n_in..(o + 1) * n_in];
            for (gh, &wv) in grad_h.iter_mut().zip(row.iter()) {
                *gh += gz * wv;
            }
        }
        if l > 0 {
            // Chain through the previous layer's activation.
            for (gh, &z) in grad_h.iter_mut().zip(preacts[l - 1].iter()) {
                *gh *= activate_grad(spec.hidden_activation, z);
            }
        }
        grad_z = grad_h;
    }

    Ok((param_grad, grad_z))
}

/// Rescales `grad` in place so its Euclidean norm does not exceed `max_norm`.
pub fn clip_global_norm<R: Real>(grad: &mut [R], max_norm: R) {
    let norm = grad.iter().map(|&g| g * g).sum::<R>().sqrt();
    if norm > max_norm && norm > R::zero() {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
}
