//! Fully connected encoder and decoder with hand-written backpropagation.
//!
//! All weights and biases live in one flat vector so that the optimizer
//! and the weights file see a single parameter slice. A dense layer maps
//! `x` to `W x + b` with `W` stored row-major as `rows = out`, `cols = in`.

use rand::Rng;

use crate::rng;
use crate::{Error, Result};

/// Layer widths. The encoder runs `input -> encoder[..]`, two linear heads
/// map its last width to `latent` (mean and log-variance), and the decoder
/// runs `latent -> decoder[..] -> input`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub encoder: Vec<usize>,
    pub latent: usize,
    pub decoder: Vec<usize>,
}

impl Architecture {
    /// 1024-512-256-128 encoder, 128 latent, mirrored decoder.
    pub fn standard(n: usize) -> Self {
        Self { input: 4 * n, encoder: vec![1024, 512, 256, 128], latent: 128, decoder: vec![256, 512, 1024] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.latent == 0 || self.encoder.is_empty() {
            return Err(Error::InvalidParameter("network needs an input, a latent and at least one encoder layer".into()));
        }
        if self.encoder.iter().chain(&self.decoder).any(|&w| w == 0) {
            return Err(Error::InvalidParameter("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// `(rows, cols)` of every layer: encoder, mean head, log-variance
    /// head, decoder.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut prev = self.input;
        for &w in &self.encoder {
            shapes.push((w, prev));
            prev = w;
        }
        shapes.push((self.latent, prev));
        shapes.push((self.latent, prev));
        let mut prev = self.latent;
        for &w in self.decoder.iter().chain(std::iter::once(&self.input)) {
            shapes.push((w, prev));
            prev = w;
        }
        shapes
    }

    /// Inverse of [`Architecture::layer_shapes`]; the heads are the first
    /// pair of equal layers of width `latent` feeding a layer that reads
    /// `latent` inputs.
    pub fn from_layer_shapes(shapes: &[(usize, usize)], latent: usize) -> Result<Self> {
        let bad = || Error::Format("layer shapes do not form an encoder, two heads and a decoder".into());
        let heads = (1..shapes.len().saturating_sub(2))
            .find(|&i| {
                shapes[i] == shapes[i + 1]
                    && shapes[i].0 == latent
                    && shapes[i + 2].1 == latent
                    && shapes[i - 1].0 == shapes[i].1
            })
            .ok_or_else(bad)?;
        let arch = Self {
            input: shapes[0].1,
            encoder: shapes[..heads].iter().map(|s| s.0).collect(),
            latent,
            decoder: shapes[heads + 2..shapes.len() - 1].iter().map(|s| s.0).collect(),
        };
        if arch.layer_shapes() != shapes {
            return Err(bad());
        }
        Ok(arch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    rows: usize,
    cols: usize,
    offset: usize,
}

impl Layer {
    fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.rows * self.cols]
    }

    fn bias<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.rows * self.cols;
        &params[start..start + self.rows]
    }

    fn len(&self) -> usize {
        self.rows * (self.cols + 1)
    }

    /// `out = x Wᵀ + b` for a batch of row vectors.
    fn forward(&self, params: &[f64], x: &[f64], batch: usize, out: &mut [f64]) {
        debug_assert_eq!(x.len(), batch * self.cols);
        let bias = self.bias(params);
        for row in out.chunks_exact_mut(self.rows) {
            row.copy_from_slice(bias);
        }
        // SAFETY: slices cover batch×cols, rows×cols and batch×rows elements
        // with the strides given.
        unsafe {
            matrixmultiply::dgemm(
                batch, self.cols, self.rows, 1.0,
                x.as_ptr(), self.cols as isize, 1,
                self.weights(params).as_ptr(), 1, self.cols as isize,
                1.0, out.as_mut_ptr(), self.rows as isize, 1,
            );
        }
    }

    /// Accumulates `dW += dyᵀ x`, `db += Σ dy` and, when asked, writes
    /// `dx = dy W`.
    fn backward(&self, params: &[f64], x: &[f64], dy: &[f64], batch: usize, grad: &mut [f64], dx: Option<&mut [f64]>) {
        let (gw, gb) = grad[self.offset..self.offset + self.len()].split_at_mut(self.rows * self.cols);
        // SAFETY: as in `forward`.
        unsafe {
            matrixmultiply::dgemm(
                self.rows, batch, self.cols, 1.0,
                dy.as_ptr(), 1, self.rows as isize,
                x.as_ptr(), self.cols as isize, 1,
                1.0, gw.as_mut_ptr(), self.cols as isize, 1,
            );
        }
        for row in dy.chunks_exact(self.rows) {
            gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
        if let Some(dx) = dx {
            unsafe {
                matrixmultiply::dgemm(
                    batch, self.rows, self.cols, 1.0,
                    dy.as_ptr(), self.rows as isize, 1,
                    self.weights(params).as_ptr(), self.cols as isize, 1,
                    0.0, dx.as_mut_ptr(), self.cols as isize, 1,
                );
            }
        }
    }
}

/// Encoder, heads and decoder over one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    layers: Vec<Layer>,
    pub params: Vec<f64>,
    pub leaky_slope: f64,
}

/// Per-layer activations of a batch, kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardPass {
    pub batch: usize,
    /// Encoder layer outputs after activation.
    encoder: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
    pub z: Vec<f64>,
    /// Decoder hidden outputs after activation.
    decoder: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Gradients arriving at the network outputs.
#[derive(Debug, Clone)]
pub struct OutputGradients<'a> {
    pub output: &'a [f64],
    pub mu: &'a [f64],
    pub log_var: &'a [f64],
}

impl Network {
    /// Zero parameters.
    pub fn zeros(arch: Architecture, leaky_slope: f64) -> Result<Self> {
        arch.validate()?;
        if !(leaky_slope >= 0.0) || !leaky_slope.is_finite() {
            return Err(Error::InvalidParameter("leaky slope must be non-negative".into()));
        }
        let mut offset = 0;
        let layers: Vec<Layer> = arch
            .layer_shapes()
            .into_iter()
            .map(|(rows, cols)| {
                let l = Layer { rows, cols, offset };
                offset += l.len();
                l
            })
            .collect();
        Ok(Self { arch, layers, params: vec![0.0; offset], leaky_slope })
    }

    /// Weights uniform in `±√(6/(fan_in + fan_out))`, zero biases.
    pub fn glorot(arch: Architecture, leaky_slope: f64, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch, leaky_slope)?;
        let mut rng = rng::stream(seed, rng::INIT);
        for l in &net.layers {
            let limit = (6.0 / (l.rows + l.cols) as f64).sqrt();
            for w in &mut net.params[l.offset..l.offset + l.rows * l.cols] {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    /// Zeroes the mean and log-variance heads, so that every input starts
    /// out encoded as the prior.
    pub fn clear_heads(&mut self) {
        let e = self.n_encoder();
        for l in &self.layers[e..e + 2] {
            self.params[l.offset..l.offset + l.len()].fill(0.0);
        }
    }

    /// Changes latent coordinates to `z' = (z - shift) / scale` without
    /// changing what the network computes: the heads encode `z'` and the
    /// first decoder layer maps `z'` back to its old input.
    pub fn reparameterize_latent(&mut self, shift: &[f64], scale: &[f64]) -> Result<()> {
        let latent = self.arch.latent;
        if shift.len() != latent || scale.len() != latent {
            return Err(Error::ShapeMismatch { expected: latent, found: shift.len().min(scale.len()) });
        }
        if let Some(j) = (0..latent).find(|&j| !shift[j].is_finite() || !(scale[j] > 0.0) || !scale[j].is_finite()) {
            return Err(Error::InvalidParameter(format!("latent coordinate {j}: shift {} scale {}", shift[j], scale[j])));
        }
        let e = self.n_encoder();
        let (mu, log_var, dec) = (self.layers[e], self.layers[e + 1], self.layers[e + 2]);
        let p = &mut self.params;
        for j in 0..latent {
            let row = mu.offset + j * mu.cols;
            p[row..row + mu.cols].iter_mut().for_each(|w| *w /= scale[j]);
            let b = mu.offset + mu.rows * mu.cols + j;
            p[b] = (p[b] - shift[j]) / scale[j];
            p[log_var.offset + log_var.rows * log_var.cols + j] -= 2.0 * scale[j].ln();
        }
        for i in 0..dec.rows {
            let row = dec.offset + i * dec.cols;
            let moved: f64 = (0..latent).map(|j| p[row + j] * shift[j]).sum();
            p[dec.offset + dec.rows * dec.cols + i] += moved;
            p[row..row + latent].iter_mut().zip(scale).for_each(|(w, s)| *w *= s);
        }
        Ok(())
    }

    pub fn from_params(arch: Architecture, leaky_slope: f64, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(arch, leaky_slope)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch { expected: net.params.len(), found: params.len() });
        }
        net.params = params;
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent
    }

    /// `(rows, cols, weights, biases)` per layer, in file order.
    pub fn layer_views(&self) -> Vec<(usize, usize, &[f64], &[f64])> {
        self.layers
            .iter()
            .map(|l| (l.rows, l.cols, l.weights(&self.params), l.bias(&self.params)))
            .collect()
    }

    fn activate(&self, v: &mut [f64]) {
        let a = self.leaky_slope;
        v.iter_mut().for_each(|x| {
            if *x < 0.0 {
                *x *= a
            }
        });
    }

    /// Multiplies `grad` by the activation derivative read off the
    /// activated values (the sign is preserved for positive slopes).
    fn activate_backward(&self, activated: &[f64], grad: &mut [f64]) {
        let a = self.leaky_slope;
        grad.iter_mut().zip(activated).for_each(|(g, &y)| {
            if y <= 0.0 {
                *g *= a
            }
        });
    }

    fn check_batch(&self, data: &[f64], width: usize) -> Result<usize> {
        if data.is_empty() || data.len() % width != 0 {
            return Err(Error::ShapeMismatch { expected: width, found: data.len() });
        }
        Ok(data.len() / width)
    }

    fn n_encoder(&self) -> usize {
        self.arch.encoder.len()
    }

    /// Mean and standard deviation for one input.
    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.arch.input {
            return Err(Error::ShapeMismatch { expected: self.arch.input, found: x.len() });
        }
        let (mu, log_var) = self.encode_batch(x)?;
        Ok((mu, log_var.iter().map(|lv| (0.5 * lv).exp()).collect()))
    }

    /// Decoder output for one latent vector.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.arch.latent {
            return Err(Error::ShapeMismatch { expected: self.arch.latent, found: z.len() });
        }
        self.decode_batch(z)
    }

    /// Mean and log-variance heads for a batch of inputs.
    pub fn encode_batch(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut pass = ForwardPass::default();
        self.encode_into(x, &mut pass)?;
        Ok((pass.mu, pass.log_var))
    }

    fn encode_into(&self, x: &[f64], pass: &mut ForwardPass) -> Result<()> {
        let batch = self.check_batch(x, self.arch.input)?;
        pass.batch = batch;
        pass.encoder.clear();
        let mut input: &[f64] = x;
        for l in &self.layers[..self.n_encoder()] {
            let mut out = vec![0.0; batch * l.rows];
            l.forward(&self.params, input, batch, &mut out);
            self.activate(&mut out);
            pass.encoder.push(out);
            input = pass.encoder.last().expect("just pushed");
        }
        let (mu_l, lv_l) = (&self.layers[self.n_encoder()], &self.layers[self.n_encoder() + 1]);
        pass.mu = vec![0.0; batch * self.arch.latent];
        pass.log_var = vec![0.0; batch * self.arch.latent];
        mu_l.forward(&self.params, input, batch, &mut pass.mu);
        lv_l.forward(&self.params, input, batch, &mut pass.log_var);
        Ok(())
    }

    /// Decoder output for a batch of latent vectors.
    pub fn decode_batch(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut pass = ForwardPass::default();
        pass.batch = self.check_batch(z, self.arch.latent)?;
        pass.z = z.to_vec();
        self.decode_into(&mut pass);
        Ok(pass.output)
    }

    fn decode_into(&self, pass: &mut ForwardPass) {
        let batch = pass.batch;
        pass.decoder.clear();
        let dec = &self.layers[self.n_encoder() + 2..];
        let mut input: &[f64] = &pass.z;
        for l in &dec[..dec.len() - 1] {
            let mut out = vec![0.0; batch * l.rows];
            l.forward(&self.params, input, batch, &mut out);
            self.activate(&mut out);
            pass.decoder.push(out);
            input = pass.decoder.last().expect("just pushed");
        }
        let last = dec[dec.len() - 1];
        pass.output = vec![0.0; batch * last.rows];
        last.forward(&self.params, input, batch, &mut pass.output);
    }

    /// Full pass with `z = μ + exp(½ lnσ²) ⊙ ε`.
    pub fn forward(&self, x: &[f64], epsilon: &[f64]) -> Result<ForwardPass> {
        let mut pass = ForwardPass::default();
        self.encode_into(x, &mut pass)?;
        if epsilon.len() != pass.mu.len() {
            return Err(Error::ShapeMismatch { expected: pass.mu.len(), found: epsilon.len() });
        }
        pass.z = pass
            .mu
            .iter()
            .zip(&pass.log_var)
            .zip(epsilon)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect();
        self.decode_into(&mut pass);
        Ok(pass)
    }

    /// Gradient of a scalar with respect to every parameter, given its
    /// gradients at the output and at the two heads. The path through `z`
    /// uses the same `epsilon` as the forward pass.
    pub fn backward(&self, x: &[f64], epsilon: &[f64], pass: &ForwardPass, upstream: OutputGradients<'_>) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(x, epsilon, pass, upstream, &mut grad);
        grad
    }

    /// [`Network::backward`] into a caller-owned buffer, which is
    /// overwritten.
    pub fn backward_into(
        &self,
        x: &[f64],
        epsilon: &[f64],
        pass: &ForwardPass,
        upstream: OutputGradients<'_>,
        grad: &mut [f64],
    ) {
        assert_eq!(grad.len(), self.params.len());
        grad.fill(0.0);
        let grad = &mut *grad;
        let batch = pass.batch;
        let ne = self.n_encoder();
        let dec = &self.layers[ne + 2..];

        // Decoder, last layer first.
        let mut dy = upstream.output.to_vec();
        for (i, l) in dec.iter().enumerate().rev() {
            let input: &[f64] = if i == 0 { &pass.z } else { &pass.decoder[i - 1] };
            let mut dx = vec![0.0; batch * l.cols];
            l.backward(&self.params, input, &dy, batch, grad, Some(&mut dx));
            if i > 0 {
                self.activate_backward(&pass.decoder[i - 1], &mut dx);
            }
            dy = dx;
        }
        let dz = dy;

        // Reparameterization: dz/dμ = 1, dz/dlnσ² = ½ σ ε.
        let d_mu: Vec<f64> = dz.iter().zip(upstream.mu).map(|(a, b)| a + b).collect();
        let d_lv: Vec<f64> = dz
            .iter()
            .zip(&pass.log_var)
            .zip(epsilon)
            .zip(upstream.log_var)
            .map(|(((g, lv), e), u)| g * 0.5 * (0.5 * lv).exp() * e + u)
            .collect();

        let enc_out: &[f64] = if ne == 0 { x } else { &pass.encoder[ne - 1] };
        let width = self.layers[ne].cols;
        let mut dh = vec![0.0; batch * width];
        let mut scratch = vec![0.0; batch * width];
        self.layers[ne].backward(&self.params, enc_out, &d_mu, batch, grad, Some(&mut dh));
        self.layers[ne + 1].backward(&self.params, enc_out, &d_lv, batch, grad, Some(&mut scratch));
        dh.iter_mut().zip(&scratch).for_each(|(a, b)| *a += b);

        for i in (0..ne).rev() {
            let l = &self.layers[i];
            self.activate_backward(&pass.encoder[i], &mut dh);
            let input: &[f64] = if i == 0 { x } else { &pass.encoder[i - 1] };
            if i == 0 {
                l.backward(&self.params, input, &dh, batch, grad, None);
            } else {
                let mut dx = vec![0.0; batch * l.cols];
                l.backward(&self.params, input, &dh, batch, grad, Some(&mut dx));
                dh = dx;
            }
        }
    }
}

/// `μ + σ ⊙ ε`.
pub fn reparameterize(mu: &[f64], sigma: &[f64], epsilon: &[f64]) -> Result<Vec<f64>> {
    if sigma.len() != mu.len() || epsilon.len() != mu.len() {
        return Err(Error::ShapeMismatch { expected: mu.len(), found: sigma.len().min(epsilon.len()) });
    }
    Ok(mu.iter().zip(sigma).zip(epsilon).map(|((m, s), e)| m + s * e).collect())
}
