//! Minimal neural-network stack for the Q-networks: tied 1-D convolutions,
//! SeLU activations, dueling or plain linear heads, mean-squared-error
//! training with an Adam-style optimizer, and bit-exact serialization.
//!
//! A "tied" convolution uses one kernel per feature map shared across all
//! input channels, summing over channels. Because the kernel does not depend
//! on the channel, the forward pass factorizes through per-position column
//! sums, which is what makes CPU training fast enough for full experiments.

pub mod gradcheck;
pub mod io;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const SELU_LAMBDA: f32 = 1.050_701;
pub const SELU_ALPHA: f32 = 1.673_263_2;

/// Dense row-major tensor of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || expect != data.len() {
            return Err(Error::config(format!(
                "tensor shape {shape:?} incompatible with {} values",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub fn selu_scalar(x: f32) -> f32 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

pub fn selu_prime(x: f32) -> f32 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// Elementwise SeLU.
pub fn selu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| selu_scalar(v)).collect(),
    }
}

/// Tied 1-D convolution, stride 1, no padding: one kernel per feature map
/// shared across all input channels.
///
/// `out[f, t] = bias[f] + sum_c sum_j input[c, t + j] * kernels[f, j]`
pub fn conv1d_tied_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c_in, len) = expect_2d(input, "input")?;
    let (filters, width) = expect_2d(kernels, "kernels")?;
    if bias.shape() != [filters] {
        return Err(Error::config(format!(
            "bias shape {:?} does not match {filters} filters",
            bias.shape()
        )));
    }
    if len < width {
        return Err(Error::config(format!(
            "input length {len} shorter than kernel width {width}"
        )));
    }
    let out_len = len - width + 1;
    let mut colsum = vec![0.0f32; len];
    column_sums(input.data(), c_in, len, &mut colsum);
    let mut out = vec![0.0f32; filters * out_len];
    conv_rows(&colsum, kernels.data(), bias.data(), filters, width, out_len, &mut out);
    Tensor::new(vec![filters, out_len], out)
}

/// Gradients of [`conv1d_tied_forward`] given the upstream gradient.
/// Returns `(grad_input, grad_kernels, grad_bias)`.
pub fn conv1d_tied_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (c_in, len) = expect_2d(input, "input")?;
    let (filters, width) = expect_2d(kernels, "kernels")?;
    let out_len = len - width + 1;
    if grad_out.shape() != [filters, out_len] {
        return Err(Error::config(format!(
            "grad shape {:?} does not match output [{filters}, {out_len}]",
            grad_out.shape()
        )));
    }
    let mut colsum = vec![0.0f32; len];
    column_sums(input.data(), c_in, len, &mut colsum);

    let mut grad_k = vec![0.0f32; filters * width];
    let mut grad_b = vec![0.0f32; filters];
    let mut grad_col = vec![0.0f32; len];
    conv_param_grads(
        &colsum,
        kernels.data(),
        grad_out.data(),
        filters,
        width,
        out_len,
        &mut grad_k,
        &mut grad_b,
        &mut grad_col,
    );

    // The kernel is channel-agnostic, so every channel sees the column grad.
    let mut grad_in = vec![0.0f32; c_in * len];
    for c in 0..c_in {
        grad_in[c * len..(c + 1) * len].copy_from_slice(&grad_col);
    }
    Ok((
        Tensor::new(vec![c_in, len], grad_in)?,
        Tensor::new(vec![filters, width], grad_k)?,
        Tensor::new(vec![filters], grad_b)?,
    ))
}

fn expect_2d(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [a, b] => Ok((*a, *b)),
        s => Err(Error::config(format!("{what} must be 2-d, got shape {s:?}"))),
    }
}

fn column_sums(input: &[f32], c_in: usize, len: usize, colsum: &mut [f32]) {
    colsum[..len].fill(0.0);
    for c in 0..c_in {
        let row = &input[c * len..(c + 1) * len];
        for (s, &v) in colsum[..len].iter_mut().zip(row) {
            *s += v;
        }
    }
}

fn conv_rows(
    colsum: &[f32],
    kernels: &[f32],
    bias: &[f32],
    filters: usize,
    width: usize,
    out_len: usize,
    out: &mut [f32],
) {
    for f in 0..filters {
        let k = &kernels[f * width..(f + 1) * width];
        let row = &mut out[f * out_len..(f + 1) * out_len];
        for (t, o) in row.iter_mut().enumerate() {
            let mut acc = bias[f];
            for (j, &kj) in k.iter().enumerate() {
                acc += kj * colsum[t + j];
            }
            *o = acc;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_param_grads(
    colsum: &[f32],
    kernels: &[f32],
    grad_pre: &[f32],
    filters: usize,
    width: usize,
    out_len: usize,
    grad_k: &mut [f32],
    grad_b: &mut [f32],
    grad_col: &mut [f32],
) {
    grad_col[..colsum.len()].fill(0.0);
    for f in 0..filters {
        let g = &grad_pre[f * out_len..(f + 1) * out_len];
        let k = &kernels[f * width..(f + 1) * width];
        let gk = &mut grad_k[f * width..(f + 1) * width];
        let mut gb = 0.0;
        for (t, &gv) in g.iter().enumerate() {
            gb += gv;
            for j in 0..width {
                gk[j] += gv * colsum[t + j];
                grad_col[t + j] += gv * k[j];
            }
        }
        grad_b[f] += gb;
    }
}

/// Dueling head: first half of `flat` maps linearly to the scalar state
/// value, second half to the 5 advantages. No intermediate dense layer.
pub fn dueling_head_forward(
    flat: &Tensor,
    value_weights: &Tensor,
    value_bias: &Tensor,
    adv_weights: &Tensor,
    adv_bias: &Tensor,
) -> Result<(f32, [f32; 5])> {
    let n = flat.len();
    if flat.shape().len() != 1 && flat.shape().iter().product::<usize>() != n {
        return Err(Error::config("flat input must be a vector"));
    }
    if n % 2 != 0 {
        return Err(Error::config(format!(
            "flat length {n} must be even to halve into value/advantage streams"
        )));
    }
    let half = n / 2;
    if value_weights.shape() != [half] || adv_weights.shape() != [5, half] {
        return Err(Error::config("head weight shapes do not match halved input"));
    }
    if value_bias.len() != 1 || adv_bias.len() != 5 {
        return Err(Error::config("head bias shapes invalid"));
    }
    let data = flat.data();
    let v = value_bias.data()[0] + dot(&data[..half], value_weights.data());
    let mut a = [0.0f32; 5];
    for (i, slot) in a.iter_mut().enumerate() {
        *slot = adv_bias.data()[i] + dot(&data[half..], &adv_weights.data()[i * half..(i + 1) * half]);
    }
    Ok((v, a))
}

/// Combines value and advantages with the max-advantage correction:
/// `Q[a] = V + A[a] - max_a' A[a']`, forcing zero advantage at the best
/// action so `max_a Q = V`.
pub fn dueling_combine(v: f32, a: &[f32; 5]) -> [f32; 5] {
    let max = a.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut q = [0.0f32; 5];
    for i in 0..5 {
        q[i] = v + a[i] - max;
    }
    q
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Output head topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// Single linear map from the full flattened features to 5 Q-values.
    Linear,
    /// Halved value/advantage streams combined per the max correction.
    Dueling,
}

/// One convolution stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub width: usize,
}

/// Shape-level description of a Q-network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchDescriptor {
    pub channels: usize,
    pub window: usize,
    pub conv: Vec<ConvSpec>,
    pub head: HeadKind,
}

impl ArchDescriptor {
    /// Default stack: 5 channels, one-hour window, four 32-filter width-3
    /// layers (flat length 128, halves of 64).
    pub fn standard(head: HeadKind) -> Self {
        ArchDescriptor {
            channels: 5,
            window: 12,
            conv: vec![ConvSpec { filters: 32, width: 3 }; 4],
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.window == 0 {
            return Err(Error::config("channels and window must be positive"));
        }
        if self.conv.is_empty() {
            return Err(Error::config("need at least one convolution layer"));
        }
        let mut len = self.window;
        for (i, c) in self.conv.iter().enumerate() {
            if c.filters == 0 || c.width == 0 {
                return Err(Error::config("conv filters and width must be positive"));
            }
            if len < c.width {
                return Err(Error::config(format!(
                    "conv layer {} width {} exceeds remaining length {len}",
                    i + 1,
                    c.width
                )));
            }
            len = len - c.width + 1;
        }
        if self.flat_len() % 2 != 0 {
            return Err(Error::config(format!(
                "flattened length {} must be even",
                self.flat_len()
            )));
        }
        Ok(())
    }

    /// Sequence lengths after each conv layer.
    pub fn conv_out_lens(&self) -> Vec<usize> {
        let mut len = self.window;
        self.conv
            .iter()
            .map(|c| {
                len = len - c.width + 1;
                len
            })
            .collect()
    }

    pub fn flat_len(&self) -> usize {
        let lens = self.conv_out_lens();
        self.conv.last().unwrap().filters * lens.last().unwrap()
    }

    /// Canonical parameter layout: names and shapes in serialization order.
    pub fn layer_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut layout = Vec::new();
        for (i, c) in self.conv.iter().enumerate() {
            layout.push((format!("conv{}.kernels", i + 1), vec![c.filters, c.width]));
            layout.push((format!("conv{}.bias", i + 1), vec![c.filters]));
        }
        let flat = self.flat_len();
        match self.head {
            HeadKind::Dueling => {
                let half = flat / 2;
                layout.push(("value.weight".into(), vec![half]));
                layout.push(("value.bias".into(), vec![1]));
                layout.push(("advantage.weight".into(), vec![5, half]));
                layout.push(("advantage.bias".into(), vec![5]));
            }
            HeadKind::Linear => {
                layout.push(("output.weight".into(), vec![5, flat]));
                layout.push(("output.bias".into(), vec![5]));
            }
        }
        layout
    }

    pub fn param_count(&self) -> usize {
        self.layer_layout()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// Parameters in the dueling head (value + advantage maps over halves).
    pub fn dueling_head_param_count(&self) -> usize {
        let half = self.flat_len() / 2;
        (half + 1) + (5 * half + 5)
    }

    /// Parameters a conventional two-stream head would need, with both dense
    /// streams reading the full flattened features.
    pub fn two_stream_head_param_count(&self) -> usize {
        let flat = self.flat_len();
        (flat + 1) + (5 * flat + 5)
    }
}

/// Ordered, named weight tensors plus their architecture descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetworkParams {
    desc: ArchDescriptor,
    tensors: Vec<Tensor>,
}

impl QNetworkParams {
    /// LeCun-normal initialization (variance 1/fan_in) on the portable RNG;
    /// biases start at zero.
    pub fn init(desc: ArchDescriptor, seed: u64) -> Result<Self> {
        desc.validate()?;
        let mut rng = SplitMix64::new(seed);
        let mut tensors = Vec::new();
        let mut c_in = desc.channels;
        for c in &desc.conv {
            let fan_in = (c_in * c.width) as f64;
            let sd = 1.0 / fan_in.sqrt();
            tensors.push(random_tensor(vec![c.filters, c.width], sd, &mut rng));
            tensors.push(Tensor::zeros(vec![c.filters]));
            c_in = c.filters;
        }
        let flat = desc.flat_len();
        match desc.head {
            HeadKind::Dueling => {
                let half = flat / 2;
                let sd = 1.0 / (half as f64).sqrt();
                tensors.push(random_tensor(vec![half], sd, &mut rng));
                tensors.push(Tensor::zeros(vec![1]));
                tensors.push(random_tensor(vec![5, half], sd, &mut rng));
                tensors.push(Tensor::zeros(vec![5]));
            }
            HeadKind::Linear => {
                let sd = 1.0 / (flat as f64).sqrt();
                tensors.push(random_tensor(vec![5, flat], sd, &mut rng));
                tensors.push(Tensor::zeros(vec![5]));
            }
        }
        Ok(QNetworkParams { desc, tensors })
    }

    /// All-zero parameters (useful for fixed-point tests).
    pub fn zeros(desc: ArchDescriptor) -> Result<Self> {
        desc.validate()?;
        let tensors = desc
            .layer_layout()
            .into_iter()
            .map(|(_, shape)| Tensor::zeros(shape))
            .collect();
        Ok(QNetworkParams { desc, tensors })
    }

    pub fn from_tensors(desc: ArchDescriptor, tensors: Vec<Tensor>) -> Result<Self> {
        desc.validate()?;
        let layout = desc.layer_layout();
        if layout.len() != tensors.len() {
            return Err(Error::config(format!(
                "expected {} tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::config(format!(
                    "tensor '{name}' has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(QNetworkParams { desc, tensors })
    }

    pub fn descriptor(&self) -> &ArchDescriptor {
        &self.desc
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.desc
            .layer_layout()
            .iter()
            .position(|(n, _)| n == name)
            .map(|i| &self.tensors[i])
    }

    /// Named views in serialization order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.desc
            .layer_layout()
            .into_iter()
            .map(|(n, _)| n)
            .zip(&self.tensors)
            .map(|(n, t)| (n, t))
            .collect()
    }

    /// Q-values for one window; validates the window shape.
    pub fn forward_q(&self, window: &Tensor) -> Result<[f32; 5]> {
        if window.shape() != [self.desc.channels, self.desc.window] {
            return Err(Error::config(format!(
                "window shape {:?} does not match descriptor [{}, {}]",
                window.shape(),
                self.desc.channels,
                self.desc.window
            )));
        }
        let mut scratch = Scratch::new(&self.desc);
        Ok(self.forward_into(window.data(), &mut scratch))
    }

    /// Hot-path forward; `window` must hold `channels * window` values in
    /// row-major channel x time order.
    pub fn forward_into(&self, window: &[f32], scratch: &mut Scratch) -> [f32; 5] {
        debug_assert_eq!(window.len(), self.desc.channels * self.desc.window);
        let lens = &scratch.lens;
        let mut c_in = self.desc.channels;
        let mut in_len = self.desc.window;
        for (l, conv) in self.desc.conv.iter().enumerate() {
            let (filters, width) = (conv.filters, conv.width);
            let out_len = lens[l];
            let input: &[f32] = if l == 0 { window } else { &scratch.acts[l - 1] };
            column_sums(input, c_in, in_len, &mut scratch.colsums[l]);
            conv_rows(
                &scratch.colsums[l],
                self.tensors[2 * l].data(),
                self.tensors[2 * l + 1].data(),
                filters,
                width,
                out_len,
                &mut scratch.pres[l],
            );
            for (act, &pre) in scratch.pres[l].iter().enumerate() {
                scratch.acts[l][act] = selu_scalar(pre);
            }
            c_in = filters;
            in_len = out_len;
        }

        let flat = &scratch.acts[self.desc.conv.len() - 1];
        let base = 2 * self.desc.conv.len();
        match self.desc.head {
            HeadKind::Dueling => {
                let half = flat.len() / 2;
                let v = self.tensors[base + 1].data()[0] + dot(&flat[..half], self.tensors[base].data());
                let aw = self.tensors[base + 2].data();
                let ab = self.tensors[base + 3].data();
                let mut a = [0.0f32; 5];
                for i in 0..5 {
                    a[i] = ab[i] + dot(&flat[half..], &aw[i * half..(i + 1) * half]);
                }
                scratch.adv = a;
                dueling_combine(v, &a)
            }
            HeadKind::Linear => {
                let w = self.tensors[base].data();
                let b = self.tensors[base + 1].data();
                let n = flat.len();
                let mut q = [0.0f32; 5];
                for i in 0..5 {
                    q[i] = b[i] + dot(flat, &w[i * n..(i + 1) * n]);
                }
                q
            }
        }
    }

    /// Backward pass for one sample, accumulating parameter gradients.
    /// `dq` is the loss gradient with respect to the Q output; the scratch
    /// must hold this sample's forward state.
    fn backward_into(&self, dq: &[f32; 5], scratch: &mut Scratch, grads: &mut [Tensor]) {
        let n_conv = self.desc.conv.len();
        let flat_act = &scratch.acts[n_conv - 1];
        let flat_len = flat_act.len();
        let base = 2 * n_conv;
        let g_flat = &mut scratch.g_flat;
        g_flat[..flat_len].fill(0.0);

        match self.desc.head {
            HeadKind::Dueling => {
                // Q[a] = V + A[a] - A[amax]; only the realized argmax routes
                // gradient out of the max term.
                let a = &scratch.adv;
                let mut amax = 0;
                for i in 1..5 {
                    if a[i] > a[amax] {
                        amax = i;
                    }
                }
                let g_sum: f32 = dq.iter().sum();
                let half = flat_len / 2;
                let vw = self.tensors[base].data();
                let aw = self.tensors[base + 2].data();

                // value stream
                let (gv_w, rest) = grads[base..].split_at_mut(1);
                let (gv_b, rest) = rest.split_at_mut(1);
                let (ga_w, ga_b) = rest.split_at_mut(1);
                gv_b[0].data_mut()[0] += g_sum;
                for (i, g) in gv_w[0].data_mut().iter_mut().enumerate() {
                    *g += g_sum * flat_act[i];
                }
                for (t, &x) in vw.iter().enumerate() {
                    g_flat[t] += g_sum * x;
                }
                // advantage stream
                for i in 0..5 {
                    let gi = dq[i] - if i == amax { g_sum } else { 0.0 };
                    if gi == 0.0 {
                        continue;
                    }
                    ga_b[0].data_mut()[i] += gi;
                    let gw = &mut ga_w[0].data_mut()[i * half..(i + 1) * half];
                    for (t, g) in gw.iter_mut().enumerate() {
                        *g += gi * flat_act[half + t];
                    }
                    let w = &aw[i * half..(i + 1) * half];
                    for (t, &x) in w.iter().enumerate() {
                        g_flat[half + t] += gi * x;
                    }
                }
            }
            HeadKind::Linear => {
                let w = self.tensors[base].data();
                let (gw, gb) = {
                    let (a, b) = grads[base..].split_at_mut(1);
                    (a, b)
                };
                for i in 0..5 {
                    let gi = dq[i];
                    if gi == 0.0 {
                        continue;
                    }
                    gb[0].data_mut()[i] += gi;
                    let row = &mut gw[0].data_mut()[i * flat_len..(i + 1) * flat_len];
                    for (t, g) in row.iter_mut().enumerate() {
                        *g += gi * flat_act[t];
                    }
                    let wrow = &w[i * flat_len..(i + 1) * flat_len];
                    for (t, &x) in wrow.iter().enumerate() {
                        g_flat[t] += gi * x;
                    }
                }
            }
        }

        // Walk the conv stack top-down. The top layer receives a full
        // per-element gradient; lower layers receive a per-position column
        // gradient (identical across channels by the tied-kernel structure).
        for l in (0..n_conv).rev() {
            let conv = self.desc.conv[l];
            let out_len = scratch.lens[l];
            let in_len = if l == 0 { self.desc.window } else { scratch.lens[l - 1] };
            let (g_pre_buf, g_col_src) = {
                let pres = &scratch.pres[l];
                let g_pre = &mut scratch.g_pre;
                if l == n_conv - 1 {
                    for (i, &pre) in pres.iter().enumerate() {
                        g_pre[i] = scratch.g_flat[i] * selu_prime(pre);
                    }
                } else {
                    for f in 0..conv.filters {
                        for t in 0..out_len {
                            let i = f * out_len + t;
                            g_pre[i] = scratch.g_col[t] * selu_prime(pres[i]);
                        }
                    }
                }
                (&scratch.g_pre, &mut scratch.g_col_next)
            };

            {
                let gk_gb = &mut grads[2 * l..2 * l + 2];
                let (gk, gb) = gk_gb.split_at_mut(1);
                conv_param_grads(
                    &scratch.colsums[l],
                    self.tensors[2 * l].data(),
                    &g_pre_buf[..conv.filters * out_len],
                    conv.filters,
                    conv.width,
                    out_len,
                    gk[0].data_mut(),
                    gb[0].data_mut(),
                    &mut g_col_src[..in_len],
                );
            }
            std::mem::swap(&mut scratch.g_col, &mut scratch.g_col_next);
        }
    }
}

fn random_tensor(shape: Vec<usize>, sd: f64, rng: &mut SplitMix64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| (rng.next_normal() * sd) as f32).collect();
    Tensor { shape, data }
}

/// Reusable forward/backward buffers for one network shape.
pub struct Scratch {
    lens: Vec<usize>,
    colsums: Vec<Vec<f32>>,
    pres: Vec<Vec<f32>>,
    acts: Vec<Vec<f32>>,
    adv: [f32; 5],
    g_flat: Vec<f32>,
    g_pre: Vec<f32>,
    g_col: Vec<f32>,
    g_col_next: Vec<f32>,
}

impl Scratch {
    pub fn new(desc: &ArchDescriptor) -> Self {
        let lens = desc.conv_out_lens();
        let mut colsums = Vec::new();
        let mut pres = Vec::new();
        let mut acts = Vec::new();
        let mut in_len = desc.window;
        let mut max_elems = 0;
        for (l, c) in desc.conv.iter().enumerate() {
            colsums.push(vec![0.0; in_len]);
            pres.push(vec![0.0; c.filters * lens[l]]);
            acts.push(vec![0.0; c.filters * lens[l]]);
            max_elems = max_elems.max(c.filters * lens[l]);
            in_len = lens[l];
        }
        Scratch {
            lens,
            colsums,
            pres,
            acts,
            adv: [0.0; 5],
            g_flat: vec![0.0; desc.flat_len()],
            g_pre: vec![0.0; max_elems],
            g_col: vec![0.0; desc.window],
            g_col_next: vec![0.0; desc.window],
        }
    }
}

/// One supervised sample: window values, chosen action, regression target.
pub struct TrainSample<'a> {
    pub window: &'a [f32],
    pub action: usize,
    pub target: f32,
}

/// Adam optimizer state (bias-corrected first/second moments).
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    t: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f32, params: &QNetworkParams) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
            v: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    fn step(&mut self, params: &mut QNetworkParams, grads: &[Tensor]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((tensor, grad), (m, v)) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for ((p, &g), (m, v)) in tensor
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Gradient accumulation buffers matching a parameter set.
pub struct GradBuffers {
    tensors: Vec<Tensor>,
}

impl GradBuffers {
    pub fn new(params: &QNetworkParams) -> Self {
        GradBuffers {
            tensors: params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape().to_vec()))
                .collect(),
        }
    }

    fn zero(&mut self) {
        for t in &mut self.tensors {
            t.data_mut().fill(0.0);
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }
}

/// Batch loss and parameter gradients without an optimizer update:
/// `loss = mean((target - Q(window)[action])^2)`.
pub fn loss_and_gradients(
    params: &QNetworkParams,
    batch: &[TrainSample],
    scratch: &mut Scratch,
    grads: &mut GradBuffers,
) -> Result<f32> {
    assert!(!batch.is_empty());
    grads.zero();
    let inv_n = 1.0 / batch.len() as f32;
    let mut loss = 0.0f32;
    for sample in batch {
        if !sample.target.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite training target {}",
                sample.target
            )));
        }
        let q = params.forward_into(sample.window, scratch);
        let err = q[sample.action] - sample.target;
        loss += err * err * inv_n;
        let mut dq = [0.0f32; 5];
        dq[sample.action] = 2.0 * err * inv_n;
        params.backward_into(&dq, scratch, &mut grads.tensors);
    }
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite training loss {loss}")));
    }
    Ok(loss)
}

/// Mean-squared-error step over a batch: backpropagates, applies one Adam
/// update, and returns the pre-update loss.
pub fn backward_and_step(
    params: &mut QNetworkParams,
    batch: &[TrainSample],
    opt: &mut Adam,
    scratch: &mut Scratch,
    grads: &mut GradBuffers,
) -> Result<f32> {
    let loss = loss_and_gradients(params, batch, scratch, grads)?;
    opt.step(params, grads.tensors());
    Ok(loss)
}

#[cfg(test)]
mod tests;
