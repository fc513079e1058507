use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{gemm, Real};
use super::NetError;

/// One convolution stage (valid padding, followed by ReLU).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Layer sizes of the Q-network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetParams {
    pub conv: Vec<ConvSpec>,
    /// Hidden fully connected widths (ReLU); the linear output head is added
    /// on top.
    pub dense: Vec<usize>,
}

impl Default for NetParams {
    fn default() -> Self {
        NetParams {
            conv: vec![ConvSpec { filters: 16, kernel: 5, stride: 2 }, ConvSpec { filters: 16, kernel: 3, stride: 1 }],
            dense: vec![256, 256],
        }
    }
}

/// Input geometry: a `side x side x channels` map plus one scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub side: usize,
    pub channels: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct ConvLayer {
    in_side: usize,
    in_ch: usize,
    out_side: usize,
    filters: usize,
    kernel: usize,
    stride: usize,
    w: Range<usize>,
    b: Range<usize>,
}

impl ConvLayer {
    fn patch(&self) -> usize {
        self.kernel * self.kernel * self.in_ch
    }

    fn positions(&self) -> usize {
        self.out_side * self.out_side
    }
}

#[derive(Clone, Debug, PartialEq)]
struct DenseLayer {
    inputs: usize,
    outputs: usize,
    relu: bool,
    w: Range<usize>,
    b: Range<usize>,
}

/// Resolved layer shapes and parameter offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub params: NetParams,
    pub input: InputShape,
    pub outputs: usize,
    conv: Vec<ConvLayer>,
    dense: Vec<DenseLayer>,
    param_count: usize,
}

impl Architecture {
    pub fn new(params: &NetParams, input: InputShape, outputs: usize) -> Result<Self, NetError> {
        if input.side == 0 || input.channels == 0 || outputs == 0 {
            return Err(NetError::Shape("input and output sizes must be positive".into()));
        }
        let mut offset = 0;
        let mut take = |n: usize| {
            let r = offset..offset + n;
            offset += n;
            r
        };
        let (mut side, mut ch) = (input.side, input.channels);
        let mut conv = Vec::new();
        for (i, spec) in params.conv.iter().enumerate() {
            if spec.kernel == 0 || spec.stride == 0 || spec.filters == 0 {
                return Err(NetError::Shape(format!("conv stage {i} has a zero size")));
            }
            if spec.kernel > side {
                return Err(NetError::Shape(format!(
                    "conv stage {i}: kernel {} exceeds input side {side}",
                    spec.kernel
                )));
            }
            let out_side = (side - spec.kernel) / spec.stride + 1;
            let patch = spec.kernel * spec.kernel * ch;
            conv.push(ConvLayer {
                in_side: side,
                in_ch: ch,
                out_side,
                filters: spec.filters,
                kernel: spec.kernel,
                stride: spec.stride,
                w: take(spec.filters * patch),
                b: take(spec.filters),
            });
            side = out_side;
            ch = spec.filters;
        }
        let mut width = side * side * ch + 1;
        let mut dense = Vec::new();
        for (i, &h) in params.dense.iter().chain(std::iter::once(&outputs)).enumerate() {
            if h == 0 {
                return Err(NetError::Shape(format!("dense stage {i} has zero width")));
            }
            dense.push(DenseLayer {
                inputs: width,
                outputs: h,
                relu: i < params.dense.len(),
                w: take(width * h),
                b: take(h),
            });
            width = h;
        }
        Ok(Architecture { params: params.clone(), input, outputs, conv, dense, param_count: offset })
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn input_len(&self) -> usize {
        self.input.side * self.input.side * self.input.channels
    }

    /// Width of the flattened convolution output (before the time scalar).
    pub fn flatten_len(&self) -> usize {
        self.dense[0].inputs - 1
    }
}

/// Borrowed minibatch of inputs: `n` maps in height-width-channel order and
/// `n` scalars.
#[derive(Clone, Copy, Debug)]
pub struct BatchInput<'a, T> {
    pub n: usize,
    pub maps: &'a [T],
    pub scalars: &'a [T],
}

/// Activations recorded during a forward pass, consumed by `backward`.
#[derive(Debug, Default)]
pub struct Tape<T> {
    n: usize,
    cols: Vec<Vec<T>>,
    conv_out: Vec<Vec<T>>,
    dense_in: Vec<Vec<T>>,
    dense_out: Vec<Vec<T>>,
}

impl<T: Real> Tape<T> {
    /// Q-values of the recorded pass, `n x outputs`.
    pub fn output(&self) -> &[T] {
        self.dense_out.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork<T> {
    arch: Architecture,
    params: Vec<T>,
}

impl<T: Real> QNetwork<T> {
    /// All weights and biases zero.
    pub fn zeros(arch: Architecture) -> Self {
        let params = vec![T::zero(); arch.param_count];
        QNetwork { arch, params }
    }

    /// Fan-in scaled uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut net = Self::zeros(arch);
        let mut fill = |params: &mut [T], range: Range<usize>, fan_in: usize, relu: bool| {
            let gain = if relu { 6.0 } else { 3.0 };
            let limit = (gain / fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = T::of_f64(rng.random_range(-limit..limit));
            }
        };
        for l in &net.arch.conv.clone() {
            fill(&mut net.params, l.w.clone(), l.patch(), true);
        }
        for l in &net.arch.dense.clone() {
            fill(&mut net.params, l.w.clone(), l.inputs, l.relu);
        }
        net
    }

    pub fn from_params(arch: Architecture, params: Vec<T>) -> Result<Self, NetError> {
        if params.len() != arch.param_count {
            return Err(NetError::Shape(format!("expected {} parameters, got {}", arch.param_count, params.len())));
        }
        Ok(QNetwork { arch, params })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Converts the parameters to another scalar type.
    pub fn cast<U: Real>(&self) -> QNetwork<U> {
        QNetwork { arch: self.arch.clone(), params: self.params.iter().map(|p| U::of_f64(p.as_f64())).collect() }
    }

    fn check_input(&self, input: &BatchInput<'_, T>) -> Result<(), NetError> {
        if input.maps.len() != input.n * self.arch.input_len() || input.scalars.len() != input.n {
            return Err(NetError::Shape(format!(
                "batch of {} needs {} map values and {} scalars, got {} and {}",
                input.n,
                input.n * self.arch.input_len(),
                input.n,
                input.maps.len(),
                input.scalars.len()
            )));
        }
        Ok(())
    }

    /// Q-values for a batch, `n x outputs` row-major.
    pub fn forward(&self, input: &BatchInput<'_, T>) -> Result<Vec<T>, NetError> {
        let mut tape = self.forward_tape(input)?;
        Ok(tape.dense_out.pop().unwrap_or_default())
    }

    /// Forward pass that keeps the activations needed for `backward`.
    pub fn forward_tape(&self, input: &BatchInput<'_, T>) -> Result<Tape<T>, NetError> {
        self.check_input(input)?;
        let n = input.n;
        let mut tape = Tape { n, ..Default::default() };
        for (i, l) in self.arch.conv.iter().enumerate() {
            let x: &[T] = if i == 0 { input.maps } else { &tape.conv_out[i - 1] };
            let cols = im2col(x, n, l);
            let rows = n * l.positions();
            let mut out = vec![T::zero(); rows * l.filters];
            let bias = &self.params[l.b.clone()];
            for row in out.chunks_exact_mut(l.filters) {
                row.copy_from_slice(bias);
            }
            gemm(rows, l.patch(), l.filters, &cols, false, &self.params[l.w.clone()], true, T::one(), &mut out);
            relu_in_place(&mut out);
            tape.cols.push(cols);
            tape.conv_out.push(out);
        }

        let flat = self.arch.flatten_len();
        let mut x = vec![T::zero(); n * (flat + 1)];
        let source: &[T] = tape.conv_out.last().map(Vec::as_slice).unwrap_or(input.maps);
        for s in 0..n {
            let row = &mut x[s * (flat + 1)..(s + 1) * (flat + 1)];
            row[..flat].copy_from_slice(&source[s * flat..(s + 1) * flat]);
            row[flat] = input.scalars[s];
        }
        for l in &self.arch.dense {
            let mut out = vec![T::zero(); n * l.outputs];
            let bias = &self.params[l.b.clone()];
            for row in out.chunks_exact_mut(l.outputs) {
                row.copy_from_slice(bias);
            }
            gemm(n, l.inputs, l.outputs, &x, false, &self.params[l.w.clone()], false, T::one(), &mut out);
            if l.relu {
                relu_in_place(&mut out);
            }
            tape.dense_in.push(x);
            x = out.clone();
            tape.dense_out.push(out);
        }
        Ok(tape)
    }

    /// Parameter gradient of `sum(d_out * Q)` for the pass recorded in `tape`.
    pub fn backward(&self, tape: &Tape<T>, d_out: &[T]) -> Vec<T> {
        let n = tape.n;
        assert_eq!(d_out.len(), n * self.arch.outputs, "output gradient has the wrong size");
        let mut grad = vec![T::zero(); self.arch.param_count];
        let mut dy = d_out.to_vec();
        let need_input_grad = !self.arch.conv.is_empty();
        for (i, l) in self.arch.dense.iter().enumerate().rev() {
            if l.relu {
                relu_mask(&mut dy, &tape.dense_out[i]);
            }
            let x = &tape.dense_in[i];
            gemm(l.inputs, n, l.outputs, x, true, &dy, false, T::zero(), &mut grad[l.w.clone()]);
            column_sums(&dy, l.outputs, &mut grad[l.b.clone()]);
            if i > 0 || need_input_grad {
                let mut dx = vec![T::zero(); n * l.inputs];
                gemm(n, l.outputs, l.inputs, &dy, false, &self.params[l.w.clone()], true, T::zero(), &mut dx);
                dy = dx;
            }
        }
        if !need_input_grad {
            return grad;
        }

        // Drop the scalar column to get back to the last conv output.
        let flat = self.arch.flatten_len();
        let mut dy: Vec<T> = dy.chunks_exact(flat + 1).flat_map(|r| r[..flat].iter().copied()).collect();
        for (i, l) in self.arch.conv.iter().enumerate().rev() {
            relu_mask(&mut dy, &tape.conv_out[i]);
            let rows = n * l.positions();
            gemm(l.filters, rows, l.patch(), &dy, true, &tape.cols[i], false, T::zero(), &mut grad[l.w.clone()]);
            column_sums(&dy, l.filters, &mut grad[l.b.clone()]);
            if i > 0 {
                let mut dcols = vec![T::zero(); rows * l.patch()];
                gemm(rows, l.filters, l.patch(), &dy, false, &self.params[l.w.clone()], false, T::zero(), &mut dcols);
                dy = col2im(&dcols, n, l);
            }
        }
        grad
    }
}

/// Patch matrix `[n * positions, kernel * kernel * in_ch]`, columns ordered
/// (ky, kx, channel).
fn im2col<T: Real>(x: &[T], n: usize, l: &ConvLayer) -> Vec<T> {
    let (c, k, side, out_side) = (l.in_ch, l.kernel, l.in_side, l.out_side);
    let patch = l.patch();
    let mut cols = vec![T::zero(); n * l.positions() * patch];
    let mut row = 0;
    for s in 0..n {
        let img = &x[s * side * side * c..(s + 1) * side * side * c];
        for oy in 0..out_side {
            for ox in 0..out_side {
                let dst = &mut cols[row * patch..(row + 1) * patch];
                for ky in 0..k {
                    let src_row = (oy * l.stride + ky) * side + ox * l.stride;
                    let src = &img[src_row * c..(src_row + k) * c];
                    dst[ky * k * c..(ky + 1) * k * c].copy_from_slice(src);
                }
                row += 1;
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], n: usize, l: &ConvLayer) -> Vec<T> {
    let (c, k, side, out_side) = (l.in_ch, l.kernel, l.in_side, l.out_side);
    let patch = l.patch();
    let mut x = vec![T::zero(); n * side * side * c];
    let mut row = 0;
    for s in 0..n {
        let img = &mut x[s * side * side * c..(s + 1) * side * side * c];
        for oy in 0..out_side {
            for ox in 0..out_side {
                let src = &cols[row * patch..(row + 1) * patch];
                for ky in 0..k {
                    let dst_row = (oy * l.stride + ky) * side + ox * l.stride;
                    let dst = &mut img[dst_row * c..(dst_row + k) * c];
                    for (d, &v) in dst.iter_mut().zip(&src[ky * k * c..(ky + 1) * k * c]) {
                        *d = *d + v;
                    }
                }
                row += 1;
            }
        }
    }
    x
}

fn relu_in_place<T: Real>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

fn relu_mask<T: Real>(dy: &mut [T], out: &[T]) {
    for (d, &o) in dy.iter_mut().zip(out) {
        if o <= T::zero() {
            *d = T::zero();
        }
    }
}

fn column_sums<T: Real>(m: &[T], cols: usize, out: &mut [T]) {
    out.iter_mut().for_each(|o| *o = T::zero());
    for row in m.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
}
