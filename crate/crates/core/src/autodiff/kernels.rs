//! Raw slice kernels shared by forward and backward rules.

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`
pub(crate) fn matmul_nt_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`
pub(crate) fn matmul_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Swaps axes `a` and `b`; returns the permuted shape and data.
pub(crate) fn transpose(shape: &[usize], data: &[f64], a: usize, b: usize) -> (Vec<usize>, Vec<f64>) {
    let mut out_shape = shape.to_vec();
    out_shape.swap(a, b);
    let in_strides = strides(shape);
    let mut src_strides = in_strides.clone();
    src_strides.swap(a, b);
    let rank = shape.len();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; rank];
    for _ in 0..data.len() {
        let src: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.push(data[src]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    (out_shape, out)
}

/// Geometry of a causal dilated 1-D convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub len: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl ConvDims {
    /// Time offset into the past read by kernel tap `j`.
    fn lag(&self, j: usize) -> usize {
        (self.kernel - 1 - j) * self.dilation
    }
}

/// y[b,o,t] = bias[o] + Σ_{c,j} w[o,c,j] · x[b,c,t − (k−1−j)·d], zeros before t=0.
pub(crate) fn causal_conv_forward(x: &[f64], w: &[f64], bias: &[f64], dims: ConvDims) -> Vec<f64> {
    let ConvDims {
        batch,
        in_ch,
        out_ch,
        len,
        kernel,
        ..
    } = dims;
    let mut y = vec![0.0; batch * out_ch * len];
    for b in 0..batch {
        for o in 0..out_ch {
            let yrow = &mut y[(b * out_ch + o) * len..(b * out_ch + o + 1) * len];
            yrow.fill(bias[o]);
            for c in 0..in_ch {
                let xrow = &x[(b * in_ch + c) * len..(b * in_ch + c + 1) * len];
                for j in 0..kernel {
                    let wv = w[(o * in_ch + c) * kernel + j];
                    let lag = dims.lag(j);
                    if lag >= len {
                        continue;
                    }
                    for (yv, &xv) in yrow[lag..].iter_mut().zip(&xrow[..len - lag]) {
                        *yv += wv * xv;
                    }
                }
            }
        }
    }
    y
}

/// Returns (dx, dw, dbias) for the causal convolution.
pub(crate) fn causal_conv_backward(x: &[f64], w: &[f64], dy: &[f64], dims: ConvDims) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let ConvDims {
        batch,
        in_ch,
        out_ch,
        len,
        kernel,
        ..
    } = dims;
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; out_ch];
    for b in 0..batch {
        for o in 0..out_ch {
            let dyrow = &dy[(b * out_ch + o) * len..(b * out_ch + o + 1) * len];
            db[o] += dyrow.iter().sum::<f64>();
            for c in 0..in_ch {
                let base = (b * in_ch + c) * len;
                for j in 0..kernel {
                    let lag = dims.lag(j);
                    if lag >= len {
                        continue;
                    }
                    let widx = (o * in_ch + c) * kernel + j;
                    let wv = w[widx];
                    let xrow = &x[base..base + len - lag];
                    let upstream = &dyrow[lag..];
                    dw[widx] += xrow.iter().zip(upstream).map(|(a, g)| a * g).sum::<f64>();
                    for (dxv, &g) in dx[base..base + len - lag].iter_mut().zip(upstream) {
                        *dxv += wv * g;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}
