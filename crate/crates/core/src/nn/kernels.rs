//! Plain numeric kernels shared by the autodiff graph and the inference path.

/// Floor applied to probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// `y[b×out] = x[b×in] · wᵀ + bias`, with `w` stored `out × in`.
pub fn linear(x: &[f64], w: &[f64], bias: &[f64], batch: usize, in_dim: usize, out_dim: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(batch * out_dim);
    for _ in 0..batch {
        y.extend_from_slice(bias);
    }
    if batch == 0 {
        return y;
    }
    // SAFETY: slice lengths are checked by the callers against the given dims.
    unsafe {
        matrixmultiply::dgemm(
            batch,
            in_dim,
            out_dim,
            1.0,
            x.as_ptr(),
            in_dim as isize,
            1,
            w.as_ptr(),
            1,
            in_dim as isize,
            1.0,
            y.as_mut_ptr(),
            out_dim as isize,
            1,
        );
    }
    y
}

/// `dx[b×in] += dy[b×out] · w[out×in]`.
pub fn linear_grad_input(dy: &[f64], w: &[f64], dx: &mut [f64], batch: usize, in_dim: usize, out_dim: usize) {
    if batch == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            batch,
            out_dim,
            in_dim,
            1.0,
            dy.as_ptr(),
            out_dim as isize,
            1,
            w.as_ptr(),
            in_dim as isize,
            1,
            1.0,
            dx.as_mut_ptr(),
            in_dim as isize,
            1,
        );
    }
}

/// `dw[out×in] += dyᵀ · x`.
pub fn linear_grad_weight(dy: &[f64], x: &[f64], dw: &mut [f64], batch: usize, in_dim: usize, out_dim: usize) {
    if batch == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            out_dim,
            batch,
            in_dim,
            1.0,
            dy.as_ptr(),
            1,
            out_dim as isize,
            x.as_ptr(),
            in_dim as isize,
            1,
            1.0,
            dw.as_mut_ptr(),
            in_dim as isize,
            1,
        );
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, dst) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            sum += *d;
        }
        dst.iter_mut().for_each(|d| *d /= sum);
    }
    out
}

/// `max + ln Σ exp(v − max)` for one row.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
