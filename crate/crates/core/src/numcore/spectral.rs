//! Orthonormal Haar wavelet and real DFT along the leading (frame) axis.
//!
//! Buffers are row-major `[len, cols]`: every column is an independent
//! signal sampled along the frame axis.

use std::f64::consts::FRAC_1_SQRT_2;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// One Haar level on an even-length buffer. Returns `[2, len/2, cols]`
/// (low band first).
pub fn haar_split(x: &[f64], len: usize, cols: usize) -> Vec<f64> {
    debug_assert!(len % 2 == 0);
    let half = len / 2;
    let mut out = vec![0.0; len * cols];
    let (low, high) = out.split_at_mut(half * cols);
    for k in 0..half {
        let a = &x[2 * k * cols..(2 * k + 1) * cols];
        let b = &x[(2 * k + 1) * cols..(2 * k + 2) * cols];
        for c in 0..cols {
            low[k * cols + c] = (a[c] + b[c]) * FRAC_1_SQRT_2;
            high[k * cols + c] = (a[c] - b[c]) * FRAC_1_SQRT_2;
        }
    }
    out
}

/// Inverse of [`haar_split`]: `[2, half, cols]` back to `[2*half, cols]`.
pub fn haar_merge(y: &[f64], half: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * half * cols];
    let (low, high) = y.split_at(half * cols);
    for k in 0..half {
        for c in 0..cols {
            let l = low[k * cols + c];
            let h = high[k * cols + c];
            out[2 * k * cols + c] = (l + h) * FRAC_1_SQRT_2;
            out[(2 * k + 1) * cols + c] = (l - h) * FRAC_1_SQRT_2;
        }
    }
    out
}

pub fn rfft_bins(len: usize) -> usize {
    len / 2 + 1
}

fn column_fft(x: &[f64], len: usize, cols: usize, inverse: bool, take: usize) -> Vec<Complex64> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    };
    // column-major scratch so each signal is contiguous
    let mut buf: Vec<Complex64> = Vec::with_capacity(len * cols);
    for c in 0..cols {
        for n in 0..len {
            buf.push(Complex64::new(x[n * cols + c], 0.0));
        }
    }
    fft.process(&mut buf);
    let mut out = Vec::with_capacity(take * cols);
    for k in 0..take {
        for c in 0..cols {
            out.push(buf[c * len + k]);
        }
    }
    out
}

fn column_fft_complex(z: &[Complex64], len: usize, cols: usize, inverse: bool) -> Vec<Complex64> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    };
    let mut buf: Vec<Complex64> = Vec::with_capacity(len * cols);
    for c in 0..cols {
        for n in 0..len {
            buf.push(z[n * cols + c]);
        }
    }
    fft.process(&mut buf);
    let mut out = Vec::with_capacity(len * cols);
    for n in 0..len {
        for c in 0..cols {
            out.push(buf[c * len + n]);
        }
    }
    out
}

/// Real DFT of each column: `[len, cols]` -> `(re, im)`, each `[len/2+1, cols]`.
pub fn rfft(x: &[f64], len: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
    let bins = rfft_bins(len);
    let spec = column_fft(x, len, cols, false, bins);
    (
        spec.iter().map(|z| z.re).collect(),
        spec.iter().map(|z| z.im).collect(),
    )
}

/// Inverse real DFT: half spectrum `[len/2+1, cols]` -> `[len, cols]`.
/// Imaginary parts of the DC and (for even `len`) Nyquist bins are ignored.
pub fn irfft(re: &[f64], im: &[f64], len: usize, cols: usize) -> Vec<f64> {
    let bins = rfft_bins(len);
    let mut full = vec![Complex64::new(0.0, 0.0); len * cols];
    for k in 0..bins {
        for c in 0..cols {
            let mut z = Complex64::new(re[k * cols + c], im[k * cols + c]);
            if k == 0 || (len % 2 == 0 && k == len / 2) {
                z.im = 0.0;
            }
            full[k * cols + c] = z;
            if k != 0 && k != len - k {
                full[(len - k) * cols + c] = z.conj();
            }
        }
    }
    let time = column_fft_complex(&full, len, cols, true);
    let scale = 1.0 / len as f64;
    time.iter().map(|z| z.re * scale).collect()
}

/// Adjoint of [`rfft`]: maps half-spectrum cotangents to time-domain ones.
pub fn rfft_adjoint(g_re: &[f64], g_im: &[f64], len: usize, cols: usize) -> Vec<f64> {
    let bins = rfft_bins(len);
    let mut z = vec![Complex64::new(0.0, 0.0); len * cols];
    for k in 0..bins {
        for c in 0..cols {
            z[k * cols + c] = Complex64::new(g_re[k * cols + c], g_im[k * cols + c]);
        }
    }
    column_fft_complex(&z, len, cols, true)
        .iter()
        .map(|v| v.re)
        .collect()
}

/// Adjoint of [`irfft`].
pub fn irfft_adjoint(g: &[f64], len: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
    let bins = rfft_bins(len);
    let (mut re, mut im) = rfft(g, len, cols);
    for k in 0..bins {
        let edge = k == 0 || (len % 2 == 0 && k == len / 2);
        let w = if edge { 1.0 } else { 2.0 } / len as f64;
        for c in 0..cols {
            re[k * cols + c] *= w;
            im[k * cols + c] = if edge { 0.0 } else { im[k * cols + c] * w };
        }
    }
    (re, im)
}
