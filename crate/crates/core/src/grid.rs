//! Dense-array numeric substrate shared by both model stages: masked spatial
//! convolution, causal temporal convolution, bilinear resizing, and image
//! pyramids.
//!
//! Conventions fixed project-wide:
//! - spatial convolution is correlation (the kernel is not flipped) with
//!   replicate padding at the borders;
//! - temporal convolution is causal with zero pre-roll before the first sample;
//! - resizing samples pixel centers at `(i + 0.5) / n` (align-corners = false).

use ndarray::{Array2, Array3};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type Grid2<A> = Array2<A>;
pub type Grid3<A> = Array3<A>;

/// Correlates `image` with a square complex kernel of side `2 * radius + 1`
/// whose support is restricted to the inscribed circle. Borders replicate.
///
/// Kernel entries outside `dx^2 + dy^2 <= radius^2` must be exactly zero.
pub fn conv2d_masked<T: Scalar>(
    image: &Grid2<T>,
    kernel: &Grid2<Complex<T>>,
    radius: usize,
) -> Result<Grid2<Complex<T>>> {
    let side = 2 * radius + 1;
    if kernel.nrows() != side || kernel.ncols() != side {
        return Err(Error::argument(format!(
            "kernel must be {side}x{side} for radius {radius}, got {}x{}",
            kernel.nrows(),
            kernel.ncols()
        )));
    }
    let r2 = (radius * radius) as i64;
    for ((ky, kx), v) in kernel.indexed_iter() {
        let dy = ky as i64 - radius as i64;
        let dx = kx as i64 - radius as i64;
        if dy * dy + dx * dx > r2 && (v.re != T::zero() || v.im != T::zero()) {
            return Err(Error::argument(format!(
                "kernel entry at offset ({dy},{dx}) lies outside the circular support but is nonzero"
            )));
        }
    }

    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return Err(Error::argument("image must be non-empty"));
    }
    // Precompute the in-circle taps once; most kernels are reused across frames.
    let taps: Vec<(i64, i64, Complex<T>)> = kernel
        .indexed_iter()
        .filter_map(|((ky, kx), &v)| {
            let dy = ky as i64 - radius as i64;
            let dx = kx as i64 - radius as i64;
            (dy * dy + dx * dx <= r2).then_some((dy, dx, v))
        })
        .collect();

    let mut out = Grid2::from_elem((h, w), Complex::new(T::zero(), T::zero()));
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = Complex::new(T::zero(), T::zero());
            for &(dy, dx, k) in &taps {
                let sy = (y + dy).clamp(0, h as i64 - 1) as usize;
                let sx = (x + dx).clamp(0, w as i64 - 1) as usize;
                let s = image[(sy, sx)];
                acc.re = acc.re + s * k.re;
                acc.im = acc.im + s * k.im;
            }
            out[(y as usize, x as usize)] = acc;
        }
    }
    Ok(out)
}

/// Causal temporal convolution over the leading axis of a (T, H, W) grid:
/// `out[t] = sum_k seq[t - k] * kernel[k]`, with zero pre-roll for `t - k < 0`.
pub fn conv1d_causal<T: Scalar>(
    seq: &Grid3<Complex<T>>,
    kernel: &[Complex<T>],
) -> Result<Grid3<Complex<T>>> {
    if kernel.is_empty() {
        return Err(Error::argument("temporal kernel must be non-empty"));
    }
    let (t_len, h, w) = seq.dim();
    let mut out = Grid3::from_elem((t_len, h, w), Complex::new(T::zero(), T::zero()));
    for t in 0..t_len {
        for (k, &kv) in kernel.iter().enumerate().take(t + 1) {
            let src = seq.index_axis(ndarray::Axis(0), t - k);
            let mut dst = out.index_axis_mut(ndarray::Axis(0), t);
            dst.zip_mut_with(&src, |d, &s| *d = *d + s * kv);
        }
    }
    Ok(out)
}

/// Per-axis bilinear sampling plan: each output index takes
/// `w0 * in[i0] + w1 * in[i1]`.
#[derive(Debug, Clone)]
pub struct AxisPlan<T> {
    pub taps: Vec<(usize, usize, T, T)>,
    pub in_len: usize,
}

/// Sampling positions for align-corners-false resizing, clamped to the valid
/// range so border values replicate.
pub fn axis_plan<T: Scalar>(in_len: usize, out_len: usize) -> AxisPlan<T> {
    let scale = in_len as f64 / out_len as f64;
    let taps = (0..out_len)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            let frac = src - i0 as f64;
            (i0, i1, T::of(1.0 - frac), T::of(frac))
        })
        .collect();
    AxisPlan { taps, in_len }
}

/// Bilinear resize of a 2-D grid to `(out_h, out_w)`.
pub fn bilinear_resize<T: Scalar>(grid: &Grid2<T>, out_h: usize, out_w: usize) -> Result<Grid2<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::argument("resize target must be at least 1x1"));
    }
    let (h, w) = grid.dim();
    if h == 0 || w == 0 {
        return Err(Error::argument("resize source must be non-empty"));
    }
    if out_h == h && out_w == w {
        return Ok(grid.clone());
    }
    let rows: AxisPlan<T> = axis_plan(h, out_h);
    let cols: AxisPlan<T> = axis_plan(w, out_w);

    // Rows first, then columns; both passes are convex per-pixel blends.
    let mut mid = Grid2::zeros((out_h, w));
    for (oy, &(i0, i1, w0, w1)) in rows.taps.iter().enumerate() {
        for x in 0..w {
            mid[(oy, x)] = grid[(i0, x)] * w0 + grid[(i1, x)] * w1;
        }
    }
    let mut out = Grid2::zeros((out_h, out_w));
    for (ox, &(i0, i1, w0, w1)) in cols.taps.iter().enumerate() {
        for y in 0..out_h {
            out[(y, ox)] = mid[(y, i0)] * w0 + mid[(y, i1)] * w1;
        }
    }
    Ok(out)
}

/// Side scale factors for an image pyramid scaled linearly in side length
/// from 1.0 down to 0.25 (level areas shrink to 1/16 of the original).
pub fn pyramid_scale_factors(levels: usize) -> Vec<f64> {
    if levels <= 1 {
        return vec![1.0];
    }
    (0..levels)
        .map(|k| 1.0 - 0.75 * k as f64 / (levels - 1) as f64)
        .collect()
}

/// Builds a per-frame bilinear pyramid over a (T, H, W) sequence.
pub fn build_pyramid<T: Scalar>(frames: &Grid3<T>, levels: usize) -> Result<Vec<Grid3<T>>> {
    if levels == 0 {
        return Err(Error::argument("pyramid needs at least one level"));
    }
    let (t_len, h, w) = frames.dim();
    if h < 16 || w < 16 {
        return Err(Error::argument(format!(
            "pyramid input must be at least 16x16, got {h}x{w}"
        )));
    }
    let mut out = Vec::with_capacity(levels);
    for s in pyramid_scale_factors(levels) {
        let lh = ((h as f64 * s).round() as usize).max(1);
        let lw = ((w as f64 * s).round() as usize).max(1);
        if lh == 0 || lw == 0 {
            return Err(Error::argument("pyramid level collapsed below one pixel"));
        }
        let mut level = Grid3::zeros((t_len, lh, lw));
        for t in 0..t_len {
            let frame = frames.index_axis(ndarray::Axis(0), t).to_owned();
            let resized = bilinear_resize(&frame, lh, lw)?;
            level.index_axis_mut(ndarray::Axis(0), t).assign(&resized);
        }
        out.push(level);
    }
    Ok(out)
}

/// Naive O(N^2) DFT of a real sequence; used by stimulus diagnostics and the
/// psychophysics battery's harmonic reports.
pub fn dft1d<T: Scalar>(signal: &[T]) -> Vec<Complex<T>> {
    let n = signal.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = Complex::new(T::zero(), T::zero());
        for (t, &s) in signal.iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
            acc.re = acc.re + s * T::of(ang.cos());
            acc.im = acc.im + s * T::of(ang.sin());
        }
        out.push(acc);
    }
    out
}

/// Power of each DFT bin.
pub fn dft_power<T: Scalar>(signal: &[T]) -> Vec<T> {
    dft1d(signal)
        .into_iter()
        .map(|c| c.re * c.re + c.im * c.im)
        .collect()
}
