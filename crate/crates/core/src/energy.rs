//! Stage one: a bank of 256 trainable motion-energy units over an 8-level
//! image pyramid. Each unit is a spatiotemporally separable complex Gabor
//! filter; quadrature pairs are squared and summed into phase-invariant local
//! motion energy, then divisively normalized across the population.
//!
//! The pipeline mean-centers the input sequence before filtering (luminance
//! adaptation), so a constant-luminance input drives no energy beyond the
//! units' response offsets.

use ndarray::{Array2, Array3};
use num_complex::Complex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{bilinear_resize, build_pyramid, conv1d_causal, conv2d_masked, Grid2, Grid3};
use crate::scalar::Scalar;
use crate::stimuli::FrameSequence;

pub const PYRAMID_LEVELS: usize = 8;
pub const BANK_UNITS: usize = 256;
pub const UNITS_PER_LEVEL: usize = BANK_UNITS / PYRAMID_LEVELS;
pub const KERNEL_RADIUS: usize = 7;
pub const TEMPORAL_WINDOW: usize = 8;

/// One motion-energy unit's tuning parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaborUnit<T> {
    /// Carrier spatial frequency, cycles/pixel at the unit's pyramid level.
    pub spatial_freq: T,
    /// Carrier temporal frequency, cycles/frame.
    pub temporal_freq: T,
    /// Preferred motion direction, radians in `[0, 2pi)`.
    pub orientation: T,
    /// Gaussian envelope width in pixels.
    pub sigma: T,
    /// Envelope aspect ratio (scales the off-axis direction).
    pub aspect: T,
    /// Temporal decay constant in frames.
    pub tau: T,
    /// Additive response offset (spontaneous activity analogue).
    pub offset: T,
    /// Pyramid level this unit reads, `0..PYRAMID_LEVELS`.
    pub scale_level: usize,
}

impl<T: Scalar> GaborUnit<T> {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::parameter(msg.to_string()))
            }
        };
        let two_pi = T::of(2.0 * PI);
        check(
            self.orientation >= T::zero() && self.orientation < two_pi,
            "orientation must lie in [0, 2pi)",
        )?;
        check(
            self.spatial_freq > T::zero() && self.spatial_freq < T::of(0.25),
            "spatial frequency must lie in (0, 0.25)",
        )?;
        check(
            self.temporal_freq > T::zero() && self.temporal_freq < T::of(0.25),
            "temporal frequency must lie in (0, 0.25)",
        )?;
        check(self.sigma > T::zero(), "sigma must be positive")?;
        check(self.aspect > T::zero(), "aspect must be positive")?;
        check(self.tau > T::zero(), "tau must be positive")?;
        check(self.scale_level < PYRAMID_LEVELS, "scale level out of range")?;
        Ok(())
    }

    /// Preferred drift speed in native-level pixels/frame.
    pub fn preferred_speed(&self) -> T {
        self.temporal_freq / self.spatial_freq
    }

    /// Preferred velocity in full-resolution pixels/frame, given the side
    /// scale factor of the unit's pyramid level.
    pub fn preferred_velocity_fullres(&self, scale_factor: T) -> (T, T) {
        let speed = self.preferred_speed() / scale_factor;
        (speed * self.orientation.cos(), speed * self.orientation.sin())
    }
}

/// Complex spatial impulse response on a `(2R+1)^2` grid, zero outside the
/// inscribed circle. Index `(ky, kx)` holds the offset `(dy, dx) = (ky - R,
/// kx - R)`; `x` is the column (rightward), `y` the row (downward).
pub fn spatial_kernel<T: Scalar>(unit: &GaborUnit<T>) -> Result<Grid2<Complex<T>>> {
    unit.validate()?;
    let r = KERNEL_RADIUS as i64;
    let side = 2 * KERNEL_RADIUS + 1;
    let two = T::of(2.0);
    let two_pi = T::of(2.0 * PI);
    let (sin_t, cos_t) = (unit.orientation.sin(), unit.orientation.cos());
    let mut k = Array2::from_elem((side, side), Complex::new(T::zero(), T::zero()));
    for ky in 0..side {
        for kx in 0..side {
            let dy = ky as i64 - r;
            let dx = kx as i64 - r;
            if dy * dy + dx * dx > r * r {
                continue;
            }
            let x = T::of(dx as f64);
            let y = T::of(dy as f64);
            let xr = x * cos_t + y * sin_t;
            let yr = -x * sin_t + y * cos_t;
            let env = (-(xr * xr + unit.aspect * unit.aspect * yr * yr)
                / (two * unit.sigma * unit.sigma))
                .exp();
            let arg = two_pi * unit.spatial_freq * xr;
            k[(ky, kx)] = Complex::new(env * arg.cos(), env * arg.sin());
        }
    }
    Ok(k)
}

/// Complex temporal impulse response for lags `0..window`:
/// exponential decay times a complex carrier.
pub fn temporal_kernel<T: Scalar>(unit: &GaborUnit<T>, window: usize) -> Result<Vec<Complex<T>>> {
    unit.validate()?;
    if window == 0 {
        return Err(Error::argument("temporal window must be at least 1"));
    }
    let two_pi = T::of(2.0 * PI);
    Ok((0..window)
        .map(|t| {
            let tf = T::of(t as f64);
            let decay = (-tf / unit.tau).exp();
            let arg = two_pi * unit.temporal_freq * tf;
            Complex::new(decay * arg.cos(), decay * arg.sin())
        })
        .collect())
}

/// Even/odd simple-cell response grids for one unit over a (T, H, W) level
/// sequence: the real and imaginary parts of the separable complex filter
/// response, each with the unit's offset added.
pub fn quadrature_responses<T: Scalar>(
    level_frames: &Grid3<T>,
    unit: &GaborUnit<T>,
    window: usize,
) -> Result<(Grid3<T>, Grid3<T>)> {
    let (t_len, _, _) = level_frames.dim();
    if t_len < 2 {
        return Err(Error::argument("need at least 2 frames"));
    }
    let sk = spatial_kernel(unit)?;
    let tk = temporal_kernel(unit, window)?;

    let (t_len, h, w) = level_frames.dim();
    let mut spatial = Grid3::from_elem((t_len, h, w), Complex::new(T::zero(), T::zero()));
    for t in 0..t_len {
        let frame = level_frames.index_axis(ndarray::Axis(0), t).to_owned();
        let resp = conv2d_masked(&frame, &sk, KERNEL_RADIUS)?;
        spatial.index_axis_mut(ndarray::Axis(0), t).assign(&resp);
    }
    let full = conv1d_causal(&spatial, &tk)?;
    let odd = full.mapv(|c| c.im + unit.offset);
    let even = full.mapv(|c| c.re + unit.offset);
    Ok((odd, even))
}

/// Phase-invariant motion energy: elementwise `odd^2 + even^2`.
pub fn motion_energy<T: Scalar>(odd: &Grid3<T>, even: &Grid3<T>) -> Grid3<T> {
    let mut out = odd.mapv(|v| v * v);
    out.zip_mut_with(even, |o, &e| *o = *o + e * e);
    out
}

/// Divisive normalization across the unit population at one location:
/// `out_n = gain * e_n / (sum_i e_i + semi_saturation)`.
pub fn normalize_across_units<T: Scalar>(energies: &[T], gain: T, semi_saturation: T) -> Vec<T> {
    let total: T = energies.iter().copied().sum();
    let denom = total + semi_saturation;
    energies.iter().map(|&e| gain * e / denom).collect()
}

/// Normalized motion-energy map at 1/8 resolution: `(H/8, W/8, 256)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap<T> {
    pub data: Array3<T>,
}

impl<T: Scalar> EnergyMap<T> {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }
}

/// The full stage-one parameter set.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyBank<T> {
    version: u32,
    pub units: Vec<GaborUnit<T>>,
    /// Normalization gain (maximum attainable response).
    pub gain: T,
    /// Normalization semi-saturation constant.
    pub semi_saturation: T,
    pub kernel_radius: usize,
    pub temporal_window: usize,
}

impl<T: Scalar> EnergyBank<T> {
    pub fn new(units: Vec<GaborUnit<T>>, gain: T, semi_saturation: T) -> Result<Self> {
        let bank = Self {
            version: 1,
            units,
            gain,
            semi_saturation,
            kernel_radius: KERNEL_RADIUS,
            temporal_window: TEMPORAL_WINDOW,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.len() != BANK_UNITS {
            return Err(Error::parameter(format!(
                "bank must hold exactly {BANK_UNITS} units, got {}",
                self.units.len()
            )));
        }
        if self.gain <= T::zero() || self.semi_saturation <= T::zero() {
            return Err(Error::parameter(
                "gain and semi-saturation must be positive".to_string(),
            ));
        }
        for u in &self.units {
            u.validate()?;
        }
        Ok(())
    }

    /// Random bank: per level, 32 units with log-uniform frequencies, uniform
    /// orientation and envelope parameters. Serves as the untrained default.
    pub fn seeded_random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log_f = |rng: &mut ChaCha8Rng| {
            let lo = 0.02f64.ln();
            let hi = 0.24f64.ln();
            rng.random_range(lo..hi).exp()
        };
        let units = (0..PYRAMID_LEVELS)
            .flat_map(|level| {
                (0..UNITS_PER_LEVEL)
                    .map(|_| GaborUnit {
                        spatial_freq: T::of(log_f(&mut rng)),
                        temporal_freq: T::of(log_f(&mut rng)),
                        orientation: T::of(rng.random_range(0.0..(2.0 * PI))),
                        sigma: T::of(rng.random_range(2.0..5.0)),
                        aspect: T::of(rng.random_range(0.5..1.5)),
                        tau: T::of(rng.random_range(1.0..8.0)),
                        offset: T::zero(),
                        scale_level: level,
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Self::new(units, T::one(), T::one()).expect("generated units satisfy the invariants")
    }

    /// Equal-interval tuning grid: 8 orientations x 4 spatiotemporal frequency
    /// pairs per level. The non-fitted baseline design.
    pub fn fixed_design() -> Self {
        const FREQS: [(f64, f64); 4] = [(0.08, 0.08), (0.08, 0.16), (0.16, 0.08), (0.16, 0.16)];
        let units = (0..PYRAMID_LEVELS)
            .flat_map(|level| {
                (0..8).flat_map(move |d| {
                    FREQS.iter().map(move |&(fs, ft)| GaborUnit {
                        spatial_freq: T::of(fs),
                        temporal_freq: T::of(ft),
                        orientation: T::of(d as f64 * PI / 4.0),
                        sigma: T::of(3.0),
                        aspect: T::one(),
                        tau: T::of(4.0),
                        offset: T::zero(),
                        scale_level: level,
                    })
                })
            })
            .collect();
        Self::new(units, T::one(), T::one()).expect("fixed design satisfies the invariants")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(format!("bank encode: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let bank: Self =
            serde_json::from_str(&text).map_err(|e| Error::format(format!("bank decode: {e}")))?;
        if bank.version != 1 {
            return Err(Error::format(format!(
                "unsupported bank version {}",
                bank.version
            )));
        }
        bank.validate()?;
        Ok(bank)
    }

    /// Indices of the bank's units grouped by pyramid level.
    pub fn units_by_level(&self) -> Vec<Vec<usize>> {
        let mut by_level = vec![Vec::new(); PYRAMID_LEVELS];
        for (i, u) in self.units.iter().enumerate() {
            by_level[u.scale_level].push(i);
        }
        by_level
    }
}

/// Subtracts the sequence mean (luminance adaptation).
pub fn center_sequence<T: Scalar>(seq: &FrameSequence<T>) -> Grid3<T> {
    let frames = seq.frames();
    let n = T::of(frames.len() as f64);
    let mean = frames.iter().copied().sum::<T>() / n;
    frames.mapv(|v| v - mean)
}

/// Runs the full stage-one pipeline: pyramid, per-unit quadrature filtering,
/// final-frame readout, resize to the common 1/8-scale grid, and divisive
/// normalization across units at each location.
pub fn stage1_forward<T: Scalar>(seq: &FrameSequence<T>, bank: &EnergyBank<T>) -> Result<EnergyMap<T>> {
    bank.validate()?;
    let (t_len, h, w) = seq.dims();
    if h % 8 != 0 || w % 8 != 0 {
        return Err(Error::argument(format!(
            "frame size {h}x{w} must be divisible by 8"
        )));
    }
    if t_len < bank.temporal_window {
        return Err(Error::argument(format!(
            "sequence length {t_len} shorter than the temporal window {}",
            bank.temporal_window
        )));
    }
    let centered = center_sequence(seq);
    // The final-frame readout only sees the last `temporal_window` frames.
    let tail = centered
        .slice(ndarray::s![t_len - bank.temporal_window.., .., ..])
        .to_owned();
    let pyramid = build_pyramid(&tail, PYRAMID_LEVELS)?;
    let (map_h, map_w) = (h / 8, w / 8);

    let maps: Vec<Grid2<T>> = bank
        .units
        .par_iter()
        .map(|unit| -> Result<Grid2<T>> {
            let level = &pyramid[unit.scale_level];
            let (odd, even) = quadrature_responses(level, unit, bank.temporal_window)?;
            let energy = motion_energy(&odd, &even);
            let last = energy
                .index_axis(ndarray::Axis(0), bank.temporal_window - 1)
                .to_owned();
            bilinear_resize(&last, map_h, map_w)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut data = Array3::zeros((map_h, map_w, BANK_UNITS));
    for (c, m) in maps.iter().enumerate() {
        for y in 0..map_h {
            for x in 0..map_w {
                data[(y, x, c)] = m[(y, x)];
            }
        }
    }
    for y in 0..map_h {
        for x in 0..map_w {
            let column: Vec<T> = (0..BANK_UNITS).map(|c| data[(y, x, c)]).collect();
            let normed = normalize_across_units(&column, bank.gain, bank.semi_saturation);
            for (c, v) in normed.into_iter().enumerate() {
                data[(y, x, c)] = v;
            }
        }
    }
    Ok(EnergyMap { data })
}

/// Complex spatial response of one kernel at a single pixel (replicate
/// borders): the cheap probe used by the tuning analyses.
fn spatial_response_at<T: Scalar>(
    frame: &ndarray::ArrayView2<'_, T>,
    kernel: &Grid2<Complex<T>>,
    y: usize,
    x: usize,
) -> Complex<T> {
    let (h, w) = frame.dim();
    let r = KERNEL_RADIUS as i64;
    let mut acc = Complex::new(T::zero(), T::zero());
    for dy in -r..=r {
        for dx in -r..=r {
            if dy * dy + dx * dx > r * r {
                continue;
            }
            let k = kernel[((dy + r) as usize, (dx + r) as usize)];
            if k.re == T::zero() && k.im == T::zero() {
                continue;
            }
            let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
            let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
            let s = frame[(sy, sx)];
            acc.re = acc.re + s * k.re;
            acc.im = acc.im + s * k.im;
        }
    }
    acc
}

/// Normalized per-unit energy time courses probed at the center of each
/// unit's pyramid level: a `(T, 256)` array. Rows before the temporal window
/// fills are transient.
pub fn energy_timecourse_at_center<T: Scalar>(
    seq: &FrameSequence<T>,
    bank: &EnergyBank<T>,
) -> Result<Array2<T>> {
    bank.validate()?;
    let centered = center_sequence(seq);
    let pyramid = build_pyramid(&centered, PYRAMID_LEVELS)?;
    let (t_len, _, _) = centered.dim();

    let series: Vec<Vec<T>> = bank
        .units
        .par_iter()
        .map(|unit| -> Result<Vec<T>> {
            let level = &pyramid[unit.scale_level];
            let (_, lh, lw) = level.dim();
            let (cy, cx) = (lh / 2, lw / 2);
            let sk = spatial_kernel(unit)?;
            let tk = temporal_kernel(unit, bank.temporal_window)?;
            let spatial: Vec<Complex<T>> = (0..t_len)
                .map(|t| {
                    let frame = level.index_axis(ndarray::Axis(0), t);
                    spatial_response_at(&frame, &sk, cy, cx)
                })
                .collect();
            Ok((0..t_len)
                .map(|t| {
                    let mut acc = Complex::new(T::zero(), T::zero());
                    for (k, kv) in tk.iter().enumerate().take(t + 1) {
                        acc += spatial[t - k] * kv;
                    }
                    let odd = acc.im + unit.offset;
                    let even = acc.re + unit.offset;
                    odd * odd + even * even
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Array2::zeros((t_len, BANK_UNITS));
    for t in 0..t_len {
        let column: Vec<T> = (0..BANK_UNITS).map(|c| series[c][t]).collect();
        let normed = normalize_across_units(&column, bank.gain, bank.semi_saturation);
        for (c, v) in normed.into_iter().enumerate() {
            out[(t, c)] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::pyramid_scale_factors;
    use crate::stimuli::{drifting_grating, MotionSpec, Waveform};
    use approx::assert_relative_eq;

    fn test_unit(level: usize) -> GaborUnit<f64> {
        GaborUnit {
            spatial_freq: 0.1,
            temporal_freq: 0.1,
            orientation: 0.0,
            sigma: 3.0,
            aspect: 1.0,
            tau: 4.0,
            offset: 0.0,
            scale_level: level,
        }
    }

    #[test]
    fn spatial_kernel_symmetries_at_zero_orientation() {
        let k = spatial_kernel(&test_unit(0)).unwrap();
        let r = KERNEL_RADIUS;
        for dy in -7i64..=7 {
            for dx in -7i64..=7 {
                if dx * dx + dy * dy > 49 {
                    continue;
                }
                let at = |dy: i64, dx: i64| k[((dy + 7) as usize, (dx + 7) as usize)];
                // Real part even under y -> -y; imaginary part odd under x -> -x.
                assert_relative_eq!(at(dy, dx).re, at(-dy, dx).re, epsilon = 1e-15);
                assert_relative_eq!(at(dy, dx).im, -at(dy, -dx).im, epsilon = 1e-15);
            }
        }
        let _ = r;
    }

    #[test]
    fn spatial_kernel_degenerates_to_gaussian_at_tiny_frequency() {
        let mut u = test_unit(0);
        u.spatial_freq = 1e-9;
        let k = spatial_kernel(&u).unwrap();
        for ((ky, kx), v) in k.indexed_iter() {
            let dy = ky as f64 - 7.0;
            let dx = kx as f64 - 7.0;
            if dx * dx + dy * dy > 49.0 {
                continue;
            }
            assert!(v.im.abs() < 1e-7);
            let want = (-(dx * dx + dy * dy) / (2.0 * u.sigma * u.sigma)).exp();
            assert_relative_eq!(v.re, want, epsilon = 1e-7);
        }
    }

    #[test]
    fn spatial_kernel_hand_value() {
        let u = test_unit(0);
        let k = spatial_kernel(&u).unwrap();
        // Offset (dx, dy) = (1, 0) at orientation 0.
        let got = k[(7, 8)];
        let want_env = (-1.0 / (2.0 * u.sigma * u.sigma)).exp();
        let arg = 2.0 * PI * u.spatial_freq;
        assert_relative_eq!(got.re, want_env * arg.cos(), epsilon = 1e-15);
        assert_relative_eq!(got.im, want_env * arg.sin(), epsilon = 1e-15);
    }

    #[test]
    fn spatial_kernel_is_zero_outside_circle() {
        let k = spatial_kernel(&test_unit(0)).unwrap();
        assert_eq!(k[(0, 0)], Complex::new(0.0, 0.0));
        assert_eq!(k[(14, 14)], Complex::new(0.0, 0.0));
    }

    #[test]
    fn temporal_kernel_starts_at_unity() {
        let tk = temporal_kernel(&test_unit(0), 8).unwrap();
        assert_eq!(tk[0], Complex::new(1.0, 0.0));
    }

    #[test]
    fn temporal_kernel_without_decay_has_unit_magnitude() {
        let mut u = test_unit(0);
        u.tau = 1e12;
        let tk = temporal_kernel(&u, 8).unwrap();
        for c in tk {
            assert_relative_eq!(c.norm(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn temporal_kernel_hand_value() {
        let mut u = test_unit(0);
        u.temporal_freq = 0.1;
        u.tau = 4.0;
        let tk = temporal_kernel(&u, 8).unwrap();
        // t = 5: exp(-5/4) * exp(i * 2pi * 0.5) = exp(-1.25) * exp(i*pi).
        let want = (-1.25f64).exp();
        assert_relative_eq!(tk[5].re, -want, epsilon = 1e-12);
        assert_relative_eq!(tk[5].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn quadrature_of_zero_input_is_zero() {
        let frames = Grid3::zeros((6, 20, 20));
        let (odd, even) = quadrature_responses(&frames, &test_unit(0), 8).unwrap();
        assert!(odd.iter().all(|&v| v == 0.0));
        assert!(even.iter().all(|&v| v == 0.0));
    }

    /// Builds the centered preferred stimulus of a unit at its native level.
    fn preferred_stimulus(u: &GaborUnit<f64>, t_len: usize, h: usize, w: usize) -> Grid3<f64> {
        let speed = u.preferred_speed();
        let spec = MotionSpec::new(
            (speed * u.orientation.cos(), speed * u.orientation.sin()),
            u.orientation,
            u.spatial_freq,
            1.0,
        );
        let seq = drifting_grating(&spec, t_len, h, w, Waveform::Sine).unwrap();
        seq.frames().mapv(|v| v - 0.5)
    }

    #[test]
    fn quadrature_pair_is_ninety_degrees_apart_on_preferred_grating() {
        let u = test_unit(0);
        let frames = preferred_stimulus(&u, 24, 32, 32);
        let (odd, even) = quadrature_responses(&frames, &u, 8).unwrap();
        // Steady-state response at the center pixel: the phasor
        // even + i*odd should rotate at constant magnitude.
        let mags: Vec<f64> = (10..24)
            .map(|t| {
                let e = even[(t, 16, 16)];
                let o = odd[(t, 16, 16)];
                (e * e + o * o).sqrt()
            })
            .collect();
        let mean = mags.iter().sum::<f64>() / mags.len() as f64;
        assert!(mean > 1e-3, "unit must respond to its preferred grating");
        for m in &mags {
            assert_relative_eq!(*m, mean, max_relative = 0.02);
        }
        // Phase advances by 2*pi*f_t per frame.
        for t in 10..23 {
            let a0 = odd[(t, 16, 16)].atan2(even[(t, 16, 16)]);
            let a1 = odd[(t + 1, 16, 16)].atan2(even[(t + 1, 16, 16)]);
            let mut d = a1 - a0;
            while d > PI {
                d -= 2.0 * PI;
            }
            while d < -PI {
                d += 2.0 * PI;
            }
            assert_relative_eq!(d, 2.0 * PI * u.temporal_freq, max_relative = 0.05);
        }
    }

    /// Direct non-separable 3-D convolution oracle: correlate with the full
    /// complex kernel `G(dx, dy) * T(k)` (replicate space, zero pre-roll).
    fn brute_force_quadrature(
        frames: &Grid3<f64>,
        unit: &GaborUnit<f64>,
        window: usize,
    ) -> (Grid3<f64>, Grid3<f64>) {
        let sk = spatial_kernel(unit).unwrap();
        let tk = temporal_kernel(unit, window).unwrap();
        let (t_len, h, w) = frames.dim();
        let r = KERNEL_RADIUS as i64;
        let mut odd = Grid3::zeros((t_len, h, w));
        let mut even = Grid3::zeros((t_len, h, w));
        for t in 0..t_len {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = Complex::new(0.0, 0.0);
                    for (k, kt) in tk.iter().enumerate().take(t + 1) {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                if dy * dy + dx * dx > r * r {
                                    continue;
                                }
                                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                                let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                                let g = sk[((dy + r) as usize, (dx + r) as usize)];
                                acc += g * kt * frames[(t - k, sy, sx)];
                            }
                        }
                    }
                    odd[(t, y, x)] = acc.im + unit.offset;
                    even[(t, y, x)] = acc.re + unit.offset;
                }
            }
        }
        (odd, even)
    }

    #[test]
    fn separable_pipeline_matches_nonseparable_oracle() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let frames = Grid3::from_shape_fn((6, 12, 12), |_| rng.random_range(-1.0..1.0));
        let mut u = test_unit(0);
        u.offset = 0.3;
        let (odd, even) = quadrature_responses(&frames, &u, 6).unwrap();
        let (bodd, beven) = brute_force_quadrature(&frames, &u, 6);
        for (a, b) in odd.iter().zip(bodd.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
        for (a, b) in even.iter().zip(beven.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn energy_is_constant_after_transient_and_direction_selective() {
        let u = test_unit(0);
        let frames = preferred_stimulus(&u, 24, 32, 32);
        let (odd, even) = quadrature_responses(&frames, &u, 8).unwrap();
        let energy = motion_energy(&odd, &even);
        let series: Vec<f64> = (16..24).map(|t| energy[(t, 16, 16)]).collect();
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / series.len() as f64;
        assert!(var.sqrt() / mean < 0.05, "cv = {}", var.sqrt() / mean);

        // Reverse the drift direction: energy must drop.
        let mut anti = u;
        anti.orientation = PI;
        let anti_frames = preferred_stimulus(&anti, 24, 32, 32);
        let (aodd, aeven) = quadrature_responses(&anti_frames, &u, 8).unwrap();
        let anti_energy = motion_energy(&aodd, &aeven);
        let anti_mean: f64 = (16..24).map(|t| anti_energy[(t, 16, 16)]).sum::<f64>() / 8.0;
        assert!(
            mean > 3.0 * anti_mean,
            "preferred {mean} vs anti {anti_mean}"
        );
    }

    #[test]
    fn normalization_edge_cases() {
        let zeros = vec![0.0f64; 256];
        assert!(normalize_across_units(&zeros, 1.0, 1.0)
            .iter()
            .all(|&v| v == 0.0));

        let equal = vec![0.5f64; 256];
        let out = normalize_across_units(&equal, 2.0, 0.25);
        for v in &out {
            assert_relative_eq!(*v, 2.0 * 0.5 / (256.0 * 0.5 + 0.25), epsilon = 1e-12);
        }

        let mixed: Vec<f64> = (0..256).map(|i| i as f64 / 256.0).collect();
        let gain = 1.5;
        let sum_in: f64 = mixed.iter().sum();
        let out = normalize_across_units(&mixed, gain, 0.1);
        let sum_out: f64 = out.iter().sum();
        assert_relative_eq!(sum_out, gain * sum_in / (sum_in + 0.1), epsilon = 1e-10);
        assert!(sum_out < gain);
    }

    #[test]
    fn forward_shape_and_constant_input_behavior() {
        let bank = EnergyBank::<f64>::fixed_design();
        let frames = Grid3::from_elem((8, 32, 32), 0.73);
        let seq = FrameSequence::from_raw(frames).unwrap();
        let map = stage1_forward(&seq, &bank).unwrap();
        assert_eq!(map.dims(), (4, 4, 256));
        // Mean-centered constant input with zero offsets: exactly no energy.
        assert!(map.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_with_offset_gives_uniform_positive_map() {
        let mut bank = EnergyBank::<f64>::fixed_design();
        for u in &mut bank.units {
            u.offset = 0.1;
        }
        let frames = Grid3::from_elem((8, 32, 32), 0.2);
        let seq = FrameSequence::from_raw(frames).unwrap();
        let map = stage1_forward(&seq, &bank).unwrap();
        let first = map.data[(0, 0, 0)];
        assert!(first > 0.0);
        for &v in map.data.iter() {
            assert_relative_eq!(v, first, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_rejects_bad_dims() {
        let bank = EnergyBank::<f64>::fixed_design();
        let seq = FrameSequence::from_raw(Grid3::from_elem((8, 30, 32), 0.5)).unwrap();
        assert!(matches!(
            stage1_forward(&seq, &bank),
            Err(Error::Argument(_))
        ));
        let short = FrameSequence::from_raw(Grid3::from_elem((4, 32, 32), 0.5)).unwrap();
        assert!(matches!(
            stage1_forward(&short, &bank),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn full_field_grating_yields_spatially_uniform_map_away_from_borders() {
        let bank = EnergyBank::<f64>::fixed_design();
        // Low full-resolution frequency keeps every level far from Nyquist so
        // resampling ripple stays small.
        let spec = MotionSpec::new((10.0, 0.0), 0.0, 0.008, 1.0);
        let seq = drifting_grating(&spec, 12, 128, 128, Waveform::Sine).unwrap();
        let map = stage1_forward(&seq, &bank).unwrap();
        let (mh, mw, _) = map.dims();
        // Interior margin of 4 map cells covers the largest receptive field
        // (level-7 kernels span ~28 full-resolution pixels).
        let m = 4;
        for c in 0..BANK_UNITS {
            let mut vals = Vec::new();
            for y in m..mh - m {
                for x in m..mw - m {
                    vals.push(map.data[(y, x, c)]);
                }
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            if mean < 1e-12 {
                continue;
            }
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(
                var.sqrt() / mean < 0.01,
                "channel {c}: cv {}",
                var.sqrt() / mean
            );
        }
    }

    #[test]
    fn bank_json_round_trip_is_exact() {
        let bank = EnergyBank::<f64>::seeded_random(42);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.json");
        bank.save(&path).unwrap();
        let loaded = EnergyBank::<f64>::load(&path).unwrap();
        assert_eq!(bank, loaded);
    }

    #[test]
    fn seeded_bank_is_deterministic_and_valid() {
        let a = EnergyBank::<f64>::seeded_random(7);
        let b = EnergyBank::<f64>::seeded_random(7);
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.units.len(), BANK_UNITS);
        for level in a.units_by_level() {
            assert_eq!(level.len(), UNITS_PER_LEVEL);
        }
    }

    #[test]
    fn preferred_velocity_scales_with_level() {
        let u = test_unit(3);
        let s = pyramid_scale_factors(PYRAMID_LEVELS)[3];
        let (vx, vy) = u.preferred_velocity_fullres(s);
        assert_relative_eq!(vx, u.preferred_speed() / s, epsilon = 1e-12);
        assert_relative_eq!(vy, 0.0, epsilon = 1e-12);
    }
}
