//! Deterministic stimulus generators (gratings, Gabors, plaids, missing
//! fundamental, barber pole, Gabor arrays, translating textures) plus
//! image-sequence loading and saving.
//!
//! Coordinates: `x` grows rightward (columns), `y` grows downward (rows),
//! both centered on the frame. A carrier with normal direction `theta` and
//! drift speed `s` moves toward `(cos theta, sin theta)` at `s` pixels per
//! frame; the drift speed of a grating is the projection of the nominal 2-D
//! velocity onto its normal.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid2, Grid3};
use crate::scalar::Scalar;

/// Grayscale video clip in `[0, 1]`, one model tick per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence<T> {
    frames: Grid3<T>,
}

impl<T: Scalar> FrameSequence<T> {
    /// Clips values into `[0, 1]` and enforces the two-frame minimum.
    pub fn from_raw(frames: Grid3<T>) -> Result<Self> {
        let (t_len, _, _) = frames.dim();
        if t_len < 2 {
            return Err(Error::argument("a frame sequence needs at least 2 frames"));
        }
        let mut frames = frames;
        frames.mapv_inplace(|v| v.max(T::zero()).min(T::one()));
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &Grid3<T> {
        &self.frames
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.frames.dim()
    }

    pub fn frame(&self, t: usize) -> Array2<T> {
        self.frames.index_axis(ndarray::Axis(0), t).to_owned()
    }
}

/// Carrier and motion parameters shared by the grating-family generators.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MotionSpec<T> {
    /// Nominal 2-D velocity in pixels/frame, `(vx, vy)`.
    pub velocity: (T, T),
    /// Carrier normal direction in radians.
    pub orientation: T,
    /// Carrier spatial frequency in cycles/pixel (must stay below Nyquist).
    pub spatial_freq: T,
    /// Michelson contrast in `[0, 1]`.
    pub contrast: T,
    /// Carrier phase offset in radians.
    pub phase: T,
    pub seed: u64,
}

impl<T: Scalar> MotionSpec<T> {
    pub fn new(velocity: (T, T), orientation: T, spatial_freq: T, contrast: T) -> Self {
        Self {
            velocity,
            orientation,
            spatial_freq,
            contrast,
            phase: T::zero(),
            seed: 0,
        }
    }

    pub fn with_phase(mut self, phase: T) -> Self {
        self.phase = phase;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.spatial_freq.as_f64();
        if !(f > 0.0 && f < 0.5) {
            return Err(Error::argument(format!(
                "spatial frequency {f} aliases; need 0 < f < 0.5 cycles/pixel"
            )));
        }
        let c = self.contrast.as_f64();
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::argument(format!("contrast {c} outside [0, 1]")));
        }
        Ok(())
    }

    /// Signed drift speed along the carrier normal: `v . (cos t, sin t)`.
    pub fn drift_speed(&self) -> T {
        let (c, s) = (self.orientation.cos(), self.orientation.sin());
        self.velocity.0 * c + self.velocity.1 * s
    }

    /// Temporal frequency in cycles/frame induced by the drift.
    pub fn temporal_freq(&self) -> T {
        self.spatial_freq * self.drift_speed()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Waveform {
    Sine,
    Square,
}

fn centered<T: Scalar>(idx: usize, len: usize) -> T {
    T::of(idx as f64 - (len as f64 - 1.0) / 2.0)
}

/// Carrier modulation in `[-1, 1]` at centered position `(xc, yc)`, frame `t`.
fn carrier<T: Scalar>(spec: &MotionSpec<T>, wave: Waveform, xc: T, yc: T, t: usize) -> T {
    let two_pi = T::of(2.0 * PI);
    let along = xc * spec.orientation.cos() + yc * spec.orientation.sin();
    let arg = two_pi * spec.spatial_freq * along - two_pi * spec.temporal_freq() * T::of(t as f64)
        + spec.phase;
    match wave {
        Waveform::Sine => arg.sin(),
        Waveform::Square => {
            let s = arg.sin();
            if s >= T::zero() {
                T::one()
            } else {
                -T::one()
            }
        }
    }
}

/// Full-field drifting grating.
pub fn drifting_grating<T: Scalar>(
    spec: &MotionSpec<T>,
    t_len: usize,
    h: usize,
    w: usize,
    wave: Waveform,
) -> Result<FrameSequence<T>> {
    spec.validate()?;
    let half = T::of(0.5);
    let frames = Grid3::from_shape_fn((t_len, h, w), |(t, y, x)| {
        half + half * spec.contrast * carrier(spec, wave, centered(x, w), centered(y, h), t)
    });
    FrameSequence::from_raw(frames)
}

/// Drifting sine grating under a static Gaussian envelope centered at
/// `center` (offsets from the frame center, in pixels).
pub fn drifting_gabor<T: Scalar>(
    spec: &MotionSpec<T>,
    envelope_sigma: T,
    center: (T, T),
    t_len: usize,
    h: usize,
    w: usize,
) -> Result<FrameSequence<T>> {
    spec.validate()?;
    if envelope_sigma <= T::zero() {
        return Err(Error::argument("envelope sigma must be positive"));
    }
    let half = T::of(0.5);
    let two = T::of(2.0);
    let frames = Grid3::from_shape_fn((t_len, h, w), |(t, y, x)| {
        let xc = centered::<T>(x, w) - center.0;
        let yc = centered::<T>(y, h) - center.1;
        let env = (-(xc * xc + yc * yc) / (two * envelope_sigma * envelope_sigma)).exp();
        half + half
            * spec.contrast
            * env
            * carrier(spec, Waveform::Sine, centered(x, w), centered(y, h), t)
    });
    FrameSequence::from_raw(frames)
}

/// Superposition of two full-field sine gratings: mean-centered components are
/// summed and rebiased to 0.5 (then clipped by the sequence constructor).
pub fn plaid<T: Scalar>(
    spec_a: &MotionSpec<T>,
    spec_b: &MotionSpec<T>,
    t_len: usize,
    h: usize,
    w: usize,
) -> Result<FrameSequence<T>> {
    spec_a.validate()?;
    spec_b.validate()?;
    let half = T::of(0.5);
    let frames = Grid3::from_shape_fn((t_len, h, w), |(t, y, x)| {
        let (xc, yc) = (centered(x, w), centered(y, h));
        half + half * spec_a.contrast * carrier(spec_a, Waveform::Sine, xc, yc, t)
            + half * spec_b.contrast * carrier(spec_b, Waveform::Sine, xc, yc, t)
    });
    FrameSequence::from_raw(frames)
}

/// Component gratings of the classic plaid: orientations at
/// `pattern_dir +- half_angle`, each drifting consistently with the pattern
/// velocity (so the intersection of constraints recovers it).
pub fn plaid_components<T: Scalar>(
    pattern_velocity: (T, T),
    half_angle: T,
    spatial_freq: T,
    contrast: T,
) -> (MotionSpec<T>, MotionSpec<T>) {
    let pattern_dir = pattern_velocity.1.as_f64().atan2(pattern_velocity.0.as_f64());
    let make = |ori: f64| MotionSpec {
        velocity: pattern_velocity,
        orientation: T::of(ori),
        spatial_freq,
        contrast,
        phase: T::zero(),
        seed: 0,
    };
    (
        make(pattern_dir - half_angle.as_f64()),
        make(pattern_dir + half_angle.as_f64()),
    )
}

/// Highest harmonic kept in the missing-fundamental series.
pub const MISSING_FUNDAMENTAL_MAX_HARMONIC: usize = 15;

/// Square wave with its first spatial harmonic removed (analytic Fourier
/// series, odd harmonics 3..=15), displacing by a quarter of the spatial
/// period per frame in the direction of `spec.velocity`.
pub fn missing_fundamental<T: Scalar>(
    spec: &MotionSpec<T>,
    t_len: usize,
    h: usize,
    w: usize,
) -> Result<FrameSequence<T>> {
    spec.validate()?;
    let f = spec.spatial_freq.as_f64();
    if f * MISSING_FUNDAMENTAL_MAX_HARMONIC as f64 >= 0.5 {
        return Err(Error::argument(format!(
            "missing-fundamental harmonics alias: {MISSING_FUNDAMENTAL_MAX_HARMONIC} * {f} >= 0.5"
        )));
    }
    let step_sign = if spec.drift_speed() >= T::zero() {
        1.0
    } else {
        -1.0
    };
    // Quarter of the spatial period per frame.
    let displacement = step_sign * 0.25 / f;
    let half = T::of(0.5);
    let frames = Grid3::from_shape_fn((t_len, h, w), |(t, y, x)| {
        let xc: T = centered(x, w);
        let yc: T = centered(y, h);
        let along = (xc * spec.orientation.cos() + yc * spec.orientation.sin()).as_f64();
        let u = 2.0 * PI * f * (along - displacement * t as f64) + spec.phase.as_f64();
        let mut sum = 0.0;
        let mut n = 3usize;
        while n <= MISSING_FUNDAMENTAL_MAX_HARMONIC {
            sum += (4.0 / (PI * n as f64)) * (n as f64 * u).sin();
            n += 2;
        }
        half + half * spec.contrast * T::of(sum)
    });
    FrameSequence::from_raw(frames)
}

/// Drifting grating visible only inside a centered axis-aligned rectangle;
/// mean gray elsewhere.
pub fn barber_pole<T: Scalar>(
    spec: &MotionSpec<T>,
    aperture_h: usize,
    aperture_w: usize,
    t_len: usize,
    h: usize,
    w: usize,
) -> Result<FrameSequence<T>> {
    if aperture_h == 0 || aperture_w == 0 || aperture_h > h || aperture_w > w {
        return Err(Error::argument(format!(
            "aperture {aperture_h}x{aperture_w} does not fit inside {h}x{w}"
        )));
    }
    let grating = drifting_grating(spec, t_len, h, w, Waveform::Sine)?;
    let y0 = (h - aperture_h) / 2;
    let x0 = (w - aperture_w) / 2;
    let half = T::of(0.5);
    let mut frames = grating.frames.clone();
    for ((_, y, x), v) in frames.indexed_iter_mut() {
        let inside = y >= y0 && y < y0 + aperture_h && x >= x0 && x < x0 + aperture_w;
        if !inside {
            *v = half;
        }
    }
    FrameSequence::from_raw(frames)
}

/// Settings for the global-motion Gabor array.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GaborArrayConfig<T> {
    pub spatial_freq: T,
    pub contrast: T,
    pub envelope_sigma: T,
}

impl<T: Scalar> Default for GaborArrayConfig<T> {
    fn default() -> Self {
        Self {
            spatial_freq: T::of(0.1),
            contrast: T::of(0.9),
            envelope_sigma: T::of(4.0),
        }
    }
}

/// Field of Gabor patches at seeded random positions and orientations, each
/// drifting at the projection of `global_velocity` onto its carrier normal,
/// so every patch is consistent with one global 2-D motion.
///
/// Patches composite additively on mean-centered signals with a hard 3-sigma
/// radius cutoff.
pub fn global_gabor_array<T: Scalar>(
    n_patches: usize,
    global_velocity: (T, T),
    t_len: usize,
    h: usize,
    w: usize,
    seed: u64,
    config: &GaborArrayConfig<T>,
) -> Result<FrameSequence<T>> {
    if n_patches == 0 {
        return Err(Error::argument("need at least one patch"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = config.envelope_sigma.as_f64();
    let radius = 3.0 * sigma;
    let two_pi = 2.0 * PI;

    struct Patch {
        cx: f64,
        cy: f64,
        orientation: f64,
        phase: f64,
        speed: f64,
    }
    let patches: Vec<Patch> = (0..n_patches)
        .map(|_| {
            let cx = rng.random_range(0.0..w as f64) - (w as f64 - 1.0) / 2.0;
            let cy = rng.random_range(0.0..h as f64) - (h as f64 - 1.0) / 2.0;
            let orientation = rng.random_range(0.0..PI);
            let phase = rng.random_range(0.0..two_pi);
            let speed = global_velocity.0.as_f64() * orientation.cos()
                + global_velocity.1.as_f64() * orientation.sin();
            Patch {
                cx,
                cy,
                orientation,
                phase,
                speed,
            }
        })
        .collect();

    let f = config.spatial_freq.as_f64();
    let c = config.contrast.as_f64();
    let frames = Grid3::from_shape_fn((t_len, h, w), |(t, y, x)| {
        let xc = x as f64 - (w as f64 - 1.0) / 2.0;
        let yc = y as f64 - (h as f64 - 1.0) / 2.0;
        let mut acc = 0.5;
        for p in &patches {
            let dx = xc - p.cx;
            let dy = yc - p.cy;
            if dx * dx + dy * dy > radius * radius {
                continue;
            }
            let env = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            let along = dx * p.orientation.cos() + dy * p.orientation.sin();
            let arg = two_pi * f * (along - p.speed * t as f64) + p.phase;
            acc += 0.5 * c * env * arg.sin();
        }
        T::of(acc)
    });
    FrameSequence::from_raw(frames)
}

fn sample_bilinear<T: Scalar>(grid: &Grid2<T>, y: f64, x: f64) -> T {
    let (h, w) = grid.dim();
    let xq = x.clamp(0.0, (w - 1) as f64);
    let yq = y.clamp(0.0, (h - 1) as f64);
    let x0 = xq.floor() as usize;
    let y0 = yq.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = T::of(xq - x0 as f64);
    let fy = T::of(yq - y0 as f64);
    let one = T::one();
    grid[(y0, x0)] * (one - fy) * (one - fx)
        + grid[(y0, x1)] * (one - fy) * fx
        + grid[(y1, x0)] * fy * (one - fx)
        + grid[(y1, x1)] * fy * fx
}

/// Rigid translation of a texture with bilinear subpixel sampling and
/// replicate borders. With `polarity_flip`, odd frames invert about 0.5
/// (reverse-phi stimulus).
pub fn translate_texture<T: Scalar>(
    image: &Grid2<T>,
    velocity: (T, T),
    t_len: usize,
    polarity_flip: bool,
) -> Result<FrameSequence<T>> {
    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return Err(Error::argument("texture must be non-empty"));
    }
    let (vx, vy) = (velocity.0.as_f64(), velocity.1.as_f64());
    let frames = Grid3::from_shape_fn((t_len, h, w), |(t, y, x)| {
        let v = sample_bilinear(image, y as f64 - vy * t as f64, x as f64 - vx * t as f64);
        if polarity_flip && t % 2 == 1 {
            T::one() - v
        } else {
            v
        }
    });
    FrameSequence::from_raw(frames)
}

/// Seeded uniform-noise texture in `[0, 1]`, optionally smoothed by 3x3 box
/// blur passes and re-stretched to full range.
pub fn random_texture<T: Scalar>(h: usize, w: usize, seed: u64, smooth_passes: usize) -> Grid2<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Array2::from_shape_fn((h, w), |_| rng.random_range(0.0..1.0f64));
    for _ in 0..smooth_passes {
        let src = img.clone();
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                        let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        acc += src[(sy, sx)];
                    }
                }
                img[(y, x)] = acc / 9.0;
            }
        }
    }
    let lo = img.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = img.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    Array2::from_shape_fn((h, w), |i| T::of((img[i] - lo) / span))
}

const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

fn luma_from_rgb(r: f64, g: f64, b: f64) -> f64 {
    LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
}

fn decode_frame<T: Scalar>(img: image::DynamicImage) -> Grid2<T> {
    use image::DynamicImage::*;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        ImageLuma8(buf) => Array2::from_shape_fn((h, w), |(y, x)| {
            T::of(buf.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0)
        }),
        ImageLuma16(buf) => Array2::from_shape_fn((h, w), |(y, x)| {
            T::of(buf.get_pixel(x as u32, y as u32).0[0] as f64 / 65535.0)
        }),
        other => {
            let buf = other.to_rgb16();
            Array2::from_shape_fn((h, w), |(y, x)| {
                let p = buf.get_pixel(x as u32, y as u32).0;
                T::of(luma_from_rgb(
                    p[0] as f64 / 65535.0,
                    p[1] as f64 / 65535.0,
                    p[2] as f64 / 65535.0,
                ))
            })
        }
    }
}

/// Loads a directory of equally sized grayscale PNG/PGM frames, ordered
/// lexicographically by file name. Values scale to `[0, 1]`; RGB inputs are
/// converted with luma weights 0.299/0.587/0.114.
pub fn load_sequence<T: Scalar>(dir: &Path) -> Result<FrameSequence<T>> {
    let mut names: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("png") | Some("pgm")
            )
        })
        .collect();
    names.sort();
    if names.len() < 2 {
        return Err(Error::argument(format!(
            "need at least 2 frames, found {} in {}",
            names.len(),
            dir.display()
        )));
    }
    let mut frames: Option<Grid3<T>> = None;
    for (t, path) in names.iter().enumerate() {
        let img = image::open(path).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        let frame = decode_frame::<T>(img);
        let (h, w) = frame.dim();
        let stack = frames.get_or_insert_with(|| Grid3::zeros((names.len(), h, w)));
        let (_, sh, sw) = stack.dim();
        if (h, w) != (sh, sw) {
            return Err(Error::format(format!(
                "frame {} is {h}x{w}, expected {sh}x{sw}",
                path.display()
            )));
        }
        stack.index_axis_mut(ndarray::Axis(0), t).assign(&frame);
    }
    FrameSequence::from_raw(frames.expect("at least two frames"))
}

/// Writes the sequence as zero-padded `frame_####.png` files.
pub fn save_sequence<T: Scalar>(seq: &FrameSequence<T>, dir: &Path, bits: u8) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let (t_len, h, w) = seq.dims();
    let mut written = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let name = format!("frame_{t:04}.png");
        let path = dir.join(&name);
        match bits {
            8 => {
                let buf = image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
                    let v = seq.frames[(t, y as usize, x as usize)].as_f64();
                    image::Luma([(v * 255.0).round().clamp(0.0, 255.0) as u8])
                });
                buf.save(&path).map_err(|e| Error::format(e.to_string()))?;
            }
            16 => {
                let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_fn(
                    w as u32,
                    h as u32,
                    |x, y| {
                        let v = seq.frames[(t, y as usize, x as usize)].as_f64();
                        image::Luma([(v * 65535.0).round().clamp(0.0, 65535.0) as u16])
                    },
                );
                buf.save(&path).map_err(|e| Error::format(e.to_string()))?;
            }
            other => return Err(Error::argument(format!("unsupported bit depth {other}"))),
        }
        written.push(name);
    }
    Ok(written)
}
