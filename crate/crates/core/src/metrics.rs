//! Flow comparison metrics, Middlebury `.flo` interchange, and flow
//! color rendering.

use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense optical flow: `u` grows rightward (columns), `v` grows downward
/// (rows), both in pixels/frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T> {
    pub u: Array2<T>,
    pub v: Array2<T>,
}

impl<T: Scalar> FlowField<T> {
    pub fn new(u: Array2<T>, v: Array2<T>) -> Result<Self> {
        if u.dim() != v.dim() {
            return Err(Error::argument("flow components must share dimensions"));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            u: Array2::zeros((h, w)),
            v: Array2::zeros((h, w)),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dim()
    }

    pub fn constant(h: usize, w: usize, u: T, v: T) -> Self {
        Self {
            u: Array2::from_elem((h, w), u),
            v: Array2::from_elem((h, w), v),
        }
    }

    /// Mean flow vector over all pixels.
    pub fn mean_vector(&self) -> (T, T) {
        let n = T::of(self.u.len() as f64);
        (
            self.u.iter().copied().sum::<T>() / n,
            self.v.iter().copied().sum::<T>() / n,
        )
    }

    pub fn to_f32(&self) -> FlowField<f32> {
        FlowField {
            u: self.u.mapv(|x| x.as_f64() as f32),
            v: self.v.mapv(|x| x.as_f64() as f32),
        }
    }
}

/// Direction is undefined below this speed.
pub const SPEED_MASK_EPS: f64 = 1e-6;

/// Per-pixel polar decomposition of a flow field.
#[derive(Debug, Clone)]
pub struct FlowStats<T> {
    pub u: Array2<T>,
    pub v: Array2<T>,
    /// `atan2(v, u)` in radians; meaningless where `valid` is false.
    pub direction: Array2<T>,
    pub speed: Array2<T>,
    /// False where the speed is below the mask threshold.
    pub valid: Array2<bool>,
}

pub fn flow_components<T: Scalar>(flow: &FlowField<T>) -> FlowStats<T> {
    let (h, w) = flow.dims();
    let mut direction = Array2::zeros((h, w));
    let mut speed = Array2::zeros((h, w));
    let mut valid = Array2::from_elem((h, w), true);
    for y in 0..h {
        for x in 0..w {
            let u = flow.u[(y, x)];
            let v = flow.v[(y, x)];
            let s = (u * u + v * v).sqrt();
            speed[(y, x)] = s;
            if s.as_f64() < SPEED_MASK_EPS {
                valid[(y, x)] = false;
                direction[(y, x)] = T::zero();
            } else {
                direction[(y, x)] = v.atan2(u);
            }
        }
    }
    FlowStats {
        u: flow.u.clone(),
        v: flow.v.clone(),
        direction,
        speed,
        valid,
    }
}

/// Endpoint error: per-pixel Euclidean distance between two flows, plus its
/// mean.
pub fn epe<T: Scalar>(a: &FlowField<T>, b: &FlowField<T>) -> Result<(T, Array2<T>)> {
    if a.dims() != b.dims() {
        return Err(Error::argument("flow dimensions differ"));
    }
    let (h, w) = a.dims();
    let mut map = Array2::zeros((h, w));
    let mut total = T::zero();
    for y in 0..h {
        for x in 0..w {
            let du = a.u[(y, x)] - b.u[(y, x)];
            let dv = a.v[(y, x)] - b.v[(y, x)];
            let e = (du * du + dv * dv).sqrt();
            map[(y, x)] = e;
            total += e;
        }
    }
    Ok((total / T::of((h * w) as f64), map))
}

/// Pearson correlation coefficient.
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::argument("correlation inputs must match in length"));
    }
    if a.len() < 2 {
        return Err(Error::argument("correlation needs at least 2 samples"));
    }
    let n = T::of(a.len() as f64);
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let mut cov = T::zero();
    let mut va = T::zero();
    let mut vb = T::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == T::zero() || vb == T::zero() {
        return Err(Error::Degenerate(
            "correlation undefined for zero-variance input".to_string(),
        ));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// Partial correlation of r(resp, model) controlling a third variable:
/// `(r_rm - r_rg * r_mg) / sqrt((1 - r_rg^2)(1 - r_mg^2))`.
pub fn partial_correlation<T: Scalar>(r_rm: T, r_rg: T, r_mg: T) -> Result<T> {
    for r in [r_rm, r_rg, r_mg] {
        if r.abs() > T::one() + T::of(1e-12) {
            return Err(Error::argument(format!(
                "correlations must lie in [-1, 1], got {r}"
            )));
        }
    }
    let one = T::one();
    let d1 = one - r_rg * r_rg;
    let d2 = one - r_mg * r_mg;
    if d1 <= T::zero() || d2 <= T::zero() {
        return Err(Error::Degenerate(
            "control correlation of magnitude 1 leaves no residual variance".to_string(),
        ));
    }
    Ok((r_rm - r_rg * r_mg) / (d1.sqrt() * d2.sqrt()))
}

const FLO_MAGIC: &[u8; 4] = b"PIEH";

/// Writes a Middlebury `.flo` file: magic "PIEH", i32 width, i32 height,
/// then row-major interleaved f32 (u, v). All little-endian.
pub fn write_flo(flow: &FlowField<f32>, path: &Path) -> Result<()> {
    let (h, w) = flow.dims();
    let mut file = std::fs::File::create(path)?;
    file.write_all(FLO_MAGIC)?;
    file.write_all(&(w as i32).to_le_bytes())?;
    file.write_all(&(h as i32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(h * w * 8);
    for y in 0..h {
        for x in 0..w {
            buf.extend_from_slice(&flow.u[(y, x)].to_le_bytes());
            buf.extend_from_slice(&flow.v[(y, x)].to_le_bytes());
        }
    }
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_flo(path: &Path) -> Result<FlowField<f32>> {
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; 12];
    file.read_exact(&mut header)
        .map_err(|_| Error::format("flo file truncated before header".to_string()))?;
    if &header[0..4] != FLO_MAGIC {
        return Err(Error::format(format!(
            "bad flo magic {:?}, expected {FLO_MAGIC:?}",
            &header[0..4]
        )));
    }
    let w = i32::from_le_bytes(header[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(header[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 {
        return Err(Error::format(format!("bad flo dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let mut data = vec![0u8; h * w * 8];
    file.read_exact(&mut data)
        .map_err(|_| Error::format("flo file truncated before payload".to_string()))?;
    let mut extra = [0u8; 1];
    if file.read(&mut extra)? != 0 {
        return Err(Error::format("flo file has trailing bytes".to_string()));
    }
    let mut u = Array2::zeros((h, w));
    let mut v = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let off = (y * w + x) * 8;
            u[(y, x)] = f32::from_le_bytes(data[off..off + 4].try_into().unwrap());
            v[(y, x)] = f32::from_le_bytes(data[off + 4..off + 8].try_into().unwrap());
        }
    }
    Ok(FlowField { u, v })
}

/// Maximum-magnitude normalization for flow rendering.
#[derive(Debug, Clone, Copy)]
pub enum MaxMagnitude {
    Auto,
    Fixed(f64),
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = (h.rem_euclid(1.0)) * 6.0;
    let i = h.floor();
    let f = h - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match i as i64 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

/// Renders the flow on a uniform hue-by-direction, saturation-by-magnitude
/// color wheel; zero flow is white. Rotating every vector by a quarter turn
/// shifts every hue by a quarter of the wheel.
pub fn flow_to_color<T: Scalar>(flow: &FlowField<T>, max_magnitude: MaxMagnitude) -> image::RgbImage {
    let (h, w) = flow.dims();
    let max = match max_magnitude {
        MaxMagnitude::Fixed(m) => m.max(1e-12),
        MaxMagnitude::Auto => {
            let mut m = 0.0f64;
            for y in 0..h {
                for x in 0..w {
                    let u = flow.u[(y, x)].as_f64();
                    let v = flow.v[(y, x)].as_f64();
                    m = m.max((u * u + v * v).sqrt());
                }
            }
            m.max(1e-12)
        }
    };
    image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let u = flow.u[(y as usize, x as usize)].as_f64();
        let v = flow.v[(y as usize, x as usize)].as_f64();
        let mag = (u * u + v * v).sqrt();
        let hue = v.atan2(u) / (2.0 * std::f64::consts::PI);
        let sat = (mag / max).min(1.0);
        image::Rgb(hsv_to_rgb(hue, sat, 1.0))
    })
}

/// Pairwise-valid circular correlation of two direction fields: Pearson on
/// the sine and cosine embeddings, averaged.
pub fn direction_correlation<T: Scalar>(
    a: &FlowStats<T>,
    b: &FlowStats<T>,
) -> Result<T> {
    let mut sa = Vec::new();
    let mut ca = Vec::new();
    let mut sb = Vec::new();
    let mut cb = Vec::new();
    for ((i, &ok_a), &ok_b) in a.valid.indexed_iter().zip(b.valid.iter()) {
        if ok_a && ok_b {
            sa.push(a.direction[i].sin());
            ca.push(a.direction[i].cos());
            sb.push(b.direction[i].sin());
            cb.push(b.direction[i].cos());
        }
    }
    let rs = pearson(&sa, &sb)?;
    let rc = pearson(&ca, &cb)?;
    Ok((rs + rc) / T::of(2.0))
}

/// Report comparing a model flow against a reference, optionally controlling
/// a third (ground-truth) flow via partial correlation.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ComparisonReport {
    pub r_uv: Option<f64>,
    pub r_dir: Option<f64>,
    pub r_spd: Option<f64>,
    pub epe: f64,
    pub rho_uv: Option<f64>,
    pub rho_dir: Option<f64>,
    pub rho_spd: Option<f64>,
}

fn concat_uv<T: Scalar>(f: &FlowField<T>) -> Vec<T> {
    f.u.iter().chain(f.v.iter()).copied().collect()
}

fn speeds_where<T: Scalar>(s: &FlowStats<T>, mask: &Array2<bool>) -> Vec<T> {
    s.speed
        .indexed_iter()
        .filter(|(i, _)| mask[*i])
        .map(|(_, &v)| v)
        .collect()
}

/// Compares `model` to `reference`; when `control` is given, also reports
/// the partial correlations controlling it.
pub fn compare_flows<T: Scalar>(
    model: &FlowField<T>,
    reference: &FlowField<T>,
    control: Option<&FlowField<T>>,
) -> Result<ComparisonReport> {
    let (mean_epe, _) = epe(model, reference)?;
    let sm = flow_components(model);
    let sr = flow_components(reference);
    let both = Array2::from_shape_fn(sm.valid.dim(), |i| sm.valid[i] && sr.valid[i]);

    let r_uv = pearson(&concat_uv(model), &concat_uv(reference)).ok();
    let r_dir = direction_correlation(&sm, &sr).ok();
    let r_spd = pearson(&speeds_where(&sm, &both), &speeds_where(&sr, &both)).ok();

    let (rho_uv, rho_dir, rho_spd) = if let Some(gt) = control {
        let sg = flow_components(gt);
        let rho = |rm: Option<T>, rg: Option<T>, mg: Option<T>| -> Option<f64> {
            match (rm, rg, mg) {
                (Some(a), Some(b), Some(c)) => {
                    partial_correlation(a, b, c).ok().map(|v| v.as_f64())
                }
                _ => None,
            }
        };
        let r_rg = pearson(&concat_uv(reference), &concat_uv(gt)).ok();
        let r_mg = pearson(&concat_uv(model), &concat_uv(gt)).ok();
        let rho_uv = rho(r_uv, r_rg, r_mg);

        let d_rg = direction_correlation(&sr, &sg).ok();
        let d_mg = direction_correlation(&sm, &sg).ok();
        let rho_dir = rho(r_dir, d_rg, d_mg);

        let all3 = Array2::from_shape_fn(both.dim(), |i| both[i] && sg.valid[i]);
        let s_rm = pearson(&speeds_where(&sr, &all3), &speeds_where(&sm, &all3)).ok();
        let s_rg = pearson(&speeds_where(&sr, &all3), &speeds_where(&sg, &all3)).ok();
        let s_mg = pearson(&speeds_where(&sm, &all3), &speeds_where(&sg, &all3)).ok();
        let rho_spd = rho(s_rm, s_rg, s_mg);
        (rho_uv, rho_dir, rho_spd)
    } else {
        (None, None, None)
    };

    Ok(ComparisonReport {
        r_uv: r_uv.map(|v| v.as_f64()),
        r_dir: r_dir.map(|v| v.as_f64()),
        r_spd: r_spd.map(|v| v.as_f64()),
        epe: mean_epe.as_f64(),
        rho_uv,
        rho_dir,
        rho_spd,
    })
}
