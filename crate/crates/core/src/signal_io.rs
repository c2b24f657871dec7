//! Signal storage, synthetic generators and deterministic random sources.
//!
//! Raw signals are stored as little-endian `f64` payloads in C order next to a
//! JSON sidecar (`<file>.json`) holding `{"shape": [...], "dtype": "f64le"}`.
//! Grayscale images can also be read from binary PGM (P5, maxval 255).

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A real 1D or 2D signal on a periodic grid whose axes are powers of two.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    data: Vec<f64>,
    shape: Vec<usize>,
}

impl Signal {
    pub fn new(data: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return invalid(format!("signal must be 1D or 2D, got shape {shape:?}"));
        }
        if let Some(&bad) = shape.iter().find(|&&n| n < 2 || !n.is_power_of_two()) {
            return invalid(format!("axis length {bad} is not a power of two"));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: shape,
                got: vec![data.len()],
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite sample at flat index {pos}"));
        }
        Ok(Signal { data, shape })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Signal::new(vec![0.0; shape.iter().product()], shape.to_vec())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Samples per axis. Square images only, so one number suffices.
    pub fn side(&self) -> usize {
        self.shape[0]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Unnormalized grid l2 norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64).sqrt()
    }

    /// Periodic shift: `out[u] = self[u - shift]` along each axis.
    pub fn circular_shift(&self, shift: &[isize]) -> Signal {
        assert_eq!(shift.len(), self.dim(), "shift rank must match signal rank");
        let mut out = vec![0.0; self.data.len()];
        match self.shape.as_slice() {
            [n] => {
                let n = *n as isize;
                for u in 0..n {
                    out[(u + shift[0]).rem_euclid(n) as usize] = self.data[u as usize];
                }
            }
            [n0, n1] => {
                let (n0, n1) = (*n0 as isize, *n1 as isize);
                for a in 0..n0 {
                    let ta = (a + shift[0]).rem_euclid(n0);
                    for b in 0..n1 {
                        let tb = (b + shift[1]).rem_euclid(n1);
                        out[(ta * n1 + tb) as usize] = self.data[(a * n1 + b) as usize];
                    }
                }
            }
            _ => unreachable!(),
        }
        Signal {
            data: out,
            shape: self.shape.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Signal {
        Signal {
            data: self.data.iter().map(|v| v * factor).collect(),
            shape: self.shape.clone(),
        }
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &Signal) -> Result<Signal> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                got: other.shape.clone(),
            });
        }
        Ok(Signal {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + factor * b)
                .collect(),
            shape: self.shape.clone(),
        })
    }
}

/// Seed and stream id of a counter-based ChaCha20 generator.
///
/// Normal variates use the Box-Muller transform on 53-bit uniforms so the
/// stream is reproducible from `(seed, stream)` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        RngSpec { seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        RngSpec { stream, ..self }
    }

    pub fn generator(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    pub fn normals(&self, count: usize) -> Vec<f64> {
        let mut rng = self.generator();
        let mut out = Vec::with_capacity(count + 1);
        while out.len() < count {
            // u1 in (0, 1], u2 in [0, 1)
            let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
            let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let r = (-2.0 * u1.ln()).sqrt();
            let t = 2.0 * PI * u2;
            out.push(r * t.cos());
            out.push(r * t.sin());
        }
        out.truncate(count);
        out
    }
}

fn check_axis(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return invalid(format!("length {n} is not a power of two"));
    }
    Ok(())
}

/// Sum of random cubic pieces separated by `num_singularities` jumps placed
/// around the periodic domain, normalized to `max |x| = 1`.
pub fn gen_piecewise_regular(n: usize, num_singularities: usize, rng: RngSpec) -> Result<Signal> {
    check_axis(n)?;
    if num_singularities == 0 || num_singularities > n / 8 {
        return invalid(format!(
            "number of singularities must be in [1, {}], got {num_singularities}",
            n / 8
        ));
    }
    let min_gap = 4usize;
    let mut gen = rng.generator();
    let mut cuts: Vec<usize> = Vec::with_capacity(num_singularities);
    while cuts.len() < num_singularities {
        let c = gen.random_range(0..n);
        let far = cuts.iter().all(|&d| {
            let diff = c.abs_diff(d);
            diff.min(n - diff) >= min_gap
        });
        if far {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();

    let mut data = vec![0.0; n];
    for (i, &start) in cuts.iter().enumerate() {
        let end = if i + 1 < cuts.len() {
            cuts[i + 1]
        } else {
            cuts[0] + n
        };
        let len = end - start;
        let coeffs: Vec<f64> = (0..4).map(|_| standard_normal(&mut gen)).collect();
        for off in 0..len {
            let t = if len > 1 {
                -1.0 + 2.0 * off as f64 / (len - 1) as f64
            } else {
                0.0
            };
            let v = ((coeffs[3] * t + coeffs[2]) * t + coeffs[1]) * t + coeffs[0];
            data[(start + off) % n] = v;
        }
    }
    let peak = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        data.iter_mut().for_each(|v| *v /= peak);
    }
    Signal::new(data, vec![n])
}

fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// `x(u) = (1 - cos(nu u)) cos(lam u)` for `u = 0..n-1`.
///
/// Both frequencies must sit on the DFT grid so the signal is exactly periodic.
pub fn gen_modulated_cosine(n: usize, nu: f64, lam: f64) -> Result<Signal> {
    check_axis(n)?;
    if !(nu >= 0.0 && nu < lam && lam < PI) {
        return invalid(format!("need 0 <= nu < lam < pi, got nu={nu}, lam={lam}"));
    }
    let step = 2.0 * PI / n as f64;
    for (name, f) in [("nu", nu), ("lam", lam)] {
        let bins = f / step;
        if (bins - bins.round()).abs() > 1e-9 {
            return invalid(format!("{name}={f} is not a multiple of 2pi/{n}"));
        }
    }
    let data = (0..n)
        .map(|u| {
            let u = u as f64;
            (1.0 - (nu * u).cos()) * (lam * u).cos()
        })
        .collect();
    Signal::new(data, vec![n])
}

/// Convenience wrapper taking frequencies as integer DFT bins.
pub fn gen_modulated_cosine_bins(n: usize, nu_bin: usize, lam_bin: usize) -> Result<Signal> {
    let step = 2.0 * PI / n as f64;
    gen_modulated_cosine(n, nu_bin as f64 * step, lam_bin as f64 * step)
}

pub fn gen_white_noise(shape: &[usize], rng: RngSpec) -> Result<Signal> {
    for &n in shape {
        check_axis(n)?;
    }
    let count = shape.iter().product();
    Signal::new(rng.normals(count), shape.to_vec())
}

/// Cartoon image: constant disk over a constant background.
pub fn gen_disk_image(n: usize, radius: f64, inside: f64, outside: f64) -> Result<Signal> {
    check_axis(n)?;
    if radius.is_nan() || radius <= 0.0 {
        return invalid("disk radius must be positive");
    }
    let c = (n as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let d = ((a as f64 - c).powi(2) + (b as f64 - c).powi(2)).sqrt();
            data.push(if d <= radius { inside } else { outside });
        }
    }
    Signal::new(data, vec![n, n])
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    shape: Vec<usize>,
    #[serde(default = "default_dtype")]
    dtype: String,
}

fn default_dtype() -> String {
    "f64le".to_string()
}

/// Path of the JSON sidecar that accompanies a raw payload.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn load_signal(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let is_pgm = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("pgm"))
        .unwrap_or(false)
        || bytes.starts_with(b"P5");
    if is_pgm {
        return parse_pgm(path, &bytes);
    }

    let side = sidecar_path(path);
    let meta = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: Sidecar =
        serde_json::from_str(&meta).map_err(|e| Error::format(&side, e.to_string()))?;
    if meta.dtype != "f64le" {
        return Err(Error::format(
            &side,
            format!("unsupported dtype {}", meta.dtype),
        ));
    }
    let expected: usize = meta.shape.iter().product();
    if bytes.len() != expected * 8 {
        return Err(Error::format(
            path,
            format!(
                "payload has {} bytes, shape needs {}",
                bytes.len(),
                expected * 8
            ),
        ));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Signal::new(data, meta.shape).map_err(|e| match e {
        Error::InvalidArgument(r) => Error::format(path, r),
        other => other,
    })
}

fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<Signal> {
    // header: magic, width, height, maxval separated by whitespace, comments allowed
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).to_string());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::format(path, "only binary PGM (P5) is supported"));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format(path, format!("bad PGM header field {s}")))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(Error::format(
            path,
            format!("maxval must be 255, got {maxval}"),
        ));
    }
    if bytes.len() < pos + w * h {
        return Err(Error::format(path, "truncated PGM payload"));
    }
    let data = bytes[pos..pos + w * h]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Signal::new(data, vec![h, w]).map_err(|e| match e {
        Error::InvalidArgument(r) => Error::format(path, r),
        other => other,
    })
}

pub fn save_signal(signal: &Signal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(signal.len() * 8);
    for v in signal.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let meta = Sidecar {
        shape: signal.shape().to_vec(),
        dtype: default_dtype(),
    };
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string(&meta)?).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

/// Write an image as 8-bit PGM after clamping to [0, 1].
pub fn save_pgm(signal: &Signal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if signal.dim() != 2 {
        return invalid("PGM export needs a 2D signal");
    }
    let (h, w) = (signal.shape()[0], signal.shape()[1]);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(
        signal
            .data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
