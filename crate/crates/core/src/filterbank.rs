//! Frequency-domain analytic wavelet banks: 1D bump wavelets, 2D steerable
//! bump wavelets and a Gaussian low-pass, sampled directly on the DFT grid.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal_io::{save_signal, Signal};
use crate::spectral::Spectral;

/// Mother wavelet center frequency.
pub const XI: f64 = 0.85 * PI;

/// `exp(-w^2 / (1 - w^2))` on (-1, 1), zero elsewhere.
pub fn bump_window(w: f64) -> f64 {
    let w2 = w * w;
    if w2 < 1.0 {
        (-w2 / (1.0 - w2)).exp()
    } else {
        0.0
    }
}

/// Normalization of the 1D bump wavelet with `q` scales per octave.
pub fn bump_constant_1d(q: usize) -> f64 {
    1.0 / (1.34 * (q as f64).sqrt() - 0.05)
}

/// Normalization of the steerable wavelet with `l` angles:
/// `1.29^-1 2^(l-1) (l-1)! / sqrt(l (2l-2)!)`.
///
/// Evaluated as `2^(l-1) / sqrt(l * binom(2l-2, l-1))` to stay finite for
/// large `l`.
pub fn steerable_constant(l: usize) -> f64 {
    let m = l - 1;
    // log binom(2m, m)
    let log_binom: f64 = (1..=m).map(|i| ((m + i) as f64 / i as f64).ln()).sum();
    let log_c = m as f64 * 2f64.ln() - 0.5 * ((l as f64).ln() + log_binom);
    log_c.exp() / 1.29
}

/// Construction parameters, also the serialized bank description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BankSpec {
    Bump1d {
        n: usize,
        j: usize,
        q: usize,
    },
    Steerable2d {
        n: usize,
        j: usize,
        l: usize,
    },
    /// Hand-built filters; cannot be rebuilt from the description alone.
    Custom {
        shape: Vec<usize>,
    },
}

impl BankSpec {
    pub fn build(&self) -> Result<FilterBank> {
        match *self {
            BankSpec::Bump1d { n, j, q } => build_bank_1d(n, j, q),
            BankSpec::Steerable2d { n, j, l } => build_bank_2d(n, j, l),
            BankSpec::Custom { .. } => invalid("custom banks cannot be rebuilt from parameters"),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            BankSpec::Bump1d { n, .. } => vec![*n],
            BankSpec::Steerable2d { n, .. } => vec![*n, *n],
            BankSpec::Custom { shape } => shape.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelLabel {
    /// 1D band-pass at octave `j`, sub-scale `q`.
    Scale {
        j: usize,
        q: usize,
    },
    /// 2D band-pass at octave `j`, angle index `l` in (-L/2, L/2].
    Oriented {
        j: usize,
        l: i32,
    },
    Lowpass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub label: ChannelLabel,
    /// Fine-to-coarse position on the dyadic grid: `|lambda| = 2^(-scale/Q) xi`.
    /// The low-pass sits at `J * Q`.
    pub scale: usize,
    /// Nominal center frequency vector; second entry is 0 in 1D.
    pub center: [f64; 2],
    /// Multiplicity in the frame sum: 2 for analytic band-pass channels
    /// (they stand for themselves and their conjugate mirror), 1 for the
    /// real low-pass.
    pub weight: f64,
}

impl Channel {
    pub fn is_lowpass(&self) -> bool {
        self.label == ChannelLabel::Lowpass
    }

    pub fn center_norm(&self) -> f64 {
        self.center[0].hypot(self.center[1])
    }
}

/// Real nonnegative filters on the DFT grid; band-pass channels ordered
/// coarse to fine (angle inner), the low-pass last.
#[derive(Debug, Clone)]
pub struct FilterBank {
    spec: BankSpec,
    channels: Vec<Channel>,
    filters: Vec<Vec<f64>>,
    spectral: Spectral,
    scales_per_octave: usize,
}

fn check_grid(n: usize, j: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return invalid(format!("grid size {n} is not a power of two"));
    }
    let log2n = n.trailing_zeros() as usize;
    if j < 1 || j > log2n {
        return invalid(format!("J must be in [1, {log2n}] for N={n}, got {j}"));
    }
    Ok(())
}

/// 1D bump bank with `j * q` analytic channels and a Gaussian low-pass.
pub fn build_bank_1d(n: usize, j: usize, q: usize) -> Result<FilterBank> {
    check_grid(n, j)?;
    if q < 1 {
        return invalid("Q must be at least 1");
    }
    let sp = Spectral::new(&[n]);
    let freqs = sp.frequencies();
    let c = bump_constant_1d(q);
    let count = j * q;
    let mut channels = Vec::with_capacity(count + 1);
    let mut filters = Vec::with_capacity(count + 1);
    for s in (0..count).rev() {
        let lam = XI * 2f64.powf(-(s as f64) / q as f64);
        let filt = freqs
            .iter()
            .map(|w| {
                let w = w[0];
                if w > 0.0 {
                    c * bump_window((w - lam) / lam)
                } else {
                    0.0
                }
            })
            .collect();
        channels.push(Channel {
            label: ChannelLabel::Scale { j: s / q, q: s % q },
            scale: s,
            center: [lam, 0.0],
            weight: 2.0,
        });
        filters.push(filt);
    }
    let coarsest = XI * 2f64.powf(-((count - 1) as f64) / q as f64);
    let sigma = 2f64.powf(-0.55 / q as f64) * coarsest;
    filters.push(gaussian(&freqs, sigma));
    channels.push(lowpass_channel(count));
    Ok(FilterBank {
        spec: BankSpec::Bump1d { n, j, q },
        channels,
        filters,
        spectral: sp,
        scales_per_octave: q,
    })
}

/// 2D steerable bank with `j * l` half-plane channels and a Gaussian low-pass.
pub fn build_bank_2d(n: usize, j: usize, l: usize) -> Result<FilterBank> {
    check_grid(n, j)?;
    if l < 4 || !l.is_multiple_of(2) {
        return invalid(format!("L must be even and at least 4, got {l}"));
    }
    let sp = Spectral::new(&[n, n]);
    let freqs = sp.frequencies();
    let c = steerable_constant(l);
    let half = (l / 2) as i32;
    let mut channels = Vec::with_capacity(j * l + 1);
    let mut filters = Vec::with_capacity(j * l + 1);
    for s in (0..j).rev() {
        let dil = 2f64.powi(s as i32);
        for ell in (1 - half)..=half {
            let theta = PI * ell as f64 / l as f64;
            let e = [theta.cos(), -theta.sin()];
            let filt = freqs
                .iter()
                .map(|w| {
                    let r = w[0].hypot(w[1]);
                    if r == 0.0 {
                        return 0.0;
                    }
                    let a = (w[0] * e[0] + w[1] * e[1]) / r;
                    // rounding noise on the boundary line stays outside the half-plane
                    if a <= 1e-12 {
                        return 0.0;
                    }
                    c * bump_window((dil * r - XI) / XI) * a.powi(l as i32 - 1)
                })
                .collect();
            channels.push(Channel {
                label: ChannelLabel::Oriented { j: s, l: ell },
                scale: s,
                center: [XI / dil * e[0], XI / dil * e[1]],
                weight: 2.0,
            });
            filters.push(filt);
        }
    }
    let sigma = 2f64.powf(-0.55) * XI * 2f64.powi(-(j as i32) + 1);
    filters.push(gaussian(&freqs, sigma));
    channels.push(lowpass_channel(j));
    Ok(FilterBank {
        spec: BankSpec::Steerable2d { n, j, l },
        channels,
        filters,
        spectral: sp,
        scales_per_octave: 1,
    })
}

fn gaussian(freqs: &[[f64; 2]], sigma: f64) -> Vec<f64> {
    freqs
        .iter()
        .map(|w| (-(w[0] * w[0] + w[1] * w[1]) / (2.0 * sigma * sigma)).exp())
        .collect()
}

fn lowpass_channel(scale: usize) -> Channel {
    Channel {
        label: ChannelLabel::Lowpass,
        scale,
        center: [0.0, 0.0],
        weight: 1.0,
    }
}

impl FilterBank {
    /// Bank from explicit grid filters. `bandpass` entries get weight 2 and
    /// `scale` equal to their position; the low-pass gets weight 1.
    pub fn custom(shape: &[usize], bandpass: Vec<Vec<f64>>, lowpass: Vec<f64>) -> Result<Self> {
        Signal::zeros(shape)?;
        if shape.len() == 2 && shape[0] != shape[1] {
            return invalid("2D banks must be square");
        }
        let len: usize = shape.iter().product();
        if bandpass
            .iter()
            .chain(std::iter::once(&lowpass))
            .any(|f| f.len() != len)
        {
            return invalid("filter length does not match grid");
        }
        let count = bandpass.len();
        let mut channels: Vec<Channel> = (0..count)
            .map(|s| Channel {
                label: ChannelLabel::Scale { j: s, q: 0 },
                scale: s,
                center: [0.0, 0.0],
                weight: 2.0,
            })
            .collect();
        channels.push(lowpass_channel(count));
        let mut filters = bandpass;
        filters.push(lowpass);
        Ok(FilterBank {
            spec: BankSpec::Custom {
                shape: shape.to_vec(),
            },
            channels,
            filters,
            spectral: Spectral::new(shape),
            scales_per_octave: 1,
        })
    }

    pub fn spec(&self) -> &BankSpec {
        &self.spec
    }

    pub fn shape(&self) -> &[usize] {
        self.spectral.shape()
    }

    pub fn dim(&self) -> usize {
        self.shape().len()
    }

    pub fn grid_len(&self) -> usize {
        self.spectral.len()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn filters(&self) -> &[Vec<f64>] {
        &self.filters
    }

    pub fn filter(&self, channel: usize) -> &[f64] {
        &self.filters[channel]
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn num_bandpass(&self) -> usize {
        self.channels.iter().filter(|c| !c.is_lowpass()).count()
    }

    /// `Q` in 1D, 1 in 2D.
    pub fn scales_per_octave(&self) -> usize {
        self.scales_per_octave
    }

    pub fn log2_n(&self) -> usize {
        self.shape()[0].trailing_zeros() as usize
    }

    /// `F(omega) = 1/2 sum_lambda w_lambda (|psi(omega)|^2 + |psi(-omega)|^2)`
    /// on every grid bin.
    pub fn frame_sum(&self) -> Vec<f64> {
        weighted_sum(self, &self.filters, &self.filters)
    }

    /// Radial band covered by overlapping band-pass dilations on both sides,
    /// used to measure frame tightness away from the low-pass transition and
    /// the Nyquist edge: `[2 coarsest, finest / 4]`.
    pub fn interior_band(&self) -> (f64, f64) {
        let norms: Vec<f64> = self
            .channels
            .iter()
            .filter(|c| !c.is_lowpass())
            .map(Channel::center_norm)
            .collect();
        let lo = 2.0 * norms.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = norms.iter().cloned().fold(0.0, f64::max) / 4.0;
        (lo, hi)
    }

    /// Same bank with the filter arrays replaced (same channels, same grid).
    fn with_filters(&self, filters: Vec<Vec<f64>>) -> FilterBank {
        FilterBank {
            filters,
            ..self.clone()
        }
    }
}

fn weighted_sum(bank: &FilterBank, a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    let sp = bank.spectral();
    let len = sp.len();
    let mut out = vec![0.0; len];
    for ((ch, fa), fb) in bank.channels.iter().zip(a).zip(b) {
        for (i, o) in out.iter_mut().enumerate() {
            let m = sp.mirror_index(i);
            *o += 0.5 * ch.weight * (fa[i] * fb[i] + fa[m] * fb[m]);
        }
    }
    out
}

/// Littlewood-Paley summary of a bank.
///
/// `eta = (max_sum - min_sum) / (max_sum + min_sum)` over the interior band,
/// so `min_sum = (1 - eta) A` and `max_sum = (1 + eta) A` with
/// `A = frame_scale`. `grid_min`/`grid_max` are the extremes over every bin
/// and bound `||Wx||^2 / ||x||^2` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub eta: f64,
    pub min_sum: f64,
    pub max_sum: f64,
    pub frame_scale: f64,
    pub worst_freq: Vec<f64>,
    pub grid_min: f64,
    pub grid_max: f64,
    pub band: (f64, f64),
}

pub fn frame_report(bank: &FilterBank) -> FrameReport {
    let sum = bank.frame_sum();
    let freqs = bank.spectral().frequencies();
    let (lo, hi) = bank.interior_band();
    let radius = |w: &[f64; 2]| w[0].hypot(w[1]);
    let mut in_band: Vec<usize> = (0..sum.len())
        .filter(|&i| {
            let r = radius(&freqs[i]);
            r >= lo && r <= hi
        })
        .collect();
    if in_band.is_empty() {
        in_band = (0..sum.len()).collect();
    }
    let (mut imin, mut imax) = (in_band[0], in_band[0]);
    for &i in &in_band {
        if sum[i] < sum[imin] {
            imin = i;
        }
        if sum[i] > sum[imax] {
            imax = i;
        }
    }
    let (min_sum, max_sum) = (sum[imin], sum[imax]);
    let frame_scale = 0.5 * (min_sum + max_sum);
    let eta = if frame_scale > 0.0 {
        (max_sum - min_sum) / (max_sum + min_sum)
    } else {
        0.0
    };
    let worst = if frame_scale - min_sum >= max_sum - frame_scale {
        imin
    } else {
        imax
    };
    let worst_freq = freqs[worst][..bank.dim()].to_vec();
    FrameReport {
        eta,
        min_sum,
        max_sum,
        frame_scale,
        worst_freq,
        grid_min: sum.iter().cloned().fold(f64::INFINITY, f64::min),
        grid_max: sum.iter().cloned().fold(0.0, f64::max),
        band: (lo, hi),
    }
}

/// Dual filters `psi / F` with `F` the symmetrized frame sum.
///
/// Fails when `F` vanishes (relative to its maximum) on any bin, since that
/// bin cannot be recovered.
pub fn dual_bank(bank: &FilterBank) -> Result<FilterBank> {
    let sum = bank.frame_sum();
    let peak = sum.iter().cloned().fold(0.0, f64::max);
    if let Some(i) = sum.iter().position(|&f| f.is_nan() || f <= 1e-8 * peak) {
        let w = bank.spectral().frequencies()[i];
        return Err(Error::FrameViolation(format!(
            "frame sum {:.3e} at frequency ({:.4}, {:.4}) is numerically zero",
            sum[i], w[0], w[1]
        )));
    }
    let duals = bank
        .filters
        .iter()
        .map(|f| f.iter().zip(&sum).map(|(a, s)| a / s).collect())
        .collect();
    Ok(bank.with_filters(duals))
}

/// `1/2 sum w (psi dual(omega) + psi dual(-omega))` per bin; 1 for a valid dual.
pub fn dual_identity(bank: &FilterBank, dual: &FilterBank) -> Vec<f64> {
    weighted_sum(bank, &bank.filters, &dual.filters)
}

/// Write `bank.json` plus one raw array per channel into `dir`.
pub fn export_bank(bank: &FilterBank, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    #[derive(Serialize)]
    struct Meta<'a> {
        spec: &'a BankSpec,
        xi: f64,
        channels: &'a [Channel],
        files: Vec<String>,
    }
    let mut files = Vec::new();
    for (i, f) in bank.filters.iter().enumerate() {
        let name = format!("channel_{i:03}.f64");
        save_signal(
            &Signal::new(f.clone(), bank.shape().to_vec())?,
            dir.join(&name),
        )?;
        files.push(name);
    }
    let meta = Meta {
        spec: &bank.spec,
        xi: XI,
        channels: &bank.channels,
        files,
    };
    let path = dir.join("bank.json");
    std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
}
