//! Phase harmonics `[z]^k = |z| e^{i k arg z}`, phase filters `h(alpha)` given
//! by Fourier tables, and the operators built from them.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filterbank::{dual_bank, FilterBank};
use crate::signal_io::Signal;
use crate::transform::{synthesize, AnalyticCoefficients};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `|z| e^{i k arg z}`, with `[0]^k = 0` for every `k`.
pub fn phase_harmonic(z: Complex64, k: i32) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        return ZERO;
    }
    Complex64::from_polar(r, k as f64 * z.arg())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// `h(alpha) = max(cos alpha, 0)`.
    Rectifier,
    /// `h(alpha) = |cos alpha|`.
    Absolute,
    /// `h(alpha) = cos alpha`.
    Identity,
    Custom,
}

impl std::str::FromStr for FilterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectifier" | "relu" => Ok(FilterKind::Rectifier),
            "absolute" | "abs" | "modulus" => Ok(FilterKind::Absolute),
            "identity" => Ok(FilterKind::Identity),
            other => invalid(format!("unknown phase filter kind {other:?}")),
        }
    }
}

/// A 2pi-periodic phase filter stored as its Fourier table on `|k| <= kmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFilter {
    pub kind: FilterKind,
    kmax: usize,
    table: Vec<Complex64>,
}

/// Exact Fourier coefficients of the named filters.
pub fn hhat_closed_form(kind: FilterKind, k: i32) -> Complex64 {
    let re = match kind {
        FilterKind::Rectifier => match k.unsigned_abs() {
            1 => 0.25,
            a if a % 2 == 1 => 0.0,
            _ => even_coefficient(k),
        },
        FilterKind::Absolute => {
            if k % 2 != 0 {
                0.0
            } else {
                2.0 * even_coefficient(k)
            }
        }
        FilterKind::Identity => {
            if k.abs() == 1 {
                0.5
            } else {
                0.0
            }
        }
        FilterKind::Custom => 0.0,
    };
    Complex64::new(re, 0.0)
}

/// `-i^k / (pi (k-1)(k+1))` for even `k`; real because `i^k = (-1)^(k/2)`.
fn even_coefficient(k: i32) -> f64 {
    let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let kf = k as f64;
    -sign / (PI * (kf * kf - 1.0))
}

pub fn hhat_table(kind: FilterKind, kmax: usize) -> Result<PhaseFilter> {
    if kmax < 1 {
        return invalid("K_max must be at least 1");
    }
    if kind == FilterKind::Custom {
        return invalid("custom filters are built with PhaseFilter::custom");
    }
    let k = kmax as i32;
    Ok(PhaseFilter {
        kind,
        kmax,
        table: (-k..=k).map(|k| hhat_closed_form(kind, k)).collect(),
    })
}

impl PhaseFilter {
    /// Table listed from `-kmax` to `kmax`.
    pub fn custom(table: Vec<Complex64>) -> Result<Self> {
        if table.len() < 3 || table.len().is_multiple_of(2) {
            return invalid("custom table needs odd length 2K+1 with K >= 1");
        }
        Ok(PhaseFilter {
            kind: FilterKind::Custom,
            kmax: table.len() / 2,
            table,
        })
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn hhat(&self, k: i32) -> Complex64 {
        if k.unsigned_abs() as usize > self.kmax {
            return ZERO;
        }
        self.table[(k + self.kmax as i32) as usize]
    }

    pub fn entries(&self) -> impl Iterator<Item = (i32, Complex64)> + '_ {
        let k0 = -(self.kmax as i32);
        self.table
            .iter()
            .enumerate()
            .map(move |(i, &v)| (k0 + i as i32, v))
    }

    /// `(sum_k |h(k)|^2)^{1/2}` over the table, the L2 norm on `dalpha / 2pi`.
    pub fn table_norm(&self) -> f64 {
        self.table.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Untruncated L2 norm of named filters.
    pub fn exact_norm(&self) -> Option<f64> {
        match self.kind {
            FilterKind::Rectifier => Some(0.5),
            FilterKind::Absolute | FilterKind::Identity => Some(0.5f64.sqrt()),
            FilterKind::Custom => None,
        }
    }

    /// `(|h(0)|^2 + sum_{k != 0} k^2 |h(k)|^2)^{1/2}` over the table.
    pub fn upper_lipschitz(&self) -> f64 {
        self.entries()
            .map(|(k, v)| (k.unsigned_abs().max(1) as f64).powi(2) * v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `sqrt(2) |h(1)|`.
    pub fn lower_lipschitz(&self) -> f64 {
        2f64.sqrt() * self.hhat(1).norm()
    }

    /// `h(alpha) = sum_k h(k) e^{i k alpha}`.
    pub fn eval(&self, alpha: f64) -> f64 {
        self.entries()
            .map(|(k, v)| (v * Complex64::from_polar(1.0, k as f64 * alpha)).re)
            .sum()
    }

    /// `h` on the uniform grid `alpha_i = 2 pi i / a` via one FFT.
    pub fn alpha_profile(&self, a: usize) -> Result<Vec<f64>> {
        if a < 2 * self.kmax + 1 {
            return invalid(format!(
                "alpha grid of {a} points cannot resolve K_max={}",
                self.kmax
            ));
        }
        let mut buf = vec![ZERO; a];
        for (k, v) in self.entries() {
            buf[k.rem_euclid(a as i32) as usize] += v;
        }
        FftPlanner::new().plan_fft_inverse(a).process(&mut buf);
        Ok(buf.iter().map(|v| v.re).collect())
    }
}

/// Values indexed by `(channel, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicField {
    pub shape: Vec<usize>,
    pub values: BTreeMap<(usize, i32), Vec<Complex64>>,
}

impl HarmonicField {
    pub fn get(&self, channel: usize, k: i32) -> Result<&[Complex64]> {
        self.values
            .get(&(channel, k))
            .map(Vec::as_slice)
            .ok_or(Error::MissingChannel { channel, k })
    }

    pub fn k_list(&self) -> Vec<i32> {
        let mut ks: Vec<i32> = self.values.keys().map(|&(_, k)| k).collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    pub fn grid_len(&self) -> usize {
        self.shape.iter().product()
    }
}

/// `[wx_lambda]^k` for each requested `(channel, k)` (unit filter weights).
pub fn harmonic_powers(
    wx: &AnalyticCoefficients,
    requests: &[(usize, i32)],
) -> Result<HarmonicField> {
    for &(ch, k) in requests {
        if ch >= wx.num_channels() {
            return Err(Error::MissingChannel { channel: ch, k });
        }
    }
    let values = requests
        .par_iter()
        .map(|&(ch, k)| {
            let v = wx.coeffs[ch]
                .iter()
                .map(|&z| phase_harmonic(z, k))
                .collect();
            ((ch, k), v)
        })
        .collect();
    Ok(HarmonicField {
        shape: wx.shape.clone(),
        values,
    })
}

/// `h(k) [wx_lambda]^{-k}` for every channel and every `k` in `k_list`.
pub fn apply_u_hat(
    wx: &AnalyticCoefficients,
    h: &PhaseFilter,
    k_list: &[i32],
) -> Result<HarmonicField> {
    if let Some(&k) = k_list.iter().find(|k| k.unsigned_abs() as usize > h.kmax()) {
        return invalid(format!(
            "harmonic {k} outside the filter table (K_max={})",
            h.kmax()
        ));
    }
    let requests: Vec<(usize, i32)> = (0..wx.num_channels())
        .flat_map(|ch| k_list.iter().map(move |&k| (ch, -k)))
        .collect();
    let powers = harmonic_powers(wx, &requests)?;
    let values = powers
        .values
        .into_iter()
        .map(|((ch, mk), v)| {
            let c = h.hhat(-mk);
            ((ch, -mk), v.into_iter().map(|z| c * z).collect())
        })
        .collect();
    Ok(HarmonicField {
        shape: wx.shape.clone(),
        values,
    })
}

/// `Ux(u, lambda, alpha) = |wx| h(alpha - arg wx)` on `a` uniform phases.
#[derive(Debug, Clone)]
pub struct PhaseField {
    pub alphas: Vec<f64>,
    /// Indexed `[channel][alpha][u]`.
    pub values: Vec<Vec<Vec<f64>>>,
}

pub fn apply_u(wx: &AnalyticCoefficients, h: &PhaseFilter, a: usize) -> Result<PhaseField> {
    if a < 2 * h.kmax() + 1 {
        return invalid(format!(
            "alpha grid of {a} points needs at least {}",
            2 * h.kmax() + 1
        ));
    }
    let alphas: Vec<f64> = (0..a).map(|i| 2.0 * PI * i as f64 / a as f64).collect();
    let entries: Vec<(i32, Complex64)> = h.entries().filter(|(_, v)| v.norm() > 0.0).collect();
    let values = wx
        .coeffs
        .par_iter()
        .map(|c| {
            alphas
                .iter()
                .map(|&alpha| {
                    c.iter()
                        .map(|&z| {
                            let (r, phi) = (z.norm(), z.arg());
                            if r == 0.0 {
                                return 0.0;
                            }
                            r * entries
                                .iter()
                                .map(|&(k, v)| {
                                    (v * Complex64::from_polar(1.0, k as f64 * (alpha - phi))).re
                                })
                                .sum::<f64>()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(PhaseField { alphas, values })
}

/// Recover `x` from the first harmonic `h(1) [wx]^{-1} = h(1) conj(wx)`.
pub fn invert_from_first_harmonic(
    hf: &HarmonicField,
    bank: &FilterBank,
    h: &PhaseFilter,
) -> Result<Signal> {
    let h1 = h.hhat(1);
    if h1.norm() == 0.0 {
        return Err(Error::NotInvertible(format!(
            "{:?} filter has a zero first Fourier coefficient",
            h.kind
        )));
    }
    let scale = h1.conj().inv();
    let fields = (0..bank.num_channels())
        .map(|ch| Ok(hf.get(ch, 1)?.iter().map(|u| u.conj() * scale).collect()))
        .collect::<Result<Vec<Vec<Complex64>>>>()?;
    let dual = dual_bank(bank)?;
    Signal::new(synthesize(&fields, bank, &dual), bank.shape().to_vec())
}

/// Box-spline phase sharpening of a rectifier or absolute-value filter.
#[derive(Debug, Clone)]
pub struct SharpenedFilter {
    pub epsilon: f64,
    /// `2` at `k = 0`, `2 sin^4(k eps / 4) / (k eps / 4)^4` at even `k`, 0 at odd `k`.
    pub composed: PhaseFilter,
    /// `composed(k) / h(k)` on even `k`, 0 on odd `k`.
    pub g_hat: PhaseFilter,
}

pub fn sharpened_coefficient(k: i32, epsilon: f64) -> f64 {
    if k == 0 {
        2.0
    } else if k % 2 != 0 {
        0.0
    } else {
        let t = k as f64 * epsilon / 4.0;
        2.0 * t.sin().powi(4) / t.powi(4)
    }
}

pub fn sharpen_filter(h: &PhaseFilter, epsilon: f64) -> Result<SharpenedFilter> {
    if !matches!(h.kind, FilterKind::Rectifier | FilterKind::Absolute) {
        return invalid("sharpening needs a rectifier or absolute-value filter");
    }
    if !(epsilon > 0.0 && epsilon <= PI / 4.0) {
        return invalid(format!("epsilon must be in (0, pi/4], got {epsilon}"));
    }
    let k = h.kmax() as i32;
    let composed: Vec<Complex64> = (-k..=k)
        .map(|k| Complex64::new(sharpened_coefficient(k, epsilon), 0.0))
        .collect();
    let g: Vec<Complex64> = (-k..=k)
        .zip(&composed)
        .map(|(k, &c)| if k % 2 == 0 { c / h.hhat(k) } else { ZERO })
        .collect();
    Ok(SharpenedFilter {
        epsilon,
        composed: PhaseFilter::custom(composed)?,
        g_hat: PhaseFilter::custom(g)?,
    })
}

/// Max of `|[z]^k - [z']^k| / (max(1,|k|) |z - z'|)`; pairs with `z == z'` are skipped.
pub fn check_harmonic_lipschitz(samples: &[(Complex64, Complex64, i32)]) -> f64 {
    samples
        .iter()
        .filter(|(z, w, _)| z != w)
        .map(|&(z, w, k)| {
            let num = (phase_harmonic(z, k) - phase_harmonic(w, k)).norm();
            num / (k.unsigned_abs().max(1) as f64 * (z - w).norm())
        })
        .fold(0.0, f64::max)
}

/// `||Hz - Hz'||` with the norm on `dalpha / 2pi`, evaluated over the table.
pub fn h_distance(h: &PhaseFilter, z: Complex64, w: Complex64) -> f64 {
    h.entries()
        .map(|(k, v)| v.norm_sqr() * (phase_harmonic(z, -k) - phase_harmonic(w, -k)).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLipschitzReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Norm of the truncated table.
    pub table_norm: f64,
    /// Max of `| ||Hz|| - table_norm |z| |` over the sampled `z`.
    pub table_norm_dev: f64,
    /// Max of `| ||Hz|| - ||h|| |z| |` with the untruncated norm, when known.
    pub exact_norm_dev: Option<f64>,
}

pub fn check_h_bilipschitz(
    h: &PhaseFilter,
    samples: &[(Complex64, Complex64)],
) -> BiLipschitzReport {
    let table_norm = h.table_norm();
    let exact = h.exact_norm();
    let mut rep = BiLipschitzReport {
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        table_norm,
        table_norm_dev: 0.0,
        exact_norm_dev: exact.map(|_| 0.0),
    };
    for &(z, w) in samples {
        for v in [z, w] {
            let norm = h_distance(h, v, ZERO);
            rep.table_norm_dev = rep.table_norm_dev.max((norm - table_norm * v.norm()).abs());
            if let (Some(dev), Some(e)) = (rep.exact_norm_dev.as_mut(), exact) {
                *dev = dev.max((norm - e * v.norm()).abs());
            }
        }
        if z == w {
            continue;
        }
        let ratio = h_distance(h, z, w) / (z - w).norm();
        rep.min_ratio = rep.min_ratio.min(ratio);
        rep.max_ratio = rep.max_ratio.max(ratio);
    }
    rep
}

/// Power-weighted mean frequency and RMS bandwidth of a 1D field.
pub fn frequency_moments(field: &[Complex64], bank: &FilterBank) -> (f64, f64) {
    let sp = bank.spectral();
    let mut spec = field.to_vec();
    sp.forward(&mut spec);
    let freqs = sp.frequencies();
    let mass: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
    if mass == 0.0 {
        return (0.0, 0.0);
    }
    let mean = spec
        .iter()
        .zip(&freqs)
        .map(|(v, w)| v.norm_sqr() * w[0])
        .sum::<f64>()
        / mass;
    let var = spec
        .iter()
        .zip(&freqs)
        .map(|(v, w)| v.norm_sqr() * (w[0] - mean).powi(2))
        .sum::<f64>()
        / mass;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::build_bank_1d;
    use crate::signal_io::{gen_white_noise, RngSpec};
    use crate::transform::analyze;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Fourier coefficient by direct quadrature of `h(alpha)` on a fine grid.
    fn quadrature_coefficient(h: impl Fn(f64) -> f64, k: i32) -> f64 {
        let n = 1 << 16;
        (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                h(a) * (k as f64 * a).cos()
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(phase_harmonic(c(1.0, 0.0), 5), c(1.0, 0.0));
        let z = Complex64::from_polar(2.0, PI / 4.0);
        assert!((phase_harmonic(z, 2) - c(0.0, 2.0)).norm() < 1e-15);
        assert_eq!(phase_harmonic(c(0.0, 0.0), 3), c(0.0, 0.0));
        assert_eq!(phase_harmonic(c(0.0, 0.0), 0), c(0.0, 0.0));
    }

    #[test]
    fn rectifier_table_values() {
        let h = hhat_table(FilterKind::Rectifier, 8).unwrap();
        assert!((h.hhat(0).re - 1.0 / PI).abs() < 1e-16);
        assert!((h.hhat(2).re - 1.0 / (3.0 * PI)).abs() < 1e-16);
        assert_eq!(h.hhat(1).re, 0.25);
        assert_eq!(h.hhat(-1).re, 0.25);
        assert_eq!(h.hhat(3).re, 0.0);
        assert!((h.hhat(4).re + 1.0 / (15.0 * PI)).abs() < 1e-16);
        let a = hhat_table(FilterKind::Absolute, 8).unwrap();
        assert_eq!(a.hhat(1).re, 0.0);
        assert!((a.hhat(0).re - 2.0 / PI).abs() < 1e-16);
    }

    #[test]
    fn tables_match_quadrature() {
        let rect = hhat_table(FilterKind::Rectifier, 6).unwrap();
        let abs = hhat_table(FilterKind::Absolute, 6).unwrap();
        for k in -6..=6 {
            let qr = quadrature_coefficient(|a| a.cos().max(0.0), k);
            let qa = quadrature_coefficient(|a| a.cos().abs(), k);
            assert!((rect.hhat(k).re - qr).abs() < 1e-9, "k={k}");
            assert!((abs.hhat(k).re - qa).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn hermitian_tables() {
        for kind in [
            FilterKind::Rectifier,
            FilterKind::Absolute,
            FilterKind::Identity,
        ] {
            let h = hhat_table(kind, 10).unwrap();
            for k in 0..=10 {
                assert_eq!(h.hhat(-k), h.hhat(k).conj());
            }
        }
    }

    fn random_wx(n: usize, seed: u64) -> (FilterBank, AnalyticCoefficients) {
        let bank = build_bank_1d(n, n.trailing_zeros() as usize, 1).unwrap();
        let x = gen_white_noise(&[n], RngSpec::new(seed)).unwrap();
        let wx = analyze(&x, &bank).unwrap();
        (bank, wx)
    }

    #[test]
    fn u_matches_rectified_real_part() {
        let h = hhat_table(FilterKind::Rectifier, 32).unwrap();
        let (_, wx) = random_wx(64, 3);
        let a = 72;
        let ux = apply_u(&wx, &h, a).unwrap();
        let bound = 2.0 / (PI * 32.0);
        for (ch, per_alpha) in ux.values.iter().enumerate() {
            for (ai, row) in per_alpha.iter().enumerate() {
                let rot = Complex64::from_polar(1.0, -ux.alphas[ai]);
                for (u, v) in row.iter().enumerate() {
                    let z = wx.coeffs[ch][u];
                    let direct = (rot * z).re.max(0.0);
                    assert!((v - direct).abs() <= bound * z.norm() + 1e-14);
                }
            }
        }
        let real_pos = AnalyticCoefficients {
            shape: vec![4],
            coeffs: vec![vec![c(0.7, 0.0), c(2.0, 0.0), c(0.1, 0.0), c(5.0, 0.0)]],
        };
        let ux = apply_u(&real_pos, &h, 65).unwrap();
        for (v, z) in ux.values[0][0].iter().zip(&real_pos.coeffs[0]) {
            assert!((v - z.re).abs() <= bound * z.re);
        }
    }

    #[test]
    fn u_identity_is_exact() {
        let h = hhat_table(FilterKind::Identity, 1).unwrap();
        let (_, wx) = random_wx(32, 1);
        let ux = apply_u(&wx, &h, 3).unwrap();
        for (ch, per_alpha) in ux.values.iter().enumerate() {
            for (ai, row) in per_alpha.iter().enumerate() {
                let rot = Complex64::from_polar(1.0, -ux.alphas[ai]);
                for (u, v) in row.iter().enumerate() {
                    assert!((v - (rot * wx.coeffs[ch][u]).re).abs() < 1e-12);
                }
            }
        }
        assert!(apply_u(&wx, &h, 2).is_err());
    }

    #[test]
    fn u_hat_is_dft_of_u() {
        let h = hhat_table(FilterKind::Rectifier, 8).unwrap();
        let (_, wx) = random_wx(32, 5);
        let a = 32;
        let ux = apply_u(&wx, &h, a).unwrap();
        let ks: Vec<i32> = (-8..=8).collect();
        let uh = apply_u_hat(&wx, &h, &ks).unwrap();
        for ch in 0..wx.num_channels() {
            for &k in &ks {
                let want = uh.get(ch, k).unwrap();
                for (u, w) in want.iter().enumerate().take(32) {
                    let got: Complex64 = (0..a)
                        .map(|i| {
                            ux.values[ch][i][u]
                                * Complex64::from_polar(1.0, -(k as f64) * ux.alphas[i])
                        })
                        .sum::<Complex64>()
                        / a as f64;
                    assert!((got - w).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn u_hat_low_orders() {
        let h = hhat_table(FilterKind::Rectifier, 4).unwrap();
        let (_, wx) = random_wx(32, 9);
        let uh = apply_u_hat(&wx, &h, &[0, 1]).unwrap();
        for ch in 0..wx.num_channels() {
            for (u, z) in wx.coeffs[ch].iter().enumerate() {
                assert!((uh.get(ch, 1).unwrap()[u] - z.conj() * 0.25).norm() < 1e-15);
                let v0 = uh.get(ch, 0).unwrap()[u];
                assert!((v0.re - z.norm() / PI).abs() < 1e-15 && v0.im == 0.0);
            }
        }
        assert!(apply_u_hat(&wx, &h, &[5]).is_err());
    }

    #[test]
    fn first_harmonic_inversion() {
        let h = hhat_table(FilterKind::Rectifier, 4).unwrap();
        let (bank, _) = random_wx(1024, 0);
        let x = gen_white_noise(&[1024], RngSpec::new(21)).unwrap();
        let wx = analyze(&x, &bank).unwrap();
        let uh = apply_u_hat(&wx, &h, &[1]).unwrap();
        let y = invert_from_first_harmonic(&uh, &bank, &h).unwrap();
        let err = x.axpy(-1.0, &y).unwrap().norm() / x.norm();
        assert!(err <= 1e-10, "{err}");

        let abs = hhat_table(FilterKind::Absolute, 4).unwrap();
        let ua = apply_u_hat(&wx, &abs, &[1]).unwrap();
        assert!(matches!(
            invert_from_first_harmonic(&ua, &bank, &abs),
            Err(Error::NotInvertible(_))
        ));
    }

    #[test]
    fn sharpened_table() {
        let h = hhat_table(FilterKind::Rectifier, 64).unwrap();
        let s = sharpen_filter(&h, 0.2).unwrap();
        assert_eq!(s.composed.hhat(0).re, 2.0);
        assert_eq!(s.composed.hhat(3).re, 0.0);
        let t: f64 = 4.0 * 0.2 / 4.0;
        assert!((s.composed.hhat(4).re - 2.0 * t.sin().powi(4) / t.powi(4)).abs() < 1e-15);
        assert_eq!(s.g_hat.hhat(5).re, 0.0);
        assert!((s.g_hat.hhat(2).re * h.hhat(2).re - s.composed.hhat(2).re).abs() < 1e-15);
        assert!(sharpen_filter(&h, 1.0).is_err());
        let id = hhat_table(FilterKind::Identity, 4).unwrap();
        assert!(sharpen_filter(&id, 0.2).is_err());
    }

    #[test]
    fn sharpened_support() {
        let h = hhat_table(FilterKind::Rectifier, 2047).unwrap();
        let eps = 0.2;
        let s = sharpen_filter(&h, eps).unwrap();
        let a = 4096;
        let prof = s.composed.alpha_profile(a).unwrap();
        let (mut inside, mut total) = (0.0, 0.0);
        for (i, v) in prof.iter().enumerate() {
            let alpha = 2.0 * PI * i as f64 / a as f64;
            let d = (alpha.rem_euclid(PI)).min(PI - alpha.rem_euclid(PI));
            total += v.abs();
            if d <= eps {
                inside += v.abs();
            }
        }
        assert!((total - inside) / total <= 1e-3);
    }

    #[test]
    fn lipschitz_tightness() {
        let z = c(1.0, 0.0);
        let w = Complex64::from_polar(1.0, 1e-4);
        let r = check_harmonic_lipschitz(&[(z, w, 4)]);
        assert!((r - 1.0).abs() < 1e-6, "{r}");
        let r0 = check_harmonic_lipschitz(&[(c(1.0, 2.0), c(-0.5, 0.1), 0)]);
        let want = (c(1.0, 2.0).norm() - c(-0.5, 0.1).norm()).abs() / (c(1.5, 1.9)).norm();
        assert!((r0 - want).abs() < 1e-15);
    }

    #[test]
    fn bilipschitz_rectifier() {
        let h = hhat_table(FilterKind::Rectifier, 64).unwrap();
        let mut rng = RngSpec::new(4).generator();
        let samples: Vec<(Complex64, Complex64)> = (0..2000)
            .map(|_| {
                (
                    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                )
            })
            .collect();
        let rep = check_h_bilipschitz(&h, &samples);
        let kappa = (0.25 + 1.0 / (PI * PI)).sqrt();
        assert!(rep.min_ratio >= 2f64.sqrt() / 4.0 - 1e-6);
        assert!(rep.max_ratio <= kappa + 1e-6);
        assert!(rep.table_norm_dev < 1e-14);
        // the truncated table misses 1.2e-7 of the squared norm
        assert!((0.25 - rep.table_norm.powi(2) - 1.2e-7).abs() < 1e-8);
        let zero = check_h_bilipschitz(&h, &[(c(0.6, -0.8), c(0.0, 0.0))]);
        assert!((zero.min_ratio - h.table_norm()).abs() < 1e-14);
    }

    #[test]
    fn transposition_moves_centroid() {
        let bank = build_bank_1d(1024, 10, 1).unwrap();
        let x = gen_white_noise(&[1024], RngSpec::new(8)).unwrap();
        let wx = analyze(&x, &bank).unwrap();
        // lambda = xi / 8
        let ch = bank.num_bandpass() - 4;
        let lam = bank.channels()[ch].center[0];
        let hf = harmonic_powers(&wx, &[(ch, 1), (ch, 2), (ch, 3)]).unwrap();
        let (_, bw1) = frequency_moments(hf.get(ch, 1).unwrap(), &bank);
        for k in 1..=3 {
            let (mean, bw) = frequency_moments(hf.get(ch, k).unwrap(), &bank);
            let target = k as f64 * lam;
            assert!(
                (mean - target).abs() <= 0.2 * target,
                "k={k}: {mean} vs {target}"
            );
            let growth = bw / (bw1 * k as f64);
            assert!((0.5..=2.0).contains(&growth), "k={k}: growth {growth}");
        }
    }

    proptest! {
        #[test]
        fn lipschitz_holds(re in -5.0..5.0f64, im in -5.0..5.0f64, re2 in -5.0..5.0f64, im2 in -5.0..5.0f64, k in -8i32..=8) {
            let r = check_harmonic_lipschitz(&[(c(re, im), c(re2, im2), k)]);
            prop_assert!(r <= 1.0 + 1e-12);
        }

        #[test]
        fn phase_covariance(re in -3.0..3.0f64, im in -3.0..3.0f64, beta in -PI..PI, k in -8i32..=8) {
            let z = c(re, im);
            let lhs = phase_harmonic(Complex64::from_polar(1.0, beta) * z, k);
            let rhs = Complex64::from_polar(1.0, k as f64 * beta) * phase_harmonic(z, k);
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + z.norm()));
        }

        #[test]
        fn homogeneity(re in -3.0..3.0f64, im in -3.0..3.0f64, scale in 0.01..100.0f64, k in -8i32..=8) {
            let z = c(re, im);
            let lhs = phase_harmonic(z * scale, k);
            let rhs = phase_harmonic(z, k) * scale;
            prop_assert!((lhs - rhs).norm() <= 1e-12 * scale * (1.0 + z.norm()));
        }
    }
}
