//! The analytic wavelet transform `W`, its frame inverse and the
//! real/analytic filter correspondence.
//!
//! Energies are unnormalized grid sums: `||x||^2 = sum_u x(u)^2` and
//! `||Wx||^2 = sum_lambda w_lambda ||x * psi_lambda||^2`, with `w_lambda` the
//! channel weight of the bank.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filterbank::{dual_bank, FilterBank};
use crate::signal_io::Signal;

/// `x * psi_lambda` for every channel of a bank, low-pass last.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticCoefficients {
    pub shape: Vec<usize>,
    pub coeffs: Vec<Vec<Complex64>>,
}

impl AnalyticCoefficients {
    pub fn num_channels(&self) -> usize {
        self.coeffs.len()
    }

    pub fn grid_len(&self) -> usize {
        self.shape.iter().product()
    }

    /// Weighted energy `sum_lambda w_lambda ||coeffs_lambda||^2`.
    pub fn energy(&self, bank: &FilterBank) -> f64 {
        bank.channels()
            .iter()
            .zip(&self.coeffs)
            .map(|(ch, c)| ch.weight * c.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum()
    }

    pub fn sub(&self, other: &AnalyticCoefficients) -> AnalyticCoefficients {
        AnalyticCoefficients {
            shape: self.shape.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        }
    }
}

fn check_shape(bank: &FilterBank, shape: &[usize]) -> Result<()> {
    if bank.shape() != shape {
        return Err(Error::ShapeMismatch {
            expected: bank.shape().to_vec(),
            got: shape.to_vec(),
        });
    }
    Ok(())
}

/// Periodic convolution with each filter via FFT.
pub fn analyze(x: &Signal, bank: &FilterBank) -> Result<AnalyticCoefficients> {
    check_shape(bank, x.shape())?;
    let sp = bank.spectral();
    let xhat = sp.forward_real(x.data());
    let coeffs = bank
        .filters()
        .par_iter()
        .map(|f| {
            let mut buf: Vec<Complex64> = xhat.iter().zip(f).map(|(v, g)| v * g).collect();
            sp.inverse(&mut buf);
            buf
        })
        .collect();
    Ok(AnalyticCoefficients {
        shape: x.shape().to_vec(),
        coeffs,
    })
}

/// `sum_lambda w_lambda Re(c_lambda * dual_lambda)` for arbitrary channel
/// fields `c`, with `dual` precomputed.
pub(crate) fn synthesize(
    fields: &[Vec<Complex64>],
    bank: &FilterBank,
    dual: &FilterBank,
) -> Vec<f64> {
    let sp = bank.spectral();
    let parts: Vec<Vec<f64>> = fields
        .par_iter()
        .zip(dual.filters().par_iter())
        .zip(bank.channels().par_iter())
        .map(|((c, f), ch)| {
            let mut buf = c.clone();
            sp.forward(&mut buf);
            buf.iter_mut().zip(f).for_each(|(v, g)| *v *= g);
            sp.inverse(&mut buf);
            buf.iter().map(|v| ch.weight * v.re).collect()
        })
        .collect();
    let mut out = vec![0.0; sp.len()];
    for p in &parts {
        out.iter_mut().zip(p).for_each(|(o, v)| *o += v);
    }
    out
}

/// Frame inverse: exact on the grid whenever the dual exists.
pub fn reconstruct_frame(wx: &AnalyticCoefficients, bank: &FilterBank) -> Result<Signal> {
    check_shape(bank, &wx.shape)?;
    if wx.num_channels() != bank.num_channels() {
        return Err(Error::ShapeMismatch {
            expected: vec![bank.num_channels()],
            got: vec![wx.num_channels()],
        });
    }
    let dual = dual_bank(bank)?;
    Signal::new(synthesize(&wx.coeffs, bank, &dual), wx.shape.clone())
}

/// Largest relative L2 deviation between each 1D filter and the analytic
/// extension of its real part.
///
/// The extension doubles bins `0 <= m < N/2`, keeps the self-mirrored Nyquist
/// bin, and zeroes negative frequencies. Mass at the zero frequency is doubled
/// and so shows up as a deviation.
pub fn analytic_pair_check(bank: &FilterBank) -> Result<f64> {
    if bank.dim() != 1 {
        return Err(Error::InvalidArgument(
            "analytic pair check needs a 1D bank".into(),
        ));
    }
    let sp = bank.spectral();
    let n = bank.grid_len();
    let mut worst = 0.0f64;
    for (ch, f) in bank.channels().iter().zip(bank.filters()) {
        if ch.is_lowpass() {
            continue;
        }
        let mut spatial: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        sp.inverse(&mut spatial);
        let mut real: Vec<Complex64> = spatial.iter().map(|v| Complex64::new(v.re, 0.0)).collect();
        sp.forward(&mut real);
        let mut num = 0.0;
        let mut den = 0.0;
        for m in 0..n {
            let ext = if m < n / 2 {
                real[m] * 2.0
            } else if m == n / 2 {
                real[m]
            } else {
                Complex64::new(0.0, 0.0)
            };
            num += (ext - f[m]).norm_sqr();
            den += f[m] * f[m];
        }
        if den > 0.0 {
            worst = worst.max((num / den).sqrt());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::{build_bank_1d, build_bank_2d, frame_report};
    use crate::signal_io::{gen_white_noise, RngSpec};
    use std::f64::consts::PI;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = a.iter().map(|x| x * x).sum();
        (num / den).sqrt()
    }

    #[test]
    fn impulse_gives_filters() {
        let bank = build_bank_1d(64, 4, 1).unwrap();
        let mut d = vec![0.0; 64];
        d[0] = 1.0;
        let wx = analyze(&Signal::new(d, vec![64]).unwrap(), &bank).unwrap();
        for (c, f) in wx.coeffs.iter().zip(bank.filters()) {
            let mut spec = c.clone();
            bank.spectral().forward(&mut spec);
            for (s, g) in spec.iter().zip(f) {
                assert!((s.re - g).abs() < 1e-12 && s.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_kills_bandpass() {
        let bank = build_bank_1d(256, 8, 1).unwrap();
        let wx = analyze(&Signal::new(vec![1.0; 256], vec![256]).unwrap(), &bank).unwrap();
        for (ch, c) in bank.channels().iter().zip(&wx.coeffs) {
            if ch.is_lowpass() {
                assert!(c.iter().all(|v| (v.re - 1.0).abs() < 1e-12));
            } else {
                assert!(c.iter().all(|v| v.norm() < 1e-12));
            }
        }
    }

    #[test]
    fn energy_bounds() {
        let bank = build_bank_1d(1024, 10, 1).unwrap();
        let rep = frame_report(&bank);
        for seed in 0..5 {
            let x = gen_white_noise(&[1024], RngSpec::new(seed)).unwrap();
            let ratio = analyze(&x, &bank).unwrap().energy(&bank) / x.norm().powi(2);
            assert!(ratio >= rep.grid_min - 1e-12 && ratio <= rep.grid_max + 1e-12);
            let r = ratio.sqrt() / rep.frame_scale.sqrt();
            assert!(r >= 1.0 - rep.eta && r <= 1.0 + rep.eta, "ratio {r}");
        }
    }

    #[test]
    fn round_trip_1d() {
        let bank = build_bank_1d(1024, 10, 1).unwrap();
        let x = gen_white_noise(&[1024], RngSpec::new(11)).unwrap();
        let y = reconstruct_frame(&analyze(&x, &bank).unwrap(), &bank).unwrap();
        assert!(rel_err(x.data(), y.data()) <= 1e-10);
    }

    #[test]
    fn round_trip_2d() {
        let bank = build_bank_2d(64, 6, 4).unwrap();
        let x = gen_white_noise(&[64, 64], RngSpec::new(2)).unwrap();
        let y = reconstruct_frame(&analyze(&x, &bank).unwrap(), &bank).unwrap();
        assert!(rel_err(x.data(), y.data()) <= 1e-10);
    }

    #[test]
    fn zero_maps_to_zero() {
        let bank = build_bank_1d(128, 7, 1).unwrap();
        let z = Signal::zeros(&[128]).unwrap();
        let y = reconstruct_frame(&analyze(&z, &bank).unwrap(), &bank).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_error() {
        let bank = build_bank_1d(128, 7, 1).unwrap();
        let z = Signal::zeros(&[64]).unwrap();
        assert!(matches!(
            analyze(&z, &bank),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn bump_bank_is_analytic_pair() {
        for q in [1, 2] {
            let bank = build_bank_1d(1024, 10, q).unwrap();
            assert!(analytic_pair_check(&bank).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn dc_mass_is_reported() {
        let n = 32;
        let mut bp = vec![0.0; n];
        bp[0] = 1.0;
        bp[3] = 1.0;
        let bank = FilterBank::custom(&[n], vec![bp], vec![1.0; n]).unwrap();
        assert!(analytic_pair_check(&bank).unwrap() > 0.5);
    }

    #[test]
    fn cosine_filter_analytic_part() {
        // the analytic extension of cos(lam u) is exp(i lam u)
        let n = 64;
        let m = 5;
        let lam = 2.0 * PI * m as f64 / n as f64;
        let sp = crate::spectral::Spectral::new(&[n]);
        let cosine: Vec<f64> = (0..n).map(|u| (lam * u as f64).cos()).collect();
        let spec = sp.forward_real(&cosine);
        let mut ext: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(k, v)| {
                if k < n / 2 {
                    v * 2.0
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        sp.inverse(&mut ext);
        for (u, v) in ext.iter().enumerate() {
            let want = Complex64::from_polar(1.0, lam * u as f64);
            assert!((v - want).norm() < 1e-12);
        }
    }
}
