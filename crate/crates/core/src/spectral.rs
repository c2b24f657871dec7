//! FFT plumbing for 1D and square 2D periodic grids.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Cached forward/inverse plans for one grid shape.
///
/// `inverse` includes the `1/len` factor so `inverse(forward(x)) == x`.
#[derive(Clone)]
pub struct Spectral {
    shape: Vec<usize>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral")
            .field("shape", &self.shape)
            .finish()
    }
}

impl Spectral {
    /// All axes must share one length (1D or square 2D).
    pub fn new(shape: &[usize]) -> Self {
        assert!(!shape.is_empty() && shape.iter().all(|&n| n == shape[0]));
        let mut planner = FftPlanner::new();
        Spectral {
            shape: shape.to_vec(),
            fwd: planner.plan_fft_forward(shape[0]),
            inv: planner.plan_fft_inverse(shape[0]),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(&self.fwd, buf);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(&self.inv, buf);
        let s = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len());
        let n = self.shape[0];
        match self.shape.len() {
            1 => plan.process(buf),
            2 => {
                plan.process(buf);
                let mut col = vec![Complex64::new(0.0, 0.0); n];
                let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
                for c in 0..n {
                    for r in 0..n {
                        col[r] = buf[r * n + c];
                    }
                    plan.process_with_scratch(&mut col, &mut scratch);
                    for r in 0..n {
                        buf[r * n + c] = col[r];
                    }
                }
            }
            _ => unreachable!("only 1D and 2D grids"),
        }
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Flat index of the bin at `-omega`.
    pub fn mirror_index(&self, idx: usize) -> usize {
        let n = self.shape[0];
        match self.shape.len() {
            1 => (n - idx) % n,
            _ => {
                let (a, b) = (idx / n, idx % n);
                ((n - a) % n) * n + (n - b) % n
            }
        }
    }

    /// Frequency vector of each flat bin, `[omega_0, omega_1]` with
    /// `omega_1 = 0` in 1D.
    pub fn frequencies(&self) -> Vec<[f64; 2]> {
        let n = self.shape[0];
        match self.shape.len() {
            1 => (0..n).map(|m| [bin_frequency(m, n), 0.0]).collect(),
            _ => {
                let axis: Vec<f64> = (0..n).map(|m| bin_frequency(m, n)).collect();
                let mut out = Vec::with_capacity(n * n);
                for a in 0..n {
                    for b in 0..n {
                        out.push([axis[a], axis[b]]);
                    }
                }
                out
            }
        }
    }
}

/// DFT bin `m` of an `n`-point grid mapped to (-pi, pi]; Nyquist goes to +pi.
pub fn bin_frequency(m: usize, n: usize) -> f64 {
    let m = m % n;
    let signed = if m <= n / 2 {
        m as f64
    } else {
        m as f64 - n as f64
    };
    2.0 * PI * signed / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nyquist_is_positive_pi() {
        assert_eq!(bin_frequency(512, 1024), PI);
        assert!(bin_frequency(513, 1024) < 0.0);
        assert_eq!(bin_frequency(0, 8), 0.0);
    }

    #[test]
    fn round_trip_2d() {
        let sp = Spectral::new(&[8, 8]);
        let x: Vec<f64> = (0..64).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let mut buf = sp.forward_real(&x);
        sp.inverse(&mut buf);
        for (a, b) in x.iter().zip(&buf) {
            assert!((a - b.re).abs() < 1e-12 && b.im.abs() < 1e-12);
        }
    }

    #[test]
    fn mirror_is_involution() {
        let sp = Spectral::new(&[16, 16]);
        for i in 0..256 {
            assert_eq!(sp.mirror_index(sp.mirror_index(i)), i);
        }
        let freqs = sp.frequencies();
        let i = 3 * 16 + 5;
        let j = sp.mirror_index(i);
        assert!((freqs[i][0] + freqs[j][0]).abs() < 1e-15);
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let sp = Spectral::new(&[16]);
        let mut x = vec![0.0; 16];
        x[0] = 1.0;
        let spec = sp.forward_real(&x);
        assert!(spec
            .iter()
            .all(|v| (v.re - 1.0).abs() < 1e-15 && v.im.abs() < 1e-15));
    }
}
