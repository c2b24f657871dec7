//! Signal recovery from a descriptor set by multi-restart L-BFGS on the
//! covariance-matching loss.
//!
//! For each selected correlation `e = (a, ka, b, kb)` the residual is
//! `K_y(e) - K_x(e) + conj(M_y(a) - M_x(a)) (M_y(b) - M_x(b))`, and every mean
//! entry adds `|M_y - M_x|^2`. Gradients follow the Wirtinger convention
//! `G = dE / d conj(.)`, so that `dE = 2 Re sum conj(G) d(.)`.

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptors::{
    describe, select_coefficients, DescriptorSet, SelectionIndex, SelectionParams,
};
use crate::error::{invalid, Error, Result};
use crate::filterbank::FilterBank;
use crate::lbfgs::{minimize, LbfgsConfig, LbfgsOutcome, StopReason};
use crate::signal_io::{RngSpec, Signal};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Per-term weighting of the loss residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Plain Frobenius norm over the selected entries.
    #[default]
    Uniform,
    /// Residuals divided by the target's channel amplitudes, `sigma_a sigma_b`
    /// for correlations and `sigma_a` for means.
    Normalized,
}

impl std::str::FromStr for Weighting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "normalized" => Ok(Weighting::Normalized),
            _ => invalid(format!(
                "unknown weighting '{s}' (expected uniform or normalized)"
            )),
        }
    }
}

/// Order in which descriptor terms enter the optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Minimize the full loss from the white-noise start.
    Direct,
    /// Warm-start through nested losses, starting from the low-pass and
    /// coarsest octave and adding one finer octave per stage.
    #[default]
    CoarseToFine,
}

impl std::str::FromStr for Schedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Schedule::Direct),
            "coarse-to-fine" | "coarse_to_fine" => Ok(Schedule::CoarseToFine),
            _ => invalid(format!(
                "unknown schedule '{s}' (expected direct or coarse-to-fine)"
            )),
        }
    }
}

/// Relative floor on channel power under normalized weighting.
const POWER_FLOOR: f64 = 1e-10;

/// Loss and gradient of a fixed target against candidate signals.
pub struct Objective<'a> {
    bank: &'a FilterBank,
    target: &'a DescriptorSet,
    /// Channels read by the descriptors and, per channel, the harmonics.
    channel_ks: Vec<(usize, Vec<i32>)>,
    field_index: HashMap<(usize, i32), usize>,
    means: Vec<usize>,
    corrs: Vec<(usize, usize)>,
    /// Mean positions of the two slots of each correlation.
    corr_means: Vec<(usize, usize)>,
    w_corrs: Vec<f64>,
    w_means: Vec<f64>,
}

impl<'a> Objective<'a> {
    pub fn new(target: &'a DescriptorSet, bank: &'a FilterBank) -> Result<Self> {
        Self::with_weighting(target, bank, Weighting::Uniform)
    }

    pub fn with_weighting(
        target: &'a DescriptorSet,
        bank: &'a FilterBank,
        weighting: Weighting,
    ) -> Result<Self> {
        if &target.bank != bank.spec() || target.shape != bank.shape() {
            return Err(Error::SelectionMismatch(
                "descriptor set was computed with a different filter bank".into(),
            ));
        }
        let sel = &target.selection;
        if sel.means.len() != target.means.len() || sel.corrs.len() != target.corrs.len() {
            return Err(Error::SelectionMismatch(
                "value count does not match the selection".into(),
            ));
        }
        let requests = sel.field_requests();
        if let Some(&(ch, k)) = requests.iter().find(|(ch, _)| *ch >= bank.num_channels()) {
            return Err(Error::MissingChannel { channel: ch, k });
        }
        let field_index: HashMap<(usize, i32), usize> =
            requests.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        let mut channel_ks: Vec<(usize, Vec<i32>)> = Vec::new();
        for &(ch, k) in &requests {
            match channel_ks.last_mut() {
                Some((c, ks)) if *c == ch => ks.push(k),
                _ => channel_ks.push((ch, vec![k])),
            }
        }
        let pos = sel.mean_position();
        let mut corr_means = Vec::with_capacity(sel.corrs.len());
        for e in &sel.corrs {
            let a = *pos.get(&(e.a, e.ka)).ok_or(Error::MissingChannel {
                channel: e.a,
                k: e.ka,
            })?;
            let b = *pos.get(&(e.b, e.kb)).ok_or(Error::MissingChannel {
                channel: e.b,
                k: e.kb,
            })?;
            corr_means.push((a, b));
        }
        let (w_corrs, w_means) = match weighting {
            Weighting::Uniform => (vec![1.0; sel.corrs.len()], vec![1.0; sel.means.len()]),
            Weighting::Normalized => {
                let mut power = vec![None; bank.num_channels()];
                for (e, v) in sel.corrs.iter().zip(&target.corrs) {
                    if e.a == e.b && e.ka == e.kb {
                        power[e.a] = Some(v.re);
                    }
                }
                let mut power: Vec<f64> = power
                    .iter()
                    .enumerate()
                    .map(|(ch, p)| {
                        p.unwrap_or_else(|| target.mean(ch, 0).map_or(0.0, |m| m.norm_sqr()))
                    })
                    .collect();
                let top = power.iter().fold(0.0f64, |m, &p| m.max(p));
                if top == 0.0 {
                    power.iter_mut().for_each(|p| *p = 1.0);
                } else {
                    power.iter_mut().for_each(|p| *p = p.max(POWER_FLOOR * top));
                }
                let amp: Vec<f64> = power.iter().map(|p| p.sqrt()).collect();
                (
                    sel.corrs
                        .iter()
                        .map(|e| 1.0 / (amp[e.a] * amp[e.b]))
                        .collect(),
                    sel.means.iter().map(|m| 1.0 / amp[m.channel]).collect(),
                )
            }
        };
        Ok(Objective {
            bank,
            target,
            w_corrs,
            w_means,
            means: sel
                .means
                .iter()
                .map(|m| field_index[&(m.channel, m.k)])
                .collect(),
            corrs: sel
                .corrs
                .iter()
                .map(|e| (field_index[&(e.a, e.ka)], field_index[&(e.b, e.kb)]))
                .collect(),
            channel_ks,
            field_index,
            corr_means,
        })
    }

    pub fn selection(&self) -> &SelectionIndex {
        &self.target.selection
    }

    /// Descriptor count `M`.
    pub fn count(&self) -> usize {
        self.target.len()
    }

    /// Powers `u^j` of the unit phase of each channel in use, for
    /// `j = 0..=kmax+1`, plus the harmonic fields.
    #[allow(clippy::type_complexity)]
    fn forward(&self, y: &[f64]) -> (Vec<Vec<Vec<Complex64>>>, Vec<Vec<Complex64>>) {
        let sp = self.bank.spectral();
        let yhat = sp.forward_real(y);
        let per_channel: Vec<(Vec<Vec<Complex64>>, Vec<Vec<Complex64>>)> = self
            .channel_ks
            .par_iter()
            .map(|(ch, ks)| {
                let f = self.bank.filter(*ch);
                let mut z: Vec<Complex64> = yhat.iter().zip(f).map(|(v, g)| v * g).collect();
                sp.inverse(&mut z);
                let r: Vec<f64> = z.iter().map(|v| v.norm()).collect();
                let u: Vec<Complex64> = z
                    .iter()
                    .zip(&r)
                    .map(|(&v, &m)| if m == 0.0 { ZERO } else { v / m })
                    .collect();
                let kmax = ks
                    .iter()
                    .map(|k| k.unsigned_abs() as usize)
                    .max()
                    .unwrap_or(0);
                let pows = ladder(&u, kmax + 1);
                let fields = ks
                    .iter()
                    .map(|&k| match k {
                        1 => z.clone(),
                        0 => r.iter().map(|&m| Complex64::new(m, 0.0)).collect(),
                        _ => {
                            let p = &pows[k.unsigned_abs() as usize];
                            if k > 0 {
                                p.iter().zip(&r).map(|(w, m)| w * m).collect()
                            } else {
                                p.iter().zip(&r).map(|(w, m)| w.conj() * m).collect()
                            }
                        }
                    })
                    .collect();
                (pows, fields)
            })
            .collect();
        let mut us = Vec::with_capacity(per_channel.len());
        let mut fields = Vec::with_capacity(self.field_index.len());
        for (p, f) in per_channel {
            us.push(p);
            fields.extend(f);
        }
        (us, fields)
    }

    fn statistics(&self, fields: &[Vec<Complex64>]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.bank.grid_len() as f64;
        let means = self
            .means
            .iter()
            .map(|&i| fields[i].iter().sum::<Complex64>() / n)
            .collect();
        let corrs = self
            .corrs
            .par_iter()
            .map(|&(a, b)| {
                fields[a]
                    .iter()
                    .zip(&fields[b])
                    .map(|(u, v)| u.conj() * v)
                    .sum::<Complex64>()
                    / n
            })
            .collect();
        (means, corrs)
    }

    /// Residuals of every correlation term and every mean term.
    fn residuals(&self, my: &[Complex64], cy: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mx = &self.target.means;
        let cx = &self.target.corrs;
        let rc = cy
            .iter()
            .zip(cx)
            .zip(&self.corr_means)
            .zip(&self.w_corrs)
            .map(|(((cy, cx), &(a, b)), w)| {
                w * (cy - cx - my[a].conj() * mx[b] - mx[a].conj() * my[b]
                    + 2.0 * mx[a].conj() * mx[b])
            })
            .collect();
        let rm = my
            .iter()
            .zip(mx)
            .zip(&self.w_means)
            .map(|((y, x), w)| w * (y - x))
            .collect();
        (rc, rm)
    }

    /// Per-entry residuals `(correlations, means)` at `y`.
    pub fn residual_terms(&self, y: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let (_, fields) = self.forward(y);
        let (my, cy) = self.statistics(&fields);
        self.residuals(&my, &cy)
    }

    pub fn loss(&self, y: &Signal) -> Result<f64> {
        self.check(y)?;
        Ok(self.eval(y.data(), false).0)
    }

    pub fn loss_and_gradient(&self, y: &Signal) -> Result<(f64, Signal)> {
        self.check(y)?;
        let (f, g) = self.eval(y.data(), true);
        Ok((f, Signal::new(g, y.shape().to_vec())?))
    }

    fn check(&self, y: &Signal) -> Result<()> {
        if y.shape() != self.bank.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.bank.shape().to_vec(),
                got: y.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Value and (optionally) gradient on a raw sample vector.
    pub fn eval(&self, y: &[f64], with_grad: bool) -> (f64, Vec<f64>) {
        let (us, fields) = self.forward(y);
        let (my, cy) = self.statistics(&fields);
        let (rc, rm) = self.residuals(&my, &cy);
        let loss: f64 = rc.iter().chain(&rm).map(|r| r.norm_sqr()).sum();
        if !with_grad {
            return (loss, Vec::new());
        }

        let n = self.bank.grid_len() as f64;
        let mx = &self.target.means;
        // dE / d conj(C_y) and dE / d conj(M_y)
        let rc: Vec<Complex64> = rc.iter().zip(&self.w_corrs).map(|(r, w)| w * r).collect();
        let mut g_means: Vec<Complex64> =
            rm.iter().zip(&self.w_means).map(|(r, w)| w * r).collect();
        for (r, &(a, b)) in rc.iter().zip(&self.corr_means) {
            g_means[b] -= mx[a] * r;
            g_means[a] -= r.conj() * mx[b];
        }
        // dE / d conj(field)
        let mut g_fields: Vec<Vec<Complex64>> = vec![vec![ZERO; y.len()]; fields.len()];
        for (&i, g) in self.means.iter().zip(&g_means) {
            let add = g / n;
            g_fields[i].iter_mut().for_each(|v| *v += add);
        }
        for (&(a, b), r) in self.corrs.iter().zip(&rc) {
            let r = r / n;
            if a == b {
                let two_re = 2.0 * r.re;
                g_fields[a]
                    .iter_mut()
                    .zip(&fields[a])
                    .for_each(|(g, f)| *g += two_re * f);
            } else {
                let (ga, gb) = two_mut(&mut g_fields, a, b);
                for ((ga, gb), (fa, fb)) in ga
                    .iter_mut()
                    .zip(gb.iter_mut())
                    .zip(fields[a].iter().zip(&fields[b]))
                {
                    *gb += r * fa;
                    *ga += r.conj() * fb;
                }
            }
        }

        // back through [z]^k and the filters
        let sp = self.bank.spectral();
        let mut offset = 0;
        let spectra: Vec<Vec<Complex64>> = self
            .channel_ks
            .iter()
            .zip(&us)
            .map(|((ch, ks), pows)| {
                let idx: Vec<usize> = (offset..offset + ks.len()).collect();
                offset += ks.len();
                (*ch, ks, pows, idx)
            })
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(ch, ks, pows, idx)| {
                let mut gz = vec![ZERO; pows[0].len()];
                for (&k, &fi) in ks.iter().zip(&idx) {
                    let gf = &g_fields[fi];
                    if k == 1 {
                        gz.iter_mut().zip(gf).for_each(|(g, v)| *g += v);
                        continue;
                    }
                    // d[z]^k/dz = p u^{k-1}, d[z]^k/dconj(z) = q u^{k+1}; both vanish at z = 0
                    let (p, q) = ((k as f64 + 1.0) / 2.0, (1.0 - k as f64) / 2.0);
                    let (below, above) = (
                        &pows[(k - 1).unsigned_abs() as usize],
                        &pows[(k + 1).unsigned_abs() as usize],
                    );
                    let (bc, ac) = (k >= 1, k + 1 < 0);
                    for (((g, gu), b), a) in gz.iter_mut().zip(gf).zip(below).zip(above) {
                        let b = if bc { b.conj() } else { *b };
                        let a = if ac { a.conj() } else { *a };
                        *g += p * b * gu + q * a * gu.conj();
                    }
                }
                sp.forward(&mut gz);
                let f = self.bank.filter(ch);
                gz.iter_mut().zip(f).for_each(|(v, h)| *v *= h);
                gz
            })
            .collect();
        let mut acc = vec![ZERO; sp.len()];
        for s in &spectra {
            acc.iter_mut().zip(s).for_each(|(a, v)| *a += v);
        }
        sp.inverse(&mut acc);
        (loss, acc.iter().map(|v| 2.0 * v.re).collect())
    }

    /// Mean-square amplitude implied by the target's diagonal energies.
    pub fn target_power(&self) -> f64 {
        let sel = &self.target.selection;
        let channels = self.bank.channels();
        sel.corrs
            .iter()
            .zip(&self.target.corrs)
            .filter(|(e, _)| e.a == e.b && e.ka == 1 && e.kb == 1)
            .map(|(e, v)| channels[e.a].weight * v.re)
            .sum()
    }
}

/// `ladder[j][u] = w[u]^j` for `j = 0..=kmax`.
fn ladder(w: &[Complex64], kmax: usize) -> Vec<Vec<Complex64>> {
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(
        w.iter()
            .map(|v| {
                if *v == ZERO {
                    ZERO
                } else {
                    Complex64::new(1.0, 0.0)
                }
            })
            .collect::<Vec<_>>(),
    );
    for j in 1..=kmax {
        let next = out[j - 1].iter().zip(w).map(|(a, b)| a * b).collect();
        out.push(next);
    }
    out
}

fn two_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

pub fn loss(
    desc_x: &DescriptorSet,
    y: &Signal,
    bank: &FilterBank,
    selection: &SelectionIndex,
) -> Result<f64> {
    check_selection(desc_x, selection)?;
    Objective::new(desc_x, bank)?.loss(y)
}

pub fn loss_gradient(
    desc_x: &DescriptorSet,
    y: &Signal,
    bank: &FilterBank,
    selection: &SelectionIndex,
) -> Result<Signal> {
    check_selection(desc_x, selection)?;
    Ok(Objective::new(desc_x, bank)?.loss_and_gradient(y)?.1)
}

fn check_selection(desc: &DescriptorSet, selection: &SelectionIndex) -> Result<()> {
    if &desc.selection != selection {
        return Err(Error::SelectionMismatch(
            "selection differs from the one the descriptors were computed with".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub restarts: usize,
    pub lbfgs: LbfgsConfig,
    pub rng: RngSpec,
    /// Initial white-noise std relative to the target's RMS amplitude.
    pub init_scale: f64,
    pub weighting: Weighting,
    pub schedule: Schedule,
    /// Iteration cap of each intermediate stage; the final stage uses `lbfgs.max_iters`.
    pub stage_iters: usize,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            restarts: 10,
            lbfgs: LbfgsConfig {
                max_iters: 500,
                ..LbfgsConfig::default()
            },
            rng: RngSpec::new(0),
            init_scale: 0.1,
            weighting: Weighting::Normalized,
            schedule: Schedule::CoarseToFine,
            stage_iters: 200,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        let l = &self.lbfgs;
        if self.restarts < 1 {
            return invalid("restarts must be at least 1");
        }
        if !(0.0 < l.c1 && l.c1 < l.c2 && l.c2 < 1.0) {
            return invalid(format!(
                "need 0 < c1 < c2 < 1, got c1={}, c2={}",
                l.c1, l.c2
            ));
        }
        if l.memory < 1 || l.max_iters < 1 {
            return invalid("memory and max_iters must be positive");
        }
        if self.schedule == Schedule::CoarseToFine && self.stage_iters < 1 {
            return invalid("stage_iters must be positive");
        }
        if self.init_scale.is_nan() || self.init_scale <= 0.0 {
            return invalid("init_scale must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    pub loss: f64,
    /// Number of optimization stages run, the last on the full loss.
    pub stages: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    /// Aligned PSNR of this restart's output against the reference, when given.
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub signal: Signal,
    /// Final loss of each restart.
    pub losses: Vec<f64>,
    pub restarts: Vec<RestartReport>,
    pub best: usize,
    /// Full-loss value per iteration of the best restart's final stage.
    pub trace: Vec<f64>,
    pub psnr: Option<f64>,
    pub shift: Option<Vec<isize>>,
    pub m: usize,
}

pub fn reconstruct(
    desc_x: &DescriptorSet,
    bank: &FilterBank,
    cfg: &RecoveryConfig,
    reference: Option<&Signal>,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    let obj = Objective::with_weighting(desc_x, bank, cfg.weighting)?;
    let power = obj.target_power().max(0.0);
    let std = cfg.init_scale * power.sqrt();
    let shape = bank.shape().to_vec();
    let len = bank.grid_len();

    // nested sub-problems, coarse octaves first
    let stage_sets: Vec<DescriptorSet> = match cfg.schedule {
        Schedule::Direct => Vec::new(),
        Schedule::CoarseToFine => {
            let q = bank.scales_per_octave().max(1);
            let octave = |c: usize| bank.channels()[c].scale / q;
            let top = (0..bank.num_channels()).map(octave).max().unwrap_or(0);
            (0..top)
                .map(|s| desc_x.restrict(|c| octave(c) + s >= top))
                .filter(|d| !d.selection.corrs.is_empty() && d.len() < desc_x.len())
                .collect()
        }
    };
    let stages: Vec<Objective> = stage_sets
        .iter()
        .map(|d| Objective::with_weighting(d, bank, cfg.weighting))
        .collect::<Result<_>>()?;
    let stage_cfg = LbfgsConfig {
        max_iters: cfg.stage_iters,
        ..cfg.lbfgs
    };

    let runs: Vec<(LbfgsOutcome, usize, usize, usize)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let stream = cfg.rng.stream.wrapping_mul(1 << 20).wrapping_add(r as u64);
            let mut y: Vec<f64> = RngSpec {
                seed: cfg.rng.seed,
                stream,
            }
            .normals(len)
            .into_iter()
            .map(|v| v * std)
            .collect();
            let (mut iters, mut evals) = (0, 0);
            for (i, st) in stages.iter().enumerate() {
                let out = minimize(|v| st.eval(v, true), y, &stage_cfg);
                iters += out.iters;
                evals += out.evals;
                if out.stop == StopReason::NonFinite {
                    return (out, iters, evals, i + 1);
                }
                y = out.x;
            }
            let out = minimize(|v| obj.eval(v, true), y, &cfg.lbfgs);
            let (i, e) = (iters + out.iters, evals + out.evals);
            (out, i, e, stages.len() + 1)
        })
        .collect();

    let restarts: Vec<RestartReport> = runs
        .iter()
        .map(|(o, iters, evals, stages)| {
            let psnr = match reference {
                Some(x) if o.x.iter().all(|v| v.is_finite()) => {
                    Some(align_and_psnr(x, &Signal::new(o.x.clone(), shape.clone())?)?.1)
                }
                _ => None,
            };
            Ok(RestartReport {
                loss: o.f,
                stages: *stages,
                iterations: *iters,
                evaluations: *evals,
                stop: o.stop,
                psnr,
            })
        })
        .collect::<Result<_>>()?;
    let runs: Vec<LbfgsOutcome> = runs.into_iter().map(|r| r.0).collect();
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, o)| o.f.is_finite())
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f))
        .map(|(i, _)| i)
        .ok_or_else(|| {
            Error::Diverged(format!(
                "all {} restarts produced non-finite losses: {:?}",
                cfg.restarts,
                restarts.iter().map(|r| r.stop).collect::<Vec<_>>()
            ))
        })?;
    let out = &runs[best];
    let signal = Signal::new(out.x.clone(), shape)?;
    let (shift, psnr) = match reference {
        Some(x) => {
            let (s, p) = align_and_psnr(x, &signal)?;
            (Some(s), Some(p))
        }
        None => (None, None),
    };
    Ok(RecoveryResult {
        signal,
        losses: runs.iter().map(|o| o.f).collect(),
        restarts,
        best,
        trace: out.trace.clone(),
        psnr,
        shift,
        m: obj.count(),
    })
}

/// Reported PSNR when the aligned error vanishes.
pub const PSNR_CAP: f64 = 300.0;

/// Best integer circular shift `s` with `y ~ shift(x, s)` and the PSNR of
/// `x` against `shift(y, -s)`, `20 log10(N^{d/2} max|x| / ||x - y_aligned||)`.
pub fn align_and_psnr(x: &Signal, y: &Signal) -> Result<(Vec<isize>, f64)> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            got: y.shape().to_vec(),
        });
    }
    let peak = x.max_abs();
    if peak == 0.0 {
        return invalid("PSNR is undefined for a zero reference");
    }
    let sp = crate::spectral::Spectral::new(x.shape());
    let xh = sp.forward_real(x.data());
    let mut cross: Vec<Complex64> = sp
        .forward_real(y.data())
        .iter()
        .zip(&xh)
        .map(|(a, b)| a * b.conj())
        .collect();
    sp.inverse(&mut cross);
    let best = cross
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.re.total_cmp(&b.1.re))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let n = x.shape()[0];
    let signed = |v: usize| {
        if v > n / 2 {
            v as isize - n as isize
        } else {
            v as isize
        }
    };
    let shift: Vec<isize> = match x.dim() {
        1 => vec![signed(best)],
        _ => vec![signed(best / n), signed(best % n)],
    };
    let back: Vec<isize> = shift.iter().map(|s| -s).collect();
    let aligned = y.circular_shift(&back);
    let err = x.axpy(-1.0, &aligned)?.norm();
    let scale = (x.len() as f64).sqrt() * peak;
    let psnr = if err == 0.0 {
        PSNR_CAP
    } else {
        (20.0 * (scale / err).log10()).min(PSNR_CAP)
    };
    Ok((shift, psnr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: usize,
    pub m: usize,
    pub m_means: usize,
    pub m_corrs: usize,
    pub psnr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// `-slope` of `log ||x - x_M||` against `log M`, absent for a single row.
    pub chi: Option<f64>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,m,m_means,m_corrs,psnr,loss,chi_fit\n");
        let chi = self.chi.map(|c| format!("{c:.6}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6e},{}\n",
                r.delta, r.m, r.m_means, r.m_corrs, r.psnr, r.loss, chi
            ));
        }
        out
    }
}

/// Error norm implied by a PSNR value for reference `x`.
pub fn psnr_to_error(x: &Signal, psnr: f64) -> f64 {
    (x.len() as f64).sqrt() * x.max_abs() * 10f64.powf(-psnr / 20.0)
}

/// Least-squares decay exponent from `(M, error)` pairs.
pub fn fit_decay(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = points.iter().map(|(m, e)| (m.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(-sxy / sxx)
}

pub fn decay_sweep(
    x: &Signal,
    bank: &FilterBank,
    deltas: &[usize],
    base: SelectionParams,
    cfg: &RecoveryConfig,
) -> Result<SweepTable> {
    if deltas.is_empty() {
        return invalid("delta list is empty");
    }
    if deltas.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("delta values must be strictly ascending");
    }
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let sel = select_coefficients(bank, SelectionParams { delta, ..base })?;
        let desc = describe(x, bank, &sel)?;
        let res = reconstruct(&desc, bank, cfg, Some(x))?;
        rows.push(SweepRow {
            delta,
            m: sel.len(),
            m_means: sel.means.len(),
            m_corrs: sel.corrs.len(),
            psnr: res.psnr.expect("reference given"),
            loss: res.losses[res.best],
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.m as f64, psnr_to_error(x, r.psnr)))
        .collect();
    Ok(SweepTable {
        chi: fit_decay(&pts),
        rows,
    })
}
