//! Limited-memory BFGS with a strong Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    pub c1: f64,
    pub c2: f64,
    /// Stop once `||grad|| / max(1, f)` drops below this.
    pub grad_tol: f64,
    pub max_line_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iters: 2000,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-12,
            max_line_evals: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradTol,
    ZeroLoss,
    MaxIters,
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub evals: usize,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    pub stop: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Probe {
    alpha: f64,
    f: f64,
    d: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

/// Minimize `f` from `x0`; `fg` returns the value and gradient.
pub fn minimize<F>(mut fg: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> LbfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut f, mut g) = fg(&x);
    let mut evals = 1;
    let mut trace = vec![f];
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let finish = |x, f, iters, evals, trace, stop| LbfgsOutcome {
        x,
        f,
        iters,
        evals,
        trace,
        stop,
    };
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return finish(x, f, 0, evals, trace, StopReason::NonFinite);
    }

    for iter in 0..cfg.max_iters {
        if f == 0.0 {
            return finish(x, f, iter, evals, trace, StopReason::ZeroLoss);
        }
        let gnorm = norm(&g);
        if gnorm / f.max(1.0) <= cfg.grad_tol {
            return finish(x, f, iter, evals, trace, StopReason::GradTol);
        }

        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        let gamma = match hist.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gnorm,
        };
        d.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        let mut slope = dot(&g, &d);
        if slope.is_nan() || slope >= 0.0 {
            // lost descent; fall back to steepest descent
            hist.clear();
            d = g.iter().map(|v| -v / gnorm).collect();
            slope = dot(&g, &d);
        }

        let step = match line_search(&mut fg, &x, f, &d, slope, cfg, &mut evals) {
            Some(p) => p,
            None => {
                if hist.is_empty() {
                    return finish(x, f, iter, evals, trace, StopReason::LineSearchFailed);
                }
                hist.clear();
                continue;
            }
        };
        if !step.f.is_finite() {
            return finish(x, f, iter, evals, trace, StopReason::NonFinite);
        }
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if hist.len() == cfg.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = step.x;
        f = step.f;
        g = step.g;
        trace.push(f);
    }
    let iters = cfg.max_iters;
    finish(x, f, iters, evals, trace, StopReason::MaxIters)
}

fn cubic_min(a: &Probe, b: &Probe) -> Option<f64> {
    let d1 = a.d + b.d - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.d * b.d;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.d + d2 - d1) / (b.d - a.d + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Interpolated trial in `(lo, hi)`, kept away from the endpoints.
fn trial(lo: &Probe, hi: &Probe) -> f64 {
    let (a, b) = if lo.alpha < hi.alpha {
        (lo.alpha, hi.alpha)
    } else {
        (hi.alpha, lo.alpha)
    };
    let margin = 0.1 * (b - a);
    match cubic_min(lo, hi) {
        Some(t) if t > a + margin && t < b - margin => t,
        _ => 0.5 * (a + b),
    }
}

fn line_search<F>(
    fg: &mut F,
    x: &[f64],
    f0: f64,
    d: &[f64],
    slope0: f64,
    cfg: &LbfgsConfig,
    evals: &mut usize,
) -> Option<Probe>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut eval = |alpha: f64, evals: &mut usize| {
        let xn: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        let (f, g) = fg(&xn);
        *evals += 1;
        let dd = if g.iter().all(|v| v.is_finite()) {
            dot(&g, d)
        } else {
            f64::NAN
        };
        Probe {
            alpha,
            f,
            d: dd,
            x: xn,
            g,
        }
    };
    let origin = Probe {
        alpha: 0.0,
        f: f0,
        d: slope0,
        x: Vec::new(),
        g: Vec::new(),
    };
    let mut prev = origin;
    let mut alpha = 1.0;
    let mut used = 0;
    let mut zoom_bounds = None;
    while used < cfg.max_line_evals {
        let p = eval(alpha, evals);
        used += 1;
        if !p.f.is_finite() || !p.d.is_finite() {
            // overshoot into a non-finite region: shrink
            alpha = 0.5 * (prev.alpha + alpha);
            continue;
        }
        if p.f > f0 + cfg.c1 * alpha * slope0 || (used > 1 && p.f >= prev.f) {
            zoom_bounds = Some((prev, p));
            break;
        }
        if p.d.abs() <= -cfg.c2 * slope0 {
            return Some(p);
        }
        if p.d >= 0.0 {
            zoom_bounds = Some((p, prev));
            break;
        }
        alpha *= 2.0;
        prev = p;
    }
    let (mut lo, mut hi) = zoom_bounds?;
    while used < cfg.max_line_evals {
        let t = trial(&lo, &hi);
        if (t - lo.alpha).abs() <= 1e-16 * t.abs().max(1e-300) {
            break;
        }
        let p = eval(t, evals);
        used += 1;
        if !p.f.is_finite() {
            hi = p;
            continue;
        }
        if p.f > f0 + cfg.c1 * t * slope0 || p.f >= lo.f {
            hi = p;
        } else {
            if p.d.abs() <= -cfg.c2 * slope0 {
                return Some(p);
            }
            if p.d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
    // accept a sufficient-decrease point even if curvature is not met
    (lo.alpha > 0.0 && lo.f < f0).then_some(lo)
}
