//! Delay-domain SAGE estimation of multipath components from a sampled CIR.
//!
//! The signal model is a sum of band-limited (sinc) pulses on the tap grid:
//! `h[n] = sum_l alpha_l * sinc(n - tau_l / T)`. Paths are initialized by
//! successive cancellation and refined one at a time: the E-step forms the
//! per-path signal as residual plus the path's own contribution, the M-step
//! maximizes the normalized correlation over an oversampled local delay grid
//! followed by a golden-section refinement, and the amplitude follows from
//! the closed-form projection.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::{db_to_linear, MultipathComponent, DEFAULT_FLOOR_DB, DEFAULT_MAX_PATHS};

/// Successive cancellation stops once a candidate falls this far below the
/// pruning floor.
const DETECTION_MARGIN_DB: f64 = 10.0;
/// Half-width of the M-step search window, in taps.
const LOCAL_WINDOW_TAPS: f64 = 2.0;
const GOLDEN_ITERATIONS: usize = 40;
const INIT_SWEEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub max_paths: usize,
    pub delay_grid_oversampling: usize,
    pub max_iterations: usize,
    /// Relative parameter change below which the sweeps stop.
    pub convergence_tol: f64,
    /// Paths weaker than this (dB, relative to the strongest) are removed.
    pub prune_floor_db: f64,
    pub tap_spacing_ns: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_paths: DEFAULT_MAX_PATHS,
            delay_grid_oversampling: 8,
            max_iterations: 50,
            convergence_tol: 1e-4,
            prune_floor_db: DEFAULT_FLOOR_DB,
            tap_spacing_ns: crate::mpc::DEFAULT_TAP_SPACING_NS,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_paths < 1 {
            return Err(Error::invalid("max_paths must be at least 1"));
        }
        if self.delay_grid_oversampling < 1 {
            return Err(Error::invalid("oversampling must be at least 1"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::invalid("convergence tolerance must be positive"));
        }
        if !(self.tap_spacing_ns > 0.0) {
            return Err(Error::invalid("tap spacing must be positive"));
        }
        Ok(())
    }
}

/// Estimated paths plus convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// Sorted by delay, pruned.
    pub mpcs: Vec<MultipathComponent>,
    /// Energy left unexplained by all paths (before pruning).
    pub residual_energy: f64,
    /// Residual energy after initialization and after every sweep.
    pub residual_history: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Visits `(n, sinc(n - t))` for every tap without allocating.
fn for_each_tap(t: f64, n_taps: usize, mut f: impl FnMut(usize, f64)) {
    let frac = t - t.round();
    if frac.abs() < 1e-12 {
        let i = t.round();
        if i >= 0.0 && (i as usize) < n_taps {
            f(i as usize, 1.0);
        }
        return;
    }
    let s = (PI * t).sin() / PI;
    for n in 0..n_taps {
        let x = n as f64 - t;
        let v = if x.abs() < 1e-9 {
            sinc(x)
        } else if n % 2 == 0 {
            -s / x
        } else {
            s / x
        };
        f(n, v);
    }
}

/// Correlation, pulse energy and objective `|c|^2 / E` at delay `t` (taps).
fn correlate(signal: &[Complex64], t: f64) -> (Complex64, f64, f64) {
    let mut c = Complex64::new(0.0, 0.0);
    let mut e = 0.0;
    for_each_tap(t, signal.len(), |n, s| {
        c += signal[n] * s;
        e += s * s;
    });
    if e <= 0.0 {
        return (c, 0.0, 0.0);
    }
    (c, e, c.norm_sqr() / e)
}

fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

fn add_pulse(target: &mut [Complex64], t: f64, amp: Complex64, sign: f64) {
    let n_taps = target.len();
    for_each_tap(t, n_taps, |n, s| target[n] += amp * (s * sign));
}

/// Forward model: superposition of sinc pulses at each path delay.
pub fn synthesize_cir_from_mpcs(
    mpcs: &[MultipathComponent],
    tap_spacing_ns: f64,
    n_taps: usize,
) -> Result<Vec<Complex64>> {
    if !(tap_spacing_ns > 0.0) {
        return Err(Error::invalid("tap spacing must be positive"));
    }
    let span = n_taps as f64 * tap_spacing_ns;
    let mut h = vec![Complex64::new(0.0, 0.0); n_taps];
    for m in mpcs {
        if !(m.delay_ns >= 0.0 && m.delay_ns < span) {
            return Err(Error::invalid(format!(
                "delay {} ns outside [0, {span})",
                m.delay_ns
            )));
        }
        add_pulse(&mut h, m.delay_ns / tap_spacing_ns, m.amplitude(), 1.0);
    }
    Ok(h)
}

/// Golden-section maximization of the objective on `[lo, hi]`.
fn refine(signal: &[Complex64], lo: f64, hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = correlate(signal, x1).2;
    let mut f2 = correlate(signal, x2).2;
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = correlate(signal, x1).2;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = correlate(signal, x2).2;
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Best delay (taps) on the grid points of `[lo, hi]` followed by refinement.
fn search(signal: &[Complex64], lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let n = ((hi - lo) / step).floor() as usize;
    let mut best = (lo, f64::NEG_INFINITY);
    for i in 0..=n {
        let t = lo + i as f64 * step;
        let f = correlate(signal, t).2;
        if f > best.1 {
            best = (t, f);
        }
    }
    let a = (best.0 - step).max(lo);
    let b = (best.0 + step).min(hi);
    let r = refine(signal, a, b);
    if r.1 > best.1 {
        r
    } else {
        best
    }
}

#[derive(Debug, Clone, Copy)]
struct Path {
    t: f64,
    amp: Complex64,
}

/// Working state of one estimation run.
struct Sage {
    residual: Vec<Complex64>,
    paths: Vec<Path>,
    step: f64,
    t_max: f64,
}

impl Sage {
    /// One E/M update of path `i`; returns the relative parameter change.
    fn update(&mut self, i: usize) -> f64 {
        let path = self.paths[i];
        add_pulse(&mut self.residual, path.t, path.amp, 1.0);
        let (_, _, f_cur) = correlate(&self.residual, path.t);
        let lo = (path.t - LOCAL_WINDOW_TAPS).max(0.0);
        let hi = (path.t + LOCAL_WINDOW_TAPS).min(self.t_max);
        let (t_new, f_new) = search(&self.residual, lo, hi, self.step);
        let t = if f_new > f_cur { t_new } else { path.t };
        let (c, e, _) = correlate(&self.residual, t);
        let amp = if e > 0.0 { c / e } else { Complex64::new(0.0, 0.0) };
        add_pulse(&mut self.residual, t, amp, -1.0);
        self.paths[i] = Path { t, amp };
        let dt = (t - path.t).abs() / path.t.abs().max(1.0);
        let da = (amp - path.amp).norm() / path.amp.norm().max(f64::MIN_POSITIVE);
        dt.max(da)
    }

    /// Drops paths weaker than `floor_db` below the strongest, returning
    /// their contribution to the residual.
    fn prune(&mut self, floor_db: f64) {
        let peak = self.paths.iter().map(|p| p.amp.norm_sqr()).fold(0.0, f64::max);
        let keep = peak * db_to_linear(floor_db);
        let (kept, dropped): (Vec<Path>, Vec<Path>) = self
            .paths
            .iter()
            .partition(|p| p.amp.norm_sqr() > 0.0 && p.amp.norm_sqr() >= keep);
        for p in dropped {
            add_pulse(&mut self.residual, p.t, p.amp, 1.0);
        }
        self.paths = kept;
    }

    fn residual_energy(&self) -> f64 {
        energy(&self.residual)
    }
}

/// Estimates up to `cfg.max_paths` components from one complex CIR snapshot.
pub fn estimate_mpcs(cir: &[Complex64], cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    if cir.len() < 2 {
        return Err(Error::invalid("CIR needs at least two taps"));
    }
    if cir.iter().any(|h| !h.re.is_finite() || !h.im.is_finite()) {
        return Err(Error::invalid("CIR contains non-finite samples"));
    }
    let total = energy(cir);
    if total <= 0.0 {
        return Err(Error::DegenerateProfile("CIR has zero energy".into()));
    }

    let mut sage = Sage {
        residual: cir.to_vec(),
        paths: Vec::new(),
        step: 1.0 / cfg.delay_grid_oversampling as f64,
        t_max: (cir.len() - 1) as f64,
    };
    let detect_ratio = db_to_linear(cfg.prune_floor_db - DETECTION_MARGIN_DB);

    // Successive cancellation; all paths are swept a few times after each
    // detection.
    let mut strongest = 0.0f64;
    while sage.paths.len() < cfg.max_paths {
        let (t, _) = search(&sage.residual, 0.0, sage.t_max, sage.step);
        let (c, e, _) = correlate(&sage.residual, t);
        if e <= 0.0 {
            break;
        }
        let amp = c / e;
        let p = amp.norm_sqr();
        if p <= 0.0 || (strongest > 0.0 && p < strongest * detect_ratio) {
            break;
        }
        strongest = strongest.max(p);
        add_pulse(&mut sage.residual, t, amp, -1.0);
        sage.paths.push(Path { t, amp });
        for _ in 0..INIT_SWEEPS {
            let mut change = 0.0f64;
            for i in 0..sage.paths.len() {
                change = change.max(sage.update(i));
            }
            if change < cfg.convergence_tol {
                break;
            }
        }
        if sage.residual_energy() <= total * 1e-24 {
            break;
        }
    }

    sage.prune(cfg.prune_floor_db);
    let mut history = vec![sage.residual_energy()];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_iterations && !sage.paths.is_empty() {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for i in 0..sage.paths.len() {
            max_change = max_change.max(sage.update(i));
        }
        let r = sage.residual_energy();
        debug_assert!(
            r <= history.last().unwrap() * (1.0 + 1e-9) + total * 1e-15,
            "residual energy increased"
        );
        history.push(r);
        if max_change < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    sage.prune(cfg.prune_floor_db);
    let mut mpcs: Vec<MultipathComponent> = sage
        .paths
        .iter()
        .map(|p| MultipathComponent::from_amplitude(p.t * cfg.tap_spacing_ns, p.amp))
        .collect();
    mpcs.sort_by(|a, b| a.delay_ns.total_cmp(&b.delay_ns));
    for (i, m) in mpcs.iter_mut().enumerate() {
        m.path_id = i;
    }

    Ok(Estimate {
        mpcs,
        residual_energy: *history.last().unwrap(),
        residual_history: history,
        sweeps,
        converged,
    })
}
