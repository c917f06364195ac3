//! Constant fitting: Nelder-Mead inside a basin-hopping loop.
//!
//! The objective is the mean squared error over every dataset row. A single
//! undefined row (see [`Expression::evaluate`]) makes the whole objective
//! `+inf`, so degenerate parameter regions never look attractive.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::expr::{Compiled, ExprError, Expression};

/// Expressions with more constants than this are rejected before fitting.
pub const MAX_CONSTANTS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("no parameter vector produced a finite loss")]
    NoFiniteObjective,
    #[error("{got} constants exceeds the limit of {MAX_CONSTANTS}")]
    TooManyConstants { got: usize },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("invalid fit config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Nelder-Mead coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Simplex {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for Simplex {
    fn default() -> Self {
        Simplex {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

/// Optimizer settings. Every field has a default, so a config file only
/// needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Basin-hopping cycles after the first local solve.
    pub hops: usize,
    /// Standard deviation of the Gaussian perturbation per constant.
    pub step_scale: f64,
    pub simplex: Simplex,
    /// Objective evaluations allowed per local solve.
    pub max_evals: usize,
    /// Simplex convergence tolerance, on both spread of points and of values.
    pub tol: f64,
    pub seed: u64,
    /// Independent repeats in [`repeat_fit`].
    pub refits: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            hops: 25,
            step_scale: 1.0,
            simplex: Simplex::default(),
            max_evals: 10_000,
            tol: 1e-8,
            seed: 0,
            refits: 1,
        }
    }
}

impl FitConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), FitError> {
        let s = &self.simplex;
        let bad = |msg: &str| Err(FitError::InvalidConfig(msg.to_string()));
        if !(s.reflection > 0.0) {
            return bad("reflection must be > 0");
        }
        if !(s.expansion > 1.0) {
            return bad("expansion must be > 1");
        }
        if !(s.contraction > 0.0 && s.contraction < 1.0) {
            return bad("contraction must lie in (0, 1)");
        }
        if !(s.shrink > 0.0 && s.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return bad("step_scale must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_evals == 0 {
            return bad("max_evals must be positive");
        }
        if self.refits == 0 {
            return bad("refits must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub mse: f64,
    pub mae: f64,
    /// Objective evaluations spent.
    pub evals: usize,
    /// Whether the final local solve met the tolerance.
    pub converged: bool,
}

/// Result of a local minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Nelder-Mead on an arbitrary objective, starting from `x0`.
///
/// The initial simplex perturbs each coordinate by 5% (0.00025 for zero
/// coordinates). Stops when both the point spread and the value spread fall
/// below `tol`, or after `max_evals` evaluations.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    coeffs: &Simplex,
    tol: f64,
    max_evals: usize,
) -> Minimum {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let value = eval(x0, &mut evals);
        return Minimum {
            x: Vec::new(),
            value,
            evals,
            converged: true,
        };
    }

    let mut sim: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    sim.push(x0.to_vec());
    for k in 0..n {
        let mut y = x0.to_vec();
        y[k] = if y[k] != 0.0 { 1.05 * y[k] } else { 0.00025 };
        sim.push(y);
    }
    let mut fsim: Vec<f64> = sim.iter().map(|x| eval(x, &mut evals)).collect();
    if fsim.iter().all(|v| v.is_infinite()) {
        return Minimum {
            x: x0.to_vec(),
            value: fsim[0],
            evals,
            converged: false,
        };
    }

    let Simplex {
        reflection: rho,
        expansion: chi,
        contraction: psi,
        shrink: sigma,
    } = *coeffs;
    let mut order: Vec<usize> = (0..=n).collect();
    let mut converged = false;
    let mut xbar = vec![0.0; n];
    let combine = |a: f64, p: &[f64], b: f64, q: &[f64]| -> Vec<f64> {
        p.iter().zip(q).map(|(u, v)| a * u + b * v).collect()
    };

    loop {
        // stable sort keeps the older point first on ties
        order.sort_by(|&i, &j| fsim[i].total_cmp(&fsim[j]));
        sim = order.iter().map(|&i| std::mem::take(&mut sim[i])).collect();
        fsim = order.iter().map(|&i| fsim[i]).collect();
        order.iter_mut().enumerate().for_each(|(k, o)| *o = k);

        let spread_x = sim[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&sim[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let spread_f = fsim[1..]
            .iter()
            .map(|v| (v - fsim[0]).abs())
            .fold(0.0, |m: f64, v| if v.is_nan() { f64::INFINITY } else { m.max(v) });
        if spread_x <= tol && spread_f <= tol {
            converged = true;
            break;
        }
        if evals >= max_evals {
            break;
        }

        xbar.iter_mut().for_each(|v| *v = 0.0);
        for p in &sim[..n] {
            for (b, v) in xbar.iter_mut().zip(p) {
                *b += v / n as f64;
            }
        }
        let worst = sim[n].clone();

        let xr = combine(1.0 + rho, &xbar, -rho, &worst);
        let fxr = eval(&xr, &mut evals);
        let mut do_shrink = false;
        if fxr < fsim[0] {
            let xe = combine(1.0 + rho * chi, &xbar, -rho * chi, &worst);
            let fxe = eval(&xe, &mut evals);
            if fxe < fxr {
                sim[n] = xe;
                fsim[n] = fxe;
            } else {
                sim[n] = xr;
                fsim[n] = fxr;
            }
        } else if fxr < fsim[n - 1] {
            sim[n] = xr;
            fsim[n] = fxr;
        } else if fxr < fsim[n] {
            let xc = combine(1.0 + psi * rho, &xbar, -psi * rho, &worst);
            let fxc = eval(&xc, &mut evals);
            if fxc <= fxr {
                sim[n] = xc;
                fsim[n] = fxc;
            } else {
                do_shrink = true;
            }
        } else {
            let xcc = combine(1.0 - psi, &xbar, psi, &worst);
            let fxcc = eval(&xcc, &mut evals);
            if fxcc < fsim[n] {
                sim[n] = xcc;
                fsim[n] = fxcc;
            } else {
                do_shrink = true;
            }
        }
        if do_shrink {
            let best = sim[0].clone();
            for j in 1..=n {
                sim[j] = combine(1.0 - sigma, &best, sigma, &sim[j]);
                fsim[j] = eval(&sim[j], &mut evals);
            }
        }
    }

    Minimum {
        x: sim.swap_remove(0),
        value: fsim[0],
        evals,
        converged,
    }
}

/// MSE objective over a dataset, evaluated with a compiled program.
struct Objective<'a> {
    program: Compiled,
    data: &'a Dataset,
    stack: Vec<f64>,
}

impl Objective<'_> {
    fn residuals(&mut self, params: &[f64], mut each: impl FnMut(f64)) -> bool {
        let nv = self.data.n_vars();
        for row in self.data.rows() {
            match self.program.eval(params, &row[..nv], &mut self.stack) {
                Some(v) => each(v - row[nv]),
                None => return false,
            }
        }
        true
    }

    fn mse(&mut self, params: &[f64]) -> f64 {
        let mut sum = 0.0;
        if !self.residuals(params, |r| sum += r * r) {
            return f64::INFINITY;
        }
        let m = sum / self.data.len() as f64;
        if m.is_finite() {
            m
        } else {
            f64::INFINITY
        }
    }

    fn mae(&mut self, params: &[f64]) -> f64 {
        let mut sum = 0.0;
        if !self.residuals(params, |r| sum += r.abs()) {
            return f64::INFINITY;
        }
        sum / self.data.len() as f64
    }
}

fn prepare<'a>(e: &Expression, d: &'a Dataset, cfg: &FitConfig) -> Result<Objective<'a>, FitError> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(FitError::EmptyDataset);
    }
    e.check_bound(d.n_vars())?;
    if e.n_constants() > MAX_CONSTANTS {
        return Err(FitError::TooManyConstants {
            got: e.n_constants(),
        });
    }
    Ok(Objective {
        program: e.compile(),
        data: d,
        stack: Vec::new(),
    })
}

/// Fits the constants of `e` starting from its initial guess.
pub fn fit(e: &Expression, d: &Dataset, cfg: &FitConfig) -> Result<FitResult, FitError> {
    fit_from(e, d, cfg, e.initial_guess())
}

/// Fits the constants of `e` starting from `x0`.
pub fn fit_from(
    e: &Expression,
    d: &Dataset,
    cfg: &FitConfig,
    x0: &[f64],
) -> Result<FitResult, FitError> {
    let mut obj = prepare(e, d, cfg)?;
    if x0.len() != e.n_constants() {
        return Err(ExprError::ArityMismatch {
            expected: e.n_constants(),
            got: x0.len(),
        }
        .into());
    }
    let local = |obj: &mut Objective, start: &[f64]| {
        nelder_mead(|p| obj.mse(p), start, &cfg.simplex, cfg.tol, cfg.max_evals)
    };

    let mut best = local(&mut obj, x0);
    let mut evals = best.evals;
    if e.n_constants() > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.hops {
            if best.value == 0.0 {
                break;
            }
            let trial: Vec<f64> = best
                .x
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + cfg.step_scale * z
                })
                .collect();
            let m = local(&mut obj, &trial);
            evals += m.evals;
            if m.value < best.value {
                best = m;
            }
        }
    }
    if !best.value.is_finite() {
        return Err(FitError::NoFiniteObjective);
    }
    let mae = obj.mae(&best.x);
    Ok(FitResult {
        mse: best.value,
        mae,
        params: best.x,
        evals,
        converged: best.converged,
    })
}

/// Seed of the `i`-th repeat; repeat 0 uses the configured seed itself.
pub fn derived_seed(seed: u64, i: usize) -> u64 {
    if i == 0 {
        return seed;
    }
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// All repeats of a [`repeat_fit`] and the index of the selected one.
#[derive(Debug, Clone)]
pub struct Refits {
    pub results: Vec<Result<FitResult, FitError>>,
    pub best: Option<usize>,
}

/// Runs `cfg.refits` independent fits (concurrently) with derived seeds.
pub fn refits(e: &Expression, d: &Dataset, cfg: &FitConfig) -> Result<Refits, FitError> {
    cfg.validate()?;
    let results: Vec<Result<FitResult, FitError>> = (0..cfg.refits)
        .into_par_iter()
        .map(|i| {
            let c = FitConfig {
                seed: derived_seed(cfg.seed, i),
                ..cfg.clone()
            };
            fit(e, d, &c)
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        let Ok(r) = r else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let cur = results[b].as_ref().unwrap();
                r.mae < cur.mae || (r.mae == cur.mae && r.mse < cur.mse)
            }
        };
        if better {
            best = Some(i);
        }
    }
    Ok(Refits { results, best })
}

/// Best of `cfg.refits` fits: lowest MAE, then lowest MSE, then lowest
/// repeat index.
pub fn repeat_fit(e: &Expression, d: &Dataset, cfg: &FitConfig) -> Result<FitResult, FitError> {
    let mut all = refits(e, d, cfg)?;
    match all.best {
        Some(i) => all.results.swap_remove(i),
        // every repeat failed; surface the first error
        None => all.results.swap_remove(0),
    }
}
