//! Closed-form running-time bounds for the linear factory and the search for
//! parameters that minimize them.
//!
//! All functions here are deterministic and draw no randomness.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factory::{make_params, ratio_r, FactoryParams, StageState, EPS_CLAMP};

/// Points in the `p` scan used by [`sup_bound`].
pub const SUP_GRID_INTERVALS: usize = 10_000;
const SUP_REL_TOL: f64 = 1e-6;

/// Coarser scan used while sweeping the optimizer grid.
const COARSE_GRID_INTERVALS: usize = 200;

pub const OPT_M_RANGE: (f64, f64) = (0.5, 6.0);
pub const OPT_GAMMA_RANGE: (f64, f64) = (0.05, 0.95);
const OPT_GRID_STEP: f64 = 0.01;
const OPT_MIN_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundInputs {
    pub c: f64,
    pub eps: f64,
    pub gamma: f64,
    pub k: f64,
}

impl BoundInputs {
    pub fn new(c: f64, eps: f64, gamma: f64, k: f64) -> Result<Self> {
        if !(c > 1.0) || !c.is_finite() {
            return Err(Error::domain(format!("C = {c} must be a finite number above 1")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!("eps = {eps} must lie in (0, 1)")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::domain(format!("gamma = {gamma} must lie in (0, 1)")));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::domain(format!("k = {k} must be positive")));
        }
        Ok(BoundInputs { c, eps, gamma, k })
    }

    pub fn r(&self) -> f64 {
        ratio_r(self.eps, self.gamma, self.k)
    }

    pub fn max_p(&self) -> f64 {
        (1.0 - self.eps) / self.c
    }

    fn check_feasible(&self) -> Result<f64> {
        let r = self.r();
        if r < 1.0 {
            Ok(r)
        } else {
            Err(Error::Infeasible { r })
        }
    }

    fn check_p(&self, p: f64) -> Result<()> {
        let max = self.max_p();
        if !(p >= 0.0 && p <= max * (1.0 + 1e-12)) {
            return Err(Error::domain(format!("p = {p} outside [0, (1 - eps)/C] = [0, {max}]")));
        }
        Ok(())
    }

    /// Bound without domain checks; `r < 1` must already hold.
    fn eval(&self, r: f64, p: f64) -> f64 {
        let BoundInputs { c, eps, gamma, k } = *self;
        let cp = c * p;
        // 1 / (1 - (Cp)^k); exactly 1 at p = 0.
        let reach = 1.0 / (1.0 - cp.powf(k));
        let first = (k * (c - 1.0) + c) * reach - (c - 1.0) / (1.0 - cp);
        let c_eps = c / (1.0 - eps);
        let later = gamma * k * (c_eps - 1.0) + (1.0 - gamma) * (1.0 - gamma) * c_eps;
        first + r * later / (1.0 - r) * reach
    }
}

impl From<&FactoryParams> for BoundInputs {
    fn from(p: &FactoryParams) -> Self {
        BoundInputs {
            c: p.c,
            eps: p.eps,
            gamma: p.gamma,
            k: p.k,
        }
    }
}

/// Upper bound on the expected number of flips at a fixed `p`: the
/// first-stage walk cost plus the geometrically weighted cost of all later
/// stages.
pub fn theorem4_bound(inputs: &BoundInputs, p: f64) -> Result<f64> {
    let r = inputs.check_feasible()?;
    inputs.check_p(p)?;
    Ok(inputs.eval(r, p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupBound {
    pub value: f64,
    /// Where the maximum was found.
    pub p: f64,
}

fn scan_sup(inputs: &BoundInputs, r: f64, intervals: usize, rel_tol: f64) -> SupBound {
    let hi = inputs.max_p();
    let at = |i: usize| hi * i as f64 / intervals as f64;
    let mut best = SupBound {
        value: inputs.eval(r, 0.0),
        p: 0.0,
    };
    let mut best_idx = 0;
    for i in 1..=intervals {
        let p = at(i);
        let v = inputs.eval(r, p);
        if v > best.value {
            best = SupBound { value: v, p };
            best_idx = i;
        }
    }

    // Golden-section search on the cells either side of the best grid point.
    let mut a = at(best_idx.saturating_sub(1));
    let mut b = at((best_idx + 1).min(intervals));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = inputs.eval(r, x1);
    let mut f2 = inputs.eval(r, x2);
    while (b - a) > rel_tol * hi.max(f64::MIN_POSITIVE) {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = inputs.eval(r, x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = inputs.eval(r, x1);
        }
    }
    for (p, v) in [(x1, f1), (x2, f2)] {
        if v > best.value {
            best = SupBound { value: v, p };
        }
    }
    best
}

/// Supremum of [`theorem4_bound`] over `p in [0, (1 - eps)/C]`, by a dense
/// scan followed by golden-section refinement around the best grid point.
pub fn sup_bound_for(inputs: &BoundInputs) -> Result<SupBound> {
    let r = inputs.check_feasible()?;
    Ok(scan_sup(inputs, r, SUP_GRID_INTERVALS, SUP_REL_TOL))
}

/// [`sup_bound_for`] at the parameters `make_params(c, eps, gamma, m)` would
/// give the sampler.
pub fn sup_bound(c: f64, eps: f64, gamma: f64, m: f64) -> Result<SupBound> {
    let params = make_params(c, eps, Some(gamma), Some(m))?;
    sup_bound_for(&BoundInputs::from(&params))
}

/// The simple bound `9.5 C / eps`, with `eps` clamped as the sampler does.
pub fn simple_bound(c: f64, eps: f64) -> Result<f64> {
    let params = make_params(c, eps, None, None)?;
    Ok(9.5 * params.c / params.eps)
}

/// Bound on the expected flips spent in stage `j` (if reached):
/// `[gamma k_j (C_j - 1) + C_j] / (1 - C_j p)`.
pub fn stage_bound(j: u64, params: &FactoryParams, p: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::domain("stages are numbered from 1"));
    }
    if !(p >= 0.0) {
        return Err(Error::domain(format!("p = {p} must be non-negative")));
    }
    let mut s = StageState::initial(params);
    for _ in 1..j {
        s.advance(params.gamma);
    }
    if !(s.c * p < 1.0) {
        return Err(Error::domain(format!(
            "C_{j} p = {} is not below 1",
            s.c * p
        )));
    }
    Ok((params.gamma * s.k * (s.c - 1.0) + s.c) / (1.0 - s.c * p))
}

/// Upper bound on the chance that stage `j` is reached, capped at 1.
pub fn stage_reach_probability_bound(j: u64, params: &FactoryParams, p: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::domain("stages are numbered from 1"));
    }
    let cp = params.c * p;
    if !(p >= 0.0 && cp < 1.0) {
        return Err(Error::domain(format!("Cp = {cp} must lie in [0, 1)")));
    }
    let decay = (-((j - 1) as f64) * params.gamma * params.eps * params.k).exp();
    let v = decay * (1.0 - cp) / (1.0 - cp.powf(params.k));
    Ok(v.min(1.0))
}

/// Lower bound on the expected flips of any factory for `Cp` that works for
/// every `p in [0, (1 - eps)/C]`, evaluated at the worst-case `p`.
pub fn lower_bound(c: f64, eps: f64) -> Result<f64> {
    if !(c > 1.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("need C > 1 and eps in (0, 1), got C = {c}, eps = {eps}")));
    }
    let shrink = (1.0 - eps.sqrt()).powi(2);
    let one_minus_p = 1.0 - (1.0 - eps) / c;
    let e2 = std::f64::consts::E * std::f64::consts::E;
    Ok(c / 16.0 * 0.75 * shrink * 7f64.ln() * one_minus_p / (e2 * eps))
}

/// The rounded `0.004 C / eps` constant. Informational only; see
/// [`lower_bound`] for the value the bound actually gives.
pub fn lower_bound_abstract(c: f64, eps: f64) -> Result<f64> {
    if !(c > 1.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("need C > 1 and eps in (0, 1), got C = {c}, eps = {eps}")));
    }
    Ok(0.004 * c / eps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimizedParams {
    pub m_star: f64,
    pub gamma_star: f64,
    pub k_star: f64,
    /// Supremum over `p` of the bound at `(m_star, gamma_star)`.
    pub bound_value: f64,
}

impl OptimizedParams {
    pub fn r(&self, eps: f64) -> f64 {
        ratio_r(eps, self.gamma_star, self.k_star)
    }
}

fn objective(c: f64, eps: f64, m: f64, gamma: f64, intervals: usize) -> f64 {
    let inputs = BoundInputs {
        c,
        eps,
        gamma,
        k: m / (gamma * eps),
    };
    let r = inputs.r();
    if r >= 1.0 {
        return f64::INFINITY;
    }
    let tol = if intervals == SUP_GRID_INTERVALS { SUP_REL_TOL } else { 1e-4 };
    scan_sup(&inputs, r, intervals, tol).value
}

/// Choose `(m, gamma)` minimizing the supremum bound for the given `C` and
/// `eps`: a grid sweep over `m in [0.5, 6]`, `gamma in [0.05, 0.95]` at step
/// 0.01, then coordinate descent with a halving step. Infeasible points are
/// skipped.
pub fn optimize_params(c: f64, eps: f64) -> Result<OptimizedParams> {
    // Validates C and eps and applies the clamp.
    let eps = make_params(c, eps, None, None)?.eps;
    debug_assert!(eps <= EPS_CLAMP);

    let steps = |(lo, hi): (f64, f64)| ((hi - lo) / OPT_GRID_STEP).round() as usize;
    let (nm, ng) = (steps(OPT_M_RANGE), steps(OPT_GAMMA_RANGE));
    let grid_point = |idx: usize| {
        let (im, ig) = (idx / (ng + 1), idx % (ng + 1));
        (
            OPT_M_RANGE.0 + im as f64 * OPT_GRID_STEP,
            OPT_GAMMA_RANGE.0 + ig as f64 * OPT_GRID_STEP,
        )
    };
    let coarse: Vec<f64> = (0..(nm + 1) * (ng + 1))
        .into_par_iter()
        .map(|idx| {
            let (m, g) = grid_point(idx);
            objective(c, eps, m, g, COARSE_GRID_INTERVALS)
        })
        .collect();
    // First minimum in index order keeps the result independent of threading.
    let start = coarse
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, bv)) if bv <= v => best,
            _ if v.is_finite() => Some((i, v)),
            _ => best,
        })
        .ok_or_else(|| Error::domain(format!("no feasible (m, gamma) for C = {c}, eps = {eps}")))?
        .0;

    let (mut m, mut g) = grid_point(start);
    let mut best = objective(c, eps, m, g, SUP_GRID_INTERVALS);
    let mut step = OPT_GRID_STEP;
    while step >= OPT_MIN_STEP {
        let mut moved = false;
        for (dm, dg) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let (cm, cg) = (m + dm, g + dg);
            if !(OPT_M_RANGE.0..=OPT_M_RANGE.1).contains(&cm)
                || !(OPT_GAMMA_RANGE.0..=OPT_GAMMA_RANGE.1).contains(&cg)
            {
                continue;
            }
            let v = objective(c, eps, cm, cg, SUP_GRID_INTERVALS);
            if v < best {
                best = v;
                m = cm;
                g = cg;
                moved = true;
                break;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }

    Ok(OptimizedParams {
        m_star: m,
        gamma_star: g,
        k_star: m / (g * eps),
        bound_value: best,
    })
}
