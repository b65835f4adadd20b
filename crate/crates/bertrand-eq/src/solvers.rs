//! Top-level solution methods, shared termination, truncation, initial
//! conditions, and post-solve verification.
//!
//! Five methods are provided, all driving the same residual machinery:
//!
//! * `ζ-FPI` — iterate `p ← c + ζ(p)`;
//! * `η-FPI` — iterate `p ← c + η(p)` (demonstrably non-convergent on
//!   markets where the η map's Jacobian has spectral radius above one at
//!   the solution; shipped for exactly that demonstration);
//! * `CG-NM` — Newton on the combined gradient `∇̃π̂ = 0`, automatically
//!   left-preconditioned by `Λ⁻¹`;
//! * `η-NM` — Newton on `p − c − η(p) = 0`;
//! * `ζ-NM` — Newton on `p − c − ζ(p) = 0`.
//!
//! Every method terminates on `‖∇̃π̂‖_∞ ≤ ε_T`, never on its own raw
//! residual: fixed-point residuals of the markup maps can be small far
//! from stationarity and vice versa, so the economic optimality measure
//! is the only trustworthy stop rule.
//!
//! Products whose simulated probability falls to `P_j ≤ ε_P` are frozen
//! at their current price and re-enter the live set automatically if a
//! later iterate revives their demand.

use std::cell::OnceCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::demand_calculus::{
    firm_hessians, hessian_parts, second_order_check, DemandEval, SecondOrder,
};
use crate::markup_maps::{
    eta as eta_map, zeta as zeta_map, zeta_extended, EvalBundle, ResidualKind, ResidualSystem,
};
use crate::mixed_logit::logit_eval;
use crate::newton_krylov::{
    directional_derivative, tolerance_transfer, trust_region_solve, EngineStatus, PointEval,
    TraceRecord, TrustRegionConfig, TrustRegionProblem,
};
use crate::{Error, Market, Matrix, Result, UtilityModel, Vector};

/// The five solution methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Fixed-point iteration `p ← c + ζ(p)`.
    ZetaFpi,
    /// Fixed-point iteration `p ← c + η(p)`.
    EtaFpi,
    /// Newton on the combined gradient (preconditioned).
    CgNewton,
    /// Newton on `p − c − η(p)`.
    EtaNewton,
    /// Newton on `p − c − ζ(p)`.
    ZetaNewton,
}

impl Method {
    /// The residual kind this method solves.
    pub fn kind(self) -> ResidualKind {
        match self {
            Method::ZetaFpi | Method::ZetaNewton => ResidualKind::ZetaMarkup,
            Method::EtaFpi | Method::EtaNewton => ResidualKind::EtaMarkup,
            Method::CgNewton => ResidualKind::CombinedGradient,
        }
    }

    /// Stable identifier used in CSV output.
    pub fn label(self) -> &'static str {
        match self {
            Method::ZetaFpi => "zeta-fpi",
            Method::EtaFpi => "eta-fpi",
            Method::CgNewton => "cg-nm",
            Method::EtaNewton => "eta-nm",
            Method::ZetaNewton => "zeta-nm",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Terminal status of a solve.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// `‖∇̃π̂‖_∞ ≤ ε_T`.
    Converged,
    /// Iteration budget exhausted.
    MaxIterations,
    /// Step or trust radius shrank below resolution.
    StepTooSmall,
    /// Numerical failure (dead market, divergence, non-finite iterates).
    NumericalFailure,
}

/// Outcome of one solver run.
#[derive(Debug, Clone)]
pub struct SolverRun {
    /// Which method produced this run.
    pub method: Method,
    /// Final price vector.
    pub p_final: Vector,
    /// Accepted iterations.
    pub iterations: usize,
    /// Per-iteration records (the initial point plus one row per trial;
    /// accepted rows number exactly `iterations`).
    pub trace: Vec<TraceRecord>,
    /// Terminal status.
    pub status: Status,
    /// First-order flag: `‖∇̃π̂‖_∞ ≤ ε_T` at the final point.
    pub fo_pass: bool,
    /// Second-order flag: every firm's live profit Hessian block is
    /// negative definite at the final point.
    pub so_pass: bool,
    /// `‖∇̃π̂‖_∞` at the final point.
    pub grad_inf: f64,
    /// Products with `P_j > ε_P` at the final point.
    pub live_set: Vec<usize>,
    /// Failure detail, when any.
    pub message: Option<String>,
}

/// How to pick a starting price vector.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum InitStrategy {
    /// Start at marginal costs.
    AtCosts,
    /// Each price uniform on `[min_j c_j, max_j c_j]`.
    UniformCostBox {
        /// RNG seed.
        seed: u64,
    },
    /// Each price uniform on `[lo, hi]`.
    UniformBox {
        /// Lower bound.
        lo: f64,
        /// Upper bound.
        hi: f64,
        /// RNG seed.
        seed: u64,
    },
}

impl InitStrategy {
    /// Generates the starting prices for a market.
    pub fn prices(&self, market: &Market) -> Result<Vector> {
        let j = market.product_count();
        match *self {
            InitStrategy::AtCosts => Ok(market.costs()),
            InitStrategy::UniformCostBox { seed } => {
                let c = market.costs();
                let lo = c.min();
                let hi = c.max();
                Ok(uniform_box(j, lo, hi, seed))
            }
            InitStrategy::UniformBox { lo, hi, seed } => {
                if !(lo.is_finite() && hi >= lo && lo >= 0.0) {
                    return Err(Error::Config(format!(
                        "invalid initial price box [{lo}, {hi}]"
                    )));
                }
                Ok(uniform_box(j, lo, hi, seed))
            }
        }
    }
}

fn uniform_box(j: usize, lo: f64, hi: f64, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Vector::from_fn(j, |_, _| {
        if hi > lo {
            rng.gen_range(lo..hi)
        } else {
            lo
        }
    })
}

/// Live index set `{j : P_j > ε_P}`; an empty set is a dead market.
pub fn truncate_live_set(eval: &DemandEval, eps_p: f64) -> Result<Vec<usize>> {
    let live: Vec<usize> = (0..eval.p.len()).filter(|&j| eval.p[j] > eps_p).collect();
    if live.is_empty() {
        Err(Error::Numerical("market dead: every product has vanishing demand".into()))
    } else {
        Ok(live)
    }
}

/// Second-order assessment at a price vector: per-firm flags and the
/// aggregate pass.
fn second_order_at(bundle: &EvalBundle, market: &Market, p: &Vector) -> (Vec<SecondOrder>, bool) {
    let parts = hessian_parts(&bundle.lm, &bundle.eval, market, p);
    let hess = firm_hessians(&parts, market);
    let flags = second_order_check(&hess, market, &bundle.eval.dead);
    let pass = flags.iter().all(|f| *f != SecondOrder::Fail);
    (flags, pass)
}

fn finish(
    method: Method,
    system: &ResidualSystem<'_>,
    p: Vector,
    iterations: usize,
    trace: Vec<TraceRecord>,
    status: Status,
    eps_t: f64,
    message: Option<String>,
) -> Result<SolverRun> {
    let bundle = system.eval(&p)?;
    let grad_inf = bundle.grad_inf();
    let fo_pass = grad_inf <= eps_t;
    let (_, so_pass) = second_order_at(&bundle, system.market, &p);
    let live_set: Vec<usize> = (0..p.len()).filter(|&j| bundle.interior[j]).collect();
    let status = if status == Status::Converged && !fo_pass {
        Status::NumericalFailure
    } else {
        status
    };
    Ok(SolverRun {
        method,
        p_final: p,
        iterations,
        trace,
        status,
        fo_pass,
        so_pass,
        grad_inf,
        live_set,
        message,
    })
}

fn fpi_trace_row(
    iteration: usize,
    bundle: &EvalBundle,
    grad_inf: f64,
    step_norm: f64,
    p: &Vector,
) -> TraceRecord {
    TraceRecord {
        iteration,
        f_norm: bundle.residual.norm(),
        grad_inf,
        delta: 0.0,
        krylov_dim: 0,
        step_norm,
        accepted: true,
        x_norm: p.norm(),
    }
}

/// Fixed-point iteration `p ← c + ζ(p)` with the shared termination and
/// truncation contracts.
pub fn zeta_fpi(
    system: &ResidualSystem<'_>,
    p0: &Vector,
    eps_t: f64,
    max_iter: usize,
) -> Result<SolverRun> {
    if system.kind != ResidualKind::ZetaMarkup {
        return Err(Error::Config("zeta-fpi requires the zeta residual system".into()));
    }
    fpi_loop(Method::ZetaFpi, system, p0, eps_t, max_iter, None)
}

/// Fixed-point iteration `p ← c + η(p)`; provided chiefly to demonstrate
/// its non-convergence where `ρ((Dη)(p*)) > 1`. A blow-up guard converts
/// runaway iterates into a numerical failure.
pub fn eta_fpi(
    system: &ResidualSystem<'_>,
    p0: &Vector,
    eps_t: f64,
    max_iter: usize,
) -> Result<SolverRun> {
    if system.kind != ResidualKind::EtaMarkup {
        return Err(Error::Config("eta-fpi requires the eta residual system".into()));
    }
    let guard = 1e3 * (system.market.costs().amax() + p0.amax());
    fpi_loop(Method::EtaFpi, system, p0, eps_t, max_iter, Some(guard))
}

fn fpi_loop(
    method: Method,
    system: &ResidualSystem<'_>,
    p0: &Vector,
    eps_t: f64,
    max_iter: usize,
    blowup_guard: Option<f64>,
) -> Result<SolverRun> {
    let c = system.market.costs();
    let mut p = p0.clone();
    let mut trace = Vec::new();
    let mut iterations = 0usize;
    loop {
        let bundle = match system.eval(&p) {
            Ok(b) => b,
            Err(Error::Numerical(msg)) => {
                return finish_unevaluable(method, p, iterations, trace, msg)
            }
            Err(e) => return Err(e),
        };
        let grad_inf = bundle.grad_inf();
        if grad_inf <= eps_t {
            trace.push(fpi_trace_row(iterations, &bundle, grad_inf, 0.0, &p));
            return finish(method, system, p, iterations, trace, Status::Converged, eps_t, None);
        }
        if iterations >= max_iter {
            trace.push(fpi_trace_row(iterations, &bundle, grad_inf, 0.0, &p));
            return finish(
                method,
                system,
                p,
                iterations,
                trace,
                Status::MaxIterations,
                eps_t,
                None,
            );
        }
        let active = bundle.active();
        if active.is_empty() {
            return finish_unevaluable(
                method,
                p,
                iterations,
                trace,
                "market dead: every product has vanishing demand".into(),
            );
        }
        let markup = bundle.markup.as_ref().expect("markup map kinds carry the map value");
        let mut p_new = p.clone();
        for &k in &active {
            p_new[k] = c[k] + markup[k];
        }
        if !p_new.iter().all(|v| v.is_finite()) {
            return finish_unevaluable(
                method,
                p,
                iterations,
                trace,
                "iterate became non-finite".into(),
            );
        }
        let step_norm = (&p_new - &p).norm();
        trace.push(fpi_trace_row(iterations, &bundle, grad_inf, step_norm, &p_new));
        if step_norm <= 1e-12 * p.amax().max(1.0) {
            return finish(
                method,
                system,
                p_new,
                iterations + 1,
                trace,
                Status::StepTooSmall,
                eps_t,
                None,
            );
        }
        if let Some(guard) = blowup_guard {
            if p_new.amax() > guard {
                return finish_unevaluable(
                    method,
                    p_new,
                    iterations + 1,
                    trace,
                    "iteration diverged past the blow-up guard".into(),
                );
            }
        }
        p = p_new;
        iterations += 1;
    }
}

/// Builds a failure run when the final point cannot even be evaluated.
fn finish_unevaluable(
    method: Method,
    p: Vector,
    iterations: usize,
    trace: Vec<TraceRecord>,
    message: String,
) -> Result<SolverRun> {
    Ok(SolverRun {
        method,
        p_final: p,
        iterations,
        trace,
        status: Status::NumericalFailure,
        fo_pass: false,
        so_pass: false,
        grad_inf: f64::INFINITY,
        live_set: Vec::new(),
        message: Some(message),
    })
}

/// How the Newton methods obtain Jacobian actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Assemble the analytic Jacobian once per outer iteration.
    Analytic,
    /// Directional forward differences (one residual evaluation per
    /// action).
    Fd1,
    /// Central differences, second order.
    Fd2,
    /// Central differences, fourth order.
    Fd4,
}

impl JacobianMode {
    fn fd_order(self) -> Option<usize> {
        match self {
            JacobianMode::Analytic => None,
            JacobianMode::Fd1 => Some(1),
            JacobianMode::Fd2 => Some(2),
            JacobianMode::Fd4 => Some(4),
        }
    }
}

/// Newton-method configuration.
#[derive(Debug, Clone)]
pub struct NewtonConfig {
    /// Trust-region and GMRES parameters (`opt_tol` is `ε_T`).
    pub trust: TrustRegionConfig,
    /// Jacobian mode.
    pub jacobian: JacobianMode,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { trust: TrustRegionConfig::default(), jacobian: JacobianMode::Analytic }
    }
}

struct NewtonPayload {
    bundle: EvalBundle,
    active: Vec<usize>,
    jac: OnceCell<Matrix>,
}

struct SystemProblem<'s, 'a> {
    system: &'s ResidualSystem<'a>,
    jacobian: JacobianMode,
    preconditioned: bool,
}

impl SystemProblem<'_, '_> {
    fn analytic(
        &self,
        eval: &PointEval<NewtonPayload>,
        p: &Vector,
    ) -> Result<()> {
        if eval.payload.jac.get().is_none() {
            let m = self.system.jacobian(&eval.payload.bundle, p)?;
            let _ = eval.payload.jac.set(m);
        }
        Ok(())
    }
}

impl TrustRegionProblem for SystemProblem<'_, '_> {
    type Payload = NewtonPayload;

    fn evaluate(&mut self, p: &Vector) -> Result<PointEval<NewtonPayload>> {
        let bundle = self.system.eval(p)?;
        let active = bundle.active();
        let dim = p.len();
        let mut mask = vec![false; dim];
        for &j in &active {
            mask[j] = true;
        }
        let opt_inf = bundle.grad_inf();
        let plain = bundle.residual.clone();
        let f_full = if self.preconditioned {
            let mut f = plain.clone();
            for &j in &active {
                f[j] /= bundle.eval.lambda[j];
            }
            f
        } else {
            plain.clone()
        };
        Ok(PointEval {
            f_full,
            mask,
            opt_inf,
            plain_f_full: if self.preconditioned { Some(plain) } else { None },
            payload: NewtonPayload { bundle, active, jac: OnceCell::new() },
        })
    }

    fn action(
        &mut self,
        x: &Vector,
        eval: &PointEval<NewtonPayload>,
        s_full: &Vector,
    ) -> Result<Vector> {
        let mut out = self.plain_action(x, eval, s_full)?;
        if self.preconditioned {
            for &j in &eval.payload.active {
                out[j] /= eval.payload.bundle.eval.lambda[j];
            }
        }
        Ok(out)
    }

    fn plain_action(
        &mut self,
        x: &Vector,
        eval: &PointEval<NewtonPayload>,
        s_full: &Vector,
    ) -> Result<Vector> {
        match self.jacobian.fd_order() {
            None => {
                self.analytic(eval, x)?;
                let jac = eval.payload.jac.get().expect("just initialized");
                let active = &eval.payload.active;
                let s_red =
                    Vector::from_iterator(active.len(), active.iter().map(|&j| s_full[j]));
                let a_red = jac * s_red;
                let mut out = Vector::zeros(s_full.len());
                for (r, &j) in active.iter().enumerate() {
                    out[j] = a_red[r];
                }
                Ok(out)
            }
            Some(order) => {
                let system = self.system;
                let mut f = |q: &Vector| system.eval(q).map(|b| b.residual);
                let fx = eval.plain_f_full.as_ref().unwrap_or(&eval.f_full);
                directional_derivative(&mut f, x, Some(fx), s_full, order)
            }
        }
    }

    fn gmres_tol(&self, eval: &PointEval<NewtonPayload>, base: f64) -> f64 {
        if self.preconditioned {
            tolerance_transfer(
                &eval.payload.bundle.grad,
                &eval.payload.bundle.eval.lambda,
                &eval.payload.active,
                base,
            )
        } else {
            base
        }
    }
}

/// Newton-GMRES-hookstep solve of the system's residual. The combined
/// gradient kind is automatically left-preconditioned by `Λ⁻¹` with the
/// matching GMRES tolerance transfer; the ratio test always compares
/// unpreconditioned norms. Termination is on `‖∇̃π̂‖_∞ ≤ ε_T` for every
/// kind.
pub fn newton_solve(
    system: &ResidualSystem<'_>,
    p0: &Vector,
    config: &NewtonConfig,
) -> Result<SolverRun> {
    let method = match system.kind {
        ResidualKind::CombinedGradient => Method::CgNewton,
        ResidualKind::EtaMarkup => Method::EtaNewton,
        ResidualKind::ZetaMarkup => Method::ZetaNewton,
    };
    let mut problem = SystemProblem {
        system,
        jacobian: config.jacobian,
        preconditioned: system.kind == ResidualKind::CombinedGradient,
    };
    let eps_t = config.trust.opt_tol;
    // A trust-region method can stall at a local minimum of ‖F‖ that is
    // not a root (radius collapse away from stationarity). The markup
    // kinds have a principled escape: one fixed-point step p ← c + m(p),
    // which moves along a profit-ascent direction and leaves the merit
    // basin; the trust region is then restarted with the remaining
    // iteration budget. The combined-gradient kind has no such map and
    // keeps the stall as its failure.
    const MAX_FPI_RESTARTS: usize = 3;
    let mut start = p0.clone();
    let mut iterations_used = 0usize;
    let mut trace_all = Vec::new();
    let mut restarts = 0usize;
    let outcome = loop {
        let mut trust = config.trust.clone();
        trust.max_iter = config.trust.max_iter.saturating_sub(iterations_used);
        let mut out = match trust_region_solve(&mut problem, &start, &trust) {
            Ok(out) => out,
            Err(Error::Numerical(msg)) => {
                return finish_unevaluable(method, start, iterations_used, trace_all, msg)
            }
            Err(e) => return Err(e),
        };
        for rec in &mut out.trace {
            rec.iteration += iterations_used;
        }
        iterations_used += out.iterations;
        trace_all.extend(out.trace.drain(..));
        let stalled_off_root = matches!(
            out.status,
            EngineStatus::StepTooSmall | EngineStatus::Stalled
        ) && out.final_opt > eps_t
            && system.kind != ResidualKind::CombinedGradient;
        if !stalled_off_root
            || restarts >= MAX_FPI_RESTARTS
            || iterations_used >= config.trust.max_iter
        {
            out.iterations = iterations_used;
            out.trace = trace_all;
            break out;
        }
        restarts += 1;
        let c = system.market.costs();
        let mut p_cur = out.x.clone();
        let mut moved = false;
        // A fixed-point burst, run until the residual norm falls well
        // below the stall level so the Newton restart begins outside the
        // basin of the merit minimum instead of re-entering it.
        let escape_norm = 0.1 * out.final_f_norm;
        loop {
            let bundle = match system.eval(&p_cur) {
                Ok(b) => b,
                Err(Error::Numerical(msg)) => {
                    return finish_unevaluable(method, p_cur, iterations_used, trace_all, msg)
                }
                Err(e) => return Err(e),
            };
            if bundle.grad_inf() <= eps_t || bundle.residual.norm() <= escape_norm {
                break;
            }
            let markup = bundle.markup.as_ref().expect("markup kinds carry the map value");
            let mut p_new = p_cur.clone();
            for k in bundle.active() {
                p_new[k] = c[k] + markup[k];
            }
            if !p_new.iter().all(|v| v.is_finite()) || p_new == p_cur {
                break;
            }
            p_cur = p_new;
            moved = true;
            iterations_used += 1;
            if iterations_used >= config.trust.max_iter {
                break;
            }
        }
        if !moved || iterations_used >= config.trust.max_iter {
            out.iterations = iterations_used;
            out.trace = trace_all;
            break out;
        }
        start = p_cur;
    };
    let (status, message) = match outcome.status {
        EngineStatus::Converged => (Status::Converged, None),
        EngineStatus::MaxIterations => (Status::MaxIterations, None),
        EngineStatus::StepTooSmall => (Status::StepTooSmall, None),
        EngineStatus::Stalled => (
            Status::NumericalFailure,
            Some("stalled at a residual-norm minimum away from a stationary point".into()),
        ),
        EngineStatus::Failed(msg) => (Status::NumericalFailure, Some(msg)),
    };
    match finish(
        method,
        system,
        outcome.x.clone(),
        outcome.iterations,
        outcome.trace,
        status,
        eps_t,
        message,
    ) {
        Ok(run) => Ok(run),
        Err(Error::Numerical(msg)) => {
            finish_unevaluable(method, outcome.x, outcome.iterations, Vec::new(), msg)
        }
        Err(e) => Err(e),
    }
}

/// Full post-solve verification at a price vector.
#[derive(Debug, Clone, serde::Serialize)]
pub struct VerificationReport {
    /// `‖∇̃π̂‖_∞` over live products.
    pub grad_inf: f64,
    /// `‖∇̃π̂‖₂`.
    pub pi_residual: f64,
    /// `‖p − c − η(p)‖₂` on the live set (absent when the markup solve is
    /// singular).
    pub eta_residual: Option<f64>,
    /// `‖p − c − ζ(p)‖₂` (extended map when configured).
    pub zeta_residual: f64,
    /// Per-firm second-order flags.
    pub so_flags: Vec<SecondOrder>,
    /// No firm's live Hessian block fails negative definiteness.
    pub so_pass: bool,
    /// Products priced at or above the largest reservation price.
    pub excluded: Vec<usize>,
    /// Every excluded product's extended fixed-point value keeps it
    /// excluded (`c_k + ζ_k ≥ ς*`); vacuously true with no exclusions.
    pub exclusion_optimal: bool,
}

/// Recomputes optimality, all three residual norms, per-firm Hessian
/// definiteness, and the exclusion condition at `p`.
pub fn verify(
    market: &Market,
    model: &dyn UtilityModel,
    p: &Vector,
    eps_p: f64,
    extended_zeta: bool,
) -> Result<VerificationReport> {
    let lm = logit_eval(model, market, p);
    let eval = crate::demand_calculus::demand_eval(&lm, market, p, true)?;
    let grad = crate::demand_calculus::combined_gradient(&eval, market, p);
    let c = market.costs();
    let live: Vec<bool> = (0..p.len()).map(|j| eval.p[j] > eps_p).collect();
    let grad_inf = (0..p.len())
        .filter(|&j| live[j])
        .map(|j| grad[j].abs())
        .fold(0.0, f64::max);
    let pi_residual = Vector::from_iterator(
        p.len(),
        (0..p.len()).map(|j| if live[j] { grad[j] } else { 0.0 }),
    )
    .norm();
    let eta_residual = eta_map(&eval, market, &live).ok().map(|e| {
        Vector::from_iterator(
            p.len(),
            (0..p.len()).map(|j| if live[j] { p[j] - c[j] - e[j] } else { 0.0 }),
        )
        .norm()
    });
    let sigma_star = model.max_reservation_price();
    let z = if extended_zeta {
        zeta_extended(&lm, &eval, model, market, p)?
    } else {
        zeta_map(&eval, market)
    };
    let zeta_residual = Vector::from_iterator(
        p.len(),
        (0..p.len()).map(|j| {
            let ext = extended_zeta && (p[j] >= sigma_star || eval.lambda[j] == 0.0);
            if live[j] || ext {
                p[j] - c[j] - z[j]
            } else {
                0.0
            }
        }),
    )
    .norm();
    let parts = hessian_parts(&lm, &eval, market, p);
    let hess = firm_hessians(&parts, market);
    let so_flags = second_order_check(&hess, market, &eval.dead);
    let so_pass = so_flags.iter().all(|f| *f != SecondOrder::Fail);
    let excluded: Vec<usize> = if sigma_star.is_finite() {
        (0..p.len()).filter(|&j| p[j] >= sigma_star).collect()
    } else {
        Vec::new()
    };
    let exclusion_optimal = if excluded.is_empty() {
        true
    } else if extended_zeta {
        excluded.iter().all(|&k| c[k] + z[k] >= sigma_star - 1e-9 * sigma_star.abs().max(1.0))
    } else {
        false
    };
    Ok(VerificationReport {
        grad_inf,
        pi_residual,
        eta_residual,
        zeta_residual,
        so_flags,
        so_pass,
        excluded,
        exclusion_optimal,
    })
}

/// Spectral radius of the η iteration map's Jacobian `Dη` at `p` —
/// above one, the η fixed-point iteration is locally repelled from the
/// solution.
pub fn eta_iteration_spectral_radius(
    market: &Market,
    model: &dyn UtilityModel,
    p: &Vector,
    eps_p: f64,
) -> Result<f64> {
    let system = ResidualSystem::new(
        ResidualKind::EtaMarkup,
        market,
        model,
        crate::markup_maps::ResidualOptions { eps_p, extended_zeta: false },
    )?;
    let bundle = system.eval(p)?;
    let jac = system.jacobian(&bundle, p)?; // I − Dη on the active set
    let n = jac.nrows();
    let deta = Matrix::identity(n, n) - jac;
    Ok(deta
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}
