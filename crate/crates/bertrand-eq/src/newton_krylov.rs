//! Matrix-free inexact Newton engine: Householder GMRES, an SVD-based
//! hookstep on the Krylov subspace, a trust-region driver, diagonal
//! left-preconditioning support, and directional finite differences.
//!
//! GMRES builds an orthonormal Krylov basis with Householder reflectors
//! `Q^(n) = P₁⋯Pₙ[e₁…eₙ]` satisfying `A Q^(n) = Q^(n+1) H̃^(n)` with
//! `H̃^(n)` an `(n+1)×n` upper-Hessenberg matrix, and tracks the
//! least-squares residual of `min_y ‖H̃ y − βe₁‖₂` incrementally with
//! Givens rotations (`β = sign(F₁)‖F‖₂` when solving `A s = −F`).
//!
//! Because the right-hand side lies in the range of `Q^(n+1)`, the exact
//! linear-model residual of any subspace step is available as
//! `‖βe₁ − H̃ q‖₂` without touching the operator again. The hookstep
//! exploits the same structure: with the thin SVD `H̃ = Ũ Σ Vᵀ` (computed
//! once per outer iteration and reused across radius shrinks), the
//! length-constrained Levenberg-Marquardt step is
//! `q(μ) = V (Σ² + μI)⁻¹ Σ Ũᵀ(βe₁)`, whose norm decreases strictly in μ,
//! so the radius equation is a safeguarded scalar root find on
//! `φ(μ) = 1/‖q(μ)‖₂ − 1/δ`.
//!
//! The trust-region driver accepts a step when
//! `‖F(x)‖₂² − ‖F(x+s)‖₂² ≥ ρ(‖F(x)‖₂² − ‖F(x)+(DF)(x)s‖₂²)`,
//! expanding the radius on success and shrinking it (hookstep recomputed
//! from the cached SVD) on failure. A pure-Newton mode with no
//! globalization is available for studying documented failure modes.

use crate::{Error, Matrix, Result, Vector};

/// Householder-GMRES factorization state: the reflectors defining the
/// orthonormal basis, the upper-Hessenberg matrix, and the signed initial
/// residual norm.
pub struct KrylovState {
    /// Subspace dimension reached.
    pub n: usize,
    /// Normalized Householder vectors; `reflectors[j]` zeros components
    /// below index `j` of the vector it was built from. `None` marks an
    /// identity reflector.
    reflectors: Vec<Option<Vector>>,
    /// The `(n+1)×n` upper-Hessenberg matrix `H̃^(n)`.
    pub hbar: Matrix,
    /// Signed initial residual norm: `P₁b = βe₁`.
    pub beta: f64,
    /// Set when the subspace contained the exact solution (lucky
    /// breakdown).
    pub exact: bool,
}

fn apply_reflector(u: &Option<Vector>, z: &mut Vector) {
    if let Some(u) = u {
        let coeff = 2.0 * u.dot(z);
        z.axpy(-coeff, u, 1.0);
    }
}

/// Builds the normalized Householder vector zeroing components of `v`
/// strictly below index `k` (pivot at `k`); returns `None` when they are
/// already zero. After application the pivot entry equals the returned
/// signed value.
fn make_reflector(v: &Vector, k: usize) -> (Option<Vector>, f64) {
    let tail_norm: f64 = v.rows(k, v.len() - k).norm();
    if tail_norm == 0.0 {
        return (None, 0.0);
    }
    let sigma = if v[k] >= 0.0 { tail_norm } else { -tail_norm };
    let mut u = Vector::zeros(v.len());
    for i in k..v.len() {
        u[i] = v[i];
    }
    u[k] += sigma;
    let un = u.norm();
    if un == 0.0 {
        return (None, -sigma);
    }
    u /= un;
    (Some(u), -sigma)
}

impl KrylovState {
    /// The `j`-th basis vector `q_{j+1} = P₁⋯P_{j+1} e_{j+1}` (0-indexed).
    pub fn basis_vector(&self, j: usize, dim: usize) -> Vector {
        let mut z = Vector::zeros(dim);
        z[j] = 1.0;
        for r in (0..=j).rev() {
            apply_reflector(&self.reflectors[r], &mut z);
        }
        z
    }

    /// Forms the full-space vector `x = Q^(n) y` from subspace
    /// coefficients, using the telescoped product
    /// `x = P₁(y₁e₁ + P₂(y₂e₂ + ⋯))`.
    pub fn assemble(&self, y: &Vector, dim: usize) -> Vector {
        let mut z = Vector::zeros(dim);
        for j in (0..self.n).rev() {
            z[j] += y[j];
            apply_reflector(&self.reflectors[j], &mut z);
        }
        z
    }

    /// Reconstructs `Q^(n)` densely (test support).
    pub fn basis_matrix(&self, dim: usize) -> Matrix {
        let mut q = Matrix::zeros(dim, self.n);
        for j in 0..self.n {
            q.set_column(j, &self.basis_vector(j, dim));
        }
        q
    }
}

/// Householder GMRES on `A x = b`.
///
/// Runs until the relative least-squares residual drops to `tol` or the
/// subspace reaches `max_dim`, returning the factorization, the
/// least-squares coefficients `y` (so `x = state.assemble(&y, dim)`), and
/// the achieved relative residual. A new Krylov vector with norm below
/// `10⁻¹⁴·‖b‖` signals that the current subspace already contains the
/// exact solution.
pub fn gmres<Op>(
    mut apply_a: Op,
    b: &Vector,
    tol: f64,
    max_dim: usize,
) -> Result<(KrylovState, Vector, f64)>
where
    Op: FnMut(&Vector) -> Result<Vector>,
{
    let dim = b.len();
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Err(Error::Numerical("gmres called with a zero right-hand side".into()));
    }
    let max_dim = max_dim.min(dim).max(1);
    let (p1, beta) = make_reflector(b, 0);
    let mut state = KrylovState {
        n: 0,
        reflectors: vec![p1],
        hbar: Matrix::zeros(max_dim + 1, max_dim),
        beta,
        exact: false,
    };
    // Incremental Givens QR of H̃ against the rotated right-hand side.
    let mut r = Matrix::zeros(max_dim, max_dim);
    let mut g = Vector::zeros(max_dim + 1);
    g[0] = beta;
    let mut rotations: Vec<(f64, f64)> = Vec::new();
    let mut achieved = 1.0;
    while state.n < max_dim {
        let j = state.n;
        let q = state.basis_vector(j, dim);
        let mut w = apply_a(&q)?;
        if w.len() != dim {
            return Err(Error::Numerical("linear operator changed dimension".into()));
        }
        for rj in 0..=j {
            apply_reflector(&state.reflectors[rj], &mut w);
        }
        // Breakdown: nothing left below the diagonal of this column.
        let tail = if j + 1 < dim { w.rows(j + 1, dim - j - 1).norm() } else { 0.0 };
        if tail < 1e-14 * b_norm {
            state.reflectors.push(None);
            for i in 0..=(j + 1).min(dim - 1) {
                state.hbar[(i, j)] = w[i];
            }
            if j + 1 < dim {
                state.hbar[(j + 1, j)] = 0.0;
            }
            state.exact = true;
        } else {
            let (p, pivot) = make_reflector(&w, j + 1);
            for i in 0..=j {
                state.hbar[(i, j)] = w[i];
            }
            state.hbar[(j + 1, j)] = pivot;
            state.reflectors.push(p);
        }
        state.n += 1;
        // Rotate the new column into the triangular factor.
        let mut col = Vector::zeros(j + 2);
        for i in 0..=j + 1 {
            col[i] = if i < max_dim + 1 { state.hbar[(i, j)] } else { 0.0 };
        }
        for (i, &(c, s)) in rotations.iter().enumerate() {
            let a0 = col[i];
            let a1 = col[i + 1];
            col[i] = c * a0 + s * a1;
            col[i + 1] = -s * a0 + c * a1;
        }
        let (c, s) = {
            let a0 = col[j];
            let a1 = col[j + 1];
            let h = a0.hypot(a1);
            if h == 0.0 {
                (1.0, 0.0)
            } else {
                (a0 / h, a1 / h)
            }
        };
        let rotated = c * col[j] + s * col[j + 1];
        col[j] = rotated;
        col[j + 1] = 0.0;
        rotations.push((c, s));
        for i in 0..=j {
            r[(i, j)] = col[i];
        }
        let g0 = g[j];
        g[j] = c * g0;
        g[j + 1] = -s * g0;
        achieved = g[j + 1].abs() / b_norm;
        if state.exact || achieved <= tol {
            break;
        }
    }
    let n = state.n;
    // Back-substitute for the least-squares coefficients.
    let mut y = Vector::zeros(n);
    for i in (0..n).rev() {
        let mut acc = g[i];
        for k in i + 1..n {
            acc -= r[(i, k)] * y[k];
        }
        if r[(i, i)] == 0.0 {
            return Err(Error::Numerical("singular GMRES least-squares system".into()));
        }
        y[i] = acc / r[(i, i)];
    }
    state.hbar = state.hbar.view((0, 0), (n + 1, n)).into_owned();
    Ok((state, y, achieved))
}

/// Cached thin SVD of `H̃` supporting length-constrained subspace steps.
///
/// `q(μ) = V (Σ² + μI)⁻¹ Σ Ũᵀ(βe₁)` interpolates from the GMRES
/// least-squares step at `μ = 0` down to zero length as `μ → ∞`.
pub struct Hookstep {
    /// Left singular vectors, `(n+1)×n`.
    pub u: Matrix,
    /// Right singular vectors transposed, `n×n`.
    pub vt: Matrix,
    /// Singular values, descending.
    pub sv: Vector,
    /// `Ũᵀ(βe₁)`.
    pub a: Vector,
}

impl Hookstep {
    /// Computes and caches the SVD of the factorization's Hessenberg
    /// matrix.
    pub fn new(state: &KrylovState) -> Result<Self> {
        let svd = state
            .hbar
            .clone()
            .try_svd(true, true, 1e-14, 1000)
            .ok_or_else(|| Error::Numerical("SVD of the Hessenberg matrix failed".into()))?;
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let sv = svd.singular_values;
        let a = u.row(0).transpose() * state.beta;
        Ok(Hookstep { u, vt, sv, a })
    }

    fn q_of_mu(&self, mu: f64) -> Vector {
        let n = self.sv.len();
        let smax = self.sv.max();
        let mut coeff = Vector::zeros(n);
        for i in 0..n {
            let s = self.sv[i];
            if mu == 0.0 && s <= 1e-14 * smax.max(1.0) {
                continue; // minimum-norm least squares in the singular case
            }
            coeff[i] = s * self.a[i] / (s * s + mu);
        }
        self.vt.transpose() * coeff
    }

    fn norm2_and_slope(&self, mu: f64) -> (f64, f64) {
        let mut g = 0.0;
        let mut gp = 0.0;
        for i in 0..self.sv.len() {
            let s = self.sv[i];
            let d = s * s + mu;
            let t = s * self.a[i];
            g += (t / d).powi(2);
            gp += -2.0 * t * t / d.powi(3);
        }
        (g, gp)
    }

    /// The hookstep coefficients for radius `delta`: the least-squares
    /// step when it fits, otherwise the boundary step with
    /// `|‖q(μ*)‖ − δ| ≤ 10⁻⁸ δ`, found by bisection-safeguarded Newton on
    /// `φ(μ) = 1/‖q(μ)‖ − 1/δ`.
    pub fn step(&self, delta: f64) -> (Vector, f64) {
        let q0 = self.q_of_mu(0.0);
        if q0.norm() <= delta {
            return (q0, 0.0);
        }
        let mut lo = 0.0;
        let mut hi = self.sv.max() * self.a.norm() / delta;
        while self.q_of_mu(hi).norm() > delta {
            hi *= 2.0;
        }
        let mut mu = 0.5 * hi;
        for _ in 0..200 {
            let (g, gp) = self.norm2_and_slope(mu);
            let nq = g.sqrt();
            if (nq - delta).abs() <= 1e-8 * delta {
                break;
            }
            if nq > delta {
                lo = mu;
            } else {
                hi = mu;
            }
            // Newton on φ(μ) = g^{-1/2} − 1/δ: φ' = −g'/(2 g^{3/2}).
            let phi = 1.0 / nq - 1.0 / delta;
            let dphi = -gp / (2.0 * g * nq);
            let newton = mu - phi / dphi;
            mu = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        (self.q_of_mu(mu), mu)
    }

    /// Exact linear-model residual `‖βe₁ − H̃ q‖₂` of a subspace step.
    pub fn predicted_residual(&self, state: &KrylovState, q: &Vector) -> f64 {
        let mut rhs = Vector::zeros(state.hbar.nrows());
        rhs[0] = state.beta;
        (rhs - &state.hbar * q).norm()
    }
}

/// How the engine globalizes Newton steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Globalization {
    /// Trust region with SVD hookstep (the production strategy).
    Hookstep,
    /// Undamped Newton steps from fully-solved GMRES systems; used to
    /// study documented failure modes.
    PureNewton,
}

/// Trust-region and inexact-Newton parameters.
#[derive(Debug, Clone)]
pub struct TrustRegionConfig {
    /// Sufficient-decrease ratio in (0,1).
    pub rho: f64,
    /// Radius expansion factor after an accepted step (> 1).
    pub alpha: f64,
    /// Upper shrink bound (radius multiplied by at most this on reject).
    pub beta1: f64,
    /// Lower shrink bound, `0 < beta2 ≤ beta1 < 1`.
    pub beta2: f64,
    /// Initial radius; `None` means `max(1, ‖x₀‖_∞)/10`.
    pub delta0: Option<f64>,
    /// Radius floor — collapsing below it fails the solve.
    pub delta_min: f64,
    /// Constant inexact-Newton forcing term for GMRES.
    pub forcing: f64,
    /// Krylov subspace cap; `None` means `min(dimension, 50)`.
    pub max_krylov: Option<usize>,
    /// Outer-iteration cap (accepted steps).
    pub max_iter: usize,
    /// Termination threshold on the problem's optimality measure.
    pub opt_tol: f64,
    /// Globalization strategy.
    pub globalization: Globalization,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        TrustRegionConfig {
            rho: 1e-4,
            alpha: 2.0,
            beta1: 0.5,
            beta2: 0.25,
            delta0: None,
            delta_min: 1e-12,
            forcing: 1e-4,
            max_krylov: None,
            max_iter: 75,
            opt_tol: 1e-6,
            globalization: Globalization::Hookstep,
        }
    }
}

impl TrustRegionConfig {
    /// Checks `0 < rho < 1`, `0 < beta2 ≤ beta1 < 1 < alpha`.
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config("sufficient-decrease ratio must lie in (0,1)".into()));
        }
        if !(0.0 < self.beta2 && self.beta2 <= self.beta1 && self.beta1 < 1.0 && self.alpha > 1.0)
        {
            return Err(Error::Config(
                "radius factors must satisfy 0 < beta2 <= beta1 < 1 < alpha".into(),
            ));
        }
        Ok(())
    }
}

/// One residual evaluation at a point.
pub struct PointEval<P> {
    /// Residual, full length, zero on inactive components.
    pub f_full: Vector,
    /// Active components (the engine steps only these).
    pub mask: Vec<bool>,
    /// Optimality measure for termination (e.g. `‖∇̃π̂‖_∞`).
    pub opt_inf: f64,
    /// Unpreconditioned residual when `f_full` is preconditioned; the
    /// ratio test then compares these norms instead.
    pub plain_f_full: Option<Vector>,
    /// Problem-specific payload (demand aggregates etc.).
    pub payload: P,
}

/// A root problem the trust-region engine can drive.
pub trait TrustRegionProblem {
    /// Data the problem attaches to each evaluation.
    type Payload;

    /// Evaluates the residual at `x`.
    fn evaluate(&mut self, x: &Vector) -> Result<PointEval<Self::Payload>>;

    /// Jacobian action at the point of `eval` on a full-space direction
    /// (zero on inactive components); returns a full-space vector.
    fn action(
        &mut self,
        x: &Vector,
        eval: &PointEval<Self::Payload>,
        s_full: &Vector,
    ) -> Result<Vector>;

    /// Unpreconditioned Jacobian action (ratio test under
    /// preconditioning); defaults to [`TrustRegionProblem::action`].
    fn plain_action(
        &mut self,
        x: &Vector,
        eval: &PointEval<Self::Payload>,
        s_full: &Vector,
    ) -> Result<Vector> {
        self.action(x, eval, s_full)
    }

    /// Per-point GMRES tolerance (tolerance transfer under
    /// preconditioning); defaults to the configured forcing term.
    fn gmres_tol(&self, _eval: &PointEval<Self::Payload>, base: f64) -> f64 {
        base
    }
}

/// Terminal state of an engine run.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineStatus {
    /// Optimality measure reached the tolerance.
    Converged,
    /// Outer-iteration budget exhausted.
    MaxIterations,
    /// Trust radius collapsed or the step shrank below resolution.
    StepTooSmall,
    /// The merit `‖F‖` stopped decreasing (or is exactly zero) while the
    /// optimality measure is still above tolerance: a local minimum of
    /// the residual norm that is not a root. The caller decides how to
    /// recover.
    Stalled,
    /// Numerical failure (non-finite iterates, dead problem, ...).
    Failed(String),
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TraceRecord {
    /// Outer iteration index (0-based; rejected trials repeat it).
    pub iteration: usize,
    /// `‖F‖₂` at the current point.
    pub f_norm: f64,
    /// Optimality measure at the current point.
    pub grad_inf: f64,
    /// Trust radius used for this trial.
    pub delta: f64,
    /// Krylov dimension of the inner solve.
    pub krylov_dim: usize,
    /// Norm of the trial step.
    pub step_norm: f64,
    /// Whether the trial was accepted.
    pub accepted: bool,
    /// `‖x‖₂` after this row (unchanged if rejected).
    pub x_norm: f64,
}

/// Result of a trust-region (or pure-Newton) run.
pub struct EngineResult {
    /// Final iterate.
    pub x: Vector,
    /// Terminal status.
    pub status: EngineStatus,
    /// Accepted outer iterations.
    pub iterations: usize,
    /// Per-trial trace.
    pub trace: Vec<TraceRecord>,
    /// Optimality measure at the final iterate.
    pub final_opt: f64,
    /// `‖F‖₂` at the final iterate.
    pub final_f_norm: f64,
}

fn gather(v: &Vector, active: &[usize]) -> Vector {
    Vector::from_iterator(active.len(), active.iter().map(|&j| v[j]))
}

fn scatter(v: &Vector, active: &[usize], dim: usize) -> Vector {
    let mut out = Vector::zeros(dim);
    for (r, &j) in active.iter().enumerate() {
        out[j] = v[r];
    }
    out
}

/// Drives a root problem to `‖optimality‖ ≤ opt_tol` by inexact Newton
/// steps globalized with the hookstep trust region (or undamped, in
/// pure-Newton mode).
pub fn trust_region_solve<P: TrustRegionProblem>(
    problem: &mut P,
    x0: &Vector,
    config: &TrustRegionConfig,
) -> Result<EngineResult> {
    config.validate()?;
    let dim = x0.len();
    let mut x = x0.clone();
    let mut eval = problem.evaluate(&x)?;
    let mut delta = config.delta0.unwrap_or_else(|| x.amax().max(1.0) / 10.0);
    let mut trace: Vec<TraceRecord> = Vec::new();
    let mut iterations = 0usize;
    // Merit-stagnation detector: near a local minimum of ‖F‖ that is not
    // a root, the ratio test keeps accepting vanishing steps without the
    // radius ever collapsing, so progress (not radius) must be watched.
    let mut f_best = eval.f_full.norm();
    let mut flat_iters = 0usize;
    let status = 'outer: loop {
        if eval.opt_inf <= config.opt_tol {
            break EngineStatus::Converged;
        }
        if iterations >= config.max_iter {
            break EngineStatus::MaxIterations;
        }
        let f_now = eval.f_full.norm();
        if f_now < f_best * (1.0 - 1e-6) {
            f_best = f_now;
            flat_iters = 0;
        } else {
            flat_iters += 1;
            if flat_iters >= 10 {
                break EngineStatus::Stalled;
            }
        }
        let active: Vec<usize> = (0..dim).filter(|&j| eval.mask[j]).collect();
        if active.is_empty() {
            break EngineStatus::Failed("no active components remain".into());
        }
        let b = -gather(&eval.f_full, &active);
        if b.norm() == 0.0 {
            break EngineStatus::Stalled;
        }
        let pure = config.globalization == Globalization::PureNewton;
        let tol = if pure { 1e-12 } else { problem.gmres_tol(&eval, config.forcing) };
        let max_k = if pure {
            active.len()
        } else {
            config.max_krylov.unwrap_or_else(|| active.len().min(50)).min(active.len())
        };
        let (state, y, _achieved) = {
            let x_ref = &x;
            let eval_ref = &eval;
            let prob = &mut *problem;
            gmres(
                move |s_red: &Vector| {
                    let s_full = scatter(s_red, &active, dim);
                    let a_full = prob.action(x_ref, eval_ref, &s_full)?;
                    Ok(gather(&a_full, &active))
                },
                &b,
                tol,
                max_k,
            )?
        };
        let active: Vec<usize> = (0..dim).filter(|&j| eval.mask[j]).collect();
        if pure {
            let s_red = state.assemble(&y, active.len());
            let step_norm = s_red.norm();
            let x_new = &x + scatter(&s_red, &active, dim);
            if !x_new.iter().all(|v| v.is_finite()) {
                break EngineStatus::Failed("iterate became non-finite".into());
            }
            let trial = problem.evaluate(&x_new)?;
            trace.push(TraceRecord {
                iteration: iterations,
                f_norm: eval.f_full.norm(),
                grad_inf: eval.opt_inf,
                delta: f64::INFINITY,
                krylov_dim: state.n,
                step_norm,
                accepted: true,
                x_norm: x_new.norm(),
            });
            x = x_new;
            eval = trial;
            iterations += 1;
            continue 'outer;
        }
        let hook = Hookstep::new(&state)?;
        loop {
            let (q, _mu) = hook.step(delta);
            let s_red = state.assemble(&q, active.len());
            let step_norm = s_red.norm();
            if step_norm <= 1e-12 * x.amax().max(1.0) {
                break 'outer EngineStatus::StepTooSmall;
            }
            let s_full = scatter(&s_red, &active, dim);
            // Compare in the unpreconditioned norm when one is supplied.
            let (now2, pred2) = if let Some(plain) = eval.plain_f_full.as_ref() {
                let a_s = problem.plain_action(&x, &eval, &s_full)?;
                (plain.norm_squared(), (plain + a_s).norm_squared())
            } else {
                (
                    eval.f_full.norm_squared(),
                    hook.predicted_residual(&state, &q).powi(2),
                )
            };
            let x_trial = &x + &s_full;
            let trial = problem.evaluate(&x_trial)?;
            let trial2 = trial
                .plain_f_full
                .as_ref()
                .map(|p| p.norm_squared())
                .unwrap_or_else(|| trial.f_full.norm_squared());
            let pred_dec = now2 - pred2;
            let accepted = trial2.is_finite()
                && pred_dec > 0.0
                && (now2 - trial2) >= config.rho * pred_dec;
            trace.push(TraceRecord {
                iteration: iterations,
                f_norm: eval.f_full.norm(),
                grad_inf: eval.opt_inf,
                delta,
                krylov_dim: state.n,
                step_norm,
                accepted,
                x_norm: if accepted { x_trial.norm() } else { x.norm() },
            });
            if accepted {
                x = x_trial;
                eval = trial;
                delta *= config.alpha;
                iterations += 1;
                continue 'outer;
            }
            // Shrink into [β₂δ, β₁δ], biased toward the rejected step
            // length, and retry from the cached factorization.
            delta = (config.beta1 * step_norm)
                .min(config.beta1 * delta)
                .max(config.beta2 * delta);
            if delta < config.delta_min {
                break 'outer EngineStatus::StepTooSmall;
            }
        }
    };
    Ok(EngineResult {
        final_opt: eval.opt_inf,
        final_f_norm: eval.f_full.norm(),
        x,
        status,
        iterations,
        trace,
    })
}

/// Directional finite-difference approximation of `(DF)(x)·s`.
///
/// `order` 1 is the forward formula `h⁻¹(F(x+hs) − F(x))` (pass the
/// already-known `F(x)` through `fx` to avoid re-evaluation); orders 2
/// and 4 are central stencils. The increment follows the practical rule
/// `h = √ε · max(1, ‖x‖₂)/‖s‖₂`.
pub fn directional_derivative<F>(
    f: &mut F,
    x: &Vector,
    fx: Option<&Vector>,
    s: &Vector,
    order: usize,
) -> Result<Vector>
where
    F: FnMut(&Vector) -> Result<Vector>,
{
    let s_norm = s.norm();
    if s_norm == 0.0 {
        return Ok(Vector::zeros(fx.map(|v| v.len()).unwrap_or(x.len())));
    }
    // Truncation/roundoff balance: ε^{1/(order+1)} scaling of the
    // practical square-root rule used for the forward formula.
    let eps_pow = match order {
        1 => f64::EPSILON.sqrt(),
        2 => f64::EPSILON.cbrt(),
        _ => f64::EPSILON.powf(0.2),
    };
    let h = eps_pow * x.norm().max(1.0) / s_norm;
    match order {
        1 => {
            let fp = f(&(x + s * h))?;
            let f0 = match fx {
                Some(v) => v.clone(),
                None => f(x)?,
            };
            Ok((fp - f0) / h)
        }
        2 => {
            let fp = f(&(x + s * h))?;
            let fm = f(&(x - s * h))?;
            Ok((fp - fm) / (2.0 * h))
        }
        4 => {
            let fp2 = f(&(x + s * (2.0 * h)))?;
            let fp1 = f(&(x + s * h))?;
            let fm1 = f(&(x - s * h))?;
            let fm2 = f(&(x - s * (2.0 * h)))?;
            Ok((-fp2 + fp1 * 8.0 - fm1 * 8.0 + fm2) / (12.0 * h))
        }
        _ => Err(Error::Config(format!(
            "finite-difference order must be 1, 2, or 4 (got {order})"
        ))),
    }
}

/// Tolerance transfer for diagonal left preconditioning: running GMRES on
/// the scaled system to `δ′ = (‖g‖₂ / (max_j|λ_j| · ‖Λ⁻¹g‖₂)) · δ`
/// guarantees the unpreconditioned inexact-Newton condition at forcing
/// term `δ`. Always `δ′ ≤ δ`.
pub fn tolerance_transfer(grad: &Vector, lambda: &Vector, active: &[usize], delta: f64) -> f64 {
    let mut max_lam = 0.0f64;
    let mut g2 = 0.0;
    let mut pg2 = 0.0;
    for &j in active {
        max_lam = max_lam.max(lambda[j].abs());
        g2 += grad[j] * grad[j];
        pg2 += (grad[j] / lambda[j]).powi(2);
    }
    if max_lam == 0.0 || pg2 == 0.0 {
        return delta;
    }
    (g2.sqrt() / (max_lam * pg2.sqrt())) * delta
}
