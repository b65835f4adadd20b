//! Closed-form oracle field `F(x) = x / (1 + ‖x‖₂²)` used to validate the
//! Newton engine's documented failure modes.
//!
//! The field has a unique finite zero at the origin, yet `‖F(x)‖₂ → 0` as
//! `‖x‖₂ → ∞`, so every residual-norm-based globalization can be lured
//! outward. Everything about it is available in closed form:
//!
//! * `(DF)(x) = (1/(1+r²))[I − (2/(1+r²))xxᵀ]` with `r = ‖x‖₂`, singular
//!   exactly on the unit sphere;
//! * the Newton point is `x + s^N = −(2r²/(1−r²))x`, so undamped Newton
//!   converges to 0 only from `r < 1/√3`, flips sign forever at
//!   `r = 1/√3`, and grows without bound from larger `r`;
//! * the Cauchy step equals the Newton step everywhere it is defined, so
//!   dogleg strategies inherit the same behavior;
//! * from `r > 1` every positive step along the Newton direction — and
//!   every hookstep, for every damping value — moves *away* from the
//!   root.
//!
//! These are precisely the failure modes that motivate solving the
//! markup reformulations rather than the raw gradient system.

use crate::newton_krylov::{EngineResult, PointEval, TrustRegionProblem};
use crate::{Error, Matrix, Result, Vector};

/// The oracle field in a given dimension.
#[derive(Debug, Clone, Copy)]
pub struct SimpleField {
    /// Ambient dimension.
    pub dim: usize,
}

/// `F(x) = x/(1+‖x‖₂²)`.
pub fn field_eval(x: &Vector) -> Vector {
    x / (1.0 + x.norm_squared())
}

/// `(DF)(x) = (1/(1+r²))[I − (2/(1+r²)) x xᵀ]`, singular iff `‖x‖₂ = 1`.
pub fn jac_eval(x: &Vector) -> Matrix {
    let n = x.len();
    let d = 1.0 + x.norm_squared();
    let mut j = Matrix::identity(n, n);
    j -= (x * x.transpose()) * (2.0 / d);
    j / d
}

/// The Newton step `s^N = −((1+r²)/(1−r²)) x` (closed form).
pub fn newton_step(x: &Vector) -> Result<Vector> {
    let r2 = x.norm_squared();
    if (r2 - 1.0).abs() < 1e-14 {
        return Err(Error::Numerical("Jacobian singular on the unit sphere".into()));
    }
    Ok(x * (-(1.0 + r2) / (1.0 - r2)))
}

/// The Newton point `x + s^N = −(2r²/(1−r²)) x`.
pub fn exact_newton_point(x: &Vector) -> Result<Vector> {
    let r2 = x.norm_squared();
    if (r2 - 1.0).abs() < 1e-14 {
        return Err(Error::Numerical("Jacobian singular on the unit sphere".into()));
    }
    Ok(x * (-2.0 * r2 / (1.0 - r2)))
}

/// The Cauchy step of the least-squares model
/// `s^C = −(‖g‖₂²/‖(DF)g‖₂²) g` with `g = (DF)ᵀF`; on this field it
/// coincides with the Newton step.
pub fn cauchy_step(x: &Vector) -> Result<Vector> {
    let j = jac_eval(x);
    let f = field_eval(x);
    let g = j.transpose() * f;
    let jg = &j * &g;
    let denom = jg.norm_squared();
    if denom == 0.0 {
        return Err(Error::Numerical("zero curvature along the gradient".into()));
    }
    Ok(-&g * (g.norm_squared() / denom))
}

/// The dogleg step at radius `delta`; because the Cauchy and Newton steps
/// coincide here, it is just the Newton step truncated to the radius.
pub fn dogleg_step(x: &Vector, delta: f64) -> Result<Vector> {
    let s = newton_step(x)?;
    let n = s.norm();
    if n <= delta {
        Ok(s)
    } else {
        Ok(s * (delta / n))
    }
}

/// Sign of the exact line-search length landing on the root:
/// `sign((1+r²)/(1−r²))` — negative outside the unit sphere, where a
/// positive-length search can only move away.
pub fn exact_line_search_sign(x: &Vector) -> f64 {
    let r2 = x.norm_squared();
    ((1.0 + r2) / (1.0 - r2)).signum()
}

/// The three documented behaviors of undamped Newton on this field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// `‖x₀‖₂ < 1/√3`: iterates contract to the origin.
    ConvergesToZero,
    /// `‖x₀‖₂ = 1/√3`: the Newton point is `−x`, permanent oscillation.
    SignAlternates,
    /// Otherwise the error norm grows (without bound for `‖x₀‖₂ > 1`).
    Diverges,
}

/// The closed-form prediction for a starting radius.
pub fn predicted_classification(r0: f64) -> Classification {
    let threshold = 1.0 / 3f64.sqrt();
    if (r0 - threshold).abs() <= 1e-12 {
        Classification::SignAlternates
    } else if r0 < threshold {
        Classification::ConvergesToZero
    } else {
        Classification::Diverges
    }
}

/// Classifies an engine run (pure-Newton mode) from its iterate norms.
pub fn classify_run(x0: &Vector, run: &EngineResult) -> Classification {
    let r0 = x0.norm();
    let rf = run.x.norm();
    if rf <= 1e-8 {
        return Classification::ConvergesToZero;
    }
    // Near the period-2 cycle at the critical radius, roundoff in the
    // iterate norm is amplified by a factor of 4 per iteration, so the
    // constancy tolerance must be looser than machine precision.
    let constant = run
        .trace
        .iter()
        .all(|rec| (rec.x_norm - r0).abs() <= 1e-6 * r0.max(1.0));
    if constant && (rf - r0).abs() <= 1e-6 * r0.max(1.0) {
        Classification::SignAlternates
    } else {
        Classification::Diverges
    }
}

/// Asserts that an engine run matches the closed-form prediction,
/// returning the agreed classification.
pub fn contraction_threshold_check(x0: &Vector, run: &EngineResult) -> Result<Classification> {
    let predicted = predicted_classification(x0.norm());
    let observed = classify_run(x0, run);
    if predicted == observed {
        Ok(observed)
    } else {
        Err(Error::Numerical(format!(
            "engine behavior {observed:?} contradicts closed-form prediction {predicted:?} \
             from radius {}",
            x0.norm()
        )))
    }
}

impl TrustRegionProblem for SimpleField {
    type Payload = Vector;

    fn evaluate(&mut self, x: &Vector) -> Result<PointEval<Vector>> {
        let f = field_eval(x);
        Ok(PointEval {
            opt_inf: f.amax(),
            mask: vec![true; self.dim],
            plain_f_full: None,
            payload: x.clone(),
            f_full: f,
        })
    }

    fn action(&mut self, _x: &Vector, eval: &PointEval<Vector>, s: &Vector) -> Result<Vector> {
        Ok(jac_eval(&eval.payload) * s)
    }
}
