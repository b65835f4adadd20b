//! The η and ζ markup maps, the three equivalent residual systems, and
//! their Jacobians.
//!
//! Simultaneously stationary prices can be characterized three ways, all
//! with the same zero set where `Λ` and `D̃Pᵀ` are nonsingular:
//!
//! * `F_π(p) = ∇̃π̂(p)` — the combined gradient itself;
//! * `F_η(p) = p − c − η(p)` with `η = −(D̃P)⁻ᵀP` the classic markup,
//!   computed here from the better-conditioned per-firm systems
//!   `(I − Ω_f)η_f = −Λ_f⁻¹P_f` (dense Householder QR);
//! * `F_ζ(p) = p − c − ζ(p)` with `ζ = Ω̃(p−c) − Λ⁻¹P`, which needs no
//!   linear solve per evaluation.
//!
//! The evaluations satisfy `F_π = Λ F_ζ` and `F_π = D̃Pᵀ F_η` exactly in
//! the underlying algebra, and `ζ = Ω̃(p−c) + (I−Ω̃)η`, so the maps
//! coincide only at stationary prices.
//!
//! For models whose reservation prices are finite on every draw, the ζ map
//! extends continuously to prices at or above the largest reservation price
//! `ς*`: the limiting value of `ζ_k` is the owning firm's Logit profit from
//! its *other* products under the largest-`ς` draw. Fixed points of the
//! extended map with `p_k ≥ ς*` certify that excluding product `k` is
//! profit-optimal, which is what lets ζ-based methods escape dead regions
//! that stall gradient-based Newton solvers.

use crate::demand_calculus::{
    combined_gradient, combined_gradient_jacobian, demand_eval, hessian_parts, profits,
    weighted_curvature, DemandEval, HessianParts,
};
use crate::mixed_logit::{logit_eval, reservation_order, LogitMatrix};
use crate::{Error, Market, Matrix, Result, UtilityModel, Vector};

/// Which root problem a [`ResidualSystem`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// `F_π = ∇̃π̂`.
    CombinedGradient,
    /// `F_η = p − c − η(p)`.
    EtaMarkup,
    /// `F_ζ = p − c − ζ(p)` (extended when configured).
    ZetaMarkup,
}

/// Options shared by residual evaluations.
#[derive(Debug, Clone, Copy)]
pub struct ResidualOptions {
    /// Probability floor: products with `P_j ≤ eps_p` are frozen.
    pub eps_p: f64,
    /// Evaluate the ζ map through its continuous extension at and above
    /// `ς*` (only valid when every draw has a finite reservation price).
    pub extended_zeta: bool,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        ResidualOptions { eps_p: 1e-10, extended_zeta: false }
    }
}

/// Solves the per-firm markup systems `(I − Ω_f)η_f = −Λ_f⁻¹P_f` on the
/// live product set by dense QR.
///
/// Entries of dead products (and of firms whose whole block is dead) are
/// zero in the returned vector; `live[j]` distinguishes them.
pub fn eta(eval: &DemandEval, market: &Market, live: &[bool]) -> Result<Vector> {
    let j_count = market.product_count();
    let mut out = Vector::zeros(j_count);
    for (f, block) in market.firm_blocks() {
        let idx: Vec<usize> = block.iter().copied().filter(|&j| live[j]).collect();
        if idx.is_empty() {
            continue;
        }
        let n = idx.len();
        let mut a = Matrix::identity(n, n);
        let mut rhs = Vector::zeros(n);
        for (r, &j) in idx.iter().enumerate() {
            for (c_, &k) in idx.iter().enumerate() {
                a[(r, c_)] -= eval.omega_tilde[(j, k)];
            }
            rhs[r] = -eval.p[j] / eval.lambda[j];
        }
        let qr = a.qr();
        let sol = qr.solve(&rhs).ok_or_else(|| {
            Error::Numerical(format!(
                "singular markup system for firm {} (probability floor too small?)",
                f + 1
            ))
        })?;
        for (r, &j) in idx.iter().enumerate() {
            out[j] = sol[r];
        }
    }
    Ok(out)
}

/// The ζ map `ζ = Ω̃(p−c) − Λ⁻¹P` on the live set (no linear solves).
/// Dead products get zero entries.
pub fn zeta(eval: &DemandEval, market: &Market) -> Vector {
    let c = market.costs();
    let markup = &eval.price - &c;
    let mut z = &eval.omega_tilde * markup;
    for j in 0..z.len() {
        if eval.dead[j] {
            z[j] = 0.0;
        } else {
            z[j] -= eval.p[j] / eval.lambda[j];
        }
    }
    z
}

/// The ζ map extended continuously to prices at or above the largest
/// reservation price `ς*`.
///
/// For components with `p_k ≥ ς*` (or whose demand slope underflowed to
/// zero), `ζ_k` takes its limiting value as `p_k ↑ ς*`: the owning firm's
/// Logit profit from its other products under the largest-`ς` draw.
/// Elsewhere it equals [`zeta`]. Only valid for models with finite
/// reservation prices on every draw.
pub fn zeta_extended(
    lm: &LogitMatrix,
    eval: &DemandEval,
    model: &dyn UtilityModel,
    market: &Market,
    p: &Vector,
) -> Result<Vector> {
    let (order, sigma_star) = reservation_order(model);
    if !sigma_star.is_finite() {
        return Err(Error::Invalid(
            "extended zeta requires finite reservation prices on every draw".into(),
        ));
    }
    let s_max = order.last().unwrap().0;
    let c = market.costs();
    let mut z = zeta(eval, market);
    for k in 0..p.len() {
        if p[k] >= sigma_star || eval.lambda[k] == 0.0 || !z[k].is_finite() {
            let f = market.owner(k);
            z[k] = market
                .firm_products(f)
                .iter()
                .filter(|&&j| j != k)
                .map(|&j| lm.l[(s_max, j)] * (p[j] - c[j]))
                .sum();
        }
    }
    Ok(z)
}

/// One of the three equivalent root problems over a fixed market, model,
/// and option set.
pub struct ResidualSystem<'a> {
    /// Which residual this system evaluates.
    pub kind: ResidualKind,
    /// The market.
    pub market: &'a Market,
    /// The utility model with its consumer draws.
    pub model: &'a dyn UtilityModel,
    /// Evaluation options.
    pub options: ResidualOptions,
}

/// Everything produced by one residual evaluation at a price vector.
pub struct EvalBundle {
    /// Per-sample Logit matrices.
    pub lm: LogitMatrix,
    /// First-order demand aggregates.
    pub eval: DemandEval,
    /// Combined gradient `∇̃π̂` (full length; zero on dead components).
    pub grad: Vector,
    /// Per-firm profits.
    pub profits: Vector,
    /// The residual, full length, zero on frozen components.
    pub residual: Vector,
    /// `interior[j]`: product alive with `P_j > eps_p`.
    pub interior: Vec<bool>,
    /// `extended[j]`: component handled by the extended ζ limit
    /// (`p_j ≥ ς*` under a finite-reservation-price model).
    pub extended: Vec<bool>,
    /// Markup-map value when the kind needs one (η or ζ), full length.
    pub markup: Option<Vector>,
}

impl EvalBundle {
    /// Components the solver updates: interior products plus extended-ζ
    /// components.
    pub fn active(&self) -> Vec<usize> {
        (0..self.residual.len())
            .filter(|&j| self.interior[j] || self.extended[j])
            .collect()
    }

    /// Sup-norm of the combined gradient over interior components — the
    /// universal termination measure. When no component is interior (all
    /// probabilities truncated to zero) the gradient vanishes identically,
    /// which must not be mistaken for stationarity, so this returns
    /// infinity.
    pub fn grad_inf(&self) -> f64 {
        (0..self.grad.len())
            .filter(|&j| self.interior[j])
            .map(|j| self.grad[j].abs())
            .fold(f64::NEG_INFINITY, f64::max)
            .abs()
    }
}

impl<'a> ResidualSystem<'a> {
    /// Creates a system, validating option compatibility (the extended ζ
    /// map requires finite reservation prices on every draw).
    pub fn new(
        kind: ResidualKind,
        market: &'a Market,
        model: &'a dyn UtilityModel,
        options: ResidualOptions,
    ) -> Result<Self> {
        if options.extended_zeta && !model.max_reservation_price().is_finite() {
            return Err(Error::Invalid(
                "extended zeta is only defined for models with finite reservation prices".into(),
            ));
        }
        Ok(ResidualSystem { kind, market, model, options })
    }

    /// Evaluates the residual and every intermediate aggregate at `p`.
    pub fn eval(&self, p: &Vector) -> Result<EvalBundle> {
        let j_count = self.market.product_count();
        let lm = logit_eval(self.model, self.market, p);
        let eval = demand_eval(&lm, self.market, p, true)?;
        let grad = combined_gradient(&eval, self.market, p);
        let prof = profits(&eval, self.market, p);
        let interior: Vec<bool> =
            (0..j_count).map(|j| eval.p[j] > self.options.eps_p).collect();
        let mut extended = vec![false; j_count];
        if self.kind == ResidualKind::ZetaMarkup && self.options.extended_zeta {
            // Every truncated component is handled through the continuous
            // extension, so the solver can move products back through the
            // numerically dead price band instead of freezing them there.
            for j in 0..j_count {
                if !interior[j] {
                    extended[j] = true;
                }
            }
        }
        let c = self.market.costs();
        let (residual, markup) = match self.kind {
            ResidualKind::CombinedGradient => {
                let mut r = grad.clone();
                for j in 0..j_count {
                    if !interior[j] {
                        r[j] = 0.0;
                    }
                }
                (r, None)
            }
            ResidualKind::EtaMarkup => {
                let eta_v = eta(&eval, self.market, &interior)?;
                let mut r = Vector::zeros(j_count);
                for j in 0..j_count {
                    if interior[j] {
                        r[j] = p[j] - c[j] - eta_v[j];
                    }
                }
                (r, Some(eta_v))
            }
            ResidualKind::ZetaMarkup => {
                let z = if self.options.extended_zeta {
                    zeta_extended(&lm, &eval, self.model, self.market, p)?
                } else {
                    zeta(&eval, self.market)
                };
                let mut r = Vector::zeros(j_count);
                for j in 0..j_count {
                    if interior[j] || extended[j] {
                        r[j] = p[j] - c[j] - z[j];
                    }
                }
                (r, Some(z))
            }
        };
        Ok(EvalBundle { lm, eval, grad, profits: prof, residual, interior, extended, markup })
    }

    /// Analytic Jacobian of the residual restricted to the bundle's active
    /// components, in the order returned by [`EvalBundle::active`].
    ///
    /// Extended-ζ components contribute identity rows: their limiting
    /// value does not depend on their own (dead) price, and the weak
    /// dependence on other prices is left to the trust region to absorb.
    pub fn jacobian(&self, bundle: &EvalBundle, p: &Vector) -> Result<Matrix> {
        let active = bundle.active();
        let n = active.len();
        let parts = hessian_parts(&bundle.lm, &bundle.eval, self.market, p);
        let full = match self.kind {
            ResidualKind::CombinedGradient => combined_gradient_jacobian(&parts),
            ResidualKind::ZetaMarkup => self.zeta_jacobian(bundle, &parts, p),
            ResidualKind::EtaMarkup => self.eta_jacobian(bundle, &parts, p)?,
        };
        let mut out = Matrix::zeros(n, n);
        for (r, &k) in active.iter().enumerate() {
            if bundle.extended[k] {
                out[(r, r)] = 1.0;
                continue;
            }
            for (c_, &l) in active.iter().enumerate() {
                if bundle.extended[l] && self.kind == ResidualKind::ZetaMarkup {
                    // Dead product: its price moves nothing that is alive.
                    out[(r, c_)] = if r == c_ { 1.0 } else { 0.0 };
                } else {
                    out[(r, c_)] = full[(k, l)];
                }
            }
        }
        Ok(out)
    }

    /// `I − Dζ` on the full index set (rows of non-interior components are
    /// garbage and are overwritten by the caller).
    fn zeta_jacobian(&self, bundle: &EvalBundle, parts: &HessianParts, p: &Vector) -> Matrix {
        let j_count = self.market.product_count();
        let c = self.market.costs();
        let markup = p - &c;
        let zeta_v = bundle.markup.as_ref().expect("zeta bundle carries the map value");
        let eval = &bundle.eval;
        let gamma = eval.gamma_full.as_ref().expect("bundle evaluated with full gamma");
        // t_k = m1_k − ζ_k m0_k (the own-price curvature integral).
        let t = &parts.m1 - &zeta_v.component_mul(&parts.m0);
        let mut dz = Matrix::zeros(j_count, j_count);
        for k in 0..j_count {
            if !bundle.interior[k] {
                continue;
            }
            let inv_l = 1.0 / eval.lambda[k];
            for l in 0..j_count {
                let mut val = zeta_v[k] * parts.phi[(k, l)] + gamma[(k, l)]
                    - 2.0 * parts.psi[(k, l)];
                if self.market.same_firm(k, l) {
                    val += parts.phi[(k, l)] * markup[l] + gamma[(l, k)];
                }
                if k == l {
                    val += t[k] - eval.lambda[k];
                }
                dz[(k, l)] = inv_l * val;
            }
        }
        let mut out = -dz;
        for k in 0..j_count {
            out[(k, k)] += 1.0;
        }
        out
    }

    /// `I − Dη` on the full index set, with `Dη` solved from the per-firm
    /// block systems `(I − Ω_f)(Dη)_{f,·} = −Λ_f⁻¹(A + DP)_{f,·}` where
    /// `A_{k,l} = Σ_{j∈𝒥_{f(k)}} (D_lD_kP_j) η_j`.
    fn eta_jacobian(
        &self,
        bundle: &EvalBundle,
        parts: &HessianParts,
        _p: &Vector,
    ) -> Result<Matrix> {
        let j_count = self.market.product_count();
        let eval = &bundle.eval;
        let eta_v = bundle.markup.as_ref().expect("eta bundle carries the map value");
        let gamma = eval.gamma_full.as_ref().expect("bundle evaluated with full gamma");
        // A from the per-sample expansion of Σ_j (D_lD_kP_j^L) η_j:
        // A = diag(η∘m0 − m1_η) + 2Ψ_η − diag(η)Φ − mask∘(Φ·diag(η)).
        let (psi_eta, m0, m1_eta) = weighted_curvature(&bundle.lm, eval, self.market, eta_v);
        let mut a = 2.0 * psi_eta;
        for k in 0..j_count {
            a[(k, k)] += eta_v[k] * m0[k] - m1_eta[k];
            for l in 0..j_count {
                a[(k, l)] -= eta_v[k] * parts.phi[(k, l)];
                if self.market.same_firm(k, l) {
                    a[(k, l)] -= parts.phi[(k, l)] * eta_v[l];
                }
            }
        }
        // DP = Λ − Γ (full).
        let mut rhs = -(a - gamma);
        for k in 0..j_count {
            rhs[(k, k)] -= eval.lambda[k];
        }
        // Solve per firm on the live rows: (I − Ω_f)(Dη)_{f,·} = Λ_f⁻¹ rhs_{f,·}.
        let mut deta = Matrix::zeros(j_count, j_count);
        for (f, block) in self.market.firm_blocks() {
            let idx: Vec<usize> =
                block.iter().copied().filter(|&j| bundle.interior[j]).collect();
            if idx.is_empty() {
                continue;
            }
            let n = idx.len();
            let mut block_m = Matrix::identity(n, n);
            let mut block_rhs = Matrix::zeros(n, j_count);
            for (r, &j) in idx.iter().enumerate() {
                for (c_, &k) in idx.iter().enumerate() {
                    block_m[(r, c_)] -= eval.omega_tilde[(j, k)];
                }
                for l in 0..j_count {
                    block_rhs[(r, l)] = rhs[(j, l)] / eval.lambda[j];
                }
            }
            let qr = block_m.qr();
            let sol = qr.solve(&block_rhs).ok_or_else(|| {
                Error::Numerical(format!("singular markup Jacobian system for firm {}", f + 1))
            })?;
            for (r, &j) in idx.iter().enumerate() {
                for l in 0..j_count {
                    deta[(j, l)] = sol[(r, l)];
                }
            }
        }
        let mut out = -deta;
        for k in 0..j_count {
            out[(k, k)] += 1.0;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_model::Product;
    use crate::mixed_logit::{LinearUtility, LogIncomeUtility};
    use approx::assert_abs_diff_eq;

    fn log_income_instance() -> (LogIncomeUtility, Market) {
        let model = LogIncomeUtility::new(
            2.5,
            vec![
                (12.0, vec![0.8, -0.3], -0.5),
                (25.0, vec![0.1, 0.4], 0.2),
                (8.0, vec![-0.2, 0.6], 0.0),
            ],
        )
        .unwrap();
        let market = Market::new(vec![
            Product { name: "a".into(), firm: 0, cost: 1.0, characteristics: vec![1.0, 0.5] },
            Product { name: "b".into(), firm: 1, cost: 1.5, characteristics: vec![0.2, 1.0] },
            Product { name: "c".into(), firm: 0, cost: 0.5, characteristics: vec![-0.4, 0.3] },
        ])
        .unwrap();
        (model, market)
    }

    fn bundle_at<'a>(
        sys: &ResidualSystem<'a>,
        p: &Vector,
    ) -> EvalBundle {
        sys.eval(p).unwrap()
    }

    #[test]
    fn simple_logit_markups_match_closed_forms() {
        // One-draw Logit: η_k = 1/(α(1−σ)) with σ the inside share, and
        // ζ_k = π̂ + 1/α.
        let alpha = 2.0;
        let model = LinearUtility {
            draws: vec![(alpha, vec![1.0])],
            characteristic_signs: vec![1.0],
            outside: Some(0.0),
        };
        let market = Market::new(vec![
            Product { name: "a".into(), firm: 0, cost: 0.5, characteristics: vec![0.4] },
            Product { name: "b".into(), firm: 0, cost: 0.5, characteristics: vec![-0.2] },
        ])
        .unwrap();
        let p = Vector::from_vec(vec![1.1, 0.9]);
        let lm = logit_eval(&model, &market, &p);
        let eval = demand_eval(&lm, &market, &p, true).unwrap();
        let sigma = lm.l[(0, 0)] + lm.l[(0, 1)];
        let eta_v = eta(&eval, &market, &[true, true]).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(eta_v[k], 1.0 / (alpha * (1.0 - sigma)), epsilon = 1e-12);
        }
        let z = zeta(&eval, &market);
        let pi = profits(&eval, &market, &p)[0];
        for k in 0..2 {
            assert_abs_diff_eq!(z[k], pi + 1.0 / alpha, epsilon = 1e-12);
        }
    }

    #[test]
    fn eta_cross_checked_against_direct_markup_solve() {
        let (model, market) = log_income_instance();
        let p = Vector::from_vec(vec![3.0, 4.0, 2.5]);
        let lm = logit_eval(&model, &market, &p);
        let eval = demand_eval(&lm, &market, &p, true).unwrap();
        let eta_v = eta(&eval, &market, &[true, true, true]).unwrap();
        // Direct dense solve of D̃Pᵀ η = −P.
        let direct = eval
            .restricted_jacobian_transpose()
            .qr()
            .solve(&(-eval.p.clone()))
            .unwrap();
        assert_abs_diff_eq!((eta_v - direct).amax(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn zeta_at_cost_is_positive_markup() {
        let (model, market) = log_income_instance();
        let p = market.costs();
        let lm = logit_eval(&model, &market, &p);
        let eval = demand_eval(&lm, &market, &p, true).unwrap();
        let z = zeta(&eval, &market);
        for k in 0..3 {
            // Ω̃ term vanishes at p = c: ζ = −Λ⁻¹P > 0.
            assert_abs_diff_eq!(z[k], -eval.p[k] / eval.lambda[k], epsilon = 1e-14);
            assert!(z[k] > 0.0);
        }
    }

    #[test]
    fn zeta_identity_with_eta() {
        // ζ = Ω̃(p−c) + (I−Ω̃)η within 1e-10.
        let (model, market) = log_income_instance();
        let p = Vector::from_vec(vec![3.0, 4.0, 2.5]);
        let lm = logit_eval(&model, &market, &p);
        let eval = demand_eval(&lm, &market, &p, true).unwrap();
        let z = zeta(&eval, &market);
        let eta_v = eta(&eval, &market, &[true, true, true]).unwrap();
        let c = market.costs();
        let rhs = &eval.omega_tilde * (&p - &c)
            + (Matrix::identity(3, 3) - &eval.omega_tilde) * eta_v;
        assert_abs_diff_eq!((z - rhs).amax(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn residual_equivalences() {
        let (model, market) = log_income_instance();
        let p = Vector::from_vec(vec![3.0, 4.0, 2.5]);
        let opts = ResidualOptions::default();
        let pi_sys =
            ResidualSystem::new(ResidualKind::CombinedGradient, &market, &model, opts).unwrap();
        let eta_sys = ResidualSystem::new(ResidualKind::EtaMarkup, &market, &model, opts).unwrap();
        let zeta_sys =
            ResidualSystem::new(ResidualKind::ZetaMarkup, &market, &model, opts).unwrap();
        let b_pi = bundle_at(&pi_sys, &p);
        let b_eta = bundle_at(&eta_sys, &p);
        let b_zeta = bundle_at(&zeta_sys, &p);
        // F_π = Λ F_ζ.
        let lam_fz = b_zeta.eval.lambda.component_mul(&b_zeta.residual);
        assert_abs_diff_eq!((&b_pi.residual - lam_fz).amax(), 0.0, epsilon = 1e-10);
        // F_π = D̃Pᵀ F_η.
        let dpt_fe = b_eta.eval.restricted_jacobian_transpose() * &b_eta.residual;
        assert_abs_diff_eq!((&b_pi.residual - dpt_fe).amax(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn eta_bounds_and_positivity() {
        let (model, market) = log_income_instance();
        for &scale in &[1.0, 2.0, 3.5] {
            let p = Vector::from_vec(vec![1.2 * scale, 1.6 * scale, 1.1 * scale]);
            let lm = logit_eval(&model, &market, &p);
            let eval = demand_eval(&lm, &market, &p, true).unwrap();
            let eta_v = eta(&eval, &market, &[true, true, true]).unwrap();
            assert!(eta_v.iter().all(|&x| x > 0.0), "markups must be positive");
            let lam_inv_p = (0..3).map(|j| (eval.p[j] / eval.lambda[j]).abs()).fold(0.0f64, f64::max);
            let omega = (0..3)
                .map(|j| eval.omega_tilde.row(j).iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0f64, f64::max);
            assert!(omega < 1.0, "outside good bounds the block norm");
            let lo = lam_inv_p / (1.0 + omega);
            let hi = lam_inv_p / (1.0 - omega);
            let eta_inf = eta_v.amax();
            assert!(eta_inf >= lo - 1e-12 && eta_inf <= hi + 1e-12);
        }
    }

    #[test]
    fn zeta_jacobian_matches_finite_differences() {
        let (model, market) = log_income_instance();
        let opts = ResidualOptions::default();
        let sys = ResidualSystem::new(ResidualKind::ZetaMarkup, &market, &model, opts).unwrap();
        let p = Vector::from_vec(vec![3.0, 4.0, 2.5]);
        let b = bundle_at(&sys, &p);
        let jac = sys.jacobian(&b, &p).unwrap();
        for l in 0..3 {
            let h = 1e-5 * p[l].max(1.0);
            let mut pp = p.clone();
            pp[l] += h;
            let ru = bundle_at(&sys, &pp).residual;
            pp[l] -= 2.0 * h;
            let rd = bundle_at(&sys, &pp).residual;
            for k in 0..3 {
                let fd = (ru[k] - rd[k]) / (2.0 * h);
                assert_abs_diff_eq!(jac[(k, l)], fd, epsilon = 1e-5 * jac[(k, l)].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn eta_jacobian_matches_finite_differences() {
        let (model, market) = log_income_instance();
        let opts = ResidualOptions::default();
        let sys = ResidualSystem::new(ResidualKind::EtaMarkup, &market, &model, opts).unwrap();
        let p = Vector::from_vec(vec![3.0, 4.0, 2.5]);
        let b = bundle_at(&sys, &p);
        let jac = sys.jacobian(&b, &p).unwrap();
        for l in 0..3 {
            let h = 1e-5 * p[l].max(1.0);
            let mut pp = p.clone();
            pp[l] += h;
            let ru = bundle_at(&sys, &pp).residual;
            pp[l] -= 2.0 * h;
            let rd = bundle_at(&sys, &pp).residual;
            for k in 0..3 {
                let fd = (ru[k] - rd[k]) / (2.0 * h);
                assert_abs_diff_eq!(jac[(k, l)], fd, epsilon = 1e-5 * jac[(k, l)].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn combined_gradient_jacobian_matches_finite_differences() {
        let (model, market) = log_income_instance();
        let opts = ResidualOptions::default();
        let sys =
            ResidualSystem::new(ResidualKind::CombinedGradient, &market, &model, opts).unwrap();
        let p = Vector::from_vec(vec![3.0, 4.0, 2.5]);
        let b = bundle_at(&sys, &p);
        let jac = sys.jacobian(&b, &p).unwrap();
        for l in 0..3 {
            let h = 1e-5 * p[l].max(1.0);
            let mut pp = p.clone();
            pp[l] += h;
            let ru = bundle_at(&sys, &pp).residual;
            pp[l] -= 2.0 * h;
            let rd = bundle_at(&sys, &pp).residual;
            for k in 0..3 {
                let fd = (ru[k] - rd[k]) / (2.0 * h);
                assert_abs_diff_eq!(jac[(k, l)], fd, epsilon = 1e-5 * jac[(k, l)].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn extended_zeta_limit_and_continuity() {
        // Two-product monopoly, one draw with finite reservation price.
        let varsigma = 10.0;
        let model = LogIncomeUtility::new(
            2.0,
            vec![(varsigma, vec![0.0], -2.0 * varsigma.ln())],
        )
        .unwrap();
        let market = Market::new(vec![
            Product { name: "a".into(), firm: 0, cost: 1.0, characteristics: vec![0.0] },
            Product { name: "b".into(), firm: 0, cost: 1.0, characteristics: vec![0.0] },
        ])
        .unwrap();
        // p1 at the reservation price, p2 below: ζ1 = P2^L(θ, (ς, p2))(p2−c2).
        let p = Vector::from_vec(vec![varsigma, 4.0]);
        let lm = logit_eval(&model, &market, &p);
        let eval = demand_eval(&lm, &market, &p, true).unwrap();
        let z = zeta_extended(&lm, &eval, &model, &market, &p).unwrap();
        assert_abs_diff_eq!(z[0], lm.l[(0, 1)] * (4.0 - 1.0), epsilon = 1e-14);
        // Continuity: just below ς* the interior formula approaches the limit.
        let p_near = Vector::from_vec(vec![varsigma - 1e-6, 4.0]);
        let lm_near = logit_eval(&model, &market, &p_near);
        let eval_near = demand_eval(&lm_near, &market, &p_near, true).unwrap();
        let z_near = zeta(&eval_near, &market);
        assert!((z_near[0] - z[0]).abs() <= 1e-3 * z[0].abs().max(1e-6));
        // Single product: the limit value is 0, so the extended residual at
        // p = ς* is p − c > 0.
        let market1 = Market::new(vec![Product {
            name: "a".into(),
            firm: 0,
            cost: 1.0,
            characteristics: vec![0.0],
        }])
        .unwrap();
        let p1 = Vector::from_vec(vec![varsigma]);
        let lm1 = logit_eval(&model, &market1, &p1);
        let eval1 = demand_eval(&lm1, &market1, &p1, true).unwrap();
        let z1 = zeta_extended(&lm1, &eval1, &model, &market1, &p1).unwrap();
        assert_eq!(z1[0], 0.0);
    }

    #[test]
    fn extended_zeta_rejected_for_infinite_reservation() {
        let model = LinearUtility {
            draws: vec![(1.0, vec![0.0])],
            characteristic_signs: vec![1.0],
            outside: Some(0.0),
        };
        let market = Market::new(vec![Product {
            name: "a".into(),
            firm: 0,
            cost: 0.0,
            characteristics: vec![0.0],
        }])
        .unwrap();
        let opts = ResidualOptions { extended_zeta: true, ..Default::default() };
        assert!(ResidualSystem::new(ResidualKind::ZetaMarkup, &market, &model, opts).is_err());
    }

    #[test]
    fn descent_property_of_zeta_step() {
        // (∇̃π̂)ᵀ(c + ζ − p) ≥ ‖∇̃π̂‖₂² / max_j |λ_j| at non-stationary p.
        let (model, market) = log_income_instance();
        let p = Vector::from_vec(vec![3.0, 4.0, 2.5]);
        let lm = logit_eval(&model, &market, &p);
        let eval = demand_eval(&lm, &market, &p, true).unwrap();
        let g = combined_gradient(&eval, &market, &p);
        let z = zeta(&eval, &market);
        let c = market.costs();
        let step = &c + &z - &p;
        let dot = g.dot(&step);
        let max_lam = eval.lambda.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
        assert!(dot >= g.norm_squared() / max_lam - 1e-12);
    }
}
