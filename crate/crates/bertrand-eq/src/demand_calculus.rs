//! Market-level demand, its price derivatives, profits, the combined
//! gradient, and second-derivative objects.
//!
//! All aggregates are sample averages over the `S` consumer draws. With
//! `L` the `S×J` per-sample probability matrix, `D` the matching matrix of
//! price-utility derivatives, and `V = L ∘ D` (elementwise):
//!
//! * demand `P = S⁻¹ Lᵀ1`;
//! * `Λ = diag(λ)`, `λ = S⁻¹ Vᵀ1` (own-price utility-weighted demand slope);
//! * `Γ = S⁻¹ LᵀV`, so the probability Jacobian is `DP = Λ − Γ`;
//! * `Γ̃` is `Γ` masked to intra-firm blocks, `D̃P = Λ − Γ̃` is the
//!   ownership-restricted Jacobian, and `Ω̃ = Λ⁻¹Γ̃ᵀ` satisfies
//!   `D̃Pᵀ = Λ(I − Ω̃)` with `‖Ω̃‖_∞ < 1` whenever an outside good exists;
//! * the combined gradient (stacked own-price profit derivatives) is
//!   `∇̃π̂ = (Λ − Γ̃ᵀ)(p−c) + P`, whose zeros are the simultaneously
//!   stationary price vectors.
//!
//! Second derivatives aggregate to `Φ`, `Ψ`, `χ` and
//! `Ξ = Λ + diag(χ) − Γ − diag(p−c)Φ`, giving the combined-gradient
//! Jacobian `Ξ + 2Ψ + Ξ̃ᵀ` and per-firm profit Hessians
//! `Ξ_ff + 2Ψ_ff + Ξ_ffᵀ`.

use crate::mixed_logit::LogitMatrix;
use crate::{Error, Market, Matrix, Result, Vector};

/// First-order demand aggregates at one price vector.
#[derive(Debug, Clone)]
pub struct DemandEval {
    /// Choice probabilities `P(p)` (length J).
    pub p: Vector,
    /// Diagonal of `Λ(p)`: strictly negative where the product is alive.
    pub lambda: Vector,
    /// `Γ(p)` masked to intra-firm blocks.
    pub gamma_tilde: Matrix,
    /// Full `Γ(p)` (present when requested).
    pub gamma_full: Option<Matrix>,
    /// `Ω̃(p) = Λ(p)⁻¹Γ̃(p)ᵀ` (rows of dead products are zero).
    pub omega_tilde: Matrix,
    /// `V = L ∘ D`, kept for second-order aggregation.
    pub v: Matrix,
    /// The evaluated price vector.
    pub price: Vector,
    /// `dead[j]` iff `P_j = 0` exactly.
    pub dead: Vec<bool>,
}

impl DemandEval {
    /// The ownership-restricted Jacobian transpose `D̃Pᵀ = Λ − Γ̃ᵀ`.
    pub fn restricted_jacobian_transpose(&self) -> Matrix {
        let j = self.p.len();
        let mut m = -self.gamma_tilde.transpose();
        for i in 0..j {
            m[(i, i)] += self.lambda[i];
        }
        m
    }
}

/// Aggregates a per-sample Logit evaluation into market-level demand and
/// first derivatives.
///
/// Fails if some `λ_j = 0` while `P_j > 0`, which would mean the utility
/// model violated strict price monotonicity.
pub fn demand_eval(
    lm: &LogitMatrix,
    market: &Market,
    p: &Vector,
    want_full_gamma: bool,
) -> Result<DemandEval> {
    let s = lm.l.nrows() as f64;
    let j_count = market.product_count();
    let probs = Vector::from_iterator(j_count, (0..j_count).map(|j| lm.l.column(j).sum() / s));
    let v = lm.l.component_mul(&lm.d);
    let lambda = Vector::from_iterator(j_count, (0..j_count).map(|j| v.column(j).sum() / s));
    let mut gamma_full = (lm.l.transpose() * &v) / s;
    let mut gamma_tilde = Matrix::zeros(j_count, j_count);
    for jj in 0..j_count {
        for kk in 0..j_count {
            if market.same_firm(jj, kk) {
                gamma_tilde[(jj, kk)] = gamma_full[(jj, kk)];
            }
        }
    }
    let dead: Vec<bool> = (0..j_count).map(|j| probs[j] == 0.0).collect();
    for j in 0..j_count {
        if !dead[j] && lambda[j] == 0.0 {
            return Err(Error::Numerical(format!(
                "product {} has positive demand but zero demand slope (model violation)",
                j + 1
            )));
        }
    }
    // Ω̃ = Λ⁻¹ Γ̃ᵀ, with zero rows for dead products (λ_j = 0 there).
    let mut omega_tilde = gamma_tilde.transpose();
    for jj in 0..j_count {
        if dead[jj] {
            omega_tilde.row_mut(jj).fill(0.0);
        } else {
            let inv = 1.0 / lambda[jj];
            omega_tilde.row_mut(jj).scale_mut(inv);
        }
    }
    if !want_full_gamma {
        gamma_full = Matrix::zeros(0, 0);
    }
    Ok(DemandEval {
        p: probs,
        lambda,
        gamma_tilde,
        gamma_full: if want_full_gamma { Some(gamma_full) } else { None },
        omega_tilde,
        v,
        price: p.clone(),
        dead,
    })
}

/// Per-firm profits `π̂_f = Σ_{j∈𝒥_f} P_j(p)(p_j − c_j)`.
pub fn profits(eval: &DemandEval, market: &Market, p: &Vector) -> Vector {
    let c = market.costs();
    let mut out = Vector::zeros(market.firm_count());
    for (f, block) in market.firm_blocks() {
        out[f] = block.iter().map(|&j| eval.p[j] * (p[j] - c[j])).sum();
    }
    out
}

/// The combined gradient `∇̃π̂(p) = (Λ − Γ̃ᵀ)(p − c) + P`: entry `k` is
/// firm `f(k)`'s marginal profit with respect to `p_k`. Its zero set is
/// the simultaneous-stationarity (first-order equilibrium) condition.
pub fn combined_gradient(eval: &DemandEval, market: &Market, p: &Vector) -> Vector {
    let c = market.costs();
    let markup = p - &c;
    let mut g = eval.restricted_jacobian_transpose() * markup;
    g += &eval.p;
    g
}

/// Second-derivative aggregates at one price vector.
#[derive(Debug, Clone)]
pub struct HessianParts {
    /// `Φ`: `φ_{k,l} = S⁻¹ Σ_s V_{s,k} V_{s,l}`.
    pub phi: Matrix,
    /// `Ψ`: `ψ_{k,l} = S⁻¹ Σ_s V_{s,k} π̂^L_{s,f(k)} V_{s,l}` where
    /// `π̂^L_{s,f}` is draw `s`'s Logit profit of firm `f`.
    pub psi: Matrix,
    /// `χ` (diagonal of `X`): curvature correction per product.
    pub chi: Vector,
    /// `Ξ = Λ + diag(χ) − Γ − diag(p−c)Φ`.
    pub xi: Matrix,
    /// `Ξ` masked to intra-firm blocks.
    pub xi_tilde: Matrix,
    /// Zeroth curvature moment `m0_k = S⁻¹ Σ_s (D²w + Dw²)_{s,k} L_{s,k}`.
    pub m0: Vector,
    /// First curvature moment against per-draw firm profits:
    /// `m1_k = S⁻¹ Σ_s (D²w + Dw²)_{s,k} L_{s,k} π̂^L_{s,f(k)}`.
    pub m1: Vector,
}

/// Per-draw firm aggregates `E_{s,k} = Σ_{j∈𝒥_{f(k)}} L_{s,j} y_j` for a
/// per-product weight vector `y` (the draw's Logit "profit" of the owning
/// firm when `y = p − c`).
fn firm_weighted_rows(lm: &LogitMatrix, market: &Market, y: &Vector) -> Matrix {
    let s_count = lm.l.nrows();
    let f_count = market.firm_count();
    let j_count = market.product_count();
    // Per-firm totals first, then broadcast to products.
    let mut firm_tot = Matrix::zeros(s_count, f_count);
    for s in 0..s_count {
        for j in 0..j_count {
            firm_tot[(s, market.owner(j))] += lm.l[(s, j)] * y[j];
        }
    }
    let mut e = Matrix::zeros(s_count, j_count);
    for s in 0..s_count {
        for j in 0..j_count {
            e[(s, j)] = firm_tot[(s, market.owner(j))];
        }
    }
    e
}

/// Weighted curvature aggregates shared by the profit Hessian and the
/// markup-map Jacobians.
///
/// Returns `(Ψ_y, m0, m1_y)` where `(Ψ_y)_{k,l} = S⁻¹ Σ_s V_{s,k} E_{s,k}
/// V_{s,l}`, `m0_k = S⁻¹ Σ_s cw_{s,k}`, `m1_k = S⁻¹ Σ_s cw_{s,k} E_{s,k}`,
/// with `cw = (D²w + Dw²) ∘ L` and `E` the per-draw owning-firm totals of
/// the weights `y`.
pub fn weighted_curvature(
    lm: &LogitMatrix,
    eval: &DemandEval,
    market: &Market,
    y: &Vector,
) -> (Matrix, Vector, Vector) {
    let s = lm.l.nrows() as f64;
    let j_count = market.product_count();
    let e = firm_weighted_rows(lm, market, y);
    let weighted_v = eval.v.component_mul(&e);
    let psi_y = (weighted_v.transpose() * &eval.v) / s;
    let cw = (lm.d2.clone() + lm.d.component_mul(&lm.d)).component_mul(&lm.l);
    let m0 = Vector::from_iterator(j_count, (0..j_count).map(|j| cw.column(j).sum() / s));
    let cw_e = cw.component_mul(&e);
    let m1 = Vector::from_iterator(j_count, (0..j_count).map(|j| cw_e.column(j).sum() / s));
    (psi_y, m0, m1)
}

/// Assembles all second-derivative aggregates at the evaluated price.
///
/// Dead products (zero probability in every draw) produce zero rows and
/// columns throughout, so the Newton system restricted to live products
/// stays consistent.
pub fn hessian_parts(
    lm: &LogitMatrix,
    eval: &DemandEval,
    market: &Market,
    p: &Vector,
) -> HessianParts {
    let s = lm.l.nrows() as f64;
    let j_count = market.product_count();
    let c = market.costs();
    let markup = p - &c;
    let phi = (eval.v.transpose() * &eval.v) / s;
    let (psi, m0, m1) = weighted_curvature(lm, eval, market, &markup);
    // χ_k = ½ S⁻¹ Σ_s cw_{s,k} ((p_k−c_k) − π̂^L_{s,f(k)})
    //     = ½ ((p_k−c_k) m0_k − m1_k).
    let chi = 0.5 * (markup.component_mul(&m0) - &m1);
    let gamma_full = match &eval.gamma_full {
        Some(g) => g.clone(),
        None => (lm.l.transpose() * &eval.v) / s,
    };
    let mut xi = -gamma_full;
    for k in 0..j_count {
        xi[(k, k)] += eval.lambda[k] + chi[k];
        let scale = markup[k];
        for l in 0..j_count {
            xi[(k, l)] -= scale * phi[(k, l)];
        }
    }
    let mut xi_tilde = Matrix::zeros(j_count, j_count);
    for k in 0..j_count {
        for l in 0..j_count {
            if market.same_firm(k, l) {
                xi_tilde[(k, l)] = xi[(k, l)];
            }
        }
    }
    HessianParts { phi, psi, chi, xi, xi_tilde, m0, m1 }
}

/// Jacobian of the combined gradient: `D∇̃π̂ = Ξ + 2Ψ + Ξ̃ᵀ`.
pub fn combined_gradient_jacobian(parts: &HessianParts) -> Matrix {
    &parts.xi + 2.0 * &parts.psi + parts.xi_tilde.transpose()
}

/// Per-firm profit Hessians `Ξ_ff + 2Ψ_ff + Ξ_ffᵀ` (one square matrix per
/// firm, indexed by the firm's product block).
pub fn firm_hessians(parts: &HessianParts, market: &Market) -> Vec<Matrix> {
    market
        .firm_blocks()
        .iter()
        .map(|(_, block)| {
            let n = block.len();
            let mut h = Matrix::zeros(n, n);
            for (a, &k) in block.iter().enumerate() {
                for (b, &l) in block.iter().enumerate() {
                    h[(a, b)] =
                        parts.xi[(k, l)] + 2.0 * parts.psi[(k, l)] + parts.xi[(l, k)];
                }
            }
            h
        })
        .collect()
}

/// Outcome of the per-firm second-order check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondOrder {
    /// `−H` admitted a Cholesky factorization: the firm's Hessian is
    /// negative definite at this point.
    Pass,
    /// Negative definiteness fails.
    Fail,
    /// The firm's live block is empty (all products dead).
    Degenerate,
}

/// Tests each firm's Hessian for negative definiteness via Cholesky of
/// `−H`, restricted to the firm's live products.
pub fn second_order_check(
    hessians: &[Matrix],
    market: &Market,
    dead: &[bool],
) -> Vec<SecondOrder> {
    market
        .firm_blocks()
        .iter()
        .zip(hessians)
        .map(|((_, block), h)| {
            let live: Vec<usize> =
                (0..block.len()).filter(|&a| !dead[block[a]]).collect();
            if live.is_empty() {
                return SecondOrder::Degenerate;
            }
            let n = live.len();
            let mut neg = Matrix::zeros(n, n);
            for (a, &ia) in live.iter().enumerate() {
                for (b, &ib) in live.iter().enumerate() {
                    neg[(a, b)] = -h[(ia, ib)];
                }
            }
            match nalgebra::Cholesky::new(neg) {
                Some(_) => SecondOrder::Pass,
                None => SecondOrder::Fail,
            }
        })
        .collect()
}

/// Boundedness report over a list of probe prices (informational; flags
/// markets whose markup maps are unbounded in price, for which fixed-point
/// iterates can drift).
#[derive(Debug, Clone, serde::Serialize)]
pub struct DiagnosticsReport {
    /// `max over probes of ‖Λ⁻¹P‖_∞`.
    pub max_lambda_inv_p: f64,
    /// `max over probes of ‖Ω̃‖_∞`.
    pub max_omega_norm: f64,
    /// `max over probes of ‖Ω̃(p−c)‖_∞`.
    pub max_omega_markup: f64,
    /// Largest probe ∞-norm at which some component still had
    /// `p_k − c_k − ζ_k(p) ≤ 0` (the map still points outward there).
    pub largest_inward_probe: Option<f64>,
}

/// Evaluates the boundedness diagnostics at each probe price.
pub fn diagnostics(
    model: &dyn crate::UtilityModel,
    market: &Market,
    probes: &[Vector],
) -> Result<DiagnosticsReport> {
    let c = market.costs();
    let mut report = DiagnosticsReport {
        max_lambda_inv_p: 0.0,
        max_omega_norm: 0.0,
        max_omega_markup: 0.0,
        largest_inward_probe: None,
    };
    for p in probes {
        let lm = crate::mixed_logit::logit_eval(model, market, p);
        let eval = demand_eval(&lm, market, p, false)?;
        let live: Vec<usize> = (0..p.len()).filter(|&j| !eval.dead[j]).collect();
        if live.is_empty() {
            continue;
        }
        let lam_inv_p = live
            .iter()
            .map(|&j| (eval.p[j] / eval.lambda[j]).abs())
            .fold(0.0f64, f64::max);
        let omega_norm = live
            .iter()
            .map(|&j| eval.omega_tilde.row(j).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let om = &eval.omega_tilde * (p - &c);
        let omega_markup = live.iter().map(|&j| om[j].abs()).fold(0.0f64, f64::max);
        report.max_lambda_inv_p = report.max_lambda_inv_p.max(lam_inv_p);
        report.max_omega_norm = report.max_omega_norm.max(omega_norm);
        report.max_omega_markup = report.max_omega_markup.max(omega_markup);
        let zeta = crate::markup_maps::zeta(&eval, market);
        let inward = live.iter().any(|&j| p[j] - c[j] - zeta[j] <= 0.0);
        if inward {
            let pn = p.amax();
            report.largest_inward_probe = Some(report.largest_inward_probe.map_or(pn, |x| x.max(pn)));
        }
    }
    Ok(report)
}
