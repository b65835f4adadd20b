//! End-to-end acceptance suite: ten numbered criteria covering derivative
//! oracles, algebraic residual identities, structural invariants, the
//! small-field Newton pathology, fixed-point convergence contrasts, cross-
//! method agreement, the vanishing-gradient trap, exclusion handling,
//! preconditioner effectiveness, and bitwise output determinism.
//!
//! Each test prints exactly one `criterion N: PASS/FAIL` line (visible with
//! `--nocapture`, and always on failure).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bertrand_eq::demand_calculus::{
    combined_gradient, combined_gradient_jacobian, demand_eval, hessian_parts, profits,
};
use bertrand_eq::markup_maps::{eta, zeta, ResidualKind, ResidualOptions, ResidualSystem};
use bertrand_eq::mixed_logit::logit_eval;
use bertrand_eq::model_zoo::{preset, random_instance};
use bertrand_eq::newton_krylov::{
    gmres, tolerance_transfer, trust_region_solve, Globalization, TrustRegionConfig,
};
use bertrand_eq::pathology::{
    cauchy_step, contraction_threshold_check, newton_step, Classification, SimpleField,
};
use bertrand_eq::solvers::{
    eta_iteration_spectral_radius, newton_solve, verify, zeta_fpi, InitStrategy, NewtonConfig,
};
use bertrand_eq::{Market, Matrix, Status, UtilityModel, Vector};

fn report(criterion: usize, pass: bool, detail: &str) {
    println!("criterion {criterion}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
}

/// Largest entry of `|a − b|` relative to the largest entry of `|b|`
/// (floored at 1 so zero matrices compare absolutely).
fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    let scale = b.amax().max(1.0);
    (a - b).amax() / scale
}

struct Instance {
    market: Market,
    model: Box<dyn UtilityModel>,
}

fn instance(index: u64) -> Instance {
    let sc = random_instance(index).unwrap();
    let market = sc.market().unwrap();
    let model = sc.build_model().unwrap().model;
    Instance { market, model }
}

/// A probe price strictly between cost and any reservation price, so every
/// product is alive in every draw and all maps are smooth there.
fn probe_price(market: &Market, model: &dyn UtilityModel, rng: &mut ChaCha8Rng) -> Vector {
    let c = market.costs();
    let sigma_min = (0..model.draw_count())
        .map(|s| model.reservation_price(s))
        .fold(f64::INFINITY, f64::min);
    Vector::from_iterator(
        c.len(),
        c.iter().map(|&cj| {
            let raw = cj * (1.0 + rng.gen_range(0.02..0.35));
            if sigma_min.is_finite() {
                raw.min(0.75 * sigma_min)
            } else {
                raw
            }
        }),
    )
}

fn fd_probe(
    market: &Market,
    model: &dyn UtilityModel,
    p: &Vector,
    with_gamma: bool,
) -> bertrand_eq::demand_calculus::DemandEval {
    demand_eval(&logit_eval(model, market, p), market, p, with_gamma).unwrap()
}

// ---------------------------------------------------------------------------
// Criterion 1 — derivative oracles against central finite differences
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_derivative_oracles() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_first = 0f64;
    let mut worst_second = 0f64;

    for index in 0..20u64 {
        let inst = instance(index);
        let (market, model) = (&inst.market, &*inst.model);
        let j = market.product_count();
        let p = probe_price(market, model, &mut rng);
        let eval = fd_probe(market, model, &p, true);

        // (a) Demand Jacobian transpose Λ − Γ̃ᵀ column-by-column against
        // central differences of the choice probabilities (ownership-
        // restricted: differentiate only with respect to same-firm prices).
        let dp_t = eval.restricted_jacobian_transpose();
        let mut fd_dp_t = Matrix::zeros(j, j);
        for l in 0..j {
            let h = 1e-5 * p[l].abs().max(1.0);
            let mut pp = p.clone();
            pp[l] += h;
            let up = fd_probe(market, model, &pp, false);
            pp[l] -= 2.0 * h;
            let dn = fd_probe(market, model, &pp, false);
            for k in 0..j {
                if market.products()[k].firm == market.products()[l].firm {
                    // row k, column l of D̃Pᵀ is ∂P_l/∂p_k
                    fd_dp_t[(l, k)] = (up.p[k] - dn.p[k]) / (2.0 * h);
                }
            }
        }
        worst_first = worst_first.max(rel_err(&fd_dp_t, &dp_t));

        // (b) Combined gradient against central differences of the owning
        // firm's profit.
        let grad = combined_gradient(&eval, market, &p);
        let mut fd_grad = Vector::zeros(j);
        for k in 0..j {
            let f = market.products()[k].firm;
            let h = 1e-5 * p[k].abs().max(1.0);
            let mut pp = p.clone();
            pp[k] += h;
            let pu = profits(&fd_probe(market, model, &pp, false), market, &pp)[f];
            pp[k] -= 2.0 * h;
            let pd = profits(&fd_probe(market, model, &pp, false), market, &pp)[f];
            fd_grad[k] = (pu - pd) / (2.0 * h);
        }
        worst_first = worst_first
            .max((&fd_grad - &grad).amax() / grad.amax().max(1.0));

        // (c) Profit Hessian Ξ + 2Ψ + Ξ̃ᵀ against central differences of the
        // combined gradient.
        let parts = hessian_parts(&logit_eval(model, market, &p), &eval, market, &p);
        let hess = combined_gradient_jacobian(&parts);
        let mut fd_hess = Matrix::zeros(j, j);
        for l in 0..j {
            let h = 1e-5 * p[l].abs().max(1.0);
            let mut pp = p.clone();
            pp[l] += h;
            let gu = combined_gradient(&fd_probe(market, model, &pp, false), market, &pp);
            pp[l] -= 2.0 * h;
            let gd = combined_gradient(&fd_probe(market, model, &pp, false), market, &pp);
            for k in 0..j {
                fd_hess[(k, l)] = (gu[k] - gd[k]) / (2.0 * h);
            }
        }
        worst_second = worst_second.max(rel_err(&fd_hess, &hess));

        // (d) All three residual Jacobians against central differences of
        // the residual vector.
        for kind in
            [ResidualKind::CombinedGradient, ResidualKind::EtaMarkup, ResidualKind::ZetaMarkup]
        {
            let sys =
                ResidualSystem::new(kind, market, model, ResidualOptions::default()).unwrap();
            let bundle = sys.eval(&p).unwrap();
            assert_eq!(bundle.active().len(), j, "probe must keep every product live");
            let jac = sys.jacobian(&bundle, &p).unwrap();
            let mut fd_jac = Matrix::zeros(j, j);
            for l in 0..j {
                let h = 1e-5 * p[l].abs().max(1.0);
                let mut pp = p.clone();
                pp[l] += h;
                let ru = sys.eval(&pp).unwrap().residual;
                pp[l] -= 2.0 * h;
                let rd = sys.eval(&pp).unwrap().residual;
                for k in 0..j {
                    fd_jac[(k, l)] = (ru[k] - rd[k]) / (2.0 * h);
                }
            }
            worst_second = worst_second.max(rel_err(&fd_jac, &jac));
        }
    }

    let elapsed = started.elapsed();
    let pass = worst_first <= 1e-6 && worst_second <= 1e-5 && elapsed.as_secs() < 30;
    report(
        1,
        pass,
        &format!(
            "20 instances: first-derivative rel err {worst_first:.2e} (tol 1e-6), \
             second-derivative/Jacobian rel err {worst_second:.2e} (tol 1e-5), {elapsed:.2?}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Criteria 2 & 3 share the probe sweep
// ---------------------------------------------------------------------------

struct SweepOutcome {
    worst_pi_zeta: f64,
    worst_pi_eta: f64,
    worst_zeta_combo: f64,
    invariant_violations: usize,
    probes: usize,
}

fn residual_identity_sweep() -> SweepOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut out = SweepOutcome {
        worst_pi_zeta: 0.0,
        worst_pi_eta: 0.0,
        worst_zeta_combo: 0.0,
        invariant_violations: 0,
        probes: 0,
    };
    for index in 0..20u64 {
        let inst = instance(index);
        let (market, model) = (&inst.market, &*inst.model);
        let j = market.product_count();
        let c = market.costs();
        for _ in 0..100 {
            let p = probe_price(market, model, &mut rng);
            let eval = fd_probe(market, model, &p, false);
            let live: Vec<bool> = (0..j).map(|k| eval.p[k] > 1e-10).collect();
            let grad = combined_gradient(&eval, market, &p);
            let z = zeta(&eval, market);
            let eta_v = eta(&eval, market, &live).unwrap();
            out.probes += 1;

            // Identity F_π = Λ F_ζ, componentwise (scaled by 1 + |F_π|).
            for k in 0..j {
                let lhs = grad[k];
                let rhs = eval.lambda[k] * (p[k] - c[k] - z[k]);
                out.worst_pi_zeta = out.worst_pi_zeta.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
            }

            // Identity F_π = (Λ − Γ̃ᵀ)(p − c − η), componentwise.
            let dp_t = eval.restricted_jacobian_transpose();
            let f_eta = Vector::from_iterator(j, (0..j).map(|k| p[k] - c[k] - eta_v[k]));
            let rhs_eta = &dp_t * &f_eta;
            for k in 0..j {
                out.worst_pi_eta =
                    out.worst_pi_eta.max((grad[k] - rhs_eta[k]).abs() / (1.0 + grad[k].abs()));
            }

            // Decomposition ζ = Ω̃(p − c) + (I − Ω̃)η.
            let pc = Vector::from_iterator(j, (0..j).map(|k| p[k] - c[k]));
            let combo = &eval.omega_tilde * &pc + &eta_v - &eval.omega_tilde * &eta_v;
            for k in 0..j {
                if live[k] {
                    out.worst_zeta_combo = out.worst_zeta_combo.max((z[k] - combo[k]).abs());
                }
            }

            // Structural invariants (criterion 3), at this same probe.
            let mut omega_norm = 0f64;
            for k in 0..j {
                if !live[k] {
                    continue;
                }
                if !(eta_v[k] > 0.0) {
                    out.invariant_violations += 1;
                }
                let row_sum: f64 = eval.omega_tilde.row(k).iter().map(|x| x.abs()).sum();
                omega_norm = omega_norm.max(row_sum);
                // Strict diagonal dominance of I − Ω̃ on live rows.
                let off: f64 = (0..j)
                    .filter(|&l| l != k)
                    .map(|l| eval.omega_tilde[(k, l)].abs())
                    .sum();
                if !((1.0 - eval.omega_tilde[(k, k)]).abs() > off) {
                    out.invariant_violations += 1;
                }
            }
            if !(omega_norm < 1.0) {
                out.invariant_violations += 1;
            }
            // Markup sandwich: the largest |P/λ| bounds the largest markup
            // from both sides through the block norm of Ω̃.
            let lam_inv_p = (0..j)
                .filter(|&k| live[k])
                .map(|k| (eval.p[k] / eval.lambda[k]).abs())
                .fold(0.0f64, f64::max);
            let eta_inf = eta_v.amax();
            let lo = lam_inv_p / (1.0 + omega_norm);
            let hi = lam_inv_p / (1.0 - omega_norm);
            if !(eta_inf >= lo - 1e-9 && eta_inf <= hi + 1e-9) {
                out.invariant_violations += 1;
            }
        }
    }
    out
}

#[test]
fn criterion_02_residual_equivalence() {
    let sweep = residual_identity_sweep();
    let pass = sweep.worst_pi_zeta <= 1e-9
        && sweep.worst_pi_eta <= 1e-9
        && sweep.worst_zeta_combo <= 1e-10;
    report(
        2,
        pass,
        &format!(
            "{} probes: |F_pi - Lam F_zeta| {:.2e} (tol 1e-9), |F_pi - DP^T F_eta| {:.2e} \
             (tol 1e-9), zeta decomposition {:.2e} (tol 1e-10)",
            sweep.probes, sweep.worst_pi_zeta, sweep.worst_pi_eta, sweep.worst_zeta_combo
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_structural_invariants() {
    let sweep = residual_identity_sweep();
    let pass = sweep.invariant_violations == 0;
    report(
        3,
        pass,
        &format!(
            "{} probes: {} violations of eta > 0, block norm < 1, diagonal dominance, \
             or the markup sandwich",
            sweep.probes, sweep.invariant_violations
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Criterion 4 — small-field Newton pathology
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_newton_pathology() {
    let started = Instant::now();
    let mut failures: Vec<String> = Vec::new();

    // Pure Newton reproduces the closed-form classification.
    let cfg = TrustRegionConfig {
        globalization: Globalization::PureNewton,
        max_iter: 12,
        opt_tol: 1e-12,
        ..Default::default()
    };
    for (r, expected) in [
        (0.1, Classification::ConvergesToZero),
        (0.5, Classification::ConvergesToZero),
        (1.0 / 3f64.sqrt(), Classification::SignAlternates),
        (0.7, Classification::Diverges),
        (2.0, Classification::Diverges),
    ] {
        let mut x0 = Vector::zeros(3);
        x0[0] = r;
        let mut field = SimpleField { dim: 3 };
        let run = trust_region_solve(&mut field, &x0, &cfg).unwrap();
        match contraction_threshold_check(&x0, &run) {
            Ok(class) if class == expected => {}
            Ok(class) => failures.push(format!("radius {r}: got {class:?}")),
            Err(e) => failures.push(format!("radius {r}: {e}")),
        }
    }

    // Hookstep from outside the unit sphere moves strictly outward.
    let mut x0 = Vector::zeros(3);
    x0[0] = 2.0;
    let mut field = SimpleField { dim: 3 };
    let run = trust_region_solve(
        &mut field,
        &x0,
        &TrustRegionConfig { max_iter: 10, opt_tol: 1e-14, ..Default::default() },
    )
    .unwrap();
    let accepted: Vec<f64> =
        run.trace.iter().filter(|r| r.accepted).map(|r| r.x_norm).collect();
    if accepted.len() < 5 {
        failures.push(format!("only {} accepted hooksteps", accepted.len()));
    }
    let mut last = x0.norm();
    for (i, n) in accepted.iter().enumerate() {
        if *n <= last {
            failures.push(format!("hookstep iterate {i} did not move outward"));
            break;
        }
        last = *n;
    }

    // Cauchy step equals Newton step wherever both are defined.
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..50 {
        let mut x = Vector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        if (x.norm() - 1.0).abs() < 1e-3 {
            x *= 1.1;
        }
        let d = (cauchy_step(&x).unwrap() - newton_step(&x).unwrap()).amax();
        if d > 1e-10 {
            failures.push(format!("cauchy/newton mismatch {d:.2e}"));
            break;
        }
    }

    let elapsed = started.elapsed();
    let pass = failures.is_empty() && elapsed.as_secs() < 5;
    report(
        4,
        pass,
        &format!(
            "classification x5, outward hookstep ({} accepted), cauchy=newton x50, {elapsed:.2?}{}",
            accepted.len(),
            if failures.is_empty() { String::new() } else { format!("; {failures:?}") }
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Criterion 5 — eta iteration locally diverges where zeta converges
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_eta_local_divergence() {
    let sc = preset("convexam-weak-outside", 1, 1).unwrap();
    let market = sc.market().unwrap();
    let model = sc.build_model().unwrap().model;
    let model = &*model;
    let c = market.costs();
    let zsys = ResidualSystem::new(
        ResidualKind::ZetaMarkup,
        &market,
        model,
        ResidualOptions::default(),
    )
    .unwrap();
    let esys =
        ResidualSystem::new(ResidualKind::EtaMarkup, &market, model, ResidualOptions::default())
            .unwrap();

    // High-precision solution via the zeta iteration.
    let p0 = InitStrategy::AtCosts.prices(&market).unwrap();
    let sol = zeta_fpi(&zsys, &p0, 1e-12, 10_000).unwrap();
    assert_eq!(sol.status, Status::Converged);
    let p_star = sol.p_final.clone();

    // One-draw divergence certificate: the inside-goods odds against the
    // outside good exceed one at the solution.
    let theta = model.outside_utility(0).unwrap();
    let mut odds = 0.0;
    for (j, prod) in market.products().iter().enumerate() {
        let u = model.price_utility(0, p_star[j]).w
            + model.nonprice_utility(0, &prod.characteristics);
        odds += (u - theta).exp();
    }
    // Cross-check against the assembled iteration map's spectral radius.
    let rho = eta_iteration_spectral_radius(&market, model, &p_star, 1e-10).unwrap();

    // Eta fixed-point iteration escapes a 1e-2 ball from a 1e-3 offset.
    let mut p = Vector::from_iterator(p_star.len(), p_star.iter().map(|&v| v + 1e-3));
    let mut escaped_at = None;
    for it in 1..=100 {
        let bundle = esys.eval(&p).unwrap();
        let m = bundle.markup.expect("eta map defined near the interior solution");
        p = Vector::from_iterator(p.len(), (0..p.len()).map(|k| c[k] + m[k]));
        if (&p - &p_star).norm() > 1e-2 {
            escaped_at = Some(it);
            break;
        }
    }

    // Zeta fixed-point iteration re-converges from the same offset.
    let p1 = Vector::from_iterator(p_star.len(), p_star.iter().map(|&v| v + 1e-3));
    let re = zeta_fpi(&zsys, &p1, 1e-6, 25).unwrap();

    let pass = odds > 1.0
        && rho > 1.0
        && escaped_at.is_some()
        && re.status == Status::Converged
        && re.grad_inf <= 1e-6;
    report(
        5,
        pass,
        &format!(
            "odds sum {odds:.3} > 1, spectral radius {rho:.3} > 1, eta escaped at \
             iteration {escaped_at:?}, zeta re-converged in {} iterations (grad {:.1e})",
            re.iterations, re.grad_inf
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Criterion 6 — cross-method agreement on the desk market
// ---------------------------------------------------------------------------

/// The desk market solved by the three production methods from costs.
fn desk_runs(seed: u64) -> (Vector, Vec<(String, bertrand_eq::SolverRun)>) {
    let sc = preset("blp-desk", 500, seed).unwrap();
    let market = sc.market().unwrap();
    let built = sc.build_model().unwrap();
    let model = &*built.model;
    let p0 = InitStrategy::AtCosts.prices(&market).unwrap();
    let zopts = ResidualOptions { extended_zeta: true, ..Default::default() };
    let zsys = ResidualSystem::new(ResidualKind::ZetaMarkup, &market, model, zopts).unwrap();
    let esys =
        ResidualSystem::new(ResidualKind::EtaMarkup, &market, model, ResidualOptions::default())
            .unwrap();
    let fpi = zeta_fpi(&zsys, &p0, 1e-6, 1000).unwrap();
    let znm = newton_solve(&zsys, &p0, &NewtonConfig::default()).unwrap();
    let enm = newton_solve(&esys, &p0, &NewtonConfig::default()).unwrap();
    (
        fpi.p_final.clone(),
        vec![
            ("zeta-fpi".into(), fpi),
            ("zeta-nm".into(), znm),
            ("eta-nm".into(), enm),
        ],
    )
}

#[test]
fn criterion_06_cross_method_agreement() {
    let started = Instant::now();
    let mut good_seeds = 0usize;
    let mut worst_dev = 0f64;
    let mut worst_fpi_iters = 0usize;
    let mut notes = Vec::new();
    for seed in 1..=10u64 {
        let (_, runs) = desk_runs(seed);
        let all_pass = runs
            .iter()
            .all(|(_, r)| r.status == Status::Converged && r.fo_pass && r.so_pass);
        let mut dev = 0f64;
        for a in 0..runs.len() {
            for b in (a + 1)..runs.len() {
                dev = dev.max((&runs[a].1.p_final - &runs[b].1.p_final).amax());
            }
        }
        worst_dev = worst_dev.max(dev);
        let fpi_iters = runs[0].1.iterations;
        worst_fpi_iters = worst_fpi_iters.max(fpi_iters);
        if all_pass && dev <= 1e-2 && fpi_iters <= 100 {
            good_seeds += 1;
        } else {
            notes.push(format!("seed {seed}: pass={all_pass} dev={dev:.2e} fpi={fpi_iters}"));
        }
    }
    let elapsed = started.elapsed();
    let pass = good_seeds >= 9 && elapsed.as_secs() < 300;
    report(
        6,
        pass,
        &format!(
            "{good_seeds}/10 seeds fully agree; worst pairwise deviation {worst_dev:.2e} \
             (tol 1e-2), worst zeta-fpi iterations {worst_fpi_iters} (cap 100), {elapsed:.2?}{}",
            if notes.is_empty() { String::new() } else { format!("; {notes:?}") }
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Criterion 7 — vanishing-gradient trap for the raw-gradient Newton method
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_gradient_newton_trap() {
    let sc = preset("blp-desk", 500, 1).unwrap();
    let market = sc.market().unwrap();
    let built = sc.build_model().unwrap();
    let model = &*built.model;
    let sigma_star = model.max_reservation_price();
    let p_far = Vector::from_element(market.product_count(), 5.0 * sigma_star);

    let cg = ResidualSystem::new(
        ResidualKind::CombinedGradient,
        &market,
        model,
        ResidualOptions::default(),
    )
    .unwrap();
    let cg_outcome = newton_solve(&cg, &p_far, &NewtonConfig::default());
    let cg_trapped = match &cg_outcome {
        // Acceptable trap signatures: outright failure, or a "solution"
        // that fails second-order/liveness checks.
        Err(_) => true,
        Ok(run) => {
            run.status != Status::Converged
                || !run.so_pass
                || run.live_set.is_empty()
        }
    };
    let cg_note = match &cg_outcome {
        Err(e) => format!("cg-nm error: {e}"),
        Ok(run) => format!(
            "cg-nm status {:?}, live {} products",
            run.status,
            run.live_set.len()
        ),
    };

    let zopts = ResidualOptions { extended_zeta: true, ..Default::default() };
    let zsys = ResidualSystem::new(ResidualKind::ZetaMarkup, &market, model, zopts).unwrap();
    let znm = newton_solve(&zsys, &p_far, &NewtonConfig::default()).unwrap();

    let (p_eq, _) = desk_runs(1);
    let dev = (&znm.p_final - &p_eq).amax();
    let pass = cg_trapped
        && znm.status == Status::Converged
        && znm.fo_pass
        && znm.so_pass
        && dev <= 1e-2;
    report(
        7,
        pass,
        &format!(
            "{cg_note}; zeta-nm from the same start {:?} in {} iterations, \
             deviation from equilibrium {dev:.2e}",
            znm.status, znm.iterations
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Criterion 8 — exclusion handling on the two-product budget market
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_exclusion_resolution() {
    let sc = preset("viexample", 1, 1).unwrap();
    let market = sc.market().unwrap();
    let built = sc.build_model().unwrap();
    let model = &*built.model;
    let c = market.costs();
    let sigma_star = model.max_reservation_price();
    assert!(sigma_star.is_finite());
    let zopts = ResidualOptions { extended_zeta: true, ..Default::default() };
    let zsys = ResidualSystem::new(ResidualKind::ZetaMarkup, &market, model, zopts).unwrap();

    // Interior equilibrium from the default start.
    let base = zeta_fpi(&zsys, &InitStrategy::AtCosts.prices(&market).unwrap(), 1e-9, 5000)
        .unwrap();
    assert_eq!(base.status, Status::Converged);
    let p_star = base.p_final.clone();

    let s = sigma_star;
    let starts: Vec<Vector> = vec![
        c.clone(),
        Vector::from_vec(vec![0.1, 0.1]),
        Vector::from_vec(vec![0.5 * s, 0.5 * s]),
        Vector::from_vec(vec![0.9 * s, 0.9 * s]),
        Vector::from_vec(vec![1.25 * s, 1.25 * s]), // above every reservation price
        Vector::from_vec(vec![2.0 * s, 2.0 * s]),
        Vector::from_vec(vec![1.5 * s, c[1]]),
        Vector::from_vec(vec![c[0], 1.5 * s]),
        Vector::from_vec(vec![0.2 * s, 1.1 * s]),
        Vector::from_vec(vec![1.1 * s, 0.2 * s]),
        Vector::from_vec(vec![0.75 * s, 0.25 * s]),
        Vector::from_vec(vec![5.0 * s, 5.0 * s]),
    ];
    assert_eq!(starts.len(), 12);

    let mut interior = 0usize;
    let mut frozen_optimal = 0usize;
    let mut bad = Vec::new();
    for (i, p0) in starts.iter().enumerate() {
        let run = zeta_fpi(&zsys, p0, 1e-9, 5000).unwrap();
        let at_interior = (&run.p_final - &p_star).amax() <= 1e-6;
        if at_interior {
            interior += 1;
            continue;
        }
        let rep = verify(&market, model, &run.p_final, 1e-10, true).unwrap();
        if !rep.excluded.is_empty() && rep.exclusion_optimal {
            frozen_optimal += 1;
        } else {
            bad.push(format!("start {i}: status {:?}, report {rep:?}", run.status));
        }
    }

    // The two sub-problem optima with one product priced out are NOT fixed
    // points of the extended map: solve each single-product market alone,
    // then plant the other product at the exclusion price.
    let mut subproblem_residuals = Vec::new();
    for j in 0..2 {
        let solo_market = Market::new(vec![bertrand_eq::Product {
            firm: 0,
            ..market.products()[j].clone()
        }])
        .unwrap();
        let solo_sys =
            ResidualSystem::new(ResidualKind::ZetaMarkup, &solo_market, model, zopts).unwrap();
        let solo = zeta_fpi(
            &solo_sys,
            &InitStrategy::AtCosts.prices(&solo_market).unwrap(),
            1e-10,
            5000,
        )
        .unwrap();
        assert_eq!(solo.status, Status::Converged);
        let mut p = Vector::from_element(2, sigma_star);
        p[j] = solo.p_final[0];
        let bundle = zsys.eval(&p).unwrap();
        subproblem_residuals.push(bundle.residual.norm());
    }
    let not_fixed = subproblem_residuals.iter().all(|&r| r > 1e-3);

    let pass = bad.is_empty() && not_fixed;
    report(
        8,
        pass,
        &format!(
            "{interior} starts reached the interior equilibrium, {frozen_optimal} a frozen \
             exclusion-optimal state; sub-problem optima residuals {:?} (> 1e-3){}",
            subproblem_residuals
                .iter()
                .map(|r| format!("{r:.2e}"))
                .collect::<Vec<_>>(),
            if bad.is_empty() { String::new() } else { format!("; {bad:?}") }
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Criterion 9 — preconditioner effectiveness near equilibrium
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_preconditioner_effectiveness() {
    let sc = preset("blp-desk", 500, 1).unwrap();
    let market = sc.market().unwrap();
    let built = sc.build_model().unwrap();
    let model = &*built.model;
    let zopts = ResidualOptions { extended_zeta: true, ..Default::default() };
    let zsys = ResidualSystem::new(ResidualKind::ZetaMarkup, &market, model, zopts).unwrap();
    let cg = ResidualSystem::new(
        ResidualKind::CombinedGradient,
        &market,
        model,
        ResidualOptions::default(),
    )
    .unwrap();
    let eq = zeta_fpi(&zsys, &InitStrategy::AtCosts.prices(&market).unwrap(), 1e-6, 1000)
        .unwrap();

    // Near-equilibrium point: a deterministic relative perturbation.
    let mut p = eq.p_final.clone();
    for j in 0..p.len() {
        p[j] *= 1.0 + 0.01 * ((j as f64) * 2.399963).sin();
    }
    let bundle = cg.eval(&p).unwrap();
    let jac = cg.jacobian(&bundle, &p).unwrap();
    let active = bundle.active();
    let n = active.len();
    let f = Vector::from_iterator(n, active.iter().map(|&j| bundle.residual[j]));
    let lam = Vector::from_iterator(n, active.iter().map(|&j| bundle.eval.lambda[j]));

    // Smallest Krylov dimension at which the plain system reaches 1e-10
    // relative residual (capped at the full dimension).
    let mut plain_dim = n;
    for k in 1..=n {
        let (_, _, rel) = gmres(|s: &Vector| Ok(&jac * s), &(-&f), 0.0, k).unwrap();
        if rel <= 1e-10 {
            plain_dim = k;
            break;
        }
    }
    // Same for the diagonally preconditioned system, to the transferred
    // tolerance that makes the two stopping rules comparable.
    let dprime = tolerance_transfer(&bundle.grad, &bundle.eval.lambda, &active, 1e-10);
    let mut a_pre = jac.clone();
    let mut b_pre = -f.clone();
    for r in 0..n {
        for col in 0..n {
            a_pre[(r, col)] /= lam[r];
        }
        b_pre[r] /= lam[r];
    }
    let mut pre_dim = n;
    for k in 1..=n {
        let (_, _, rel) = gmres(|s: &Vector| Ok(&a_pre * s), &b_pre, 0.0, k).unwrap();
        if rel <= dprime {
            pre_dim = k;
            break;
        }
    }

    let budget = ((0.25 * plain_dim as f64).ceil() as usize).max(1);
    let pass = pre_dim <= budget;
    report(
        9,
        pass,
        &format!(
            "preconditioned dimension {pre_dim} vs plain {plain_dim} (needs <= {budget}); \
             transferred tolerance {dprime:.2e}; at this 10-product scale both systems \
             terminate by exact breakdown at the full dimension, so the contrast the \
             criterion targets does not manifest"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Criterion 10 — bitwise-deterministic batch output
// ---------------------------------------------------------------------------

/// results.csv with the wall-time column removed.
fn strip_wall_time(text: &str) -> String {
    let mut out = String::new();
    for line in text.lines() {
        let fields: Vec<&str> = line.split(',').collect();
        let kept: Vec<&str> = fields
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 6) // wall_ms column
            .map(|(_, f)| *f)
            .collect();
        out.push_str(&kept.join(","));
        out.push('\n');
    }
    out
}

#[test]
fn criterion_10_determinism() {
    let bin = env!("CARGO_BIN_EXE_bertrand-eq");
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "4"] {
        let dir = tmp.path().join(format!("w{workers}"));
        let status = std::process::Command::new(bin)
            .args([
                "run",
                "--scenario",
                "blp-desk",
                "--S",
                "500",
                "--seeds",
                "1..10",
                "--methods",
                "zeta-fpi,zeta-nm,eta-nm",
                "--init",
                "costs",
                "--out",
            ])
            .arg(&dir)
            .env("BERTRAND_EQ_THREADS", workers)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success(), "batch run failed with {workers} workers");
        let text = std::fs::read_to_string(dir.join("results.csv")).unwrap();
        outputs.push(strip_wall_time(&text));
    }
    let rows = outputs[0].lines().count();
    let pass = outputs[0] == outputs[1] && rows == 31; // header + 30 runs
    report(
        10,
        pass,
        &format!(
            "results.csv ({} data rows) identical across 1 and 4 workers after removing \
             the wall-time column",
            rows - 1
        ),
    );
    assert!(pass);
}
