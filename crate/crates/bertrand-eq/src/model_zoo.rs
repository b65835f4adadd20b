//! Canonical scenario builders: the two published coefficient tables
//! (a 1980 linear-utility automobile system and a 1983 log-income
//! automobile system), synthetic desk-scale product generators, and the
//! small qualitative example markets used throughout the test suites.
//!
//! A [`Scenario`] is a single self-describing JSON document: products,
//! model specification (either explicit draws or a sampling recipe with
//! its seed), default initial-condition strategy, and metadata.
//! Rebuilding a scenario from the same document reproduces its consumer
//! draws bitwise.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market_model::Product;
use crate::mixed_logit::{LinearUtility, LogIncomeUtility, Marginal, SampleSet};
use crate::solvers::InitStrategy;
use crate::{Error, Market, Result, UtilityModel};

/// Lognormal log-means for the 1980 linear-utility coefficient table:
/// price, size, acceleration, fuel consumption.
pub const BOYD80_LOG_MEANS: [f64; 4] = [-7.96, 0.589, -1.75, -1.28];
/// Matching lognormal log-standard deviations.
pub const BOYD80_LOG_STDS: [f64; 4] = [1.18, 0.622, 1.34, 0.001];

/// Global price coefficient of the 1983 log-income system.
pub const BLP95_ALPHA: f64 = 43.501;
/// Default log-mean of the lognormal income distribution (thousands of
/// 1983 USD); configurable because the source reports the distribution
/// in prose alongside a differently-scaled table entry.
pub const BLP95_INCOME_LOG_MEAN: f64 = 3.0914;
/// Log-standard deviation of income.
pub const BLP95_INCOME_LOG_STD: f64 = 1.0;
/// Normal means for (operating cost, hp/weight, size) tastes.
pub const BLP95_BETA_MEANS: [f64; 3] = [-0.122, 3.460, 2.883];
/// Matching normal standard deviations.
pub const BLP95_BETA_STDS: [f64; 3] = [1.05, 2.056, 4.628];
/// Normal mean and standard deviation of the outside-good taste `β₀`.
pub const BLP95_BETA0: (f64, f64) = (-8.582, 1.794);
/// Fuel price constant recorded in scenario metadata (1983 USD per
/// gallon equivalent) for operating-cost construction.
pub const FUEL_PRICE_1983_USD: f64 = 1.27;
/// Default upper bound (thousands of 1983 USD) for uniform-box initial
/// prices on the log-income system — roughly the 70th income percentile.
pub const BLP95_INIT_HI: f64 = 19.0;

/// Model specification: explicit draws for the small closed-form
/// examples, or a sampling recipe (marginals + seed) for the Monte Carlo
/// systems.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Linear utility with per-draw lognormal `(α, β)`.
    LinearSampled {
        /// Draw count.
        s: usize,
        /// Sampling seed.
        seed: u64,
        /// Log-means for `(α, β₁..β_K)`.
        log_means: Vec<f64>,
        /// Log-standard deviations, same length.
        log_stds: Vec<f64>,
        /// Sign applied to each characteristic (±1).
        characteristic_signs: Vec<f64>,
        /// Outside-good utility; `None` = no outside good.
        outside: Option<f64>,
    },
    /// Linear utility with explicit draws.
    LinearDraws {
        /// Per-draw `(α, β)`.
        draws: Vec<(f64, Vec<f64>)>,
        /// Sign applied to each characteristic (±1).
        characteristic_signs: Vec<f64>,
        /// Outside-good utility.
        outside: Option<f64>,
    },
    /// Log-income utility with lognormal income and normal tastes.
    LogIncomeSampled {
        /// Draw count.
        s: usize,
        /// Sampling seed.
        seed: u64,
        /// Global price coefficient (> 1).
        alpha: f64,
        /// Income lognormal log-mean.
        income_log_mean: f64,
        /// Income lognormal log-std.
        income_log_std: f64,
        /// Normal means for `β`.
        beta_means: Vec<f64>,
        /// Normal standard deviations for `β`.
        beta_stds: Vec<f64>,
        /// Normal mean for `β₀`.
        beta0_mean: f64,
        /// Normal standard deviation for `β₀`.
        beta0_std: f64,
    },
    /// Log-income utility with explicit draws.
    LogIncomeDraws {
        /// Global price coefficient (> 1).
        alpha: f64,
        /// Per-draw `(φ, β, β₀)`.
        draws: Vec<(f64, Vec<f64>, f64)>,
    },
}

/// A model instance together with the sample table it was generated
/// from (absent for explicit-draw specifications).
pub struct BuiltModel {
    /// The utility model.
    pub model: Box<dyn UtilityModel>,
    /// The generated coefficient table, when sampled.
    pub samples: Option<SampleSet>,
}

impl ModelSpec {
    /// Instantiates the model, drawing samples when the spec is a
    /// sampling recipe.
    pub fn build(&self) -> Result<BuiltModel> {
        match self {
            ModelSpec::LinearSampled { s, seed, log_means, log_stds, characteristic_signs, outside } => {
                if log_means.len() != log_stds.len() || log_means.len() < 2 {
                    return Err(Error::Config(
                        "linear sampling needs matching log-mean/log-std vectors (α plus tastes)"
                            .into(),
                    ));
                }
                let marginals: Vec<(String, Marginal)> = log_means
                    .iter()
                    .zip(log_stds)
                    .enumerate()
                    .map(|(i, (&m, &sd))| {
                        let name =
                            if i == 0 { "alpha".to_string() } else { format!("beta{i}") };
                        (name, Marginal::LogNormal { log_mean: m, log_std: sd })
                    })
                    .collect();
                let set = SampleSet::sample(&marginals, *s, *seed)?;
                let k = log_means.len() - 1;
                let draws = (0..*s)
                    .map(|r| {
                        (set.data[(r, 0)], (0..k).map(|c| set.data[(r, c + 1)]).collect())
                    })
                    .collect();
                Ok(BuiltModel {
                    model: Box::new(LinearUtility {
                        draws,
                        characteristic_signs: characteristic_signs.clone(),
                        outside: *outside,
                    }),
                    samples: Some(set),
                })
            }
            ModelSpec::LinearDraws { draws, characteristic_signs, outside } => Ok(BuiltModel {
                model: Box::new(LinearUtility {
                    draws: draws.clone(),
                    characteristic_signs: characteristic_signs.clone(),
                    outside: *outside,
                }),
                samples: None,
            }),
            ModelSpec::LogIncomeSampled {
                s,
                seed,
                alpha,
                income_log_mean,
                income_log_std,
                beta_means,
                beta_stds,
                beta0_mean,
                beta0_std,
            } => {
                if beta_means.len() != beta_stds.len() {
                    return Err(Error::Config("taste mean/std vectors must match".into()));
                }
                let mut marginals = vec![(
                    "income".to_string(),
                    Marginal::LogNormal { log_mean: *income_log_mean, log_std: *income_log_std },
                )];
                for (i, (&m, &sd)) in beta_means.iter().zip(beta_stds).enumerate() {
                    marginals
                        .push((format!("beta{}", i + 1), Marginal::Normal { mean: m, std: sd }));
                }
                marginals
                    .push(("beta0".to_string(), Marginal::Normal { mean: *beta0_mean, std: *beta0_std }));
                let set = SampleSet::sample(&marginals, *s, *seed)?;
                let k = beta_means.len();
                let draws = (0..*s)
                    .map(|r| {
                        (
                            set.data[(r, 0)],
                            (0..k).map(|c| set.data[(r, c + 1)]).collect(),
                            set.data[(r, k + 1)],
                        )
                    })
                    .collect();
                Ok(BuiltModel {
                    model: Box::new(LogIncomeUtility::new(*alpha, draws)?),
                    samples: Some(set),
                })
            }
            ModelSpec::LogIncomeDraws { alpha, draws } => Ok(BuiltModel {
                model: Box::new(LogIncomeUtility::new(*alpha, draws.clone())?),
                samples: None,
            }),
        }
    }
}

/// A complete, serializable market scenario.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Scenario {
    /// Short identifier.
    pub name: String,
    /// Human-readable description.
    pub description: String,
    /// Currency the prices/costs are denominated in.
    pub currency: String,
    /// Free-form numeric metadata (e.g. fuel price constants).
    #[serde(default)]
    pub metadata: BTreeMap<String, f64>,
    /// Products with firm assignment, cost, and characteristics.
    pub products: Vec<Product>,
    /// Demand-model specification.
    pub model: ModelSpec,
    /// Default starting-price strategy.
    pub default_init: InitStrategy,
}

impl Scenario {
    /// Builds the market (validating the product set).
    pub fn market(&self) -> Result<Market> {
        Market::new(self.products.clone())
    }

    /// Instantiates the demand model.
    pub fn build_model(&self) -> Result<BuiltModel> {
        self.model.build()
    }

    /// Serializes to pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    /// Parses a scenario document.
    pub fn from_json(text: &str) -> Result<Scenario> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("scenario parse error: {e}")))
    }
}

fn named_product(name: String, firm: usize, cost: f64, characteristics: Vec<f64>) -> Product {
    Product { name, firm, cost, characteristics }
}

/// Contiguous firm blocks covering `j` products with `f_count` firms.
fn firm_of(j_index: usize, j_total: usize, f_count: usize) -> usize {
    (j_index * f_count) / j_total
}

/// Synthetic products for the linear-utility automobile system
/// (size, acceleration proxy, fuel consumption; 1980 USD costs).
pub fn synthetic_boyd_products(j: usize, f_count: usize, seed: u64) -> Vec<Product> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..j)
        .map(|i| {
            named_product(
                format!("car-{}", i + 1),
                firm_of(i, j, f_count),
                rng.gen_range(4000.0..9000.0),
                vec![
                    rng.gen_range(1.0..2.0), // size: length × width / height
                    rng.gen_range(2.0..4.0), // acceleration proxy
                    rng.gen_range(3.0..6.0), // fuel consumption (enters negatively)
                ],
            )
        })
        .collect()
}

/// Synthetic products for the log-income automobile system
/// (operating cost, hp/weight, size; costs in thousands of 1983 USD).
pub fn synthetic_blp_products(j: usize, f_count: usize, seed: u64) -> Vec<Product> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..j)
        .map(|i| {
            named_product(
                format!("car-{}", i + 1),
                firm_of(i, j, f_count),
                rng.gen_range(5.0..15.0),
                vec![
                    rng.gen_range(2.0..6.0),  // miles per dollar (operating cost)
                    rng.gen_range(0.3..0.6),  // horsepower / weight
                    rng.gen_range(1.0..1.6),  // size
                ],
            )
        })
        .collect()
}

/// Linear-utility automobile scenario from the published lognormal
/// coefficient table; no outside good, fuel consumption entering
/// negatively, currency 1980 USD.
pub fn boyd80(s: usize, seed: u64, products: Vec<Product>) -> Result<Scenario> {
    for p in &products {
        if p.characteristics.len() != 3 {
            return Err(Error::Config(
                "the linear automobile system expects exactly 3 characteristics".into(),
            ));
        }
    }
    Ok(Scenario {
        name: "boyd80".into(),
        description: "Linear-utility automobile demand with lognormal random coefficients"
            .into(),
        currency: "1980 USD".into(),
        metadata: BTreeMap::new(),
        products,
        model: ModelSpec::LinearSampled {
            s,
            seed,
            log_means: BOYD80_LOG_MEANS.to_vec(),
            log_stds: BOYD80_LOG_STDS.to_vec(),
            characteristic_signs: vec![1.0, 1.0, -1.0],
            outside: None,
        },
        default_init: InitStrategy::UniformCostBox { seed },
    })
}

/// Log-income automobile scenario from the published coefficient table;
/// lognormal income (reservation price), normal tastes, currency in
/// thousands of 1983 USD.
pub fn blp95(
    s: usize,
    seed: u64,
    products: Vec<Product>,
    income_log_mean: Option<f64>,
) -> Result<Scenario> {
    for p in &products {
        if p.characteristics.len() != 3 {
            return Err(Error::Config(
                "the log-income automobile system expects exactly 3 characteristics".into(),
            ));
        }
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("fuel_price_1983_usd".into(), FUEL_PRICE_1983_USD);
    Ok(Scenario {
        name: "blp95".into(),
        description:
            "Log-income automobile demand: lognormal income, normal taste coefficients".into(),
        currency: "thousands of 1983 USD".into(),
        metadata,
        products,
        model: ModelSpec::LogIncomeSampled {
            s,
            seed,
            alpha: BLP95_ALPHA,
            income_log_mean: income_log_mean.unwrap_or(BLP95_INCOME_LOG_MEAN),
            income_log_std: BLP95_INCOME_LOG_STD,
            beta_means: BLP95_BETA_MEANS.to_vec(),
            beta_stds: BLP95_BETA_STDS.to_vec(),
            beta0_mean: BLP95_BETA0.0,
            beta0_std: BLP95_BETA0.1,
        },
        default_init: InitStrategy::UniformBox { lo: 0.0, hi: BLP95_INIT_HI, seed },
    })
}

/// The desk-scale log-income cross-validation market: 10 products, 3
/// firms, fixed product set, draw seed supplied by the caller.
pub fn blp_desk(s: usize, seed: u64) -> Result<Scenario> {
    let mut sc = blp95(s, seed, synthetic_blp_products(10, 3, 7), None)?;
    sc.name = "blp-desk".into();
    sc.description =
        "Synthetic 10-product, 3-firm log-income market for cross-method validation".into();
    sc.default_init = InitStrategy::AtCosts;
    Ok(sc)
}

/// One-draw Logit monopoly `u_j = −α p_j + v_j` with outside utility `ϑ`:
/// the fixed-point-iteration convergence example. At the solution, the
/// η iteration's Jacobian has spectral radius `Σ_j e^{u_j(p*)−ϑ}` while
/// the ζ iteration's vanishes.
pub fn logit_monopoly_convexam(alpha: f64, v: &[f64], theta: f64, costs: &[f64]) -> Scenario {
    let j = v.len();
    assert_eq!(j, costs.len(), "one cost per product");
    let products = (0..j)
        .map(|i| {
            // One-hot characteristics give product i non-price utility v_i.
            let mut x = vec![0.0; j];
            x[i] = 1.0;
            named_product(format!("good-{}", i + 1), 0, costs[i], x)
        })
        .collect();
    Scenario {
        name: "convexam".into(),
        description: "One-draw Logit monopoly for fixed-point convergence analysis".into(),
        currency: "abstract units".into(),
        metadata: BTreeMap::new(),
        products,
        model: ModelSpec::LinearDraws {
            draws: vec![(alpha, v.to_vec())],
            characteristic_signs: vec![1.0; j],
            outside: Some(theta),
        },
        default_init: InitStrategy::AtCosts,
    }
}

/// The η iteration's spectral radius formula for the one-draw Logit
/// monopoly: `Σ_j e^{u_j(p_j) − ϑ}` evaluated at given prices.
pub fn convexam_spectral_radius(alpha: f64, v: &[f64], theta: f64, p: &[f64]) -> f64 {
    v.iter().zip(p).map(|(&vj, &pj)| (-alpha * pj + vj - theta).exp()).sum()
}

/// Weak-outside-good preset: inside share above 1/2 at the optimum, so
/// η-FPI is locally repelled while ζ-FPI converges.
pub fn convexam_weak_outside() -> Scenario {
    let mut sc = logit_monopoly_convexam(1.0, &[5.0, 5.0], 0.0, &[0.0, 0.0]);
    sc.name = "convexam-weak-outside".into();
    sc
}

/// Strong-outside-good preset: outside good dominant, η-FPI converges.
pub fn convexam_strong_outside() -> Scenario {
    let mut sc = logit_monopoly_convexam(1.0, &[0.0, 0.0], 0.0, &[0.0, 0.0]);
    sc.name = "convexam-strong-outside".into();
    sc
}

/// Single-product preset.
pub fn convexam_single_product() -> Scenario {
    let mut sc = logit_monopoly_convexam(2.0, &[0.0], 0.0, &[0.0]);
    sc.name = "convexam-single-product".into();
    sc
}

/// Two-product, one-draw log-income monopoly: `u_j = α log(ς − p_j) + v_j`
/// with finite outside utility `ϑ`. Its unique interior equilibrium is the
/// only fixed point of the extended ζ map; the single-product sub-problem
/// optima are not.
pub fn blp_vi_example(varsigma: f64, c: f64, v1: f64, v2: f64, alpha: f64) -> Result<Scenario> {
    if !(alpha > 1.0 && varsigma > 0.0) {
        return Err(Error::Config("the example needs α > 1 and ς > 0".into()));
    }
    let theta = 0.0;
    // ϑ = α log ς + β₀  ⇒  β₀ = ϑ − α log ς.
    let beta0 = theta - alpha * varsigma.ln();
    let products = vec![
        named_product("good-1".into(), 0, c, vec![1.0, 0.0]),
        named_product("good-2".into(), 0, c, vec![0.0, 1.0]),
    ];
    Ok(Scenario {
        name: "viexample".into(),
        description:
            "Two-product log-income monopoly distinguishing equilibria from other \
             variational-inequality solutions"
                .into(),
        currency: "abstract units".into(),
        metadata: BTreeMap::new(),
        products,
        model: ModelSpec::LogIncomeDraws {
            alpha,
            draws: vec![(varsigma, vec![v1, v2], beta0)],
        },
        default_init: InitStrategy::AtCosts,
    })
}

/// Names addressable from the CLI.
pub fn preset_names() -> &'static [&'static str] {
    &[
        "boyd80",
        "blp95",
        "blp-desk",
        "convexam-strong-outside",
        "convexam-weak-outside",
        "convexam-single-product",
        "viexample",
    ]
}

/// Builds a preset by name. `s` and `seed` control sampling where the
/// preset draws coefficients; the explicit-draw examples ignore them.
pub fn preset(name: &str, s: usize, seed: u64) -> Result<Scenario> {
    match name {
        "boyd80" => boyd80(s, seed, synthetic_boyd_products(6, 2, 11)),
        "blp95" => blp95(s, seed, synthetic_blp_products(6, 2, 13), None),
        "blp-desk" => blp_desk(s, seed),
        "convexam-strong-outside" => Ok(convexam_strong_outside()),
        "convexam-weak-outside" => Ok(convexam_weak_outside()),
        "convexam-single-product" => Ok(convexam_single_product()),
        "viexample" => blp_vi_example(10.0, 1.0, 0.0, 0.0, 2.0),
        other => Err(Error::Config(format!(
            "unknown preset '{other}'; valid presets: {}",
            preset_names().join(", ")
        ))),
    }
}

/// Deterministic random instance for derivative/identity sweeps:
/// J ∈ 2..=6, F ∈ 1..=3, S ∈ 20..=100, alternating between the two model
/// families (linear models get an outside good so the block-norm bound
/// applies).
pub fn random_instance(index: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + index);
    let j = rng.gen_range(2..=6usize);
    let f_count = rng.gen_range(1..=3usize).min(j);
    let s = rng.gen_range(20..=100usize);
    let seed = rng.gen::<u64>();
    let k = 2usize;
    let products: Vec<Product> = (0..j)
        .map(|i| {
            named_product(
                format!("p{}", i + 1),
                firm_of(i, j, f_count),
                rng.gen_range(0.5..2.0),
                (0..k).map(|_| rng.gen_range(0.2..1.5)).collect(),
            )
        })
        .collect();
    let model = if index % 2 == 0 {
        ModelSpec::LinearSampled {
            s,
            seed,
            log_means: vec![
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-1.0..0.5),
                rng.gen_range(-1.0..0.5),
            ],
            log_stds: vec![0.3, 0.4, 0.4],
            characteristic_signs: vec![1.0, -1.0],
            outside: Some(rng.gen_range(-0.5..0.5)),
        }
    } else {
        ModelSpec::LogIncomeSampled {
            s,
            seed,
            alpha: rng.gen_range(1.5..3.0),
            income_log_mean: (8.0f64).ln(),
            income_log_std: 0.4,
            beta_means: vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
            beta_stds: vec![0.3, 0.3],
            beta0_mean: rng.gen_range(-1.0..0.0),
            beta0_std: 0.3,
        }
    };
    Ok(Scenario {
        name: format!("random-{index}"),
        description: "Randomized instance for derivative and identity sweeps".into(),
        currency: "abstract units".into(),
        metadata: BTreeMap::new(),
        products,
        model,
        default_init: InitStrategy::AtCosts,
    })
}
