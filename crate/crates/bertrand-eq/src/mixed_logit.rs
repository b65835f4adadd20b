//! Utility models, finite-sample consumer populations, and per-sample Logit
//! choice probabilities.
//!
//! A consumer draw `θ_s` induces product utilities `u_j = w_j(θ,p_j) + v_j(θ)`
//! where `w` is the price utility (strictly decreasing in price where finite)
//! and `v` collects the non-price characteristics. An optional outside good
//! carries utility `ϑ(θ)`; a reservation price `ς(θ)` marks the price at or
//! above which `w = −∞` and the purchase probability is zero. Market demand
//! is the average of the per-draw Logit probabilities over `S` draws.

use crate::{Error, Market, Matrix, Result, Vector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Marginal distribution of one coefficient column.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Marginal {
    /// `exp(m + s·z)` with `z` standard normal.
    LogNormal {
        /// Mean of the underlying normal.
        log_mean: f64,
        /// Standard deviation of the underlying normal (≥ 0).
        log_std: f64,
    },
    /// `m + s·z` with `z` standard normal.
    Normal {
        /// Mean.
        mean: f64,
        /// Standard deviation (≥ 0).
        std: f64,
    },
}

/// A table of `S` consumer draws: one row per draw, one named column per
/// coefficient. Regenerating with the same seed and marginals reproduces
/// the table bitwise.
#[derive(Debug, Clone)]
pub struct SampleSet {
    /// RNG seed the table was generated from.
    pub seed: u64,
    /// Column names, one per coefficient.
    pub columns: Vec<String>,
    /// `S × columns.len()` coefficient values.
    pub data: Matrix,
}

/// Uniform deviate in (0,1) from one 64-bit RNG output: the top 53 bits,
/// centered away from 0 and 1 so the inverse normal CDF stays finite.
#[inline]
fn uniform_open01(r: &mut impl RngCore) -> f64 {
    ((r.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse CDF of the standard normal distribution.
///
/// Acklam's rational approximation (central region plus two tail
/// expansions; relative error below 1.2e-9 on (0,1)), refined by one
/// Halley step against an erfc-based CDF so quantiles are accurate to
/// close to machine precision. Chosen over library samplers so draws are
/// a pure, documented function of the uniform stream and therefore
/// reproducible across platforms and dependency versions.
pub fn normal_inverse_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal_inverse_cdf requires p in (0,1)");
    // Acklam coefficients.
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // One Halley refinement: e = Φ(x) − p, with Φ from erfc.
    let e = 0.5 * erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Complementary error function, W. J. Cody's three-region rational
/// minimax approximations (relative error near machine precision), so the
/// Halley refinement above actually improves on the raw quantile
/// approximation.
fn erfc(x: f64) -> f64 {
    const SQRPI: f64 = 5.641_895_835_477_562_9e-1; // 1/√π
    let z = x.abs();
    let result = if z <= 0.46875 {
        // erfc = 1 − erf with erf from the small-argument expansion.
        const A: [f64; 5] = [
            3.161_123_743_870_565_6e0,
            1.138_641_541_510_501_6e2,
            3.774_852_376_853_020_2e2,
            3.209_377_589_138_469_5e3,
            1.857_777_061_846_031_5e-1,
        ];
        const B: [f64; 4] = [
            2.360_129_095_234_412_1e1,
            2.440_246_379_344_441_7e2,
            1.282_616_526_077_372_3e3,
            2.844_236_833_439_170_6e3,
        ];
        let y = z * z;
        let mut num = A[4] * y;
        let mut den = y;
        for i in 0..3 {
            num = (num + A[i]) * y;
            den = (den + B[i]) * y;
        }
        return 1.0 - x * (num + A[3]) / (den + B[3]);
    } else if z <= 4.0 {
        const C: [f64; 9] = [
            5.641_884_969_886_700_9e-1,
            8.883_149_794_388_375_9e0,
            6.611_919_063_714_163e1,
            2.986_351_381_974_001_3e2,
            8.819_522_212_417_691e2,
            1.712_047_612_634_070_6e3,
            2.051_078_377_826_071_5e3,
            1.230_339_354_797_997_2e3,
            2.153_115_354_744_038_5e-8,
        ];
        const D: [f64; 8] = [
            1.574_492_611_070_983_5e1,
            1.176_939_508_913_125e2,
            5.371_811_018_620_098_6e2,
            1.621_389_574_566_690_2e3,
            3.290_799_235_733_459_6e3,
            4.362_619_090_143_247e3,
            3.439_367_674_143_721_6e3,
            1.230_339_354_803_749_4e3,
        ];
        let mut num = C[8] * z;
        let mut den = z;
        for i in 0..7 {
            num = (num + C[i]) * z;
            den = (den + D[i]) * z;
        }
        (-z * z).exp() * (num + C[7]) / (den + D[7])
    } else {
        const P: [f64; 6] = [
            3.053_266_349_612_323_4e-1,
            3.603_448_999_498_044_4e-1,
            1.257_817_261_112_292_5e-1,
            1.608_378_514_874_227_7e-2,
            6.587_491_615_298_378e-4,
            1.631_538_713_730_209_8e-2,
        ];
        const Q: [f64; 5] = [
            2.568_520_192_289_822_4e0,
            1.872_952_849_923_460_5e0,
            5.279_051_029_514_284_1e-1,
            6.051_834_131_244_132e-2,
            2.335_204_976_268_691_8e-3,
        ];
        let y = 1.0 / (z * z);
        let mut num = P[5] * y;
        let mut den = y;
        for i in 0..4 {
            num = (num + P[i]) * y;
            den = (den + Q[i]) * y;
        }
        let r = y * (num + P[4]) / (den + Q[4]);
        (-z * z).exp() * (SQRPI - r) / z
    };
    if x >= 0.0 {
        result
    } else {
        2.0 - result
    }
}

impl SampleSet {
    /// Draws `s` rows from the given named marginals, deterministically in
    /// `seed`: values are generated row-major from a seeded ChaCha8 stream
    /// through [`normal_inverse_cdf`].
    pub fn sample(marginals: &[(String, Marginal)], s: usize, seed: u64) -> Result<Self> {
        if s == 0 {
            return Err(Error::Invalid("sample count S must be positive".into()));
        }
        for (name, m) in marginals {
            let sd = match m {
                Marginal::LogNormal { log_std, .. } => *log_std,
                Marginal::Normal { std, .. } => *std,
            };
            if !(sd.is_finite() && sd >= 0.0) {
                return Err(Error::Invalid(format!("column {name} has invalid std dev {sd}")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Matrix::zeros(s, marginals.len());
        for row in 0..s {
            for (col, (_, m)) in marginals.iter().enumerate() {
                let z = normal_inverse_cdf(uniform_open01(&mut rng));
                data[(row, col)] = match *m {
                    Marginal::LogNormal { log_mean, log_std } => (log_mean + log_std * z).exp(),
                    Marginal::Normal { mean, std } => mean + std * z,
                };
            }
        }
        Ok(SampleSet { seed, columns: marginals.iter().map(|(n, _)| n.clone()).collect(), data })
    }

    /// Number of draws `S`.
    pub fn draw_count(&self) -> usize {
        self.data.nrows()
    }

    /// Writes the table as CSV (header row of column names, one row per
    /// draw) so a run can be replayed exactly.
    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.columns).map_err(|e| Error::Config(e.to_string()))?;
        for row in 0..self.data.nrows() {
            let rec: Vec<String> =
                (0..self.data.ncols()).map(|c| format!("{:.17e}", self.data[(row, c)])).collect();
            wtr.write_record(&rec).map_err(|e| Error::Config(e.to_string()))?;
        }
        wtr.flush().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Utility models
// ---------------------------------------------------------------------------

/// Price utility of one draw at one price: value and first two price
/// derivatives, plus whether the price is below the draw's reservation
/// price (`alive == false` means `w = −∞` and zero purchase probability).
#[derive(Debug, Clone, Copy)]
pub struct PriceUtility {
    /// `w(θ,p)` (only meaningful when `alive`).
    pub w: f64,
    /// `∂w/∂p`, strictly negative where finite.
    pub dw: f64,
    /// `∂²w/∂p²`.
    pub d2w: f64,
    /// False iff `p ≥ ς(θ)`.
    pub alive: bool,
}

/// A utility model over a fixed set of consumer draws.
pub trait UtilityModel: Send + Sync {
    /// Number of draws `S`.
    fn draw_count(&self) -> usize;
    /// Price utility `w_j(θ_s, p)` and derivatives.
    fn price_utility(&self, s: usize, p: f64) -> PriceUtility;
    /// Non-price utility `v_j(θ_s)` for a product with characteristics `x`.
    fn nonprice_utility(&self, s: usize, x: &[f64]) -> f64;
    /// Outside-good utility `ϑ(θ_s)`; `None` means no outside good (`−∞`).
    fn outside_utility(&self, s: usize) -> Option<f64>;
    /// Reservation price `ς(θ_s)` (may be `+∞`).
    fn reservation_price(&self, s: usize) -> f64;
    /// Largest reservation price `ς*` over the draws.
    fn max_reservation_price(&self) -> f64 {
        (0..self.draw_count()).map(|s| self.reservation_price(s)).fold(f64::NEG_INFINITY, f64::max)
    }
    /// True iff any draw has a finite outside-good utility.
    fn has_outside_good(&self) -> bool {
        (0..self.draw_count()).any(|s| self.outside_utility(s).is_some())
    }
}

/// Linear-in-price utility `u = −α·p + Σ_k sign_k·β_k·x_k`, with per-draw
/// positive price coefficient `α` and taste vector `β`; no reservation
/// price (`ς = ∞`). The outside-good utility is optional: the classic
/// random-coefficients automobile system built on this form has none,
/// while the one-draw Logit monopoly presets use a finite value.
#[derive(Debug, Clone)]
pub struct LinearUtility {
    /// Per-draw `(α, β)` with `α > 0`.
    pub draws: Vec<(f64, Vec<f64>)>,
    /// Sign applied to each characteristic in the utility sum (±1).
    pub characteristic_signs: Vec<f64>,
    /// Outside-good utility `ϑ`, identical across draws; `None` = no
    /// outside good.
    pub outside: Option<f64>,
}

impl UtilityModel for LinearUtility {
    fn draw_count(&self) -> usize {
        self.draws.len()
    }

    fn price_utility(&self, s: usize, p: f64) -> PriceUtility {
        let alpha = self.draws[s].0;
        PriceUtility { w: -alpha * p, dw: -alpha, d2w: 0.0, alive: true }
    }

    fn nonprice_utility(&self, s: usize, x: &[f64]) -> f64 {
        let beta = &self.draws[s].1;
        beta.iter().zip(x).zip(&self.characteristic_signs).map(|((b, x), sg)| sg * b * x).sum()
    }

    fn outside_utility(&self, _s: usize) -> Option<f64> {
        self.outside
    }

    fn reservation_price(&self, _s: usize) -> f64 {
        f64::INFINITY
    }
}

/// Log-income price utility `w = α·log(φ − p)` for `p < φ`, `−∞` otherwise,
/// with global `α > 1`, per-draw income `φ > 0` (the reservation price),
/// taste vector `β`, and outside-good utility `ϑ = α·log φ + β₀`.
///
/// `Dw = −α/(φ−p)` blows up as `p ↑ φ`, but every aggregate only uses it
/// multiplied by the per-draw probability, which vanishes faster when
/// `α > 1`; no clamping is applied.
#[derive(Debug, Clone)]
pub struct LogIncomeUtility {
    /// Global price coefficient, must exceed 1.
    pub alpha: f64,
    /// Per-draw `(φ, β, β₀)` with `φ > 0`.
    pub draws: Vec<(f64, Vec<f64>, f64)>,
}

impl LogIncomeUtility {
    /// Validates `α > 1` and `φ > 0` for every draw.
    pub fn new(alpha: f64, draws: Vec<(f64, Vec<f64>, f64)>) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::Invalid(format!(
                "log-income price coefficient must exceed 1, got {alpha}"
            )));
        }
        if draws.iter().any(|(phi, _, _)| !(*phi > 0.0)) {
            return Err(Error::Invalid("all income draws must be positive".into()));
        }
        Ok(LogIncomeUtility { alpha, draws })
    }
}

impl UtilityModel for LogIncomeUtility {
    fn draw_count(&self) -> usize {
        self.draws.len()
    }

    fn price_utility(&self, s: usize, p: f64) -> PriceUtility {
        let phi = self.draws[s].0;
        if p >= phi {
            return PriceUtility { w: f64::NEG_INFINITY, dw: 0.0, d2w: 0.0, alive: false };
        }
        let gap = phi - p;
        PriceUtility {
            w: self.alpha * gap.ln(),
            dw: -self.alpha / gap,
            d2w: -self.alpha / (gap * gap),
            alive: true,
        }
    }

    fn nonprice_utility(&self, s: usize, x: &[f64]) -> f64 {
        self.draws[s].1.iter().zip(x).map(|(b, x)| b * x).sum()
    }

    fn outside_utility(&self, s: usize) -> Option<f64> {
        let (phi, _, beta0) = &self.draws[s];
        Some(self.alpha * phi.ln() + beta0)
    }

    fn reservation_price(&self, s: usize) -> f64 {
        self.draws[s].0
    }
}

/// Reservation prices sorted ascending (ties broken by draw index) as
/// `(draw, ς)` pairs, plus `ς* = max ς`.
pub fn reservation_order(model: &dyn UtilityModel) -> (Vec<(usize, f64)>, f64) {
    let mut order: Vec<(usize, f64)> =
        (0..model.draw_count()).map(|s| (s, model.reservation_price(s))).collect();
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let max = order.last().map(|&(_, v)| v).unwrap_or(f64::NEG_INFINITY);
    (order, max)
}

// ---------------------------------------------------------------------------
// Per-sample Logit evaluation
// ---------------------------------------------------------------------------

/// Per-sample Logit probabilities and price-utility derivatives at one
/// price vector.
#[derive(Debug, Clone)]
pub struct LogitMatrix {
    /// `S×J` choice probabilities `P_j^L(θ_s, p)`; zero where `p_j ≥ ς(θ_s)`.
    pub l: Matrix,
    /// Length-`S` outside-good probabilities (zero when no outside good).
    pub out: Vector,
    /// `S×J` first price-utility derivatives `Dw_j(θ_s, p_j)`; zero where dead.
    pub d: Matrix,
    /// `S×J` second price-utility derivatives; zero where dead.
    pub d2: Matrix,
    /// Draw indices whose row is entirely dead with no outside good
    /// (the row of `l` is zero and carries no probability mass).
    pub dead_rows: Vec<usize>,
}

/// Evaluates the per-sample Logit probability matrix at prices `p`.
///
/// Each row is computed with a max-utility shift so the exponentials cannot
/// overflow; dead products (price at or above the draw's reservation price)
/// are handled with an explicit mask rather than `−∞` arithmetic.
pub fn logit_eval(model: &dyn UtilityModel, market: &Market, p: &Vector) -> LogitMatrix {
    let s_count = model.draw_count();
    let j_count = market.product_count();
    assert_eq!(p.len(), j_count, "price vector length must equal product count");
    let mut l = Matrix::zeros(s_count, j_count);
    let mut out = Vector::zeros(s_count);
    let mut d = Matrix::zeros(s_count, j_count);
    let mut d2 = Matrix::zeros(s_count, j_count);
    let mut dead_rows = Vec::new();
    let mut u = vec![0.0f64; j_count];
    let mut alive = vec![false; j_count];
    for s in 0..s_count {
        let theta = model.outside_utility(s);
        let mut max_u = theta.unwrap_or(f64::NEG_INFINITY);
        for j in 0..j_count {
            let pu = model.price_utility(s, p[j]);
            alive[j] = pu.alive;
            if pu.alive {
                u[j] = pu.w + model.nonprice_utility(s, &market.products()[j].characteristics);
                max_u = max_u.max(u[j]);
                d[(s, j)] = pu.dw;
                d2[(s, j)] = pu.d2w;
            }
        }
        if max_u == f64::NEG_INFINITY {
            // Every product dead and no outside good: zero row.
            dead_rows.push(s);
            continue;
        }
        let e_out = theta.map(|t| (t - max_u).exp()).unwrap_or(0.0);
        let mut denom = e_out;
        for j in 0..j_count {
            if alive[j] {
                let e = (u[j] - max_u).exp();
                l[(s, j)] = e;
                denom += e;
            }
        }
        for j in 0..j_count {
            l[(s, j)] /= denom;
        }
        out[s] = e_out / denom;
    }
    LogitMatrix { l, out, d, d2, dead_rows }
}
