//! Products, firms, ownership partition, and unit costs.
//!
//! A [`Market`] owns the index bookkeeping used by every block-structured
//! matrix in the crate: the map `f(j)` from product to owning firm, the
//! per-firm product blocks `𝒥_f`, and the intra-firm mask that defines the
//! support of the ownership-restricted Jacobian blocks.
//!
//! Indices are 0-based internally; all file I/O and reports use 1-based
//! indices.

use crate::{Error, Result, Vector};

/// One product: display name, owning firm, unit cost, and non-price
/// characteristics.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Product {
    /// Display name (used in reports).
    pub name: String,
    /// Owning firm, 0-based.
    pub firm: usize,
    /// Non-negative unit cost (currency units of the scenario).
    pub cost: f64,
    /// Non-price characteristics `x_j` (length K, shared across products).
    pub characteristics: Vec<f64>,
}

/// A differentiated-product market: `J` products partitioned among `F`
/// firms, with unit costs and characteristics.
///
/// Immutable after construction; safe to share read-only across threads.
#[derive(Debug, Clone)]
pub struct Market {
    products: Vec<Product>,
    firm_count: usize,
    /// `blocks[f]` lists the products owned by firm `f`, ascending.
    blocks: Vec<Vec<usize>>,
}

impl Market {
    /// Builds a market, validating the ownership partition.
    ///
    /// Firm indices must cover `0..F` with every firm owning at least one
    /// product; costs must be non-negative and finite; every product must
    /// carry the same number of characteristics.
    pub fn new(products: Vec<Product>) -> Result<Self> {
        if products.is_empty() {
            return Err(Error::Invalid("market must contain at least one product".into()));
        }
        let k = products[0].characteristics.len();
        let firm_count = products.iter().map(|p| p.firm).max().unwrap() + 1;
        let mut blocks = vec![Vec::new(); firm_count];
        for (j, p) in products.iter().enumerate() {
            if !(p.cost.is_finite() && p.cost >= 0.0) {
                return Err(Error::Invalid(format!(
                    "product {} has invalid cost {}",
                    j + 1,
                    p.cost
                )));
            }
            if p.characteristics.len() != k {
                return Err(Error::Invalid(format!(
                    "product {} has {} characteristics, expected {}",
                    j + 1,
                    p.characteristics.len(),
                    k
                )));
            }
            if p.characteristics.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid(format!("product {} has non-finite characteristics", j + 1)));
            }
            blocks[p.firm].push(j);
        }
        if let Some(f) = blocks.iter().position(|b| b.is_empty()) {
            return Err(Error::Invalid(format!("firm {} owns no products", f + 1)));
        }
        Ok(Market { products, firm_count, blocks })
    }

    /// Number of products `J`.
    pub fn product_count(&self) -> usize {
        self.products.len()
    }

    /// Number of firms `F`.
    pub fn firm_count(&self) -> usize {
        self.firm_count
    }

    /// Owning firm `f(j)` of product `j` (0-based).
    pub fn owner(&self, j: usize) -> usize {
        self.products[j].firm
    }

    /// The products.
    pub fn products(&self) -> &[Product] {
        &self.products
    }

    /// Unit costs as a vector.
    pub fn costs(&self) -> Vector {
        Vector::from_iterator(self.products.len(), self.products.iter().map(|p| p.cost))
    }

    /// The ownership partition in ascending firm order: `(f, 𝒥_f)` pairs
    /// with each product list sorted ascending. The concatenation of the
    /// blocks is a permutation of `0..J`.
    pub fn firm_blocks(&self) -> Vec<(usize, &[usize])> {
        self.blocks.iter().enumerate().map(|(f, b)| (f, b.as_slice())).collect()
    }

    /// Products owned by firm `f`, ascending.
    pub fn firm_products(&self, f: usize) -> &[usize] {
        &self.blocks[f]
    }

    /// `J×J` boolean mask: entry `(j,k)` is true iff products `j` and `k`
    /// are offered by the same firm. Symmetric with an all-true diagonal;
    /// this is the support pattern of the ownership-restricted Jacobian.
    pub fn intra_firm_mask(&self) -> Vec<Vec<bool>> {
        let j_count = self.products.len();
        let mut mask = vec![vec![false; j_count]; j_count];
        for (j, row) in mask.iter_mut().enumerate() {
            for (k, cell) in row.iter_mut().enumerate() {
                *cell = self.products[j].firm == self.products[k].firm;
            }
        }
        mask
    }

    /// True iff products `j` and `k` have the same owner.
    #[inline]
    pub fn same_firm(&self, j: usize, k: usize) -> bool {
        self.products[j].firm == self.products[k].firm
    }
}

/// A vector of `J` finite, non-negative prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector(pub Vector);

impl PriceVector {
    /// Validates finiteness and non-negativity.
    pub fn new(p: Vector) -> Result<Self> {
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Invalid("prices must be finite and non-negative".into()));
        }
        Ok(PriceVector(p))
    }

    /// The underlying vector.
    pub fn as_vector(&self) -> &Vector {
        &self.0
    }
}
