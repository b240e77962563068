use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ConstraintBlock, IpInstance, Relation, Sense, SparseMatrix};
use crate::error::{Error, Result};
use crate::rng;

/// Standard deviation of the Gaussian noise added to grid-MRF unaries.
pub const MRF_NOISE_STD: f64 = 1.0;

/// Settings of the set-packing (combinatorial auction) generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Number of bids, i.e. binary variables.
    pub n: usize,
    /// Number of items on sale.
    pub items: usize,
    /// Ratio between the item count and the nominal constraint count. It is
    /// recorded with the instance set but does not alter generation.
    pub xi: f64,
    /// Expected fraction of the items contained in one bid.
    pub density: f64,
    pub price_scale: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 500,
            items: 100,
            xi: 1.0,
            density: 0.05,
            price_scale: 1.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "need at least one bid"));
        }
        if self.items == 0 {
            return Err(Error::invalid("items", "need at least one item"));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::invalid("density", "must lie in (0, 1]"));
        }
        if !(self.price_scale > 0.0 && self.price_scale.is_finite()) {
            return Err(Error::invalid("price_scale", "must be positive"));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::invalid("xi", "must be positive"));
        }
        Ok(())
    }
}

/// Random set-packing instance: `max b^T x  s.t.  C x <= 1`.
///
/// Each bid includes every item independently with probability `density`
/// (one uniformly drawn item if that leaves it empty). Its price is
/// `price_scale * |bid| * (1 + U(0, 0.5))`. Rows of `C` are the items that at
/// least one bid references, in item order.
pub fn generate_auction(cfg: &GeneratorConfig) -> Result<IpInstance> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed);
    let mut bids: Vec<Vec<usize>> = Vec::with_capacity(cfg.n);
    let mut prices = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let mut bundle: Vec<usize> = (0..cfg.items)
            .filter(|_| rng.random::<f64>() < cfg.density)
            .collect();
        if bundle.is_empty() {
            bundle.push(rng.random_range(0..cfg.items as u64) as usize);
        }
        let premium = 1.0 + 0.5 * rng.random::<f64>();
        prices.push(cfg.price_scale * bundle.len() as f64 * premium);
        bids.push(bundle);
    }

    let mut referenced = vec![false; cfg.items];
    for &item in bids.iter().flatten() {
        referenced[item] = true;
    }
    let mut row_of_item = vec![usize::MAX; cfg.items];
    let mut m = 0;
    for (item, _) in referenced.iter().enumerate().filter(|(_, &used)| used) {
        row_of_item[item] = m;
        m += 1;
    }
    let triplets: Vec<(usize, usize, f64)> = bids
        .iter()
        .enumerate()
        .flat_map(|(bid, bundle)| bundle.iter().map(move |&item| (item, bid)))
        .map(|(item, bid)| (row_of_item[item], bid, 1.0))
        .collect();
    let matrix = SparseMatrix::from_triplets(m, cfg.n, &triplets)?;
    let constraints = ConstraintBlock::new(matrix, vec![1.0; m], Relation::Le)?;
    IpInstance::new(Sense::Maximize, None, false, prices, Some(constraints), 0.0)
}

/// Binary segmentation energy `min x^T A x + b^T x` on a `width x height`
/// 4-connected grid.
///
/// `A = coupling * (D - W)` is the graph Laplacian with unit edge weights.
/// The unary term is `b = unary_strength * (mu + noise)` with `mu = -1` on
/// the right half of the image (label 1 preferred), `+1` on the left half,
/// and `noise ~ N(0, MRF_NOISE_STD^2)`. Pixel `(row, col)` is variable
/// `row * width + col`.
pub fn generate_grid_mrf(
    width: usize,
    height: usize,
    unary_strength: f64,
    coupling: f64,
    seed: u64,
) -> Result<IpInstance> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("grid", "width and height must be at least 1"));
    }
    if !(coupling >= 0.0 && coupling.is_finite()) {
        return Err(Error::invalid("coupling", "must be a finite non-negative number"));
    }
    if !unary_strength.is_finite() {
        return Err(Error::invalid("unary_strength", "must be finite"));
    }
    let n = width * height;
    let mut degree = vec![0.0; n];
    let mut triplets = Vec::new();
    for row in 0..height {
        for col in 0..width {
            let i = row * width + col;
            let mut link = |j: usize| {
                degree[i] += 1.0;
                degree[j] += 1.0;
                triplets.push((i, j, -coupling));
                triplets.push((j, i, -coupling));
            };
            if col + 1 < width {
                link(i + 1);
            }
            if row + 1 < height {
                link(i + width);
            }
        }
    }
    triplets.extend(degree.iter().enumerate().map(|(i, &d)| (i, i, coupling * d)));
    let laplacian = SparseMatrix::from_triplets(n, n, &triplets)?;

    let mut rng = rng::seeded(seed);
    let noise = Normal::new(0.0, MRF_NOISE_STD).expect("valid normal");
    let linear: Vec<f64> = (0..n)
        .map(|i| {
            let col = i % width;
            let mean = if 2 * col >= width { -1.0 } else { 1.0 };
            unary_strength * (mean + noise.sample(&mut rng))
        })
        .collect();
    let quadratic = if laplacian.nnz() > 0 { Some(laplacian) } else { None };
    let symmetric = quadratic.is_some();
    IpInstance::new(Sense::Minimize, quadratic, symmetric, linear, None, 0.0)
}

/// Upper bound on `max b^T x + offset  s.t.  C x <= d, x in [0,1]^n` for a
/// linear instance with nonnegative `C` and `d`.
///
/// Built from a feasible point of the LP dual `min d^T y + 1^T s` subject to
/// `C^T y + s >= b`: every row gets the price `y_r = max_i b_i / colsum_i`
/// over the bids it touches, and bids touching no row pay `s_i = b_i`. The
/// result is capped by the trivial bound `sum_i max(b_i, 0)`.
pub fn greedy_dual_bound(inst: &IpInstance) -> f64 {
    let positive: f64 = inst.linear.iter().map(|b| b.max(0.0)).sum();
    let Some(block) = &inst.constraints else {
        return positive + inst.offset;
    };
    let columns = block.matrix.transpose();
    let mut row_price = vec![0.0f64; block.m()];
    let mut uncovered = 0.0;
    for (i, &b) in inst.linear.iter().enumerate() {
        if b <= 0.0 {
            continue;
        }
        let (rows, vals) = columns.row(i);
        let colsum: f64 = vals.iter().sum();
        if colsum <= 0.0 {
            uncovered += b;
            continue;
        }
        for &r in rows {
            row_price[r] = row_price[r].max(b / colsum);
        }
    }
    let dual: f64 = row_price.iter().zip(&block.rhs).map(|(y, d)| y * d).sum::<f64>() + uncovered;
    dual.min(positive) + inst.offset
}
