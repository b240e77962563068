//! Random problem families shared by the integration tests.
#![allow(dead_code)]

use ipfix::rng::Rng;
use ipfix::{ConstraintBlock, IpInstance, Relation, Sense, SparseMatrix};
use rand::Rng as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadratic {
    None,
    Symmetric,
    General,
}

/// Random instance with `n` in `1..=max_n`. Constraint coefficients and
/// right-hand sides are small integers so row feasibility is decided
/// exactly in floating point.
pub fn random_instance(rng: &mut Rng, max_n: usize, quadratic: Quadratic) -> IpInstance {
    let n = rng.random_range(1..=max_n);
    let sense = if rng.random::<bool>() { Sense::Maximize } else { Sense::Minimize };
    let linear: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a = match quadratic {
        Quadratic::None => None,
        Quadratic::Symmetric => {
            let mut t = Vec::new();
            for i in 0..n {
                for j in i..n {
                    if rng.random::<f64>() < 0.3 {
                        let v = rng.random_range(-1.0..1.0);
                        t.push((i, j, v));
                        if i != j {
                            t.push((j, i, v));
                        }
                    }
                }
            }
            Some(SparseMatrix::from_triplets(n, n, &t).unwrap())
        }
        Quadratic::General => {
            let mut t = Vec::new();
            for k in 0..n * n {
                if rng.random::<f64>() < 0.3 {
                    t.push((k / n, k % n, rng.random_range(-1.0..1.0)));
                }
            }
            Some(SparseMatrix::from_triplets(n, n, &t).unwrap())
        }
    };
    let constraints = if rng.random::<f64>() < 0.8 {
        let m = rng.random_range(0..=6);
        let relation = [Relation::Le, Relation::Ge, Relation::Eq][rng.random_range(0..3)];
        let mut t = Vec::new();
        for k in 0..m * n {
            if rng.random::<f64>() < 0.4 {
                t.push((k / n, k % n, f64::from(rng.random_range(-2i32..=2))));
            }
        }
        let d = (0..m).map(|_| f64::from(rng.random_range(-2i32..=3))).collect();
        Some(ConstraintBlock::new(SparseMatrix::from_triplets(m, n, &t).unwrap(), d, relation).unwrap())
    } else {
        None
    };
    let symmetric = quadratic == Quadratic::Symmetric;
    let offset = rng.random_range(-1.0..1.0);
    IpInstance::new(sense, a, symmetric, linear, constraints, offset).unwrap()
}

pub fn random_binary(rng: &mut Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| u8::from(rng.random::<bool>())).collect()
}

/// Random subset of `candidates` with random values.
pub fn random_decisions(rng: &mut Rng, candidates: &[usize]) -> Vec<(usize, bool)> {
    let p = rng.random::<f64>();
    let mut out = Vec::new();
    for &i in candidates {
        if rng.random::<f64>() < p {
            out.push((i, rng.random::<bool>()));
        }
    }
    out
}

/// Row-wise satisfaction pattern of `x`.
pub fn row_pattern<T: Copy + Into<f64>>(inst: &IpInstance, x: &[T]) -> Vec<bool> {
    match &inst.constraints {
        None => Vec::new(),
        Some(c) => {
            let xf: Vec<f64> = x.iter().map(|&v| v.into()).collect();
            let mut lhs = vec![0.0; c.m()];
            c.matrix.mul_vec(&xf, &mut lhs);
            lhs.iter().zip(&c.rhs).map(|(&l, &d)| c.relation.holds(l, d)).collect()
        }
    }
}

/// Full vector from fixed decisions plus a completion of the free positions.
pub fn combine(n: usize, decisions: &[(usize, bool)], free: &[usize], x_free: &[u8]) -> Vec<u8> {
    let mut x = vec![0u8; n];
    for &(i, v) in decisions {
        x[i] = u8::from(v);
    }
    for (&i, &v) in free.iter().zip(x_free) {
        x[i] = v;
    }
    x
}

/// Set-packing instance small enough for exhaustive search.
pub fn tiny_auction(seed: u64, n: usize) -> IpInstance {
    let cfg = ipfix::instances::GeneratorConfig {
        n,
        items: (n / 2).max(2),
        density: 0.3,
        seed,
        ..Default::default()
    };
    ipfix::instances::generate_auction(&cfg).unwrap()
}
