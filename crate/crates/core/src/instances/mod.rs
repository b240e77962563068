//! Problem data model, generators, file I/O and the exhaustive oracle.
//!
//! An [`IpInstance`] is the binary program
//!
//! ```text
//! max | min   x^T A x + b^T x + offset
//! s.t.        C x (<= | >= | =) d,   x in {0,1}^n
//! ```
//!
//! where `A` and the constraint block are optional. The offset starts at
//! zero and absorbs the constant produced when variables are fixed, so every
//! objective the crate reports is in the units of the original problem.

mod brute;
mod generate;
mod io;
mod sparse;

pub use brute::{brute_force_solve, ExactSolution, BRUTE_FORCE_MAX_N};
pub use generate::{
    generate_auction, generate_grid_mrf, greedy_dual_bound, GeneratorConfig, MRF_NOISE_STD,
};
pub use io::{instance_to_json, parse_instance, read_instance, write_instance, InstanceFile};
pub use sparse::SparseMatrix;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row feasibility tolerance, applied to every relation.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "max")]
    Maximize,
    #[serde(rename = "min")]
    Minimize,
}

impl Sense {
    /// True when `candidate` is strictly better than `incumbent`.
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Sense::Maximize => candidate > incumbent,
            Sense::Minimize => candidate < incumbent,
        }
    }
}

/// Relation applied uniformly to every constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::Le => lhs <= rhs + FEASIBILITY_TOL,
            Relation::Ge => lhs >= rhs - FEASIBILITY_TOL,
            Relation::Eq => (lhs - rhs).abs() <= FEASIBILITY_TOL,
        }
    }

    /// Euclidean projection of `v` onto the feasible half-line (or point)
    /// defined by `rhs`.
    pub fn project(self, v: f64, rhs: f64) -> f64 {
        match self {
            Relation::Le => v.min(rhs),
            Relation::Ge => v.max(rhs),
            Relation::Eq => rhs,
        }
    }
}

/// `C x (relation) d` with `C` of shape `m x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub relation: Relation,
}

impl ConstraintBlock {
    pub fn new(matrix: SparseMatrix, rhs: Vec<f64>, relation: Relation) -> Result<Self> {
        if rhs.len() != matrix.rows() {
            return Err(Error::invalid(
                "constraints.d",
                format!("expected {} entries, got {}", matrix.rows(), rhs.len()),
            ));
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("constraints.d", "entries must be finite"));
        }
        Ok(ConstraintBlock {
            matrix,
            rhs,
            relation,
        })
    }

    pub fn m(&self) -> usize {
        self.rhs.len()
    }

    /// Number of rows violated by `x`.
    pub fn count_violations(&self, x: &[f64]) -> usize {
        let mut lhs = vec![0.0; self.m()];
        self.matrix.mul_vec(x, &mut lhs);
        lhs.iter()
            .zip(&self.rhs)
            .filter(|(&l, &r)| !self.relation.holds(l, r))
            .count()
    }
}

/// One binary program.
#[derive(Debug, Clone, PartialEq)]
pub struct IpInstance {
    n: usize,
    pub sense: Sense,
    /// Quadratic coefficients `A`, absent for linear problems.
    pub quadratic: Option<SparseMatrix>,
    /// Whether `A` is stored as an exactly symmetric matrix.
    pub symmetric: bool,
    /// Linear coefficients `b`.
    pub linear: Vec<f64>,
    pub constraints: Option<ConstraintBlock>,
    pub offset: f64,
}

impl IpInstance {
    pub fn new(
        sense: Sense,
        quadratic: Option<SparseMatrix>,
        symmetric: bool,
        linear: Vec<f64>,
        constraints: Option<ConstraintBlock>,
        offset: f64,
    ) -> Result<Self> {
        let n = linear.len();
        if linear.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("b", "entries must be finite"));
        }
        if let Some(a) = &quadratic {
            if a.rows() != n || a.cols() != n {
                return Err(Error::invalid(
                    "A",
                    format!("expected {n}x{n}, got {}x{}", a.rows(), a.cols()),
                ));
            }
            if symmetric && !a.is_symmetric() {
                return Err(Error::invalid("A.symmetric", "flag set but A != A^T"));
            }
        } else if symmetric {
            return Err(Error::invalid("A.symmetric", "flag set without a quadratic term"));
        }
        if let Some(c) = &constraints {
            if c.matrix.cols() != n {
                return Err(Error::invalid(
                    "constraints.C",
                    format!("expected {n} columns, got {}", c.matrix.cols()),
                ));
            }
        }
        if !offset.is_finite() {
            return Err(Error::invalid("offset", "must be finite"));
        }
        Ok(IpInstance {
            n,
            sense,
            quadratic,
            symmetric,
            linear,
            constraints,
            offset,
        })
    }

    /// Linear objective `b^T x` without constraints.
    pub fn linear_unconstrained(sense: Sense, linear: Vec<f64>) -> Result<Self> {
        IpInstance::new(sense, None, false, linear, None, 0.0)
    }

    /// Number of variables. Zero only for a fully eliminated problem.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.constraints.as_ref().map_or(0, ConstraintBlock::m)
    }

    /// `x^T A x + b^T x + offset`.
    pub fn objective<T: Copy + Into<f64>>(&self, x: &[T]) -> f64 {
        let xf: Vec<f64> = x.iter().map(|&v| v.into()).collect();
        self.objective_f64(&xf)
    }

    pub fn objective_f64(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let quad = self.quadratic.as_ref().map_or(0.0, |a| a.quad_form(x));
        let lin: f64 = self.linear.iter().zip(x).map(|(b, v)| b * v).sum();
        quad + lin + self.offset
    }

    /// Number of violated constraint rows.
    pub fn count_violations<T: Copy + Into<f64>>(&self, x: &[T]) -> usize {
        match &self.constraints {
            None => 0,
            Some(c) => {
                let xf: Vec<f64> = x.iter().map(|&v| v.into()).collect();
                c.count_violations(&xf)
            }
        }
    }

    pub fn is_feasible<T: Copy + Into<f64>>(&self, x: &[T]) -> bool {
        self.count_violations(x) == 0
    }

    /// Same problem without its constraint block.
    pub fn without_constraints(&self) -> IpInstance {
        IpInstance {
            constraints: None,
            ..self.clone()
        }
    }
}
