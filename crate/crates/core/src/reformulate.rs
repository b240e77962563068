//! Exact problem shrinking after fixing variables.
//!
//! Split the current variables into still-free `x1` and newly fixed `x2`:
//!
//! ```text
//! A = [A1 A2; A3 A4],  C = [C1 C2],  b = [b1; b2]
//! ```
//!
//! Substituting `x2` gives an equivalent problem in `x1` alone:
//!
//! ```text
//! A' = A1
//! b' = (A2 + A3^T) x2 + b1          (= 2 A2 x2 + b1 when A is symmetric)
//! C' = C1,  d' = d - C2 x2
//! offset' = offset + x2^T A4 x2 + b2^T x2
//! ```
//!
//! so `objective(original, [x1; x2]) == objective(reduced, x1)` for every
//! completion `x1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{ConstraintBlock, IpInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarStatus {
    Free,
    Fixed0,
    Fixed1,
}

impl VarStatus {
    pub fn fixed(value: bool) -> Self {
        if value {
            VarStatus::Fixed1
        } else {
            VarStatus::Fixed0
        }
    }
}

/// Fixing state of the original variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixMask {
    status: Vec<VarStatus>,
    /// Original index of each reduced (free) position.
    reduced_to_original: Vec<usize>,
    /// Objective constant accumulated from eliminated variables.
    constant: f64,
    round: usize,
    fixed_last_round: usize,
}

impl FixMask {
    /// All `n` variables free.
    pub fn new(n: usize) -> Self {
        FixMask {
            status: vec![VarStatus::Free; n],
            reduced_to_original: (0..n).collect(),
            constant: 0.0,
            round: 0,
            fixed_last_round: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.status.len()
    }

    pub fn status(&self) -> &[VarStatus] {
        &self.status
    }

    pub fn reduced_to_original(&self) -> &[usize] {
        &self.reduced_to_original
    }

    /// Number of free variables `u`.
    pub fn free_count(&self) -> usize {
        self.reduced_to_original.len()
    }

    pub fn fixed_count(&self) -> usize {
        self.n() - self.free_count()
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Number of fixing rounds applied so far.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Variables fixed by the latest round.
    pub fn fixed_last_round(&self) -> usize {
        self.fixed_last_round
    }
}

/// `(A2 + A3^T) x2 + b1` over the free positions `keep`, with `x2` given as
/// a full-length vector that is zero on free positions.
pub fn reduced_linear_general(inst: &IpInstance, keep: &[usize], x_fixed: &[f64]) -> Vec<f64> {
    let mut coupling = vec![0.0; inst.n()];
    if let Some(a) = &inst.quadratic {
        a.mul_vec_add(1.0, x_fixed, &mut coupling);
        a.transpose().mul_vec_add(1.0, x_fixed, &mut coupling);
    }
    keep.iter().map(|&i| coupling[i] + inst.linear[i]).collect()
}

/// Symmetric shortcut `2 A2 x2 + b1`.
pub fn reduced_linear_symmetric(inst: &IpInstance, keep: &[usize], x_fixed: &[f64]) -> Vec<f64> {
    let mut coupling = vec![0.0; inst.n()];
    if let Some(a) = &inst.quadratic {
        a.mul_vec_add(2.0, x_fixed, &mut coupling);
    }
    keep.iter().map(|&i| coupling[i] + inst.linear[i]).collect()
}

/// Fixes the variables named in `decisions` (original index, value) and
/// returns the reduced instance together with the updated mask.
///
/// `inst` must be the current reduced instance described by `mask`. Fixing
/// a variable that is not free, or naming one twice, is a contract
/// violation. Constraint rows are never dropped, even when they become
/// vacuous.
pub fn apply_fixing(
    inst: &IpInstance,
    mask: &FixMask,
    decisions: &[(usize, bool)],
) -> Result<(IpInstance, FixMask)> {
    let u = mask.free_count();
    if inst.n() != u {
        return Err(Error::Contract(format!(
            "instance has {} variables but the mask has {u} free",
            inst.n()
        )));
    }
    let mut next = mask.clone();
    next.round += 1;
    next.fixed_last_round = decisions.len();
    if decisions.is_empty() {
        return Ok((inst.clone(), next));
    }

    let mut reduced_pos = vec![usize::MAX; mask.n()];
    for (r, &o) in mask.reduced_to_original.iter().enumerate() {
        reduced_pos[o] = r;
    }
    let mut x_fixed = vec![0.0; u];
    let mut is_fixed = vec![false; u];
    for &(orig, value) in decisions {
        if orig >= mask.n() {
            return Err(Error::Contract(format!("variable {orig} out of range")));
        }
        if mask.status[orig] != VarStatus::Free || is_fixed[reduced_pos[orig]] {
            return Err(Error::Contract(format!("variable {orig} is not free")));
        }
        let r = reduced_pos[orig];
        is_fixed[r] = true;
        x_fixed[r] = f64::from(u8::from(value));
        next.status[orig] = VarStatus::fixed(value);
    }
    let keep: Vec<usize> = (0..u).filter(|&r| !is_fixed[r]).collect();
    let fixed: Vec<usize> = (0..u).filter(|&r| is_fixed[r]).collect();

    let linear = if inst.symmetric {
        reduced_linear_symmetric(inst, &keep, &x_fixed)
    } else {
        reduced_linear_general(inst, &keep, &x_fixed)
    };
    let quad_const = inst.quadratic.as_ref().map_or(0.0, |a| a.quad_form(&x_fixed));
    let lin_const: f64 = fixed.iter().map(|&r| inst.linear[r] * x_fixed[r]).sum();
    let delta = quad_const + lin_const;

    let quadratic = inst.quadratic.as_ref().map(|a| a.select(&keep, &keep));
    let constraints = match &inst.constraints {
        None => None,
        Some(block) => {
            let all_rows: Vec<usize> = (0..block.m()).collect();
            let mut used = vec![0.0; block.m()];
            block.matrix.mul_vec(&x_fixed, &mut used);
            let rhs = block.rhs.iter().zip(&used).map(|(d, c)| d - c).collect();
            Some(ConstraintBlock::new(block.matrix.select(&all_rows, &keep), rhs, block.relation)?)
        }
    };
    let reduced = IpInstance::new(
        inst.sense,
        quadratic,
        inst.symmetric,
        linear,
        constraints,
        inst.offset + delta,
    )?;
    next.reduced_to_original = keep.iter().map(|&r| mask.reduced_to_original[r]).collect();
    next.constant += delta;
    Ok((reduced, next))
}

/// Scatters a reduced binary vector back to the original indexing.
pub fn lift_solution(x_reduced: &[u8], mask: &FixMask) -> Result<Vec<u8>> {
    if x_reduced.len() != mask.free_count() {
        return Err(Error::Contract(format!(
            "expected {} reduced values, got {}",
            mask.free_count(),
            x_reduced.len()
        )));
    }
    let mut out: Vec<u8> = mask
        .status
        .iter()
        .map(|s| u8::from(*s == VarStatus::Fixed1))
        .collect();
    for (&o, &v) in mask.reduced_to_original.iter().zip(x_reduced) {
        out[o] = v;
    }
    Ok(out)
}
