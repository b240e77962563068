use super::IpInstance;
use crate::error::{Error, Result};

/// Largest instance the exhaustive search accepts.
pub const BRUTE_FORCE_MAX_N: usize = 24;

/// Optimum found by enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub x: Vec<u8>,
    /// Objective including the instance offset.
    pub objective: f64,
}

/// Enumerates all `2^n` binary vectors in lexicographic order (`x[0]` most
/// significant) and returns the best feasible one. Only strict improvements
/// replace the incumbent, so ties resolve to the lexicographically smallest
/// optimum. `Ok(None)` means no binary vector is feasible.
pub fn brute_force_solve(inst: &IpInstance) -> Result<Option<ExactSolution>> {
    let n = inst.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    let mut x = vec![0.0f64; n];
    let mut best: Option<(u64, f64)> = None;
    for code in 0u64..(1u64 << n) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = ((code >> (n - 1 - i)) & 1) as f64;
        }
        if !inst.is_feasible(&x) {
            continue;
        }
        let obj = inst.objective_f64(&x);
        match best {
            Some((_, incumbent)) if !inst.sense.improves(obj, incumbent) => {}
            _ => best = Some((code, obj)),
        }
    }
    Ok(best.map(|(code, objective)| ExactSolution {
        x: (0..n).map(|i| ((code >> (n - 1 - i)) & 1) as u8).collect(),
        objective,
    }))
}
