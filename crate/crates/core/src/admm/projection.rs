//! Projections onto the two sets whose intersection is `{0,1}^n`: the box
//! `[0,1]^n` and the l2 sphere `||x - 1/2||_2 = sqrt(n)/2`.

/// Element-wise clamp to `[0, 1]`.
pub fn project_box(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.clamp(0.0, 1.0)).collect()
}

pub(crate) fn project_box_into(v: impl Iterator<Item = f64>, out: &mut [f64]) {
    for (o, x) in out.iter_mut().zip(v) {
        *o = x.clamp(0.0, 1.0);
    }
}

/// Projection onto the sphere centred at `1/2` with radius `sqrt(n)/2`,
/// where `n = v.len()`.
///
/// The centre itself has no unique projection; it maps to
/// `1/2 + (sqrt(n)/2) e_1`.
pub fn project_sphere_l2(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    project_sphere_into(v.iter().copied(), &mut out);
    out
}

pub(crate) fn project_sphere_into(v: impl Iterator<Item = f64>, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    for (o, x) in out.iter_mut().zip(v) {
        *o = x - 0.5;
    }
    let norm = out.iter().map(|d| d * d).sum::<f64>().sqrt();
    let radius = (n as f64).sqrt() / 2.0;
    if norm == 0.0 {
        out.fill(0.5);
        out[0] += radius;
        return;
    }
    let scale = radius / norm;
    for o in out.iter_mut() {
        *o = 0.5 + *o * scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn box_clamps() {
        assert_eq!(project_box(&[-0.2, 0.5, 1.3]), vec![0.0, 0.5, 1.0]);
        assert_eq!(project_box(&[0.0, 0.25, 1.0]), vec![0.0, 0.25, 1.0]);
    }

    #[test]
    fn sphere_fixed_point_and_rescale() {
        assert_eq!(project_sphere_l2(&[1.0, 0.0]), vec![1.0, 0.0]);
        let p = project_sphere_l2(&[2.0, -1.0]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15, "{p:?}");
    }

    #[test]
    fn sphere_degenerate_centre() {
        assert_eq!(project_sphere_l2(&[0.5; 4]), vec![1.5, 0.5, 0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn box_is_idempotent(v in prop::collection::vec(-3.0f64..3.0, 1..40)) {
            let once = project_box(&v);
            prop_assert!(once.iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert_eq!(project_box(&once), once);
        }

        #[test]
        fn sphere_lands_on_sphere(v in prop::collection::vec(-50.0f64..50.0, 1..200)) {
            let n = v.len() as f64;
            let p = project_sphere_l2(&v);
            let r = p.iter().map(|x| (x - 0.5) * (x - 0.5)).sum::<f64>().sqrt();
            prop_assert!((r - n.sqrt() / 2.0).abs() < 1e-10 * n.sqrt());
        }
    }
}
