//! Property tests for the documented invariants of every module.

mod common;

use common::{combine, random_binary, random_decisions, random_instance, row_pattern, Quadratic};
use ipfix::admm::{project_box, project_sphere_l2, solve, AdmmParams};
use ipfix::bench::{accuracy, count_infeasible, flip_count, objective_gap};
use ipfix::earlyfix::{run, Policy, RunConfig, Termination};
use ipfix::instances::{
    brute_force_solve, generate_auction, generate_grid_mrf, instance_to_json, parse_instance, GeneratorConfig,
};
use ipfix::policy::{Mode, PolicyConfig, PolicyWeights};
use ipfix::reformulate::{apply_fixing, lift_solution, FixMask, VarStatus};
use ipfix::rng::seeded;
use ipfix::training::{collect_dataset, sample_weight, train, wbce_loss, Dataset, Sample, TrainConfig};
use ipfix::{IpInstance, Sense};
use proptest::prelude::*;
use rand::Rng as _;

fn quadratic_kind(k: u8) -> Quadratic {
    [Quadratic::None, Quadratic::Symmetric, Quadratic::General][usize::from(k % 3)]
}

fn small_policy(use_attention: bool) -> PolicyConfig {
    PolicyConfig {
        beta: 8,
        window: 4,
        stride: 4,
        d_model: 8,
        heads: 2,
        layers: 1,
        d_ff: 16,
        mlp_dims: vec![8, 4, 2],
        use_attention,
        seed: 3,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_is_reproducible(seed in any::<u64>(), n in 1usize..60, items in 1usize..20) {
        let cfg = GeneratorConfig { n, items, density: 0.2, seed, ..Default::default() };
        let a = generate_auction(&cfg).unwrap();
        prop_assert_eq!(instance_to_json(&a), instance_to_json(&generate_auction(&cfg).unwrap()));
        // x = 0 uses no item
        prop_assert!(a.is_feasible(&vec![0u8; n]));
        prop_assert!(a.constraints.as_ref().unwrap().rhs.iter().all(|&d| d == 1.0));
    }

    #[test]
    fn grid_laplacian_is_psd(seed in any::<u64>(), w in 1usize..7, h in 1usize..7, coupling in 0.0f64..3.0) {
        let inst = generate_grid_mrf(w, h, 1.0, coupling, seed).unwrap();
        let mut rng = seeded(seed);
        if let Some(a) = &inst.quadratic {
            prop_assert!(a.is_symmetric());
            for _ in 0..100 {
                let v: Vec<f64> = (0..inst.n()).map(|_| rng.random_range(-3.0..3.0)).collect();
                prop_assert!(a.quad_form(&v) >= -1e-9);
            }
        }
    }

    #[test]
    fn nonnegative_linear_max_takes_all(b in prop::collection::vec(0.001f64..5.0, 1..12)) {
        let inst = IpInstance::linear_unconstrained(Sense::Maximize, b.clone()).unwrap();
        let best = brute_force_solve(&inst).unwrap().unwrap();
        prop_assert_eq!(best.x, vec![1u8; b.len()]);
    }

    #[test]
    fn instance_files_round_trip(seed in any::<u64>(), kind in 0u8..3) {
        let inst = random_instance(&mut seeded(seed), 20, quadratic_kind(kind));
        let back = parse_instance(&instance_to_json(&inst)).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn projections_stay_in_their_sets(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let b = project_box(&v);
        prop_assert!(b.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert_eq!(project_box(&b), b);
        let s = project_sphere_l2(&v);
        let n = v.len() as f64;
        let r = s.iter().map(|x| (x - 0.5) * (x - 0.5)).sum::<f64>().sqrt();
        prop_assert!((r - n.sqrt() / 2.0).abs() < 1e-10 * n.sqrt());
    }

    #[test]
    fn fixing_preserves_objective_and_rows(seed in any::<u64>(), kind in 0u8..3) {
        let mut rng = seeded(seed);
        let inst = random_instance(&mut rng, 12, quadratic_kind(kind));
        let n = inst.n();
        let all: Vec<usize> = (0..n).collect();
        let decisions = random_decisions(&mut rng, &all);
        let (reduced, mask) = apply_fixing(&inst, &FixMask::new(n), &decisions).unwrap();
        let free = mask.reduced_to_original().to_vec();
        for _ in 0..4 {
            let x1 = random_binary(&mut rng, free.len());
            let x = combine(n, &decisions, &free, &x1);
            prop_assert!((inst.objective(&x) - reduced.objective(&x1)).abs() < 1e-9);
            prop_assert_eq!(row_pattern(&inst, &x), row_pattern(&reduced, &x1));
            prop_assert_eq!(lift_solution(&x1, &mask).unwrap(), x);
        }
    }

    #[test]
    fn sequential_fixing_equals_union(seed in any::<u64>(), kind in 0u8..3) {
        let mut rng = seeded(seed);
        let inst = random_instance(&mut rng, 15, quadratic_kind(kind));
        let n = inst.n();
        let all: Vec<usize> = (0..n).collect();
        let first = random_decisions(&mut rng, &all);
        let (mid, mask1) = apply_fixing(&inst, &FixMask::new(n), &first).unwrap();
        let second = random_decisions(&mut rng, mask1.reduced_to_original());
        let (two_step, mask2) = apply_fixing(&mid, &mask1, &second).unwrap();
        let union: Vec<(usize, bool)> = first.iter().chain(&second).copied().collect();
        let (one_step, mask_u) = apply_fixing(&inst, &FixMask::new(n), &union).unwrap();

        prop_assert_eq!(mask2.status(), mask_u.status());
        prop_assert_eq!(mask2.reduced_to_original(), mask_u.reduced_to_original());
        prop_assert!((two_step.offset - one_step.offset).abs() < 1e-9);
        for (a, b) in two_step.linear.iter().zip(&one_step.linear) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert_eq!(&two_step.quadratic, &one_step.quadratic);
        match (&two_step.constraints, &one_step.constraints) {
            (Some(a), Some(b)) => {
                prop_assert_eq!(&a.matrix, &b.matrix);
                for (x, y) in a.rhs.iter().zip(&b.rhs) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
            (None, None) => {}
            _ => prop_assert!(false, "constraint blocks diverged"),
        }
        // statuses only ever leave Free
        for (s1, s2) in mask1.status().iter().zip(mask2.status()) {
            prop_assert!(*s1 == VarStatus::Free || s1 == s2);
        }
        prop_assert_eq!(mask2.free_count() + mask2.fixed_count(), n);
    }

    #[test]
    fn metric_identities(n in 1usize..1000, diff_frac in 0.0f64..1.0, obj in -1e3f64..1e3) {
        let sol_diff = ((n as f64) * diff_frac).floor();
        prop_assert!((accuracy(n, sol_diff) + 100.0 * sol_diff / n as f64 - 100.0).abs() < 1e-9);
        if obj != 0.0 {
            prop_assert_eq!(objective_gap(obj, obj, Sense::Maximize).unwrap(), 0.0);
            prop_assert_eq!(objective_gap(obj, obj, Sense::Minimize).unwrap(), 0.0);
        }
    }

    #[test]
    fn flips_ignore_same_side_extensions(trace in prop::collection::vec(0.0f64..1.0, 1..50), extra in 0.0f64..0.5) {
        let mut longer = trace.clone();
        let last = *trace.last().unwrap();
        // stay strictly on the side of the last value (or at 0.5 itself)
        longer.push(if last > 0.5 { 0.5 + extra.max(1e-9) } else if last < 0.5 { 0.5 - extra.max(1e-9) } else { 0.5 });
        prop_assert_eq!(flip_count(&longer), flip_count(&trace));
    }

    #[test]
    fn wbce_is_bce_with_unit_weights(p in prop::collection::vec(0.0f64..1.0, 1..30), seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let labels: Vec<u8> = p.iter().map(|_| u8::from(rng.random::<bool>())).collect();
        let ones = vec![1.0; p.len()];
        let plain_bce = -p.iter().zip(&labels).map(|(&q, &a)| {
            let q = q.clamp(1e-7, 1.0 - 1e-7);
            if a == 1 { q.ln() } else { (1.0 - q).ln() }
        }).sum::<f64>() / p.len() as f64;
        let loss = wbce_loss(&p, &labels, &ones);
        prop_assert_eq!(loss, plain_bce);
        prop_assert!(loss >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn policy_outputs_are_open_probabilities(seed in any::<u64>(), att in any::<bool>(), u in 1usize..20) {
        let mut w = PolicyWeights::<f64>::init(&PolicyConfig { seed, ..small_policy(att) }).unwrap();
        w.set_mode(Mode::Inference);
        let mut rng = seeded(seed ^ 1);
        let traces: Vec<f64> = (0..u * 8).map(|_| rng.random_range(-1.0..2.0)).collect();
        let p = w.predict(&traces).unwrap();
        prop_assert_eq!(p.len(), u);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));

        // permuting the batch permutes the outputs
        let perm: Vec<usize> = (0..u).rev().collect();
        let permuted: Vec<f64> = perm.iter().flat_map(|&i| traces[i * 8..(i + 1) * 8].to_vec()).collect();
        let q = w.predict(&permuted).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(q[k], p[i]);
        }
    }

    #[test]
    fn early_fixing_conserves_variables(seed in any::<u64>(), delta in 0.5f64..1.0) {
        let inst = common::tiny_auction(seed, 12);
        let params = AdmmParams { seed, max_iters: 3000, ..Default::default() };
        let cfg = RunConfig { beta: 10, delta, max_iters: 3000 };
        let (sol, log) = run(&inst, &cfg, &Policy::Heuristic, &params).unwrap();
        prop_assert_eq!(sol.x.len(), inst.n());
        prop_assert!(sol.x.iter().all(|&v| v <= 1));
        prop_assert!((sol.objective - inst.objective(&sol.x)).abs() < 1e-9);
        let mut prev = inst.n();
        for r in &log.rounds {
            prop_assert!(r.remaining <= prev);
            prop_assert_eq!(prev - r.remaining, r.fixed_zero + r.fixed_one);
            prev = r.remaining;
        }
        let free = log.statuses.iter().filter(|s| **s == VarStatus::Free).count();
        prop_assert_eq!(log.total_fixed() + free, inst.n());
        if log.termination != Termination::AllFixed {
            prop_assert!(free > 0);
        }
        for (s, &x) in log.statuses.iter().zip(&sol.x) {
            match s {
                VarStatus::Fixed0 => prop_assert_eq!(x, 0),
                VarStatus::Fixed1 => prop_assert_eq!(x, 1),
                VarStatus::Free => {}
            }
        }
    }
}

#[test]
fn solution_objective_matches_direct_evaluation() {
    for seed in 0..5 {
        let inst = generate_grid_mrf(6, 5, 1.0, 0.5, seed).unwrap();
        let sol = solve(&inst, &AdmmParams { seed, ..Default::default() }, |_, _| {}).unwrap();
        let a = inst.quadratic.as_ref().unwrap();
        let x: Vec<f64> = sol.x.iter().map(|&v| f64::from(v)).collect();
        let direct = a.quad_form(&x) + inst.linear.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>() + inst.offset;
        assert!((sol.objective - direct).abs() < 1e-9);
    }
}

#[test]
fn trace_holds_the_last_beta_iterates() {
    let inst = generate_auction(&GeneratorConfig { n: 60, items: 15, seed: 4, ..Default::default() }).unwrap();
    let beta = 25;
    let params = AdmmParams { max_iters: 130, ..Default::default() };
    let mut history = Vec::new();
    let cfg = RunConfig { beta, delta: 1.0, max_iters: 130 };
    let (sol, _) = ipfix::earlyfix::run_with_observer(&inst, &cfg, &Policy::Heuristic, &params, |_, x| {
        history.push(x.to_vec())
    })
    .unwrap();
    assert_eq!(sol.trace.len(), beta);
    for i in 0..inst.n() {
        let expected: Vec<f64> = history[history.len() - beta..].iter().map(|x| x[i]).collect();
        assert_eq!(sol.trace.window(i), expected);
    }
}

#[test]
fn splitting_residuals_settle() {
    // medians over consecutive 100-sweep windows are not monotone while the
    // penalties are still growing, but the tail sits far below the start
    for seed in [21, 22] {
        let inst = generate_auction(&GeneratorConfig { seed, ..Default::default() }).unwrap();
        let params = AdmmParams::default();
        let mut solver = ipfix::admm::AdmmSolver::new(inst, params.clone(), 10).unwrap();
        let mut box_res = Vec::new();
        let mut sphere_res = Vec::new();
        while solver.iteration() < params.max_iters && !solver.converged() {
            solver.step();
            let s = solver.state();
            let inf = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            box_res.push(inf(&s.x, &s.y1));
            sphere_res.push(inf(&s.x, &s.y2));
        }
        for series in [&box_res, &sphere_res] {
            assert!(series.iter().all(|v| v.is_finite()));
            let medians: Vec<f64> = series
                .chunks(100)
                .map(|c| {
                    let mut c = c.to_vec();
                    c.sort_by(f64::total_cmp);
                    c[c.len() / 2]
                })
                .collect();
            assert!(medians.len() >= 3);
            assert!(medians.last().unwrap() < &(0.1 * medians[0]), "window medians {medians:?}");
        }
    }
}

#[test]
fn greedy_dual_bounds_admm_objective() {
    use ipfix::instances::greedy_dual_bound;
    for seed in [7, 8, 9] {
        let inst = generate_auction(&GeneratorConfig { seed, ..Default::default() }).unwrap();
        let sol = solve(&inst, &AdmmParams::default(), |_, _| {}).unwrap();
        if inst.is_feasible(&sol.x) {
            assert!(sol.objective <= greedy_dual_bound(&inst) + 1e-9);
        }
    }
}

#[test]
fn brute_force_optimum_is_feasible() {
    for seed in 0..20 {
        let inst = common::tiny_auction(seed, 10);
        if let Some(best) = brute_force_solve(&inst).unwrap() {
            assert_eq!(count_infeasible(&inst, &best.x), 0);
        }
    }
}

#[test]
fn collection_layout() {
    let inst = IpInstance::linear_unconstrained(Sense::Maximize, vec![1.0, -1.0, 0.5]).unwrap();
    let params = AdmmParams { max_iters: 2000, ..Default::default() };
    let ds = collect_dataset(std::slice::from_ref(&inst), &params, 5, 2).unwrap();
    assert_eq!(ds.len(), 6);
    let expert = solve(&inst, &params, |_, _| {}).unwrap();
    for s in &ds.samples {
        let [e, r, i] = s.provenance;
        assert_eq!(e, 0);
        assert_eq!(s.weight as f64, sample_weight(r as usize) as f32 as f64);
        assert_eq!(s.label, expert.x[i as usize]);
        assert_eq!(s.trace.len(), 5);
    }
    let weights: Vec<f32> = ds.samples.iter().map(|s| s.weight).collect();
    assert_eq!(weights, vec![1.0, 1.0, 1.0, 0.5, 0.5, 0.5]);
    assert!(collect_dataset(&[inst], &params, 5, 0).unwrap().is_empty());
}

#[test]
fn collected_traces_match_solver_iterates() {
    let inst = common::tiny_auction(3, 8);
    let params = AdmmParams { max_iters: 2000, ..Default::default() };
    let mut history = Vec::new();
    solve(&inst, &params, |_, x| history.push(x.to_vec())).unwrap();
    let ds = collect_dataset(std::slice::from_ref(&inst), &params, 4, 3).unwrap();
    for s in &ds.samples {
        let [_, r, i] = s.provenance;
        let expected: Vec<f32> = (0..4).map(|k| history[r as usize * 4 + k][i as usize] as f32).collect();
        assert_eq!(s.trace, expected);
    }
}

fn separable_toy(per_class: usize, beta: usize) -> Dataset {
    let mut samples = Vec::new();
    for k in 0..per_class {
        for (value, label) in [(0.9f32, 1u8), (0.1, 0)] {
            samples.push(Sample {
                trace: vec![value; beta],
                label,
                weight: 1.0,
                provenance: [0, 0, k as u32],
            });
        }
    }
    Dataset { beta, samples }
}

#[test]
fn training_fits_a_separable_task() {
    let ds = separable_toy(1000, 10);
    let cfg = TrainConfig { batch_size: 64, ..Default::default() };
    let out = train(&ds, &cfg, &PolicyConfig::for_beta(10)).unwrap();
    let losses = &out.epoch_losses;
    assert_eq!(losses.len(), 10);
    assert!(*losses.last().unwrap() < 0.05, "losses {losses:?}");
    let rises = losses[2..].windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 1, "losses {losses:?}");
    let p = out.weights.predict(&[vec![0.9; 10], vec![0.1; 10]].concat()).unwrap();
    assert!(p[0] > 0.9 && p[1] < 0.1, "{p:?}");
}

#[test]
fn training_is_reproducible_and_epoch_zero_is_identity() {
    let ds = separable_toy(40, 10);
    let policy = PolicyConfig { seed: 9, ..PolicyConfig::for_beta(10) };
    let cfg = TrainConfig { epochs: 2, batch_size: 16, seed: 4, ..Default::default() };
    let a = train(&ds, &cfg, &policy).unwrap();
    let b = train(&ds, &cfg, &policy).unwrap();
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.epoch_losses, b.epoch_losses);

    let zero = train(&ds, &TrainConfig { epochs: 0, ..cfg }, &policy).unwrap();
    assert!(zero.epoch_losses.is_empty());
    let init = PolicyWeights::<f32>::init(&policy).unwrap();
    for (t, u) in zero.weights.tensors().iter().zip(init.tensors()) {
        assert_eq!(t.data, u.data);
    }
}

#[test]
fn round_weights_are_constant_per_round() {
    let insts: Vec<IpInstance> = (0..3).map(|s| common::tiny_auction(s, 10)).collect();
    let ds = collect_dataset(&insts, &AdmmParams::default(), 10, 6).unwrap();
    for s in &ds.samples {
        assert_eq!(s.weight, (1.0 / (f64::from(s.provenance[1]) + 1.0)) as f32);
    }
}

#[test]
fn tiny_heuristic_runs_are_consistent() {
    for seed in 0..10 {
        let inst = common::tiny_auction(seed, 12);
        let params = AdmmParams { seed, ..Default::default() };
        let cfg = RunConfig { beta: 10, delta: 0.8, max_iters: params.max_iters };
        let (sol, _) = run(&inst, &cfg, &Policy::Heuristic, &params).unwrap();
        assert!(sol.x.iter().all(|&v| v <= 1));
        assert!((sol.objective - inst.objective(&sol.x)).abs() < 1e-9);
    }
}
