use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mcrl_core::env::{make_condition_env, transition, BeliefState, Computation, ConditionId};
use mcrl_core::features::FeatureRegistry;
use mcrl_core::fitkit::{parse_records, ParamSpace};
use mcrl_core::learners::{LvocParams, LvocPosterior};
use mcrl_core::metacontrol::{build_grid, Agent, GridOptions, ModelConfig};
use mcrl_core::modelselect::{bic, mann_kendall, rfx_bms, EvidenceMatrix};
use mcrl_core::simlab::simulate_agent;

const ALL: [ConditionId; 7] = [
    ConditionId::Exp1Far,
    ConditionId::Exp1Near,
    ConditionId::Exp1BestFirst,
    ConditionId::Exp2LowCostHighVariance,
    ConditionId::Exp2LowCostLowVariance,
    ConditionId::Exp2HighCostHighVariance,
    ConditionId::Exp2HighCostLowVariance,
];

fn walk(cond: ConditionId, seed: u64, clicks: usize) -> BeliefState {
    let (spec, truth) = make_condition_env(cond, seed).unwrap();
    let mut b = BeliefState::new(Arc::new(spec));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..clicks {
        let open: Vec<usize> = b.unrevealed().collect();
        if open.is_empty() {
            break;
        }
        b = b.reveal(open[rng.random_range(0..open.len())], &truth).unwrap();
    }
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clicks_reveal_one_node_and_cost_lambda(ci in 0..7usize, seed in any::<u64>(), k in 0..11usize) {
        let cond = ALL[ci];
        let (spec, truth) = make_condition_env(cond, seed).unwrap();
        let b = walk(cond, seed, k);
        let open: Vec<usize> = b.unrevealed().collect();
        let id = open[0];
        let (next, r) = transition(&b, Computation::Click(id), &truth).unwrap();
        prop_assert_eq!(r, -spec.click_cost);
        prop_assert_eq!(next.n_clicks(), b.n_clicks() + 1);
        prop_assert_eq!(next.revealed(id), Some(truth.value(id)));
        let (same, ret) = transition(&b, Computation::Terminate, &truth).unwrap();
        prop_assert_eq!(&same, &b);
        prop_assert_eq!(ret, truth.path_return(b.greedy_path()));
    }

    #[test]
    fn best_path_value_dominates_every_path(ci in 0..7usize, seed in any::<u64>(), k in 0..13usize) {
        let b = walk(ALL[ci], seed, k);
        let m = b.best_path_value();
        for p in b.spec().paths() {
            prop_assert!(b.expected_path_value(p).unwrap() <= m + 1e-12);
        }
        prop_assert!(m >= b.spec().v_min() - 1e-12 && m <= b.spec().v_max() + 1e-12);
    }

    #[test]
    fn every_grid_model_has_a_normalized_policy(mi in 0..22usize, ci in 0..7usize, seed in any::<u64>(), k in 0..12usize) {
        let reg = FeatureRegistry::default_registry();
        let config = build_grid(&GridOptions::default())[mi].clone();
        let space = ParamSpace::for_config(&config, &reg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = space.decode(&space.sample(&mut rng)).unwrap();
        let mut agent = Agent::new(&config, &params, &reg, seed).unwrap();
        let b = walk(ALL[ci], seed, k);
        let pol = agent.policy(&b).unwrap();
        prop_assert!((pol.total() - 1.0).abs() < 1e-9);
        prop_assert!(pol.probs.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert_eq!(pol.actions.len(), b.computations().len());
        let c = agent.act(&b).unwrap();
        prop_assert!(b.is_valid(c));
    }

    #[test]
    fn unit_cube_round_trip(mi in 0..22usize, u in proptest::collection::vec(0.0..=1.0f64, 20)) {
        let reg = FeatureRegistry::default_registry();
        let config = build_grid(&GridOptions::default())[mi].clone();
        let space = ParamSpace::for_config(&config, &reg).unwrap();
        let v = space.from_unit(&u[..space.k()]);
        prop_assert!(space.check(&v).is_ok());
        let params = space.decode(&v).unwrap();
        prop_assert_eq!(space.encode(&params).unwrap(), v.clone());
        let back = space.from_unit(&space.to_unit(&v).unwrap());
        for (name, x) in &v.0 {
            prop_assert!((back.0[name] - x).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn lvoc_covariance_stays_psd(seed in any::<u64>(), n in 1..60usize, var0 in 1e-3..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut post = LvocPosterior::from_prior(&LvocParams::new(vec![0.0; 13], var0, 1));
        for _ in 0..n {
            let f: Vec<f64> = (0..13).map(|_| rng.random_range(-100.0..100.0)).collect();
            post.observe(&f, rng.random_range(-50.0..50.0), 1.0).unwrap();
        }
        prop_assert!(post.is_positive_semidefinite());
    }

    #[test]
    fn mann_kendall_is_antisymmetric_and_shift_invariant(x in proptest::collection::vec(-100.0..100.0f64, 3..40), c in -50.0..50.0f64) {
        let r = mann_kendall(&x).unwrap();
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        prop_assert_eq!(mann_kendall(&rev).unwrap().s, -r.s);
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        prop_assert_eq!(mann_kendall(&shifted).unwrap().s, r.s);
        prop_assert!((0.0..=1.0).contains(&r.p));
    }

    #[test]
    fn bic_grows_with_parameters(ll in -1e4..0.0f64, k in 0..20usize, n in 2..10_000usize) {
        prop_assert!(bic(ll, k + 1, n).unwrap() > bic(ll, k, n).unwrap());
    }

    #[test]
    fn bms_frequencies_are_a_distribution_and_permute(rows in proptest::collection::vec(proptest::collection::vec(-200.0..0.0f64, 3), 1..15)) {
        let n = rows.len();
        let names = |k: usize, p: &str| (0..k).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let e = EvidenceMatrix::new(names(n, "s"), names(3, "m"), rows.clone()).unwrap();
        let res = rfx_bms(&e, 2_000, 1).unwrap();
        prop_assert!((res.r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((res.phi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&res.bor));
        let swapped: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[2], r[1], r[0]]).collect();
        let res2 = rfx_bms(&EvidenceMatrix::new(names(n, "s"), names(3, "m"), swapped).unwrap(), 2_000, 1).unwrap();
        prop_assert!((res.r[0] - res2.r[2]).abs() < 1e-9);
        prop_assert!((res.r[1] - res2.r[1]).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulations_are_valid_records(mi in 0..22usize, ci in 0..7usize, seed in any::<u64>()) {
        let reg = FeatureRegistry::default_registry();
        let config: ModelConfig = build_grid(&GridOptions::default())[mi].clone();
        let space = ParamSpace::for_config(&config, &reg).unwrap();
        let params = space.decode(&space.sample(&mut ChaCha8Rng::seed_from_u64(seed))).unwrap();
        let trace = simulate_agent(&config, &params, ALL[ci], 3, &reg, seed).unwrap();
        let rec = &trace.record;
        prop_assert!(rec.validate().is_ok());
        for t in &rec.trials {
            prop_assert!((t.derived_score().unwrap() - t.score).abs() < 1e-9);
        }
        let back = parse_records(&rec.to_json_line()).unwrap();
        prop_assert_eq!(&back[0], rec);
        let again = simulate_agent(&config, &params, ALL[ci], 3, &reg, seed).unwrap();
        prop_assert_eq!(&again.record, rec);
    }
}
