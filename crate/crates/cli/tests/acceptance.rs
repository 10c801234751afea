//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mcrl_core::env::{make_condition_env, pseudo_reward, BeliefState, Computation, ConditionId, GroundTruth, TrialSpec};
use mcrl_core::features::{ClickHistory, FeatureRegistry, FeatureVector};
use mcrl_core::fitkit::{fit_participant, sequence_loglik, ParamSpace, ParticipantRecord, TrialRecord};
use mcrl_core::learners::{lvoc_learn, reinforce_grad_logpi, HabitWeights, LvocParams, LvocPosterior, MetaExperience};
use mcrl_core::metacontrol::{tempered_sigmoid, Base, LearnerParams, ModelConfig, ModelParams, StoppingRule};
use mcrl_core::modelselect::{
    bic, family_bms, mann_kendall, partition_by_base, partition_singletons, rfx_bms, EvidenceMatrix,
};
use mcrl_core::simlab::{aggregate_curves, simulate_cohort, Measure};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

const CONDITIONS: [ConditionId; 4] = [
    ConditionId::Exp1Far,
    ConditionId::Exp1Near,
    ConditionId::Exp1BestFirst,
    ConditionId::Exp2HighCostLowVariance,
];

fn random_belief(rng: &mut ChaCha8Rng) -> (BeliefState, GroundTruth) {
    let cond = CONDITIONS[rng.random_range(0..CONDITIONS.len())];
    let (spec, truth) = make_condition_env(cond, rng.random()).unwrap();
    let mut b = BeliefState::new(Arc::new(spec));
    let n = rng.random_range(0..b.spec().n_nodes() - 1);
    for _ in 0..n {
        let open: Vec<usize> = b.unrevealed().collect();
        b = b.reveal(open[rng.random_range(0..open.len())], &truth).unwrap();
    }
    (b, truth)
}

fn log_softmax_at(values: &[f64], i: usize) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = values.iter().map(|v| (v - m).exp()).sum();
    values[i] - m - z.ln()
}

// ------------------------------------------------------------- gradient

fn gradient() -> Outcome {
    let start = Instant::now();
    let reg = FeatureRegistry::default_registry().strategy_view();
    let ln_pi = |b: &BeliefState, c: Computation, w: &[f64], tau: f64| {
        let (actions, feats) = reg.compute_all(b, &ClickHistory::new());
        let v: Vec<f64> = feats.iter().map(|f| f.iter().zip(w).map(|(x, y)| x * y).sum::<f64>() / tau).collect();
        log_softmax_at(&v, actions.iter().position(|&a| a == c).unwrap())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (b, _) = random_belief(&mut rng);
        let w: Vec<f64> = reg.defs().iter().map(|d| rng.random_range(-1.0..1.0) / d.scale).collect();
        let tau = rng.random_range(0.2..5.0);
        let actions = b.computations();
        let c = actions[rng.random_range(0..actions.len())];
        let g = reinforce_grad_logpi(&b, c, &w, tau, &reg, &ClickHistory::new()).unwrap();
        let fd: Vec<f64> = (0..w.len())
            .map(|j| {
                let h = 1e-5 / reg.defs()[j].scale;
                let (mut up, mut down) = (w.clone(), w.clone());
                up[j] += h;
                down[j] -= h;
                (ln_pi(&b, c, &up, tau) - ln_pi(&b, c, &down, tau)) / (2.0 * h)
            })
            .collect();
        let err: f64 = g.iter().zip(&fd).map(|(a, e)| (a - e).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(err / norm);
    }
    let t = start.elapsed();
    outcome(worst < 1e-5 && t.as_secs_f64() < 10.0, format!("100 instances, max relative error {worst:.2e}, {}", secs(t)))
}

// ----------------------------------------------------------------- LVOC

fn lvoc() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let d = 13;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let mu0: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let var0 = rng.random_range(0.1..10.0);
        let params = LvocParams::new(mu0.clone(), var0, 1);
        let n = rng.random_range(1..40);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..20.0)).collect();
        let mut post = LvocPosterior::from_prior(&params);
        for (x, &y) in xs.iter().zip(&ys) {
            let e = MetaExperience { features: FeatureVector(x.clone()), computation: Computation::Terminate, target: y };
            post = lvoc_learn(&e, &post, &params).unwrap();
        }
        // batch posterior: Σ = (I/σ₀² + XᵀX/σ²)⁻¹, μ = Σ(μ₀/σ₀² + Xᵀy/σ²)
        let noise = params.obs_noise_var;
        let x = DMatrix::from_fn(n, d, |i, j| xs[i][j]);
        let cov = (DMatrix::identity(d, d) / var0 + x.transpose() * &x / noise).try_inverse().unwrap();
        let mean = &cov * (DVector::from_column_slice(&mu0) / var0 + x.transpose() * DVector::from_column_slice(&ys) / noise);
        for j in 0..d {
            worst = worst.max((post.mean[j] - mean[j]).abs());
            for k in 0..d {
                worst = worst.max((post.cov[(j, k)] - cov[(j, k)]).abs());
            }
        }
    }
    let t = start.elapsed();
    outcome(worst < 1e-8 && t.as_secs_f64() < 10.0, format!("50 experience sets, max element error {worst:.2e}, {}", secs(t)))
}

// ------------------------------------------------------------------- PR

fn pseudo_rewards() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut negative, mut nonzero_same, mut n) = (0, 0, 0);
    while n < 10_000 {
        let (b, truth) = random_belief(&mut rng);
        let open: Vec<usize> = b.unrevealed().collect();
        if open.is_empty() {
            continue;
        }
        n += 1;
        let next = b.reveal(open[rng.random_range(0..open.len())], &truth).unwrap();
        let pr = pseudo_reward(&b, &next).unwrap();
        negative += (pr < 0.0) as usize;
        nonzero_same += (b.greedy_path_index() == next.greedy_path_index() && pr != 0.0) as usize;
    }
    let spec = Arc::new(TrialSpec::layered(&[2], &[vec![-10.0, 10.0]], 1.0).unwrap());
    let b = BeliefState::new(spec);
    let tie = pseudo_reward(&b, &b.reveal(2, &GroundTruth { rewards: vec![0.0, -10.0, 10.0] }).unwrap()).unwrap();
    let t = start.elapsed();
    outcome(
        negative == 0 && nonzero_same == 0 && tie == 10.0 && t.as_secs_f64() < 10.0,
        format!("{n} transitions, {negative} negative, {nonzero_same} non-zero without a switch, tie-break PR = {tie}, {}", secs(t)),
    )
}

// ----------------------------------------------------------- likelihood

type TwoLeafTrial = (f64, f64, Vec<Computation>);

fn two_leaf_trials() -> Vec<TwoLeafTrial> {
    use Computation::*;
    vec![
        (10.0, -10.0, vec![Click(1), Terminate]),
        (-10.0, 10.0, vec![Click(2), Click(1), Terminate]),
        (10.0, 10.0, vec![Terminate]),
        (-10.0, -10.0, vec![Click(1), Terminate]),
    ]
}

fn two_leaf_record(trials: &[TwoLeafTrial]) -> ParticipantRecord {
    let spec = TrialSpec::layered(&[2], &[vec![-10.0, 10.0]], 1.0).unwrap();
    let trials = trials
        .iter()
        .map(|(r1, r2, comps)| {
            let truth = GroundTruth { rewards: vec![0.0, *r1, *r2] };
            let mut t = TrialRecord { spec: spec.clone(), truth, computations: comps.clone(), path: None, score: 0.0 };
            t.score = t.derived_score().unwrap();
            t
        })
        .collect();
    ParticipantRecord { version: 1, participant: "p".into(), condition: "two-leaf".into(), trials }
}

/// Strategy features of the two-leaf task, by hand.
fn hand_features(revealed: [Option<f64>; 3], c: Computation) -> Vec<f64> {
    let n_clicks = revealed.iter().filter(|v| v.is_some()).count() as f64;
    let best = revealed[1].unwrap_or(0.0).max(revealed[2].unwrap_or(0.0));
    match c {
        Computation::Terminate => vec![1.0, 1.0, 0.0, 0.0, 0.0, best, 0.0, 0.0, 0.0, 0.0, 0.0, n_clicks, 0.0],
        Computation::Click(_) => vec![1.0, 0.0, -1.0, 1.0, 0.0, 0.0, 100.0, 10.0, -10.0, 0.0, 1.0, 0.0, 1.0],
    }
}

fn hand_loglik(
    trials: &[TwoLeafTrial],
    value: &mut dyn FnMut([Option<f64>; 3], Computation) -> f64,
    learn: &mut dyn FnMut(Computation),
) -> f64 {
    let mut ll = 0.0;
    for (r1, r2, comps) in trials {
        let truth = [0.0, *r1, *r2];
        let mut revealed = [None; 3];
        for &c in comps {
            let mut opts = vec![Computation::Terminate];
            opts.extend((1..=2).filter(|&i| revealed[i].is_none()).map(Computation::Click));
            let values: Vec<f64> = opts.iter().map(|&o| value(revealed, o)).collect();
            ll += log_softmax_at(&values, opts.iter().position(|&o| o == c).unwrap());
            learn(c);
            if let Computation::Click(i) = c {
                revealed[i] = Some(truth[i]);
            }
        }
    }
    ll
}

fn likelihood() -> Outcome {
    let reg = FeatureRegistry::default_registry();
    let trials = two_leaf_trials();
    let rec = two_leaf_record(&trials);
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut w: Vec<f64> = reg.strategy_view().defs().iter().map(|d| rng.random_range(-2.0..2.0) / d.scale).collect();
        w[0] = 0.0;
        let params = ModelParams { learner: LearnerParams::NonLearning { weights: w.clone() }, stop: None };
        let (ll, _) = sequence_loglik(&ModelConfig::new(Base::NonLearning), &params, &rec, &reg, 0).unwrap();
        let mut value = |rev: [Option<f64>; 3], c: Computation| hand_features(rev, c).iter().zip(&w).map(|(x, y)| x * y).sum();
        worst = worst.max((ll - hand_loglik(&trials, &mut value, &mut |_| {})).abs());

        let hw = HabitWeights {
            node: rng.random_range(-2.0..2.0),
            branch: rng.random_range(-2.0..2.0),
            level: rng.random_range(-2.0..2.0),
            termination_bias: rng.random_range(-3.0..3.0),
        };
        let params = ModelParams { learner: LearnerParams::Habit(hw), stop: None };
        let (ll, _) = sequence_loglik(&ModelConfig::new(Base::Habit), &params, &rec, &reg, 0).unwrap();
        let counts = std::cell::RefCell::new([0.0f64; 3]);
        let mut value = |_: [Option<f64>; 3], c: Computation| {
            let k = counts.borrow();
            match c {
                Computation::Terminate => hw.termination_bias,
                Computation::Click(i) => (hw.node + hw.branch) * k[i] + hw.level * (k[1] + k[2]),
            }
        };
        let mut learn = |c: Computation| {
            if let Computation::Click(i) = c {
                counts.borrow_mut()[i] += 1.0;
            }
        };
        worst = worst.max((ll - hand_loglik(&trials, &mut value, &mut learn)).abs());
    }
    outcome(worst < 1e-9, format!("20 non-learning + 20 habit parameter sets, max |Δ loglik| {worst:.2e}"))
}

// ------------------------------------------------------------- stopping

fn stopping() -> Outcome {
    let half = [0.01, 0.5, 1.0, 20.0].iter().all(|&tau| tempered_sigmoid(0.0, tau) == 0.5);
    let spec = Arc::new(make_condition_env(ConditionId::Exp1Far, 3).unwrap().0);
    let b0 = BeliefState::new(spec.clone());
    let eta = (b0.best_path_value() - spec.v_min()) / (spec.v_max() - spec.v_min());
    let at_eta = StoppingRule::Fixed { eta, tau: 0.7 }.stop_probability_given(&b0, None).unwrap();
    let leaf = *spec.paths()[0].last().unwrap();
    let mut monotone = true;
    for rule in [
        StoppingRule::Fixed { eta: 0.4, tau: 0.3 },
        StoppingRule::Decreasing { a: 0.5, b: -1.0, tau: 10.0 },
        StoppingRule::past_performance(4.0, 10.0),
    ] {
        let mut last = -1.0;
        for k in 0..=40 {
            let mut rewards = vec![0.0; spec.n_nodes()];
            rewards[leaf] = -60.0 + 3.0 * k as f64;
            let b = b0.reveal(leaf, &GroundTruth { rewards }).unwrap();
            if b.best_path_value() <= b0.best_path_value() {
                continue;
            }
            let p = rule.marginal_stop_probability(&b).unwrap();
            monotone &= p > last;
            last = p;
        }
    }
    outcome(
        half && (at_eta - 0.5).abs() < 1e-12 && monotone,
        format!("σ(0,τ) = 0.5: {half}; fixed rule at η: {at_eta}; strictly increasing in 𝕄 for all rules: {monotone}"),
    )
}

// ----------------------------------------------------------- statistics

fn statistics() -> Outcome {
    let mut notes = Vec::new();
    let s1 = mann_kendall(&[1.0, 3.0, 2.0, 4.0]).unwrap().s;
    let mut ok = s1 == 4;
    notes.push(format!("S(1,3,2,4) = {s1}"));
    for n in 3..60i64 {
        let up: Vec<f64> = (0..n).map(|i| i as f64 * 1.5).collect();
        let down: Vec<f64> = up.iter().rev().copied().collect();
        ok &= mann_kendall(&up).unwrap().s == n * (n - 1) / 2 && mann_kendall(&down).unwrap().s == -n * (n - 1) / 2;
    }
    notes.push(format!("monotone |S| = n(n-1)/2: {ok}"));
    let b1 = bic(-7.0, 0, 10).unwrap();
    let b2 = bic(-100.0, 3, 500).unwrap();
    let bic_ok = b1 == 14.0 && (b2 - (3.0 * 500f64.ln() + 200.0)).abs() < 1e-12 && (bic(0.0, 2, 1).unwrap()).abs() < 1e-15;
    ok &= bic_ok;
    notes.push(format!("BIC spot values: {bic_ok}"));

    let names = |k: usize, p: &str| (0..k).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let sym = EvidenceMatrix::new(names(10, "s"), names(2, "m"), vec![vec![-50.0, -50.0]; 10]).unwrap();
    let r = rfx_bms(&sym, 10_000, 1).unwrap().r;
    let sym_ok = (r[0] - 0.5).abs() < 1e-12 && (r[1] - 0.5).abs() < 1e-12;
    ok &= sym_ok;
    notes.push(format!("symmetric r = ({:.3}, {:.3})", r[0], r[1]));

    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| rng.random_range(-120.0..-40.0)).collect()).collect();
    let e = EvidenceMatrix::new(names(20, "s"), names(4, "m"), rows).unwrap();
    let model = rfx_bms(&e, 100_000, 7).unwrap();
    let fam = family_bms(&e, &partition_singletons(&e.models), 100_000, 7).unwrap();
    let fam_ok = model.r.iter().zip(&fam.r).all(|(a, b)| (a - b).abs() < 1e-12)
        && model.phi.iter().zip(&fam.phi).all(|(a, b)| (a - b).abs() < 1e-12);
    ok &= fam_ok;
    notes.push(format!("singleton families = models: {fam_ok}"));

    let other = rfx_bms(&e, 100_000, 8).unwrap();
    let drift = model.phi.iter().zip(&other.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ok &= drift <= 0.02;
    notes.push(format!("φ seed drift at 1e5 draws {drift:.4}"));
    outcome(ok, notes.join("; "))
}

// ------------------------------------------------------- model recovery

fn model_recovery() -> Outcome {
    let start = Instant::now();
    let reg = FeatureRegistry::default_registry();
    let fitted: Vec<ModelConfig> = ["reinforce", "habit", "non-learning"].iter().map(|m| m.parse().unwrap()).collect();
    let mut notes = Vec::new();
    let mut ok = true;
    for (truth, seed) in [("reinforce", 1000u64), ("habit", 2000)] {
        let config: ModelConfig = truth.parse().unwrap();
        let params = ParamSpace::for_config(&config, &reg).unwrap();
        let params = params.decode(&params.defaults()).unwrap();
        let cohort = simulate_cohort(&config, |_| params.clone(), ConditionId::Exp1Far, 30, 35, &reg, seed).unwrap();
        let jobs: Vec<(&ParticipantRecord, &ModelConfig)> =
            cohort.iter().flat_map(|t| fitted.iter().map(move |m| (&t.record, m))).collect();
        let results: Vec<_> = {
            use rayon::prelude::*;
            jobs.par_iter().map(|(rec, m)| fit_participant(m, rec, &reg, 100, seed).unwrap()).collect()
        };
        let matrix = mcrl_core::fitkit::bic_matrix(&results);
        let e = matrix.evidence().unwrap();
        let res = family_bms(&e, &partition_by_base(&matrix.models), 100_000, seed).unwrap();
        let top = (0..res.r.len()).max_by(|&a, &b| res.r[a].total_cmp(&res.r[b])).unwrap();
        let j = res.labels.iter().position(|l| l == truth).unwrap();
        let pass = top == j && res.phi[j] > 0.9;
        ok &= pass;
        let table: Vec<String> =
            res.labels.iter().zip(res.r.iter().zip(&res.phi)).map(|(l, (r, p))| format!("{l} r={r:.2} φ={p:.3}")).collect();
        notes.push(format!("{truth} cohort: {}", table.join(", ")));
    }
    let t = start.elapsed();
    ok &= t.as_secs_f64() <= 1800.0;
    notes.push(format!("2 × 30 agents × 3 models at budget 100 in {}", secs(t)));
    outcome(ok, notes.join("; "))
}

// -------------------------------------------------------------- phenomena

fn phenomena() -> Outcome {
    let reg = FeatureRegistry::default_registry();
    let config: ModelConfig = "reinforce".parse().unwrap();
    let space = ParamSpace::for_config(&config, &reg).unwrap();
    let params = space.decode(&space.defaults()).unwrap();
    let trend = |cond: ConditionId, m: Measure| {
        let traces = simulate_cohort(&config, |_| params.clone(), cond, 30, 35, &reg, 0).unwrap();
        aggregate_curves(&traces, m).unwrap().trend().unwrap()
    };
    let checks = [
        ("exp1-far adaptive ↑", trend(ConditionId::Exp1Far, Measure::Adaptive), 1),
        ("exp1-far score ↑", trend(ConditionId::Exp1Far, Measure::Score), 1),
        ("exp2 beneficial clicks ↑", trend(ConditionId::Exp2LowCostHighVariance, Measure::Clicks), 1),
        ("exp2 non-beneficial clicks ↓", trend(ConditionId::Exp2HighCostLowVariance, Measure::Clicks), -1),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, t, sign) in checks {
        let pass = t.s.signum() == sign && t.p < 0.05;
        ok &= pass;
        notes.push(format!("{name}: S={} p={:.2e} {}", t.s, t.p, if pass { "ok" } else { "FAIL" }));
    }
    outcome(ok, notes.join("; "))
}

// ------------------------------------------------------------ determinism

fn mcrl(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mcrl"))
        .args(args)
        .env_remove("MCRL_OUT")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("mcrl {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn run_pipeline(root: &Path) -> Result<(), String> {
    let p = |x: &str| root.join(x).to_string_lossy().into_owned();
    mcrl(&["gen-env", "--condition", "exp1-bestfirst", "--count", "5", "--seed", "2", "--out", &p("env")])?;
    mcrl(&["simulate", "--model", "reinforce,lvoc,habit", "--condition", "exp1-far,exp2-highcost-lowvariance", "--agents", "3", "--trials", "6", "--seed", "4", "--out", &p("sim")])?;
    mcrl(&["ingest", "--records", &p("sim/traces.jsonl"), "--normalized", &p("ingest/records.jsonl")])?;
    mcrl(&["fit", "--records", &p("sim/traces.jsonl"), "--models", "reinforce,lvoc-fixed,habit,non-learning", "--budget", "6", "--out", &p("fit")])?;
    mcrl(&["select", "--bic", &p("fit/bic.csv"), "--mc", "5000", "--out", &p("select")])?;
    mcrl(&["analyze", "--records", &p("sim/traces.jsonl"), "--out", &p("analyze")])?;
    mcrl(&["grid", "--manifest", &p("grid/grid.jsonl")])?;
    serve_sessions(&root.join("serve"))
}

/// Two identical uploads through the collection service.
fn serve_sessions(dir: &Path) -> Result<(), String> {
    use axum::body::Body;
    use axum::http::Request;
    use mcrl_cli::serve::{router, AppState};
    use mcrl_cli::session::{SessionUpload, TrialSet};
    use tower::ServiceExt;

    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let set = TrialSet::generate(ConditionId::Exp1Far, 3, 0).map_err(|e| e.to_string())?;
    let app = router(Arc::new(AppState::new(set.clone(), dir.join("sessions.jsonl"))), None);
    let mut rec = ParticipantRecord { version: 1, participant: "det".into(), condition: set.condition.clone(), trials: Vec::new() };
    for f in &set.trials {
        let mut t = TrialRecord { spec: f.spec.clone(), truth: f.truth.clone(), computations: vec![Computation::Click(3), Computation::Terminate], path: None, score: 0.0 };
        t.score = t.derived_score().map_err(|e| e.to_string())?;
        rec.trials.push(t);
    }
    let body = serde_json::to_string(&SessionUpload::from(&rec)).unwrap();
    let rt = tokio::runtime::Builder::new_current_thread().build().map_err(|e| e.to_string())?;
    for _ in 0..2 {
        let req = Request::post("/api/sessions").body(Body::from(body.clone())).unwrap();
        let res = rt.block_on(app.clone().oneshot(req)).unwrap();
        if res.status() != 201 {
            return Err(format!("upload returned {}", res.status()));
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if let Err(e) = run_pipeline(a.path()).and_then(|_| run_pipeline(b.path())) {
        return outcome(false, e);
    }
    let (fa, fb) = (files(a.path()), files(b.path()));
    let differing: Vec<String> = fa
        .iter()
        .filter(|(k, v)| fb.get(*k) != Some(v))
        .map(|(k, _)| k.display().to_string())
        .chain(fb.keys().filter(|k| !fa.contains_key(*k)).map(|k| k.display().to_string()))
        .collect();
    outcome(
        differing.is_empty(),
        format!("gen-env, simulate, ingest, fit, select, analyze, grid, serve: {} files, {} differ {:?}", fa.len(), differing.len(), differing),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient oracle", gradient),
        ("LVOC conjugacy oracle", lvoc),
        ("pseudo-reward properties", pseudo_rewards),
        ("likelihood oracle", likelihood),
        ("stopping-rule checks", stopping),
        ("statistics oracles", statistics),
        ("model recovery", model_recovery),
        ("qualitative phenomena", phenomena),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        failed += !o.pass as usize;
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
