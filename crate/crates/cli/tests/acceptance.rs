//! End-to-end acceptance checks. Prints one PASS or FAIL line per criterion
//! and exits non-zero when any criterion fails.
//!
//! `ACCEPTANCE_ONLY=4,5` restricts the run to the listed criteria.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparse_dve::analysis::{sparsify_fit, spread_study, SparsifyConfig, SpreadConfig};
use sparse_dve::dve::{cc_loss_value, combine, confusion, contribution, CCLossConfig};
use sparse_dve::numerics::{check_gradients, softmax, LstmState, ParamSet, Tape, Var};
use sparse_dve::ppo::update::{build_losses, Minibatch};
use sparse_dve::ppo::{compute_gae, LossWeights, PolicyValueNet, Segment};

const BIN: &str = env!("CARGO_BIN_EXE_sparse-dve");

type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Runs the binary; panics with its diagnostics when it fails.
fn cli(runs_root: &Path, args: &[&str]) -> String {
    let out = Command::new(BIN).args(args).env("SPARSE_DVE_RUNS_DIR", runs_root).env("RUST_LOG", "warn").output().unwrap();
    assert!(out.status.success(), "sparse-dve {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Column values of a small CSV, keyed by header.
fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines.map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(str::to_string)).collect()).collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("column {key} is not numeric"))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    softmax(&raw).unwrap()
}

fn formulas() -> Outcome {
    let start = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    let check = |failures: &mut Vec<String>, name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let sm = softmax(&[1.0, 2.0, 3.0]).unwrap();
    check(&mut failures, "softmax", [0.09003, 0.24473, 0.66524].iter().zip(&sm).all(|(e, v)| close(*e, *v, 5e-6)));
    check(&mut failures, "combine", close(combine(&[0.2, 0.8], &[1.0, -1.0]).unwrap(), -0.6, 1e-12));
    check(&mut failures, "confusion", close(confusion(&[0.5, 0.3, 0.2]).unwrap(), 1.0 / (3.0 * 0.38), 1e-12));
    check(&mut failures, "contribution", contribution(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap() == vec![0.25, 0.25]);
    check(&mut failures, "cc uniform", close(cc_loss_value(&[vec![vec![0.5, 0.5]]], 1.0, 1.0, 0.0).unwrap(), 0.5f64.ln(), 1e-12));
    check(
        &mut failures,
        "cc one-hot",
        close(cc_loss_value(&[vec![vec![1.0, 0.0]]], 1.0, 1.0, 0.0).unwrap(), 0.5f64.ln() + 0.25f64.ln(), 1e-12),
    );
    check(&mut failures, "simplex rejected", confusion(&[0.5, 0.6]).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_identity: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.random_range(1..=6);
        let len = rng.random_range(1..=20);
        let traj: Vec<Vec<f64>> = (0..len).map(|_| random_simplex(&mut rng, n)).collect();
        let deltas: Vec<f64> = traj.iter().map(|a| confusion(a).unwrap()).collect();
        let lo = 1.0 / n as f64;
        if deltas.iter().any(|&d| d < lo - 1e-12 || d > 1.0 + 1e-12) {
            failures.push(format!("delta outside [1/{n}, 1]"));
        }
        let rho = contribution(&traj).unwrap();
        worst_identity = worst_identity.max((rho.iter().sum::<f64>() - mean(&deltas)).abs());
    }
    check(&mut failures, "sum of rho equals mean delta", worst_identity <= 1e-12);
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && within(elapsed, 60);
    Outcome::new(
        ok,
        format!("failures {:?}, worst |sum rho - mean delta| {worst_identity:.1e}, {:.2}s", failures, elapsed.as_secs_f64()),
    )
}

const OBS: usize = 4;
const ACTIONS: usize = 3;
const HIDDEN: usize = 3;

fn random_segment(rng: &mut ChaCha8Rng, len: usize) -> Segment {
    let h: Vec<f64> = (0..HIDDEN).map(|_| rng.random_range(-0.5..0.5)).collect();
    let c: Vec<f64> = (0..HIDDEN).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut seg = Segment { init_state: LstmState { h, c }, ..Segment::default() };
    for t in 0..len {
        seg.obs.push((0..OBS).map(|_| rng.random_range(-1.0..1.0)).collect());
        seg.starts.push(t > 0 && rng.random_bool(0.2));
        seg.actions.push(rng.random_range(0..ACTIONS));
        seg.log_probs.push(rng.random_range(-2.0..-0.3));
        seg.rewards.push(rng.random_range(-1.0..1.0));
        seg.dones.push(false);
        seg.returns.push(rng.random_range(-2.0..2.0));
    }
    seg
}

#[derive(Clone, Copy, Debug)]
enum Term {
    Policy,
    Value,
    Entropy,
    Cc,
}

fn term_value(tape: &mut Tape, net: &PolicyValueNet, params: &ParamSet, mb: &Minibatch, term: Term) -> Var {
    let weights = LossWeights {
        clip: 0.2,
        value_coef: 0.5,
        entropy_coef: 0.01,
        boost_scale: 1.0,
        cc: CCLossConfig { k1: 0.7, k2: 0.4, assignments_only: false, ..CCLossConfig::pre_boost() },
    };
    let terms = build_losses(tape, &net.arch, params, mb, &weights).unwrap();
    match term {
        Term::Policy => terms.policy,
        Term::Value => terms.value,
        Term::Entropy => terms.entropy,
        Term::Cc => terms.cc.unwrap(),
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0, String::new());
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let net = PolicyValueNet::new(&mut rng, OBS, ACTIONS, 3, HIDDEN, 3);
        let segs: Vec<Segment> = (0..2).map(|_| random_segment(&mut rng, 5)).collect();
        let advs: Vec<Vec<f64>> = (0..2).map(|_| (0..5).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
        let seg_refs: Vec<&Segment> = segs.iter().collect();
        let adv_refs: Vec<&[f64]> = advs.iter().map(Vec::as_slice).collect();
        let mb = Minibatch::build(&seg_refs, &adv_refs).unwrap();
        for term in [Term::Policy, Term::Value, Term::Entropy, Term::Cc] {
            let mut tape = Tape::new();
            let out = term_value(&mut tape, &net, &net.params, &mb, term);
            let analytic = tape.backward(out, &net.params).unwrap();
            let report = check_gradients(&net.params, &analytic, 1e-5, 1e-6, |p| {
                let mut tape = Tape::new();
                let v = term_value(&mut tape, &net, p, &mb, term);
                Ok(tape.value(v).item())
            })
            .unwrap();
            if report.max_rel_error > worst.0 {
                worst = (report.max_rel_error, format!("seed {seed} {term:?}"));
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst.0 <= 1e-4 && within(elapsed, 120),
        format!("worst relative error {:.2e} ({}), {:.2}s", worst.0, worst.1, elapsed.as_secs_f64()),
    )
}

fn brute_force_gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let td = |t: usize| {
        let next = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        rewards[t] + gamma * next * live - values[t]
    };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for k in 0..n - t {
                total += (gamma * lambda).powi(k as i32) * td(t + k);
                if dones[t + k] {
                    break;
                }
            }
            total
        })
        .collect()
}

fn gae() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=50);
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.15)).collect();
        let bootstrap = rng.random_range(-3.0..3.0);
        let gamma = rng.random_range(0.8..1.0);
        let lambda = rng.random_range(0.0..1.0);
        let (adv, _) = compute_gae(&rewards, &values, &dones, Some(bootstrap), gamma, lambda).unwrap();
        let oracle = brute_force_gae(&rewards, &values, &dones, bootstrap, gamma, lambda);
        worst = adv.iter().zip(&oracle).fold(worst, |w, (a, o)| w.max((a - o).abs()));
    }
    let elapsed = start.elapsed();
    Outcome::new(worst <= 1e-10 && within(elapsed, 60), format!("max |error| {worst:.1e}, {:.2}s", elapsed.as_secs_f64()))
}

fn sparsification() -> Outcome {
    let start = Instant::now();
    let report = sparsify_fit(&SparsifyConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let (first, last) = (report.first(), report.last());
    let ok = first.median_max_alpha < 0.6 && last.median_max_alpha >= 0.99 && report.delta_is_monotone() && within(elapsed, 60);
    Outcome::new(
        ok,
        format!(
            "median max alpha {:.4} -> {:.4}, mean delta {:.4} -> {:.4}, monotone {}, {:.2}s",
            first.median_max_alpha,
            last.median_max_alpha,
            first.mean_delta,
            last.mean_delta,
            report.delta_is_monotone(),
            elapsed.as_secs_f64()
        ),
    )
}

fn spread() -> Outcome {
    let start = Instant::now();
    let report = spread_study(&SpreadConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("seed {}: spread {:.3}/{:.3} error {:.4}/{:.4}", r.seed, r.mse.spread, r.sparse.spread, r.mse.mean_abs_error, r.sparse.mean_abs_error))
        .collect();
    Outcome::new(
        report.wins() >= 4 && within(elapsed, 120),
        format!("{} of {} seeds wider and more accurate (mse/sparse) [{}], {:.2}s", report.wins(), report.rows.len(), rows.join("; "), elapsed.as_secs_f64()),
    )
}

/// Shared training runs for the directional and correlation criteria.
struct Runs {
    root: PathBuf,
}

const NET: [&str; 6] = ["--set", "ppo.lr=0.002", "--set", "net.hidden=32", "--set", "net.encoder=32"];

impl Runs {
    fn train(&self, name: &str, sets: &[String]) -> PathBuf {
        let dir = self.root.join(name);
        if !dir.join("manifest.json").exists() {
            let mut args: Vec<&str> = vec!["train", "--name", name];
            args.extend(NET);
            for s in sets {
                args.extend(["--set", s.as_str()]);
            }
            cli(&self.root, &args);
        }
        dir
    }

    fn corridor(&self, mode: &str, seed: u64) -> PathBuf {
        self.train(
            &format!("corridor-{mode}-{seed}"),
            &[format!("mode={mode}"), format!("seed={seed}"), "ppo.total_steps=200000".into(), "dve.boost=pre".into()],
        )
    }

    fn fruit(&self, mode: &str, seed: u64) -> PathBuf {
        self.train(
            &format!("fruit-{mode}-{seed}"),
            &[
                format!("mode={mode}"),
                format!("seed={seed}"),
                "env.name=fruit-line".into(),
                "ppo.total_steps=500000".into(),
                "dve.boost=post".into(),
            ],
        )
    }

    /// Held-out evaluation of a run's final checkpoint: (reward, episode length).
    fn evaluate(&self, run: &Path) -> (f64, f64) {
        let out = run.join("final-eval");
        if !out.join("eval.csv").exists() {
            let ckpt = run.join("checkpoints").join("latest.ckpt");
            cli(&self.root, &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        }
        let row = &read_csv(&out.join("eval.csv"))[0];
        (num(row, "mean_reward"), num(row, "mean_episode_length"))
    }
}

fn directionality(runs: &Runs) -> Outcome {
    let start = Instant::now();
    let mut corridor: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for mode in ["rl2", "dve", "sparse-dve"] {
        for seed in 0..3 {
            let run = runs.corridor(mode, seed);
            corridor.entry(mode).or_default().push(runs.evaluate(&run));
        }
    }
    let corridor_elapsed = start.elapsed();
    let avg = |mode: &str, pick: fn(&(f64, f64)) -> f64| mean(&corridor[mode].iter().map(pick).collect::<Vec<_>>());
    let reward = |m: &str| avg(m, |r| r.0);
    let length = |m: &str| avg(m, |r| r.1);
    let corridor_ok = reward("sparse-dve") >= reward("dve") && length("sparse-dve") <= length("dve") && reward("rl2") <= reward("dve");

    let mut fruit_wins = 0;
    let mut fruit_rows = Vec::new();
    let mut triggered = 0;
    for seed in 0..3 {
        let dve = runs.evaluate(&runs.fruit("dve", seed)).0;
        let sparse_run = runs.fruit("sparse-dve", seed);
        let sparse = runs.evaluate(&sparse_run).0;
        if read_csv(&sparse_run.join("metrics.csv")).iter().any(|r| num(r, "boost_scale") > 0.0) {
            triggered += 1;
        }
        fruit_wins += usize::from(sparse >= dve);
        fruit_rows.push(format!("{dve:.2}/{sparse:.2}"));
    }
    let elapsed = start.elapsed();
    let ok = corridor_ok && fruit_wins >= 2 && within(elapsed, 15 * 60);
    Outcome::new(
        ok,
        format!(
            "corridor reward rl2 {:.3} dve {:.3} sparse {:.3}, length dve {:.2} sparse {:.2} ({:.0}s); \
             fruit dve/sparse reward [{}], sparse wins {fruit_wins} of 3, post boost fired in {triggered} of 3; {:.0}s total",
            reward("rl2"),
            reward("dve"),
            reward("sparse-dve"),
            length("dve"),
            length("sparse-dve"),
            corridor_elapsed.as_secs_f64(),
            fruit_rows.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn correlation(runs: &Runs) -> Outcome {
    let dirs: Vec<PathBuf> = (0..4).map(|s| runs.corridor("dve", s)).collect();
    let out = runs.root.join("correlation");
    let mut args: Vec<String> = vec!["analyze".into(), "correlation".into(), "--out".into(), out.display().to_string()];
    for d in &dirs {
        args.extend(["--run".to_string(), d.display().to_string()]);
    }
    cli(&runs.root, &args.iter().map(String::as_str).collect::<Vec<_>>());
    let row = &read_csv(&out.join("correlation.csv"))[0];
    let r = num(row, "pearson_r");
    Outcome::new(r > 0.0, format!("pearson r {r:.4} over {} samples from 4 runs; above 0.5: {}", row["samples"], r > 0.5))
}

fn partition(runs: &Runs) -> Outcome {
    let run = runs.corridor("sparse-dve", 0);
    let out = runs.root.join("partition");
    let ckpt = run.join("checkpoints").join("latest.ckpt");
    let start = Instant::now();
    cli(&runs.root, &["analyze", "partition", "--checkpoint", ckpt.to_str().unwrap(), "--samples", "2000", "--out", out.to_str().unwrap()]);
    let elapsed = start.elapsed();
    let row = &read_csv(&out.join("association.csv"))[0];
    let clusters = read_csv(&out.join("clusters.csv"));
    let covered: f64 = clusters.iter().map(|c| num(c, "states")).sum();
    let (share, p) = (num(row, "confident_share"), num(row, "p_value"));
    let is_partition = covered == num(row, "states");
    Outcome::new(
        is_partition && share >= 0.9 && p < 0.05 && within(elapsed, 120),
        format!(
            "partition {is_partition}, {:.1}% states with max alpha >= 0.9, chi-square p {p:.3e}, cluster sizes {:?}, {:.1}s",
            100.0 * share,
            clusters.iter().map(|c| c["states"].clone()).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    )
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(csv_files(&p));
        } else if p.extension().is_some_and(|x| x == "csv") {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn determinism(root: &Path) -> Outcome {
    let mut compared = 0;
    let mut differing = Vec::new();
    let produce = |tag: &str| -> PathBuf {
        let base = root.join(format!("repeat-{tag}"));
        let run = base.join("run");
        let train = ["train", "--out", run.to_str().unwrap(), "--set", "mode=sparse-dve", "--set", "ppo.total_steps=8192", "--set", "eval.every=4", "--set", "eval.episodes=10"];
        cli(root, &train);
        let ckpt = run.join("checkpoints").join("latest.ckpt");
        let ckpt = ckpt.to_str().unwrap();
        cli(root, &["eval", "--checkpoint", ckpt, "--out", base.join("eval").to_str().unwrap()]);
        cli(root, &["analyze", "partition", "--checkpoint", ckpt, "--samples", "300", "--out", base.join("partition").to_str().unwrap()]);
        cli(root, &["analyze", "sparsify", "--iterations", "60", "--out", base.join("sparsify").to_str().unwrap()]);
        cli(root, &["analyze", "spread", "--seeds", "2", "--iterations", "60", "--out", base.join("spread").to_str().unwrap()]);
        cli(
            root,
            &["analyze", "efficiency", "--agent", &format!("a={ckpt}"), "--agent", &format!("b={ckpt}"), "--episodes", "8", "--out", base.join("efficiency").to_str().unwrap()],
        );
        base
    };
    let (a, b) = (produce("a"), produce("b"));
    let files_a = csv_files(&a);
    for fa in &files_a {
        let rel = fa.strip_prefix(&a).unwrap();
        compared += 1;
        if fs::read(fa).ok() != fs::read(b.join(rel)).ok() {
            differing.push(rel.display().to_string());
        }
    }
    Outcome::new(
        differing.is_empty() && compared >= 10,
        format!("{compared} CSV files compared across two identical invocations, differing {differing:?}"),
    )
}

fn main() {
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let keep = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let tmp = tempfile::tempdir().unwrap();
    let runs = Runs { root: tmp.path().join("runs") };
    fs::create_dir_all(&runs.root).unwrap();

    let criteria: Vec<Criterion> = vec![
        (1, "formula suite", Box::new(formulas)),
        (2, "gradient oracle", Box::new(gradients)),
        (3, "advantage oracle", Box::new(gae)),
        (4, "sparsification", Box::new(sparsification)),
        (5, "cluster-mean spread", Box::new(spread)),
        (6, "training directionality", Box::new(|| directionality(&runs))),
        (7, "confusion-reward correlation", Box::new(|| correlation(&runs))),
        (8, "state partition", Box::new(|| partition(&runs))),
        (9, "determinism", Box::new(|| determinism(&runs.root))),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria.iter().filter(|c| keep(c.0)) {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Outcome::new(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += usize::from(!outcome.pass);
        println!("{} criterion {n} ({name}): {}", if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
