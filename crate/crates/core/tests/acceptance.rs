//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use covcal::affected_sets::AffectedSets;
use covcal::conformal_core::{
    calibrate, conformal_quantile, conformal_rank, corrected_alpha, g_bound, InfeasiblePolicy,
    RecoveryParams,
};
use covcal::descendant_discovery::intersect_descendants;
use covcal::experiments::{
    diversity_violation_example, run_ablation, run_main, run_real, simulate_recovery, ExperimentConfig, GraphFamily,
    Method, RealConfig, Report,
};
use covcal::ingest::load_lfc_csv;
use covcal::local_icp::weighted_conformal_quantile;
use covcal::output::write_records_csv;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

const ALPHA: f64 = 0.1;

fn workspace_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(ok: bool, msg: String, failures: &mut Vec<String>) {
    if !ok {
        failures.push(msg);
    }
}

fn outcome(failures: Vec<String>, summary: String) -> Outcome {
    if failures.is_empty() {
        Outcome { pass: true, detail: summary }
    } else {
        Outcome { pass: false, detail: format!("{summary}; failed: {}", failures.join("; ")) }
    }
}

fn headline(report: &Report, m: Method, delta: Option<f64>) -> (f64, f64) {
    let r = report.row(m, delta).unwrap_or_else(|| panic!("missing row {m} {delta:?}"));
    (r.coverage, r.mean_width.unwrap_or(f64::INFINITY))
}

// --- 1: main synthetic experiment -------------------------------------------

fn criterion_main() -> Outcome {
    let mut fails = Vec::new();
    let cfg = ExperimentConfig::load(&workspace_path("configs/table1.json")).expect("table1 config");
    assert_eq!((cfg.p, cfg.n_interventions, cfg.seeds.len()), (200, 150, 20));
    let t = Instant::now();
    let rep = run_main(&cfg).expect("main run");
    let full_time = t.elapsed();
    let targets = [
        (Method::Oracle, 0.901, 0.01, 3.35),
        (Method::Estimated, 0.899, 0.01, 3.32),
        (Method::Pooled, 0.899, 0.01, 3.32),
        (Method::Corrected, 0.918, 0.015, 3.58),
    ];
    let mut parts = Vec::new();
    for &(m, cov, tol, width) in &targets {
        let (c, w) = headline(&rep, m, None);
        parts.push(format!("{m} {c:.4}/{w:.3}"));
        check((c - cov).abs() <= tol, format!("{m} coverage {c:.4} vs {cov}±{tol}"), &mut fails);
        check((w - width).abs() <= 0.10, format!("{m} width {w:.3} vs {width}±0.10"), &mut fails);
    }
    let dh = rep.row(Method::Estimated, None).and_then(|r| r.mean_delta_hat).unwrap_or(f64::NAN);
    check(dh <= 0.05, format!("estimated delta_hat {dh:.4} > 0.05"), &mut fails);
    check(full_time <= Duration::from_secs(600), format!("full run took {full_time:?}"), &mut fails);

    let ci = ExperimentConfig::load(&workspace_path("configs/table1_ci.json")).expect("ci config");
    assert_eq!((ci.p, ci.n_interventions, ci.seeds.len()), (100, 60, 5));
    let t = Instant::now();
    let ci_rep = run_main(&ci).expect("ci run");
    let ci_time = t.elapsed();
    let mut ci_parts = Vec::new();
    for &(m, cov, tol, _) in &targets {
        let (c, _) = headline(&ci_rep, m, None);
        ci_parts.push(format!("{c:.4}"));
        let tol = tol + 0.01;
        check((c - cov).abs() <= tol, format!("CI {m} coverage {c:.4} vs {cov}±{tol}"), &mut fails);
    }
    check(ci_time <= Duration::from_secs(60), format!("CI run took {ci_time:?}"), &mut fails);
    outcome(
        fails,
        format!(
            "{}; delta_hat {dh:.4}; {:.1}s | CI coverage {} in {:.1}s",
            parts.join(", "),
            full_time.as_secs_f64(),
            ci_parts.join("/"),
            ci_time.as_secs_f64()
        ),
    )
}

// --- 2: contamination ablation ----------------------------------------------

fn ablation_records() -> (Report, Vec<f64>) {
    let cfg = ExperimentConfig::load(&workspace_path("configs/ablation.json")).expect("ablation config");
    let deltas = cfg.delta_inject.clone();
    (run_ablation(&cfg).expect("ablation run"), deltas)
}

fn records_bytes(rep: &Report) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records_csv(&mut buf, &rep.records).expect("in-memory csv");
    buf
}

fn criterion_ablation(rep: &Report, deltas: &[f64]) -> Outcome {
    let mut fails = Vec::new();
    let want_delta = [0.0, 0.05, 0.1, 0.15, 0.2, 0.3];
    assert_eq!(deltas, want_delta, "bundled ablation grid");
    let est_cov = [0.905, 0.901, 0.895, 0.889, 0.882, 0.867];
    let corr_width = [3.38, 4.09, 5.52, 5.48, 5.44, 5.35];
    let seeds: BTreeSet<u64> = rep.records.iter().map(|r| r.seed).collect();
    check(seeds.len() == 30, format!("{} seeds", seeds.len()), &mut fails);
    let mut est = Vec::new();
    let mut corr = Vec::new();
    for (k, &d) in deltas.iter().enumerate() {
        let (ec, _) = headline(rep, Method::Estimated, Some(d));
        let (cc, cw) = headline(rep, Method::Corrected, Some(d));
        est.push(format!("{ec:.4}"));
        corr.push(format!("{cc:.3}/{cw:.2}"));
        check((ec - est_cov[k]).abs() <= 0.015, format!("estimated@{d} {ec:.4} vs {}±0.015", est_cov[k]), &mut fails);
        if d >= 0.05 {
            check(cc >= 0.95, format!("corrected@{d} coverage {cc:.4} < 0.95"), &mut fails);
        }
        check((cw - corr_width[k]).abs() <= 0.2, format!("corrected@{d} width {cw:.3} vs {}±0.2", corr_width[k]), &mut fails);
    }
    outcome(fails, format!("estimated {} | corrected cov/width {}", est.join(" "), corr.join(" ")))
}

// --- 3 and 4: contamination bound and corrected level -----------------------

#[derive(Clone, Copy, Debug)]
enum Bad {
    Zeros,
    HalfNormal(f64),
}

impl Bad {
    fn draw<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            Bad::Zeros => 0.0,
            Bad::HalfNormal(s) => Normal::new(0.0, s).unwrap().sample(rng).abs(),
        }
    }
}

const TRIALS: usize = 100_000;
const GRID: [(usize, f64); 3] = [(20, 0.1), (50, 0.2), (121, 0.3)];
const BADS: [Bad; 3] = [Bad::Zeros, Bad::HalfNormal(0.15), Bad::HalfNormal(5.0)];

/// Coverage of the standard and corrected intervals when `n - m` of `n`
/// calibration scores come from `bad` and the rest match the test law.
fn contaminated_coverage(n: usize, delta: f64, bad: Bad, seed: u64) -> (f64, f64, usize) {
    let n_bad = (delta * n as f64).round() as usize;
    let m = n - n_bad;
    let good = Normal::new(0.0f64, 1.0).unwrap();
    let corrected = corrected_alpha(ALPHA, delta, n).alpha_prime;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut hit, mut hit_corr) = (0usize, 0usize);
    let mut cal = vec![0.0; n];
    for _ in 0..TRIALS {
        for (j, c) in cal.iter_mut().enumerate() {
            *c = if j < m { good.sample(&mut rng).abs() } else { bad.draw(&mut rng) };
        }
        let y = good.sample(&mut rng).abs();
        hit += usize::from(y <= conformal_quantile(&cal, ALPHA));
        hit_corr += usize::from(y <= calibrate(&cal, corrected, InfeasiblePolicy::Infinite).q);
    }
    (hit as f64 / TRIALS as f64, hit_corr as f64 / TRIALS as f64, m)
}

fn se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt().max(1e-12)
}

fn criteria_bound() -> (Outcome, Outcome) {
    let cells: Vec<(usize, f64, Bad)> =
        GRID.iter().flat_map(|&(n, d)| BADS.iter().map(move |&b| (n, d, b))).collect();
    let results: Vec<(usize, f64, Bad, f64, f64, usize)> = cells
        .par_iter()
        .enumerate()
        .map(|(k, &(n, d, b))| {
            let (c, cc, m) = contaminated_coverage(n, d, b, 1000 + k as u64);
            (n, d, b, c, cc, m)
        })
        .collect();
    let (mut f3, mut f4) = (Vec::new(), Vec::new());
    let mut worst_slack = f64::INFINITY;
    let mut tight = Vec::new();
    let mut corr_min = f64::INFINITY;
    for &(n, d, b, c, cc, m) in &results {
        let bound = 1.0 - ALPHA - g_bound(d, n);
        let s = se(c, TRIALS);
        worst_slack = worst_slack.min((c - bound) / s);
        check(c >= bound - 3.0 * s, format!("({n},{d},{b:?}) coverage {c:.4} < bound {bound:.4} - 3SE"), &mut f3);
        if matches!(b, Bad::Zeros) {
            let k = conformal_rank(n, ALPHA);
            let exact = (k - (n - m)) as f64 / (m + 1) as f64;
            tight.push(format!("n={n}: {c:.4}~{exact:.4}"));
            check((c - exact).abs() <= 3.0 * s, format!("({n},{d}) adversarial {c:.4} vs exact {exact:.4}"), &mut f3);
        }
        corr_min = corr_min.min(cc);
        check(cc >= 1.0 - ALPHA, format!("({n},{d},{b:?}) corrected coverage {cc:.4} < 0.9"), &mut f4);
    }
    (
        outcome(f3, format!("9 cells x {TRIALS} trials, min (cov-bound)/SE {worst_slack:.1}; tightness {}", tight.join(", "))),
        outcome(f4, format!("min corrected coverage {corr_min:.4} over 9 cells")),
    )
}

// --- 5: exchangeable baseline ------------------------------------------------

fn criterion_exchangeable() -> Outcome {
    let mut fails = Vec::new();
    let mut parts = Vec::new();
    for (k, &m) in [9usize, 19, 99].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(77 + k as u64);
        let mut cal = vec![0.0; m];
        let mut hit = 0usize;
        for _ in 0..TRIALS {
            cal.iter_mut().for_each(|c| *c = rng.random::<f64>());
            hit += usize::from(rng.random::<f64>() <= conformal_quantile(&cal, ALPHA));
        }
        let c = hit as f64 / TRIALS as f64;
        let s = se(c, TRIALS);
        let hi = 1.0 - ALPHA + 1.0 / (m + 1) as f64;
        parts.push(format!("m={m}: {c:.4} in [0.9, {hi:.4}]"));
        check(c >= 1.0 - ALPHA - 3.0 * s && c <= hi + 3.0 * s, format!("m={m} coverage {c:.4}"), &mut fails);
    }
    outcome(fails, parts.join(", "))
}

// --- 6: descendant recovery guarantees -----------------------------------------------

fn criterion_recovery() -> Outcome {
    let mut fails = Vec::new();
    let params = RecoveryParams { eps_fn: 0.01, eps_fp: 0.05, eps_cx: 0.0, u_bar: 0 };
    let r = simulate_recovery(&params, GraphFamily::ChainAndTree, 200, 2024);
    check(
        r.superset_failure_rate <= r.union_bound + 3.0 * r.superset_se(),
        format!("superset failure {:.4} > union bound {:.4} + 3SE", r.superset_failure_rate, r.union_bound),
        &mut fails,
    );
    check(
        r.zhat_fpr <= r.eps_cx_estimate + 3.0 * r.fpr_se(),
        format!("FPR {:.4} > eps_cx {:.4} + 3SE", r.zhat_fpr, r.eps_cx_estimate),
        &mut fails,
    );
    let (_, _, _, _, retained) = diversity_violation_example();
    check(retained, "diversity violation did not retain the false positive".into(), &mut fails);
    outcome(
        fails,
        format!(
            "superset failure {:.4} (bound {:.4}, {} checks); FPR {:.4} (eps_cx {:.4}, {} pairs); violation retained {retained}",
            r.superset_failure_rate, r.union_bound, r.superset_checks, r.zhat_fpr, r.eps_cx_estimate, r.diverse_pairs
        ),
    )
}

// --- 7: noiseless descendant recovery, exhaustive ----------------------------

/// Transitive closure of an adjacency bitmask (bit j of `adj[i]` = edge i→j).
fn closure(adj: &[u8]) -> Vec<u8> {
    let p = adj.len();
    let mut r = adj.to_vec();
    for k in 0..p {
        for i in 0..p {
            if r[i] >> k & 1 == 1 {
                r[i] |= r[k];
            }
        }
    }
    r
}

fn diversity_holds(desc: &[u8]) -> bool {
    let p = desc.len();
    (0..p).all(|a| {
        let upstream: Vec<usize> = (0..p).filter(|&b| b != a && desc[b] >> a & 1 == 1).collect();
        upstream.is_empty()
            || (0..p)
                .filter(|&i| i != a && desc[a] >> i & 1 == 0)
                .all(|i| upstream.iter().any(|&b| desc[b] >> i & 1 == 0))
    })
}

fn to_sets(bits: &[u8]) -> BTreeMap<usize, BTreeSet<usize>> {
    let p = bits.len();
    (0..p).map(|a| (a, (0..p).filter(|&i| bits[a] >> i & 1 == 1).collect())).collect()
}

fn criterion_exhaustive() -> Outcome {
    let mut fails = Vec::new();
    let mut parts = Vec::new();
    for p in 1..=7usize {
        let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| ((i + 1)..p).map(move |j| (i, j))).collect();
        let total = 1u64 << pairs.len();
        let (checked, mismatches) = (0..total)
            .into_par_iter()
            .map(|mask| {
                let mut adj = vec![0u8; p];
                for (e, &(i, j)) in pairs.iter().enumerate() {
                    if mask >> e & 1 == 1 {
                        adj[i] |= 1 << j;
                    }
                }
                let desc = closure(&adj);
                if !diversity_holds(&desc) {
                    return (0u64, 0u64);
                }
                let truth = to_sets(&desc);
                let got = intersect_descendants(&AffectedSets::new(0.0, truth.clone()));
                (1, u64::from(got != truth))
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        parts.push(format!("p={p}: {checked}/{total}"));
        check(mismatches == 0, format!("p={p}: {mismatches} mismatches"), &mut fails);
    }
    outcome(fails, format!("diverse DAGs checked {}", parts.join(", ")))
}

// --- 8: weighted quantile reduction -------------------------------------------

fn criterion_weighted() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0usize;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=200);
        let alpha = rng.random_range(0.01..0.5);
        let w = rng.random_range(0.1..10.0);
        let scores: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.2 { rng.random_range(0..5) as f64 } else { rng.random::<f64>() * 10.0 })
            .collect();
        let a = weighted_conformal_quantile(&scores, &vec![w; n], w, alpha);
        let b = conformal_quantile(&scores, alpha);
        mismatches += usize::from(a.to_bits() != b.to_bits());
    }
    let fails = if mismatches == 0 { vec![] } else { vec![format!("{mismatches} mismatches")] };
    outcome(fails, "10000 random inputs, exact equality".into())
}

// --- 9: real-data pipeline on the bundled screen -------------------------------

fn criterion_real() -> Outcome {
    let mut fails = Vec::new();
    let m = load_lfc_csv(&workspace_path("data/toy_lfc.csv")).expect("bundled screen");
    check(m.n_perturbations() == 50 && m.n_genes() == 2000, format!("shape {:?}", m.lfc.dim()), &mut fails);
    let cfg = RealConfig::load(&workspace_path("configs/real.json")).expect("real config");
    let rep = run_real(&m, &cfg).expect("real run");
    let mut parts = Vec::new();
    for row in &rep.rows {
        let above = row.coverage >= 1.0 - ALPHA;
        let should = row.method == Method::Corrected;
        parts.push(format!("{} {:.4}", row.method, row.coverage));
        check(above == should, format!("{} coverage {:.4}", row.method, row.coverage), &mut fails);
        match row.coverage_sd {
            Some(sd) => check(sd <= 0.01, format!("{} bootstrap SD {sd:.4}", row.method), &mut fails),
            None => fails.push(format!("{} has no bootstrap SD", row.method)),
        }
    }
    let corr = rep.row(Method::Corrected, None).expect("corrected row");
    check(corr.feasible_frac > 0.0 && corr.feasible_frac <= 1.0, format!("feasible {}", corr.feasible_frac), &mut fails);
    let max_sd = rep.rows.iter().filter_map(|r| r.coverage_sd).fold(0.0, f64::max);
    outcome(
        fails,
        format!("{}; corrected feasible {:.3}, n_cal {:.1}; max bootstrap SD {max_sd:.4}", parts.join(", "), corr.feasible_frac, corr.mean_n_cal),
    )
}

// --- 10: determinism -----------------------------------------------------------

fn digest(bytes: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    bytes.hash(&mut h);
    h.finish()
}

fn criterion_determinism(first: &[u8]) -> Outcome {
    let (rep, _) = ablation_records();
    let second = records_bytes(&rep);
    let (a, b) = (digest(first), digest(&second));
    let fails = if first == second.as_slice() { vec![] } else { vec![format!("digests {a:016x} vs {b:016x}")] };
    outcome(fails, format!("records.csv {} bytes, digest {a:016x}", first.len()))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "main synthetic experiment", criterion_main()));
    let (ablation, deltas) = ablation_records();
    results.push((2, "contamination ablation", criterion_ablation(&ablation, &deltas)));
    let (bound, corrected) = criteria_bound();
    results.push((3, "contamination coverage bound", bound));
    results.push((4, "corrected level coverage", corrected));
    results.push((5, "exchangeable baseline", criterion_exchangeable()));
    results.push((6, "descendant recovery guarantees", criterion_recovery()));
    results.push((7, "noiseless descendant recovery", criterion_exhaustive()));
    results.push((8, "weighted quantile reduction", criterion_weighted()));
    results.push((9, "real pipeline on bundled screen", criterion_real()));
    let bytes = records_bytes(&ablation);
    results.push((10, "determinism", criterion_determinism(&bytes)));

    let mut failed = 0;
    for (id, name, o) in &results {
        println!("{} [{id:>2}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1}s)",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
