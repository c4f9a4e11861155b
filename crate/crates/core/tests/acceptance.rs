// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits with status 1 if any criterion fails.
//!
//! Quantile tables are cached under the cargo target directory (or in
//! `FDRSEG_TABLE_CACHE` when set); they are deterministic, so the cache only
//! saves time.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::RngExt;
use rand_distr::StandardNormal;

use fdrseg::evaluation::{estimate_sigma, location_error, mise_contribution, v_measure, SigmaConstant};
use fdrseg::experiments::{self, ExperimentConfig, ExperimentOutput, RepRecord, SummaryRow, TableCache};
use fdrseg::quantiles::{self, GridKind};
use fdrseg::segmenter::{brute_force_segment, Calibration};
use fdrseg::signal::{make_teeth, sample, NoiseModel};
use fdrseg::{alpha_for_fdr, equivalent_global_level, fdr_bound, feasible_band, rng, segment_cost, stats, Method, PrefixSums, QuantileTable, Segmentation, StepFunction};

type Outcome = Result<String, String>;

fn cache() -> TableCache {
    match std::env::var_os(experiments::CACHE_ENV) {
        Some(v) if !v.is_empty() => TableCache::new(Some(PathBuf::from(v))),
        _ => {
            let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-tables");
            std::fs::create_dir_all(&dir).expect("cache directory");
            TableCache::new(Some(dir))
        }
    }
}

fn run(cfg: &mut ExperimentConfig, out: &tempfile::TempDir) -> Result<ExperimentOutput, String> {
    cfg.output = out.path().join(&cfg.name);
    experiments::run(cfg, &cache()).map_err(|e| e.to_string())
}

fn row<'a>(summary: &'a [SummaryRow], method: Method, alpha: f64) -> Result<&'a SummaryRow, String> {
    summary.iter().find(|r| r.method == method && r.alpha == alpha).ok_or_else(|| format!("no {method} row at alpha {alpha}"))
}

fn k_hats(records: &[RepRecord], method: Method) -> Vec<f64> {
    records.iter().filter(|r| r.method == method).map(|r| r.k_hat as f64).collect()
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fdr_bound_holds(out: &tempfile::TempDir) -> Outcome {
    let mut cfg = ExperimentConfig::defaults("fdr-bound").map_err(|e| e.to_string())?;
    cfg.n = 600;
    cfg.reps = 200;
    cfg.alphas = vec![0.05, 0.1, 0.2, 0.3];
    let res = run(&mut cfg, out)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for &alpha in &cfg.alphas {
        let r = row(&res.summary, Method::Fdrseg, alpha)?;
        let limit = fdr_bound(alpha) + 3.0 * r.fdr_se;
        ok &= r.fdr <= limit;
        let below_alpha = if r.fdr <= alpha { "<= alpha" } else { "> alpha" };
        parts.push(format!("a={alpha}: FDR {:.4} (limit {:.4}, {below_alpha})", r.fdr, limit));
    }
    verdict(ok, parts.join("; "))
}

/// All `2^(n-1)` segmentations: the fewest feasible segments, then the least
/// squares fit among those.
fn exhaustive(y: &[f64], sigma: f64, table: &QuantileTable) -> (usize, Vec<usize>, f64) {
    let n = y.len();
    let ps = PrefixSums::new(y);
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let cuts: Vec<usize> = (1..n).filter(|&i| mask >> (i - 1) & 1 == 1).collect();
        let mut bounds = vec![0];
        bounds.extend(&cuts);
        bounds.push(n);
        let mut rss = 0.0;
        let mut feasible = true;
        for w in bounds.windows(2) {
            let band = feasible_band(&ps, w[0], w[1], sigma, table.lookup(w[1] - w[0]).unwrap(), 0).unwrap();
            if band.is_empty() {
                feasible = false;
                break;
            }
            rss += segment_cost(&ps, w[0], w[1], &band).unwrap().rss;
        }
        if !feasible {
            continue;
        }
        let better = match &best {
            None => true,
            Some((k, r, _)) => cuts.len() < *k || (cuts.len() == *k && rss < *r),
        };
        if better {
            best = Some((cuts.len(), rss, cuts));
        }
    }
    let (k, rss, cuts) = best.expect("singletons are always feasible");
    (k, cuts, rss)
}

fn oracle_equivalence() -> Outcome {
    let alphas = [0.05, 0.1, 0.3];
    let tables: Vec<QuantileTable> = alphas
        .iter()
        .map(|&a| quantiles::simulate_local_quantiles(a, 60, &quantiles::make_grid(GridKind::Exact, 60), 2000, 17, &fdrseg::LowpassKernel::identity()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut r = rng::stream(2024, &[]);
    let (mut enumerated, mut mismatches) = (0, Vec::new());
    for inst in 0..100 {
        let n = r.random_range(8..=60usize);
        let sigma = r.random_range(0.5..=3.0);
        let which = r.random_range(0..alphas.len());
        let changes = r.random_range(0..=(n / 6).min(5));
        let mut cps: Vec<usize> = (0..changes).map(|_| r.random_range(1..n)).collect();
        cps.sort_unstable();
        cps.dedup();
        let mut level = 0.0;
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            if cps.contains(&i) {
                level += 3.0 * r.sample::<f64, _>(StandardNormal);
            }
            y.push(level + sigma * r.sample::<f64, _>(StandardNormal));
        }
        let table = &tables[which];
        let fast = fdrseg::fdrseg(&y, alphas[which], sigma, table).map_err(|e| e.to_string())?;
        let slow = brute_force_segment(&y, sigma, Calibration::Local { table, trim: 0 }).map_err(|e| e.to_string())?;
        if fast.k_hat != slow.k_hat || fast.change_indices != slow.change_indices || fast.rss.to_bits() != slow.rss.to_bits() {
            mismatches.push(format!("instance {inst} (n={n}) differs from the unpruned program"));
        }
        if n <= 12 {
            enumerated += 1;
            let (k, cuts, rss) = exhaustive(&y, sigma, table);
            if fast.k_hat != k || fast.change_indices != cuts || fast.rss.to_bits() != rss.to_bits() {
                mismatches.push(format!("instance {inst} (n={n}) differs from enumeration"));
            }
        }
    }
    verdict(mismatches.is_empty(), format!("100 instances, {enumerated} also enumerated; {}", if mismatches.is_empty() { "all identical".into() } else { mismatches.join(", ") }))
}

fn teeth_recovery(out: &tempfile::TempDir) -> Outcome {
    let mut cfg = ExperimentConfig::defaults("teeth-frequency").map_err(|e| e.to_string())?;
    cfg.n = 900;
    cfg.reps = 100;
    cfg.alphas = vec![0.1];
    cfg.sweep = vec![50f64.ln() / 900f64.ln()];
    let res = run(&mut cfg, out)?;
    let f = row(&res.summary, Method::Fdrseg, 0.1)?;
    let s = row(&res.summary, Method::Smuce, 0.1)?;
    if f.mean_k_true != 50.0 {
        return Err(format!("signal has {} change-points, expected 50", f.mean_k_true));
    }
    let d = f.median_d_correct;
    let d_ok = d.is_some_and(|d| (0.003..=0.012).contains(&d));
    let ok = f.mode_k_hat == 50 && f.p_k_correct >= 0.5 && d_ok && s.median_k_hat < 50.0;
    verdict(
        ok,
        format!(
            "mode K^ {} , P(K^=50) {:.2} (need >= 0.5), median d|K^=K {} , smuce median K^ {}",
            f.mode_k_hat,
            f.p_k_correct,
            d.map_or("n/a".into(), |d| format!("{d:.4}")),
            s.median_k_hat
        ),
    )
}

fn quantile_ordering(out: &tempfile::TempDir) -> Outcome {
    let mut cfg = ExperimentConfig::defaults("quantile-comparison").map_err(|e| e.to_string())?;
    cfg.sweep = vec![100.0, 1000.0];
    cfg.alphas = vec![0.05, 0.1, 0.5];
    cfg.mc_reps = 10_000;
    let res = run(&mut cfg, out)?;
    let bad: Vec<String> = res.quantiles.iter().filter(|q| q.q_local >= q.q_global).map(|q| format!("n={} a={}", q.n, q.alpha)).collect();
    let cells: Vec<String> = res.quantiles.iter().map(|q| format!("n={} a={}: {:.3} < {:.3}", q.n, q.alpha, q.q_local, q.q_global)).collect();
    verdict(res.quantiles.len() == 6 && bad.is_empty(), if bad.is_empty() { cells.join("; ") } else { format!("violated at {}", bad.join(", ")) })
}

fn quantile_bound() -> Outcome {
    let grid = [1, 10, 100, 1000, 10_000];
    let draws = quantiles::simulate_null_statistics(&grid, quantiles::DEFAULT_REPS, 5, &fdrseg::LowpassKernel::identity()).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [0.05, 0.3] {
        let offset = (2.0 * (1.0 / alpha as f64).ln()).sqrt();
        let centred: Vec<f64> = draws.draws[1..].iter().map(|d| stats::quantile_sorted(d, 1.0 - alpha) - offset).collect();
        let spread = centred.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - centred.iter().cloned().fold(f64::INFINITY, f64::min);
        ok &= spread < 1.0;
        parts.push(format!("a={alpha}: {:?} spread {spread:.3}", centred.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()));
    }
    verdict(ok, parts.join("; "))
}

fn constant_conservative(out: &tempfile::TempDir) -> Outcome {
    let mut cfg = ExperimentConfig::defaults("constant").map_err(|e| e.to_string())?;
    cfg.n = 500;
    cfg.reps = 500;
    cfg.alphas = vec![0.15];
    let res = run(&mut cfg, out)?;
    let k = k_hats(&res.records, Method::Fdrseg);
    let mean = stats::mean(&k);
    let limit = 2.0 * 0.15 / (1.0 - 3.0 * 0.15) + 3.0 * stats::std_error(&k);
    let zeros = k.iter().filter(|&&v| v == 0.0).count();
    verdict(mean <= limit && 2 * zeros > k.len(), format!("mean K^ {mean:.4} (limit {limit:.4}), K^=0 in {zeros}/{}", k.len()))
}

fn overestimation(out: &tempfile::TempDir) -> Outcome {
    let mut cfg = ExperimentConfig::defaults("mix-noise").map_err(|e| e.to_string())?;
    cfg.reps = 500;
    cfg.alphas = vec![0.1];
    cfg.sigmas = vec![2.0];
    let res = run(&mut cfg, out)?;
    let recs: Vec<&RepRecord> = res.records.iter().filter(|r| r.method == Method::Fdrseg).collect();
    let k_true = recs[0].k_true;
    let over = recs.iter().filter(|r| r.k_hat > k_true).count() as f64 / recs.len() as f64;
    let bound = (k_true as f64 + 2.0) * fdr_bound(0.1);
    verdict(over <= bound && over <= 0.25, format!("K={k_true}, P(K^>K) {over:.3}, bound {bound:.3} (vacuous above 1), guard 0.25"))
}

fn dependent_bias(out: &tempfile::TempDir) -> Outcome {
    let mut cfg = ExperimentConfig::defaults("ion-channel").map_err(|e| e.to_string())?;
    cfg.n = 10_000;
    cfg.reps = 20;
    if cfg.sweep.len() != 4 {
        return Err(format!("rate grid has {} points", cfg.sweep.len()));
    }
    let res = run(&mut cfg, out)?;
    let alpha = cfg.alphas[0];
    let mut ok = true;
    let mut parts = Vec::new();
    for &rate in &cfg.sweep {
        let pick = |m: Method| {
            res.summary.iter().find(|r| r.method == m && r.alpha == alpha && r.setting == Some(rate)).ok_or_else(|| format!("no {m} row at rate {rate}"))
        };
        let (f, d) = (pick(Method::Fdrseg)?, pick(Method::Dfdrseg)?);
        ok &= d.mean_bias.abs() < f.mean_bias.abs() && f.mean_bias > 0.0;
        parts.push(format!("rate {rate:.1}: fdrseg {:+.2}, dfdrseg {:+.2}", f.mean_bias, d.mean_bias));
    }
    verdict(ok, parts.join("; "))
}

fn calibration_identities() -> Outcome {
    let mut ok = true;
    for beta in [0.05, 0.1, 0.5] {
        ok &= (alpha_for_fdr(beta) - beta / (2.0 + beta)).abs() <= 1e-12;
        // The level recovers its bound exactly.
        ok &= (fdr_bound(alpha_for_fdr(beta)) - beta).abs() <= 1e-12;
    }
    let global = equivalent_global_level(0.1, 50);
    // 1 - (9/10)^51 evaluated in exact rational arithmetic.
    ok &= (global - 0.995_361_602_313_411_9).abs() <= 1e-12 && (global * 1000.0).round() / 1000.0 == 0.995;
    verdict(ok, format!("alpha(0.1) = {:.12}, 1-0.9^51 = {global:.12}", alpha_for_fdr(0.1)))
}

fn median_time(y_of: impl Fn(u64) -> Vec<f64>, table: &QuantileTable, reps: u64) -> Result<Duration, String> {
    let mut times = Vec::new();
    for seed in 0..reps {
        let y = y_of(seed);
        let t = Instant::now();
        fdrseg::fdrseg(&y, table.alpha(), 1.0, table).map_err(|e| e.to_string())?;
        times.push(t.elapsed());
    }
    times.sort();
    Ok(times[times.len() / 2])
}

fn runtime_scaling() -> Outcome {
    let alpha = 0.1;
    let mut timings = Vec::new();
    for n in [2000usize, 4000] {
        let table = cache().local(&[alpha], n, quantiles::DEFAULT_REPS, 3, &fdrseg::LowpassKernel::identity()).map_err(|e| e.to_string())?.remove(0);
        let truth = make_teeth((n as f64).powf(0.8).round() as usize, 2.0).map_err(|e| e.to_string())?;
        let noise = NoiseModel::iid(1.0).map_err(|e| e.to_string())?;
        let t = median_time(|seed| sample(&truth, n, &noise, seed).expect("valid sample"), &table, 5)?;
        timings.push((n, t));
    }
    let ratio = timings[1].1.as_secs_f64() / timings[0].1.as_secs_f64();
    verdict(ratio <= 2.5, format!("n=2000 {:?}, n=4000 {:?}, ratio {ratio:.2} (limit 2.5)", timings[0].1, timings[1].1))
}

fn metric_units() -> Outcome {
    let mut failures = Vec::new();
    let labels = [0, 0, 1, 1, 1, 2];
    if v_measure(&labels, &labels).ok() != Some(1.0) {
        failures.push("V on identical labelings");
    }
    if v_measure(&[0, 0, 1, 1], &[0, 0, 0, 0]).ok() != Some(0.0) {
        failures.push("V on a single cluster");
    }
    let truth = StepFunction::new(vec![0.5], vec![0.0, 1.0]).unwrap();
    let seg = |cps: Vec<usize>, levels: Vec<f64>| Segmentation {
        n: 10,
        method: Method::Fdrseg,
        alpha: 0.1,
        sigma: 1.0,
        k_hat: cps.len(),
        change_fractions: cps.iter().map(|&i| i as f64 / 10.0).collect(),
        change_indices: cps,
        levels,
        rss: 0.0,
    };
    if location_error(&truth, &seg(vec![5], vec![0.0, 1.0])) != 0.0 {
        failures.push("d of a perfect estimate");
    }
    if location_error(&truth, &seg(vec![], vec![0.5])) != 0.5 {
        failures.push("d of an empty estimate");
    }
    if mise_contribution(&truth, &seg(vec![5], vec![0.0, 1.0])) != 0.0 {
        failures.push("ISE of a perfect estimate");
    }
    if mise_contribution(&truth, &seg(vec![], vec![0.5])) != 0.25 {
        failures.push("ISE of a constant estimate");
    }
    let mut r = rng::stream(99, &[]);
    let y: Vec<f64> = (0..100_000).map(|_| 2.5 * r.sample::<f64, _>(StandardNormal)).collect();
    let s = estimate_sigma(&y, SigmaConstant::Consistent).map_err(|e| e.to_string())?;
    if (s / 2.5 - 1.0).abs() > 0.03 {
        failures.push("sigma estimate");
    }
    verdict(failures.is_empty(), if failures.is_empty() { format!("all exact; sigma^ {s:.4} for 2.5") } else { failures.join(", ") })
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a bare word
    // filters criteria by name.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let out = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 fdr-bound", Box::new(|| fdr_bound_holds(&out))),
        ("2 oracle-equivalence", Box::new(oracle_equivalence)),
        ("3 teeth-recovery", Box::new(|| teeth_recovery(&out))),
        ("4 quantile-ordering", Box::new(|| quantile_ordering(&out))),
        ("5 quantile-bound", Box::new(quantile_bound)),
        ("6 constant-signal", Box::new(|| constant_conservative(&out))),
        ("7 overestimation", Box::new(|| overestimation(&out))),
        ("8 dependent-noise-bias", Box::new(|| dependent_bias(&out))),
        ("9 calibration-identities", Box::new(calibration_identities)),
        ("10 runtime-scaling", Box::new(runtime_scaling)),
        ("11 metric-units", Box::new(metric_units)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
