//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single `criterion N: PASS|FAIL` line straight to stdout so the verdicts
//! survive output capture.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use arena_core::analytics::estimate_saturation_users;
use arena_core::arena::{load_trained, split_events, EventWindow};
use arena_core::bco::{one_point_gradient, run_bco, unit_sphere, BcoParams, QuadraticTestbed};
use arena_core::forecast::{
    arima_fit, arima_grid_search, walk_forward_validate, ForecastKind, ForecastSpec, TrainConfig, WalkForward,
};
use arena_core::nn::gradcheck::{run_suite, standard_cases};
use arena_core::par::{self, Execution};
use arena_core::sim::{default_event_schedule, gen_event_day, gen_regular_day, gen_season, saturated_qos, SimParams};
use arena_core::trace::{load_dataset, DayLabel, EventContext, SectorTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arena"))
}

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().expect("spawn arena");
    assert!(out.status.success(), "{cmd:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn criterion_01_gradient_fidelity() {
    let t = Instant::now();
    let results = run_suite(&standard_cases(), 20, 1e-4, 1e-4, Execution::Parallel).unwrap();
    let elapsed = t.elapsed();
    let worst = results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    let pass = failed.is_empty() && elapsed <= Duration::from_secs(30);
    report(
        1,
        pass,
        &format!("{} cases x 20 seeds, worst rel error {worst:.2e}, failed {failed:?}, {:.1}s", results.len(), elapsed.as_secs_f64()),
    );
    assert!(pass);
}

#[test]
fn criterion_02_bco_vs_oracle() {
    let t = Instant::now();
    let opt = QuadraticTestbed::new(0.0, 0).oracle().unwrap();
    let runs: Vec<(f64, f64)> = (0..10)
        .map(|seed| {
            let tr = run_bco(&mut QuadraticTestbed::new(0.0, seed), 5000, &BcoParams { seed, ..Default::default() }).unwrap();
            (tr.mean_cost(), tr.violation())
        })
        .collect();
    let cost = median(runs.iter().map(|r| r.0).collect());
    let viol = median(runs.iter().map(|r| r.1).collect());
    let elapsed = t.elapsed();
    let gap = (cost - opt.cost).abs() / opt.cost;
    let pass = gap <= 0.10 && viol <= 0.05 && elapsed <= Duration::from_secs(10);
    report(
        2,
        pass,
        &format!(
            "median cost {cost:.4} vs oracle {:.4} (gap {:.1}%), median violation {viol:.4}, {:.2}s",
            opt.cost,
            100.0 * gap,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_one_point_estimator() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let d = 3;
    let m: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let a: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| (0..d).map(|k| m[k][i] * m[k][j]).sum::<f64>() + f64::from(u8::from(i == j))).collect())
        .collect();
    let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = |x: &[f64]| {
        let mut v = 0.0;
        for i in 0..d {
            v += b[i] * x[i];
            for j in 0..d {
                v += 0.5 * a[i][j] * x[i] * x[j];
            }
        }
        v
    };
    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let grad: Vec<f64> = (0..d).map(|i| b[i] + (0..d).map(|j| a[i][j] * x[j]).sum::<f64>()).collect();
    // 10^5 estimates taken as 5 * 10^4 antithetic (u, -u) pairs
    let n = 100_000;
    let mut acc = vec![0.0; d];
    for _ in 0..n / 2 {
        let u = unit_sphere(&mut rng, d);
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        let g1 = one_point_gradient(f, &x, 0.05, &u).unwrap();
        let g2 = one_point_gradient(f, &x, 0.05, &neg).unwrap();
        for i in 0..d {
            acc[i] += g1[i] + g2[i];
        }
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let err = acc.iter().zip(&grad).map(|(s, g)| (s / n as f64 - g).powi(2)).sum::<f64>().sqrt();
    let rel = err / norm;
    let pass = rel <= 0.02;
    report(3, pass, &format!("relative error {:.3}% over {n} estimates (eps 0.05, d 3)", 100.0 * rel));
    assert!(pass);
}

#[test]
fn criterion_04_arima_recovery() {
    let phis: Vec<f64> = (0..10)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nd = Normal::new(0.0, 0.1).unwrap();
            let mut x = vec![0.0; 2000];
            for t in 1..x.len() {
                x[t] = 0.8 * x[t - 1] + nd.sample(&mut rng);
            }
            arima_fit(&x, 1, 0, 0).unwrap().phi[0]
        })
        .collect();
    let phi = median(phis);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let nd = Normal::new(0.0, 1.0).unwrap();
    let trend: Vec<f64> = (0..600).map(|t| 0.5 * t as f64 + nd.sample(&mut rng)).collect();
    let best = arima_grid_search(&trend, 2, 2, 2, Execution::Parallel).unwrap().best;
    let pass = (phi - 0.8).abs() <= 0.05 && best.d == 1;
    report(4, pass, &format!("median phi {phi:.4} (planted 0.8), trend series picks {best:?}"));
    assert!(pass);
}

fn local_maxima(series: &[f64]) -> usize {
    series.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count()
}

#[test]
fn criterion_05_simulator_signature() {
    let p = SimParams::default();
    let ctx = EventContext::football(3, 25097);
    let ev = gen_event_day(&p, &ctx).unwrap();
    let reg = gen_regular_day(&p, 3).unwrap();
    let lo = ctx.start_epoch as usize - 12;
    let hi = ctx.end_epoch as usize + 8;
    let mut min_maxima = usize::MAX;
    let mut ratios = Vec::new();
    for (e, r) in ev.iter().zip(&reg) {
        let vol: Vec<f64> = e.epochs.iter().map(|(_, x)| x.dl_volume_bits).collect();
        let smooth: Vec<f64> = (1..vol.len() - 1).map(|i| (vol[i - 1] + vol[i] + vol[i + 1]) / 3.0).collect();
        // smooth[i] is centered on epoch i + 1
        min_maxima = min_maxima.min(local_maxima(&smooth[lo - 2..=hi]));
        let peak = |t: &SectorTrace| t.epochs.iter().map(|(_, x)| x.avg_active_users).fold(0.0, f64::max);
        ratios.push(peak(e) / peak(r));
    }
    let (rmin, rmax) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let sat = p.saturation_for(1800);
    let exact = saturated_qos(p.qos_free, sat, 2.0 * sat) == p.qos_free / 2.0;
    let pass = min_maxima >= 3 && rmin >= 8.0 && rmax <= 12.0 && exact;
    report(
        5,
        pass,
        &format!(
            "min smoothed maxima {min_maxima} over {} sectors, peak ratio [{rmin:.2}, {rmax:.2}], qos at 2x saturation exact: {exact}",
            ev.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_saturation_estimation() {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let p = SimParams { rng_seed: seed, ..Default::default() };
        let ds = gen_season(&p, 10, &[], Execution::Parallel).unwrap();
        for (sector, traces) in &ds.traces {
            let regular: Vec<&SectorTrace> = traces.iter().collect();
            let est = estimate_saturation_users(&regular, 0.95).unwrap().users;
            let planted = p.saturation_for(sector.band_mhz);
            worst = worst.max((est - planted).abs() / planted);
        }
    }
    let pass = worst <= 0.15;
    report(6, pass, &format!("worst relative error {:.2}% over 10 seeds x 16 sectors", 100.0 * worst));
    assert!(pass);
}

/// Median over event days of `predicted peak - actual peak`.
fn peak_gap(wf: &WalkForward) -> f64 {
    median(
        wf.forecasts
            .iter()
            .filter(|f| f.label == DayLabel::EventDay)
            .map(|f| f.predicted_peak() - f.actual_peak())
            .collect(),
    )
}

#[test]
fn criterion_07_forecaster_ordering() {
    let t = Instant::now();
    let (units, filters) = (8, 4);
    let per_seed = par::map_range(Execution::Parallel, 10, |seed| {
        let seed = seed as u64;
        let p = SimParams { n_sectors: 1, rng_seed: seed, ..Default::default() };
        let ds = gen_season(&p, 20, &default_event_schedule(20, 12, seed), Execution::Sequential).unwrap();
        let days = ds.traces.into_values().next().unwrap();
        let cfg = TrainConfig { seed, ..Default::default() };
        let n_fit = (days.len() as f64 * cfg.train_fraction).floor() as usize;
        let series: Vec<f64> = days[..n_fit].iter().flat_map(|d| d.epochs.iter().map(|(_, r)| r.avg_active_users)).collect();
        let o = arima_grid_search(&series, 5, 2, 5, Execution::Sequential).unwrap().best;
        let run = |kind| walk_forward_validate(&ForecastSpec::new(kind), &days, &cfg).unwrap();
        [
            run(ForecastKind::Arima { p: o.p, d: o.d, q: o.q }),
            run(ForecastKind::Lstm { units }),
            run(ForecastKind::CnnLstm { units, filters }),
        ]
    });
    let med = |i: usize, f: &dyn Fn(&WalkForward) -> f64| median(per_seed.iter().map(|r| f(&r[i])).collect());
    let mse: Vec<f64> = (0..3).map(|i| med(i, &|w| w.report.mse)).collect();
    let gaps: Vec<f64> = (0..3).map(|i| med(i, &peak_gap)).collect();
    let ordering = mse[2] <= mse[1] && mse[2] <= mse[0];
    let under = gaps.iter().all(|&g| g < 0.0);
    let pass = ordering && under;
    report(
        7,
        pass,
        &format!(
            "median walk-forward MSE arima {:.5} lstm {:.5} cnn-lstm {:.5}; median peak gap {:.4}/{:.4}/{:.4} (J {units}, phi {filters}, {:.0}s)",
            mse[0],
            mse[1],
            mse[2],
            gaps[0],
            gaps[1],
            gaps[2],
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

struct Pipeline {
    dir: tempfile::TempDir,
    elapsed: Duration,
}

/// The default `reproduce` run, shared by criteria 8 and 9.
fn pipeline() -> &'static Pipeline {
    static RUN: OnceLock<Pipeline> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let t = Instant::now();
        run_ok(bin().args(["reproduce", "--seed", "0", "-o"]).arg(dir.path()));
        Pipeline { dir, elapsed: t.elapsed() }
    })
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    r.records()
        .map(|row| header.iter().zip(row.unwrap().iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

#[test]
fn criterion_08_arena_end_to_end() {
    let run = pipeline();
    let summary = read_csv(&run.dir.path().join("summary.csv"));
    let mut details = Vec::new();
    let mut pass = run.elapsed <= Duration::from_secs(15 * 60) && summary.len() == 3;
    for row in &summary {
        let sector = &row["sector"];
        let mse = num(row, "users_mse");
        let sat = num(row, "saturation_users");
        let plan = read_csv(&run.dir.path().join(format!("report_{sector}.csv")));
        let (mut hi, mut missed, mut lo, mut false_flags) = (0, 0, 0, 0);
        for r in &plan {
            let u = num(r, "actual_users");
            let c = num(r, "recommended_prb");
            if u >= 1.2 * sat {
                hi += 1;
                missed += usize::from(c <= 1.0);
            }
            if u <= 0.8 * sat {
                lo += 1;
                false_flags += usize::from(c > 1.0);
            }
        }
        pass &= mse <= 0.02 && missed == 0 && false_flags == 0;
        details.push(format!("{sector}: users mse {mse:.4}, unflagged {missed}/{hi} overloaded, flagged {false_flags}/{lo} light"));
    }
    report(8, pass, &format!("{}; pipeline {:.0}s", details.join("; "), run.elapsed.as_secs_f64()));
    assert!(pass);
}

fn poisoned_walk_forward(kind: ForecastKind) -> bool {
    let p = SimParams { n_sectors: 1, rng_seed: 11, ..Default::default() };
    let ds = gen_season(&p, 10, &default_event_schedule(10, 4, 11), Execution::Sequential).unwrap();
    let days = ds.traces.into_values().next().unwrap();
    let cfg = TrainConfig { epochs: 3, refit_epochs: 1, seed: 11, ..Default::default() };
    let spec = ForecastSpec::new(kind);
    let clean = walk_forward_validate(&spec, &days, &cfg).unwrap();
    let n_train = days.len() - clean.forecasts.len();
    let mut ok = true;
    for k in n_train..days.len() {
        let mut poisoned = days.clone();
        for t in &mut poisoned[k..] {
            for (_, r) in &mut t.epochs {
                r.avg_active_users = r.avg_active_users * 3.0 + 50.0;
                r.dl_volume_bits *= 0.2;
            }
        }
        let dirty = walk_forward_validate(&spec, &poisoned, &cfg).unwrap();
        for j in 0..=(k - n_train) {
            ok &= clean.forecasts[j].predicted == dirty.forecasts[j].predicted;
        }
    }
    ok
}

#[test]
fn criterion_09_causality() {
    let wf_lstm = poisoned_walk_forward(ForecastKind::Lstm { units: 3 });
    let wf_cnn = poisoned_walk_forward(ForecastKind::CnnLstm { units: 3, filters: 2 });
    let wf_arima = poisoned_walk_forward(ForecastKind::Arima { p: 2, d: 1, q: 1 });

    let run = pipeline();
    let ds = load_dataset(&run.dir.path().join("data/traces.csv")).unwrap();
    let (_, held) = split_events(&ds.events, 0.6).unwrap();
    let mut arena_ok = true;
    let mut checked = 0;
    for entry in std::fs::read_dir(run.dir.path().join("models")).unwrap() {
        let path: PathBuf = entry.unwrap().path();
        if !path.is_dir() {
            continue;
        }
        let model = load_trained(&path).unwrap();
        for ev in &held {
            let day = ds.trace(model.sector, ev.day).unwrap();
            let w = EventWindow::for_event(&model.spec, ev, 0).unwrap();
            arena_ok &= w.input_end + 1 + 8 <= ev.start_epoch;
            let clean = (model.predict(day, ev).unwrap(), model.recommend(day, ev, true).unwrap());
            let mut poisoned = day.clone();
            for (e, r) in &mut poisoned.epochs {
                if e.index > w.input_end {
                    r.avg_active_users = 10.0 * r.avg_active_users + 1.0;
                    r.dl_volume_bits = 0.0;
                    r.dl_prb_util = 1.0;
                }
            }
            let dirty = (model.predict(&poisoned, ev).unwrap(), model.recommend(&poisoned, ev, true).unwrap());
            arena_ok &= clean == dirty;
            checked += 1;
        }
    }
    let pass = wf_lstm && wf_cnn && wf_arima && arena_ok && checked > 0;
    report(
        9,
        pass,
        &format!(
            "walk-forward lstm {wf_lstm} cnn-lstm {wf_cnn} arima {wf_arima}; arena 2h horizon {arena_ok} over {checked} sector-events"
        ),
    );
    assert!(pass);
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
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

#[test]
fn criterion_10_determinism() {
    let work = tempfile::tempdir().unwrap();
    let w = work.path();
    run_ok(bin().args(["simulate", "--regular", "8", "--n-events", "5", "--sectors", "2", "--seed", "4", "-o"]).arg(w.join("data")));
    let data = w.join("data/traces.csv");
    let data = data.to_str().unwrap();
    std::fs::write(
        w.join("small.toml"),
        "regular_days = 8\nn_events = 5\n[sim]\nn_sectors = 3\n[arena]\nconv_filters_1 = 4\nconv_filters_2 = 4\n[train]\nepochs = 2\n",
    )
    .unwrap();
    let small = w.join("small.toml");
    let small = small.to_str().unwrap();
    let models = w.join("models");
    run_ok(bin().args(["train-arena", "--data", data, "--eta", "4", "--mu", "4", "--epochs", "2", "-o"]).arg(&models));
    let models = models.to_str().unwrap().to_string();
    let event_day = load_dataset(Path::new(data)).unwrap().events.last().unwrap().day.to_string();

    let commands: Vec<(&str, Vec<String>)> = vec![
        ("simulate", vec!["simulate", "--regular", "6", "--n-events", "5", "--sectors", "3", "--seed", "9"]),
        ("analyze", vec!["analyze", "--data", data]),
        (
            "train-forecaster",
            vec!["train-forecaster", "--data", data, "--model", "cnn-lstm", "--units", "3", "--filters", "2", "--epochs", "2", "--seed", "5"],
        ),
        ("walk-forward", vec!["walk-forward", "--data", data, "--model", "lstm", "--units", "3", "--epochs", "2", "--seed", "5"]),
        ("walk-forward arima", vec!["walk-forward", "--data", data, "--model", "arima", "--p", "2", "--d", "0", "--q", "1"]),
        ("train-arena", vec!["train-arena", "--data", data, "--eta", "4", "--mu", "4", "--epochs", "2", "--seed", "3"]),
        ("recommend", vec!["recommend", "--models", &models, "--data", data, "--sector", "0-0-800", "--event-day", &event_day]),
        ("bco testbed", vec!["bco", "run", "--env", "testbed", "--epochs", "2000", "--noise", "0.05", "--seed", "6"]),
        ("bco sim", vec!["bco", "--env", "sim", "--data", data, "--epochs", "500", "--seed", "6"]),
        ("gradcheck", vec!["gradcheck", "--seeds", "2"]),
        ("reproduce", vec!["reproduce", "--config", small, "--seed", "2"]),
    ]
    .into_iter()
    .map(|(n, v)| (n, v.into_iter().map(String::from).collect()))
    .collect();

    let mut differing = Vec::new();
    for (name, args) in &commands {
        let mut trees = Vec::new();
        for (i, threads) in ["1", "2"].iter().enumerate() {
            let out = w.join(format!("{}-{i}", name.replace(' ', "_")));
            let target = if *name == "recommend" { out.join("plan.csv") } else { out.clone() };
            run_ok(bin().args(args).arg("-o").arg(&target).env("ARENA_THREADS", threads));
            trees.push(tree(&out));
        }
        if trees[0] != trees[1] || trees[0].is_empty() {
            differing.push(*name);
        }
    }
    let pass = differing.is_empty();
    report(10, pass, &format!("{} command runs compared byte-for-byte across thread counts, differing: {differing:?}", commands.len()));
    assert!(pass);
}
