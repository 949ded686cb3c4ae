use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use arena_core::analytics::{correlation_matrix, estimate_saturation_users, peak_to_average, period_means};
use arena_core::arena::{
    arena_train, load_trained, save_trained, ArenaConfig, ArenaReport, ArenaSpec, TrainedArena,
};
use arena_core::bco::{run_bco, run_sectors, BcoParams, QuadraticTestbed, SimEnv};
use arena_core::forecast::{
    arima_grid_search, train_forecaster, walk_forward_validate, DayForecast, ErrorReport, ForecastKind, ForecastSpec,
    TrainConfig,
};
use arena_core::nn::gradcheck::{run_suite, standard_cases};
use arena_core::nn::save_checkpoint;
use arena_core::par::Execution;
use arena_core::sim::{default_event_schedule, gen_season, SimParams};
use arena_core::trace::{load_dataset, save_dataset, write_atomic, Dataset, DayLabel, EventContext, Feature, SectorId};

use crate::args::*;
use crate::UsageError;

pub const TRACE_FILE: &str = "traces.csv";

#[derive(Serialize)]
struct Manifest<'a, A: Serialize, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    args: &'a A,
    config: &'a C,
    outputs: Vec<String>,
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub fn write_manifest<A: Serialize, C: Serialize>(
    dir: &Path,
    command: &str,
    seed: Option<u64>,
    args: &A,
    config: &C,
    mut outputs: Vec<String>,
) -> Result<()> {
    outputs.sort();
    let m = Manifest { tool: "arena", version: env!("CARGO_PKG_VERSION"), command, seed, args, config, outputs };
    let mut bytes = serde_json::to_vec_pretty(&m)?;
    bytes.push(b'\n');
    write_atomic(&dir.join("manifest.json"), &bytes).context("writing manifest")?;
    Ok(())
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Deserialize)]
struct EventsFile {
    events: Vec<EventContext>,
}

pub fn read_events(path: &Path) -> Result<Vec<EventContext>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let events: Vec<EventContext> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str::<EventsFile>(&text).with_context(|| format!("parsing {}", path.display()))?.events
    };
    for e in &events {
        e.validate()?;
    }
    Ok(events)
}

pub fn parse_sector(s: &str) -> Result<SectorId> {
    s.parse::<SectorId>().map_err(|e| usage(e.to_string()))
}

fn parse_sectors(list: Option<&str>, ds: &Dataset) -> Result<Vec<SectorId>> {
    let all = ds.sectors();
    let Some(list) = list else { return Ok(all) };
    let mut out = Vec::new();
    for s in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let id = parse_sector(s)?;
        if !all.contains(&id) {
            bail!("sector {id} not in the data");
        }
        out.push(id);
    }
    Ok(out)
}

fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading {}", path.display()))
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut params: SimParams = match &a.scenario {
        Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => SimParams::default(),
    };
    params.rng_seed = a.seed;
    if let Some(n) = a.sectors {
        params.n_sectors = n;
    }
    let events = match &a.events {
        Some(p) => read_events(p)?,
        None => default_event_schedule(a.regular, a.n_events, a.seed),
    };
    let ds = gen_season(&params, a.regular, &events, Execution::Parallel)?;
    fs::create_dir_all(&a.out)?;
    save_dataset(&ds, &a.out.join(TRACE_FILE))?;
    #[derive(Serialize)]
    struct Config<'a> {
        sim: &'a SimParams,
        events: &'a [EventContext],
    }
    let outputs = vec![TRACE_FILE.into(), "traces.events.json".into()];
    write_manifest(&a.out, "simulate", Some(a.seed), a, &Config { sim: &params, events: &ds.events }, outputs)
}

/// Writes the analysis tables; returns the file names.
pub fn analyze_dataset(ds: &Dataset, util_threshold: f64, out: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let all: Vec<_> = ds.traces.values().flatten().collect();
    let names: Vec<&str> = Feature::ALL.iter().map(Feature::name).collect();
    for (label, file) in [(DayLabel::Regular, "correlation_regular.csv"), (DayLabel::EventDay, "correlation_event.csv")] {
        if all.iter().any(|t| t.day_label == label) {
            let m = correlation_matrix(&all, &names, Some(label))?;
            write_text(&out.join(file), &m.to_csv())?;
            files.push(file.to_string());
        }
    }

    let mut pta = String::from("sector,day,day_label,epoch,peak_to_average\n");
    let mut periods = String::from("sector,day,day_label,period,mean_users\n");
    let mut sat = String::from("sector,saturation_users,slope,intercept,samples\n");
    for (sector, traces) in &ds.traces {
        for t in traces {
            let day = t.day().unwrap_or(0);
            for ((e, _), r) in t.epochs.iter().zip(peak_to_average(t)) {
                pta.push_str(&format!("{sector},{day},{},{},{r}\n", t.day_label.as_str(), e.index));
            }
            for (p, v) in period_means(t, Feature::AvgUsers)? {
                periods.push_str(&format!("{sector},{day},{},{},{v}\n", t.day_label.as_str(), p.name()));
            }
        }
        let regular: Vec<_> = traces.iter().filter(|t| t.day_label == DayLabel::Regular).collect();
        if !regular.is_empty() {
            let s = estimate_saturation_users(&regular, util_threshold)?;
            sat.push_str(&format!("{sector},{},{},{},{}\n", s.users, s.slope, s.intercept, s.samples));
        }
    }
    for (file, text) in [("peak_to_average.csv", pta), ("period_means.csv", periods), ("saturation.csv", sat)] {
        write_text(&out.join(file), &text)?;
        files.push(file.to_string());
    }
    Ok(files)
}

pub fn analyze(a: &AnalyzeArgs) -> Result<()> {
    if !(a.util_threshold > 0.0 && a.util_threshold <= 1.0) {
        return Err(usage(format!("--util-threshold {} outside (0, 1]", a.util_threshold)));
    }
    let ds = load(&a.data)?;
    let files = analyze_dataset(&ds, a.util_threshold, &a.out)?;
    write_manifest(&a.out, "analyze", None, a, &(), files)
}

fn forecast_spec(a: &ForecastArgs, ds: &Dataset, sector: SectorId) -> Result<ForecastSpec> {
    let kind = match a.model {
        ModelName::Arima => match (a.p, a.d, a.q) {
            (Some(p), Some(d), Some(q)) => ForecastKind::Arima { p, d, q },
            _ => {
                let days = &ds.traces[&sector];
                let n_fit = (days.len() as f64 * 0.6).floor() as usize;
                let series: Vec<f64> =
                    days[..n_fit].iter().flat_map(|t| t.epochs.iter().map(|(_, r)| r.avg_active_users)).collect();
                let g = arima_grid_search(&series, 5, 2, 5, Execution::Parallel)?;
                log::info!("ARIMA grid search picked {:?} (MSE {})", g.best, g.best_mse);
                ForecastKind::Arima { p: g.best.p, d: g.best.d, q: g.best.q }
            }
        },
        ModelName::Lstm => ForecastKind::Lstm { units: a.units },
        ModelName::CnnLstm => ForecastKind::CnnLstm { units: a.units, filters: a.filters },
        ModelName::ConvLstm => ForecastKind::ConvLstm { units: a.units, filters: a.filters },
    };
    let spec = ForecastSpec { window_days: a.window_days, ..ForecastSpec::new(kind) };
    if let Err(e) = spec.validate() {
        return Err(usage(e.to_string()));
    }
    if !spec.in_reference_grid() {
        log::warn!("units/filters outside the 200-400 units, 64-256 filters grid");
    }
    Ok(spec)
}

fn forecasts_csv(forecasts: &[DayForecast]) -> String {
    let mut s = String::from("day,day_label,epoch,predicted,actual\n");
    for f in forecasts {
        for (e, (p, y)) in f.predicted.iter().zip(&f.actual).enumerate() {
            s.push_str(&format!("{},{},{e},{p},{y}\n", f.day, f.label.as_str()));
        }
    }
    s
}

pub fn forecast(a: &ForecastArgs, walk: bool) -> Result<()> {
    let ds = load(&a.data)?;
    let sector = match &a.sector {
        Some(s) => parse_sector(s)?,
        None => *ds.sectors().first().context("no sectors in the data")?,
    };
    let days = ds.traces.get(&sector).with_context(|| format!("sector {sector} not in the data"))?;
    let spec = forecast_spec(a, &ds, sector)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        refit_epochs: a.refit_epochs,
        seed: a.seed,
        ..Default::default()
    };
    fs::create_dir_all(&a.out)?;
    let mut files = vec!["report.csv".to_string(), "forecasts.csv".to_string()];
    let (report, forecasts): (ErrorReport, Vec<DayForecast>) = if walk {
        let wf = walk_forward_validate(&spec, days, &cfg)?;
        (wf.report, wf.forecasts)
    } else {
        let (trained, report, forecasts) = train_forecaster(&spec, days, &cfg)?;
        if let Some(m) = &trained.model {
            save_checkpoint(m, &a.out.join("model.ckpt"))?;
            files.push("model.ckpt".into());
        }
        if let Some(m) = &trained.arima {
            write_text(&a.out.join("arima.json"), &(serde_json::to_string_pretty(m)? + "\n"))?;
            files.push("arima.json".into());
        }
        (report, forecasts)
    };
    write_text(&a.out.join("report.csv"), &report.to_csv())?;
    write_text(&a.out.join("forecasts.csv"), &forecasts_csv(&forecasts))?;
    println!("{} {sector}: mse {} max_abs {}", spec.kind.name(), report.mse, report.max_abs_error);
    #[derive(Serialize)]
    struct Config<'a> {
        sector: String,
        spec: &'a ForecastSpec,
        train: &'a TrainConfig,
    }
    let name = if walk { "walk-forward" } else { "train-forecaster" };
    write_manifest(&a.out, name, Some(a.seed), a, &Config { sector: sector.to_string(), spec: &spec, train: &cfg }, files)
}

pub fn parse_split(s: &str) -> Result<f64> {
    let bad = || usage(format!("bad --split `{s}` (want e.g. 60/40)"));
    let (a, b) = s.split_once('/').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a > 0.0 && b > 0.0) {
        return Err(bad());
    }
    Ok(a / (a + b))
}

pub fn arena_predictions_csv(report: &ArenaReport) -> String {
    let mut s = String::from("day,epoch,actual_users,pred_users,actual_prb,pred_prb\n");
    for p in &report.predictions {
        for i in 0..p.actual_users.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.day,
                p.first_epoch as usize + i,
                p.actual_users[i],
                p.output.users_forecast[i],
                p.actual_prb[i],
                p.output.prb_forecast[i]
            ));
        }
    }
    s
}

pub fn arena_report_csv(results: &[(TrainedArena, ArenaReport)]) -> String {
    let mut s = String::from("sector,head,mse,max_abs_error,saturation_users\n");
    for (_, r) in results {
        for (head, e) in [("prb", &r.prb), ("users", &r.users)] {
            s.push_str(&format!("{},{head},{},{},{}\n", r.sector, e.mse, e.max_abs_error, r.saturation.users));
        }
    }
    s
}

/// Trains and stores every sector model under `out/<sector>/`.
pub fn train_and_store(
    ds: &Dataset,
    sectors: &[SectorId],
    spec: &ArenaSpec,
    cfg: &ArenaConfig,
    out: &Path,
) -> Result<(Vec<(TrainedArena, ArenaReport)>, Vec<String>)> {
    let results = arena_train(ds, sectors, spec, cfg, Execution::Parallel)?;
    let mut files = vec!["report.csv".to_string()];
    for (m, r) in &results {
        let name = m.sector.to_string();
        save_trained(m, &out.join(&name))?;
        for f in ["model.ckpt", "sae_encoder.ckpt", "sae_decoder.ckpt", "meta.json"] {
            files.push(format!("{name}/{f}"));
        }
        let pred = format!("predictions_{name}.csv");
        write_text(&out.join(&pred), &arena_predictions_csv(r))?;
        files.push(pred);
    }
    write_text(&out.join("report.csv"), &arena_report_csv(&results))?;
    Ok((results, files))
}

pub fn train_arena(a: &TrainArenaArgs) -> Result<()> {
    let mut ds = load(&a.data)?;
    if let Some(p) = &a.events {
        ds.events = read_events(p)?;
    }
    let sectors = parse_sectors(a.sectors.as_deref(), &ds)?;
    let spec = ArenaSpec { conv_filters_1: a.eta, conv_filters_2: a.mu, ..Default::default() };
    if let Err(e) = spec.validate() {
        return Err(usage(e.to_string()));
    }
    let cfg = ArenaConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        train_fraction: parse_split(&a.split)?,
        seed: a.seed,
        ..Default::default()
    };
    fs::create_dir_all(&a.out)?;
    let (results, files) = train_and_store(&ds, &sectors, &spec, &cfg, &a.out)?;
    for (_, r) in &results {
        println!("{}: users mse {} prb mse {}", r.sector, r.users.mse, r.prb.mse);
    }
    #[derive(Serialize)]
    struct Config<'a> {
        spec: &'a ArenaSpec,
        train: &'a ArenaConfig,
        sectors: Vec<String>,
    }
    let config = Config { spec: &spec, train: &cfg, sectors: sectors.iter().map(ToString::to_string).collect() };
    write_manifest(&a.out, "train-arena", Some(a.seed), a, &config, files)
}

fn event_arg(a: &RecommendArgs, ds: &Dataset) -> Result<EventContext> {
    match (&a.event, a.event_day) {
        (Some(text), _) => {
            let raw = if Path::new(text).exists() { fs::read_to_string(text)? } else { text.clone() };
            let ctx: EventContext = serde_json::from_str(&raw).context("parsing --event")?;
            ctx.validate()?;
            Ok(ctx)
        }
        (None, Some(day)) => ds.event_on(day).cloned().with_context(|| format!("no event on day {day}")),
        (None, None) => Err(usage("one of --event-day or --event is required")),
    }
}

pub fn recommend(a: &RecommendArgs) -> Result<()> {
    let sector = parse_sector(&a.sector)?;
    let ds = load(&a.data)?;
    let model = load_trained(&a.models.join(sector.to_string()))
        .with_context(|| format!("loading the model of {sector} from {}", a.models.display()))?;
    let ctx = event_arg(a, &ds)?;
    let day = ds.trace(sector, ctx.day).with_context(|| format!("no trace of {sector} on day {}", ctx.day))?;
    let plan = model.recommend(day, &ctx, a.regular_qos)?;
    let csv = plan.to_csv();
    match &a.out {
        Some(path) => {
            write_text(path, &csv)?;
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).map(PathBuf::from).unwrap_or_default();
            let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            write_manifest(&dir, "recommend", None, a, &ctx, vec![file])?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn bco(a: &BcoArgs) -> Result<()> {
    let params = BcoParams { sigma: a.sigma, mu: a.mu, eps: a.eps, exact_gradients: a.exact, seed: a.seed, ..Default::default() };
    fs::create_dir_all(&a.out)?;
    let mut csv = format!("{}\n", arena_core::bco::Trajectory::csv_header());
    #[derive(Serialize)]
    struct Summary {
        sector: String,
        mean_cost: f64,
        mean_constraint: f64,
        violation: f64,
        oracle_cost: Option<f64>,
        oracle_c: Option<f64>,
    }
    let mut summary = Vec::new();
    match a.env {
        BcoEnvName::Testbed => {
            let mut env = QuadraticTestbed::new(a.noise, arena_core::rng::derive_seed(a.seed, &[0x7E57]));
            let oracle = env.oracle()?;
            let t = run_bco(&mut env, a.epochs, &params)?;
            t.write_csv_rows("testbed", &mut csv);
            summary.push(Summary {
                sector: "testbed".into(),
                mean_cost: t.mean_cost(),
                mean_constraint: t.mean_constraint(),
                violation: t.violation(),
                oracle_cost: Some(oracle.cost),
                oracle_c: Some(oracle.c),
            });
        }
        BcoEnvName::Sim => {
            let data = a.data.as_ref().ok_or_else(|| usage("--env sim needs --data"))?;
            let ds = load(data)?;
            let sectors = parse_sectors(a.sectors.as_deref(), &ds)?;
            let day = match a.day {
                Some(d) => d,
                None => ds.events.first().map(|e| e.day).context("no event day in the data; pass --day")?,
            };
            let mut envs = Vec::new();
            for s in &sectors {
                let traces = &ds.traces[s];
                let regular: Vec<_> = traces.iter().filter(|t| t.day_label == DayLabel::Regular).collect();
                let sat = estimate_saturation_users(&regular, 0.95)?;
                let trace = ds.trace(*s, day).with_context(|| format!("no trace of {s} on day {day}"))?;
                envs.push(SimEnv::from_trace(trace, sat.users)?);
            }
            let trajectories = run_sectors(envs, a.epochs, &params, Execution::Parallel)?;
            for (s, t) in sectors.iter().zip(&trajectories) {
                t.write_csv_rows(&s.to_string(), &mut csv);
                summary.push(Summary {
                    sector: s.to_string(),
                    mean_cost: t.mean_cost(),
                    mean_constraint: t.mean_constraint(),
                    violation: t.violation(),
                    oracle_cost: None,
                    oracle_c: None,
                });
            }
        }
    }
    for s in &summary {
        println!("{}: mean cost {} violation {}", s.sector, s.mean_cost, s.violation);
    }
    write_text(&a.out.join("trajectory.csv"), &csv)?;
    write_text(&a.out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    write_manifest(&a.out, "bco", Some(a.seed), a, &params, vec!["trajectory.csv".into(), "summary.json".into()])
}

/// Returns whether every case passed.
pub fn gradcheck(a: &GradcheckArgs) -> Result<bool> {
    let results = run_suite(&standard_cases(), a.seeds, a.h, a.tol, Execution::Parallel)?;
    let mut table = String::from("case,seeds,max_rel_error,skipped_kinks,passed\n");
    for r in &results {
        println!(
            "{:<20} max rel error {:.3e} over {} seeds  {}",
            r.name,
            r.max_rel_error,
            r.seeds,
            if r.passed { "pass" } else { "FAIL" }
        );
        table.push_str(&format!("{},{},{},{},{}\n", r.name, r.seeds, r.max_rel_error, r.skipped_kinks, r.passed));
    }
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        write_text(&out.join("gradcheck.csv"), &table)?;
        write_manifest(out, "gradcheck", None, a, &(), vec!["gradcheck.csv".into()])?;
    }
    Ok(results.iter().all(|r| r.passed))
}
