//! The end-to-end pipeline: simulate, analyze, train, recommend.

use std::fs;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use arena_core::arena::{split_events, ArenaConfig, ArenaSpec, MIN_EVENTS};
use arena_core::par::Execution;
use arena_core::sim::{default_event_schedule, gen_season, SimParams};
use arena_core::trace::{save_dataset, Dataset, EventContext, SectorId};

use crate::args::ReproduceArgs;
use crate::commands::{analyze_dataset, parse_sector, train_and_store, write_manifest, write_text, TRACE_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceConfig {
    pub seed: u64,
    pub regular_days: usize,
    pub n_events: usize,
    /// Explicit event list; replaces the generated schedule.
    pub events: Option<Vec<EventContext>>,
    /// Sectors to train; the first sector of every band when unset.
    pub sectors: Option<Vec<String>>,
    pub util_threshold: f64,
    /// Feed the regular-day QoS profile when recommending.
    pub regular_qos: bool,
    pub sim: SimParams,
    pub arena: ArenaSpec,
    pub train: ArenaConfig,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            regular_days: 20,
            n_events: 12,
            events: None,
            sectors: None,
            util_threshold: 0.95,
            regular_qos: false,
            sim: SimParams::default(),
            arena: ArenaSpec::default(),
            train: ArenaConfig::default(),
        }
    }
}

fn default_sectors(ds: &Dataset) -> Vec<SectorId> {
    let mut out: Vec<SectorId> = Vec::new();
    for s in ds.sectors() {
        if !out.iter().any(|o| o.band_mhz == s.band_mhz) {
            out.push(s);
        }
    }
    out
}

pub fn reproduce(a: &ReproduceArgs) -> Result<()> {
    let mut cfg: ReproduceConfig = match &a.config {
        Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => ReproduceConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.sim.rng_seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    let events = cfg.events.clone().unwrap_or_else(|| default_event_schedule(cfg.regular_days, cfg.n_events, cfg.seed));
    let out = &a.out;
    let mut files = Vec::new();

    let ds = gen_season(&cfg.sim, cfg.regular_days, &events, Execution::Parallel).context("stage simulate")?;
    save_dataset(&ds, &out.join("data").join(TRACE_FILE)).context("stage simulate")?;
    files.push(format!("data/{TRACE_FILE}"));
    files.push("data/traces.events.json".into());

    let analysis = analyze_dataset(&ds, cfg.util_threshold, &out.join("analysis")).context("stage analyze")?;
    files.extend(analysis.into_iter().map(|f| format!("analysis/{f}")));

    if ds.events.len() < MIN_EVENTS {
        log::warn!("{} events; fewer than {MIN_EVENTS}, so only the analysis runs", ds.events.len());
        return write_manifest(out, "reproduce", Some(cfg.seed), a, &cfg, files);
    }

    let sectors = match &cfg.sectors {
        Some(list) => list.iter().map(|s| parse_sector(s)).collect::<Result<Vec<_>>>()?,
        None => default_sectors(&ds),
    };
    let (results, model_files) =
        train_and_store(&ds, &sectors, &cfg.arena, &cfg.train, &out.join("models")).context("stage train")?;
    files.extend(model_files.into_iter().map(|f| format!("models/{f}")));

    let (_, held) = split_events(&ds.events, cfg.train.train_fraction)?;
    let mut summary = String::from("sector,users_mse,prb_mse,saturation_users,epochs_needing_extra_spectrum\n");
    for (model, report) in &results {
        let mut csv = String::from("epoch,actual_users,pred_users,actual_prb,pred_prb,recommended_prb\n");
        let mut extra = 0;
        for (ev, pred) in held.iter().zip(&report.predictions) {
            let day = ds.trace(model.sector, ev.day).context("stage recommend")?;
            let plan = model.recommend(day, ev, cfg.regular_qos).context("stage recommend")?;
            for i in 0..plan.capacity.len() {
                let epoch = ev.day as usize * arena_core::trace::EPOCHS_PER_DAY + plan.first_epoch as usize + i;
                extra += usize::from(plan.capacity[i] > 1.0);
                csv.push_str(&format!(
                    "{epoch},{},{},{},{},{}\n",
                    pred.actual_users[i], plan.users_hat[i], pred.actual_prb[i], plan.c_bar[i], plan.capacity[i]
                ));
            }
        }
        let name = format!("report_{}.csv", model.sector);
        write_text(&out.join(&name), &csv)?;
        files.push(name);
        summary.push_str(&format!(
            "{},{},{},{},{extra}\n",
            model.sector, report.users.mse, report.prb.mse, report.saturation.users
        ));
        println!("{}: users mse {:.4}, {extra} epochs above provisioned capacity", model.sector, report.users.mse);
    }
    write_text(&out.join("summary.csv"), &summary)?;
    files.push("summary.csv".into());
    write_manifest(out, "reproduce", Some(cfg.seed), a, &cfg, files)
}
