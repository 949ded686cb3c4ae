use arena_core::forecast::*;
use arena_core::nn::LayerSpec;
use arena_core::par::Execution;
use arena_core::sim::{default_event_schedule, gen_season, SimParams};
use arena_core::trace::SectorTrace;

fn season(regular: usize, events: usize, seed: u64) -> Vec<SectorTrace> {
    let p = SimParams { n_sectors: 1, rng_seed: seed, ..Default::default() };
    let ev = default_event_schedule(regular, events, seed);
    let ds = gen_season(&p, regular, &ev, Execution::Sequential).unwrap();
    ds.traces.into_values().next().unwrap()
}

fn small(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, refit_epochs: 1, ..Default::default() }
}

fn names(kind: ForecastKind) -> Vec<&'static str> {
    let m = build_forecaster(&ForecastSpec::new(kind), 0).unwrap();
    assert_eq!(m.output_shape(), &[96]);
    m.specs().iter().map(LayerSpec::name).collect()
}

#[test]
fn layer_sequences() {
    assert_eq!(names(ForecastKind::Lstm { units: 4 }), ["lstm", "lstm", "dense"]);
    assert_eq!(names(ForecastKind::CnnLstm { units: 4, filters: 2 }), ["conv2d", "conv2d", "lstm", "dense"]);
    assert_eq!(names(ForecastKind::ConvLstm { units: 4, filters: 2 }), ["convlstm", "flatten", "dense"]);
    assert!(build_forecaster(&ForecastSpec::new(ForecastKind::Arima { p: 1, d: 0, q: 0 }), 0).is_err());
}

#[test]
fn lstm_parameter_count() {
    let m = build_forecaster(&ForecastSpec::new(ForecastKind::Lstm { units: 4 }), 0).unwrap();
    // two LSTM layers (F=3 then J=4 inputs) and the 96-wide head
    let lstm = |d: usize, j: usize| 4 * j * (d + j) + 4 * j;
    assert_eq!(m.n_params(), lstm(3, 4) + lstm(4, 4) + 4 * 96 + 96);
}

#[test]
fn same_seed_same_report() {
    let days = season(8, 4, 3);
    let spec = ForecastSpec::new(ForecastKind::Lstm { units: 3 });
    let a = walk_forward_validate(&spec, &days, &small(2)).unwrap();
    let b = walk_forward_validate(&spec, &days, &small(2)).unwrap();
    assert_eq!(a, b);
    let c = walk_forward_validate(&spec, &days, &TrainConfig { seed: 1, ..small(2) }).unwrap();
    assert_ne!(a.report, c.report);
}

#[test]
fn training_reduces_loss() {
    let days = season(8, 4, 1);
    let spec = ForecastSpec::new(ForecastKind::CnnLstm { units: 3, filters: 2 });
    let (trained, _, _) = train_forecaster(&spec, &days, &small(15)).unwrap();
    let h = &trained.loss_history;
    assert!(h[h.len() - 1] < h[0], "{h:?}");
}

/// Changing day `k` and later leaves every walk-forward forecast for days
/// up to `k` bit-identical.
fn poisoned_future(spec: ForecastSpec) {
    let days = season(10, 4, 5);
    let cfg = small(2);
    let clean = walk_forward_validate(&spec, &days, &cfg).unwrap();
    let n_train = days.len() - clean.forecasts.len();
    let k = n_train + 1;
    let mut poisoned = days.clone();
    for t in &mut poisoned[k..] {
        for (_, r) in &mut t.epochs {
            r.avg_active_users *= 7.0;
            r.dl_volume_bits *= 0.1;
        }
    }
    let dirty = walk_forward_validate(&spec, &poisoned, &cfg).unwrap();
    for j in 0..=(k - n_train) {
        assert_eq!(clean.forecasts[j].predicted, dirty.forecasts[j].predicted, "forecast {j}");
    }
    assert_ne!(clean.forecasts.last().unwrap().actual, dirty.forecasts.last().unwrap().actual);
}

#[test]
fn walk_forward_is_causal_lstm() {
    poisoned_future(ForecastSpec::new(ForecastKind::Lstm { units: 3 }));
}

#[test]
fn walk_forward_is_causal_arima() {
    poisoned_future(ForecastSpec::new(ForecastKind::Arima { p: 2, d: 0, q: 0 }));
}

#[test]
fn single_validation_day() {
    // 10 days at 0.9 leaves exactly one held-out day
    let days = season(8, 2, 0);
    let spec = ForecastSpec::new(ForecastKind::Lstm { units: 2 });
    let wf = walk_forward_validate(&spec, &days, &TrainConfig { train_fraction: 0.9, ..small(1) }).unwrap();
    assert_eq!(wf.forecasts.len(), 1);
    assert_eq!(wf.report.window_mse.len(), 1);
}

#[test]
fn too_few_days() {
    let days = season(5, 1, 0);
    let spec = ForecastSpec::new(ForecastKind::Lstm { units: 2 });
    assert!(matches!(walk_forward_validate(&spec, &days, &small(1)), Err(ForecastError::InsufficientData(_))));
}

#[test]
fn arima_walk_forward_forecasts_every_held_out_day() {
    let days = season(12, 3, 2);
    let spec = ForecastSpec::new(ForecastKind::Arima { p: 2, d: 0, q: 1 });
    let wf = walk_forward_validate(&spec, &days, &TrainConfig::default()).unwrap();
    assert_eq!(wf.forecasts.len(), 15 - 9);
    assert!(wf.forecasts.iter().all(|f| f.predicted.len() == 96 && f.predicted.iter().all(|v| v.is_finite())));
}
