//! Parameter sweeps: train/evaluate a configuration per parameter value
//! and aggregate held-out metrics into a compact report.
//!
//! Every row is trained from the same base seed, so rows differ only in
//! the swept parameter. A row that fails to train carries the error text
//! instead of aborting the sweep. Rows are emitted sorted by parameter
//! value, and aggregates use population statistics. Sweeps can fan out
//! over worker threads; each configuration trains with its own derived
//! generator state, so the report is identical however work is scheduled.

use serde::{Deserialize, Serialize};

use crate::dataset::Case;
use crate::metrics::{evaluate, MetricsReport};
use crate::refiner::{refine, train, RefinerModel, TrainConfig};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// One evaluated parameter setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// The swept parameter's value for this row.
    pub value: f64,
    /// Held-out cases evaluated.
    pub n_cases: usize,
    /// Held-out cases whose 95th-percentile surface distance is defined.
    pub n_hd95: usize,
    pub mean_dice: Option<f64>,
    pub std_dice: Option<f64>,
    pub mean_hd95_mm: Option<f64>,
    pub std_hd95_mm: Option<f64>,
    /// Set when training or evaluation failed for this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A named sweep: rows sorted ascending by parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
}

/// Population mean and standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Stream tag separating evaluation-time click draws from every other
/// consumer of the base seed.
const EVAL_CLICK_STREAM: u64 = 0xE7A1;

/// Segment every held-out case with the model and score it against its
/// reference mask, running the configured interactive click rounds with
/// the reference standing in for the correcting user. Click draws are
/// seeded per case from `cfg.seed`, so a report is a pure function of
/// (model, cases, config).
pub fn evaluate_model(
    model: &RefinerModel,
    cases: &[Case],
    cfg: &TrainConfig,
) -> Result<Vec<MetricsReport>> {
    cases
        .iter()
        .enumerate()
        .map(|(i, case)| {
            let mut rng = SeededRng::derive(cfg.seed, &[EVAL_CLICK_STREAM, i as u64]);
            let pred = refine(model, case, cfg, &mut rng)?;
            evaluate(&pred, &case.gt)
        })
        .collect()
}

/// Aggregate per-case reports into one row at the given parameter value.
pub fn aggregate_row(value: f64, reports: &[MetricsReport]) -> SweepRow {
    let dices: Vec<f64> = reports.iter().map(|r| r.dice).collect();
    let hd95s: Vec<f64> = reports.iter().filter_map(|r| r.hd95_mm).collect();
    let (mean_dice, std_dice) = if dices.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&dices);
        (Some(m), Some(s))
    };
    let (mean_hd, std_hd) = if hd95s.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&hd95s);
        (Some(m), Some(s))
    };
    SweepRow {
        value,
        n_cases: reports.len(),
        n_hd95: hd95s.len(),
        mean_dice,
        std_dice,
        mean_hd95_mm: mean_hd,
        std_hd95_mm: std_hd,
        error: None,
    }
}

/// Train one configuration and aggregate its held-out metrics; a failure
/// becomes an error-carrying row rather than a panic or early exit.
fn run_row(value: f64, cfg: &TrainConfig, train_cases: &[Case], test_cases: &[Case]) -> SweepRow {
    let run = || -> Result<SweepRow> {
        let outcome = train(train_cases, cfg)?;
        let reports = evaluate_model(&outcome.model, test_cases, cfg)?;
        Ok(aggregate_row(value, reports.as_slice()))
    };
    match run() {
        Ok(row) => row,
        Err(err) => SweepRow {
            value,
            n_cases: 0,
            n_hd95: 0,
            mean_dice: None,
            std_dice: None,
            mean_hd95_mm: None,
            std_hd95_mm: None,
            error: Some(err.to_string()),
        },
    }
}

/// Run the prepared (value, config) list, fanning out over up to
/// `parallel` worker threads. Each row is a pure function of its config
/// and the case sets, so the collected report does not depend on thread
/// scheduling; `parallel == 1` runs strictly sequentially.
fn run_rows(
    jobs: Vec<(f64, TrainConfig)>,
    train_cases: &[Case],
    test_cases: &[Case],
    parallel: usize,
) -> Result<Vec<SweepRow>> {
    if parallel == 0 {
        return Err(Error::InvalidArgument {
            name: "parallel",
            reason: "worker count must be at least 1".into(),
        });
    }
    if parallel == 1 || jobs.len() <= 1 {
        return Ok(jobs
            .iter()
            .map(|(value, cfg)| run_row(*value, cfg, train_cases, test_cases))
            .collect());
    }
    let workers = parallel.min(jobs.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut rows: Vec<Option<SweepRow>> = vec![None; jobs.len()];
    let slots: Vec<std::sync::Mutex<&mut Option<SweepRow>>> =
        rows.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let (value, cfg) = &jobs[i];
                let row = run_row(*value, cfg, train_cases, test_cases);
                **slots[i].lock().expect("row slot poisoned") = Some(row);
            });
        }
    });
    Ok(rows.into_iter().map(|r| r.expect("every job ran")).collect())
}

/// Sweep the relative dose threshold that shapes the box prompt.
///
/// Validates every threshold up front — an out-of-range value fails the
/// whole call before any training starts. Thresholds are sorted ascending;
/// each row trains from the shared base seed with only the threshold
/// changed.
pub fn sweep_tau(
    train_cases: &[Case],
    test_cases: &[Case],
    base: &TrainConfig,
    taus: &[f64],
    parallel: usize,
) -> Result<SweepReport> {
    if taus.is_empty() {
        return Err(Error::InvalidArgument {
            name: "taus",
            reason: "threshold list must not be empty".into(),
        });
    }
    for &tau in taus {
        if !(tau.is_finite() && tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidTau { tau });
        }
    }
    base.validate()?;
    let mut sorted = taus.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
    let jobs: Vec<(f64, TrainConfig)> = sorted
        .into_iter()
        .map(|tau| {
            let mut cfg = *base;
            cfg.prompt.tau = tau;
            (tau, cfg)
        })
        .collect();
    Ok(SweepReport {
        parameter: "tau".into(),
        rows: run_rows(jobs, train_cases, test_cases, parallel)?,
    })
}

/// Sweep the click schedule one factor at a time: refinement iterations
/// with the per-iteration click count held at the base value, then click
/// count with the iteration count held at the base value. Returns one
/// report per non-empty list.
pub fn sweep_clicks(
    train_cases: &[Case],
    test_cases: &[Case],
    base: &TrainConfig,
    iterations_list: &[usize],
    clicks_list: &[usize],
    parallel: usize,
) -> Result<Vec<SweepReport>> {
    if iterations_list.is_empty() && clicks_list.is_empty() {
        return Err(Error::InvalidArgument {
            name: "sweep-clicks",
            reason: "provide at least one iteration or click count to sweep".into(),
        });
    }
    for &c in clicks_list {
        if c == 0 {
            return Err(Error::InvalidArgument {
                name: "clicks",
                reason: "clicks per iteration must be at least 1".into(),
            });
        }
    }
    base.validate()?;
    let mut reports = Vec::new();
    if !iterations_list.is_empty() {
        let mut sorted = iterations_list.to_vec();
        sorted.sort_unstable();
        let jobs: Vec<(f64, TrainConfig)> = sorted
            .into_iter()
            .map(|it| {
                let mut cfg = *base;
                cfg.schedule.iterations = it;
                (it as f64, cfg)
            })
            .collect();
        reports.push(SweepReport {
            parameter: "iterations".into(),
            rows: run_rows(jobs, train_cases, test_cases, parallel)?,
        });
    }
    if !clicks_list.is_empty() {
        let mut sorted = clicks_list.to_vec();
        sorted.sort_unstable();
        let jobs: Vec<(f64, TrainConfig)> = sorted
            .into_iter()
            .map(|c| {
                let mut cfg = *base;
                cfg.schedule.clicks_per_iteration = c;
                (c as f64, cfg)
            })
            .collect();
        reports.push(SweepReport {
            parameter: "clicks_per_iteration".into(),
            rows: run_rows(jobs, train_cases, test_cases, parallel)?,
        });
    }
    Ok(reports)
}
