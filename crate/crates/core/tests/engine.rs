mod common;

use adlift_core::engine::{
    restore, snapshot, Command, EngineError, Experiment, ExperimentConfig, PopulationConfig, Report,
    ReportOptions, Status, StopReason,
};
use adlift_core::sim::write_log;
use adlift_core::LogRecord;

fn log_bytes(records: &[LogRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_log(records, &mut buf).unwrap();
    buf
}

/// Identical arms and a threshold out of reach.
fn flat(seed: u64, max_batches: u64) -> ExperimentConfig {
    let mut cfg = common::case_study(seed);
    cfg.scenario.theta_star = vec![vec![0.03; 3]; 3];
    cfg.scenario.batch_size = 1000;
    cfg.scenario.max_batches = max_batches;
    cfg.draws = 2000;
    cfg.threshold = 0.99999;
    cfg
}

fn run_n(exp: &mut Experiment, n: usize) -> Vec<LogRecord> {
    let mut logs = Vec::new();
    for _ in 0..n {
        logs.extend(exp.run_batch().unwrap().records);
    }
    logs
}

#[test]
fn posterior_counters_and_logs_agree_after_fifty_batches() {
    let mut cfg = common::case_study(3);
    cfg.scenario.max_batches = 50;
    cfg.scenario.batch_size = 2000;
    let mut exp = Experiment::new(cfg).unwrap();
    exp.start().unwrap();
    let mut logs = Vec::new();
    while exp.state().batches_run() < 50 {
        if exp.status() == Status::Completed && !exp.state().continuing {
            exp.resume().unwrap();
        }
        logs.extend(exp.run_batch().unwrap().records);
    }
    assert_eq!(exp.state().t(), 51);
    assert!(!exp.state().is_runnable());

    let (r_n, j_n) = (exp.creatives(), exp.contexts());
    let mut shown = vec![0u64; r_n * j_n];
    let mut clicks = vec![0u64; r_n * j_n];
    let mut cost = vec![0.0f64; r_n * j_n];
    for rec in &logs {
        let cell = rec.creative * j_n + exp.partition().context_index(rec.da_id).unwrap();
        shown[cell] += 1;
        clicks[cell] += u64::from(rec.clicked);
        cost[cell] += rec.cost;
    }
    let grid = &exp.state().grid;
    let counters = &exp.state().counters;
    for r in 0..r_n {
        for j in 0..j_n {
            let cell = r * j_n + j;
            assert_eq!(grid.alpha(r, j), 1.0 + clicks[cell] as f64);
            assert_eq!(grid.beta(r, j), 1.0 + (shown[cell] - clicks[cell]) as f64);
        }
    }
    assert_eq!(counters.impressions, shown);
    assert_eq!(counters.clicks, clicks);
    assert_eq!(counters.cost, cost);
    assert_eq!(counters.arrivals, 50 * 2000);
    assert_eq!(counters.out_of_context + logs.len() as u64, counters.arrivals);
}

#[test]
fn replay_is_byte_identical() {
    let run = || {
        let mut exp = Experiment::new(common::case_study(77)).unwrap();
        let logs = common::run_logged(&mut exp);
        let report = Report::generate(&exp, &ReportOptions::default()).unwrap();
        (log_bytes(&logs), serde_json::to_vec(&report).unwrap(), snapshot(&exp))
    };
    assert_eq!(run(), run());
}

#[test]
fn pause_and_resume_do_not_perturb_the_trajectory() {
    let mut straight = Experiment::new(flat(5, 20)).unwrap();
    let straight_logs = common::run_logged(&mut straight);

    let mut paused = Experiment::new(flat(5, 20)).unwrap();
    paused.start().unwrap();
    let mut logs = run_n(&mut paused, 10);
    paused.pause().unwrap();
    assert!(matches!(paused.run_batch(), Err(EngineError::InvalidStatus(Status::Paused))));
    paused.resume().unwrap();
    logs.extend(common::run_logged(&mut paused));

    assert_eq!(log_bytes(&logs), log_bytes(&straight_logs));
    assert_eq!(paused.state().grid, straight.state().grid);
    assert_eq!(paused.state().history, straight.state().history);
    assert_eq!(paused.status(), Status::Stopped);
    assert_eq!(paused.state().stop_reason, Some(StopReason::MaxBatches));
}

#[test]
fn snapshot_round_trip_resumes_identically() {
    let mut straight = Experiment::new(flat(9, 15)).unwrap();
    let straight_logs = common::run_logged(&mut straight);

    let mut first = Experiment::new(flat(9, 15)).unwrap();
    first.start().unwrap();
    let mut logs = run_n(&mut first, 7);
    let text = snapshot(&first);
    let mut second = restore(&text).unwrap();
    assert_eq!(second.state(), first.state());
    assert_eq!(snapshot(&second), text);
    logs.extend(common::run_logged(&mut second));
    assert_eq!(log_bytes(&logs), log_bytes(&straight_logs));
    assert_eq!(snapshot(&second), snapshot(&straight));
}

#[test]
fn corrupt_snapshots_are_rejected() {
    let mut exp = Experiment::new(flat(1, 5)).unwrap();
    exp.start().unwrap();
    exp.run_batch().unwrap();
    let text = snapshot(&exp);

    let truncated = &text[..text.len() / 2];
    assert!(matches!(restore(truncated), Err(EngineError::CorruptSnapshot(_))));
    let tampered = text.replacen("\"alpha\":", "\"alpha\":1", 1);
    assert!(matches!(restore(&tampered), Err(EngineError::CorruptSnapshot(_))));
    assert!(matches!(restore(""), Err(EngineError::CorruptSnapshot(_))));
}

#[test]
fn draft_snapshot_is_valid() {
    let exp = Experiment::new(common::case_study(1)).unwrap();
    let back = restore(&snapshot(&exp)).unwrap();
    assert_eq!(back.status(), Status::Draft);
    assert_eq!(back.state().t(), 1);
    assert!(back.state().grid.cells().all(|c| c.alpha == 1.0 && c.beta == 1.0));
}

#[test]
fn batch_without_in_context_arrivals_only_advances_t() {
    let mut cfg = flat(2, 5);
    cfg.scenario.population = PopulationConfig::Contexts {
        weights: vec![0.0; 3],
        no_context: 1.0,
    };
    cfg.context_probs = adlift_core::engine::ContextProbSource::Table {
        p_hat: vec![vec![0.5, 0.0], vec![0.0, 0.5], vec![0.5, 0.5]],
    };
    let mut exp = Experiment::new(cfg).unwrap();
    exp.start().unwrap();
    let before = exp.state().grid.clone();
    let out = exp.run_batch().unwrap();
    assert!(out.records.is_empty());
    assert_eq!(exp.state().t(), 2);
    assert!(exp.state().grid.cells().zip(before.cells()).all(|(a, b)| a == b));
    assert_eq!(exp.state().counters.out_of_context, 1000);
}

#[test]
fn single_arm_crosses_on_first_evaluation() {
    let mut cfg = common::case_study(4);
    cfg.creatives.truncate(1);
    cfg.target_audiences.truncate(1);
    cfg.scenario.theta_star = vec![vec![0.03]];
    cfg.scenario.population = PopulationConfig::Contexts {
        weights: vec![0.6],
        no_context: 0.4,
    };
    let mut exp = Experiment::new(cfg).unwrap();
    exp.start().unwrap();
    exp.run_batch().unwrap();
    assert_eq!(exp.status(), Status::Completed);
    let crossing = exp.state().crossing.clone().unwrap();
    assert_eq!((crossing.t, crossing.phi), (1, 1.0));
    assert_eq!(exp.value_of_adaptive_design().unwrap_err().to_string(), "adaptive allocation needs more than one creative");
}

/// Share of combination traffic, attributing a DA's impressions to every TA
/// containing it.
fn combination_shares(exp: &Experiment, records: &[LogRecord]) -> Vec<f64> {
    let k_n = exp.audiences();
    let mut counts = vec![0.0; exp.creatives() * k_n];
    for rec in records {
        let sig = exp.partition().das()[exp.partition().context_index(rec.da_id).unwrap()].signature;
        for k in 0..k_n {
            if sig.contains(k as u32 + 1) {
                counts[rec.creative * k_n + k] += 1.0;
            }
        }
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

#[test]
fn inferior_combinations_lose_traffic() {
    let mut cfg = common::case_study(21);
    cfg.scenario.max_batches = 40;
    let mut exp = Experiment::new(cfg).unwrap();
    let truth = common::true_combination_ctrs(&exp);
    let mut order: Vec<usize> = (0..truth.len()).collect();
    order.sort_by(|a, b| truth[*a].partial_cmp(&truth[*b]).unwrap());
    let worst = &order[..3];

    exp.start().unwrap();
    let mut batches = Vec::new();
    while exp.state().batches_run() < 40 {
        if exp.status() == Status::Completed && !exp.state().continuing {
            exp.resume().unwrap();
        }
        batches.push(exp.run_batch().unwrap().records);
    }
    let early: Vec<LogRecord> = batches[..10].concat();
    let late: Vec<LogRecord> = batches[30..].concat();
    let share = |recs: &[LogRecord]| {
        let s = combination_shares(&exp, recs);
        worst.iter().map(|&c| s[c]).sum::<f64>()
    };
    assert!(share(&late) < share(&early), "{} vs {}", share(&late), share(&early));
}

#[test]
fn adaptive_design_beats_equal_split_and_matches_brute_force() {
    let mut cfg = common::case_study(8);
    cfg.scenario.max_batches = 30;
    let mut exp = Experiment::new(cfg).unwrap();
    exp.start().unwrap();
    let mut logs = Vec::new();
    while exp.state().batches_run() < 30 {
        if exp.status() == Status::Completed && !exp.state().continuing {
            exp.resume().unwrap();
        }
        logs.extend(exp.run_batch().unwrap().records);
    }

    // brute force straight from the log stream
    let (r_n, j_n) = (exp.creatives(), exp.contexts());
    let mut per_da = vec![0u64; j_n];
    let mut shown = vec![0u64; r_n * j_n];
    let mut clicked = vec![0u64; r_n * j_n];
    for rec in &logs {
        let j = (rec.da_id - 1) as usize;
        per_da[j] += 1;
        shown[rec.creative * j_n + j] += 1;
        clicked[rec.creative * j_n + j] += u64::from(rec.clicked);
    }
    let mut counterfactual = 0.0;
    for j in 0..j_n {
        for r in 0..r_n {
            let theta_hat = (1 + clicked[r * j_n + j]) as f64 / (2 + shown[r * j_n + j]) as f64;
            counterfactual += per_da[j] as f64 / r_n as f64 * theta_hat;
        }
    }
    let observed = clicked.iter().sum::<u64>() as f64;
    assert!((exp.counterfactual_clicks().unwrap() - counterfactual).abs() < 1e-9);
    let ratio = exp.value_of_adaptive_design().unwrap();
    assert!((ratio - observed / counterfactual).abs() < 1e-12);
    assert!(ratio > 1.0, "{ratio}");
}

#[test]
fn case_study_truth_spans_the_scenario_range() {
    let exp = Experiment::new(common::case_study(1)).unwrap();
    let ctrs = common::true_combination_ctrs(&exp);
    let max = ctrs.iter().cloned().fold(f64::MIN, f64::max);
    let min = ctrs.iter().cloned().fold(f64::MAX, f64::min);
    assert!((max - 0.0394).abs() < 1e-12);
    assert!((min - 0.020).abs() < 1e-12);
    let voe = adlift_core::engine::metrics::value_of_experimentation(&ctrs).unwrap();
    assert!((voe - 1.4).abs() < 0.05, "{voe}");
}

#[test]
fn operator_stop_before_threshold_is_reported() {
    let mut exp = Experiment::new(flat(3, 50)).unwrap();
    exp.start().unwrap();
    run_n(&mut exp, 3);
    exp.stop().unwrap();
    assert!(matches!(exp.run_batch(), Err(EngineError::InvalidStatus(Status::Stopped))));
    assert!(matches!(exp.resume(), Err(EngineError::InvalidTransition { .. })));
    let report = Report::generate(&exp, &ReportOptions::default()).unwrap();
    assert!(report.is_final);
    assert!(!report.threshold_crossed);
    assert_eq!(report.stop_reason, Some(StopReason::Operator));
    assert!(report.max_phi < 0.9);
    assert!(report.value.unwrap().value_of_experimentation.is_some());
    assert!(matches!(exp.apply_winner(), Err(EngineError::ThresholdNotCrossed)));
}

#[test]
fn reports_are_pure_functions_of_the_snapshot() {
    let mut exp = Experiment::new(common::case_study(12)).unwrap();
    exp.start().unwrap();
    exp.run_batch().unwrap();
    let opts = ReportOptions { level: 0.9, draws: 4000, seed: Some(99) };
    let a = Report::generate(&exp, &opts).unwrap();
    let b = Report::generate(&restore(&snapshot(&exp)).unwrap(), &opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.combinations.len(), 6);
    assert_eq!(a.cells.len(), 9);
    let phi_sum: f64 = a.combinations.iter().map(|c| c.phi).sum();
    assert!((phi_sum - 1.0).abs() < 1e-12);
    for c in &a.combinations {
        assert!(c.ci[0] <= c.ctr && c.ctr <= c.ci[1]);
    }
    for k in 0..2 {
        let w: f64 = a.cells.iter().filter(|c| c.da_id == k + 1).map(|c| c.allocation_weight).sum();
        assert!((w - 1.0).abs() < 1e-12);
    }
}

#[test]
fn continuing_after_completion_keeps_status_and_flags_it() {
    let mut exp = Experiment::new(common::case_study(0)).unwrap();
    exp.start().unwrap();
    while exp.status() == Status::Running {
        exp.run_batch().unwrap();
    }
    assert_eq!(exp.status(), Status::Completed);
    assert!(exp.run_batch().is_err());
    assert!(exp.command(Command::Resume).unwrap().changed);
    let t = exp.state().t();
    exp.run_batch().unwrap();
    assert_eq!(exp.state().t(), t + 1);
    assert_eq!(exp.status(), Status::Completed);
    let report = Report::generate(&exp, &ReportOptions::default()).unwrap();
    assert!(report.continuing && report.threshold_crossed);
    assert!(exp.apply_winner().is_ok());
}

#[test]
fn feature_level_population_runs_end_to_end() {
    let mut exp = Experiment::new(common::feature_population()).unwrap();
    assert_eq!(exp.contexts(), 7);
    for k in 0..3 {
        let total: f64 = exp.probs().overlap(k).iter().map(|&j| exp.probs().get(j, k)).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    let logs = common::run_logged(&mut exp);
    assert!(!logs.is_empty());
    assert!(logs.iter().all(|r| (1..=7).contains(&r.da_id)));
    assert!(matches!(exp.status(), Status::Completed | Status::Stopped));
}

#[test]
fn changing_draw_count_does_not_perturb_traffic() {
    let mut cheap = flat(6, 8);
    cheap.draws = 1000;
    let mut costly = flat(6, 8);
    costly.draws = 7000;
    let a = common::run_logged(&mut Experiment::new(cheap).unwrap());
    let b = common::run_logged(&mut Experiment::new(costly).unwrap());
    assert_eq!(log_bytes(&a), log_bytes(&b));
}

#[test]
fn case_study_identifies_the_best_combination() {
    let mut hits = 0;
    let mut ratios = Vec::new();
    for seed in 0..20 {
        let mut exp = Experiment::new(common::case_study(1000 + seed)).unwrap();
        let truth = common::true_combination_ctrs(&exp);
        let best = (0..truth.len()).max_by(|a, b| truth[*a].partial_cmp(&truth[*b]).unwrap()).unwrap();
        common::run_logged(&mut exp);
        if let Some(c) = &exp.state().crossing {
            assert!(c.t <= 100);
            hits += usize::from(c.creative * exp.audiences() + c.audience == best);
        }
        ratios.push(exp.value_of_adaptive_design().unwrap());
    }
    assert!(hits >= 19, "{hits} of 20");
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(mean >= 1.05, "{mean}");
}
