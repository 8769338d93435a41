//! Plain-text tables for the CLI's `--format table`.

use std::fmt::Write;

use adlift_core::engine::Report;

use crate::wire::{CommandReply, HistoryReply, ListReply, Summary, WinnerReply};

fn pct(x: f64) -> String {
    format!("{:.3}%", 100.0 * x)
}

pub fn summary(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "experiment   {}", s.experiment_id);
    let _ = writeln!(out, "kind         {:?}", s.kind);
    let continuing = if s.continuing { " (continuing)" } else { "" };
    let _ = writeln!(out, "status       {}{continuing}", s.status);
    let _ = writeln!(out, "t            {}", s.t);
    let _ = writeln!(out, "batches      {} / {}", s.batches_run, s.max_batches);
    let _ = writeln!(out, "threshold    {} (crossed: {})", s.threshold, s.threshold_crossed);
    if let Some(reason) = s.stop_reason {
        let _ = writeln!(out, "stopped by   {reason:?}");
    }
    match &s.leader {
        Some(l) => {
            let _ = writeln!(out, "leader       {} x {}  phi {:.4}", l.creative, l.audience, l.phi);
        }
        None => {
            let _ = writeln!(out, "leader       -");
        }
    }
    out
}

pub fn list(l: &ListReply) -> String {
    let mut out = format!("{:<24} {:<10} {:>6} {:>8}\n", "experiment", "status", "t", "max phi");
    for s in &l.experiments {
        let phi = s.leader.as_ref().map_or("-".to_owned(), |l| format!("{:.4}", l.phi));
        let _ = writeln!(out, "{:<24} {:<10} {:>6} {:>8}", s.experiment_id, s.status.to_string(), s.t, phi);
    }
    out
}

pub fn command(c: &CommandReply) -> String {
    let note = if c.transition.changed { "" } else { " (no change)" };
    format!(
        "{} {}: {} -> {}{note}, t = {}\n",
        c.experiment_id, c.command, c.transition.from, c.transition.to, c.t
    )
}

pub fn winner(w: &WinnerReply) -> String {
    format!("{}: {:?}\n", w.experiment_id, w.event)
}

pub fn history(h: &HistoryReply) -> String {
    let mut out = format!(
        "{}  {} batches, stride {}\n{:>6} {:>8} {:>9} {:>9}\n",
        h.experiment_id, h.total, h.stride, "t", "max phi", "creative", "audience"
    );
    for rec in &h.records {
        let _ = writeln!(
            out,
            "{:>6} {:>8.4} {:>9} {:>9}",
            rec.t,
            rec.max_phi,
            rec.best_creative,
            rec.best_audience + 1
        );
    }
    out
}

pub fn report(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "experiment {}  status {}{}  t {}  batches {}",
        r.experiment_id,
        r.status,
        if r.continuing { " (continuing)" } else { "" },
        r.t,
        r.batches_run
    );
    let _ = writeln!(
        out,
        "best {} x {}  phi {:.4}  threshold {} {}",
        r.best.creative,
        r.best.audience,
        r.best.phi,
        r.threshold,
        if r.threshold_crossed { "crossed" } else { "not crossed" }
    );
    let _ = writeln!(out);
    let level = format!("{:.0}% ci", 100.0 * r.level);
    let _ = writeln!(
        out,
        "{:<16} {:<16} {:>9} {:>21} {:>8} {:>11} {:>8}",
        "creative", "audience", "ctr", level, "phi", "impressions", "clicks"
    );
    for c in &r.combinations {
        let ci = format!("[{}, {}]", pct(c.ci[0]), pct(c.ci[1]));
        let _ = writeln!(
            out,
            "{:<16} {:<16} {:>9} {:>21} {:>8.4} {:>11} {:>8}",
            c.creative,
            c.audience,
            pct(c.ctr),
            ci,
            c.phi,
            c.impressions,
            c.clicks
        );
    }
    let _ = writeln!(out);
    for m in &r.creatives {
        let _ = writeln!(out, "P(best creative = {}) = {:.4}", m.name, m.best_probability);
    }
    for m in &r.audiences {
        let _ = writeln!(out, "P(best audience = {}) = {:.4}", m.name, m.best_probability);
    }
    let tot = &r.totals;
    let _ = writeln!(
        out,
        "\narrivals {}  out of audience {}  impressions {}  clicks {}  cost {:.2}",
        tot.arrivals, tot.out_of_context, tot.impressions, tot.clicks, tot.cost
    );
    if let Some(v) = &r.value {
        let fmt = |x: Option<f64>| x.map_or("-".to_owned(), |x| format!("{x:.4}"));
        let _ = writeln!(
            out,
            "value of experimentation {}  value of adaptive design {}",
            fmt(v.value_of_experimentation),
            fmt(v.value_of_adaptive_design)
        );
        for note in &v.notes {
            let _ = writeln!(out, "note: {note}");
        }
    }
    out
}
