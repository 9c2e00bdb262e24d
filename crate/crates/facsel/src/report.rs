//! Plain-text summaries printed to standard output; the JSON files are the
//! machine-readable record.

use std::fmt::Write as _;

use facsel_core::encompassing::Type2Report;
use facsel_core::identification::IdentificationReport;
use facsel_core::marglik::DimensionalitySelection;

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

pub fn selection_table(sel: &DimensionalitySelection) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>3} {:>12} {:>10} {:>8} {:>9} {:>8} {:>6}  note", "k", "log marg", "log BF k0", "SE", "sv ratio", "R-hat", "ok");
    for r in &sel.records {
        let _ = writeln!(
            out,
            "{:>3} {:>12} {:>10} {:>8} {:>9.3} {:>8} {:>6}  {}",
            r.k,
            opt(r.marglik.as_ref().map(|m| m.log_marginal), 2),
            opt(r.log_bf_vs_zero, 2),
            opt(r.log_bf_se, 3),
            r.regularity.singular_value_ratio,
            opt(r.regularity.max_pooled_rhat, 3),
            if r.admissible { "yes" } else { "no" },
            r.note.as_deref().unwrap_or(""),
        );
    }
    let _ = writeln!(out, "selected k = {}", sel.selected_k);
    out
}

pub fn identification_table(report: &IdentificationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "pattern {} x {}", report.p, report.m);
    for (name, c) in report.conditions() {
        let _ = writeln!(out, "  {name:<14} {}", if c.passed { "pass" } else { "FAIL" });
        for m in &c.messages {
            let _ = writeln!(out, "      {m}");
        }
    }
    if let Some(w) = &report.ledermann.warning {
        let _ = writeln!(out, "  warning: {w}");
    }
    let _ = writeln!(out, "overall: {}", if report.overall { "identified" } else { "NOT identified" });
    out
}

pub fn type2_table(report: &Type2Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>10} {:>10} {:>12} {:>10} {:>10}",
        "model", "prior", "posterior", "BF vs unc", "log SE", "P(model)"
    );
    for r in &report.models {
        let _ = writeln!(
            out,
            "{:<20} {:>10.4} {:>10.4} {:>12} {:>10} {:>10}{}",
            r.name,
            r.prior_mass.proportion,
            r.posterior_mass.proportion,
            opt(r.bf_vs_unconstrained, 3),
            opt(r.log_bf_se, 3),
            opt(r.posterior_probability, 4),
            r.flag.as_deref().map(|f| format!("  [{f}]")).unwrap_or_default(),
        );
    }
    if let Some(best) = report.best() {
        let _ = writeln!(out, "highest posterior probability: {}", best.name);
    }
    out
}
