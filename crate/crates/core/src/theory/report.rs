use std::fmt::Write;

use super::engine::{CheckResult, RiskReport};

/// Tab-separated table with one row per design.
pub fn report_table<'a>(reports: impl IntoIterator<Item = &'a RiskReport>) -> String {
    let mut out = String::from(
        "design\tclosed_form_bias\tempirical_bias\tclosed_form_variance\tempirical_variance\tclosed_form_excess\tempirical_excess\ttrials\tseed\tnoise\n",
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{}\t{}\tgaussian",
            r.design,
            r.closed_form_bias,
            r.bias_part,
            r.closed_form_variance,
            r.variance_part,
            r.closed_form_excess(),
            r.excess_mean,
            r.trials,
            r.seed
        );
    }
    out
}

/// Tab-separated table with one row per check.
pub fn checks_table<'a>(checks: impl IntoIterator<Item = &'a CheckResult>) -> String {
    let mut out = String::from("check\tempirical\texpected\ttolerance\tstatus\n");
    for c in checks {
        let status = if c.passed { "pass" } else { "FAIL" };
        let _ = writeln!(out, "{}\t{:.6e}\t{:.6e}\t{:.3e}\t{}", c.name, c.empirical, c.expected, c.tolerance, status);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::{mc_validate_thm1, synthetic_classes};

    #[test]
    fn tables_have_header_and_one_row_per_entry() {
        let specs = synthetic_classes(2, 3, 60, 1.0, 1.0, 0).unwrap();
        let report = mc_validate_thm1(&specs, 4, 7).unwrap();
        let table = report_table([&report, &report]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("design\tclosed_form_bias"));
        assert!(lines[1].starts_with("per-class\t"));
        assert_eq!(lines[1].split('\t').count(), lines[0].split('\t').count());
        let checks = report.checks();
        assert_eq!(checks_table(&checks).lines().count(), 4);
    }
}
