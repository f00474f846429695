use crate::corpus::ClassId;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;

use super::SeedSummary;

/// Per-class columns, in reporting order.
pub const TABLE_CLASSES: [ClassId; 4] = [ClassId::Forest, ClassId::Buildings, ClassId::Hydrography, ClassId::Roads];

fn header() -> String {
    let mut cols = vec!["run", "OA", "mean dIoU"];
    cols.extend(TABLE_CLASSES.iter().map(|c| c.name()));
    format!("| {} |\n|{}\n", cols.join(" | "), "---|".repeat(cols.len()))
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Markdown table of OA, mean dIoU and per-class dIoU in percent with
/// one decimal.
pub fn report_table(rows: &[(String, &MetricReport)]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let mut s = header();
    for (name, r) in rows {
        let mut cells = vec![name.clone(), pct(r.oa), pct(r.mean_diou)];
        for c in TABLE_CLASSES {
            let v = r
                .per_class_diou
                .get(&c)
                .ok_or_else(|| Error::Data(format!("report `{name}` has no {} score", c.name())))?;
            cells.push(pct(*v));
        }
        s.push_str(&format!("| {} |\n", cells.join(" | ")));
    }
    Ok(s)
}

/// Like [`report_table`] with `mean ± std` cells across seeds.
pub fn summary_table(rows: &[(String, &SeedSummary)]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let cell = |d: &super::Dispersion| format!("{} ± {}", pct(d.mean), pct(d.std));
    let mut s = header();
    for (name, r) in rows {
        let mut cells = vec![format!("{name} (n={})", r.runs), cell(&r.oa), cell(&r.mean_diou)];
        for c in TABLE_CLASSES {
            let d = r
                .per_class_diou
                .get(&c)
                .ok_or_else(|| Error::Data(format!("summary `{name}` has no {} score", c.name())))?;
            cells.push(cell(d));
        }
        s.push_str(&format!("| {} |\n", cells.join(" | ")));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::corpus::NUM_CLASSES;
    use crate::metrics::{mean_class_score, OverlapCounts};

    fn report(oa: f64, per_class: &[(ClassId, f64)]) -> MetricReport {
        let per_class_diou: BTreeMap<ClassId, f64> = per_class.iter().copied().collect();
        MetricReport {
            confusion: [[0; NUM_CLASSES]; NUM_CLASSES],
            diou_counts: [OverlapCounts::default(); NUM_CLASSES],
            exclude_background_from_mean: true,
            oa,
            mean_diou: mean_class_score(&per_class_diou, true),
            per_class_diou,
        }
    }

    #[test]
    fn cassini_row_renders_in_percent() {
        let r = report(
            0.853,
            &[
                (ClassId::Forest, 0.561),
                (ClassId::Buildings, 0.047),
                (ClassId::Hydrography, 0.709),
                (ClassId::Roads, 0.127),
            ],
        );
        let t = report_table(&[("translate".into(), &r)]).unwrap();
        assert!(t.contains("| translate | 85.3 | 36.1 | 56.1 | 4.7 | 70.9 | 12.7 |"), "{t}");
        assert!(t.starts_with("| run | OA | mean dIoU | forest | buildings | hydrography | roads |"));
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(report_table(&[]).is_err());
        assert!(report_table(&[("x".into(), &report(0.5, &[]))]).is_err());
        assert!(summary_table(&[]).is_err());
    }

    #[test]
    fn summary_cells_carry_the_spread() {
        let a = report(0.8, &[(ClassId::Forest, 0.5), (ClassId::Buildings, 0.1), (ClassId::Hydrography, 0.2), (ClassId::Roads, 0.3)]);
        let b = report(0.9, &[(ClassId::Forest, 0.7), (ClassId::Buildings, 0.1), (ClassId::Hydrography, 0.2), (ClassId::Roads, 0.3)]);
        let s = SeedSummary::of(&[&a, &b]).unwrap();
        let t = summary_table(&[("direct".into(), &s)]).unwrap();
        assert!(t.contains("| direct (n=2) | 85.0 ± 7.1 |"), "{t}");
        assert!(t.contains("| 60.0 ± 14.1 |"), "{t}");
    }
}
