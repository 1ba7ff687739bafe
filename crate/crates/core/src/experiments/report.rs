//! CSV tables and plain-text summaries of experiment results.

use crate::direct::{write_trace_csv, TraceRow};
use crate::error::Result;
use crate::experiments::bench::BenchRow;
use crate::experiments::compare::CompareRow;
use crate::experiments::outer::{Evaluation, OuterResult, SymmetryReport};
use crate::experiments::sweep::{SweepAxis, SweepRow};

pub fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()).into())
}

fn names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

fn strings<'a>(items: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    items.into_iter().map(str::to_string).collect()
}

fn free_coefficients(r: &OuterResult) -> &[f64] {
    &r.alpha.values()[..r.alpha.k() / 2]
}

/// `alpha_1..alpha_m, objective, baseline, improvement, evals, iterations`
/// with `m = (K - 1) / 2` free coefficients, outermost first.
pub fn outer_csv(r: &OuterResult) -> Result<Vec<u8>> {
    let free = free_coefficients(r);
    let mut header: Vec<String> = names("alpha", free.len()).collect();
    header.extend(strings(["objective", "baseline", "improvement", "evals", "iterations"]));
    let mut row: Vec<String> = free.iter().map(f64::to_string).collect();
    row.extend([
        r.objective.to_string(),
        r.baseline.to_string(),
        r.improvement.to_string(),
        r.evals.to_string(),
        r.iterations.to_string(),
    ]);
    csv_bytes(&header, &[row])
}

pub fn outer_text(r: &OuterResult) -> String {
    format!(
        "optimal density alpha = {}\n\
         objective (final training loss) = {:.6}, uniform density = {:.6}\n\
         the optimal density reduces the objective function by {:.2}%\n\
         {} evaluations, {} iterations\n",
        r.alpha,
        r.objective,
        r.baseline,
        100.0 * r.improvement,
        r.evals,
        r.iterations
    )
}

pub fn trace_csv(trace: &[TraceRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf)?;
    Ok(buf)
}

/// Every objective evaluation in order: `eval, theta_1..theta_n, value`.
pub fn evaluations_csv(evals: &[Evaluation]) -> Result<Vec<u8>> {
    let n = evals.first().map_or(0, |e| e.point.len());
    let mut header = vec!["eval".to_string()];
    header.extend(names("theta", n));
    header.push("value".into());
    let rows: Vec<Vec<String>> = evals
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut r = vec![(i + 1).to_string()];
            r.extend(e.point.iter().map(f64::to_string));
            r.push(e.value.to_string());
            r
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// `axis_value, alpha_1..alpha_m, objective, baseline, improvement, error`.
/// Failed runs leave the numeric fields empty and carry the message.
pub fn sweep_csv(rows: &[SweepRow], kernel: usize) -> Result<Vec<u8>> {
    let m = kernel / 2;
    let mut header = vec!["axis_value".to_string()];
    header.extend(names("alpha", m));
    header.extend(strings(["objective", "baseline", "improvement", "error"]));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut r = vec![row.axis_value.to_string()];
            match &row.outcome {
                Ok(o) => {
                    r.extend(free_coefficients(o).iter().map(f64::to_string));
                    r.extend([o.objective.to_string(), o.baseline.to_string(), o.improvement.to_string(), String::new()]);
                }
                Err(e) => {
                    r.extend(std::iter::repeat_n(String::new(), m + 3));
                    r.push(e.clone());
                }
            }
            r
        })
        .collect();
    csv_bytes(&header, &body)
}

pub fn sweep_text(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut s = format!("sweep over {axis}");
    if axis == SweepAxis::Stride {
        s.push_str(" (image size held fixed)");
    }
    s.push('\n');
    for row in rows {
        match &row.outcome {
            Ok(o) => s.push_str(&format!(
                "{axis} = {}: alpha = {}, objective {:.6}, reduction {:.2}%\n",
                row.axis_value,
                o.alpha,
                o.objective,
                100.0 * o.improvement
            )),
            Err(e) => s.push_str(&format!("{axis} = {}: failed: {e}\n", row.axis_value)),
        }
    }
    s
}

/// `family, alpha_1..alpha_K, final_loss, heldout_mse`.
pub fn compare_csv(rows: &[CompareRow]) -> Result<Vec<u8>> {
    let k = rows.first().map_or(0, |r| r.alpha.len());
    let mut header = vec!["family".to_string()];
    header.extend(names("alpha", k));
    header.extend(strings(["final_loss", "heldout_mse"]));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut r = vec![row.family.clone()];
            r.extend(row.alpha.iter().map(f64::to_string));
            r.extend([row.final_loss.to_string(), row.heldout_mse.to_string()]);
            r
        })
        .collect();
    csv_bytes(&header, &body)
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<Vec<u8>> {
    let header = strings([
        "k",
        "out_channels",
        "standard_ms",
        "weighted_ms",
        "premultiplied_ms",
        "ratio",
        "premultiplied_ratio",
        "flop_ratio",
    ]);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                r.out_channels.to_string(),
                format!("{:.4}", r.standard_ms),
                format!("{:.4}", r.weighted_ms),
                format!("{:.4}", r.premultiplied_ms),
                format!("{:.4}", r.ratio),
                format!("{:.4}", r.premultiplied_ratio),
                r.flop_ratio.to_string(),
            ]
        })
        .collect();
    csv_bytes(&header, &body)
}

pub fn symmetry_csv(r: &SymmetryReport) -> Result<Vec<u8>> {
    let header = strings([
        "alpha_1_free",
        "alpha_3",
        "alpha_1_mixed",
        "beta_1",
        "alpha_gap",
        "beta_gap",
        "objective_free",
        "objective_mixed",
    ]);
    let row = [
        r.alpha1_free,
        r.alpha3,
        r.alpha1_mixed,
        r.beta1,
        r.alpha_gap(),
        r.beta_gap(),
        r.objective_free,
        r.objective_mixed,
    ]
    .iter()
    .map(f64::to_string)
    .collect();
    csv_bytes(&header, &[row])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityVector;

    fn result() -> OuterResult {
        OuterResult {
            alpha: DensityVector::new(vec![0.5, 0.25, 1.0, 0.25, 0.5], 1.0).unwrap(),
            objective: 0.47,
            baseline: 1.0,
            improvement: 0.53,
            trace: vec![],
            evals: 9,
            iterations: 3,
            evaluations: vec![],
        }
    }

    #[test]
    fn outer_csv_has_free_alpha_columns() {
        let text = String::from_utf8(outer_csv(&result()).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("alpha_1,alpha_2,objective,baseline,improvement,evals,iterations"));
        assert_eq!(lines.next(), Some("0.5,0.25,0.47,1,0.53,9,3"));
    }

    #[test]
    fn text_reports_percentage() {
        assert!(outer_text(&result()).contains("reduces the objective function by 53.00%"));
    }

    #[test]
    fn failed_sweep_row_keeps_column_count() {
        let rows = vec![
            SweepRow { axis_value: 1, outcome: Ok(result()) },
            SweepRow { axis_value: 2, outcome: Err("diverged, with comma".into()) },
        ];
        let bytes = sweep_csv(&rows, 5).unwrap();
        let mut rdr = csv::Reader::from_reader(bytes.as_slice());
        let width = rdr.headers().unwrap().len();
        let recs: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
        assert!(recs.iter().all(|r| r.len() == width));
        assert_eq!(&recs[1][width - 1], "diverged, with comma");
    }
}
