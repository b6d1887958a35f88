// SPDX-License-Identifier: MIT OR Apache-2.0

use super::{EvalError, EvalReport};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeRow {
    pub group_id: usize,
    pub n_participants: usize,
    pub n_test_obs: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeTable {
    /// Sorted by participant count, then group id.
    pub rows: Vec<SampleSizeRow>,
    /// Population variance of RMSE over the ⌈G/3⌉ smallest groups.
    pub small_tertile_var: f64,
    /// Same over the ⌈G/3⌉ largest groups.
    pub large_tertile_var: f64,
}

fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

pub fn sample_size_analysis(report: &EvalReport) -> SampleSizeTable {
    let mut rows: Vec<SampleSizeRow> = report
        .groups
        .iter()
        .map(|g| SampleSizeRow {
            group_id: g.group_id,
            n_participants: g.n_participants,
            n_test_obs: g.n_test_obs,
            rmse: g.rmse,
        })
        .collect();
    rows.sort_by_key(|r| (r.n_participants, r.n_test_obs, r.group_id));
    let t = rows.len().div_ceil(3);
    let small: Vec<f64> = rows.iter().take(t).map(|r| r.rmse).collect();
    let large: Vec<f64> = rows.iter().rev().take(t).map(|r| r.rmse).collect();
    SampleSizeTable {
        small_tertile_var: variance(&small),
        large_tertile_var: variance(&large),
        rows,
    }
}

/// Tidy per-fold and pooled rows:
/// `strategy,model,fold,group_id,n_part,n_obs,rmse`. The generalized model
/// appears with group id `generalized`; pooled rows use fold `pooled`.
pub fn write_report<W: Write>(reports: &[EvalReport], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["strategy", "model", "fold", "group_id", "n_part", "n_obs", "rmse"])?;
    for r in reports {
        let model = r.model.name();
        for f in &r.folds {
            let fold = f.fold.to_string();
            let n_part: usize = f.groups.iter().map(|g| g.n_participants).sum();
            out.write_record([
                r.strategy.as_str(),
                model,
                &fold,
                "generalized",
                &n_part.to_string(),
                &f.n_test_obs.to_string(),
                &f.generalized_rmse.to_string(),
            ])?;
            for g in &f.groups {
                out.write_record([
                    r.strategy.as_str(),
                    model,
                    &fold,
                    &g.group_id.to_string(),
                    &g.n_participants.to_string(),
                    &g.n_test_obs.to_string(),
                    &g.rmse.to_string(),
                ])?;
            }
        }
        let n_part: usize = r.groups.iter().map(|g| g.n_participants).sum();
        let n_obs: usize = r.groups.iter().map(|g| g.n_test_obs).sum();
        out.write_record([
            r.strategy.as_str(),
            model,
            "pooled",
            "generalized",
            &n_part.to_string(),
            &n_obs.to_string(),
            &r.generalized_rmse.to_string(),
        ])?;
        for g in &r.groups {
            out.write_record([
                r.strategy.as_str(),
                model,
                "pooled",
                &g.group_id.to_string(),
                &g.n_participants.to_string(),
                &g.n_test_obs.to_string(),
                &g.rmse.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub model: String,
    pub wrmse: f64,
    pub generalized_rmse: f64,
    pub delta: f64,
}

/// `strategy,model,wrmse,generalized_rmse,delta` with delta =
/// generalized − WRMSE.
pub fn write_summary<W: Write>(reports: &[EvalReport], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        out.serialize(SummaryRow {
            strategy: r.strategy.clone(),
            model: r.model.name().to_string(),
            wrmse: r.wrmse,
            generalized_rmse: r.generalized_rmse,
            delta: r.delta(),
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(r: R) -> Result<Vec<SummaryRow>, EvalError> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| EvalError::Csv {
                what: "summary.csv",
                line: i as u64 + 2,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Long-format values for external plotting:
/// `figure,strategy,model,series,x,y,err2sd`. Figure `wrmse` has one row
/// per condition; figure `sample_size` has one row per group with x the
/// participant count.
pub fn write_plotdata<W: Write>(reports: &[EvalReport], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["figure", "strategy", "model", "series", "x", "y", "err2sd"])?;
    for r in reports {
        let model = r.model.name();
        out.write_record([
            "wrmse",
            &r.strategy,
            model,
            "grouped",
            "",
            &r.wrmse.to_string(),
            &r.wrmse_err2sd.to_string(),
        ])?;
        out.write_record([
            "wrmse",
            &r.strategy,
            model,
            "generalized",
            "",
            &r.generalized_rmse.to_string(),
            &r.generalized_err2sd.to_string(),
        ])?;
        for row in sample_size_analysis(r).rows {
            out.write_record([
                "sample_size",
                &r.strategy,
                model,
                &format!("group{}", row.group_id),
                &row.n_participants.to_string(),
                &row.rmse.to_string(),
                "",
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per group of every report:
/// `strategy,model,group_id,n_participants,n_test_obs,rmse`, sorted by size.
pub fn write_sample_sizes<W: Write>(reports: &[EvalReport], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["strategy", "model", "group_id", "n_participants", "n_test_obs", "rmse"])?;
    for r in reports {
        for row in sample_size_analysis(r).rows {
            out.write_record([
                r.strategy.as_str(),
                r.model.name(),
                &row.group_id.to_string(),
                &row.n_participants.to_string(),
                &row.n_test_obs.to_string(),
                &row.rmse.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{FoldResult, GroupResult};
    use crate::models::ModelKind;

    fn report(sizes: &[(usize, f64)]) -> EvalReport {
        let groups: Vec<GroupResult> = sizes
            .iter()
            .enumerate()
            .map(|(g, &(n, rmse))| GroupResult {
                group_id: g,
                n_participants: n,
                n_test_obs: n * 10,
                rmse,
                singleton: n == 1,
            })
            .collect();
        EvalReport {
            strategy: "DailyActivity".into(),
            model: ModelKind::Gp,
            seed: 1,
            config_digest: "abc".into(),
            generalized_rmse: 10.0,
            wrmse: 8.0,
            groups: groups.clone(),
            folds: vec![FoldResult {
                fold: 0,
                generalized_rmse: 10.0,
                n_test_obs: 100,
                wrmse: 8.0,
                groups,
            }],
            wrmse_err2sd: 0.0,
            generalized_err2sd: 0.0,
            fallback_fits: 0,
        }
    }

    #[test]
    fn one_group_one_row() {
        let t = sample_size_analysis(&report(&[(5, 3.0)]));
        assert_eq!(t.rows.len(), 1);
    }

    #[test]
    fn tertiles() {
        let t = sample_size_analysis(&report(&[(10, 5.0), (1, 1.0), (2, 9.0), (8, 5.5), (3, 4.0), (12, 4.5)]));
        assert_eq!(
            t.rows.iter().map(|r| r.n_participants).collect::<Vec<_>>(),
            [1, 2, 3, 8, 10, 12]
        );
        assert!((t.small_tertile_var - 16.0).abs() < 1e-12);
        assert!((t.large_tertile_var - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn summary_round_trip() {
        let r = report(&[(4, 7.0), (6, 8.0)]);
        let mut buf = Vec::new();
        write_summary(std::slice::from_ref(&r), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "strategy,model,wrmse,generalized_rmse,delta\nDailyActivity,gp,8.0,10.0,2.0\n"
        );
        let back = read_summary(buf.as_slice()).unwrap();
        assert_eq!(back[0].delta, 2.0);
    }

    #[test]
    fn report_rows() {
        let r = report(&[(4, 7.0), (6, 8.0)]);
        let mut buf = Vec::new();
        write_report(std::slice::from_ref(&r), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("strategy,model,fold,group_id,n_part,n_obs,rmse\n"));
        assert_eq!(text.lines().count(), 1 + 3 + 3);
        let mut buf = Vec::new();
        write_plotdata(&[r], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 + 2);
    }

    #[test]
    fn sample_size_rows_sorted() {
        let mut buf = Vec::new();
        write_sample_sizes(&[report(&[(6, 8.0), (4, 7.0)])], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let sizes: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
        assert_eq!(sizes, ["4", "6"]);
    }
}
