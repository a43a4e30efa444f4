//! Error metrics: per-date range-normalized RMSE, its time-averaged distance
//! from a static baseline, signed normalized error, and dispersion.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Day, KpiFrame};
use crate::error::{Error, Result};
use crate::models::TrainedModel;

/// Per-date NRMSE trace of one model over an evaluation span.
/// Dates are strictly increasing; every value is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub entries: Vec<ErrorEntry>,
    /// Dates dropped because the target range was degenerate that day.
    #[serde(default)]
    pub skipped_degenerate: usize,
    /// Dates dropped because fewer than two samples were available.
    #[serde(default)]
    pub skipped_small: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub date: Day,
    pub nrmse: f64,
    pub n_samples: usize,
}

impl ErrorSeries {
    pub fn new(entries: Vec<ErrorEntry>) -> ErrorSeries {
        debug_assert!(entries.windows(2).all(|w| w[0].date < w[1].date));
        ErrorSeries {
            entries,
            skipped_degenerate: 0,
            skipped_small: 0,
        }
    }

    pub fn dates(&self) -> impl Iterator<Item = Day> + '_ {
        self.entries.iter().map(|e| e.date)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.nrmse)
    }

    pub fn mean(&self) -> Option<f64> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.values().sum::<f64>() / self.entries.len() as f64)
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["date", "nrmse", "n_samples"])?;
        for e in &self.entries {
            w.write_record([
                e.date.to_string(),
                e.nrmse.to_string(),
                e.n_samples.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<ErrorSeries> {
        let mut r = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |col: &str, val: &str| Error::UnparseableCell {
                row: i + 1,
                column: col.into(),
                value: val.into(),
            };
            let date_s = rec.get(0).unwrap_or("");
            let date = Day::parse_iso(date_s).ok_or_else(|| bad("date", date_s))?;
            let nrmse_s = rec.get(1).unwrap_or("");
            let nrmse: f64 = nrmse_s.parse().map_err(|_| bad("nrmse", nrmse_s))?;
            let n_s = rec.get(2).unwrap_or("");
            let n_samples: usize = n_s.parse().map_err(|_| bad("n_samples", n_s))?;
            entries.push(ErrorEntry {
                date,
                nrmse,
                n_samples,
            });
        }
        Ok(ErrorSeries::new(entries))
    }
}

/// Mean, population standard deviation, and their ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionStat {
    pub mean: f64,
    pub sd: f64,
    pub cov: f64,
}

/// RMSE between truth and prediction divided by the range of the truth.
///
/// A degenerate range (all-equal truth) has no defined value and is surfaced
/// as [`Error::DegenerateRange`] so callers can skip and count the day.
pub fn nrmse_on_date(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::NoEvaluableDates);
    }
    let (min, max) = min_max(truth);
    if max <= min {
        return Err(Error::DegenerateRange);
    }
    let mse = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| (t - p) * (t - p))
        .sum::<f64>()
        / truth.len() as f64;
    Ok(mse.sqrt() / (max - min))
}

fn min_max(values: &[f64]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        if v < min {
            min = v;
        }
        if v > max {
            max = v;
        }
    }
    (min, max)
}

/// Per-date NRMSE of a model over a supervised evaluation frame, dated by
/// target date. Dates with fewer than two samples or a degenerate target
/// range are skipped and counted.
pub fn error_series(model: &TrainedModel, eval: &KpiFrame) -> Result<ErrorSeries> {
    if eval.is_empty() {
        return Err(Error::NoEvaluableDates);
    }
    let preds = model.predict(eval)?;
    let truths = eval.targets()?;
    let mut entries = Vec::new();
    let mut skipped_degenerate = 0usize;
    let mut skipped_small = 0usize;
    for (date, idxs) in eval.rows_by_target_date() {
        if idxs.len() < 2 {
            skipped_small += 1;
            continue;
        }
        let t: Vec<f64> = idxs.iter().map(|&i| truths[i]).collect();
        let p: Vec<f64> = idxs.iter().map(|&i| preds[i]).collect();
        match nrmse_on_date(&t, &p) {
            Ok(nrmse) => entries.push(ErrorEntry {
                date,
                nrmse,
                n_samples: idxs.len(),
            }),
            Err(Error::DegenerateRange) => skipped_degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    if entries.is_empty() {
        return Err(Error::NoEvaluableDates);
    }
    if skipped_degenerate + skipped_small > 0 {
        log::debug!(
            "error_series: skipped {skipped_degenerate} degenerate-range and {skipped_small} single-sample dates"
        );
    }
    Ok(ErrorSeries {
        entries,
        skipped_degenerate,
        skipped_small,
    })
}

/// Percentage distance of the mitigated series' time-averaged NRMSE from the
/// static baseline's, means taken over their common dates.
pub fn delta_mean_nrmse(mitigated: &ErrorSeries, static_: &ErrorSeries) -> Result<f64> {
    let dates: BTreeSet<Day> = mitigated
        .dates()
        .collect::<BTreeSet<_>>()
        .intersection(&static_.dates().collect())
        .copied()
        .collect();
    if dates.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let mean_over = |s: &ErrorSeries| -> f64 {
        let vals: Vec<f64> = s
            .entries
            .iter()
            .filter(|e| dates.contains(&e.date))
            .map(|e| e.nrmse)
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    let m1 = mean_over(mitigated);
    let m0 = mean_over(static_);
    if m0 == 0.0 {
        return Err(Error::ZeroBaselineMean);
    }
    Ok((m1 - m0) / m0 * 100.0)
}

/// Signed error normalized by a range: positive means overestimation.
pub fn normalized_error(truth: f64, pred: f64, range: f64) -> Result<f64> {
    if !range.is_finite() || range <= 0.0 {
        return Err(Error::NonPositiveRange);
    }
    Ok((pred - truth) / range)
}

/// Population standard deviation over mean.
pub fn dispersion(values: &[f64]) -> Result<DispersionStat> {
    if values.len() < 2 {
        return Err(Error::DegenerateDispersion(format!(
            "need at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::DegenerateDispersion("zero mean".into()));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    Ok(DispersionStat {
        mean,
        sd,
        cov: sd / mean,
    })
}

/// Auxiliary regression metrics reported alongside NRMSE. None of these feed
/// the pipeline; they exist for reporting parity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxMetrics {
    pub mse: f64,
    pub mae: f64,
    pub median_ae: f64,
    pub r2: Option<f64>,
    pub explained_variance: Option<f64>,
    pub mape: Option<f64>,
    pub pearson: Option<f64>,
}

/// Evaluate the auxiliary metric set in one pass.
pub fn evaluate_all(truth: &[f64], pred: &[f64]) -> Result<AuxMetrics> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::NoEvaluableDates);
    }
    let n = truth.len() as f64;
    let residuals: Vec<f64> = truth.iter().zip(pred).map(|(t, p)| t - p).collect();
    let mse = residuals.iter().map(|r| r * r).sum::<f64>() / n;
    let mae = residuals.iter().map(|r| r.abs()).sum::<f64>() / n;
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    abs.sort_by(|a, b| a.total_cmp(b));
    let median_ae = if abs.len() % 2 == 1 {
        abs[abs.len() / 2]
    } else {
        (abs[abs.len() / 2 - 1] + abs[abs.len() / 2]) / 2.0
    };
    let mean_t = truth.iter().sum::<f64>() / n;
    let ss_tot = truth.iter().map(|t| (t - mean_t) * (t - mean_t)).sum::<f64>();
    let r2 = if ss_tot > 0.0 {
        Some(1.0 - residuals.iter().map(|r| r * r).sum::<f64>() / ss_tot)
    } else {
        None
    };
    let mean_r = residuals.iter().sum::<f64>() / n;
    let var_r = residuals.iter().map(|r| (r - mean_r) * (r - mean_r)).sum::<f64>() / n;
    let explained_variance = if ss_tot > 0.0 {
        Some(1.0 - var_r / (ss_tot / n))
    } else {
        None
    };
    let nonzero: Vec<(f64, f64)> = truth
        .iter()
        .zip(pred)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, p)| (*t, *p))
        .collect();
    let mape = if nonzero.is_empty() {
        None
    } else {
        Some(
            nonzero
                .iter()
                .map(|(t, p)| ((t - p) / t).abs())
                .sum::<f64>()
                / nonzero.len() as f64
                * 100.0,
        )
    };
    let mean_p = pred.iter().sum::<f64>() / n;
    let cov_tp = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| (t - mean_t) * (p - mean_p))
        .sum::<f64>();
    let var_p = pred.iter().map(|p| (p - mean_p) * (p - mean_p)).sum::<f64>();
    let pearson = if ss_tot > 0.0 && var_p > 0.0 {
        Some(cov_tp / (ss_tot.sqrt() * var_p.sqrt()))
    } else {
        None
    };
    Ok(AuxMetrics {
        mse,
        mae,
        median_ae,
        r2,
        explained_variance,
        mape,
        pearson,
    })
}
