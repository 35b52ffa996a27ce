//! Per-cell summaries over trials: mean, 95% normal-approximation interval
//! and divergence fraction.

/// Normal quantile for a two-sided 95% interval.
pub const Z95: f64 = 1.96;

/// Interval construction written into summary CSVs.
pub const CI_METHOD: &str = "normal_1.96";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (denominator `n - 1`); 0 when `n = 1`.
    pub sd: f64,
    pub half_width: f64,
    /// Set when a single value was available, so the width carries no information.
    pub single_sample: bool,
}

/// Summary of the finite entries of `values`; `None` when there are none.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    let xs: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let n = xs.len();
    if n == 0 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some(Summary { n, mean, sd: 0.0, half_width: 0.0, single_sample: true });
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    Some(Summary { n, mean, sd, half_width: Z95 * sd / (n as f64).sqrt(), single_sample: false })
}

/// Named metrics of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub diverged: bool,
    pub metrics: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub metric: String,
    pub n_trials: usize,
    pub n_diverged: usize,
    pub divergence_fraction: f64,
    /// Finite values from non-diverged trials that entered the mean.
    pub n_used: usize,
    pub mean: f64,
    pub ci_half_width: f64,
    pub single_sample: bool,
}

pub const AGGREGATE_HEADER: [&str; 9] = [
    "metric",
    "n_trials",
    "n_diverged",
    "divergence_fraction",
    "n_used",
    "mean",
    "ci95_half_width",
    "single_sample",
    "ci_method",
];

impl AggregateRow {
    pub fn csv_fields(&self) -> Vec<String> {
        use crate::io::format_f64 as f;
        vec![
            self.metric.clone(),
            self.n_trials.to_string(),
            self.n_diverged.to_string(),
            f(self.divergence_fraction),
            self.n_used.to_string(),
            f(self.mean),
            f(self.ci_half_width),
            self.single_sample.to_string(),
            CI_METHOD.to_string(),
        ]
    }
}

/// One row per metric, in first-seen order. Diverged trials count towards
/// the divergence fraction only.
pub fn aggregate(trials: &[TrialMetrics]) -> Vec<AggregateRow> {
    let mut names: Vec<&str> = Vec::new();
    for t in trials {
        for (name, _) in &t.metrics {
            if !names.contains(&name.as_str()) {
                names.push(name);
            }
        }
    }
    let n_trials = trials.len();
    let n_diverged = trials.iter().filter(|t| t.diverged).count();
    let frac = if n_trials == 0 { 0.0 } else { n_diverged as f64 / n_trials as f64 };
    names
        .into_iter()
        .map(|name| {
            let values: Vec<f64> = trials
                .iter()
                .filter(|t| !t.diverged)
                .filter_map(|t| t.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v))
                .collect();
            let s = summarize(&values);
            AggregateRow {
                metric: name.to_string(),
                n_trials,
                n_diverged,
                divergence_fraction: frac,
                n_used: s.map_or(0, |s| s.n),
                mean: s.map_or(f64::NAN, |s| s.mean),
                ci_half_width: s.map_or(f64::NAN, |s| s.half_width),
                single_sample: s.is_some_and(|s| s.single_sample),
            }
        })
        .collect()
}
