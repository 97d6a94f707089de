//! Accuracy measures, domain-size classes and relative tables.

use std::fmt;

/// Monte-Carlo root mean squared error and absolute bias of `estimates`
/// around `truth`; `None` without estimates.
pub fn rmse_ab(estimates: &[f64], truth: f64) -> Option<(f64, f64)> {
    if estimates.is_empty() {
        return None;
    }
    let r = estimates.len() as f64;
    let mse = estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / r;
    let mean = estimates.iter().sum::<f64>() / r;
    Some((mse.sqrt(), (mean - truth).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn name(self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Splits domains into three classes by mean realized sample size.
///
/// With explicit `boundaries = [a, b]` a domain is small if `nbar < a`,
/// medium if `nbar < b`, large otherwise. Without them the domains are
/// sorted by `(nbar, label)` and cut into terciles; when `M` is not a
/// multiple of 3 the extra domains go to the smaller classes first.
pub fn classify_domains(nbar: &[f64], labels: &[u64], boundaries: Option<[f64; 2]>) -> Vec<SizeClass> {
    if let Some([a, b]) = boundaries {
        return nbar
            .iter()
            .map(|&n| {
                if n < a {
                    SizeClass::Small
                } else if n < b {
                    SizeClass::Medium
                } else {
                    SizeClass::Large
                }
            })
            .collect();
    }
    let m = nbar.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| nbar[i].total_cmp(&nbar[j]).then(labels[i].cmp(&labels[j])));
    let base = m / 3;
    let extra = m % 3;
    let small = base + usize::from(extra >= 1);
    let medium = base + usize::from(extra >= 2);
    let mut classes = vec![SizeClass::Large; m];
    for (rank, &i) in order.iter().enumerate() {
        classes[i] = if rank < small {
            SizeClass::Small
        } else if rank < small + medium {
            SizeClass::Medium
        } else {
            SizeClass::Large
        };
    }
    classes
}

/// Per-domain accuracy of one estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub truth: f64,
    /// Mean of the valid estimates.
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub rmse: Option<f64>,
    pub ab: Option<f64>,
    pub valid: usize,
    pub failed: usize,
}

/// Average of `metric` over the domains of `class` (all domains for
/// `None`) with a defined value.
pub fn class_average(cells: &[Cell], classes: &[SizeClass], class: Option<SizeClass>, metric: fn(&Cell) -> Option<f64>) -> Option<f64> {
    let values: Vec<f64> =
        cells.iter().zip(classes).filter(|(_, c)| class.is_none_or(|k| **c == k)).filter_map(|(cell, _)| metric(cell)).collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub estimator: String,
    /// `small`, `medium`, `large` or `all`.
    pub class: &'static str,
    pub metric: &'static str,
    /// `None` when undefined (no valid cells, or a zero benchmark average).
    pub value: Option<f64>,
}

fn ratio(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if b != 0.0 => Some(a / b),
        _ => None,
    }
}

type Metric = fn(&Cell) -> Option<f64>;

/// Average RMSE and AB per class and overall, absolute and relative to
/// `benchmark`.
pub fn relative_table(estimator: &str, cells: &[Cell], benchmark: &[Cell], classes: &[SizeClass]) -> Vec<TableRow> {
    let groups: Vec<(Option<SizeClass>, &'static str)> =
        SizeClass::ALL.iter().map(|c| (Some(*c), c.name())).chain([(None, "all")]).collect();
    let metrics: [(&str, Metric); 2] = [("rmse", |c| c.rmse), ("ab", |c| c.ab)];
    let mut rows = Vec::new();
    for (name, metric) in metrics {
        for &(class, label) in &groups {
            let value = class_average(cells, classes, class, metric);
            rows.push(TableRow { estimator: estimator.to_string(), class: label, metric: name, value });
        }
    }
    for (name, metric) in metrics {
        for &(class, label) in &groups {
            let value = ratio(class_average(cells, classes, class, metric), class_average(benchmark, classes, class, metric));
            let metric = if name == "rmse" { "rel_rmse" } else { "rel_ab" };
            rows.push(TableRow { estimator: estimator.to_string(), class: label, metric, value });
        }
    }
    rows
}
