//! verify@k estimation, error taxonomy tallies and report tables.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::healing::Episode;
use crate::prompting::Strategy;
use crate::verification::OutcomeCategory;

/// k values reported, where the attempt pool allows.
pub const REPORTED_K: [usize; 3] = [1, 3, 5];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cell {problem_id} has {n} attempts, fewer than k = {k}")]
    InsufficientAttempts { problem_id: String, n: usize, k: usize },
    #[error("estimator domain error: n = {n}, c = {c}, k = {k}")]
    DomainError { n: usize, c: usize, k: usize },
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("could not write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv encoding failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?} (expected markdown or csv)")),
        }
    }
}

/// Verified flags of one problem's attempts, in attempt order.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub problem_id: String,
    pub model: String,
    pub temperature: f64,
    pub strategy: Strategy,
    pub attempt_results: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rate {
    pub success: usize,
    pub total: usize,
}

impl Rate {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.success as f64 / self.total as f64
        }
    }

    pub fn percent(&self) -> String {
        format_percent(self.success, self.total)
    }
}

/// `100 * s / t` rounded half-up to two decimals, computed in integers.
pub fn format_percent(success: usize, total: usize) -> String {
    if total == 0 {
        return "-".to_string();
    }
    let (s, t) = (success as u128, total as u128);
    let hundredths = (2 * s * 10_000 + t) / (2 * t);
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

/// Problems with at least one verified attempt among their first `k`.
pub fn verify_at_k_empirical(outcomes: &[CellOutcome], k: usize) -> Result<Rate, MetricsError> {
    if k == 0 {
        return Err(MetricsError::DomainError { n: 0, c: 0, k });
    }
    let mut success = 0;
    for cell in outcomes {
        let n = cell.attempt_results.len();
        if n < k {
            return Err(MetricsError::InsufficientAttempts { problem_id: cell.problem_id.clone(), n, k });
        }
        if cell.attempt_results[..k].iter().any(|&v| v) {
            success += 1;
        }
    }
    Ok(Rate { success, total: outcomes.len() })
}

/// `1 - C(n-c, k) / C(n, k)`, the probability that a random k-subset of
/// `n` attempts with `c` successes contains a success.
pub fn verify_at_k_unbiased(n: usize, c: usize, k: usize) -> Result<f64, MetricsError> {
    if k == 0 || k > n || c > n {
        return Err(MetricsError::DomainError { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let miss: f64 = ((n - c + 1)..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - miss)
}

/// Groups episodes into per-problem cells, ordered by group then problem.
pub fn cell_outcomes(episodes: &[Episode]) -> Vec<CellOutcome> {
    let mut cells: BTreeMap<(GroupKey, String), Vec<(usize, bool)>> = BTreeMap::new();
    for e in episodes {
        let key = GroupKey::new(&e.model, e.strategy, e.temperature);
        cells.entry((key, e.problem_id.clone())).or_default().push((e.attempt, e.verified()));
    }
    cells
        .into_iter()
        .map(|((key, problem_id), mut attempts)| {
            attempts.sort_by_key(|&(a, _)| a);
            attempts.dedup_by_key(|&mut (a, _)| a);
            CellOutcome {
                problem_id,
                model: key.model,
                temperature: key.temperature,
                strategy: key.strategy,
                attempt_results: attempts.into_iter().map(|(_, v)| v).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct GroupKey {
    model: String,
    strategy: Strategy,
    temperature: f64,
}

impl GroupKey {
    fn new(model: &str, strategy: Strategy, temperature: f64) -> Self {
        GroupKey { model: model.to_string(), strategy, temperature }
    }
}

impl Eq for GroupKey {}

impl PartialOrd for GroupKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GroupKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.model
            .cmp(&other.model)
            .then(self.strategy.cmp(&other.strategy))
            .then(self.temperature.total_cmp(&other.temperature))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KColumn {
    pub k: usize,
    pub rate: Rate,
    /// Mean over problems of the unbiased estimator.
    pub unbiased: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub strategy: Strategy,
    pub temperature: f64,
    pub problems: usize,
    /// Attempts available in every cell of the row.
    pub attempts: usize,
    pub columns: Vec<KColumn>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaxonomyCounts {
    pub total_runs: usize,
    pub by_category: BTreeMap<OutcomeCategory, usize>,
}

impl TaxonomyCounts {
    pub fn get(&self, c: OutcomeCategory) -> usize {
        self.by_category.get(&c).copied().unwrap_or(0)
    }

    pub fn add(&mut self, c: OutcomeCategory) {
        self.total_runs += 1;
        *self.by_category.entry(c).or_insert(0) += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub model: String,
    pub strategy: Strategy,
    pub counts: TaxonomyCounts,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub errors: Vec<ErrorRow>,
}

/// Tallies every round by category within each (model, strategy) group.
pub fn error_distribution(episodes: &[Episode]) -> Vec<ErrorRow> {
    let mut groups: BTreeMap<(String, Strategy), TaxonomyCounts> = BTreeMap::new();
    for e in episodes {
        let counts = groups.entry((e.model.clone(), e.strategy)).or_default();
        for r in &e.rounds {
            counts.add(r.category);
        }
    }
    groups.into_iter().map(|((model, strategy), counts)| ErrorRow { model, strategy, counts }).collect()
}

pub fn summarize(episodes: &[Episode]) -> SummaryTable {
    let mut groups: BTreeMap<GroupKey, Vec<CellOutcome>> = BTreeMap::new();
    for cell in cell_outcomes(episodes) {
        groups.entry(GroupKey::new(&cell.model, cell.strategy, cell.temperature)).or_default().push(cell);
    }
    let rows = groups
        .into_iter()
        .map(|(key, cells)| {
            let attempts = cells.iter().map(|c| c.attempt_results.len()).min().unwrap_or(0);
            let columns = REPORTED_K
                .iter()
                .filter(|&&k| k <= attempts)
                .map(|&k| {
                    let rate = verify_at_k_empirical(&cells, k).expect("k bounded by every cell's attempts");
                    let unbiased = cells
                        .iter()
                        .map(|c| {
                            let n = c.attempt_results.len();
                            let hits = c.attempt_results.iter().filter(|&&v| v).count();
                            verify_at_k_unbiased(n, hits, k).expect("k <= n")
                        })
                        .sum::<f64>()
                        / cells.len() as f64;
                    KColumn { k, rate, unbiased }
                })
                .collect();
            SummaryRow {
                model: key.model,
                strategy: key.strategy,
                temperature: key.temperature,
                problems: cells.len(),
                attempts,
                columns,
            }
        })
        .collect();
    SummaryTable { rows, errors: error_distribution(episodes) }
}

impl SummaryTable {
    pub fn summary_grid(&self) -> Vec<Vec<String>> {
        let mut header: Vec<String> =
            ["Model", "Strategy", "Temperature", "Problems", "Attempts"].iter().map(|s| s.to_string()).collect();
        header.extend(REPORTED_K.iter().map(|k| format!("verify@{k}")));
        header.extend(REPORTED_K.iter().map(|k| format!("unbiased@{k}")));
        let mut grid = vec![header];
        for row in &self.rows {
            let mut cells = vec![
                row.model.clone(),
                row.strategy.to_string(),
                format!("{:.1}", row.temperature),
                row.problems.to_string(),
                row.attempts.to_string(),
            ];
            let col = |k: usize| row.columns.iter().find(|c| c.k == k);
            for k in REPORTED_K {
                cells.push(match col(k) {
                    Some(c) => format!("{}/{} ({}%)", c.rate.success, c.rate.total, c.rate.percent()),
                    None => "-".to_string(),
                });
            }
            for k in REPORTED_K {
                cells.push(match col(k) {
                    Some(c) => format!("{:.2}%", c.unbiased * 100.0),
                    None => "-".to_string(),
                });
            }
            grid.push(cells);
        }
        grid
    }

    pub fn error_grid(&self) -> Vec<Vec<String>> {
        let header = [
            "Model",
            "Strategy",
            "Total Runs",
            "Syntax",
            "Semantic/Type",
            "Verification",
            "Verified",
            "Timeout",
            "Extraction Failure",
            "Tool Error",
        ];
        let mut grid = vec![header.iter().map(|s| s.to_string()).collect()];
        for row in &self.errors {
            let c = &row.counts;
            let mut cells = vec![row.model.clone(), row.strategy.to_string(), c.total_runs.to_string()];
            cells.extend(
                [
                    OutcomeCategory::SyntaxError,
                    OutcomeCategory::SemanticTypeError,
                    OutcomeCategory::VerificationError,
                    OutcomeCategory::Verified,
                    OutcomeCategory::Timeout,
                    OutcomeCategory::ExtractionFailure,
                    OutcomeCategory::ToolError,
                ]
                .iter()
                .map(|&cat| c.get(cat).to_string()),
            );
            grid.push(cells);
        }
        grid
    }
}

pub fn render_markdown(grid: &[Vec<String>]) -> String {
    let mut out = String::new();
    for (i, row) in grid.iter().enumerate() {
        out.push_str("| ");
        out.push_str(&row.join(" | "));
        out.push_str(" |\n");
        if i == 0 {
            out.push('|');
            out.push_str(&"---|".repeat(row.len()));
            out.push('\n');
        }
    }
    out
}

pub fn render_csv(grid: &[Vec<String>]) -> Result<String, ReportError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for row in grid {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 cells is utf-8"))
}

/// Writes `summary.*` and `errors.*` into `dir`, returning the paths.
pub fn emit_report(episodes: &[Episode], dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, ReportError> {
    let table = summarize(episodes);
    let (ext, summary, errors) = match format {
        ReportFormat::Markdown => ("md", render_markdown(&table.summary_grid()), render_markdown(&table.error_grid())),
        ReportFormat::Csv => ("csv", render_csv(&table.summary_grid())?, render_csv(&table.error_grid())?),
    };
    let mut written = Vec::new();
    for (stem, body) in [("summary", summary), ("errors", errors)] {
        let path = dir.join(format!("{stem}.{ext}"));
        fs::write(&path, body).map_err(|source| ReportError::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}
