//! Aggregate anomaly and edge statistics over a history testing set.

use std::fmt;
use std::fmt::Write as _;
use std::ops::AddAssign;

use crate::classify::{detect_anomalies, AnomalyReport, ClassifyError};
use crate::conflict::{extract_pops, PopKind};
use crate::enumerate::{self, EnumError, HistorySpec};
use crate::history::History;
use crate::kernel;
use crate::taxonomy::{AnomalyClass, AnomalyName, AnomalySubclass};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error(transparent)]
    Enumerate(#[from] EnumError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// What a cyclic history is counted as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Named(AnomalyName),
    Unclassified(AnomalyClass),
}

impl Label {
    pub fn class(self) -> AnomalyClass {
        match self {
            Label::Named(n) => n.class(),
            Label::Unclassified(c) => c,
        }
    }

    pub fn of(report: &AnomalyReport) -> Label {
        report.name.map_or(Label::Unclassified(report.class), Label::Named)
    }

    fn slot(self) -> usize {
        match self {
            Label::Named(n) => n as usize,
            Label::Unclassified(c) => AnomalyName::ALL.len() + c as usize,
        }
    }

    fn from_slot(i: usize) -> Label {
        match AnomalyName::ALL.get(i) {
            Some(&n) => Label::Named(n),
            None => Label::Unclassified(AnomalyClass::ALL[i - AnomalyName::ALL.len()]),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Named(n) => f.write_str(n.title()),
            Label::Unclassified(_) => f.write_str("Unclassified"),
        }
    }
}

const LABELS: usize = AnomalyName::ALL.len() + AnomalyClass::ALL.len();

/// Order used to pick one label when a history holds several anomalies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Priority {
    rank: [u8; LABELS],
}

/// Classes RAT, WAT, IAT in turn; table rows within a class, unclassified last.
fn default_order() -> Vec<Label> {
    let mut order: Vec<Label> = Vec::with_capacity(LABELS);
    for class in AnomalyClass::ALL {
        order.extend(AnomalyName::ALL.iter().filter(|n| n.class() == class).map(|&n| Label::Named(n)));
        order.push(Label::Unclassified(class));
    }
    order
}

impl Default for Priority {
    fn default() -> Self {
        Priority::from_order(&default_order())
    }
}

impl Priority {
    /// Labels listed first win; unlisted labels follow in default order.
    pub fn from_order(order: &[Label]) -> Priority {
        let mut rank = [u8::MAX; LABELS];
        let mut next = 0u8;
        for l in order {
            if rank[l.slot()] == u8::MAX {
                rank[l.slot()] = next;
                next += 1;
            }
        }
        for l in default_order() {
            if rank[l.slot()] == u8::MAX {
                rank[l.slot()] = next;
                next += 1;
            }
        }
        Priority { rank }
    }

    pub fn rank(&self, l: Label) -> u8 {
        self.rank[l.slot()]
    }

    /// Picks the winning report.
    pub fn select<'a>(&self, reports: &'a [AnomalyReport]) -> Option<&'a AnomalyReport> {
        reports.iter().min_by_key(|r| self.rank(Label::of(r)))
    }
}

/// Integer counters; merging shards is plain addition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryStats {
    pub histories: u64,
    pub cyclic: u64,
    labels: [u64; LABELS],
    matrix: [[u64; 3]; 3],
    edges_all: [u64; 9],
    edges_cyclic: [u64; 9],
}

impl Default for HistoryStats {
    fn default() -> Self {
        HistoryStats {
            histories: 0,
            cyclic: 0,
            labels: [0; LABELS],
            matrix: [[0; 3]; 3],
            edges_all: [0; 9],
            edges_cyclic: [0; 9],
        }
    }
}

impl AddAssign<&HistoryStats> for HistoryStats {
    fn add_assign(&mut self, o: &HistoryStats) {
        self.histories += o.histories;
        self.cyclic += o.cyclic;
        for (a, b) in self.labels.iter_mut().zip(o.labels) {
            *a += b;
        }
        for (ra, rb) in self.matrix.iter_mut().zip(o.matrix) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
        for (a, b) in self.edges_all.iter_mut().zip(o.edges_all) {
            *a += b;
        }
        for (a, b) in self.edges_cyclic.iter_mut().zip(o.edges_cyclic) {
            *a += b;
        }
    }
}

impl HistoryStats {
    /// Adds `weight` histories with the given edge kinds and selected anomaly.
    pub(crate) fn record(
        &mut self,
        weight: u64,
        edge_counts: &[u64; 9],
        selected: Option<(Label, AnomalySubclass)>,
    ) {
        self.histories += weight;
        for (a, &c) in self.edges_all.iter_mut().zip(edge_counts) {
            *a += weight * c;
        }
        if let Some((label, sub)) = selected {
            self.cyclic += weight;
            self.labels[label.slot()] += weight;
            self.matrix[label.class() as usize][sub as usize] += weight;
            for (a, &c) in self.edges_cyclic.iter_mut().zip(edge_counts) {
                *a += weight * c;
            }
        }
    }

    /// Classifies one history and counts it.
    pub fn observe(&mut self, h: &History, priority: &Priority) -> Result<(), ClassifyError> {
        let mut edges = [0u64; 9];
        for e in extract_pops(h) {
            edges[e.kind as usize] += 1;
        }
        let reports = detect_anomalies(h)?;
        let selected = priority.select(&reports).map(|r| (Label::of(r), r.subclass));
        self.record(1, &edges, selected);
        Ok(())
    }

    pub fn label_count(&self, l: Label) -> u64 {
        self.labels[l.slot()]
    }

    pub fn cell(&self, class: AnomalyClass, sub: AnomalySubclass) -> u64 {
        self.matrix[class as usize][sub as usize]
    }

    pub fn class_total(&self, class: AnomalyClass) -> u64 {
        self.matrix[class as usize].iter().sum()
    }

    pub fn subclass_total(&self, sub: AnomalySubclass) -> u64 {
        self.matrix.iter().map(|r| r[sub as usize]).sum()
    }

    pub fn edge_count(&self, kind: PopKind, scope: Scope) -> u64 {
        match scope {
            Scope::History => self.edges_all[kind as usize],
            Scope::Cycles => self.edges_cyclic[kind as usize],
        }
    }

    /// Labels with a nonzero count, most frequent first, ties by priority.
    pub fn ranked_labels(&self, priority: &Priority) -> Vec<(Label, u64)> {
        let mut v: Vec<(Label, u64)> = (0..LABELS)
            .map(|i| (Label::from_slot(i), self.labels[i]))
            .filter(|&(_, c)| c > 0)
            .collect();
        v.sort_by_key(|&(l, c)| (std::cmp::Reverse(c), priority.rank(l)));
        v
    }
}

/// Statistics by classifying every enumerated history in `range`.
pub fn stats_exhaustive(
    spec: HistorySpec,
    range: std::ops::Range<u64>,
    priority: &Priority,
) -> Result<HistoryStats, ClassifyError> {
    let mut s = HistoryStats::default();
    for h in enumerate::enumerate_range(spec, range) {
        s.observe(&h, priority)?;
    }
    Ok(s)
}

/// Statistics over the whole set. Work is split across `shards` threads by
/// operation sequence; shards are summed, so the result does not depend on
/// the shard count.
pub fn stats(spec: HistorySpec, priority: &Priority, shards: usize) -> HistoryStats {
    let shards = shards.max(1);
    if shards == 1 {
        return kernel::run(spec, priority, 0, 1);
    }
    let parts: Vec<HistoryStats> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..shards)
            .map(|i| scope.spawn(move || kernel::run(spec, priority, i, shards)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("shard panicked")).collect()
    });
    let mut total = HistoryStats::default();
    for p in &parts {
        total += p;
    }
    total
}

/// `count * 100 / total` rendered with two decimals, rounded half up.
pub fn percent(count: u64, total: u64) -> String {
    if total == 0 {
        return "0.00".to_string();
    }
    let hundredths = (count as u128 * 20_000 + total as u128) / (2 * total as u128);
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

pub fn ratio(count: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 * 100.0 / total as f64
    }
}

#[derive(Debug, Clone)]
pub struct AnomalyRow {
    pub name: String,
    pub class: String,
    pub subclass: String,
    pub count: u64,
    pub percent: String,
}

/// Anomaly shares among cyclic histories.
#[derive(Debug, Clone)]
pub struct AnomalyDistribution {
    pub spec: HistorySpec,
    pub histories: u64,
    pub cyclic: u64,
    pub priority: Priority,
    /// Per label, then the class by subclass matrix with `*` marginals.
    pub rows: Vec<AnomalyRow>,
}

pub fn anomaly_distribution(spec: HistorySpec, s: &HistoryStats, priority: &Priority) -> AnomalyDistribution {
    let pct = |c| percent(c, s.cyclic);
    let mut rows: Vec<AnomalyRow> = s
        .ranked_labels(priority)
        .into_iter()
        .map(|(l, c)| AnomalyRow {
            name: l.to_string(),
            class: l.class().to_string(),
            subclass: match l {
                Label::Named(n) => n.subclass().to_string(),
                Label::Unclassified(_) => "*".to_string(),
            },
            count: c,
            percent: pct(c),
        })
        .collect();
    let star = |class: String, subclass: String, count: u64| AnomalyRow {
        name: "*".to_string(),
        class,
        subclass,
        count,
        percent: pct(count),
    };
    for class in AnomalyClass::ALL {
        for sub in AnomalySubclass::ALL {
            rows.push(star(class.to_string(), sub.to_string(), s.cell(class, sub)));
        }
        rows.push(star(class.to_string(), "*".to_string(), s.class_total(class)));
    }
    for sub in AnomalySubclass::ALL {
        rows.push(star("*".to_string(), sub.to_string(), s.subclass_total(sub)));
    }
    rows.push(star("*".to_string(), "*".to_string(), s.cyclic));
    AnomalyDistribution {
        spec,
        histories: s.histories,
        cyclic: s.cyclic,
        priority: priority.clone(),
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    History,
    Cycles,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::History => "history",
            Scope::Cycles => "cycles",
        })
    }
}

/// Column labels used in edge tables, in table order.
pub const EDGE_COLUMNS: [(&str, PopKind); 9] = [
    ("RW", PopKind::Rw),
    ("WR", PopKind::Wr),
    ("WW", PopKind::Ww),
    ("WA", PopKind::Wwa),
    ("RA", PopKind::Wra),
    ("WC", PopKind::Wwc),
    ("WCR", PopKind::Wcr),
    ("WCW", PopKind::Wcw),
    ("RCW", PopKind::Rcw),
];

#[derive(Debug, Clone)]
pub struct EdgeRow {
    pub edge: &'static str,
    pub scope: String,
    pub count: u64,
    pub percent: String,
}

/// Edge-kind shares over all histories and over cyclic ones. The `-folded`
/// scopes count RCW as RW and have no RCW row.
#[derive(Debug, Clone)]
pub struct EdgeDistribution {
    pub spec: HistorySpec,
    pub rows: Vec<EdgeRow>,
}

pub fn edge_distribution(spec: HistorySpec, s: &HistoryStats) -> EdgeDistribution {
    let mut rows = Vec::new();
    for scope in [Scope::History, Scope::Cycles] {
        let count = |k| s.edge_count(k, scope);
        let total: u64 = PopKind::ALL.iter().map(|&k| count(k)).sum();
        for (edge, kind) in EDGE_COLUMNS {
            rows.push(EdgeRow {
                edge,
                scope: scope.to_string(),
                count: count(kind),
                percent: percent(count(kind), total),
            });
        }
        for (edge, kind) in &EDGE_COLUMNS[..8] {
            let c = count(*kind) + if *kind == PopKind::Rw { count(PopKind::Rcw) } else { 0 };
            rows.push(EdgeRow {
                edge,
                scope: format!("{scope}-folded"),
                count: c,
                percent: percent(c, total),
            });
        }
    }
    EdgeDistribution { spec, rows }
}

impl AnomalyDistribution {
    pub fn to_csv(&self) -> Result<String, StatsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["name", "class", "subclass", "count", "percent"])?;
        for r in &self.rows {
            w.write_record([&r.name, &r.class, &r.subclass, &r.count.to_string(), &r.percent])?;
        }
        Ok(csv_string(w))
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "{}: {} histories, {} cyclic\n\n| name | class | subclass | count | percent |\n|---|---|---|---:|---:|\n",
            self.spec, self.histories, self.cyclic
        );
        for r in &self.rows {
            let _ = writeln!(out, "| {} | {} | {} | {} | {}% |", r.name, r.class, r.subclass, r.count, r.percent);
        }
        out
    }
}

impl EdgeDistribution {
    pub fn to_csv(&self) -> Result<String, StatsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["edge", "scope", "count", "percent"])?;
        for r in &self.rows {
            w.write_record([r.edge, &r.scope, &r.count.to_string(), &r.percent])?;
        }
        Ok(csv_string(w))
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("{}\n\n| edge | scope | count | percent |\n|---|---|---:|---:|\n", self.spec);
        for r in &self.rows {
            let _ = writeln!(out, "| {} | {} | {} | {}% |", r.edge, r.scope, r.count, r.percent);
        }
        out
    }
}

pub(crate) fn csv_string(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory writer");
    String::from_utf8(bytes).expect("csv output is utf-8")
}
