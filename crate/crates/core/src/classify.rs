use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::conflict::{self, ConflictGraph, Flat, PopEdge, PopKind, PredicateClass};
use crate::cycle::{self, RawEdge};
use crate::history::{History, ObjectId, TxnId};
use crate::taxonomy::{self, AnomalyClass, AnomalyName, AnomalySubclass};

pub const DEFAULT_CYCLE_CAP: usize = 10_000;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("more than {cap} cycles in one history")]
    CycleOverflow { cap: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cycle {
    pub edges: Vec<PopEdge>,
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn txns(&self) -> BTreeSet<TxnId> {
        self.edges.iter().flat_map(|e| [e.from, e.to]).collect()
    }

    pub fn objects(&self) -> BTreeSet<ObjectId> {
        self.edges.iter().map(|e| e.object.clone()).collect()
    }

    /// `KIND[obj]` per edge, joined by `-`.
    pub fn signature(&self) -> String {
        self.edges
            .iter()
            .map(|e| format!("{}[{}]", e.kind, e.object))
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn subclass(&self) -> AnomalySubclass {
        match (self.objects().len(), self.txns().len()) {
            (1, 2) => AnomalySubclass::Sda,
            (2, 2) => AnomalySubclass::Dda,
            _ => AnomalySubclass::Mda,
        }
    }

    /// Whether consecutive edges chain and the last returns to the first.
    /// A single edge closes only if its kind forms a cycle by itself.
    pub fn is_closed(&self) -> bool {
        match self.edges.as_slice() {
            [] => false,
            [e] => e.kind.is_self_cycle(),
            es => (0..es.len()).all(|i| es[i].to == es[(i + 1) % es.len()].from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnomalyReport {
    /// Reduced cycle.
    pub cycle: Cycle,
    /// `None` when no table row matches.
    pub name: Option<AnomalyName>,
    pub class: AnomalyClass,
    /// Class from edge kinds alone; differs from `class` for a few table rows.
    pub definitional_class: AnomalyClass,
    pub subclass: AnomalySubclass,
    pub predicate_based: bool,
    pub earliest_close_position: usize,
}

impl AnomalyReport {
    pub fn title(&self) -> &'static str {
        self.name.map_or("Unclassified", AnomalyName::title)
    }

    pub fn to_line(&self) -> String {
        format!(
            "{};{};{};{};{}",
            self.title(),
            self.class,
            self.subclass,
            if self.predicate_based { "predicate" } else { "entity" },
            self.cycle.signature()
        )
    }
}

impl fmt::Display for AnomalyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IsolationLevel {
    Nrw,
    Na,
}

#[derive(Debug, thiserror::Error)]
#[error("unknown isolation level `{0}` (expected nrw or na)")]
pub struct UnknownLevel(pub String);

impl fmt::Display for IsolationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IsolationLevel::Nrw => "NRW",
            IsolationLevel::Na => "NA",
        })
    }
}

impl FromStr for IsolationLevel {
    type Err = UnknownLevel;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nrw" => Ok(IsolationLevel::Nrw),
            "na" => Ok(IsolationLevel::Na),
            _ => Err(UnknownLevel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IsolationVerdict {
    pub admissible: bool,
    pub violations: Vec<AnomalyReport>,
}

struct Interner {
    txns: Vec<TxnId>,
    objs: Vec<ObjectId>,
}

impl Interner {
    fn new<'a>(edges: impl Iterator<Item = &'a PopEdge> + Clone) -> Interner {
        let txns: BTreeSet<TxnId> = edges.clone().flat_map(|e| [e.from, e.to]).collect();
        let objs: BTreeSet<ObjectId> = edges.map(|e| e.object.clone()).collect();
        Interner {
            txns: txns.into_iter().collect(),
            objs: objs.into_iter().collect(),
        }
    }

    fn raw(&self, e: &PopEdge) -> RawEdge {
        RawEdge {
            from: self.txns.binary_search(&e.from).unwrap() as u32,
            to: self.txns.binary_search(&e.to).unwrap() as u32,
            obj: self.objs.binary_search(&e.object).unwrap() as u32,
            kind: e.kind,
            p: e.positions.0 as u32,
            q: e.positions.1 as u32,
            class: e.predicate_class,
        }
    }
}

/// All simple cycles plus one single-edge cycle per self-forming edge.
pub fn find_cycles(g: &ConflictGraph) -> Result<Vec<Cycle>, ClassifyError> {
    find_cycles_capped(g, DEFAULT_CYCLE_CAP)
}

pub fn find_cycles_capped(g: &ConflictGraph, cap: usize) -> Result<Vec<Cycle>, ClassifyError> {
    let mut out: Vec<Cycle> = g
        .edges
        .iter()
        .filter(|e| e.kind.is_self_cycle())
        .map(|e| Cycle { edges: vec![e.clone()] })
        .collect();
    if out.len() > cap {
        return Err(ClassifyError::CycleOverflow { cap });
    }
    let intern = Interner::new(g.edges.iter());
    let raw: Vec<RawEdge> = g.edges.iter().map(|e| intern.raw(e)).collect();
    let mut found = Vec::new();
    cycle::simple_cycles(intern.txns.len(), &raw, cap - out.len(), &mut found)
        .map_err(|_| ClassifyError::CycleOverflow { cap })?;
    for c in found {
        let mut edges: Vec<PopEdge> = c.iter().map(|&i| g.edges[i as usize].clone()).collect();
        let close = (0..edges.len()).max_by_key(|&i| edges[i].positions.1).unwrap();
        let len = edges.len();
        edges.rotate_left((close + 1) % len);
        out.push(Cycle { edges });
    }
    Ok(out)
}

/// Canonical form of a cycle over a subset of its transactions and objects.
/// Needs the history because shortcuts may use conflicts that are not between
/// adjacent versions.
pub fn reduce_cycle(c: &Cycle, h: &History) -> Cycle {
    let flat = Flat::new(h);
    let all = conflict::label_pairs(&conflict::all_pairs(&flat.ops), &flat.terms);
    let raw = to_flat_raw(&flat, c);
    let reduced = cycle::reduce(&raw, &all);
    Cycle {
        edges: reduced.iter().map(|r| flat.to_edge(r)).collect(),
    }
}

fn to_flat_raw(flat: &Flat, c: &Cycle) -> Vec<RawEdge> {
    let op_of = |ev: usize| flat.op_event.binary_search(&ev).expect("edge anchors an operation") as u32;
    c.edges
        .iter()
        .map(|e| RawEdge {
            from: flat.txns.binary_search(&e.from).expect("known txn") as u32,
            to: flat.txns.binary_search(&e.to).expect("known txn") as u32,
            obj: flat.objs.binary_search(&e.object).expect("known object") as u32,
            kind: e.kind,
            p: op_of(e.positions.0),
            q: op_of(e.positions.1),
            class: e.predicate_class,
        })
        .collect()
}

/// Names a reduced cycle.
pub fn classify_cycle(c: &Cycle) -> AnomalyReport {
    let intern = Interner::new(c.edges.iter());
    let raw: Vec<RawEdge> = c.edges.iter().map(|e| intern.raw(e)).collect();
    let name = cycle::name(&raw);
    let definitional_class = taxonomy::definitional_class(c.edges.iter().map(|e| e.kind));
    AnomalyReport {
        cycle: c.clone(),
        name,
        class: name.map_or(definitional_class, AnomalyName::class),
        definitional_class,
        subclass: c.subclass(),
        predicate_based: c.edges.iter().any(|e| e.predicate_class == PredicateClass::Predicate),
        earliest_close_position: c.edges.iter().map(|e| e.positions.1).max().unwrap_or(0),
    }
}

/// Every anomaly in the history, ordered by the position where its cycle closes.
pub fn detect_anomalies(h: &History) -> Result<Vec<AnomalyReport>, ClassifyError> {
    detect_capped(h, DEFAULT_CYCLE_CAP)
}

fn raw_anomaly_cycles(flat: &Flat, cap: usize) -> Result<Vec<Vec<RawEdge>>, ClassifyError> {
    let adj = conflict::label_pairs(&conflict::adjacency_pairs(&flat.ops, flat.objs.len()), &flat.terms);
    let mut cycles: Vec<Vec<RawEdge>> = adj
        .iter()
        .filter(|e| e.kind.is_self_cycle())
        .map(|e| vec![*e])
        .collect();
    let mut found = Vec::new();
    cycle::simple_cycles(flat.txns.len(), &adj, cap.saturating_sub(cycles.len()), &mut found)
        .map_err(|_| ClassifyError::CycleOverflow { cap })?;
    cycles.extend(
        found
            .into_iter()
            .map(|c| c.iter().map(|&i| adj[i as usize]).collect::<Vec<_>>())
            .filter(|c| !cycle::is_pruned(c, &flat.terms)),
    );
    Ok(cycles)
}

/// Cycles that count as anomalies, before reduction: every self-forming edge,
/// and every longer cycle none of whose members aborted before it closed.
pub fn anomaly_cycles(h: &History) -> Result<Vec<Cycle>, ClassifyError> {
    let flat = Flat::new(h);
    Ok(raw_anomaly_cycles(&flat, DEFAULT_CYCLE_CAP)?
        .iter()
        .map(|c| {
            let mut c = c.clone();
            cycle::rotate_to_close(&mut c);
            Cycle {
                edges: c.iter().map(|r| flat.to_edge(r)).collect(),
            }
        })
        .collect())
}

pub fn detect_capped(h: &History, cap: usize) -> Result<Vec<AnomalyReport>, ClassifyError> {
    let flat = Flat::new(h);
    let cycles = raw_anomaly_cycles(&flat, cap)?;
    if cycles.is_empty() {
        return Ok(Vec::new());
    }
    let all = conflict::label_pairs(&conflict::all_pairs(&flat.ops), &flat.terms);
    let mut reports: Vec<(usize, Vec<RawEdge>)> = Vec::new();
    for c in &cycles {
        let close = match c.as_slice() {
            [e] => flat.term_event[e.from as usize].unwrap_or(h.len()),
            _ => flat.op_event[c.iter().map(|e| e.q).max().unwrap() as usize],
        };
        let reduced = cycle::reduce(c, &all);
        match reports.iter_mut().find(|(_, r)| *r == reduced) {
            Some(existing) => existing.0 = existing.0.min(close),
            None => reports.push((close, reduced)),
        }
    }
    reports.sort_by_key(|(close, _)| *close);
    Ok(reports
        .into_iter()
        .map(|(close, raw)| {
            let cycle = Cycle {
                edges: raw.iter().map(|r| flat.to_edge(r)).collect(),
            };
            let mut report = classify_cycle(&cycle);
            report.earliest_close_position = close;
            report
        })
        .collect())
}

pub fn earliest_anomaly(h: &History) -> Result<Option<AnomalyReport>, ClassifyError> {
    Ok(detect_anomalies(h)?.into_iter().next())
}

pub fn is_serializable(h: &History) -> Result<bool, ClassifyError> {
    Ok(raw_anomaly_cycles(&Flat::new(h), DEFAULT_CYCLE_CAP)?.is_empty())
}

/// Cheap check: a history that overflows the cycle cap surely has an anomaly.
pub fn has_anomaly(h: &History) -> bool {
    !is_serializable(h).unwrap_or(false)
}

pub fn check_isolation(h: &History, level: IsolationLevel) -> Result<IsolationVerdict, ClassifyError> {
    let violations: Vec<AnomalyReport> = detect_anomalies(h)?
        .into_iter()
        .filter(|r| level == IsolationLevel::Na || r.class != AnomalyClass::Iat)
        .collect();
    Ok(IsolationVerdict {
        admissible: violations.is_empty(),
        violations,
    })
}

/// Edge kinds present in a history, for quick filters.
pub fn edge_kinds(h: &History) -> BTreeSet<PopKind> {
    conflict::extract_pops(h).into_iter().map(|e| e.kind).collect()
}
