//! Transaction-history anomalies as cycles in a status-aware conflict graph.

pub mod classify;
pub mod conflict;
mod cycle;
pub mod enumerate;
pub mod history;
mod kernel;
pub mod protocols;
pub mod stats;
pub mod taxonomy;

pub use classify::{
    anomaly_cycles, check_isolation, classify_cycle, detect_anomalies, earliest_anomaly, find_cycles, has_anomaly, is_serializable,
    reduce_cycle, AnomalyReport, ClassifyError, Cycle, IsolationLevel,
};
pub use conflict::{build_graph, extract_pops, ConflictGraph, PopEdge, PopKind, PredicateClass};
pub use enumerate::{count, enumerate, partition, EnumerationCursor, HistorySpec, TerminalMode};
pub use history::{format_history, parse_history, version_annotate, Event, EventKind, History, HistoryError, ObjectId, TxnId, TxnStatus};
pub use protocols::{
    concurrency_degree, rollback_stats, rollback_table, serializability_audit, simulate, simulate_weakened_si, AbortReason,
    ProtocolDecision, ProtocolId, RollbackStats, RollbackTable,
};
pub use stats::{anomaly_distribution, edge_distribution, stats, AnomalyDistribution, EdgeDistribution, HistoryStats, Label, Priority};
pub use taxonomy::{AnomalyClass, AnomalyName, AnomalySubclass};
