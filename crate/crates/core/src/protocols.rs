//! Concurrency-control protocols replayed over static histories.
//!
//! A history fixes which version every read sees: the latest live write. When
//! a protocol would block an operation or show it a different version, the
//! replay cannot follow the script, so the transaction is aborted instead.
//! Only wait-die really waits; its blocked operations run when the lock
//! holder finishes. Uncommitted versions are exclusive under every protocol.
//! Transactions still active when the history ends commit at the end, in
//! order of their last event.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use num_rational::Ratio;

use crate::classify::{anomaly_cycles, has_anomaly};
use crate::enumerate::{self, HistorySpec};
use crate::history::{Event, EventKind, History, HistoryError, ObjectId, TxnId, TxnStatus};
use crate::stats::{csv_string, percent, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolId {
    NoWait2PL,
    WaitDie2PL,
    TO,
    MVTO,
    OCC,
    MaaT,
    SSI,
    WSI,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 8] = [
        ProtocolId::OCC,
        ProtocolId::MaaT,
        ProtocolId::MVTO,
        ProtocolId::TO,
        ProtocolId::SSI,
        ProtocolId::NoWait2PL,
        ProtocolId::WaitDie2PL,
        ProtocolId::WSI,
    ];

    /// Default rollback table columns, in order.
    pub const TABLE: [ProtocolId; 6] = [
        ProtocolId::OCC,
        ProtocolId::MaaT,
        ProtocolId::MVTO,
        ProtocolId::TO,
        ProtocolId::SSI,
        ProtocolId::NoWait2PL,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolId::NoWait2PL => "NoWait2PL",
            ProtocolId::WaitDie2PL => "WaitDie2PL",
            ProtocolId::TO => "TO",
            ProtocolId::MVTO => "MVTO",
            ProtocolId::OCC => "OCC",
            ProtocolId::MaaT => "MaaT",
            ProtocolId::SSI => "SSI",
            ProtocolId::WSI => "WSI",
        }
    }

    /// Short column name.
    pub fn column(self) -> &'static str {
        match self {
            ProtocolId::NoWait2PL => "NoWait",
            ProtocolId::WaitDie2PL => "WaitDie",
            p => p.name(),
        }
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown protocol `{0}`; expected one of: {list}", list = ProtocolId::ALL.map(|p| p.name()).join(", "))]
pub struct UnknownProtocol(pub String);

impl FromStr for ProtocolId {
    type Err = UnknownProtocol;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = |x: &str| x.to_ascii_lowercase().replace(['_', '-', ' '], "");
        let want = norm(s);
        ProtocolId::ALL
            .into_iter()
            .find(|p| norm(p.name()) == want || norm(p.column()) == want)
            .ok_or_else(|| UnknownProtocol(s.to_string()))
    }
}

/// Parses `a,b,c` or `all`.
pub fn parse_protocol_list(s: &str) -> Result<Vec<ProtocolId>, UnknownProtocol> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(ProtocolId::ALL.to_vec());
    }
    s.split(',').map(|p| p.trim().parse()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbortReason {
    ReadLockConflict,
    WriteLockConflict,
    Die,
    TimestampRead,
    TimestampWrite,
    DirtyOverwrite,
    VersionMismatch,
    CommitDependency,
    CascadingAbort,
    Validation,
    EmptyInterval,
    FirstCommitterWins,
    ConsecutiveRw,
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbortReason::ReadLockConflict => "read-lock conflict",
            AbortReason::WriteLockConflict => "write-lock conflict",
            AbortReason::Die => "younger requester dies",
            AbortReason::TimestampRead => "read too late",
            AbortReason::TimestampWrite => "write too late",
            AbortReason::DirtyOverwrite => "overwrites uncommitted version",
            AbortReason::VersionMismatch => "would read another version",
            AbortReason::CommitDependency => "commits before its writer",
            AbortReason::CascadingAbort => "read from aborted writer",
            AbortReason::Validation => "read set validation",
            AbortReason::EmptyInterval => "empty timestamp interval",
            AbortReason::FirstCommitterWins => "first committer wins",
            AbortReason::ConsecutiveRw => "two consecutive RW",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolDecision {
    /// Transactions the protocol aborted before the history would have.
    pub aborted_txns: BTreeMap<TxnId, AbortReason>,
    /// Index of the history event being replayed at the first abort; the
    /// history length when it happened at the end.
    pub first_abort_position: Option<usize>,
    /// Events as they ran, with aborts for the victims and commits for
    /// transactions that were still active at the end.
    pub executed: Vec<Event>,
}

impl ProtocolDecision {
    pub fn reasons(&self) -> impl Iterator<Item = (TxnId, AbortReason)> + '_ {
        self.aborted_txns.iter().map(|(&t, &r)| (t, r))
    }

    /// Whether some victim was going to commit or stay active.
    pub fn counts_against(&self, h: &History) -> bool {
        self.aborted_txns.keys().any(|&t| h.status(t) != Some(TxnStatus::Aborted))
    }

    /// The executed schedule restricted to transactions that committed.
    pub fn committed_projection(&self) -> Result<History, HistoryError> {
        let committed: BTreeSet<TxnId> = self
            .executed
            .iter()
            .filter(|e| e.kind == EventKind::Commit)
            .map(|e| e.txn)
            .collect();
        let events = self
            .executed
            .iter()
            .filter(|e| committed.contains(&e.txn))
            .map(|e| Event {
                version: None,
                ..e.clone()
            })
            .collect();
        History::from_events(events)
    }
}

pub fn simulate(p: ProtocolId, h: &History) -> ProtocolDecision {
    Engine::new(Rules::Protocol(p), h).run()
}

/// Snapshot isolation without the consecutive-RW rule. Not serializable.
pub fn simulate_weakened_si(h: &History) -> ProtocolDecision {
    Engine::new(Rules::WeakSi, h).run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rules {
    Protocol(ProtocolId),
    WeakSi,
}

impl Rules {
    fn is(self, p: ProtocolId) -> bool {
        self == Rules::Protocol(p)
    }

    fn locking(self) -> bool {
        self.is(ProtocolId::NoWait2PL) || self.is(ProtocolId::WaitDie2PL)
    }

    fn snapshot(self) -> bool {
        matches!(self, Rules::WeakSi | Rules::Protocol(ProtocolId::SSI | ProtocolId::WSI))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Live,
    Committed,
    Aborted,
}

#[derive(Debug, Clone)]
struct Txn {
    id: TxnId,
    /// Timestamp from the position of the first event, starting at 1.
    ts: u64,
    start: u64,
    end: Option<u64>,
    state: State,
    reads: BTreeSet<usize>,
    writes: BTreeSet<usize>,
    /// Writers whose uncommitted versions this transaction read.
    deps: BTreeSet<usize>,
    last_event: usize,
    // Wait-die: events held back while blocked.
    queue: VecDeque<usize>,
    // MaaT interval and commit timestamp.
    lb: u64,
    ub: u64,
    commit_ts: Option<u64>,
    /// MaaT: live transactions ordered before (`preds`) or after (`succs`) this one.
    preds: BTreeSet<usize>,
    succs: BTreeSet<usize>,
    // SSI flags.
    rw_in: bool,
    rw_out: bool,
}

#[derive(Debug, Clone)]
struct Version {
    /// `None` for the initial version.
    writer: Option<usize>,
    writer_ts: u64,
    committed: Option<u64>,
    readers: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Object {
    versions: Vec<Version>,
    shared: BTreeSet<usize>,
    exclusive: Option<usize>,
    /// Every transaction that read or wrote the object, for timestamp checks.
    readers: Vec<usize>,
    writers: Vec<usize>,
    // MaaT: largest commit timestamps of committed readers and writers.
    rts: Option<u64>,
    wts: Option<u64>,
}

impl Object {
    fn new() -> Object {
        Object {
            versions: vec![Version {
                writer: None,
                writer_ts: 0,
                committed: Some(0),
                readers: Vec::new(),
            }],
            shared: BTreeSet::new(),
            exclusive: None,
            readers: Vec::new(),
            writers: Vec::new(),
            rts: None,
            wts: None,
        }
    }

    fn top(&self) -> usize {
        self.versions.len() - 1
    }
}

enum Step {
    Go,
    Kill(usize, AbortReason),
    Wait,
}

struct Engine<'h> {
    rules: Rules,
    h: &'h History,
    txns: Vec<Txn>,
    tix: BTreeMap<TxnId, usize>,
    objs: Vec<Object>,
    oix: BTreeMap<ObjectId, usize>,
    clock: u64,
    position: usize,
    decision: ProtocolDecision,
}

impl<'h> Engine<'h> {
    fn new(rules: Rules, h: &'h History) -> Engine<'h> {
        let mut txns = Vec::new();
        let mut tix = BTreeMap::new();
        let mut oix = BTreeMap::new();
        for (i, e) in h.events().iter().enumerate() {
            if let std::collections::btree_map::Entry::Vacant(slot) = tix.entry(e.txn) {
                slot.insert(txns.len());
                txns.push(Txn {
                    id: e.txn,
                    ts: i as u64 + 1,
                    start: 0,
                    end: None,
                    state: State::Live,
                    reads: BTreeSet::new(),
                    writes: BTreeSet::new(),
                    deps: BTreeSet::new(),
                    last_event: i,
                    queue: VecDeque::new(),
                    lb: 0,
                    ub: u64::MAX,
                    commit_ts: None,
                    preds: BTreeSet::new(),
                    succs: BTreeSet::new(),
                    rw_in: false,
                    rw_out: false,
                });
            }
            txns[tix[&e.txn]].last_event = i;
            if let Some(o) = &e.object {
                let next = oix.len();
                oix.entry(o.clone()).or_insert(next);
            }
        }
        let objs = (0..oix.len()).map(|_| Object::new()).collect();
        Engine {
            rules,
            h,
            txns,
            tix,
            objs,
            oix,
            clock: 0,
            position: 0,
            decision: ProtocolDecision {
                aborted_txns: BTreeMap::new(),
                first_abort_position: None,
                executed: Vec::new(),
            },
        }
    }

    fn run(mut self) -> ProtocolDecision {
        for i in 0..self.h.len() {
            self.position = i;
            let t = self.tix[&self.h.events()[i].txn];
            if self.txns[t].state != State::Live {
                continue;
            }
            if !self.txns[t].queue.is_empty() {
                self.txns[t].queue.push_back(i);
                continue;
            }
            self.step(t, i);
        }
        self.position = self.h.len();
        loop {
            let mut live: Vec<usize> = (0..self.txns.len())
                .filter(|&t| self.txns[t].state == State::Live && self.txns[t].queue.is_empty())
                .collect();
            if live.is_empty() {
                break;
            }
            live.sort_by_key(|&t| self.txns[t].last_event);
            self.commit(live[0]);
        }
        // Anything still queued waits on nobody now; wait-die cannot deadlock.
        debug_assert!(self.txns.iter().all(|t| t.state != State::Live));
        self.decision
    }

    /// Runs history event `i` for transaction `t`; parks it when blocked.
    fn step(&mut self, t: usize, i: usize) {
        let e = &self.h.events()[i];
        let outcome = match e.kind {
            EventKind::Commit => {
                self.commit(t);
                return;
            }
            EventKind::Abort => {
                self.clock += 1;
                self.decision.executed.push(e.clone());
                self.finish(t, State::Aborted);
                return;
            }
            _ => {
                let o = self.oix[e.object.as_ref().expect("operation has an object")];
                if e.kind.is_write() {
                    self.write(t, o)
                } else {
                    self.read(t, o)
                }
            }
        };
        match outcome {
            Step::Go => {
                self.clock += 1;
                self.decision.executed.push(e.clone());
            }
            Step::Kill(v, reason) => self.kill(v, reason),
            Step::Wait => self.txns[t].queue.push_back(i),
        }
    }

    fn kill(&mut self, t: usize, reason: AbortReason) {
        if self.txns[t].state != State::Live {
            return;
        }
        self.decision.aborted_txns.insert(self.txns[t].id, reason);
        self.decision.first_abort_position.get_or_insert(self.position);
        self.clock += 1;
        self.decision
            .executed
            .push(Event::terminal(EventKind::Abort, self.txns[t].id.0));
        self.txns[t].queue.clear();
        self.finish(t, State::Aborted);
    }

    /// Ends a transaction, drops its versions on abort and wakes waiters.
    fn finish(&mut self, t: usize, state: State) {
        self.txns[t].state = state;
        self.txns[t].end = Some(self.clock);
        for obj in &mut self.objs {
            obj.shared.remove(&t);
            if obj.exclusive == Some(t) {
                obj.exclusive = None;
            }
            if state == State::Aborted {
                obj.versions.retain(|v| v.writer != Some(t));
                for v in &mut obj.versions {
                    v.readers.retain(|&r| r != t);
                }
                obj.readers.retain(|&r| r != t);
                obj.writers.retain(|&w| w != t);
            }
        }
        for u in 0..self.txns.len() {
            self.txns[u].preds.remove(&t);
            self.txns[u].succs.remove(&t);
        }
        if state == State::Aborted {
            let dependents: Vec<usize> = (0..self.txns.len())
                .filter(|&u| self.txns[u].state == State::Live && self.txns[u].deps.contains(&t))
                .collect();
            for u in dependents {
                self.kill(u, AbortReason::CascadingAbort);
            }
        } else {
            for u in 0..self.txns.len() {
                self.txns[u].deps.remove(&t);
            }
        }
        self.wake();
    }

    fn wake(&mut self) {
        loop {
            let mut progressed = false;
            for u in 0..self.txns.len() {
                while self.txns[u].state == State::Live {
                    let Some(&i) = self.txns[u].queue.front() else { break };
                    self.txns[u].queue.pop_front();
                    let before = self.txns[u].queue.len();
                    self.step(u, i);
                    if self.txns[u].queue.len() > before {
                        // Blocked again: put it back in front.
                        let j = self.txns[u].queue.pop_back().expect("just queued");
                        self.txns[u].queue.push_front(j);
                        break;
                    }
                    progressed = true;
                }
            }
            if !progressed {
                return;
            }
        }
    }

    fn lock_conflict(&self, t: usize, o: usize, write: bool) -> Option<(Vec<usize>, AbortReason)> {
        let obj = &self.objs[o];
        if let Some(x) = obj.exclusive.filter(|&x| x != t) {
            return Some((vec![x], AbortReason::WriteLockConflict));
        }
        if write {
            let holders: Vec<usize> = obj.shared.iter().copied().filter(|&r| r != t).collect();
            if !holders.is_empty() {
                return Some((holders, AbortReason::ReadLockConflict));
            }
        }
        None
    }

    /// Lock step for the two locking protocols.
    fn lock(&mut self, t: usize, o: usize, write: bool) -> Step {
        if let Some((holders, reason)) = self.lock_conflict(t, o, write) {
            if self.rules.is(ProtocolId::WaitDie2PL) {
                let older = holders.iter().all(|&x| self.txns[t].ts < self.txns[x].ts);
                return if older { Step::Wait } else { Step::Kill(t, AbortReason::Die) };
            }
            return Step::Kill(t, reason);
        }
        if write {
            self.objs[o].exclusive = Some(t);
        } else {
            self.objs[o].shared.insert(t);
        }
        Step::Go
    }

    fn max_ts(&self, list: &[usize], skip: usize) -> u64 {
        list.iter()
            .filter(|&&x| x != skip)
            .map(|&x| self.txns[x].ts)
            .max()
            .unwrap_or(0)
    }

    /// Version a read by `t` would see under the protocol.
    fn visible(&self, t: usize, o: usize) -> usize {
        let obj = &self.objs[o];
        let top = obj.top();
        if obj.versions[top].writer == Some(t) {
            return top;
        }
        let tx = &self.txns[t];
        let fits = |v: &Version| match self.rules {
            Rules::Protocol(ProtocolId::MVTO) => v.writer_ts <= tx.ts,
            Rules::Protocol(ProtocolId::OCC | ProtocolId::MaaT) => v.committed.is_some(),
            r if r.snapshot() => v.committed.is_some_and(|c| c < tx.start) || v.writer == Some(t),
            _ => true,
        };
        if self.rules.is(ProtocolId::MVTO) {
            (0..obj.versions.len())
                .filter(|&i| fits(&obj.versions[i]))
                .max_by_key(|&i| (obj.versions[i].writer_ts, i))
                .unwrap_or(0)
        } else {
            (0..obj.versions.len()).rev().find(|&i| fits(&obj.versions[i])).unwrap_or(0)
        }
    }

    fn touch(&mut self, t: usize) {
        if self.txns[t].start == 0 {
            self.txns[t].start = self.clock + 1;
        }
    }

    fn read(&mut self, t: usize, o: usize) -> Step {
        self.touch(t);
        if self.rules.locking() {
            match self.lock(t, o, false) {
                Step::Go => {}
                s => return s,
            }
        }
        if self.rules.is(ProtocolId::TO) && self.max_ts(&self.objs[o].writers, t) > self.txns[t].ts {
            return Step::Kill(t, AbortReason::TimestampRead);
        }
        let top = self.objs[o].top();
        if self.visible(t, o) != top {
            return Step::Kill(t, AbortReason::VersionMismatch);
        }
        let v = &self.objs[o].versions[top];
        if let Some(w) = v.writer.filter(|&w| w != t && v.committed.is_none()) {
            self.txns[t].deps.insert(w);
        }
        if self.rules.is(ProtocolId::MaaT) {
            if let Some(wts) = self.objs[o].wts {
                self.txns[t].lb = self.txns[t].lb.max(wts + 1);
            }
        }
        self.objs[o].versions[top].readers.push(t);
        self.objs[o].readers.push(t);
        self.txns[t].reads.insert(o);
        Step::Go
    }

    fn write(&mut self, t: usize, o: usize) -> Step {
        self.touch(t);
        let ts = self.txns[t].ts;
        if self.rules.locking() {
            match self.lock(t, o, true) {
                Step::Go => {}
                s => return s,
            }
        }
        match self.rules {
            Rules::Protocol(ProtocolId::TO) => {
                let obj = &self.objs[o];
                if self.max_ts(&obj.readers, t) > ts || self.max_ts(&obj.writers, t) > ts {
                    return Step::Kill(t, AbortReason::TimestampWrite);
                }
            }
            Rules::Protocol(ProtocolId::MVTO) => {
                // A version ordered below a later writer's would break the history's version order.
                let v = self.visible(t, o);
                let below = self.objs[o].versions.iter().any(|x| x.writer != Some(t) && x.writer_ts > ts);
                if below || self.max_ts(&self.objs[o].versions[v].readers, t) > ts {
                    return Step::Kill(t, AbortReason::TimestampWrite);
                }
            }
            r if r.snapshot() && !r.is(ProtocolId::WSI) => {
                let start = self.txns[t].start;
                let newer = self.objs[o]
                    .versions
                    .iter()
                    .any(|v| v.writer != Some(t) && v.committed.is_some_and(|c| c > start));
                if newer {
                    return Step::Kill(t, AbortReason::FirstCommitterWins);
                }
            }
            _ => {}
        }
        let top = &self.objs[o].versions[self.objs[o].top()];
        if top.committed.is_none() && top.writer != Some(t) {
            return Step::Kill(t, AbortReason::DirtyOverwrite);
        }
        if self.rules.is(ProtocolId::MaaT) {
            let obj = &self.objs[o];
            let floor = [obj.rts, obj.wts].into_iter().flatten().max();
            if let Some(f) = floor {
                self.txns[t].lb = self.txns[t].lb.max(f + 1);
            }
            let readers: Vec<usize> = obj
                .readers
                .iter()
                .copied()
                .filter(|&r| r != t && self.txns[r].state == State::Live)
                .collect();
            for r in readers {
                self.txns[r].succs.insert(t);
                self.txns[t].preds.insert(r);
            }
        }
        if self.rules == Rules::Protocol(ProtocolId::SSI) {
            if let Some(victim) = self.antidependencies(t, o) {
                return Step::Kill(victim, AbortReason::ConsecutiveRw);
            }
        }
        let obj = &mut self.objs[o];
        if obj.versions.last().is_some_and(|v| v.writer == Some(t)) {
            // Rewrite of its own version.
        } else {
            obj.versions.push(Version {
                writer: Some(t),
                writer_ts: ts,
                committed: None,
                readers: Vec::new(),
            });
        }
        obj.writers.push(t);
        self.txns[t].writes.insert(o);
        Step::Go
    }

    /// Records RW edges from concurrent readers of `o` into writer `t` and
    /// returns a victim if one of them now has RW edges on both sides.
    fn antidependencies(&mut self, t: usize, o: usize) -> Option<usize> {
        let start = self.txns[t].start;
        let readers: Vec<usize> = self.objs[o]
            .readers
            .iter()
            .copied()
            .filter(|&r| r != t)
            .filter(|&r| self.txns[r].end.is_none_or(|e| e > start))
            .collect();
        for &r in &readers {
            self.txns[r].rw_out = true;
            self.txns[t].rw_in = true;
        }
        if self.txns[t].rw_in && self.txns[t].rw_out {
            return Some(t);
        }
        for &r in &readers {
            if self.txns[r].rw_in && self.txns[r].rw_out {
                return Some(if self.txns[r].state == State::Live { r } else { t });
            }
        }
        None
    }

    fn commit(&mut self, t: usize) {
        let live_dep = self.txns[t]
            .deps
            .iter()
            .any(|&w| self.txns[w].state == State::Live);
        if live_dep {
            return self.kill(t, AbortReason::CommitDependency);
        }
        let start = self.txns[t].start;
        match self.rules {
            Rules::Protocol(ProtocolId::OCC | ProtocolId::WSI) => {
                let clash = self.txns.iter().enumerate().any(|(u, x)| {
                    u != t
                        && x.state == State::Committed
                        && x.end.is_some_and(|e| e > start)
                        && !x.writes.is_disjoint(&self.txns[t].reads)
                });
                if clash {
                    return self.kill(t, AbortReason::Validation);
                }
            }
            Rules::Protocol(ProtocolId::MaaT) => {
                let tx = &self.txns[t];
                if tx.lb >= tx.ub {
                    return self.kill(t, AbortReason::EmptyInterval);
                }
                let ts = tx.lb;
                self.txns[t].commit_ts = Some(ts);
                for u in self.txns[t].preds.clone() {
                    self.txns[u].ub = self.txns[u].ub.min(ts);
                }
                for u in self.txns[t].succs.clone() {
                    self.txns[u].lb = self.txns[u].lb.max(ts + 1);
                }
                for &o in &self.txns[t].reads {
                    let r = &mut self.objs[o].rts;
                    *r = Some(r.map_or(ts, |x| x.max(ts)));
                }
                for &o in &self.txns[t].writes {
                    let w = &mut self.objs[o].wts;
                    *w = Some(w.map_or(ts, |x| x.max(ts)));
                }
            }
            _ => {}
        }
        self.clock += 1;
        let id = self.txns[t].id;
        self.decision.executed.push(Event::terminal(EventKind::Commit, id.0));
        for obj in &mut self.objs {
            for v in &mut obj.versions {
                if v.writer == Some(t) {
                    v.committed = Some(self.clock);
                }
            }
        }
        self.finish(t, State::Committed);
    }
}

/// Every anomaly cycle has a member that the history itself aborts.
pub fn resolved_by_history(h: &History) -> bool {
    anomaly_cycles(h).is_ok_and(|cycles| {
        cycles
            .iter()
            .all(|c| c.txns().iter().any(|&t| h.status(t) == Some(TxnStatus::Aborted)))
    })
}

/// Integer counts behind the rollback rates of one protocol.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RollbackStats {
    /// Histories evaluated.
    pub n: u64,
    /// Histories with an anomaly cycle.
    pub n_true: u64,
    /// Histories where the protocol aborts a transaction that was going to
    /// commit or stay active.
    pub n_alg: u64,
    /// Acyclic histories among `n_alg`.
    pub n_false: u64,
    /// Cyclic histories where the protocol aborts nobody.
    pub missed: u64,
    /// Of `missed`, those whose cycles each lose a member to the history's own abort.
    pub missed_resolved: u64,
    /// Histories whose committed projection still has a cycle.
    pub unsound: u64,
    // Transaction granularity.
    pub txns: u64,
    pub victims: u64,
    pub victims_in_cyclic: u64,
}

impl std::ops::AddAssign for RollbackStats {
    fn add_assign(&mut self, o: RollbackStats) {
        self.n += o.n;
        self.n_true += o.n_true;
        self.n_alg += o.n_alg;
        self.n_false += o.n_false;
        self.missed += o.missed;
        self.missed_resolved += o.missed_resolved;
        self.unsound += o.unsound;
        self.txns += o.txns;
        self.victims += o.victims;
        self.victims_in_cyclic += o.victims_in_cyclic;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Granularity {
    #[default]
    History,
    Transaction,
}

impl RollbackStats {
    fn observe(&mut self, h: &History, cyclic: bool, d: &ProtocolDecision) {
        self.n += 1;
        self.txns += h.statuses().len() as u64;
        let counted = d.counts_against(h);
        let victims = d
            .aborted_txns
            .keys()
            .filter(|&&t| h.status(t) != Some(TxnStatus::Aborted))
            .count() as u64;
        self.victims += victims;
        if cyclic {
            self.n_true += 1;
            self.victims_in_cyclic += victims;
            if d.aborted_txns.is_empty() {
                self.missed += 1;
                if resolved_by_history(h) {
                    self.missed_resolved += 1;
                }
            }
        } else if counted {
            self.n_false += 1;
        }
        if counted {
            self.n_alg += 1;
        }
        if d.committed_projection().map_or(true, |p| has_anomaly(&p)) {
            self.unsound += 1;
        }
    }

    /// (TRR, FRR) as exact fractions of the evaluated population.
    pub fn rates(&self, g: Granularity) -> (Ratio<u64>, Ratio<u64>) {
        let frac = |a: u64, b: u64| if b == 0 { Ratio::from_integer(0) } else { Ratio::new(a, b) };
        match g {
            Granularity::History => (frac(self.n_true, self.n), frac(self.n_false, self.n)),
            Granularity::Transaction => (
                frac(self.victims_in_cyclic, self.txns),
                frac(self.victims - self.victims_in_cyclic, self.txns),
            ),
        }
    }

    /// Counts in the chosen unit: (population, true, false).
    pub fn counts(&self, g: Granularity) -> (u64, u64, u64) {
        match g {
            Granularity::History => (self.n, self.n_true, self.n_false),
            Granularity::Transaction => (self.txns, self.victims_in_cyclic, self.victims - self.victims_in_cyclic),
        }
    }

    pub fn r_alg(&self, g: Granularity) -> Ratio<u64> {
        let (t, f) = self.rates(g);
        t + f
    }
}

/// Replays one history under every listed protocol.
pub fn observe_history(h: &History, protocols: &[ProtocolId], out: &mut [RollbackStats]) {
    let cyclic = has_anomaly(h);
    for (p, s) in protocols.iter().zip(out.iter_mut()) {
        s.observe(h, cyclic, &simulate(*p, h));
    }
}

/// Rollback counts for each protocol over the whole set, split over `shards` threads.
pub fn rollback_stats_many(spec: HistorySpec, protocols: &[ProtocolId], shards: usize) -> Vec<RollbackStats> {
    let ranges = enumerate::partition(spec, shards.max(1)).expect("countable spec");
    let parts: Vec<Vec<RollbackStats>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ranges
            .into_iter()
            .map(|r| {
                scope.spawn(move || {
                    let mut out = vec![RollbackStats::default(); protocols.len()];
                    for h in enumerate::enumerate_range(spec, r) {
                        observe_history(&h, protocols, &mut out);
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("shard panicked")).collect()
    });
    let mut total = vec![RollbackStats::default(); protocols.len()];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    total
}

pub fn rollback_stats(spec: HistorySpec, p: ProtocolId) -> RollbackStats {
    rollback_stats_many(spec, &[p], 1)[0]
}

/// Histories whose committed projection under `p` still has an anomaly.
pub fn serializability_audit(p: ProtocolId, spec: HistorySpec) -> Vec<History> {
    audit_with(spec, |h| simulate(p, h))
}

pub fn serializability_audit_weakened_si(spec: HistorySpec) -> Vec<History> {
    audit_with(spec, simulate_weakened_si)
}

fn audit_with(spec: HistorySpec, sim: impl Fn(&History) -> ProtocolDecision) -> Vec<History> {
    enumerate::enumerate(spec)
        .filter(|h| sim(h).committed_projection().map_or(true, |p| has_anomaly(&p)))
        .collect()
}

/// One row of the rollback table.
#[derive(Debug, Clone)]
pub struct RollbackTable {
    pub spec: HistorySpec,
    pub granularity: Granularity,
    pub protocols: Vec<ProtocolId>,
    pub stats: Vec<RollbackStats>,
}

pub fn rollback_table(spec: HistorySpec, protocols: &[ProtocolId], shards: usize) -> RollbackTable {
    RollbackTable {
        spec,
        granularity: Granularity::History,
        protocols: protocols.to_vec(),
        stats: rollback_stats_many(spec, protocols, shards),
    }
}

impl RollbackTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["spec".to_string(), "TRR".to_string()];
        h.extend(self.protocols.iter().map(|p| format!("{}_FRR", p.column())));
        h
    }

    pub fn row(&self) -> Vec<String> {
        let g = self.granularity;
        let (n, t, _) = self.stats.first().map(|s| s.counts(g)).unwrap_or_default();
        let mut r = vec![format!("H({},{},{})", self.spec.m, self.spec.n, self.spec.k), percent(t, n)];
        r.extend(self.stats.iter().map(|s| {
            let (n, _, f) = s.counts(g);
            percent(f, n)
        }));
        r
    }

    /// Raw counts behind the row: population, cyclic, then false rollbacks per protocol.
    pub fn count_row(&self) -> Vec<String> {
        let g = self.granularity;
        let (n, t, _) = self.stats.first().map(|s| s.counts(g)).unwrap_or_default();
        let mut r = vec![n.to_string(), t.to_string()];
        r.extend(self.stats.iter().map(|s| s.counts(g).2.to_string()));
        r
    }

    pub fn to_csv(&self) -> Result<String, StatsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        w.write_record(self.row())?;
        Ok(csv_string(w))
    }

    pub fn to_markdown(&self) -> String {
        let header = self.header();
        let mut out = format!("| {} |\n|{}|\n", header.join(" | "), "---|".repeat(header.len()));
        let _ = writeln!(out, "| {} |", self.row().join(" | "));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConflictSlot {
    Rr,
    Wcr,
    Wcw,
    Rcw,
    Ww,
    Wr,
    Rw,
}

impl ConflictSlot {
    pub const ALL: [ConflictSlot; 7] = [
        ConflictSlot::Rr,
        ConflictSlot::Wcr,
        ConflictSlot::Wcw,
        ConflictSlot::Rcw,
        ConflictSlot::Ww,
        ConflictSlot::Wr,
        ConflictSlot::Rw,
    ];

    /// RCW carries no weight: it is never a concurrent pair.
    pub fn default_weight(self) -> u64 {
        match self {
            ConflictSlot::Rcw => 0,
            _ => 2,
        }
    }
}

/// 2 when the pair runs freely, 1 when one side may proceed, 0 when it blocks or aborts.
pub fn capability(p: ProtocolId, slot: ConflictSlot) -> u64 {
    use ConflictSlot::*;
    use ProtocolId::*;
    match (slot, p) {
        (Rr | Wcr | Wcw | Rcw, _) => 2,
        (Ww | Wr | Rw, NoWait2PL) => 0,
        (Ww | Wr | Rw, WaitDie2PL | TO) => 1,
        (Ww | Rw, MVTO) => 1,
        (Wr, MVTO) => 2,
        (Ww | Rw, OCC) => 1,
        (Wr, OCC) => 0,
        (Ww | Wr, MaaT) => 1,
        (Rw, MaaT) => 2,
        (Ww, SSI) => 0,
        (Wr, SSI) => 1,
        (Rw, SSI) => 2,
        (Ww, WSI) => 2,
        (Wr, WSI) => 1,
        (Rw, WSI) => 0,
    }
}

/// Weighted share of conflict slots a protocol runs without blocking or aborting.
pub fn concurrency_degree(p: ProtocolId, weights: Option<&BTreeMap<ConflictSlot, u64>>) -> Ratio<u64> {
    let w = |s: ConflictSlot| weights.and_then(|m| m.get(&s).copied()).unwrap_or(s.default_weight());
    let total: u64 = ConflictSlot::ALL.iter().map(|&s| 2 * w(s)).sum();
    let got: u64 = ConflictSlot::ALL.iter().map(|&s| capability(p, s) * w(s)).sum();
    if total == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(got, total)
    }
}
