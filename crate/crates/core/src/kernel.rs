//! Weighted evaluation of a history testing set.
//!
//! Each operation sequence is visited once per renaming orbit. Transactions
//! whose terminal can change an edge label get their terminal placed by gap
//! segment; the remaining terminals only change how many histories share the
//! same labels, which a small insertion count settles.

use crate::conflict::{self, label, OpView, RawPair, Term};
use crate::cycle::{self, RawEdge};
use crate::enumerate::{for_each_canonical_sequence, HistorySpec, OpSlot, TerminalMode};
use crate::history::{EventKind, Membership};
use crate::stats::{HistoryStats, Label, Priority};
use crate::taxonomy::{self, AnomalyName, AnomalySubclass};
use crate::conflict::PopKind;

pub(crate) fn run(spec: HistorySpec, priority: &Priority, shard: usize, shards: usize) -> HistoryStats {
    let mut out = HistoryStats::default();
    let mut i = 0usize;
    for_each_canonical_sequence(spec, |ops, weight| {
        if i % shards == shard {
            Sequence::new(spec, ops).evaluate(weight, priority, &mut out);
        }
        i += 1;
    });
    out
}

struct Sequence {
    mode: TerminalMode,
    n: usize,
    len: usize,
    last: Vec<usize>,
    adj: Vec<RawPair>,
    all: Vec<RawPair>,
    /// Cycles of two or more adjacency pairs, ignoring labels.
    cycles: Vec<Vec<u32>>,
    relevant: Vec<usize>,
    /// Other transactions, latest last operation first.
    irrelevant: Vec<usize>,
    seg_start: Vec<usize>,
}

impl Sequence {
    fn new(spec: HistorySpec, ops: &[OpSlot]) -> Sequence {
        let n = spec.n as usize;
        let len = ops.len();
        let views: Vec<OpView> = ops
            .iter()
            .map(|o| OpView {
                txn: o.txn as u32,
                write: o.write,
                obj: o.obj as u32,
                kind: if o.write { EventKind::Write } else { EventKind::Read },
                membership: Membership::Unspecified,
            })
            .collect();
        let adj = conflict::adjacency_pairs(&views, spec.m as usize);
        let all = conflict::all_pairs(&views);
        let mut last = vec![0usize; n];
        for (i, o) in ops.iter().enumerate() {
            last[o.txn as usize] = i;
        }
        let skeleton: Vec<RawEdge> = adj.iter().map(|p| raw(p, PopKind::Rw)).collect();
        let mut cycles = Vec::new();
        cycle::simple_cycles(n, &skeleton, usize::MAX, &mut cycles).expect("uncapped");
        let mut relevant: Vec<usize> = adj.iter().map(|p| p.src as usize).collect();
        relevant.sort_unstable();
        relevant.dedup();
        let mut irrelevant: Vec<usize> = (0..n).filter(|t| relevant.binary_search(t).is_err()).collect();
        irrelevant.sort_by_key(|&t| std::cmp::Reverse(last[t]));
        // Label thresholds sit at q + 1; transaction ranges start at last + 1.
        let mut seg_start: Vec<usize> = all
            .iter()
            .map(|p| p.q as usize + 1)
            .chain(last.iter().map(|&l| l + 1))
            .filter(|&g| g <= len)
            .collect();
        seg_start.sort_unstable();
        seg_start.dedup();
        Sequence {
            mode: spec.mode,
            n,
            len,
            last,
            adj,
            all,
            cycles,
            relevant,
            irrelevant,
            seg_start,
        }
    }

    fn seg_len(&self, s: usize) -> u64 {
        let end = self.seg_start.get(s + 1).copied().unwrap_or(self.len + 1);
        (end - self.seg_start[s]) as u64
    }

    fn evaluate(&self, weight: u64, priority: &Priority, out: &mut HistoryStats) {
        let mut terms = vec![Term::Active; self.n];
        let mut seg_count = vec![0u64; self.seg_start.len()];
        self.place(0, weight, &mut terms, &mut seg_count, priority, out);
    }

    fn place(
        &self,
        i: usize,
        weight: u64,
        terms: &mut Vec<Term>,
        seg_count: &mut Vec<u64>,
        priority: &Priority,
        out: &mut HistoryStats,
    ) {
        let Some(&t) = self.relevant.get(i) else {
            let w = weight * self.rest(seg_count);
            let (edges, selected) = self.leaf(terms, priority);
            out.record(w, &edges, selected);
            return;
        };
        match self.mode {
            TerminalMode::Appended => {
                let g = self.len as u32;
                for term in [Term::Commit(g), Term::Abort(g)] {
                    terms[t] = term;
                    self.place(i + 1, weight, terms, seg_count, priority, out);
                }
            }
            TerminalMode::Interleaved => {
                terms[t] = Term::Active;
                self.place(i + 1, weight, terms, seg_count, priority, out);
                for s in 0..self.seg_start.len() {
                    if self.seg_start[s] <= self.last[t] {
                        continue;
                    }
                    let g = self.seg_start[s] as u32;
                    let ways = self.seg_len(s) + seg_count[s];
                    seg_count[s] += 1;
                    for term in [Term::Commit(g), Term::Abort(g)] {
                        terms[t] = term;
                        self.place(i + 1, weight * ways, terms, seg_count, priority, out);
                    }
                    seg_count[s] -= 1;
                }
            }
        }
        terms[t] = Term::Active;
    }

    /// Histories per placement of the relevant terminals, counting every way
    /// to place the others.
    fn rest(&self, seg_count: &[u64]) -> u64 {
        match self.mode {
            TerminalMode::Appended => {
                let fact: u64 = (1..=self.n as u64).product();
                fact << self.irrelevant.len()
            }
            TerminalMode::Interleaved => {
                let mut dp = vec![0u64; self.irrelevant.len() + 1];
                dp[0] = 1;
                for (k, &t) in self.irrelevant.iter().enumerate() {
                    let range = (self.len - self.last[t]) as u64;
                    let before: u64 = self
                        .seg_start
                        .iter()
                        .zip(seg_count)
                        .filter(|(&s, _)| s > self.last[t])
                        .map(|(_, &c)| c)
                        .sum();
                    for placed in (0..=k).rev() {
                        dp[placed + 1] += dp[placed] * 2 * (range + before + placed as u64);
                    }
                }
                dp.iter().sum()
            }
        }
    }

    fn leaf(&self, terms: &[Term], priority: &Priority) -> ([u64; 9], Option<(Label, AnomalySubclass)>) {
        let mut edges = [0u64; 9];
        let kinds: Vec<Option<PopKind>> = self.adj.iter().map(|p| label(p.shape, terms[p.src as usize], p.q)).collect();
        let mut best: Option<(u8, Label, AnomalySubclass)> = None;
        let mut consider = |l: Label, sub: AnomalySubclass| {
            let r = priority.rank(l);
            if best.is_none_or(|(b, _, _)| r < b) {
                best = Some((r, l, sub));
            }
        };
        for k in kinds.iter().flatten() {
            edges[*k as usize] += 1;
            match k {
                PopKind::Wra => consider(Label::Named(AnomalyName::DirtyRead), AnomalySubclass::Sda),
                PopKind::Wwc | PopKind::Wwa => consider(Label::Named(AnomalyName::DirtyWrite), AnomalySubclass::Sda),
                _ => {}
            }
        }
        let mut all_labelled: Option<Vec<RawEdge>> = None;
        for c in &self.cycles {
            let Some(edges): Option<Vec<RawEdge>> = c
                .iter()
                .map(|&i| kinds[i as usize].map(|k| raw(&self.adj[i as usize], k)))
                .collect()
            else {
                continue;
            };
            if cycle::is_pruned(&edges, terms) {
                continue;
            }
            let all = all_labelled.get_or_insert_with(|| conflict::label_pairs(&self.all, terms));
            let reduced = cycle::reduce(&edges, all);
            let l = match cycle::name(&reduced) {
                Some(n) => Label::Named(n),
                None => Label::Unclassified(taxonomy::definitional_class(reduced.iter().map(|e| e.kind))),
            };
            consider(l, subclass(&reduced));
        }
        (edges, best.map(|(_, l, s)| (l, s)))
    }
}

fn raw(p: &RawPair, kind: PopKind) -> RawEdge {
    RawEdge {
        from: p.src,
        to: p.dst,
        obj: p.obj,
        kind,
        p: p.p,
        q: p.q,
        class: p.class,
    }
}

fn subclass(c: &[RawEdge]) -> AnomalySubclass {
    let mut txns: Vec<u32> = c.iter().flat_map(|e| [e.from, e.to]).collect();
    txns.sort_unstable();
    txns.dedup();
    match (cycle::distinct_objects(c), txns.len()) {
        (1, 2) => AnomalySubclass::Sda,
        (2, 2) => AnomalySubclass::Dda,
        _ => AnomalySubclass::Mda,
    }
}
