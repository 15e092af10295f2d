use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;

use crate::history::{Event, EventKind, History, Membership, ObjectId, TxnId, TxnStatus};

/// Status-labelled kind of a conflict between two transactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PopKind {
    Wcr,
    Wcw,
    Rcw,
    Ww,
    Wr,
    Rw,
    Wra,
    Wwc,
    Wwa,
}

impl PopKind {
    pub const ALL: [PopKind; 9] = [
        PopKind::Wcr,
        PopKind::Wcw,
        PopKind::Rcw,
        PopKind::Ww,
        PopKind::Wr,
        PopKind::Rw,
        PopKind::Wra,
        PopKind::Wwc,
        PopKind::Wwa,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PopKind::Wcr => "WCR",
            PopKind::Wcw => "WCW",
            PopKind::Rcw => "RCW",
            PopKind::Ww => "WW",
            PopKind::Wr => "WR",
            PopKind::Rw => "RW",
            PopKind::Wra => "WRA",
            PopKind::Wwc => "WWC",
            PopKind::Wwa => "WWA",
        }
    }

    /// Kinds that form a cycle on their own.
    pub fn is_self_cycle(self) -> bool {
        matches!(self, PopKind::Wra | PopKind::Wwc | PopKind::Wwa)
    }

    /// How the kind behaves inside a cycle of two or more edges.
    pub fn as_multi_edge(self) -> PopKind {
        match self {
            PopKind::Wra => PopKind::Wr,
            PopKind::Wwc | PopKind::Wwa => PopKind::Ww,
            k => k,
        }
    }

    pub fn is_committed(self) -> bool {
        matches!(self, PopKind::Wcr | PopKind::Wcw | PopKind::Rcw)
    }

    pub fn is_wr_family(self) -> bool {
        matches!(self, PopKind::Wr | PopKind::Wra)
    }

    pub fn is_ww_family(self) -> bool {
        matches!(self, PopKind::Ww | PopKind::Wwc | PopKind::Wwa)
    }
}

impl fmt::Display for PopKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredicateClass {
    Entity,
    Predicate,
}

impl fmt::Display for PredicateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredicateClass::Entity => "entity",
            PredicateClass::Predicate => "predicate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PopEdge {
    pub from: TxnId,
    pub to: TxnId,
    pub object: ObjectId,
    pub kind: PopKind,
    pub predicate_class: PredicateClass,
    /// Event indices of the two conflicting operations.
    pub positions: (usize, usize),
}

impl fmt::Display for PopEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[{}] {}->{} @({},{})",
            self.kind, self.object, self.from.0, self.to.0, self.positions.0, self.positions.1
        )
    }
}

/// Operation shape of a conflict, before status labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Shape {
    Ww,
    Wr,
    Rw,
}

/// Where a transaction's terminal sits, counted in operations before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Term {
    Active,
    Commit(u32),
    Abort(u32),
}

/// Labels a conflict whose second operation is op number `q`.
/// `None` means the source aborted before `q` and the pair carries no edge.
#[inline]
pub(crate) fn label(shape: Shape, src: Term, q: u32) -> Option<PopKind> {
    Some(match (src, shape) {
        (Term::Abort(g), _) if g <= q => return None,
        (Term::Commit(g), Shape::Ww) if g <= q => PopKind::Wcw,
        (Term::Commit(g), Shape::Wr) if g <= q => PopKind::Wcr,
        (Term::Commit(g), Shape::Rw) if g <= q => PopKind::Rcw,
        (_, Shape::Rw) => PopKind::Rw,
        (Term::Abort(_), Shape::Wr) => PopKind::Wra,
        (_, Shape::Wr) => PopKind::Wr,
        (Term::Abort(_), Shape::Ww) => PopKind::Wwa,
        (Term::Commit(_), Shape::Ww) => PopKind::Wwc,
        (Term::Active, Shape::Ww) => PopKind::Ww,
    })
}

/// Entity or predicate relationship between two conflicting operations, if any.
/// Operations without a predicate behave as members of it.
pub fn classify_edge_predicate(p: &Event, q: &Event) -> Option<PredicateClass> {
    predicate_class(p.kind, p.membership(), q.kind, q.membership())
}

fn predicate_class(p: EventKind, pm: Membership, q: EventKind, qm: Membership) -> Option<PredicateClass> {
    use Membership::*;
    let norm = |m| if m == Unspecified { In } else { m };
    if p.is_write() && q.is_write() {
        return Some(PredicateClass::Entity);
    }
    match (p.is_write(), norm(pm), norm(qm)) {
        (_, In, In) => Some(PredicateClass::Entity),
        (false, NotIn, NotIn) => None,
        (false, _, _) => Some(PredicateClass::Predicate),
        (true, NotIn, NotIn) => Some(PredicateClass::Predicate),
        (true, _, _) => None,
    }
}

/// A read or write reduced to dense indices.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OpView {
    pub txn: u32,
    pub write: bool,
    pub obj: u32,
    pub kind: EventKind,
    pub membership: Membership,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RawPair {
    pub src: u32,
    pub dst: u32,
    pub obj: u32,
    pub shape: Shape,
    pub p: u32,
    pub q: u32,
    pub class: PredicateClass,
}

fn make_pair(ops: &[OpView], p: usize, q: usize, shape: Shape) -> Option<RawPair> {
    let (a, b) = (ops[p], ops[q]);
    let class = predicate_class(a.kind, a.membership, b.kind, b.membership)?;
    Some(RawPair {
        src: a.txn,
        dst: b.txn,
        obj: a.obj,
        shape,
        p: p as u32,
        q: q as u32,
        class,
    })
}

/// Conflicts between adjacent versions: consecutive writes, a write and its
/// readers, and readers of a version with the write that replaces it.
pub(crate) fn adjacency_pairs(ops: &[OpView], n_objs: usize) -> Vec<RawPair> {
    let mut last_write: Vec<Option<usize>> = vec![None; n_objs];
    let mut readers: Vec<Vec<usize>> = vec![Vec::new(); n_objs];
    let mut out = Vec::new();
    for (i, op) in ops.iter().enumerate() {
        let o = op.obj as usize;
        if op.write {
            if let Some(w) = last_write[o] {
                if ops[w].txn != op.txn {
                    out.extend(make_pair(ops, w, i, Shape::Ww));
                }
            }
            for &r in &readers[o] {
                if ops[r].txn != op.txn {
                    out.extend(make_pair(ops, r, i, Shape::Rw));
                }
            }
            readers[o].clear();
            last_write[o] = Some(i);
        } else {
            if let Some(w) = last_write[o] {
                if ops[w].txn != op.txn {
                    out.extend(make_pair(ops, w, i, Shape::Wr));
                }
            }
            readers[o].push(i);
        }
    }
    out
}

/// Every ordered conflicting pair between different transactions.
pub(crate) fn all_pairs(ops: &[OpView]) -> Vec<RawPair> {
    let mut out = Vec::new();
    for q in 0..ops.len() {
        for p in 0..q {
            let (a, b) = (ops[p], ops[q]);
            if a.obj != b.obj || a.txn == b.txn || !(a.write || b.write) {
                continue;
            }
            let shape = match (a.write, b.write) {
                (true, true) => Shape::Ww,
                (true, false) => Shape::Wr,
                _ => Shape::Rw,
            };
            out.extend(make_pair(ops, p, q, shape));
        }
    }
    out
}

/// A history flattened to dense transaction and object indices with
/// terminals expressed in operation coordinates.
#[derive(Debug, Clone)]
pub(crate) struct Flat {
    pub txns: Vec<TxnId>,
    pub objs: Vec<ObjectId>,
    pub ops: Vec<OpView>,
    /// Event index of each operation.
    pub op_event: Vec<usize>,
    pub terms: Vec<Term>,
    /// Event index of each transaction's terminal.
    pub term_event: Vec<Option<usize>>,
}

impl Flat {
    pub fn new(h: &History) -> Flat {
        let txns: Vec<TxnId> = h.txns().collect();
        let objs = h.objects();
        let tix = |t: TxnId| txns.binary_search(&t).expect("known txn") as u32;
        let mut ops = Vec::new();
        let mut op_event = Vec::new();
        let mut terms = vec![Term::Active; txns.len()];
        let mut term_event = vec![None; txns.len()];
        for (i, e) in h.events().iter().enumerate() {
            let t = tix(e.txn);
            match &e.object {
                Some(o) => {
                    ops.push(OpView {
                        txn: t,
                        write: e.kind.is_write(),
                        obj: objs.binary_search(o).expect("known object") as u32,
                        kind: e.kind,
                        membership: e.membership(),
                    });
                    op_event.push(i);
                }
                None => {
                    let g = ops.len() as u32;
                    terms[t as usize] = match h.status(e.txn) {
                        Some(TxnStatus::Committed) => Term::Commit(g),
                        _ => Term::Abort(g),
                    };
                    term_event[t as usize] = Some(i);
                }
            }
        }
        Flat {
            txns,
            objs,
            ops,
            op_event,
            terms,
            term_event,
        }
    }

    pub fn to_edge(&self, r: &crate::cycle::RawEdge) -> PopEdge {
        PopEdge {
            from: self.txns[r.from as usize],
            to: self.txns[r.to as usize],
            object: self.objs[r.obj as usize].clone(),
            kind: r.kind,
            predicate_class: r.class,
            positions: (self.op_event[r.p as usize], self.op_event[r.q as usize]),
        }
    }
}

pub(crate) fn label_pairs(pairs: &[RawPair], terms: &[Term]) -> Vec<crate::cycle::RawEdge> {
    pairs
        .iter()
        .filter_map(|p| {
            label(p.shape, terms[p.src as usize], p.q).map(|kind| crate::cycle::RawEdge {
                from: p.src,
                to: p.dst,
                obj: p.obj,
                kind,
                p: p.p,
                q: p.q,
                class: p.class,
            })
        })
        .collect()
}

/// All status-labelled conflicts between adjacent versions, in order of their second operation.
pub fn extract_pops(h: &History) -> Vec<PopEdge> {
    let flat = Flat::new(h);
    let pairs = adjacency_pairs(&flat.ops, flat.objs.len());
    let mut edges: Vec<PopEdge> = label_pairs(&pairs, &flat.terms)
        .iter()
        .map(|r| flat.to_edge(r))
        .collect();
    edges.sort_by_key(|e| (e.positions.1, e.positions.0));
    edges
}

/// Directed multigraph over transactions.
#[derive(Debug, Clone)]
pub struct ConflictGraph {
    pub vertices: BTreeSet<TxnId>,
    pub edges: Vec<PopEdge>,
}

impl ConflictGraph {
    pub fn entity_edges(&self) -> impl Iterator<Item = &PopEdge> {
        self.edges.iter().filter(|e| e.predicate_class == PredicateClass::Entity)
    }

    pub fn predicate_edges(&self) -> impl Iterator<Item = &PopEdge> {
        self.edges.iter().filter(|e| e.predicate_class == PredicateClass::Predicate)
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph conflicts {\n");
        for v in &self.vertices {
            let _ = writeln!(s, "  t{0} [label=\"T{0}\"];", v.0);
        }
        for e in &self.edges {
            let style = match e.predicate_class {
                PredicateClass::Entity => "solid",
                PredicateClass::Predicate => "dashed",
            };
            let _ = writeln!(
                s,
                "  t{} -> t{} [label=\"{}[{}]\", style={}];",
                e.from.0, e.to.0, e.kind, e.object, style
            );
        }
        s.push_str("}\n");
        s
    }
}

pub fn build_graph(h: &History) -> ConflictGraph {
    ConflictGraph {
        vertices: h.txns().collect(),
        edges: extract_pops(h),
    }
}
