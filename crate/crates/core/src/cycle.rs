//! Cycle search, reduction and naming over compact edges.

use crate::conflict::{PopKind, PredicateClass, Term};
use crate::taxonomy::{self, AnomalyName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) struct RawEdge {
    pub from: u32,
    pub to: u32,
    pub obj: u32,
    pub kind: PopKind,
    pub p: u32,
    pub q: u32,
    pub class: PredicateClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Overflow;

/// Simple cycles of two or more edges, one per choice of parallel edges,
/// each rooted at its smallest vertex. Cycles are edge indices in path order.
pub(crate) fn simple_cycles(
    n: usize,
    edges: &[RawEdge],
    cap: usize,
    out: &mut Vec<Vec<u32>>,
) -> Result<(), Overflow> {
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (i, e) in edges.iter().enumerate() {
        if e.from != e.to {
            adj[e.from as usize].push(i as u32);
        }
    }
    let mut path = Vec::new();
    let mut on_path = vec![false; n];
    for s in 0..n {
        on_path[s] = true;
        dfs(s, s, &adj, edges, &mut on_path, &mut path, cap, out)?;
        on_path[s] = false;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    start: usize,
    v: usize,
    adj: &[Vec<u32>],
    edges: &[RawEdge],
    on_path: &mut [bool],
    path: &mut Vec<u32>,
    cap: usize,
    out: &mut Vec<Vec<u32>>,
) -> Result<(), Overflow> {
    for &ei in &adj[v] {
        let w = edges[ei as usize].to as usize;
        if w == start {
            if out.len() >= cap {
                return Err(Overflow);
            }
            let mut c = path.clone();
            c.push(ei);
            out.push(c);
        } else if w > start && !on_path[w] {
            on_path[w] = true;
            path.push(ei);
            dfs(start, w, adj, edges, on_path, path, cap, out)?;
            path.pop();
            on_path[w] = false;
        }
    }
    Ok(())
}

/// Rotates a cycle (in path order) so that it ends with the edge whose
/// second operation comes last.
pub(crate) fn rotate_to_close(c: &mut [RawEdge]) {
    if let Some((i, _)) = c.iter().enumerate().max_by_key(|(_, e)| e.q) {
        c.rotate_left((i + 1) % c.len());
    }
}

pub(crate) fn distinct_objects(c: &[RawEdge]) -> usize {
    let mut objs: Vec<u32> = c.iter().map(|e| e.obj).collect();
    objs.sort_unstable();
    objs.dedup();
    objs.len()
}

/// A cycle already in reduced shape: each object's edges are consecutive and
/// at most two, and a single-object cycle spans two transactions.
pub(crate) fn is_canonical(c: &[RawEdge]) -> bool {
    let k = c.len();
    if k <= 1 {
        return true;
    }
    let n_obj = distinct_objects(c);
    if n_obj == 1 {
        return k == 2;
    }
    if k > 2 * n_obj {
        return false;
    }
    let boundaries = (0..k).filter(|&i| c[i].obj != c[(i + 1) % k].obj).count();
    if boundaries != n_obj {
        return false;
    }
    c.iter().all(|e| c.iter().filter(|f| f.obj == e.obj).count() <= 2)
}

/// A cycle of two or more edges is void when a member aborted before the
/// closing operation. Self-forming edges keep their own one-edge cycle.
pub(crate) fn is_pruned(c: &[RawEdge], terms: &[Term]) -> bool {
    if c.len() < 2 {
        return false;
    }
    let close = c.iter().map(|e| e.q).max().unwrap_or(0);
    c.iter()
        .any(|e| matches!(terms[e.to as usize], Term::Abort(g) if g <= close))
}

type Preference = (bool, usize, usize, Vec<(u32, u32)>);

/// Shortest canonical cycle over the same transactions and objects, drawn from
/// every pairwise conflict among them. Falls back to the input when none exists.
pub(crate) fn reduce(c: &[RawEdge], all: &[RawEdge]) -> Vec<RawEdge> {
    let mut out: Vec<RawEdge> = c.to_vec();
    if c.len() <= 1 || is_canonical(c) {
        rotate_to_close(&mut out);
        return out;
    }
    let mut txns: Vec<u32> = c.iter().map(|e| e.from).collect();
    txns.sort_unstable();
    txns.dedup();
    let mut objs: Vec<u32> = c.iter().map(|e| e.obj).collect();
    objs.sort_unstable();
    objs.dedup();
    let local = |t: u32| txns.binary_search(&t).ok().map(|i| i as u32);
    let cands: Vec<RawEdge> = all
        .iter()
        .filter(|e| objs.binary_search(&e.obj).is_ok())
        .filter_map(|e| {
            Some(RawEdge {
                from: local(e.from)?,
                to: local(e.to)?,
                ..*e
            })
        })
        .collect();
    let mut cycles = Vec::new();
    // Candidate sets are small; an overflow just keeps what was found.
    let _ = simple_cycles(txns.len(), &cands, 200_000, &mut cycles);
    let original: Vec<(u32, u32, u32)> = c.iter().map(|e| (e.obj, e.p, e.q)).collect();
    let mut best: Option<(Preference, Vec<RawEdge>)> = None;
    for cyc in cycles {
        let mut edges: Vec<RawEdge> = cyc
            .iter()
            .map(|&i| {
                let e = cands[i as usize];
                RawEdge {
                    from: txns[e.from as usize],
                    to: txns[e.to as usize],
                    ..e
                }
            })
            .collect();
        rotate_to_close(&mut edges);
        let extra = edges
            .iter()
            .filter(|e| !original.contains(&(e.obj, e.p, e.q)))
            .count();
        let key = (
            !is_canonical(&edges),
            edges.len(),
            extra,
            edges.iter().map(|e| (e.q, e.p)).collect::<Vec<_>>(),
        );
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, edges));
        }
    }
    match best {
        Some((_, edges)) => edges,
        None => {
            rotate_to_close(&mut out);
            out
        }
    }
}

/// Name of a reduced cycle, `None` when no row fits.
pub(crate) fn name(c: &[RawEdge]) -> Option<AnomalyName> {
    match c {
        [] => None,
        [e] => match e.kind {
            PopKind::Wra => Some(AnomalyName::DirtyRead),
            PopKind::Wwc | PopKind::Wwa => Some(AnomalyName::DirtyWrite),
            _ => None,
        },
        [a, b] => {
            let (e1, e2) = if a.q <= b.q { (a, b) } else { (b, a) };
            taxonomy::two_edge(e1.kind, e2.kind, e1.obj == e2.obj)
        }
        _ => Some(taxonomy::step(taxonomy::definitional_class(
            c.iter().map(|e| e.kind),
        ))),
    }
}
