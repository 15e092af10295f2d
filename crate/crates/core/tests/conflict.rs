use anomaly_core::conflict::classify_edge_predicate;
use anomaly_core::{build_graph, extract_pops, parse_history, PopKind, PredicateClass, TxnId};
use proptest::prelude::*;

fn kinds(text: &str) -> Vec<(PopKind, u32, u32, String)> {
    extract_pops(&parse_history(text).unwrap())
        .into_iter()
        .map(|e| (e.kind, e.from.0, e.to.0, e.object.to_string()))
        .collect()
}

fn k(kind: PopKind, from: u32, to: u32, obj: &str) -> (PopKind, u32, u32, String) {
    (kind, from, to, obj.to_string())
}

#[test]
fn dirty_read_edge() {
    assert_eq!(kinds("W1[x] R2[x] A1 C2"), vec![k(PopKind::Wra, 1, 2, "x")]);
}

#[test]
fn committed_read_edge() {
    assert_eq!(kinds("W1[x] C1 R2[x] C2"), vec![k(PopKind::Wcr, 1, 2, "x")]);
}

#[test]
fn single_transaction_has_no_edges() {
    assert!(kinds("R1[x] C1").is_empty());
    assert!(kinds("R1[x] W1[x] R1[x] C1").is_empty());
}

#[test]
fn lost_update_committed_edges() {
    assert_eq!(
        kinds("R1[x] W2[x] C2 W1[x]"),
        vec![k(PopKind::Rw, 1, 2, "x"), k(PopKind::Wcw, 2, 1, "x")]
    );
}

#[test]
fn abort_before_target_drops_edge() {
    assert!(kinds("W1[x] A1 R2[x] C2").is_empty());
    assert!(kinds("R1[x] A1 W2[x]").is_empty());
}

#[test]
fn status_variants() {
    assert_eq!(kinds("W1[x] W2[x] A1"), vec![k(PopKind::Wwa, 1, 2, "x")]);
    assert_eq!(kinds("W1[x] W2[x] C1"), vec![k(PopKind::Wwc, 1, 2, "x")]);
    assert_eq!(kinds("W1[x] W2[x]"), vec![k(PopKind::Ww, 1, 2, "x")]);
    assert_eq!(kinds("R1[x] C1 W2[x]"), vec![k(PopKind::Rcw, 1, 2, "x")]);
    assert_eq!(kinds("W1[x] C1 W2[x]"), vec![k(PopKind::Wcw, 1, 2, "x")]);
    assert_eq!(kinds("R1[x] W2[x] A1"), vec![k(PopKind::Rw, 1, 2, "x")]);
}

#[test]
fn only_adjacent_versions() {
    // W1 -> W3 is implied by the chain through W2.
    assert_eq!(
        kinds("W1[x] W2[x] W3[x]"),
        vec![k(PopKind::Ww, 1, 2, "x"), k(PopKind::Ww, 2, 3, "x")]
    );
    // R2 reads version 1, so it conflicts with W1 and the next write only.
    assert_eq!(
        kinds("W1[x] R2[x] W3[x] W1[x]"),
        vec![
            k(PopKind::Wr, 1, 2, "x"),
            k(PopKind::Ww, 1, 3, "x"),
            k(PopKind::Rw, 2, 3, "x"),
            k(PopKind::Ww, 3, 1, "x"),
        ]
    );
}

#[test]
fn read_read_never_conflicts() {
    let g = build_graph(&parse_history("R1[x] R2[x] C1 C2").unwrap());
    assert_eq!(g.vertices.len(), 2);
    assert!(g.edges.is_empty());
}

#[test]
fn empty_graph() {
    let g = build_graph(&parse_history("").unwrap());
    assert!(g.vertices.is_empty() && g.edges.is_empty());
}

#[test]
fn predicate_graph_example() {
    let h = parse_history("W1[x in P] W2[x out P] W2[y in P] W3[y in P] R1[x out P] R1[y in P] C1 C2").unwrap();
    let g = build_graph(&h);
    let ent: Vec<(PopKind, u32, u32, String)> = g
        .entity_edges()
        .map(|e| (e.kind, e.from.0, e.to.0, e.object.to_string()))
        .collect();
    // Both writers commit after the overwrite, which refines WW into WWC.
    assert_eq!(
        ent,
        vec![
            k(PopKind::Wwc, 1, 2, "x"),
            k(PopKind::Wwc, 2, 3, "y"),
            k(PopKind::Wr, 3, 1, "y"),
        ]
    );
    let pred: Vec<_> = g.predicate_edges().collect();
    assert_eq!(pred.len(), 1);
    assert_eq!((pred[0].kind, pred[0].from, pred[0].to), (PopKind::Wr, TxnId(2), TxnId(1)));
    assert!(g.to_dot().contains("t2 -> t1 [label=\"WR[x]\", style=dashed]"));
}

#[test]
fn predicate_cases() {
    let ev = |s: &str| parse_history(s).unwrap().events()[0].clone();
    let c = |a: &str, b: &str| classify_edge_predicate(&ev(a), &ev(b));
    assert_eq!(c("R1[x in P]", "W2[x in P]"), Some(PredicateClass::Entity));
    assert_eq!(c("R1[x in P]", "W2[x out P]"), Some(PredicateClass::Predicate));
    assert_eq!(c("R1[x out P]", "W2[x in P]"), Some(PredicateClass::Predicate));
    assert_eq!(c("R1[x out P]", "W2[x out P]"), None);
    assert_eq!(c("W1[x out P]", "R2[x out P]"), Some(PredicateClass::Predicate));
    assert_eq!(c("W1[x in P]", "R2[x in P]"), Some(PredicateClass::Entity));
    assert_eq!(c("W1[x]", "W2[x out P]"), Some(PredicateClass::Entity));
    assert_eq!(c("W1[x]", "R2[x]"), Some(PredicateClass::Entity));
    assert_eq!(c("R1[x out P]", "W2[x]"), Some(PredicateClass::Predicate));
}

fn arb_history() -> impl Strategy<Value = String> {
    prop::collection::vec((0u8..6, 1u32..4, 0usize..2), 0..12).prop_map(|evs| {
        evs.into_iter()
            .map(|(k, t, o)| {
                let obj = ["x", "y"][o];
                match k {
                    0 | 1 => format!("R{t}[{obj}]"),
                    2 | 3 => format!("W{t}[{obj}]"),
                    4 => format!("C{t}"),
                    _ => format!("A{t}"),
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    })
}

proptest! {
    #[test]
    fn edge_invariants(text in arb_history()) {
        if let Ok(h) = parse_history(&text) {
            let mut seen = std::collections::HashSet::new();
            for e in extract_pops(&h) {
                let (p, q) = e.positions;
                prop_assert!(p < q);
                prop_assert_ne!(e.from, e.to);
                let (a, b) = (&h.events()[p], &h.events()[q]);
                prop_assert_eq!(&a.object, &b.object);
                prop_assert!(a.kind.is_write() || b.kind.is_write());
                if let Some(t) = h.terminal_position(e.from) {
                    let aborted = h.status(e.from) == Some(anomaly_core::TxnStatus::Aborted);
                    prop_assert!(!(aborted && t < q));
                }
                prop_assert!(seen.insert((p, q)));
            }
        }
    }
}
