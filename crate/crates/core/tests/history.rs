use anomaly_core::history::{Membership, VersionTag};
use anomaly_core::{format_history, parse_history, version_annotate, EventKind, HistoryError, TxnId, TxnStatus};
use proptest::prelude::*;

fn versions(text: &str) -> Vec<Option<VersionTag>> {
    parse_history(text).unwrap().events().iter().map(|e| e.version).collect()
}

#[test]
fn parses_dirty_read() {
    let h = parse_history("W1[x] R2[x] A1 C2").unwrap();
    assert_eq!(h.len(), 4);
    assert_eq!(h.status(TxnId(1)), Some(TxnStatus::Aborted));
    assert_eq!(h.status(TxnId(2)), Some(TxnStatus::Committed));
}

#[test]
fn read_versions_follow_writes() {
    let v = versions("R1[x] W2[x] C2 R1[x] C1");
    assert_eq!(v[0], Some(VersionTag::Visible(0)));
    assert_eq!(v[3], Some(VersionTag::Visible(1)));
}

#[test]
fn write_versions_count_up() {
    assert_eq!(
        versions("W1[x] W2[x]"),
        vec![Some(VersionTag::Visible(1)), Some(VersionTag::Visible(2))]
    );
    assert_eq!(versions("R1[x]"), vec![Some(VersionTag::Visible(0))]);
}

#[test]
fn aborted_writes_still_number() {
    let v = versions("W1[x] A1 W2[x] R3[x]");
    assert_eq!(v[2], Some(VersionTag::Visible(2)));
    assert_eq!(v[3], Some(VersionTag::Visible(2)));
}

#[test]
fn insert_and_delete() {
    let v = versions("I1[z] R2[z] W2[z] D1[z]");
    assert_eq!(v[0], Some(VersionTag::Visible(0)));
    assert_eq!(v[1], Some(VersionTag::Visible(0)));
    assert_eq!(v[2], Some(VersionTag::Visible(1)));
    assert_eq!(v[3], Some(VersionTag::Dead));
}

#[test]
fn semantic_errors() {
    let err = |t: &str| match parse_history(t) {
        Err(HistoryError::Semantic { message, .. }) => message,
        other => panic!("{t}: {other:?}"),
    };
    assert_eq!(err("C1 R1[x]"), "event after terminal");
    assert_eq!(err("C1 A1"), "duplicate terminal");
    assert_eq!(err("D1[x] R2[x]"), "read of an unborn or dead object");
    assert_eq!(err("W1[x] I2[x]"), "insert of a live object");
}

#[test]
fn syntax_errors_carry_position() {
    match parse_history("R1[x] Q2[y]") {
        Err(HistoryError::Syntax { position, token, .. }) => {
            assert_eq!(position, 6);
            assert_eq!(token, "Q2[y]");
        }
        other => panic!("{other:?}"),
    }
    for bad in ["R0[x]", "R1", "C1[x]", "R1[x", "Rx[y]", "R1[x maybe P]", "R1[1x]"] {
        assert!(matches!(parse_history(bad), Err(HistoryError::Syntax { .. })), "{bad}");
    }
}

#[test]
fn predicates_round_trip() {
    let text = "R1[x in P1] W2[x out P1] C2 C1";
    let h = parse_history(text).unwrap();
    assert_eq!(h.events()[1].membership(), Membership::NotIn);
    assert_eq!(format_history(&h), text);
}

#[test]
fn empty_history() {
    let h = parse_history("  ").unwrap();
    assert!(h.is_empty());
    assert_eq!(format_history(&h), "");
}

#[test]
fn annotate_is_idempotent() {
    let h = parse_history("W1[x] R2[x] W2[y] C1 R3[y] A2").unwrap();
    assert_eq!(version_annotate(&h).unwrap(), h);
}

#[test]
fn active_without_terminal() {
    let h = parse_history("W1[x] R2[x] C2").unwrap();
    assert_eq!(h.status(TxnId(1)), Some(TxnStatus::Active));
    assert_eq!(h.terminal_position(TxnId(2)), Some(2));
    assert!(h.events()[2].kind == EventKind::Commit);
}

fn arb_history() -> impl Strategy<Value = String> {
    let ev = (0u8..6, 1u32..4, 0usize..3, 0u8..3);
    prop::collection::vec(ev, 0..12).prop_map(|evs| {
        evs.into_iter()
            .map(|(k, t, o, p)| {
                let obj = ["x", "y", "z"][o];
                let pred = match p {
                    0 => String::new(),
                    1 => " in P".into(),
                    _ => " out Q".into(),
                };
                match k {
                    0 | 1 => format!("R{t}[{obj}{pred}]"),
                    2 | 3 => format!("W{t}[{obj}{pred}]"),
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
    fn round_trip(text in arb_history()) {
        if let Ok(h) = parse_history(&text) {
            prop_assert_eq!(format_history(&h), text.clone());
            prop_assert_eq!(parse_history(&format_history(&h)).unwrap(), h);
        }
    }

    #[test]
    fn write_versions_increase_by_one(text in arb_history()) {
        if let Ok(h) = parse_history(&text) {
            for obj in h.objects() {
                let vs: Vec<u32> = h.events().iter()
                    .filter(|e| e.object.as_ref() == Some(&obj) && e.kind == EventKind::Write)
                    .map(|e| match e.version { Some(VersionTag::Visible(i)) => i, _ => unreachable!() })
                    .collect();
                for (i, v) in vs.iter().enumerate() {
                    prop_assert_eq!(*v, i as u32 + 1);
                }
            }
        }
    }

    #[test]
    fn nothing_after_terminal(text in arb_history()) {
        if let Ok(h) = parse_history(&text) {
            for t in h.txns() {
                if let Some(p) = h.terminal_position(t) {
                    prop_assert!(h.events()[p + 1..].iter().all(|e| e.txn != t));
                }
            }
        }
    }
}
