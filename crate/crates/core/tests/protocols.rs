use std::collections::BTreeMap;

use anomaly_core::protocols::{
    capability, parse_protocol_list, serializability_audit_weakened_si, ConflictSlot, Granularity,
};
use anomaly_core::{
    concurrency_degree, has_anomaly, parse_history, rollback_stats, serializability_audit, simulate, AbortReason,
    HistorySpec, ProtocolId, TerminalMode, TxnId,
};
use num_rational::Ratio;

const WRITE_SKEW: &str = "R1[x] R2[y] W1[y] W2[x] C1 C2";

fn aborted(p: ProtocolId, text: &str) -> Vec<u32> {
    let h = parse_history(text).unwrap();
    simulate(p, &h).aborted_txns.keys().map(|t| t.0).collect()
}

#[test]
fn no_wait_aborts_second_writer() {
    let h = parse_history("W1[x] W2[x] C1 C2").unwrap();
    let d = simulate(ProtocolId::NoWait2PL, &h);
    assert_eq!(d.aborted_txns.keys().copied().collect::<Vec<_>>(), vec![TxnId(2)]);
    assert_eq!(d.aborted_txns[&TxnId(2)], AbortReason::WriteLockConflict);
    assert_eq!(d.first_abort_position, Some(1));
}

#[test]
fn to_lets_older_writer_through() {
    assert!(aborted(ProtocolId::TO, "W2[x] R1[x] C2 C1").is_empty());
}

#[test]
fn to_rejects_late_read() {
    assert_eq!(aborted(ProtocolId::TO, "R1[y] W2[x] R1[x] C1 C2"), vec![1]);
}

#[test]
fn ssi_breaks_write_skew() {
    assert_eq!(aborted(ProtocolId::SSI, WRITE_SKEW).len(), 1);
    let h = parse_history(WRITE_SKEW).unwrap();
    let d = simulate(ProtocolId::SSI, &h);
    assert!(d.reasons().all(|(_, r)| r == AbortReason::ConsecutiveRw));
}

#[test]
fn wsi_validates_second_committer() {
    let h = parse_history(WRITE_SKEW).unwrap();
    let d = simulate(ProtocolId::WSI, &h);
    assert_eq!(d.aborted_txns.into_iter().collect::<Vec<_>>(), vec![(TxnId(2), AbortReason::Validation)]);
}

#[test]
fn wait_die_older_waits() {
    let h = parse_history("R1[y] W2[x] W1[x] C2 C1").unwrap();
    let older_waits = simulate(ProtocolId::WaitDie2PL, &h);
    assert!(older_waits.aborted_txns.is_empty());
    let p = older_waits.committed_projection().unwrap();
    assert_eq!(anomaly_core::format_history(&p), "R1[y] W2[x] C2 W1[x] C1");
    assert_eq!(aborted(ProtocolId::WaitDie2PL, "W1[x] W2[x] C1 C2"), vec![2]);
}

#[test]
fn history_abort_does_not_count() {
    let h = parse_history("W1[x] W2[x] A2 C1").unwrap();
    let d = simulate(ProtocolId::NoWait2PL, &h);
    assert!(!d.aborted_txns.is_empty());
    assert!(!d.counts_against(&h));
}

#[test]
fn active_transactions_commit_at_end() {
    let h = parse_history("R1[x] W2[y]").unwrap();
    let d = simulate(ProtocolId::OCC, &h);
    assert!(d.aborted_txns.is_empty());
    assert_eq!(d.committed_projection().unwrap().len(), 4);
}

#[test]
fn simulate_is_deterministic() {
    let h = parse_history(WRITE_SKEW).unwrap();
    for p in ProtocolId::ALL {
        assert_eq!(simulate(p, &h), simulate(p, &h), "{p}");
    }
}

#[test]
fn protocol_names_parse() {
    assert_eq!("nowait".parse::<ProtocolId>().unwrap(), ProtocolId::NoWait2PL);
    assert_eq!("No_Wait".parse::<ProtocolId>().unwrap(), ProtocolId::NoWait2PL);
    assert_eq!("waitdie2pl".parse::<ProtocolId>().unwrap(), ProtocolId::WaitDie2PL);
    assert_eq!("mvto".parse::<ProtocolId>().unwrap(), ProtocolId::MVTO);
    assert!("2PL".parse::<ProtocolId>().is_err());
    assert_eq!(parse_protocol_list("all").unwrap().len(), 8);
    assert_eq!(parse_protocol_list("occ, ssi").unwrap(), vec![ProtocolId::OCC, ProtocolId::SSI]);
}

#[test]
fn degrees() {
    assert_eq!(concurrency_degree(ProtocolId::NoWait2PL, None), Ratio::new(1, 2));
    assert_eq!(concurrency_degree(ProtocolId::MVTO, None), Ratio::new(5, 6));
    for p in ProtocolId::ALL {
        let d = concurrency_degree(p, None);
        assert!(d >= Ratio::new(1, 2) && d <= Ratio::from_integer(1), "{p}");
    }
    let only_rr: BTreeMap<ConflictSlot, u64> = ConflictSlot::ALL.iter().map(|&s| (s, 0)).chain([(ConflictSlot::Rr, 1)]).collect();
    assert_eq!(concurrency_degree(ProtocolId::NoWait2PL, Some(&only_rr)), Ratio::from_integer(1));
    let conflicts: BTreeMap<ConflictSlot, u64> = ConflictSlot::ALL
        .iter()
        .map(|&s| (s, u64::from(matches!(s, ConflictSlot::Ww | ConflictSlot::Wr | ConflictSlot::Rw))))
        .collect();
    assert_eq!(concurrency_degree(ProtocolId::NoWait2PL, Some(&conflicts)), Ratio::from_integer(0));
    assert_eq!(capability(ProtocolId::SSI, ConflictSlot::Rw), 2);
}

#[test]
fn audits_are_clean_on_small_sets() {
    for mode in [TerminalMode::Interleaved, TerminalMode::Appended] {
        let spec = HistorySpec::new(2, 2, 4, mode).unwrap();
        for p in ProtocolId::ALL {
            let bad = serializability_audit(p, spec);
            assert!(bad.is_empty(), "{p} {mode}: {}", anomaly_core::format_history(&bad[0]));
        }
    }
}

#[test]
fn weakened_si_lets_write_skew_through() {
    let h = parse_history(WRITE_SKEW).unwrap();
    let d = anomaly_core::simulate_weakened_si(&h);
    assert!(d.aborted_txns.is_empty());
    assert!(has_anomaly(&d.committed_projection().unwrap()));
    let spec = HistorySpec::new(2, 2, 6, TerminalMode::Appended).unwrap();
    assert!(!serializability_audit_weakened_si(spec).is_empty());
}

#[test]
fn rollback_counts_add_up() {
    let spec = HistorySpec::new(2, 2, 5, TerminalMode::Interleaved).unwrap();
    for p in ProtocolId::ALL {
        let s = rollback_stats(spec, p);
        assert_eq!(s.n, anomaly_core::count(spec).unwrap());
        assert_eq!(s.unsound, 0, "{p}");
        assert!(s.n_alg >= s.n_false);
        // Wait-die can remove a cycle by waiting instead of aborting.
        if p != ProtocolId::WaitDie2PL {
            assert_eq!(s.missed, s.missed_resolved, "{p}");
        }
        let (trr, frr) = s.rates(Granularity::History);
        assert_eq!(trr, Ratio::new(s.n_true, s.n));
        assert_eq!(frr, Ratio::new(s.n_false, s.n));
    }
}
