use std::collections::HashSet;

use anomaly_core::enumerate::{enumerate_range, for_each_canonical_sequence, Enumerator};
use anomaly_core::{count, enumerate, format_history, parse_history, partition, HistorySpec, TerminalMode};

fn spec(m: u32, n: u32, k: u32, mode: TerminalMode) -> HistorySpec {
    HistorySpec::new(m, n, k, mode).unwrap()
}

fn texts(s: HistorySpec) -> Vec<String> {
    enumerate(s).map(|h| format_history(&h)).collect()
}

#[test]
fn smallest_appended_set() {
    assert_eq!(
        texts(spec(1, 1, 2, TerminalMode::Appended)),
        vec!["R1[x] C1", "R1[x] A1", "W1[x] C1", "W1[x] A1"]
    );
    assert_eq!(count(spec(1, 1, 2, TerminalMode::Appended)).unwrap(), 4);
}

#[test]
fn smallest_interleaved_set() {
    assert_eq!(
        texts(spec(1, 1, 2, TerminalMode::Interleaved)),
        vec!["R1[x]", "R1[x] C1", "R1[x] A1", "W1[x]", "W1[x] C1", "W1[x] A1"]
    );
}

#[test]
fn single_op_closed_form() {
    // 2mn single-op histories, each with 3 terminal choices (2 when appended).
    for (m, n) in [(1, 1), (2, 1), (3, 1)] {
        assert_eq!(count(spec(m, n, 2, TerminalMode::Interleaved)).unwrap(), 2 * m as u64 * n as u64 * 3);
        assert_eq!(count(spec(m, n, 2, TerminalMode::Appended)).unwrap(), 2 * m as u64 * n as u64 * 2);
    }
    assert_eq!(count(spec(2, 2, 2, TerminalMode::Interleaved)).unwrap(), 0);
}

#[test]
fn empty_bound() {
    assert_eq!(count(spec(1, 1, 1, TerminalMode::Interleaved)).unwrap(), 0);
    assert_eq!(enumerate(spec(1, 1, 1, TerminalMode::Interleaved)).count(), 0);
}

#[test]
fn count_matches_stream() {
    for mode in [TerminalMode::Interleaved, TerminalMode::Appended] {
        for (m, n, k) in [(2, 2, 3), (2, 2, 4), (1, 3, 4), (3, 1, 3), (2, 3, 5)] {
            let s = spec(m, n, k, mode);
            assert_eq!(count(s).unwrap(), enumerate(s).count() as u64, "{s} {mode}");
        }
    }
}

#[test]
fn no_duplicates_and_all_valid() {
    let s = spec(2, 2, 4, TerminalMode::Interleaved);
    let all = texts(s);
    let set: HashSet<&String> = all.iter().collect();
    assert_eq!(set.len(), all.len());
    for t in &all {
        let h = parse_history(t).unwrap();
        assert_eq!(h.txns().count(), 2);
        let ops = h.events().iter().filter(|e| e.object.is_some()).count();
        assert!(ops < 4);
    }
}

#[test]
fn interleaved_counts_by_brute_force() {
    // Every interleaving of the terminals into every op sequence, checked by
    // generating all event sequences over the alphabet and filtering.
    let s = spec(1, 2, 3, TerminalMode::Interleaved);
    let alphabet = ["R1[x]", "W1[x]", "R2[x]", "W2[x]", "C1", "A1", "C2", "A2"];
    let mut brute = HashSet::new();
    for len in 0..=4 {
        let mut idx = vec![0usize; len];
        loop {
            let text: Vec<&str> = idx.iter().map(|&i| alphabet[i]).collect();
            if let Ok(h) = parse_history(&text.join(" ")) {
                let ops = h.events().iter().filter(|e| e.object.is_some()).count();
                let all_ops = h.txns().all(|t| h.events().iter().any(|e| e.txn == t && e.object.is_some()));
                if ops < 3 && h.txns().count() == 2 && all_ops {
                    brute.insert(format_history(&h));
                }
            }
            let mut i = len;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < alphabet.len() {
                    break;
                }
                idx[i] = 0;
                if i == 0 {
                    i = usize::MAX;
                    break;
                }
            }
            if i == usize::MAX || len == 0 {
                break;
            }
        }
    }
    let ours: HashSet<String> = texts(s).into_iter().collect();
    assert_eq!(ours, brute);
}

#[test]
fn membership_and_mutex() {
    let h = "W1[x] R2[x] A1 C2".to_string();
    assert!(texts(spec(1, 2, 3, TerminalMode::Interleaved)).contains(&h));
    assert!(!texts(spec(1, 2, 2, TerminalMode::Interleaved)).contains(&h));
    let a: HashSet<String> = texts(spec(1, 2, 4, TerminalMode::Interleaved)).into_iter().collect();
    let b: HashSet<String> = texts(spec(2, 2, 4, TerminalMode::Interleaved)).into_iter().collect();
    let c: HashSet<String> = texts(spec(1, 3, 4, TerminalMode::Interleaved)).into_iter().collect();
    // With fixed identities, H(1,2,4) histories also appear in H(2,2,4): they
    // just leave y unused. Different n never overlap.
    assert!(a.is_subset(&b));
    assert!(a.is_disjoint(&c));
}

#[test]
fn subset_in_k() {
    let small: HashSet<String> = texts(spec(2, 2, 3, TerminalMode::Interleaved)).into_iter().collect();
    let big: HashSet<String> = texts(spec(2, 2, 4, TerminalMode::Interleaved)).into_iter().collect();
    assert!(small.is_subset(&big));
}

#[test]
fn partitions_cover_in_order() {
    let s = spec(2, 2, 4, TerminalMode::Interleaved);
    let whole = texts(s);
    for shards in [1, 3, 8] {
        let parts = partition(s, shards).unwrap();
        assert_eq!(parts.len(), shards);
        let sizes: Vec<u64> = parts.iter().map(|r| r.end - r.start).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let joined: Vec<String> = parts
            .iter()
            .flat_map(|r| enumerate_range(s, r.clone()).map(|h| format_history(&h)))
            .collect();
        assert_eq!(joined, whole);
    }
}

#[test]
fn cursor_resumes() {
    let s = spec(2, 2, 4, TerminalMode::Appended);
    let mut e = enumerate(s);
    let first: Vec<String> = e.by_ref().take(1000).map(|h| format_history(&h)).collect();
    let cursor = e.cursor();
    assert_eq!(cursor.emitted, 1000);
    let rest: Vec<String> = Enumerator::resume(s, cursor).map(|h| format_history(&h)).collect();
    let whole = texts(s);
    assert_eq!([first, rest].concat(), whole);
}

#[test]
fn canonical_weights_cover_everything() {
    for mode in [TerminalMode::Interleaved, TerminalMode::Appended] {
        for (m, n, k) in [(2, 2, 5), (3, 2, 5), (1, 3, 5), (3, 3, 5)] {
            let s = spec(m, n, k, mode);
            let mut seqs = 0u64;
            for_each_canonical_sequence(s, |_, w| seqs += w);
            let all_seqs: u64 = (n as usize..k as usize)
                .map(|len| {
                    // sequences over 2mn symbols using all n transactions, by inclusion-exclusion
                    (0..=n)
                        .map(|j| {
                            let sign: i64 = if j % 2 == 0 { 1 } else { -1 };
                            let binom = (0..j).fold(1i64, |a, i| a * (n - i) as i64 / (i + 1) as i64);
                            sign * binom * (2 * m as i64 * (n - j) as i64).pow(len as u32)
                        })
                        .sum::<i64>() as u64
                })
                .sum();
            assert_eq!(seqs, all_seqs, "{s}");
        }
    }
}

#[test]
fn spec_strings() {
    let s: HistorySpec = "3,4,7".parse().unwrap();
    assert_eq!((s.m, s.n, s.k, s.mode), (3, 4, 7, TerminalMode::Interleaved));
    let s: HistorySpec = "2,2,6,appended".parse().unwrap();
    assert_eq!(s.mode, TerminalMode::Appended);
    assert!("2,2".parse::<HistorySpec>().is_err());
    assert!("0,2,3".parse::<HistorySpec>().is_err());
    assert!("2,2,6,sideways".parse::<HistorySpec>().is_err());
}

#[test]
fn known_sizes() {
    assert_eq!(count(spec(2, 2, 4, TerminalMode::Interleaved)).unwrap(), 8_672);
    assert_eq!(count_by_stream(spec(2, 2, 4, TerminalMode::Interleaved)), 8_672);
    assert!(count(spec(3, 4, 7, TerminalMode::Interleaved)).is_ok());
}

fn count_by_stream(s: HistorySpec) -> u64 {
    enumerate(s).count() as u64
}
