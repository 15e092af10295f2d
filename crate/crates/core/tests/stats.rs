use anomaly_core::stats::stats_exhaustive;
use anomaly_core::{count, stats, HistorySpec, Priority, TerminalMode};

fn check(m: u32, n: u32, k: u32, mode: TerminalMode) {
    let spec = HistorySpec::new(m, n, k, mode).unwrap();
    let p = Priority::default();
    let fast = stats(spec, &p, 1);
    let slow = stats_exhaustive(spec, 0..count(spec).unwrap(), &p).unwrap();
    assert_eq!(fast, slow, "{spec} {mode}");
}

#[test]
fn kernel_matches_exhaustive() {
    for mode in [TerminalMode::Interleaved, TerminalMode::Appended] {
        for (m, n, k) in [(1, 2, 4), (2, 2, 4), (2, 2, 5), (1, 3, 5), (2, 3, 5), (3, 2, 5)] {
            check(m, n, k, mode);
        }
    }
}
