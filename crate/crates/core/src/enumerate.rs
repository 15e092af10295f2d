use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::history::{self, Event, EventKind, History, ObjectId};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum EnumError {
    #[error("invalid history spec `{0}` (expected m,n,k[,interleaved|appended])")]
    InvalidSpec(String),
    #[error("history count overflows 64 bits")]
    Overflow,
}

/// Where commit and abort events may sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TerminalMode {
    /// Each transaction ends anywhere after its last operation, or stays active.
    #[default]
    Interleaved,
    /// Every transaction commits or aborts after all operations, in any order.
    Appended,
}

impl fmt::Display for TerminalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminalMode::Interleaved => "interleaved",
            TerminalMode::Appended => "appended",
        })
    }
}

impl FromStr for TerminalMode {
    type Err = EnumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "interleaved" | "i" => Ok(TerminalMode::Interleaved),
            "appended" | "a" => Ok(TerminalMode::Appended),
            _ => Err(EnumError::InvalidSpec(s.to_string())),
        }
    }
}

/// H(m, n, k): m objects, n transactions, fewer than k reads and writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HistorySpec {
    pub m: u32,
    pub n: u32,
    pub k: u32,
    pub mode: TerminalMode,
}

impl HistorySpec {
    pub fn new(m: u32, n: u32, k: u32, mode: TerminalMode) -> Result<Self, EnumError> {
        // Enumeration keeps transaction and object indices in a byte.
        if m == 0 || n == 0 || k == 0 || m > 26 || n > 32 || k > 64 {
            return Err(EnumError::InvalidSpec(format!("{m},{n},{k}")));
        }
        Ok(HistorySpec { m, n, k, mode })
    }

    pub fn with_mode(self, mode: TerminalMode) -> Self {
        HistorySpec { mode, ..self }
    }

    pub fn objects(&self) -> Vec<ObjectId> {
        (0..self.m).map(|i| ObjectId::new(object_name(i)).unwrap()).collect()
    }
}

impl fmt::Display for HistorySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H({},{},{})", self.m, self.n, self.k)
    }
}

impl FromStr for HistorySpec {
    type Err = EnumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EnumError::InvalidSpec(s.to_string());
        let inner = s.trim().trim_start_matches('H').trim_start_matches('(').trim_end_matches(')');
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        let num = |i: usize| parts.get(i).and_then(|p| p.parse::<u32>().ok()).ok_or_else(bad);
        let mode = match parts.len() {
            3 => TerminalMode::default(),
            4 => parts[3].parse().map_err(|_| bad())?,
            _ => return Err(bad()),
        };
        HistorySpec::new(num(0)?, num(1)?, num(2)?, mode).map_err(|_| bad())
    }
}

const OBJECT_NAMES: &str = "xyzabcdefghijklmnopqrstuvw";

/// x, y, z, then a, b, c and onwards.
pub fn object_name(i: u32) -> &'static str {
    let i = i as usize;
    &OBJECT_NAMES[i..i + 1]
}

/// One read or write slot of an operation sequence, with 0-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OpSlot {
    pub txn: u8,
    pub write: bool,
    pub obj: u8,
}

/// Resumable position: global index of the next history and how many were emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct EnumerationCursor {
    pub position: u64,
    pub emitted: u64,
}

/// Number of terminal arrangements for an operation sequence whose
/// transactions last act at `last[t]` (0-based op index).
pub(crate) fn arrangements(mode: TerminalMode, len: usize, last: &[usize]) -> Option<u64> {
    match mode {
        TerminalMode::Appended => {
            let n = last.len() as u64;
            (1..=n).try_fold(1u64, |acc, i| acc.checked_mul(i))?.checked_mul(1u64.checked_shl(n as u32)?)
        }
        TerminalMode::Interleaved => {
            // Insert terminals latest-last first; every terminal already placed
            // sits after the current transaction's last op.
            let mut order: Vec<usize> = last.to_vec();
            order.sort_unstable_by(|a, b| b.cmp(a));
            let mut dp = vec![0u64; order.len() + 1];
            dp[0] = 1;
            for (i, &l) in order.iter().enumerate() {
                let range = (len - l) as u64;
                for placed in (0..=i).rev() {
                    let w = dp[placed];
                    if w == 0 {
                        continue;
                    }
                    let add = w.checked_mul(2 * (range + placed as u64))?;
                    dp[placed + 1] = dp[placed + 1].checked_add(add)?;
                }
            }
            dp.iter().try_fold(0u64, |a, &b| a.checked_add(b))
        }
    }
}

fn last_positions(pattern: &[u8], n: usize) -> Option<Vec<usize>> {
    let mut last = vec![usize::MAX; n];
    for (i, &t) in pattern.iter().enumerate() {
        last[t as usize] = i;
    }
    last.iter().all(|&l| l != usize::MAX).then_some(last)
}

struct Counter {
    spec: HistorySpec,
    cache: HashMap<Vec<u8>, u64>,
}

impl Counter {
    fn new(spec: HistorySpec) -> Self {
        Counter {
            spec,
            cache: HashMap::new(),
        }
    }

    /// Histories per operation sequence with this transaction pattern; 0 if a
    /// transaction is missing.
    fn per_sequence(&mut self, pattern: &[u8]) -> Result<u64, EnumError> {
        if let Some(&c) = self.cache.get(pattern) {
            return Ok(c);
        }
        let c = match last_positions(pattern, self.spec.n as usize) {
            None => 0,
            Some(last) => arrangements(self.spec.mode, pattern.len(), &last).ok_or(EnumError::Overflow)?,
        };
        self.cache.insert(pattern.to_vec(), c);
        Ok(c)
    }

    /// Histories with exactly `len` operations.
    fn block(&mut self, len: usize) -> Result<u64, EnumError> {
        let n = self.spec.n as usize;
        let per_slot = 2 * self.spec.m as u64;
        let mut total = 0u64;
        let mut pattern = vec![0u8; len];
        loop {
            let c = self.per_sequence(&pattern)?;
            let seqs = per_slot.checked_pow(len as u32).ok_or(EnumError::Overflow)?;
            total = total
                .checked_add(c.checked_mul(seqs).ok_or(EnumError::Overflow)?)
                .ok_or(EnumError::Overflow)?;
            if !odometer(&mut pattern, n as u32) {
                return Ok(total);
            }
        }
    }
}

/// Advances a little-endian-last digit vector; false on wrap-around.
fn odometer<T: Copy + Into<u32> + TryFrom<u32>>(digits: &mut [T], base: u32) -> bool {
    for d in digits.iter_mut().rev() {
        let v: u32 = (*d).into() + 1;
        if v < base {
            *d = T::try_from(v).ok().unwrap();
            return true;
        }
        *d = T::try_from(0).ok().unwrap();
    }
    false
}

pub fn count(spec: HistorySpec) -> Result<u64, EnumError> {
    let mut counter = Counter::new(spec);
    let mut total = 0u64;
    for len in spec.n as usize..spec.k as usize {
        total = total.checked_add(counter.block(len)?).ok_or(EnumError::Overflow)?;
    }
    Ok(total)
}

/// Disjoint, covering, balanced ranges of global history indices.
pub fn partition(spec: HistorySpec, shards: usize) -> Result<Vec<Range<u64>>, EnumError> {
    let total = count(spec)?;
    let shards = shards.max(1) as u64;
    Ok((0..shards)
        .map(|i| (total * i / shards)..(total * (i + 1) / shards))
        .collect())
}

pub fn enumerate(spec: HistorySpec) -> Enumerator {
    Enumerator::range(spec, 0..u64::MAX)
}

pub fn enumerate_range(spec: HistorySpec, range: Range<u64>) -> Enumerator {
    Enumerator::range(spec, range)
}

/// Streams histories in the fixed order: by length, then operation sequence,
/// then terminal arrangement.
pub struct Enumerator {
    spec: HistorySpec,
    objects: Vec<ObjectId>,
    counter: Counter,
    len: usize,
    /// Current operation sequence as symbol digits.
    digits: Vec<u32>,
    buffer: VecDeque<History>,
    position: u64,
    end: u64,
    emitted: u64,
}

impl Enumerator {
    fn range(spec: HistorySpec, range: Range<u64>) -> Enumerator {
        let mut e = Enumerator {
            spec,
            objects: spec.objects(),
            counter: Counter::new(spec),
            len: spec.n as usize,
            digits: Vec::new(),
            buffer: VecDeque::new(),
            position: 0,
            end: range.end,
            emitted: 0,
        };
        e.seek(range.start);
        e
    }

    pub fn resume(spec: HistorySpec, cursor: EnumerationCursor) -> Enumerator {
        let mut e = Enumerator::range(spec, cursor.position..u64::MAX);
        e.emitted = cursor.emitted;
        e
    }

    pub fn cursor(&self) -> EnumerationCursor {
        EnumerationCursor {
            position: self.position,
            emitted: self.emitted,
        }
    }

    fn symbols(&self) -> u32 {
        2 * self.spec.m * self.spec.n
    }

    fn pattern(&self) -> Vec<u8> {
        let per_txn = 2 * self.spec.m;
        self.digits.iter().map(|&d| (d / per_txn) as u8).collect()
    }

    fn seek(&mut self, target: u64) {
        let mut pos = 0u64;
        // Whole length blocks first.
        while self.len < self.spec.k as usize {
            let block = self.counter.block(self.len).unwrap_or(u64::MAX);
            if pos.saturating_add(block) > target {
                break;
            }
            pos = pos.saturating_add(block);
            self.len += 1;
        }
        if self.len >= self.spec.k as usize {
            self.position = pos;
            self.end = self.end.min(pos);
            return;
        }
        self.digits = vec![0; self.len];
        loop {
            let c = self.counter.per_sequence(&self.pattern()).unwrap_or(u64::MAX);
            if pos + c > target {
                break;
            }
            pos += c;
            if !self.advance_sequence() {
                self.position = pos;
                self.end = self.end.min(pos);
                return;
            }
        }
        self.fill();
        self.buffer.drain(..(target - pos) as usize);
        self.position = target;
    }

    /// Moves to the next operation sequence (any pattern); false when exhausted.
    fn advance_sequence(&mut self) -> bool {
        let base = self.symbols();
        if odometer(&mut self.digits, base) {
            return true;
        }
        self.len += 1;
        if self.len >= self.spec.k as usize {
            return false;
        }
        self.digits = vec![0; self.len];
        true
    }

    fn ops(&self) -> Vec<OpSlot> {
        let m = self.spec.m;
        self.digits
            .iter()
            .map(|&d| OpSlot {
                txn: (d / (2 * m)) as u8,
                write: (d % (2 * m)) / m == 1,
                obj: (d % m) as u8,
            })
            .collect()
    }

    fn fill(&mut self) {
        let ops = self.ops();
        self.buffer.clear();
        if let Some(last) = last_positions(&self.pattern(), self.spec.n as usize) {
            let spec = self.spec;
            let objects = &self.objects;
            let buffer = &mut self.buffer;
            for_each_arrangement(spec.mode, ops.len(), &last, |placement| {
                buffer.push_back(build(spec, objects, &ops, placement));
            });
        }
    }
}

impl Iterator for Enumerator {
    type Item = History;

    fn next(&mut self) -> Option<History> {
        if self.position >= self.end {
            return None;
        }
        while self.buffer.is_empty() {
            if !self.advance_sequence() {
                self.end = self.position;
                return None;
            }
            self.fill();
        }
        let h = self.buffer.pop_front()?;
        self.position += 1;
        self.emitted += 1;
        Some(h)
    }
}

/// A terminal placed after `gap` operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Placed {
    pub txn: u8,
    pub commit: bool,
    pub gap: usize,
}

/// Calls `f` with each terminal arrangement, terminals listed in final order.
pub(crate) fn for_each_arrangement(mode: TerminalMode, len: usize, last: &[usize], mut f: impl FnMut(&[Placed])) {
    let n = last.len();
    match mode {
        TerminalMode::Appended => {
            let mut perm: Vec<u8> = (0..n as u8).collect();
            loop {
                for mask in 0..(1u32 << n) {
                    // Transaction 1 is the most significant choice; commit before abort.
                    let placed: Vec<Placed> = perm
                        .iter()
                        .map(|&t| Placed {
                            txn: t,
                            commit: mask & (1 << (n - 1 - t as usize)) == 0,
                            gap: len,
                        })
                        .collect();
                    f(&placed);
                }
                if !next_permutation(&mut perm) {
                    break;
                }
            }
        }
        TerminalMode::Interleaved => {
            // Choice c for txn t: 0 = active, 2j+1 = commit at gap last+1+j, 2j+2 = abort there.
            let radix: Vec<u32> = last.iter().map(|&l| 1 + 2 * (len - l) as u32).collect();
            let mut choice = vec![0u32; n];
            let mut placed = Vec::with_capacity(n);
            loop {
                placed.clear();
                for t in 0..n {
                    if choice[t] > 0 {
                        let j = (choice[t] - 1) / 2;
                        placed.push(Placed {
                            txn: t as u8,
                            commit: choice[t] % 2 == 1,
                            gap: last[t] + 1 + j as usize,
                        });
                    }
                }
                placed.sort_by_key(|p| (p.gap, p.txn));
                permute_within_gaps(&mut placed, 0, &mut f);
                if !mixed_odometer(&mut choice, &radix) {
                    break;
                }
            }
        }
    }
}

fn mixed_odometer(digits: &mut [u32], radix: &[u32]) -> bool {
    for i in (0..digits.len()).rev() {
        digits[i] += 1;
        if digits[i] < radix[i] {
            return true;
        }
        digits[i] = 0;
    }
    false
}

/// Every ordering of terminals that share a gap; earlier gaps vary slowest.
fn permute_within_gaps(placed: &mut Vec<Placed>, from: usize, f: &mut impl FnMut(&[Placed])) {
    if from >= placed.len() {
        f(placed);
        return;
    }
    let gap = placed[from].gap;
    let to = (from..placed.len()).find(|&i| placed[i].gap != gap).unwrap_or(placed.len());
    if to - from == 1 {
        return permute_within_gaps(placed, to, f);
    }
    placed[from..to].sort_by_key(|p| p.txn);
    loop {
        permute_within_gaps(placed, to, f);
        if !next_permutation_by(&mut placed[from..to], |p| p.txn) {
            placed[from..to].sort_by_key(|p| p.txn);
            break;
        }
    }
}

fn next_permutation(v: &mut [u8]) -> bool {
    next_permutation_by(v, |&x| x)
}

fn next_permutation_by<T, K: Ord>(v: &mut [T], key: impl Fn(&T) -> K) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && key(&v[i - 1]) >= key(&v[i]) {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while key(&v[j]) <= key(&v[i - 1]) {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn build(spec: HistorySpec, objects: &[ObjectId], ops: &[OpSlot], placed: &[Placed]) -> History {
    let mut events = Vec::with_capacity(ops.len() + placed.len());
    let mut next = placed.iter().peekable();
    for gap in 0..=ops.len() {
        while let Some(p) = next.next_if(|p| p.gap == gap) {
            let kind = if p.commit { EventKind::Commit } else { EventKind::Abort };
            events.push(Event::terminal(kind, p.txn as u32 + 1));
        }
        if let Some(op) = ops.get(gap) {
            let kind = if op.write { EventKind::Write } else { EventKind::Read };
            events.push(Event::op(kind, op.txn as u32 + 1, &objects[op.obj as usize]));
        }
    }
    history::from_events_with(events, Some(spec)).expect("enumerated histories are valid")
}

/// Operation sequences up to renaming of transactions and objects (both
/// numbered by first appearance), with the size of each renaming orbit.
pub fn for_each_canonical_sequence(spec: HistorySpec, mut f: impl FnMut(&[OpSlot], u64)) {
    let n = spec.n as usize;
    let m = spec.m as usize;
    let txn_orbit: u64 = (1..=spec.n as u64).product();
    let mut ops = Vec::with_capacity(spec.k as usize);
    for len in n..spec.k as usize {
        canonical_dfs(len, n, m, txn_orbit, &mut ops, 0, 0, &mut f);
    }
}

#[allow(clippy::too_many_arguments)]
fn canonical_dfs(
    len: usize,
    n: usize,
    m: usize,
    txn_orbit: u64,
    ops: &mut Vec<OpSlot>,
    used_t: usize,
    used_o: usize,
    f: &mut impl FnMut(&[OpSlot], u64),
) {
    if ops.len() == len {
        if used_t == n {
            let obj_orbit: u64 = ((m - used_o + 1)..=m).map(|x| x as u64).product();
            f(ops, txn_orbit * obj_orbit);
        }
        return;
    }
    // Not enough room left to introduce the remaining transactions.
    if n - used_t > len - ops.len() {
        return;
    }
    for t in 0..(used_t + 1).min(n) {
        for write in [false, true] {
            for o in 0..(used_o + 1).min(m) {
                ops.push(OpSlot {
                    txn: t as u8,
                    write,
                    obj: o as u8,
                });
                canonical_dfs(
                    len,
                    n,
                    m,
                    txn_orbit,
                    ops,
                    used_t.max(t + 1),
                    used_o.max(o + 1),
                    f,
                );
                ops.pop();
            }
        }
    }
}
