use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::enumerate::HistorySpec;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum HistoryError {
    #[error("syntax error at offset {position} in `{token}`: {message}")]
    Syntax {
        position: usize,
        token: String,
        message: &'static str,
    },
    #[error("event {position} (`{token}`): {message}")]
    Semantic {
        position: usize,
        token: String,
        message: &'static str,
    },
}

/// Data item name. Cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectId(Arc<str>);

impl ObjectId {
    pub fn new(name: &str) -> Option<Self> {
        valid_ident(name).then(|| ObjectId(Arc::from(name)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn valid_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxnId(pub u32);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VersionTag {
    Unborn,
    Visible(u32),
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Membership {
    In,
    NotIn,
    Unspecified,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PredicateRef {
    pub id: Option<Arc<str>>,
    pub membership: Membership,
}

impl PredicateRef {
    pub const NONE: PredicateRef = PredicateRef {
        id: None,
        membership: Membership::Unspecified,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Read,
    Write,
    Insert,
    Delete,
    Commit,
    Abort,
}

impl EventKind {
    fn letter(self) -> char {
        match self {
            EventKind::Read => 'R',
            EventKind::Write => 'W',
            EventKind::Insert => 'I',
            EventKind::Delete => 'D',
            EventKind::Commit => 'C',
            EventKind::Abort => 'A',
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::Commit | EventKind::Abort)
    }

    /// Insert and Delete behave as writes for conflicts.
    pub fn is_write(self) -> bool {
        matches!(self, EventKind::Write | EventKind::Insert | EventKind::Delete)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub kind: EventKind,
    pub txn: TxnId,
    pub object: Option<ObjectId>,
    pub version: Option<VersionTag>,
    pub predicate: Option<PredicateRef>,
}

impl Event {
    pub fn op(kind: EventKind, txn: u32, object: &ObjectId) -> Event {
        Event {
            kind,
            txn: TxnId(txn),
            object: Some(object.clone()),
            version: None,
            predicate: Some(PredicateRef::NONE),
        }
    }

    pub fn terminal(kind: EventKind, txn: u32) -> Event {
        Event {
            kind,
            txn: TxnId(txn),
            object: None,
            version: None,
            predicate: None,
        }
    }

    pub fn membership(&self) -> Membership {
        self.predicate
            .as_ref()
            .map_or(Membership::Unspecified, |p| p.membership)
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.letter(), self.txn.0)?;
        if let Some(obj) = &self.object {
            write!(f, "[{obj}")?;
            if let Some(PredicateRef { id: Some(id), membership }) = &self.predicate {
                let word = match membership {
                    Membership::NotIn => "out",
                    _ => "in",
                };
                write!(f, " {word} {id}")?;
            }
            f.write_str("]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxnStatus {
    Committed,
    Aborted,
    Active,
}

/// A validated, version-annotated history.
#[derive(Debug, Clone)]
pub struct History {
    events: Vec<Event>,
    status: BTreeMap<TxnId, TxnStatus>,
    terminals: BTreeMap<TxnId, usize>,
    pub spec: Option<HistorySpec>,
}

impl PartialEq for History {
    fn eq(&self, other: &Self) -> bool {
        self.events == other.events && self.status == other.status
    }
}

impl Eq for History {}

impl History {
    /// Validates terminal placement and read visibility, then assigns versions.
    pub fn from_events(events: Vec<Event>) -> Result<History, HistoryError> {
        from_events_with(events, None)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn txns(&self) -> impl Iterator<Item = TxnId> + '_ {
        self.status.keys().copied()
    }

    pub fn status(&self, t: TxnId) -> Option<TxnStatus> {
        self.status.get(&t).copied()
    }

    pub fn statuses(&self) -> &BTreeMap<TxnId, TxnStatus> {
        &self.status
    }

    /// Event index of the commit or abort of `t`.
    pub fn terminal_position(&self, t: TxnId) -> Option<usize> {
        self.terminals.get(&t).copied()
    }

    pub fn objects(&self) -> Vec<ObjectId> {
        let mut objs: Vec<ObjectId> = self.events.iter().filter_map(|e| e.object.clone()).collect();
        objs.sort();
        objs.dedup();
        objs
    }

    /// Events at the given indices, in the given order, re-validated.
    pub fn subsequence(&self, indices: &[usize]) -> Result<History, HistoryError> {
        let evs = indices
            .iter()
            .map(|&i| {
                let mut e = self.events[i].clone();
                e.version = None;
                e
            })
            .collect();
        History::from_events(evs)
    }

    /// Sub-history of the given transactions in original order.
    pub fn projection(&self, keep: impl Fn(TxnId) -> bool) -> History {
        let idx: Vec<usize> = (0..self.events.len()).filter(|&i| keep(self.events[i].txn)).collect();
        self.subsequence(&idx)
            .expect("projection of a valid history stays valid")
    }
}

pub(crate) fn from_events_with(
    mut events: Vec<Event>,
    spec: Option<HistorySpec>,
) -> Result<History, HistoryError> {
    let mut status = BTreeMap::new();
    let mut terminals = BTreeMap::new();
    // per object: (latest tag, next visible index)
    let mut objs: BTreeMap<ObjectId, (VersionTag, u32)> = BTreeMap::new();
    for (i, ev) in events.iter_mut().enumerate() {
        let sem = |message| HistoryError::Semantic {
            position: i,
            token: ev.to_string(),
            message,
        };
        if ev.txn.0 == 0 {
            return Err(sem("transaction ids start at 1"));
        }
        let st = status.entry(ev.txn).or_insert(TxnStatus::Active);
        if *st != TxnStatus::Active {
            return Err(if ev.kind.is_terminal() {
                sem("duplicate terminal")
            } else {
                sem("event after terminal")
            });
        }
        if ev.kind.is_terminal() {
            if ev.object.is_some() {
                return Err(sem("terminal with an object"));
            }
            *st = if ev.kind == EventKind::Commit {
                TxnStatus::Committed
            } else {
                TxnStatus::Aborted
            };
            terminals.insert(ev.txn, i);
            ev.version = None;
            continue;
        }
        let Some(obj) = ev.object.clone() else {
            return Err(sem("operation without an object"));
        };
        let slot = objs.entry(obj).or_insert(if ev.kind == EventKind::Insert {
            (VersionTag::Unborn, 0)
        } else {
            (VersionTag::Visible(0), 1)
        });
        let tag = match ev.kind {
            EventKind::Read => match slot.0 {
                VersionTag::Visible(_) => slot.0,
                _ => return Err(sem("read of an unborn or dead object")),
            },
            EventKind::Write | EventKind::Delete => {
                if !matches!(slot.0, VersionTag::Visible(_)) {
                    return Err(sem("write of an unborn or dead object"));
                }
                if ev.kind == EventKind::Delete {
                    VersionTag::Dead
                } else {
                    slot.1 += 1;
                    VersionTag::Visible(slot.1 - 1)
                }
            }
            EventKind::Insert => {
                if matches!(slot.0, VersionTag::Visible(_)) {
                    return Err(sem("insert of a live object"));
                }
                slot.1 += 1;
                VersionTag::Visible(slot.1 - 1)
            }
            EventKind::Commit | EventKind::Abort => unreachable!(),
        };
        if ev.kind != EventKind::Read {
            slot.0 = tag;
        }
        ev.version = Some(tag);
    }
    Ok(History {
        events,
        status,
        terminals,
        spec,
    })
}

/// Recomputes version tags for a history's events.
pub fn version_annotate(h: &History) -> Result<History, HistoryError> {
    from_events_with(h.events.clone(), h.spec)
}

pub fn parse_history(text: &str) -> Result<History, HistoryError> {
    let mut events = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'[' {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'[' {
            match text[i..].find(']') {
                Some(off) => i += off + 1,
                None => {
                    return Err(HistoryError::Syntax {
                        position: start,
                        token: text[start..].to_string(),
                        message: "unclosed bracket",
                    })
                }
            }
        }
        events.push(parse_token(&text[start..i], start)?);
    }
    History::from_events(events)
}

fn parse_token(tok: &str, position: usize) -> Result<Event, HistoryError> {
    let err = |message| HistoryError::Syntax {
        position,
        token: tok.to_string(),
        message,
    };
    let mut chars = tok.chars();
    let kind = match chars.next() {
        Some('R') => EventKind::Read,
        Some('W') => EventKind::Write,
        Some('I') => EventKind::Insert,
        Some('D') => EventKind::Delete,
        Some('C') => EventKind::Commit,
        Some('A') => EventKind::Abort,
        _ => return Err(err("expected one of R W I D C A")),
    };
    let rest = &tok[1..];
    let (num, bracket) = match rest.find('[') {
        Some(b) => (&rest[..b], Some(&rest[b..])),
        None => (rest, None),
    };
    if num.is_empty() || !num.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err("expected a transaction number"));
    }
    let txn: u32 = num.parse().map_err(|_| err("transaction number out of range"))?;
    if txn == 0 {
        return Err(err("transaction ids start at 1"));
    }
    if kind.is_terminal() {
        if bracket.is_some() {
            return Err(err("commit and abort take no object"));
        }
        return Ok(Event::terminal(kind, txn));
    }
    let Some(inner) = bracket.and_then(|b| b.strip_prefix('[')).and_then(|b| b.strip_suffix(']')) else {
        return Err(err("expected [object]"));
    };
    let parts: Vec<&str> = inner.split_whitespace().collect();
    let (obj, predicate) = match parts.as_slice() {
        [o] => (*o, PredicateRef::NONE),
        [o, word, p] => {
            let membership = match *word {
                "in" => Membership::In,
                "out" => Membership::NotIn,
                _ => return Err(err("expected `in` or `out`")),
            };
            if !valid_ident(p) {
                return Err(err("bad predicate name"));
            }
            (
                *o,
                PredicateRef {
                    id: Some(Arc::from(*p)),
                    membership,
                },
            )
        }
        _ => return Err(err("expected [object] or [object in|out predicate]")),
    };
    let object = ObjectId::new(obj).ok_or_else(|| err("bad object name"))?;
    Ok(Event {
        kind,
        txn: TxnId(txn),
        object: Some(object),
        version: None,
        predicate: Some(predicate),
    })
}

pub fn format_history(h: &History) -> String {
    h.to_string()
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.events.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl FromStr for History {
    type Err = HistoryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_history(s)
    }
}
