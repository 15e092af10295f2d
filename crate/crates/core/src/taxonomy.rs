use std::fmt;
use std::str::FromStr;

use crate::conflict::PopKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnomalyClass {
    Rat,
    Wat,
    Iat,
}

impl AnomalyClass {
    pub const ALL: [AnomalyClass; 3] = [AnomalyClass::Rat, AnomalyClass::Wat, AnomalyClass::Iat];
}

impl fmt::Display for AnomalyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalyClass::Rat => "RAT",
            AnomalyClass::Wat => "WAT",
            AnomalyClass::Iat => "IAT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnomalySubclass {
    Sda,
    Dda,
    Mda,
}

impl AnomalySubclass {
    pub const ALL: [AnomalySubclass; 3] = [AnomalySubclass::Sda, AnomalySubclass::Dda, AnomalySubclass::Mda];
}

impl fmt::Display for AnomalySubclass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalySubclass::Sda => "SDA",
            AnomalySubclass::Dda => "DDA",
            AnomalySubclass::Mda => "MDA",
        })
    }
}

macro_rules! names {
    ($($variant:ident => $title:literal, $class:ident, $sub:ident;)*) => {
        /// Named anomalies, declared in table row order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum AnomalyName { $($variant),* }

        impl AnomalyName {
            pub const ALL: [AnomalyName; 29] = [$(AnomalyName::$variant),*];

            pub fn title(self) -> &'static str {
                match self { $(AnomalyName::$variant => $title),* }
            }

            pub fn class(self) -> AnomalyClass {
                match self { $(AnomalyName::$variant => AnomalyClass::$class),* }
            }

            pub fn subclass(self) -> AnomalySubclass {
                match self { $(AnomalyName::$variant => AnomalySubclass::$sub),* }
            }
        }
    };
}

names! {
    DirtyRead => "Dirty Read", Rat, Sda;
    NonRepeatableRead => "Non-repeatable Read", Rat, Sda;
    IntermediateRead => "Intermediate Read", Rat, Sda;
    WriteReadSkewCommitted => "Write-Read Skew Committed", Rat, Dda;
    DoubleWriteSkew1Committed => "Double-Write Skew 1 Committed", Rat, Dda;
    WriteReadSkew => "Write-Read Skew", Rat, Dda;
    ReadSkew => "Read Skew", Rat, Dda;
    ReadSkew2 => "Read Skew 2", Rat, Dda;
    StepRat => "Step RAT", Rat, Mda;
    DirtyWrite => "Dirty Write", Wat, Sda;
    LostSelfUpdateCommitted => "Lost Self Update Committed", Wat, Sda;
    FullWriteCommitted => "Full-Write Committed", Wat, Sda;
    FullWrite => "Full-Write", Wat, Sda;
    LostUpdate => "Lost Update", Wat, Sda;
    LostSelfUpdate => "Lost Self Update", Wat, Sda;
    DoubleWriteSkew2Committed => "Double-Write Skew 2 Committed", Wat, Dda;
    FullWriteSkewCommitted => "Full-Write Skew Committed", Wat, Dda;
    FullWriteSkew => "Full-Write Skew", Wat, Dda;
    DoubleWriteSkew1 => "Double-Write Skew 1", Wat, Dda;
    DoubleWriteSkew2 => "Double-Write Skew 2", Wat, Dda;
    ReadWriteSkew1 => "Read-Write Skew 1", Wat, Dda;
    ReadWriteSkew2 => "Read-Write Skew 2", Wat, Dda;
    StepWat => "Step WAT", Wat, Mda;
    NonRepeatableReadCommitted => "Non-repeatable Read Committed", Iat, Sda;
    LostUpdateCommitted => "Lost Update Committed", Iat, Sda;
    ReadSkewCommitted => "Read Skew Committed", Iat, Dda;
    ReadWriteSkew1Committed => "Read-Write Skew 1 Committed", Iat, Dda;
    WriteSkew => "Write Skew", Iat, Dda;
    StepIat => "Step IAT", Iat, Mda;
}

impl AnomalyName {
    /// Position in the default selection order.
    pub fn rank(self) -> usize {
        self as usize
    }
}

impl fmt::Display for AnomalyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown anomaly name `{0}`")]
pub struct UnknownAnomaly(pub String);

impl FromStr for AnomalyName {
    type Err = UnknownAnomaly;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = |x: &str| x.to_ascii_lowercase().replace(['-', '_', ' '], "");
        let want = norm(s);
        AnomalyName::ALL
            .into_iter()
            .find(|n| norm(n.title()) == want)
            .ok_or_else(|| UnknownAnomaly(s.to_string()))
    }
}

/// Named anomaly for a two-edge cycle whose edges are ordered by their second
/// operation. Kinds are taken as they behave in multi-edge cycles.
pub(crate) fn two_edge(e1: PopKind, e2: PopKind, same_object: bool) -> Option<AnomalyName> {
    lookup(e1, e2, same_object).or_else(|| lookup(e2, e1, same_object))
}

fn lookup(e1: PopKind, e2: PopKind, same: bool) -> Option<AnomalyName> {
    use AnomalyName::*;
    use PopKind::*;
    Some(match (e1.as_multi_edge(), e2.as_multi_edge(), same) {
        (Rw, Wr, true) => NonRepeatableRead,
        (Wr, Rw | Rcw, true) => IntermediateRead,
        (Ww, Wcr, true) | (Wr, Wcr | Wcw, true) => LostSelfUpdateCommitted,
        (Ww, Wcw | Rcw, true) => FullWriteCommitted,
        (Ww, Ww | Rw, true) | (Wr, Ww, true) => FullWrite,
        (Rw, Ww | Rw, true) => LostUpdate,
        (Ww | Wr, Wr, true) => LostSelfUpdate,
        (Rw, Wcr, true) => NonRepeatableReadCommitted,
        (Rw, Wcw | Rcw, true) => LostUpdateCommitted,

        (Wr, Wcr, false) => WriteReadSkewCommitted,
        (Wr, Wcw, false) => DoubleWriteSkew1Committed,
        (Wr, Wr, false) => WriteReadSkew,
        (Rw, Wr, false) => ReadSkew,
        (Wr, Rw | Rcw, false) => ReadSkew2,
        (Ww, Wcr, false) => DoubleWriteSkew2Committed,
        (Ww, Wcw, false) => FullWriteSkewCommitted,
        (Ww, Ww, false) => FullWriteSkew,
        (Wr, Ww, false) => DoubleWriteSkew1,
        (Ww, Wr, false) => DoubleWriteSkew2,
        (Rw, Ww, false) => ReadWriteSkew1,
        (Ww, Rw | Rcw, false) => ReadWriteSkew2,
        (Rw, Wcr, false) => ReadSkewCommitted,
        (Rw, Wcw, false) => ReadWriteSkew1Committed,
        (Rw, Rw | Rcw, false) => WriteSkew,
        _ => return None,
    })
}

/// Class implied by the edge kinds alone.
pub fn definitional_class(kinds: impl IntoIterator<Item = PopKind>) -> AnomalyClass {
    let (mut wr, mut ww) = (false, false);
    for k in kinds {
        wr |= k.is_wr_family();
        ww |= k.is_ww_family();
    }
    if wr {
        AnomalyClass::Rat
    } else if ww {
        AnomalyClass::Wat
    } else {
        AnomalyClass::Iat
    }
}

pub(crate) fn step(class: AnomalyClass) -> AnomalyName {
    match class {
        AnomalyClass::Rat => AnomalyName::StepRat,
        AnomalyClass::Wat => AnomalyName::StepWat,
        AnomalyClass::Iat => AnomalyName::StepIat,
    }
}
