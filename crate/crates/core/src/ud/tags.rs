//! Closed tag vocabularies.
//!
//! Every tag type is a fixed, ordered enumeration. The position of a variant in
//! `ALL` is its feature index, so these orders are part of the checkpoint format
//! and must never be reordered.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Raised when a string is not a member of a closed vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} value `{value}`")]
pub struct UnknownTag {
    pub kind: &'static str,
    pub value: String,
}

macro_rules! closed_vocab {
    (
        $(#[$meta:meta])*
        $name:ident, $kind:literal, { $($variant:ident => $text:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const COUNT: usize = $name::ALL.len();

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            #[inline]
            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(index: usize) -> Option<Self> {
                Self::ALL.get(index).copied()
            }
        }

        impl FromStr for $name {
            type Err = UnknownTag;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(UnknownTag { kind: $kind, value: s.to_string() }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

closed_vocab! {
    /// Universal POS tag.
    UposTag, "UPOS", {
        Adj => "ADJ",
        Adp => "ADP",
        Adv => "ADV",
        Aux => "AUX",
        Cconj => "CCONJ",
        Det => "DET",
        Intj => "INTJ",
        Noun => "NOUN",
        Num => "NUM",
        Part => "PART",
        Pron => "PRON",
        Propn => "PROPN",
        Punct => "PUNCT",
        Sconj => "SCONJ",
        Sym => "SYM",
        Verb => "VERB",
        X => "X",
    }
}

closed_vocab! {
    /// Universal dependency relation, plus the reserved `SELF` label carried by
    /// self-loop edges. `SELF` is rejected when reading data files.
    DepRelTag, "deprel", {
        Acl => "acl",
        Advcl => "advcl",
        Advmod => "advmod",
        Amod => "amod",
        Appos => "appos",
        Aux => "aux",
        Case => "case",
        Cc => "cc",
        Ccomp => "ccomp",
        Clf => "clf",
        Compound => "compound",
        Conj => "conj",
        Cop => "cop",
        Csubj => "csubj",
        Dep => "dep",
        Det => "det",
        Discourse => "discourse",
        Dislocated => "dislocated",
        Expl => "expl",
        Fixed => "fixed",
        Flat => "flat",
        Goeswith => "goeswith",
        Iobj => "iobj",
        List => "list",
        Mark => "mark",
        Nmod => "nmod",
        Nsubj => "nsubj",
        Nummod => "nummod",
        Obj => "obj",
        Obl => "obl",
        Orphan => "orphan",
        Parataxis => "parataxis",
        Punct => "punct",
        Reparandum => "reparandum",
        Root => "root",
        Vocative => "vocative",
        Xcomp => "xcomp",
        SelfLoop => "SELF",
    }
}

impl DepRelTag {
    /// The 37 relations that may appear in data (everything except `SELF`).
    pub fn universal() -> &'static [DepRelTag] {
        &Self::ALL[..Self::COUNT - 1]
    }

    /// Relations that can label a non-root dependent.
    pub fn non_root() -> impl Iterator<Item = DepRelTag> {
        Self::universal()
            .iter()
            .copied()
            .filter(|r| *r != DepRelTag::Root)
    }
}

closed_vocab! {
    /// Token language. `Other` covers named entities, mixed-morphology words and
    /// punctuation.
    LanguageTag, "language", {
        L1 => "L1",
        L2 => "L2",
        Other => "OTHER",
    }
}

impl LanguageTag {
    /// The opposite contributing language; `Other` stays `Other`.
    pub fn flipped(self) -> Self {
        match self {
            LanguageTag::L1 => LanguageTag::L2,
            LanguageTag::L2 => LanguageTag::L1,
            LanguageTag::Other => LanguageTag::Other,
        }
    }
}
