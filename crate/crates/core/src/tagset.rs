//! The 31-tag universe of discursive moves and per-utterance label sets.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

/// Number of tags in the universe.
pub const NUM_TAGS: usize = 31;

/// Discourse category a tag belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Promoting,
    LowResponsiveness,
    ToneNegative,
    TonePositive,
    DisagreeEasing,
    DisagreeIntensifying,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Promoting,
        Category::LowResponsiveness,
        Category::ToneNegative,
        Category::TonePositive,
        Category::DisagreeEasing,
        Category::DisagreeIntensifying,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Promoting => "Promoting",
            Category::LowResponsiveness => "LowResponsiveness",
            Category::ToneNegative => "ToneNegative",
            Category::TonePositive => "TonePositive",
            Category::DisagreeEasing => "DisagreeEasing",
            Category::DisagreeIntensifying => "DisagreeIntensifying",
        }
    }

    /// Tags of this category in canonical order.
    pub fn tags(self) -> impl Iterator<Item = Tag> {
        Tag::all().filter(move |t| t.category() == self)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const TAGS: [(&str, Category); NUM_TAGS] = [
    ("Moderation", Category::Promoting),
    ("RequestClarification", Category::Promoting),
    ("AttackValidity", Category::Promoting),
    ("Clarification", Category::Promoting),
    ("Answer", Category::Promoting),
    ("CounterArgument", Category::Promoting),
    ("Extension", Category::Promoting),
    ("ViableTransformation", Category::Promoting),
    ("Personal", Category::Promoting),
    ("BAD", Category::LowResponsiveness),
    ("Repetition", Category::LowResponsiveness),
    ("NegTransformation", Category::LowResponsiveness),
    ("NoReasonDisagreement", Category::LowResponsiveness),
    ("Convergence", Category::LowResponsiveness),
    ("AgreeToDisagree", Category::LowResponsiveness),
    ("Aggressive", Category::ToneNegative),
    ("Ridicule", Category::ToneNegative),
    ("Complaint", Category::ToneNegative),
    ("Sarcasm", Category::ToneNegative),
    ("Positive", Category::TonePositive),
    ("WQualifiers", Category::TonePositive),
    ("Softening", Category::DisagreeEasing),
    ("AgreeBut", Category::DisagreeEasing),
    ("DoubleVoicing", Category::DisagreeEasing),
    ("Sources", Category::DisagreeEasing),
    ("RephraseAttack", Category::DisagreeIntensifying),
    ("CriticalQuestion", Category::DisagreeIntensifying),
    ("Alternative", Category::DisagreeIntensifying),
    ("DirectNo", Category::DisagreeIntensifying),
    ("Irrelevance", Category::DisagreeIntensifying),
    ("Nitpicking", Category::DisagreeIntensifying),
];

/// One tag of the universe, stored as its canonical index.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag(u8);

impl Tag {
    /// All tags in canonical order.
    pub fn all() -> impl Iterator<Item = Tag> + Clone {
        (0..NUM_TAGS as u8).map(Tag)
    }

    pub fn from_index(index: usize) -> Option<Tag> {
        (index < NUM_TAGS).then_some(Tag(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        TAGS[self.index()].0
    }

    pub fn category(self) -> Category {
        TAGS[self.index()].1
    }

    /// Look up a tag by name. Accepts the canonical spelling and the
    /// "Convergence Agreement" alias, ignoring case and inner whitespace.
    pub fn from_name(name: &str) -> Option<Tag> {
        let squashed: String = name
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .collect();
        if squashed.eq_ignore_ascii_case("ConvergenceAgreement") {
            return Tag::from_index(13);
        }
        TAGS.iter()
            .position(|(n, _)| n.eq_ignore_ascii_case(&squashed))
            .map(|i| Tag(i as u8))
    }
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown tag `{0}`")]
pub struct UnknownTag(pub String);

impl FromStr for Tag {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tag::from_name(s).ok_or_else(|| UnknownTag(s.to_owned()))
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Tag::from_name(&name).ok_or_else(|| de::Error::custom(UnknownTag(name)))
    }
}

/// An unordered subset of the tag universe.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(u32);

impl LabelSet {
    pub const fn empty() -> Self {
        LabelSet(0)
    }

    pub fn full() -> Self {
        LabelSet((1u32 << NUM_TAGS) - 1)
    }

    pub fn insert(&mut self, tag: Tag) -> bool {
        let had = self.contains(tag);
        self.0 |= 1 << tag.0;
        !had
    }

    pub fn remove(&mut self, tag: Tag) -> bool {
        let had = self.contains(tag);
        self.0 &= !(1 << tag.0);
        had
    }

    pub fn contains(&self, tag: Tag) -> bool {
        self.0 & (1 << tag.0) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// Tags in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = Tag> + '_ {
        let bits = self.0;
        Tag::all().filter(move |t| bits & (1 << t.0) != 0)
    }

    pub fn bits(&self) -> u32 {
        self.0
    }

    pub fn union(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 | other.0)
    }

    pub fn intersection(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & other.0)
    }

    /// Binary vector in canonical tag order.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = vec![0.0; NUM_TAGS];
        self.write_vector(&mut v);
        v
    }

    pub(crate) fn write_vector(&self, out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate().take(NUM_TAGS) {
            *slot = if self.0 & (1 << i) != 0 { 1.0 } else { 0.0 };
        }
    }

    /// Parse a list of tag names; duplicates collapse.
    pub fn from_names<I, S>(names: I) -> Result<LabelSet, UnknownTag>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = LabelSet::empty();
        for name in names {
            set.insert(name.as_ref().parse()?);
        }
        Ok(set)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.iter().map(Tag::name).collect()
    }
}

impl FromIterator<Tag> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Tag>>(iter: I) -> Self {
        let mut set = LabelSet::empty();
        for tag in iter {
            set.insert(tag);
        }
        set
    }
}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for LabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for tag in self.iter() {
            seq.serialize_element(tag.name())?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SetVisitor;

        impl<'de> Visitor<'de> for SetVisitor {
            type Value = LabelSet;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an array of tag names")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<LabelSet, A::Error> {
                let mut set = LabelSet::empty();
                while let Some(name) = seq.next_element::<String>()? {
                    let tag = Tag::from_name(&name).ok_or_else(|| de::Error::custom(UnknownTag(name)))?;
                    set.insert(tag);
                }
                Ok(set)
            }
        }

        deserializer.deserialize_seq(SetVisitor)
    }
}
