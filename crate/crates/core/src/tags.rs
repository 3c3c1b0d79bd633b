//! The fixed issue-tag vocabulary and a compact set type over it.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of issue tags in the taxonomy.
pub const TAG_COUNT: usize = 19;

/// One of the 19 issue tags, in canonical (alphabetical) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IssueTag {
    ThirdParty,
    AbuseEmotional,
    AbusePhysical,
    AbuseSexual,
    AnxietyStress,
    Bully,
    Depressed,
    Dne,
    EatingBodyImage,
    GenderSexualIdentity,
    Grief,
    Isolated,
    Other,
    Prank,
    Relationship,
    SelfHarm,
    SubstanceAbuse,
    Suicide,
    Testing,
}

impl IssueTag {
    pub const ALL: [IssueTag; TAG_COUNT] = [
        IssueTag::ThirdParty,
        IssueTag::AbuseEmotional,
        IssueTag::AbusePhysical,
        IssueTag::AbuseSexual,
        IssueTag::AnxietyStress,
        IssueTag::Bully,
        IssueTag::Depressed,
        IssueTag::Dne,
        IssueTag::EatingBodyImage,
        IssueTag::GenderSexualIdentity,
        IssueTag::Grief,
        IssueTag::Isolated,
        IssueTag::Other,
        IssueTag::Prank,
        IssueTag::Relationship,
        IssueTag::SelfHarm,
        IssueTag::SubstanceAbuse,
        IssueTag::Suicide,
        IssueTag::Testing,
    ];

    /// Position in the canonical ordering; every per-tag vector uses it.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<IssueTag> {
        Self::ALL.get(index).copied()
    }

    pub fn display_name(self) -> &'static str {
        match self {
            IssueTag::ThirdParty => "3rd Party",
            IssueTag::AbuseEmotional => "Abuse, Emotional",
            IssueTag::AbusePhysical => "Abuse, Physical",
            IssueTag::AbuseSexual => "Abuse, Sexual",
            IssueTag::AnxietyStress => "Anxiety/Stress",
            IssueTag::Bully => "Bully",
            IssueTag::Depressed => "Depressed",
            IssueTag::Dne => "DNE",
            IssueTag::EatingBodyImage => "Eating Body Image",
            IssueTag::GenderSexualIdentity => "Gender/Sexual Identity",
            IssueTag::Grief => "Grief",
            IssueTag::Isolated => "Isolated",
            IssueTag::Other => "Other",
            IssueTag::Prank => "Prank",
            IssueTag::Relationship => "Relationship",
            IssueTag::SelfHarm => "Self Harm",
            IssueTag::SubstanceAbuse => "Substance Abuse",
            IssueTag::Suicide => "Suicide",
            IssueTag::Testing => "Testing",
        }
    }

    /// Exact, case-sensitive lookup by display name.
    pub fn from_display_name(name: &str) -> Option<IssueTag> {
        Self::ALL.iter().copied().find(|t| t.display_name() == name)
    }
}

impl fmt::Display for IssueTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown tag {0:?}")]
pub struct UnknownTag(pub String);

impl FromStr for IssueTag {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IssueTag::from_display_name(s).ok_or_else(|| UnknownTag(s.to_string()))
    }
}

impl Serialize for IssueTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.display_name())
    }
}

impl<'de> Deserialize<'de> for IssueTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        name.parse().map_err(de::Error::custom)
    }
}

/// A set of issue tags stored as a 19-bit mask. Iteration follows canonical order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagSet(u32);

impl TagSet {
    const MASK: u32 = (1 << TAG_COUNT) - 1;

    pub const fn empty() -> Self {
        TagSet(0)
    }

    pub const fn all() -> Self {
        TagSet(Self::MASK)
    }

    pub fn from_bits(bits: u32) -> Self {
        TagSet(bits & Self::MASK)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn insert(&mut self, tag: IssueTag) -> bool {
        let had = self.contains(tag);
        self.0 |= 1 << tag.index();
        !had
    }

    pub fn remove(&mut self, tag: IssueTag) -> bool {
        let had = self.contains(tag);
        self.0 &= !(1 << tag.index());
        had
    }

    pub fn contains(self, tag: IssueTag) -> bool {
        self.0 & (1 << tag.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: TagSet) -> TagSet {
        TagSet(self.0 | other.0)
    }

    pub fn intersection(self, other: TagSet) -> TagSet {
        TagSet(self.0 & other.0)
    }

    pub fn difference(self, other: TagSet) -> TagSet {
        TagSet(self.0 & !other.0)
    }

    pub fn complement(self) -> TagSet {
        TagSet(!self.0 & Self::MASK)
    }

    pub fn is_subset(self, other: TagSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: TagSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = IssueTag> {
        IssueTag::ALL.into_iter().filter(move |t| self.contains(*t))
    }
}

impl FromIterator<IssueTag> for TagSet {
    fn from_iter<I: IntoIterator<Item = IssueTag>>(iter: I) -> Self {
        let mut set = TagSet::empty();
        for tag in iter {
            set.insert(tag);
        }
        set
    }
}

impl<const N: usize> From<[IssueTag; N]> for TagSet {
    fn from(tags: [IssueTag; N]) -> Self {
        tags.into_iter().collect()
    }
}

impl fmt::Display for TagSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(IssueTag::display_name).collect();
        write!(f, "{{{}}}", names.join("; "))
    }
}

impl Serialize for TagSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for tag in self.iter() {
            seq.serialize_element(&tag)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for TagSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct TagSetVisitor;

        impl<'de> Visitor<'de> for TagSetVisitor {
            type Value = TagSet;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an array of issue-tag display names")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<TagSet, A::Error> {
                let mut set = TagSet::empty();
                while let Some(tag) = seq.next_element::<IssueTag>()? {
                    set.insert(tag);
                }
                Ok(set)
            }
        }

        deserializer.deserialize_seq(TagSetVisitor)
    }
}
