use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LnClass;

/// Dotted reference `IED.LN.DO[.DA...]` into an IED data model,
/// e.g. `IED2.MMXU1.PhV.phsA.cVal`.
///
/// The LN segment is `[prefix]CLASS[instance]`; a missing instance means
/// "lowest instance of that class".
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AttributePath(String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LnSegment {
    pub prefix: String,
    pub class: LnClass,
    pub instance: Option<u32>,
}

impl LnSegment {
    pub fn parse(seg: &str) -> LnSegment {
        let digits = seg.len() - seg.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (head, inst) = seg.split_at(seg.len() - digits);
        let instance = if inst.is_empty() {
            None
        } else {
            inst.parse().ok()
        };
        let (prefix, class) = if head.len() > 4 && head.is_char_boundary(head.len() - 4) {
            head.split_at(head.len() - 4)
        } else {
            ("", head)
        };
        LnSegment {
            prefix: prefix.to_string(),
            class: LnClass::from(class),
            instance,
        }
    }
}

impl AttributePath {
    pub fn new(s: impl Into<String>) -> Result<Self, String> {
        let s = s.into();
        let segments: Vec<&str> = s.split('.').collect();
        if segments.len() < 3 || segments.iter().any(|p| p.is_empty()) {
            return Err(format!(
                "attribute path `{s}` needs at least IED.LN.DO segments"
            ));
        }
        Ok(AttributePath(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }

    pub fn ied(&self) -> &str {
        self.segments().next().unwrap()
    }

    pub fn ln(&self) -> LnSegment {
        LnSegment::parse(self.segments().nth(1).unwrap())
    }

    pub fn do_name(&self) -> &str {
        self.segments().nth(2).unwrap()
    }

    /// Everything after the DO segment (may be empty).
    pub fn da_path(&self) -> Vec<&str> {
        self.segments().skip(3).collect()
    }

    /// True when `self` equals `other` or is a dotted prefix of it.
    pub fn is_prefix_of(&self, other: &str) -> bool {
        other == self.0 || (other.starts_with(&self.0) && other[self.0.len()..].starts_with('.'))
    }
}

impl fmt::Display for AttributePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for AttributePath {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttributePath::new(s)
    }
}

impl TryFrom<String> for AttributePath {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        AttributePath::new(s)
    }
}

impl From<AttributePath> for String {
    fn from(p: AttributePath) -> String {
        p.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_segments() {
        let p: AttributePath = "IED2.MMXU1.PhV.phsA.cVal".parse().unwrap();
        assert_eq!(p.ied(), "IED2");
        assert_eq!(p.ln().class, LnClass::Mmxu);
        assert_eq!(p.ln().instance, Some(1));
        assert_eq!(p.do_name(), "PhV");
        assert_eq!(p.da_path(), vec!["phsA", "cVal"]);
    }

    #[test]
    fn ln_without_instance_or_with_prefix() {
        let seg = LnSegment::parse("MMXU");
        assert_eq!(seg.instance, None);
        let seg = LnSegment::parse("FdrPTOC12");
        assert_eq!(seg.prefix, "Fdr");
        assert_eq!(seg.class, LnClass::Ptoc);
        assert_eq!(seg.instance, Some(12));
    }

    #[test]
    fn rejects_short_paths() {
        assert!(AttributePath::new("IED1.MMXU1").is_err());
        assert!(AttributePath::new("IED1..PhV").is_err());
    }

    #[test]
    fn prefix_relation() {
        let p = AttributePath::new("A.XCBR1.Pos").unwrap();
        assert!(p.is_prefix_of("A.XCBR1.Pos.stVal"));
        assert!(!p.is_prefix_of("A.XCBR1.PosX"));
    }
}
