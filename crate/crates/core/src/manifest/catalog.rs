use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use super::naming::canonical;
use super::topology::HardwareTopology;
use super::ManifestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShareLevel {
    L2,
    L3,
}

/// `I` is the defining side of a pattern, `O` the observing side. `IO`
/// means this pattern's defining side meets the member's observing side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SidePair {
    II,
    IO,
    OI,
    OO,
}

impl SidePair {
    pub const ALL: [SidePair; 4] = [SidePair::II, SidePair::IO, SidePair::OI, SidePair::OO];

    pub fn reversed(self) -> SidePair {
        match self {
            SidePair::IO => SidePair::OI,
            SidePair::OI => SidePair::IO,
            other => other,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            SidePair::II => "II",
            SidePair::IO => "IO",
            SidePair::OI => "OI",
            SidePair::OO => "OO",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ShareKey {
    pub level: ShareLevel,
    pub pair: SidePair,
}

impl ShareKey {
    pub fn all() -> impl Iterator<Item = ShareKey> {
        [ShareLevel::L2, ShareLevel::L3]
            .into_iter()
            .flat_map(|level| SidePair::ALL.into_iter().map(move |pair| ShareKey { level, pair }))
    }

    pub fn element_name(self) -> String {
        let lvl = match self.level {
            ShareLevel::L2 => "L2",
            ShareLevel::L3 => "L3",
        };
        format!("shares_{lvl}_{}_with", self.pair.as_str())
    }

    fn from_element(name: &str) -> Option<ShareKey> {
        ShareKey::all().find(|k| k.element_name() == name)
    }
}

/// An allowed movement of a buffer from its defining memory to its
/// observing memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub name: String,
    pub defining_memory: String,
    pub observing_memory: String,
    pub exclusive_define_with: Vec<String>,
    pub shares: BTreeMap<ShareKey, Vec<String>>,
    pub can_observe: Vec<String>,
}

impl Pattern {
    pub fn new(name: &str, defining: &str, observing: &str) -> Self {
        Self {
            name: name.to_string(),
            defining_memory: defining.to_string(),
            observing_memory: observing.to_string(),
            exclusive_define_with: Vec::new(),
            shares: ShareKey::all().map(|k| (k, Vec::new())).collect(),
            can_observe: Vec::new(),
        }
    }

    pub fn share_set(&self, key: ShareKey) -> &[String] {
        self.shares.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every name this pattern refers to.
    pub fn members(&self) -> impl Iterator<Item = &String> {
        self.exclusive_define_with
            .iter()
            .chain(self.shares.values().flatten())
            .chain(self.can_observe.iter())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatternCatalog {
    patterns: Vec<Pattern>,
    index: HashMap<String, usize>,
}

impl PatternCatalog {
    /// Builds a catalog, rejecting duplicate names. Member references are
    /// not checked; see [`PatternCatalog::check_references`].
    pub fn new(patterns: Vec<Pattern>) -> Result<Self, ManifestError> {
        let mut index = HashMap::new();
        for (i, p) in patterns.iter().enumerate() {
            if index.insert(canonical(&p.name), i).is_some() {
                return Err(ManifestError::DuplicatePattern(p.name.clone()));
            }
        }
        Ok(Self { patterns, index })
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn get(&self, i: usize) -> &Pattern {
        &self.patterns[i]
    }

    pub fn resolve(&self, name: &str) -> Option<usize> {
        self.index.get(&canonical(name)).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Pattern> {
        self.resolve(name).map(|i| &self.patterns[i])
    }

    pub fn check_references(&self) -> Result<(), ManifestError> {
        for p in &self.patterns {
            for m in p.members() {
                if self.resolve(m).is_none() {
                    return Err(ManifestError::DanglingMember {
                        pattern: p.name.clone(),
                        member: m.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn check_memories(&self, topo: &HardwareTopology) -> Result<(), ManifestError> {
        for p in &self.patterns {
            for m in [&p.defining_memory, &p.observing_memory] {
                if topo.memory(m).is_none() {
                    return Err(ManifestError::MissingMemory {
                        pattern: p.name.clone(),
                        memory: m.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// True when transfers using `a` and `b` must not overlap in time:
    /// either lists the other as exclusive-define or in any sharing set.
    pub fn conflicts(&self, a: usize, b: usize) -> bool {
        let lists = |x: usize, y: usize| {
            let p = &self.patterns[x];
            p.exclusive_define_with
                .iter()
                .chain(p.shares.values().flatten())
                .any(|m| self.resolve(m) == Some(y))
        };
        lists(a, b) || lists(b, a)
    }

    pub fn to_xml(&self) -> String {
        let mut out = String::from("<patterns>\n");
        for p in &self.patterns {
            write_pattern(&mut out, p);
        }
        out.push_str("</patterns>\n");
        out
    }
}

fn write_set(out: &mut String, tag: &str, members: &[String]) {
    if members.is_empty() {
        writeln!(out, "    <{tag}/>").unwrap();
        return;
    }
    writeln!(out, "    <{tag}>").unwrap();
    for m in members {
        writeln!(out, "      <member>{m}</member>").unwrap();
    }
    writeln!(out, "    </{tag}>").unwrap();
}

fn write_pattern(out: &mut String, p: &Pattern) {
    writeln!(out, "  <pattern name=\"{}\">", p.name).unwrap();
    writeln!(out, "    <defining_memory>{}</defining_memory>", p.defining_memory).unwrap();
    writeln!(out, "    <observing_memory>{}</observing_memory>", p.observing_memory).unwrap();
    write_set(out, "exclusive_define_with", &p.exclusive_define_with);
    for k in ShareKey::all() {
        write_set(out, &k.element_name(), p.share_set(k));
    }
    write_set(out, "can_observe", &p.can_observe);
    out.push_str("  </pattern>\n");
}

/// Parses `<pattern>` elements without resolving member references. The
/// document root may be a single `<pattern>` or any element wrapping them.
/// A text node consisting of `...` marks elided members and is skipped.
pub fn parse_patterns(text: &str) -> Result<Vec<Pattern>, ManifestError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| ManifestError::Xml(e.to_string()))?;
    let root = doc.root_element();
    let elems: Vec<roxmltree::Node> = if root.has_tag_name("pattern") {
        vec![root]
    } else {
        let mut v = Vec::new();
        for child in root.children() {
            if child.is_element() {
                if !child.has_tag_name("pattern") {
                    return Err(xml_err(
                        &doc,
                        child,
                        format!("unexpected element <{}>", child.tag_name().name()),
                    ));
                }
                v.push(child);
            } else if child.is_text() && !blank_or_elided(child.text().unwrap_or("")) {
                return Err(xml_err(&doc, child, "unexpected text between patterns".into()));
            }
        }
        v
    };
    elems.into_iter().map(|e| parse_one(&doc, e)).collect()
}

fn blank_or_elided(t: &str) -> bool {
    let t = t.trim();
    t.is_empty() || t == "..."
}

fn xml_err(doc: &roxmltree::Document, n: roxmltree::Node, msg: String) -> ManifestError {
    let pos = doc.text_pos_at(n.range().start);
    ManifestError::Xml(format!("{}:{}: {msg}", pos.row, pos.col))
}

fn text_of(doc: &roxmltree::Document, n: roxmltree::Node) -> Result<String, ManifestError> {
    let t = n.text().unwrap_or("").trim().to_string();
    if t.is_empty() {
        return Err(xml_err(doc, n, format!("<{}> is empty", n.tag_name().name())));
    }
    Ok(t)
}

fn members(doc: &roxmltree::Document, n: roxmltree::Node) -> Result<Vec<String>, ManifestError> {
    let mut out = Vec::new();
    for c in n.children() {
        if c.is_element() {
            if !c.has_tag_name("member") {
                return Err(xml_err(
                    doc,
                    c,
                    format!("expected <member>, found <{}>", c.tag_name().name()),
                ));
            }
            out.push(text_of(doc, c)?);
        } else if c.is_text() && !blank_or_elided(c.text().unwrap_or("")) {
            return Err(xml_err(doc, c, "unexpected text in member list".into()));
        }
    }
    Ok(out)
}

fn parse_one(doc: &roxmltree::Document, e: roxmltree::Node) -> Result<Pattern, ManifestError> {
    let name = e
        .attribute("name")
        .ok_or_else(|| xml_err(doc, e, "<pattern> without a name attribute".into()))?;
    let mut defining = None;
    let mut observing = None;
    let mut p = Pattern::new(name, "", "");
    for c in e.children().filter(|c| c.is_element()) {
        let tag = c.tag_name().name();
        match tag {
            "defining_memory" => defining = Some(text_of(doc, c)?),
            "observing_memory" => observing = Some(text_of(doc, c)?),
            "exclusive_define_with" => p.exclusive_define_with = members(doc, c)?,
            "can_observe" => p.can_observe = members(doc, c)?,
            _ => match ShareKey::from_element(tag) {
                Some(k) => {
                    p.shares.insert(k, members(doc, c)?);
                }
                None => return Err(xml_err(doc, c, format!("unknown element <{tag}> in pattern `{name}`"))),
            },
        }
    }
    p.defining_memory = defining.ok_or_else(|| ManifestError::MissingAnchor {
        pattern: name.to_string(),
        anchor: "defining_memory",
    })?;
    p.observing_memory = observing.ok_or_else(|| ManifestError::MissingAnchor {
        pattern: name.to_string(),
        anchor: "observing_memory",
    })?;
    Ok(p)
}

/// Parses a catalog and validates all member references against it.
pub fn parse_pattern_catalog(text: &str) -> Result<PatternCatalog, ManifestError> {
    let cat = PatternCatalog::new(parse_patterns(text)?)?;
    cat.check_references()?;
    Ok(cat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_catalog() {
        let c = parse_pattern_catalog("<patterns/>").unwrap();
        assert!(c.is_empty());
        let c = parse_pattern_catalog("<patterns>\n</patterns>").unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn dangling_member() {
        let x = r#"<patterns><pattern name="a"><defining_memory>L3_0</defining_memory>
            <observing_memory>L3_0</observing_memory>
            <exclusive_define_with><member>ghost</member></exclusive_define_with>
            </pattern></patterns>"#;
        match parse_pattern_catalog(x) {
            Err(ManifestError::DanglingMember { member, .. }) => assert_eq!(member, "ghost"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_name_modulo_separators() {
        let x = r#"<patterns>
            <pattern name="pipeline.c.0.L3.0"><defining_memory>L2_0</defining_memory><observing_memory>L2_0</observing_memory></pattern>
            <pattern name="pipeline.c_0.L3_0"><defining_memory>L2_0</defining_memory><observing_memory>L2_0</observing_memory></pattern>
            </patterns>"#;
        assert!(matches!(
            parse_pattern_catalog(x),
            Err(ManifestError::DuplicatePattern(_))
        ));
    }

    #[test]
    fn missing_anchor() {
        let x = r#"<pattern name="a"><observing_memory>L3_0</observing_memory></pattern>"#;
        assert!(matches!(
            parse_pattern_catalog(x),
            Err(ManifestError::MissingAnchor {
                anchor: "defining_memory",
                ..
            })
        ));
    }

    #[test]
    fn xml_round_trip() {
        let mut a = Pattern::new("pipeline.c_0.L3_0", "L2_0", "L2_0");
        let b = Pattern::new("L2toL2.c_0.L3_0.accL3_0", "L2_0", "L3_0");
        a.exclusive_define_with = vec![a.name.clone(), b.name.clone()];
        a.shares.insert(
            ShareKey {
                level: ShareLevel::L2,
                pair: SidePair::II,
            },
            vec![b.name.clone()],
        );
        let cat = PatternCatalog::new(vec![a, b]).unwrap();
        let back = parse_pattern_catalog(&cat.to_xml()).unwrap();
        assert_eq!(back, cat);
        assert!(back.conflicts(0, 1) && back.conflicts(1, 0));
        assert!(!back.conflicts(1, 1));
    }
}
