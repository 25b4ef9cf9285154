//! Minimal owned XML tree used by the SCL and supplement parsers.
//!
//! Whitespace-only text is dropped; comments, processing instructions and
//! the declaration are not retained. Everything else round-trips.

use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("malformed XML at byte {position}: {message}")]
pub struct XmlError {
    pub position: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Element(Element),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Node>,
}

impl Element {
    pub fn new(name: impl Into<String>) -> Self {
        Element {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn with_attr(mut self, key: &str, value: impl ToString) -> Self {
        self.set_attr(key, value);
        self
    }

    pub fn with_child(mut self, child: Element) -> Self {
        self.children.push(Node::Element(child));
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.children.push(Node::Text(text.into()));
        self
    }

    pub fn set_attr(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.attrs.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.attrs.push((key.to_string(), value)),
        }
    }

    pub fn push(&mut self, child: Element) {
        self.children.push(Node::Element(child));
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Local part of the element name (namespace prefix stripped).
    pub fn local_name(&self) -> &str {
        local(&self.name)
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|n| match n {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    pub fn elements_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.elements().filter(move |e| e.local_name() == name)
    }

    pub fn first(&self, name: &str) -> Option<&Element> {
        self.elements().find(|e| e.local_name() == name)
    }

    /// Concatenated, trimmed text content of direct text children.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for n in &self.children {
            if let Node::Text(t) = n {
                out.push_str(t);
            }
        }
        out.trim().to_string()
    }

    pub fn to_xml(&self) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        self.write_into(&mut out, 0);
        out
    }

    fn write_into(&self, out: &mut String, depth: usize) {
        let indent = "  ".repeat(depth);
        let _ = write!(out, "{indent}<{}", self.name);
        for (k, v) in &self.attrs {
            let _ = write!(out, " {k}=\"{}\"", quick_xml::escape::escape(v.as_str()));
        }
        if self.children.is_empty() {
            out.push_str("/>\n");
            return;
        }
        let only_text = self.children.iter().all(|n| matches!(n, Node::Text(_)));
        if only_text {
            out.push('>');
            for n in &self.children {
                if let Node::Text(t) = n {
                    out.push_str(&quick_xml::escape::escape(t.as_str()));
                }
            }
            let _ = writeln!(out, "</{}>", self.name);
            return;
        }
        out.push_str(">\n");
        for n in &self.children {
            match n {
                Node::Element(e) => e.write_into(out, depth + 1),
                Node::Text(t) => {
                    let _ = writeln!(
                        out,
                        "{indent}  {}",
                        quick_xml::escape::escape(t.as_str())
                    );
                }
            }
        }
        let _ = writeln!(out, "{indent}</{}>", self.name);
    }
}

pub fn local(name: &str) -> &str {
    name.rsplit(':').next().unwrap_or(name)
}

fn start_element(e: &BytesStart<'_>, position: u64) -> Result<Element, XmlError> {
    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
    let mut el = Element::new(name);
    for attr in e.attributes() {
        let attr = attr.map_err(|err| XmlError {
            position,
            message: err.to_string(),
        })?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr
            .unescape_value()
            .map_err(|err| XmlError {
                position,
                message: err.to_string(),
            })?
            .into_owned();
        if el.attr(&key).is_some() {
            return Err(XmlError {
                position,
                message: format!("duplicate attribute `{key}`"),
            });
        }
        el.attrs.push((key, value));
    }
    Ok(el)
}

/// Parse a complete document and return its root element.
pub fn parse(text: &str) -> Result<Element, XmlError> {
    let mut reader = Reader::from_str(text);
    let cfg = reader.config_mut();
    cfg.check_end_names = true;

    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    loop {
        let position = reader.buffer_position();
        let event = reader.read_event().map_err(|err| XmlError {
            position,
            message: err.to_string(),
        })?;
        match event {
            Event::Start(e) => {
                if root.is_some() {
                    return Err(XmlError {
                        position,
                        message: "content after the root element".into(),
                    });
                }
                stack.push(start_element(&e, position)?);
            }
            Event::Empty(e) => {
                let el = start_element(&e, position)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Element(el)),
                    None if root.is_none() => root = Some(el),
                    None => {
                        return Err(XmlError {
                            position,
                            message: "multiple root elements".into(),
                        })
                    }
                }
            }
            Event::End(_) => {
                let el = stack.pop().ok_or_else(|| XmlError {
                    position,
                    message: "unbalanced end tag".into(),
                })?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Element(el)),
                    None => root = Some(el),
                }
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|err| XmlError {
                    position,
                    message: err.to_string(),
                })?;
                if s.trim().is_empty() {
                    continue;
                }
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Text(s.into_owned())),
                    None => {
                        return Err(XmlError {
                            position,
                            message: "text outside the root element".into(),
                        })
                    }
                }
            }
            Event::CData(t) => {
                let s = String::from_utf8_lossy(&t).into_owned();
                if let Some(parent) = stack.last_mut() {
                    parent.children.push(Node::Text(s));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(XmlError {
            position: reader.buffer_position(),
            message: format!("unclosed element `{}`", stack.last().unwrap().name),
        });
    }
    root.ok_or_else(|| XmlError {
        position: 0,
        message: "document has no root element".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_and_empty_elements() {
        let root = parse(r#"<?xml version="1.0"?><a x="1"><b/><c>hi &amp; bye</c></a>"#).unwrap();
        assert_eq!(root.name, "a");
        assert_eq!(root.attr("x"), Some("1"));
        assert_eq!(root.elements().count(), 2);
        assert_eq!(root.first("c").unwrap().text(), "hi & bye");
    }

    #[test]
    fn rejects_mismatched_tags() {
        assert!(parse("<a><b></a>").is_err());
        assert!(parse("<a>").is_err());
        assert!(parse("").is_err());
        assert!(parse("<a/><b/>").is_err());
    }

    #[test]
    fn serialization_reparses_to_same_tree() {
        let src = r#"<SCL xmlns="http://www.iec.ch/61850/2003/SCL"><Header id="h" version="1"/><Private type="x">a&lt;b</Private></SCL>"#;
        let tree = parse(src).unwrap();
        assert_eq!(parse(&tree.to_xml()).unwrap(), tree);
    }

    #[test]
    fn local_name_strips_prefix() {
        let root = parse(r#"<scl:SCL xmlns:scl="urn:x"/>"#).unwrap();
        assert_eq!(root.local_name(), "SCL");
    }
}
