//! Minimal owned element tree over quick-xml events.
//!
//! JATS documents are small enough that building a tree is simpler than
//! streaming, and the tree lets link extraction visit text nodes and
//! attribute values in document order.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};

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
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|n| match n {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    pub fn child(&self, name: &str) -> Option<&Element> {
        self.elements().find(|e| e.name == name)
    }

    pub fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.elements().filter(move |e| e.name == name)
    }

    /// Depth-first search over descendants (not including `self`).
    pub fn find(&self, name: &str) -> Option<&Element> {
        for e in self.elements() {
            if e.name == name {
                return Some(e);
            }
            if let Some(found) = e.find(name) {
                return Some(found);
            }
        }
        None
    }

    pub fn find_all<'a>(&'a self, name: &str, out: &mut Vec<&'a Element>) {
        for e in self.elements() {
            if e.name == name {
                out.push(e);
            }
            e.find_all(name, out);
        }
    }

    /// Concatenated descendant text with whitespace runs collapsed.
    pub fn text(&self) -> String {
        let mut raw = String::new();
        self.collect_text(&mut raw);
        raw.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    fn collect_text(&self, out: &mut String) {
        for n in &self.children {
            match n {
                Node::Text(t) => out.push_str(t),
                Node::Element(e) => e.collect_text(out),
            }
        }
    }
}

fn start_element(e: &BytesStart<'_>) -> Element {
    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
    let attrs = e
        .attributes()
        .flatten()
        .map(|a| {
            let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
            let value = a
                .unescape_value()
                .map(|v| v.into_owned())
                .unwrap_or_else(|_| String::from_utf8_lossy(&a.value).into_owned());
            (key, value)
        })
        .collect();
    Element {
        name,
        attrs,
        children: Vec::new(),
    }
}

fn unescape_lenient(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        let resolved = tail.find(';').and_then(|semi| {
            let entity = &tail[..=semi];
            let decoded = match &entity[1..semi] {
                "nbsp" => Some("\u{a0}".to_string()),
                "ndash" => Some("\u{2013}".to_string()),
                "mdash" => Some("\u{2014}".to_string()),
                _ => quick_xml::escape::unescape(entity).ok().map(|c| c.into_owned()),
            };
            decoded.map(|d| (d, semi + 1))
        });
        match resolved {
            Some((text, len)) => {
                out.push_str(&text);
                rest = &tail[len..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Parses a document and returns its root element.
pub fn parse_document(xml: &str) -> Result<Element> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(false);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;

    loop {
        let offset = reader.buffer_position();
        let event = reader.read_event().map_err(|e| Error::Xml {
            offset: reader.buffer_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(e) => stack.push(start_element(&e)),
            Event::Empty(e) => {
                let el = start_element(&e);
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Element(el)),
                    None if root.is_none() => root = Some(el),
                    None => {
                        return Err(Error::Xml {
                            offset,
                            message: "multiple root elements".into(),
                        })
                    }
                }
            }
            Event::End(_) => {
                let el = stack.pop().ok_or_else(|| Error::Xml {
                    offset,
                    message: "unexpected closing tag".into(),
                })?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Element(el)),
                    None if root.is_none() => root = Some(el),
                    None => {
                        return Err(Error::Xml {
                            offset,
                            message: "multiple root elements".into(),
                        })
                    }
                }
            }
            Event::Text(t) => {
                if let Some(parent) = stack.last_mut() {
                    let raw = String::from_utf8_lossy(t.as_ref()).into_owned();
                    parent.children.push(Node::Text(unescape_lenient(&raw)));
                }
            }
            Event::CData(t) => {
                if let Some(parent) = stack.last_mut() {
                    parent
                        .children
                        .push(Node::Text(String::from_utf8_lossy(t.as_ref()).into_owned()));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }

    if let Some(open) = stack.last() {
        return Err(Error::Xml {
            offset: reader.buffer_position(),
            message: format!("unclosed element <{}>", open.name),
        });
    }
    root.ok_or_else(|| Error::Xml {
        offset: 0,
        message: "document has no root element".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_tree_with_attributes_and_text() {
        let root = parse_document(r#"<a x="1"><b>hello <i>big</i> world</b><c y="&amp;"/></a>"#).unwrap();
        assert_eq!(root.name, "a");
        assert_eq!(root.attr("x"), Some("1"));
        assert_eq!(root.child("b").unwrap().text(), "hello big world");
        assert_eq!(root.find("c").unwrap().attr("y"), Some("&"));
    }

    #[test]
    fn unclosed_tag_reports_offset() {
        let err = parse_document("<a><b>text</a>").unwrap_err();
        assert!(matches!(err, Error::Xml { .. }), "{err}");
        let err = parse_document("<a><b>text").unwrap_err();
        match err {
            Error::Xml { offset, message } => {
                assert!(message.contains("unclosed"));
                assert_eq!(offset, 10);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_entities_are_kept_verbatim() {
        let root = parse_document("<a>x&nbsp;y &foo; z</a>").unwrap();
        assert_eq!(root.text(), "x y &foo; z");
    }
}
