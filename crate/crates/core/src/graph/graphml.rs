//! GraphML 1.0 persistence for [`CadGraph`].
//!
//! Node data keys: `instance_id` (int), `type` (string), `attrs` (string,
//! a JSON array of Part 21 literals). Graph data keys: `source_path`,
//! `label`. Parallel edges are written as repeated `<edge>` elements.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, BytesText, Event};
use quick_xml::{Reader, Writer};

use super::{CadGraph, GraphError, GraphNode};

const NS: &str = "http://graphml.graphdrawing.org/xmlns";

fn xml_err(e: impl std::fmt::Display) -> GraphError {
    GraphError::MalformedGraphml(e.to_string())
}

fn data<W: Write>(w: &mut Writer<W>, key: &str, value: &str) -> std::io::Result<()> {
    w.create_element("data")
        .with_attribute(("key", key))
        .write_text_content(BytesText::new(value))?;
    Ok(())
}

pub fn write_graphml<W: Write>(graph: &CadGraph, sink: W) -> Result<(), GraphError> {
    let mut w = Writer::new_with_indent(sink, b' ', 2);
    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))?;
    w.write_event(Event::Start(
        BytesStart::new("graphml").with_attributes([("xmlns", NS)]),
    ))?;
    for (id, domain, ty) in [
        ("source_path", "graph", "string"),
        ("label", "graph", "int"),
        ("instance_id", "node", "int"),
        ("type", "node", "string"),
        ("attrs", "node", "string"),
    ] {
        w.write_event(Event::Empty(BytesStart::new("key").with_attributes([
            ("id", id),
            ("for", domain),
            ("attr.name", id),
            ("attr.type", ty),
        ])))?;
    }
    w.write_event(Event::Start(
        BytesStart::new("graph").with_attributes([("id", "G"), ("edgedefault", "directed")]),
    ))?;
    data(&mut w, "source_path", &graph.source_path)?;
    if let Some(label) = graph.label {
        data(&mut w, "label", &label.to_string())?;
    }
    for (i, node) in graph.nodes.iter().enumerate() {
        let id = format!("n{i}");
        w.write_event(Event::Start(
            BytesStart::new("node").with_attributes([("id", id.as_str())]),
        ))?;
        data(&mut w, "instance_id", &node.instance_id.to_string())?;
        data(&mut w, "type", &node.type_token)?;
        data(
            &mut w,
            "attrs",
            &serde_json::to_string(&node.attrs).expect("string list serializes"),
        )?;
        w.write_event(Event::End(BytesEnd::new("node")))?;
    }
    for (s, t) in &graph.edges {
        let (s, t) = (format!("n{s}"), format!("n{t}"));
        w.write_event(Event::Empty(
            BytesStart::new("edge").with_attributes([("source", s.as_str()), ("target", t.as_str())]),
        ))?;
    }
    w.write_event(Event::End(BytesEnd::new("graph")))?;
    w.write_event(Event::End(BytesEnd::new("graphml")))?;
    w.into_inner().write_all(b"\n")?;
    Ok(())
}

fn attr(e: &BytesStart<'_>, key: &[u8]) -> Result<Option<String>, GraphError> {
    for a in e.attributes() {
        let a = a.map_err(xml_err)?;
        if a.key.as_ref() == key {
            return Ok(Some(a.unescape_value().map_err(xml_err)?.into_owned()));
        }
    }
    Ok(None)
}

#[derive(Default)]
struct PartialNode {
    instance_id: Option<u64>,
    type_token: Option<String>,
    attrs: Vec<String>,
}

pub fn read_graphml(source: &str) -> Result<CadGraph, GraphError> {
    let mut reader = Reader::from_str(source);

    let mut graph = CadGraph::default();
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut pending_edges: Vec<(String, String)> = Vec::new();
    let mut current: Option<PartialNode> = None;
    let mut data_key: Option<String> = None;
    let mut text = String::new();
    let mut saw_graph = false;

    loop {
        match reader.read_event().map_err(xml_err)? {
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"graph" => {
                saw_graph = true;
            }
            Event::Start(e) if e.name().as_ref() == b"node" => {
                if current.is_some() {
                    return Err(xml_err("nested <node>"));
                }
                let id = attr(&e, b"id")?.ok_or_else(|| xml_err("node without id"))?;
                if ids.insert(id.clone(), graph.nodes.len()).is_some() {
                    return Err(xml_err(format!("duplicate node id {id}")));
                }
                current = Some(PartialNode::default());
            }
            Event::Empty(e) if e.name().as_ref() == b"node" => {
                return Err(xml_err("node without instance data"));
            }
            Event::End(e) if e.name().as_ref() == b"node" => {
                let node = current.take().ok_or_else(|| xml_err("unbalanced </node>"))?;
                graph.nodes.push(GraphNode {
                    instance_id: node
                        .instance_id
                        .ok_or_else(|| xml_err("node missing instance_id"))?,
                    type_token: node.type_token.ok_or_else(|| xml_err("node missing type"))?,
                    attrs: node.attrs,
                });
            }
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"edge" => {
                let s = attr(&e, b"source")?.ok_or_else(|| xml_err("edge without source"))?;
                let t = attr(&e, b"target")?.ok_or_else(|| xml_err("edge without target"))?;
                pending_edges.push((s, t));
            }
            Event::Start(e) if e.name().as_ref() == b"data" => {
                data_key = Some(attr(&e, b"key")?.ok_or_else(|| xml_err("data without key"))?);
                text.clear();
            }
            Event::Empty(e) if e.name().as_ref() == b"data" => {
                let key = attr(&e, b"key")?.ok_or_else(|| xml_err("data without key"))?;
                apply_data(&mut graph, current.as_mut(), &key, "")?;
            }
            Event::Text(t) if data_key.is_some() => {
                text.push_str(&t.unescape().map_err(xml_err)?);
            }
            Event::End(e) if e.name().as_ref() == b"data" => {
                let key = data_key.take().ok_or_else(|| xml_err("unbalanced </data>"))?;
                apply_data(&mut graph, current.as_mut(), &key, &text)?;
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if current.is_some() {
        return Err(xml_err("unterminated <node>"));
    }
    if !saw_graph {
        return Err(xml_err("no <graph> element"));
    }
    for (s, t) in pending_edges {
        let resolve = |id: &str| {
            ids.get(id)
                .copied()
                .ok_or_else(|| xml_err(format!("edge endpoint {id} is not a node")))
        };
        graph.edges.push((resolve(&s)?, resolve(&t)?));
    }
    Ok(graph)
}

fn apply_data(
    graph: &mut CadGraph,
    node: Option<&mut PartialNode>,
    key: &str,
    value: &str,
) -> Result<(), GraphError> {
    match (node, key) {
        (Some(n), "instance_id") => {
            n.instance_id = Some(value.trim().parse().map_err(xml_err)?);
        }
        (Some(n), "type") => n.type_token = Some(value.to_string()),
        (Some(n), "attrs") => n.attrs = serde_json::from_str(value).map_err(xml_err)?,
        (None, "source_path") => graph.source_path = value.to_string(),
        (None, "label") => graph.label = Some(value.trim().parse().map_err(xml_err)?),
        _ => {}
    }
    Ok(())
}

pub fn export_graphml(graph: &CadGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_graphml(graph, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn import_graphml(path: impl AsRef<Path>) -> Result<CadGraph, GraphError> {
    let mut s = String::new();
    std::io::Read::read_to_string(&mut BufReader::new(File::open(path)?), &mut s)?;
    read_graphml(&s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn to_string(g: &CadGraph) -> String {
        let mut buf = Vec::new();
        write_graphml(g, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_graph() {
        let g = CadGraph::default();
        let xml = to_string(&g);
        assert!(xml.contains("<graph id=\"G\""));
        assert!(!xml.contains("<node"));
        assert_eq!(read_graphml(&xml).unwrap(), g);
    }

    #[test]
    fn awkward_text_round_trips() {
        let g = CadGraph {
            nodes: vec![
                GraphNode {
                    instance_id: 7,
                    type_token: "A+B".into(),
                    attrs: vec!["'<&>\"'".into(), "'caf\u{e9}'".into(), "  ".into()],
                },
                GraphNode {
                    instance_id: 3,
                    type_token: "C".into(),
                    attrs: vec![],
                },
            ],
            edges: vec![(0, 1), (0, 1), (1, 1)],
            source_path: "dir/a b&c.stp".into(),
            label: Some(4),
        };
        assert_eq!(read_graphml(&to_string(&g)).unwrap(), g);
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_graphml("<graphml><graph><node id=\"a\"></node></graph></graphml>").is_err());
        assert!(read_graphml("<graphml></graphml>").is_err());
        assert!(read_graphml(
            "<graphml><graph><edge source=\"x\" target=\"y\"/></graph></graphml>"
        )
        .is_err());
        assert!(read_graphml("<graphml><graph><node id=\"a\"></graph>").is_err());
    }
}
