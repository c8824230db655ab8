use std::fmt::Write;

use crate::error::ParseError;
use crate::history::{EdgeHistory, EventKind, IndelEvent, TreeHistory};
use crate::tree::Tree;

/// Compact text form `root:<n>;<edge>:(t,I,p,l),(t,D,p,l);...`. Edges
/// without events are omitted; spans and parent lengths come from the tree.
/// Times carry 17 significant digits.
pub fn write_history(history: &TreeHistory, tree: &Tree) -> String {
    let mut s = format!("root:{}", history.root_len());
    for v in tree.edges() {
        let h = history.edge(v);
        if h.events.is_empty() {
            continue;
        }
        write!(s, ";{v}:").unwrap();
        for (k, e) in h.events.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            write!(s, "({:.16e},{},{},{})", e.time, e.kind.code(), e.position, e.size).unwrap();
        }
    }
    s
}

fn parse_event(text: &str, offset: usize) -> Result<IndelEvent, ParseError> {
    let err = |msg: String| ParseError::new("history", msg).at_offset(offset);
    let inner = text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| err(format!("event {text:?} is not parenthesized")))?;
    let parts: Vec<&str> = inner.split(',').collect();
    let [t, k, p, l] = parts[..] else {
        return Err(err(format!("event {text:?} needs 4 fields")));
    };
    let time: f64 = t.parse().map_err(|_| err(format!("bad time {t:?}")))?;
    let mut code = k.chars();
    let kind = match (code.next(), code.next()) {
        (Some(c), None) => EventKind::from_code(c),
        _ => None,
    }
    .ok_or_else(|| err(format!("bad event kind {k:?}")))?;
    let position: usize = p.parse().map_err(|_| err(format!("bad position {p:?}")))?;
    let size: usize = l.parse().map_err(|_| err(format!("bad size {l:?}")))?;
    Ok(match kind {
        EventKind::Insertion => IndelEvent::insertion(time, position, size),
        EventKind::Deletion => IndelEvent::deletion(time, position, size),
    })
}

/// Splits `a),(b` style lists at the commas between events.
fn split_events(list: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, c) in list.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push((start, &list[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push((start, &list[start..]));
    out
}

/// Inverse of [`write_history`]; the result is validated against `tree`.
pub fn parse_history(text: &str, tree: &Tree) -> Result<TreeHistory, ParseError> {
    let err = |msg: String, at: usize| ParseError::new("history", msg).at_offset(at);
    let mut records = text.split(';');
    let head = records.next().unwrap_or_default();
    let root_len: usize = head
        .strip_prefix("root:")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| err(format!("expected root:<length>, got {head:?}"), 0))?;
    let mut events: Vec<Option<Vec<IndelEvent>>> = vec![None; tree.n_nodes()];
    let mut offset = head.len() + 1;
    for rec in records {
        let (id, list) = rec
            .split_once(':')
            .ok_or_else(|| err(format!("expected <edge>:<events>, got {rec:?}"), offset))?;
        let v: usize = id.parse().map_err(|_| err(format!("bad edge id {id:?}"), offset))?;
        if v >= tree.n_nodes() || v == tree.root() {
            return Err(err(format!("edge {v} is not in the tree"), offset));
        }
        if events[v].is_some() {
            return Err(err(format!("edge {v} listed twice"), offset));
        }
        let base = offset + id.len() + 1;
        let parsed = split_events(list)
            .into_iter()
            .map(|(at, e)| parse_event(e, base + at))
            .collect::<Result<Vec<_>, _>>()?;
        events[v] = Some(parsed);
        offset += rec.len() + 1;
    }
    let mut len = vec![0usize; tree.n_nodes()];
    len[tree.root()] = root_len;
    let mut edges: Vec<Option<EdgeHistory>> = vec![None; tree.n_nodes()];
    for v in tree.preorder() {
        let Some(p) = tree.parent(v) else { continue };
        let h = EdgeHistory::new(events[v].take().unwrap_or_default(), len[p], tree.branch_length(v));
        if let Err(violation) = h.validate() {
            return Err(ParseError::new("history", format!("edge {v}: {violation}")));
        }
        len[v] = h.child_len;
        edges[v] = Some(h);
    }
    TreeHistory::new(tree, root_len, edges).map_err(|e| ParseError::new("history", e.to_string()))
}
