use std::sync::Arc;

use crate::error::ParseError;
use crate::tree::{NodeId, Tree};

fn needs_quotes(name: &str) -> bool {
    name.is_empty() || name.chars().any(|c| c.is_whitespace() || "()[]':;,".contains(c))
}

fn write_label(out: &mut String, name: &str) {
    if needs_quotes(name) {
        out.push('\'');
        out.push_str(&name.replace('\'', "''"));
        out.push('\'');
    } else {
        out.push_str(name);
    }
}

fn min_leaf(tree: &Tree, v: NodeId) -> usize {
    tree.leaves_below(v).first().unwrap_or(usize::MAX)
}

fn write_node(tree: &Tree, v: NodeId, out: &mut String) {
    if tree.is_leaf(v) {
        write_label(out, &tree.labels()[v]);
    } else {
        let mut kids = tree.children(v).to_vec();
        kids.sort_by_key(|&c| min_leaf(tree, c));
        out.push('(');
        for (k, &c) in kids.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write_node(tree, c, out);
        }
        out.push(')');
    }
    if tree.parent(v).is_some() {
        out.push(':');
        out.push_str(&tree.branch_length(v).to_string());
    }
}

/// Newick text from the tree's own root, children ordered by their smallest
/// leaf, lengths written in shortest round-trip form.
pub fn write_newick(tree: &Tree) -> String {
    let mut out = String::new();
    write_node(tree, tree.root(), &mut out);
    out.push(';');
    out
}

enum Parsed {
    Leaf(String, f64),
    Internal(Vec<Parsed>, Option<f64>),
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new("Newick", msg).at_offset(self.pos)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    fn label(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        if self.peek() == Some(b'\'') {
            self.pos += 1;
            let mut s = Vec::new();
            loop {
                match self.text.get(self.pos) {
                    None => return Err(self.err("unterminated quoted label")),
                    Some(b'\'') if self.text.get(self.pos + 1) == Some(&b'\'') => {
                        s.push(b'\'');
                        self.pos += 2;
                    }
                    Some(b'\'') => {
                        self.pos += 1;
                        break;
                    }
                    Some(&c) => {
                        s.push(c);
                        self.pos += 1;
                    }
                }
            }
            return String::from_utf8(s).map_err(|_| self.err("label is not UTF-8"));
        }
        let start = self.pos;
        while let Some(&c) = self.text.get(self.pos) {
            if c.is_ascii_whitespace() || b"()[]':;,".contains(&c) {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a taxon name"));
        }
        Ok(String::from_utf8_lossy(&self.text[start..self.pos]).into_owned())
    }

    fn length(&mut self) -> Result<f64, ParseError> {
        if self.peek() != Some(b':') {
            return Err(self.err("missing branch length"));
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while let Some(&c) = self.text.get(self.pos) {
            if c.is_ascii_digit() || b".eE+-".contains(&c) {
                self.pos += 1;
            } else {
                break;
            }
        }
        let s = std::str::from_utf8(&self.text[start..self.pos]).unwrap();
        let v: f64 = s.parse().map_err(|_| {
            let mut e = self.err(format!("bad branch length {s:?}"));
            e.column = Some(start + 1);
            e
        })?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(self.err(format!("branch length {v} must be positive")));
        }
        Ok(v)
    }

    fn node(&mut self, top: bool) -> Result<Parsed, ParseError> {
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut kids = vec![self.node(false)?];
            while self.peek() == Some(b',') {
                self.pos += 1;
                kids.push(self.node(false)?);
            }
            self.expect(b')')?;
            // Internal labels carry no meaning here.
            if matches!(self.peek(), Some(c) if !b":;,)".contains(&c)) {
                self.label()?;
            }
            let len = if top {
                if self.peek() == Some(b':') {
                    Some(self.length()?)
                } else {
                    None
                }
            } else {
                Some(self.length()?)
            };
            Ok(Parsed::Internal(kids, len))
        } else {
            let name = self.label()?;
            let len = self.length()?;
            Ok(Parsed::Leaf(name, len))
        }
    }
}

struct Builder<'a> {
    index: Box<dyn Fn(&str) -> Option<usize> + 'a>,
    found: Vec<bool>,
    next_internal: usize,
    edges: Vec<(NodeId, NodeId, f64)>,
}

impl Builder<'_> {
    /// Assigns ids in preorder and returns the id of `node`.
    fn place(&mut self, node: &Parsed) -> Result<NodeId, String> {
        match node {
            Parsed::Leaf(name, _) => {
                let id = (self.index)(name).ok_or_else(|| format!("unknown taxon {name:?}"))?;
                if std::mem::replace(&mut self.found[id], true) {
                    return Err(format!("taxon {name:?} appears twice"));
                }
                Ok(id)
            }
            Parsed::Internal(kids, _) => {
                let id = self.next_internal;
                self.next_internal += 1;
                for k in kids {
                    let c = self.place(k)?;
                    let len = match k {
                        Parsed::Leaf(_, l) => *l,
                        Parsed::Internal(_, l) => l.expect("inner nodes carry lengths"),
                    };
                    self.edges.push((id, c, len));
                }
                Ok(id)
            }
        }
    }
}

fn collect_names(node: &Parsed, out: &mut Vec<String>) {
    match node {
        Parsed::Leaf(n, _) => out.push(n.clone()),
        Parsed::Internal(kids, _) => kids.iter().for_each(|k| collect_names(k, out)),
    }
}

/// Parses an unrooted tree written with a trifurcating top node (a rooted
/// bifurcating top is unrooted by joining its two edges). Leaves are matched
/// to `labels` when given, otherwise numbered in order of appearance.
pub fn parse_newick(text: &str, labels: Option<&Arc<[String]>>) -> Result<Tree, ParseError> {
    let mut p = Parser {
        text: text.as_bytes(),
        pos: 0,
    };
    let mut root = p.node(true)?;
    p.expect(b';')?;
    if p.peek().is_some() {
        return Err(p.err("trailing text after ';'"));
    }
    let whole = |msg: String| ParseError::new("Newick", msg);
    if let Parsed::Internal(kids, _) = &mut root {
        if kids.len() == 2 {
            let (a, b) = (kids.remove(0), kids.remove(0));
            let (inner, other) = match (a, b) {
                (Parsed::Internal(k, la), o) => (Parsed::Internal(k, la), o),
                (o, Parsed::Internal(k, lb)) => (Parsed::Internal(k, lb), o),
                _ => return Err(whole("a two-leaf tree has no unrooted form".into())),
            };
            let Parsed::Internal(mut inner_kids, Some(li)) = inner else { unreachable!() };
            let other = match other {
                Parsed::Leaf(n, l) => Parsed::Leaf(n, l + li),
                Parsed::Internal(k, l) => Parsed::Internal(k, l.map(|l| l + li)),
            };
            inner_kids.push(other);
            *kids = inner_kids;
        }
        if kids.len() != 3 {
            return Err(whole(format!("top node has {} children, expected 3", kids.len())));
        }
    } else {
        return Err(whole("a single leaf is not a tree".into()));
    }
    let mut names = Vec::new();
    collect_names(&root, &mut names);
    let labels: Arc<[String]> = match labels {
        Some(l) => l.clone(),
        None => names.clone().into(),
    };
    if names.len() != labels.len() {
        return Err(whole(format!("tree has {} leaves, expected {}", names.len(), labels.len())));
    }
    let n = labels.len();
    let lookup = labels.clone();
    let mut b = Builder {
        index: Box::new(move |name| lookup.iter().position(|l| l == name)),
        found: vec![false; n],
        next_internal: n,
        edges: Vec::new(),
    };
    let root_id = b.place(&root).map_err(whole)?;
    for (&f, name) in b.found.iter().zip(labels.iter()) {
        if !f {
            return Err(whole(format!("taxon {name:?} missing")));
        }
    }
    Tree::from_edges(labels, &b.edges, root_id).map_err(|e| whole(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::tests::labels;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_taxa() {
        let t = parse_newick("(a:0.1,b:0.2,c:0.3);", None).unwrap();
        assert_eq!(write_newick(&t), "(a:0.1,b:0.2,c:0.3);");
    }

    #[test]
    fn unclosed_parenthesis_reports_a_position() {
        let e = parse_newick("(a:0.1,b:0.2;", None).unwrap_err();
        assert_eq!(e.column, Some(13));
        assert!(e.to_string().contains("position 13"));
    }

    #[test]
    fn missing_length_is_an_error() {
        assert!(parse_newick("(a,b:0.2,c:0.3);", None).is_err());
    }

    #[test]
    fn rooted_input_is_unrooted() {
        let t = parse_newick("((a:0.1,b:0.2):0.05,(c:0.3,d:0.4):0.15);", None).unwrap();
        assert_eq!(t.n_leaves(), 4);
        assert!((t.total_length() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn odd_names_are_quoted() {
        let names: Arc<[String]> = vec!["it's".to_string(), "a b".into(), "c".into()].into();
        let t = Tree::from_edges(names.clone(), &[(3, 0, 0.5), (3, 1, 0.25), (3, 2, 1e-9)], 3).unwrap();
        let s = write_newick(&t);
        assert_eq!(s, "('it''s':0.5,'a b':0.25,c:0.000000001);");
        let back = parse_newick(&s, Some(&names)).unwrap();
        assert_eq!(write_newick(&back), s);
    }

    #[test]
    fn random_trees_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 3..12 {
            let labs = labels(n);
            let t = Tree::random(labs.clone(), &mut rng, |r| rand::Rng::random::<f64>(r) + 1e-3).unwrap();
            let s = write_newick(&t);
            let back = parse_newick(&s, Some(&labs)).unwrap();
            assert_eq!(write_newick(&back), s);
            assert_eq!(back.topology(), t.topology());
        }
    }
}
