//! AVM text format.
//!
//! ```text
//! [phon: "Nase", head: noun[num: #1=sg], cont: [ind: [num: #1], ctxt: nose]]
//! [args: <[loc: [cont: [gen: u_g∨ear]]] | _>]
//! ```
//!
//! Values are type expressions (`a∨b`, ASCII `a\/b`), nested `[...]`
//! optionally prefixed by a type, lists `<v, ... | tail>`, strings, `_`
//! (unconstrained; an open tail inside a list) or tags `#n=value` / `#n`.
//! Feature keys may be dotted paths (`loc.cont: ...`).

use std::collections::{HashMap, HashSet};

use super::{FeatureStructure, Graph, ListTypes, NodeId, FIRST, REST};
use crate::syntax::{is_ident_char, quote, Cursor, SyntaxError};
use crate::typelattice::{LeafSet, TypeHierarchy};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderStyle {
    /// Drop the `u_s` marker from displayed types.
    pub hide_spec_marker: bool,
    /// Emit features in name order instead of insertion order.
    pub sort_features: bool,
}

struct AvmParser<'h> {
    h: &'h TypeHierarchy,
    lists: Option<ListTypes>,
    graph: Graph,
    tags: HashMap<u32, NodeId>,
}

/// Reads one AVM value at the cursor.
pub fn parse_avm(c: &mut Cursor<'_>, h: &TypeHierarchy) -> Result<FeatureStructure, SyntaxError> {
    let mut p = AvmParser {
        h,
        lists: ListTypes::of(h),
        graph: Graph::new(),
        tags: HashMap::new(),
    };
    let start = c.pos();
    let root = p.value(c, false)?;
    FeatureStructure::from_graph(&p.graph, root)
        .map_err(|_| c.error_at(start, "feature structure is cyclic"))
}

impl AvmParser<'_> {
    fn value(&mut self, c: &mut Cursor<'_>, in_tail: bool) -> Result<NodeId, SyntaxError> {
        c.skip_ws();
        if c.peek() != Some('#') {
            return self.body(c, in_tail);
        }
        c.bump();
        let digits = c.take_while(|ch| ch.is_ascii_digit());
        let tag: u32 = digits
            .parse()
            .map_err(|_| c.error("expected tag number after `#`"))?;
        if c.eat("=") {
            let at = c.pos();
            let v = self.body(c, in_tail)?;
            match self.tags.get(&tag) {
                Some(&existing) => {
                    self.graph
                        .unify(existing, v)
                        .map_err(|_| c.error_at(at, &format!("conflicting values for tag #{tag}")))?;
                    Ok(existing)
                }
                None => {
                    self.tags.insert(tag, v);
                    Ok(v)
                }
            }
        } else {
            let top = self.h.top();
            Ok(*self.tags.entry(tag).or_insert_with(|| self.graph.add(top)))
        }
    }

    fn body(&mut self, c: &mut Cursor<'_>, in_tail: bool) -> Result<NodeId, SyntaxError> {
        c.skip_ws();
        let top = self.h.top();
        match c.peek() {
            Some('"') => {
                let s = c.quoted()?;
                Ok(self.graph.add_atom(top, &s))
            }
            Some('[') => {
                let node = self.graph.add(top);
                self.features(c, node)?;
                Ok(node)
            }
            Some('<') => self.list(c),
            Some('_') if !c.rest()[1..].starts_with(is_ident_char) => {
                c.bump();
                let ty = match (in_tail, self.lists) {
                    (true, Some(l)) => l.list,
                    _ => top,
                };
                Ok(self.graph.add(ty))
            }
            Some(_) => {
                let ty = self.type_expr(c)?;
                let node = self.graph.add(ty);
                c.skip_ws();
                if c.peek() == Some('[') {
                    self.features(c, node)?;
                }
                Ok(node)
            }
            None => Err(c.error("unexpected end of input")),
        }
    }

    fn type_expr(&mut self, c: &mut Cursor<'_>) -> Result<LeafSet, SyntaxError> {
        let start = c.pos();
        let mut acc = LeafSet::EMPTY;
        loop {
            c.skip_ws();
            let at = c.pos();
            let set = if c.eat("⊤") {
                self.h.top()
            } else {
                let name = c.ident()?;
                self.h
                    .parse_expr(name)
                    .map_err(|e| c.error_at(at, &e.to_string()))?
            };
            acc = acc.union(set);
            if !(c.eat("∨") || c.eat("\\/")) {
                break;
            }
        }
        if acc.is_empty() {
            return Err(c.error_at(start, "empty type"));
        }
        Ok(acc)
    }

    fn features(&mut self, c: &mut Cursor<'_>, node: NodeId) -> Result<(), SyntaxError> {
        c.expect("[")?;
        if c.eat("]") {
            return Ok(());
        }
        loop {
            let at = c.pos();
            let key = c.take_while(|ch| is_ident_char(ch) || ch == '.');
            if key.is_empty() || key.split('.').any(str::is_empty) {
                return Err(c.error_at(at, "expected a feature name"));
            }
            c.expect(":")?;
            let v = self.value(c, false)?;
            self.attach(c, at, node, key, v)?;
            if c.eat(",") {
                if c.eat("]") {
                    return Ok(());
                }
                continue;
            }
            c.expect("]")?;
            return Ok(());
        }
    }

    fn attach(
        &mut self,
        c: &Cursor<'_>,
        at: usize,
        node: NodeId,
        key: &str,
        v: NodeId,
    ) -> Result<(), SyntaxError> {
        let names: Vec<&str> = key.split('.').collect();
        let mut cur = node;
        for name in &names[..names.len() - 1] {
            cur = match self.graph.feature(cur, name) {
                Some(n) => n,
                None => {
                    let n = self.graph.add(self.h.top());
                    self.graph.set_feature(cur, name, n);
                    n
                }
            };
        }
        let last = names[names.len() - 1];
        match self.graph.feature(cur, last) {
            Some(existing) => self
                .graph
                .unify(existing, v)
                .map_err(|_| c.error_at(at, &format!("conflicting values for `{key}`"))),
            None => {
                self.graph.set_feature(cur, last, v);
                Ok(())
            }
        }
    }

    fn list(&mut self, c: &mut Cursor<'_>) -> Result<NodeId, SyntaxError> {
        let lists = self
            .lists
            .ok_or_else(|| c.error("lists need elist/nelist/list types in the hierarchy"))?;
        c.expect("<")?;
        let mut elems = Vec::new();
        let mut tail = None;
        if !c.eat(">") {
            if c.eat("|") {
                tail = Some(self.value(c, true)?);
                c.expect(">")?;
            } else {
                loop {
                    elems.push(self.value(c, false)?);
                    if c.eat(",") {
                        continue;
                    }
                    if c.eat("|") {
                        tail = Some(self.value(c, true)?);
                    }
                    c.expect(">")?;
                    break;
                }
            }
        }
        let tail = match tail {
            Some(t) => t,
            None => self.graph.add(lists.elist),
        };
        Ok(self.graph.build_list(lists, &elems, tail))
    }
}

pub(super) fn shared_nodes(fs: &FeatureStructure) -> HashSet<NodeId> {
    let g = fs.graph();
    let mut seen = HashSet::new();
    let mut shared = HashSet::new();
    let mut stack = vec![fs.root()];
    seen.insert(g.deref(fs.root()));
    while let Some(n) = stack.pop() {
        for (_, child) in g.features(n) {
            if seen.insert(child) {
                stack.push(child);
            } else {
                shared.insert(child);
            }
        }
    }
    shared
}

struct Renderer<'a> {
    fs: &'a FeatureStructure,
    h: &'a TypeHierarchy,
    style: RenderStyle,
    lists: Option<ListTypes>,
    shared: HashSet<NodeId>,
    tags: HashMap<NodeId, usize>,
    out: String,
}

pub(super) fn render(fs: &FeatureStructure, h: &TypeHierarchy, style: RenderStyle) -> String {
    let mut r = Renderer {
        fs,
        h,
        style,
        lists: ListTypes::of(h),
        shared: shared_nodes(fs),
        tags: HashMap::new(),
        out: String::new(),
    };
    r.value(fs.root(), false);
    r.out
}

impl Renderer<'_> {
    fn graph(&self) -> &Graph {
        self.fs.graph()
    }

    fn type_name(&self, ty: LeafSet) -> String {
        if self.style.hide_spec_marker {
            self.h.display_without_spec_marker(ty)
        } else {
            self.h.display(ty)
        }
    }

    fn is_cons(&self, n: NodeId) -> bool {
        let Some(l) = self.lists else { return false };
        let g = self.graph();
        g.ty(n) == l.nelist
            && g.features(n).count() == 2
            && g.feature(n, FIRST).is_some()
            && g.feature(n, REST).is_some()
    }

    fn value(&mut self, n: NodeId, in_tail: bool) {
        let n = self.graph().deref(n);
        if self.shared.contains(&n) {
            if let Some(t) = self.tags.get(&n) {
                self.out.push_str(&format!("#{t}"));
                return;
            }
            let t = self.tags.len() + 1;
            self.tags.insert(n, t);
            self.out.push_str(&format!("#{t}="));
        }
        self.body(n, in_tail);
    }

    fn body(&mut self, n: NodeId, in_tail: bool) {
        let g = self.fs.graph();
        let ty = g.ty(n);
        if let Some(atom) = g.atom(n) {
            self.out.push_str(&quote(atom));
            return;
        }
        if self.is_cons(n) {
            self.list(n);
            return;
        }
        if !g.has_features(n) {
            let text = match self.lists {
                _ if ty == self.h.top() => {
                    if in_tail {
                        "⊤".to_string()
                    } else {
                        "_".to_string()
                    }
                }
                Some(l) if ty == l.list => {
                    if in_tail {
                        "_".to_string()
                    } else {
                        "<| _>".to_string()
                    }
                }
                Some(l) if ty == l.elist && !in_tail => "<>".to_string(),
                _ => self.type_name(ty),
            };
            self.out.push_str(&text);
            return;
        }
        if ty != self.h.top() {
            let name = self.type_name(ty);
            self.out.push_str(&name);
        }
        let mut feats: Vec<(String, NodeId)> =
            g.features(n).map(|(k, v)| (k.to_string(), v)).collect();
        if self.style.sort_features {
            feats.sort_by(|a, b| a.0.cmp(&b.0));
        }
        self.out.push('[');
        for (i, (name, child)) in feats.into_iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            self.out.push_str(&name);
            self.out.push_str(": ");
            self.value(child, false);
        }
        self.out.push(']');
    }

    fn list(&mut self, start: NodeId) {
        let lists = self.lists.expect("cons cells imply list types");
        self.out.push('<');
        let mut cell = start;
        let mut first = true;
        loop {
            if !first {
                self.out.push_str(", ");
            }
            first = false;
            let g = self.fs.graph();
            let head = g.feature(cell, FIRST).expect("cons");
            let next = g.feature(cell, REST).expect("cons");
            self.value(head, false);
            let g = self.fs.graph();
            if self.shared.contains(&next) || g.has_features(next) && !self.is_cons(next) {
                self.out.push_str(" | ");
                self.value(next, true);
                break;
            }
            if self.is_cons(next) {
                cell = next;
                continue;
            }
            let ty = g.ty(next);
            if ty == lists.elist {
                // closed
            } else if ty == lists.list {
                self.out.push_str(" | _");
            } else {
                self.out.push_str(" | ");
                self.value(next, true);
            }
            break;
        }
        self.out.push('>');
    }
}

#[cfg(test)]
mod tests {
    use super::super::FeaturePath;
    use super::*;

    fn hier() -> TypeHierarchy {
        TypeHierarchy::load(include_str!("../../data/demo.types")).unwrap()
    }

    #[test]
    fn round_trip_nase() {
        let h = hier();
        let text = "[gend: fem, gen: u_g, ctxt: sense_organ]";
        let fs = FeatureStructure::parse(text, &h).unwrap();
        assert_eq!(fs.render(&h), text);
    }

    #[test]
    fn round_trip_lists_and_tags() {
        let h = hier();
        for text in [
            "[args: <| _>]",
            "[args: <>]",
            "[args: <fem, masc>]",
            "[args: <#1=[ctxt: ear] | _>, subj: #1]",
            "[a: <fem | #1=_>, b: #1]",
            "[phon: \"a\\\"b\", head: noun[case: acc∨nom]]",
            "[gen: u_g∨npnom∨npnom_npacc]",
        ] {
            let fs = FeatureStructure::parse(text, &h).unwrap();
            assert_eq!(fs.render(&h), text);
        }
    }

    #[test]
    fn dotted_keys_and_ascii_union() {
        let h = hier();
        let fs = FeatureStructure::parse("[loc.cont: [gen: u_g\\/ear], loc.x: sg]", &h).unwrap();
        assert_eq!(fs.render(&h), "[loc: [cont: [gen: u_g∨ear], x: sg]]");
        let p: FeaturePath = "loc.cont.gen".parse().unwrap();
        assert_eq!(fs.type_at(&p), Some(h.ty("u_g").union(h.ty("ear"))));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let h = hier();
        let err = FeatureStructure::parse("[a: fem,\n b: nosuch]", &h).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("nosuch"), "{msg}");
        assert!(FeatureStructure::parse("[a: fem", &h).is_err());
        assert!(FeatureStructure::parse("[a: fem, a: masc]", &h).is_err());
        assert!(FeatureStructure::parse("[a: fem] x", &h).is_err());
    }

    #[test]
    fn hidden_spec_marker() {
        let h = hier();
        let fs = FeatureStructure::parse("[gend: u_s∨fem, ctxt: u_s∨nom_sem, gen: u_g]", &h).unwrap();
        assert_eq!(fs.render(&h), "[gend: u_s∨fem, ctxt: u_s∨nom_sem, gen: u_g]");
        let style = RenderStyle {
            hide_spec_marker: true,
            ..RenderStyle::default()
        };
        assert_eq!(fs.render_with(&h, style), "[gend: fem, ctxt: nom_sem, gen: u_g]");
    }
}
