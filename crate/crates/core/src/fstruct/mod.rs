//! Typed feature structures: rooted, reentrant attribute-value graphs.
//!
//! Nodes live in an arena ([`Graph`]). Unification merges nodes through
//! forwarding pointers, and [`Graph::compact`] rebuilds a clean arena from a
//! set of handles afterwards. A [`FeatureStructure`] is a compact graph with a
//! distinguished root.

mod path;
mod text;

use indexmap::IndexMap;
use thiserror::Error;

use crate::syntax::SyntaxError;
use crate::typelattice::{LeafSet, TypeHierarchy};

pub use path::{FeaturePath, PathError, Step};
pub use text::{parse_avm, RenderStyle};

pub const FIRST: &str = "first";
pub const REST: &str = "rest";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    fn index(self) -> usize {
        self.0 as usize
    }

    /// The id this node gets after [`Graph::append`] with offset `by`.
    pub fn shifted(self, by: usize) -> NodeId {
        self.offset(by)
    }

    fn offset(self, by: usize) -> NodeId {
        NodeId(self.0 + by as u32)
    }
}

#[derive(Clone, Debug)]
struct Node {
    ty: LeafSet,
    atom: Option<String>,
    feats: IndexMap<String, NodeId>,
    forward: Option<NodeId>,
}

/// Why a unification did not succeed. Failure is an ordinary outcome.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum UnifyFailure {
    #[error("type clash")]
    TypeClash,
    #[error("string clash")]
    AtomClash,
    #[error("cyclic structure")]
    Cycle,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FsError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("path `{0}` does not resolve")]
    Absent(FeaturePath),
    #[error("cannot revise `{0}` to ⊥")]
    Bottom(FeaturePath),
    #[error("path `{0}` runs past a closed list")]
    ClosedList(FeaturePath),
    #[error("hierarchy declares no list types (elist, nelist, list)")]
    NoListTypes,
}

/// The list types a hierarchy must declare to support `<...>` lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ListTypes {
    pub elist: LeafSet,
    pub nelist: LeafSet,
    pub list: LeafSet,
}

impl ListTypes {
    pub fn of(h: &TypeHierarchy) -> Option<ListTypes> {
        Some(ListTypes {
            elist: h.get("elist")?,
            nelist: h.get("nelist")?,
            list: h.get("list")?,
        })
    }
}

/// Arena of feature-structure nodes.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add(&mut self, ty: LeafSet) -> NodeId {
        self.nodes.push(Node {
            ty,
            atom: None,
            feats: IndexMap::new(),
            forward: None,
        });
        NodeId(self.nodes.len() as u32 - 1)
    }

    pub fn add_atom(&mut self, ty: LeafSet, atom: &str) -> NodeId {
        let id = self.add(ty);
        self.nodes[id.index()].atom = Some(atom.to_string());
        id
    }

    /// Follows forwarding pointers left behind by unification.
    pub fn deref(&self, mut id: NodeId) -> NodeId {
        while let Some(next) = self.nodes[id.index()].forward {
            id = next;
        }
        id
    }

    pub fn ty(&self, id: NodeId) -> LeafSet {
        self.nodes[self.deref(id).index()].ty
    }

    pub fn set_ty(&mut self, id: NodeId, ty: LeafSet) {
        let id = self.deref(id);
        self.nodes[id.index()].ty = ty;
    }

    pub fn atom(&self, id: NodeId) -> Option<&str> {
        self.nodes[self.deref(id).index()].atom.as_deref()
    }

    pub fn feature(&self, id: NodeId, name: &str) -> Option<NodeId> {
        self.nodes[self.deref(id).index()]
            .feats
            .get(name)
            .map(|&c| self.deref(c))
    }

    pub fn features(&self, id: NodeId) -> impl Iterator<Item = (&str, NodeId)> + '_ {
        self.nodes[self.deref(id).index()]
            .feats
            .iter()
            .map(move |(k, &v)| (k.as_str(), self.deref(v)))
    }

    pub fn has_features(&self, id: NodeId) -> bool {
        !self.nodes[self.deref(id).index()].feats.is_empty()
    }

    /// Adds or replaces a feature edge.
    pub fn set_feature(&mut self, id: NodeId, name: &str, child: NodeId) {
        let id = self.deref(id);
        self.nodes[id.index()].feats.insert(name.to_string(), child);
    }

    pub fn remove_feature(&mut self, id: NodeId, name: &str) -> Option<NodeId> {
        let id = self.deref(id);
        self.nodes[id.index()].feats.shift_remove(name)
    }

    /// Copies every node of `other` into `self`; returns the id offset to
    /// apply to `other`'s node ids.
    pub fn append(&mut self, other: &Graph) -> usize {
        let offset = self.nodes.len();
        self.nodes.extend(other.nodes.iter().map(|n| Node {
            ty: n.ty,
            atom: n.atom.clone(),
            feats: n.feats.iter().map(|(k, v)| (k.clone(), v.offset(offset))).collect(),
            forward: n.forward.map(|f| f.offset(offset)),
        }));
        offset
    }

    /// Destructively unifies two nodes. On failure the graph is left in an
    /// unspecified partially merged state and should be discarded.
    pub fn unify(&mut self, a: NodeId, b: NodeId) -> Result<(), UnifyFailure> {
        let mut work = vec![(a, b)];
        while let Some((a, b)) = work.pop() {
            let a = self.deref(a);
            let b = self.deref(b);
            if a == b {
                continue;
            }
            let ty = self.nodes[a.index()].ty.unify(self.nodes[b.index()].ty);
            if ty.is_empty() {
                return Err(UnifyFailure::TypeClash);
            }
            let atom = match (&self.nodes[a.index()].atom, &self.nodes[b.index()].atom) {
                (Some(x), Some(y)) if x != y => return Err(UnifyFailure::AtomClash),
                (Some(x), _) | (None, Some(x)) => Some(x.clone()),
                (None, None) => None,
            };
            let moved = std::mem::take(&mut self.nodes[b.index()].feats);
            self.nodes[b.index()].forward = Some(a);
            let target = &mut self.nodes[a.index()];
            target.ty = ty;
            target.atom = atom;
            for (name, child) in moved {
                match target.feats.get(&name) {
                    Some(&existing) => work.push((existing, child)),
                    None => {
                        target.feats.insert(name, child);
                    }
                }
            }
        }
        Ok(())
    }

    /// Builds a fresh arena containing exactly the nodes reachable from
    /// `handles`, rewriting the handles in place. Fails on cycles.
    pub fn compact(&self, handles: &mut [NodeId]) -> Result<Graph, UnifyFailure> {
        let mut out = Graph::new();
        let mut map: Vec<Option<NodeId>> = vec![None; self.nodes.len()];
        let mut on_stack = vec![false; self.nodes.len()];
        for h in handles.iter_mut() {
            *h = self.copy_into(*h, &mut out, &mut map, &mut on_stack)?;
        }
        Ok(out)
    }

    fn copy_into(
        &self,
        id: NodeId,
        out: &mut Graph,
        map: &mut Vec<Option<NodeId>>,
        on_stack: &mut Vec<bool>,
    ) -> Result<NodeId, UnifyFailure> {
        let id = self.deref(id);
        if on_stack[id.index()] {
            return Err(UnifyFailure::Cycle);
        }
        if let Some(done) = map[id.index()] {
            return Ok(done);
        }
        let node = &self.nodes[id.index()];
        let new = out.add(node.ty);
        out.nodes[new.index()].atom = node.atom.clone();
        on_stack[id.index()] = true;
        for (name, &child) in &node.feats {
            let c = self.copy_into(child, out, map, on_stack)?;
            out.nodes[new.index()].feats.insert(name.clone(), c);
        }
        on_stack[id.index()] = false;
        map[id.index()] = Some(new);
        Ok(new)
    }

    /// Elements of a first/rest list starting at `list`, plus the tail node.
    pub fn list_elements(&self, list: NodeId) -> (Vec<NodeId>, NodeId) {
        let mut elems = Vec::new();
        let mut cur = self.deref(list);
        while let (Some(first), Some(rest)) = (self.feature(cur, FIRST), self.feature(cur, REST)) {
            elems.push(first);
            cur = rest;
        }
        (elems, cur)
    }

    /// Builds a list of `elems` ending in `tail`.
    pub fn build_list(&mut self, lists: ListTypes, elems: &[NodeId], tail: NodeId) -> NodeId {
        let mut cur = tail;
        for &e in elems.iter().rev() {
            let cell = self.add(lists.nelist);
            self.set_feature(cell, FIRST, e);
            self.set_feature(cell, REST, cur);
            cur = cell;
        }
        cur
    }

    pub fn resolve(&self, from: NodeId, path: &FeaturePath) -> Option<NodeId> {
        let mut cur = self.deref(from);
        for step in path.steps() {
            cur = match step {
                Step::Feature(name) => self.feature(cur, name)?,
                Step::Index(k) => {
                    let mut cell = cur;
                    for _ in 0..*k {
                        cell = self.feature(cell, REST)?;
                    }
                    self.feature(cell, FIRST)?
                }
            };
        }
        Some(cur)
    }
}

/// A feature structure: a compact graph plus its root.
#[derive(Clone, Debug)]
pub struct FeatureStructure {
    graph: Graph,
    root: NodeId,
}

impl FeatureStructure {
    /// A single unconstrained node of the given type.
    pub fn atomic(ty: LeafSet) -> FeatureStructure {
        let mut graph = Graph::new();
        let root = graph.add(ty);
        FeatureStructure { graph, root }
    }

    /// Wraps a node of an arbitrary graph, copying out the reachable part.
    pub fn from_graph(graph: &Graph, root: NodeId) -> Result<FeatureStructure, UnifyFailure> {
        let mut handles = [root];
        let graph = graph.compact(&mut handles)?;
        Ok(FeatureStructure {
            graph,
            root: handles[0],
        })
    }

    pub fn parse(text: &str, h: &TypeHierarchy) -> Result<FeatureStructure, FsError> {
        let mut cursor = crate::syntax::Cursor::new(text, None);
        let fs = parse_avm(&mut cursor, h)?;
        cursor.skip_ws();
        if !cursor.at_end() {
            return Err(cursor.error("trailing input after feature structure").into());
        }
        Ok(fs)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut Graph {
        &mut self.graph
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.graph.len()
    }

    /// Unification on copies; neither input is modified.
    pub fn unify(&self, other: &FeatureStructure) -> Result<FeatureStructure, UnifyFailure> {
        let mut graph = self.graph.clone();
        let offset = graph.append(&other.graph);
        graph.unify(self.root, other.root.offset(offset))?;
        FeatureStructure::from_graph(&graph, self.root)
    }

    pub fn resolve(&self, path: &FeaturePath) -> Option<NodeId> {
        self.graph.resolve(self.root, path)
    }

    pub fn type_at(&self, path: &FeaturePath) -> Option<LeafSet> {
        self.resolve(path).map(|n| self.graph.ty(n))
    }

    pub fn ty(&self, node: NodeId) -> LeafSet {
        self.graph.ty(node)
    }

    /// Resolves `path`, creating missing nodes on the way. Intermediate new
    /// nodes are typed ⊤, the final one `default`. Open list tails grow.
    pub fn extend_path(
        &mut self,
        h: &TypeHierarchy,
        path: &FeaturePath,
        default: LeafSet,
    ) -> Result<NodeId, FsError> {
        let lists = ListTypes::of(h);
        let top = h.top();
        let n = path.steps().len();
        let mut cur = self.root;
        for (i, step) in path.steps().iter().enumerate() {
            let last = i + 1 == n;
            let fresh_ty = if last { default } else { top };
            cur = match step {
                Step::Feature(name) => match self.graph.feature(cur, name) {
                    Some(c) => c,
                    None => {
                        let c = self.graph.add(fresh_ty);
                        self.graph.set_feature(cur, name, c);
                        c
                    }
                },
                Step::Index(k) => {
                    let lists = lists.ok_or(FsError::NoListTypes)?;
                    let mut cell = cur;
                    let mut created = false;
                    for j in 0..=*k {
                        if self.graph.feature(cell, FIRST).is_none() {
                            let ty = self.graph.ty(cell);
                            if self.graph.has_features(cell) || !ty.subsumes(lists.nelist) {
                                return Err(FsError::ClosedList(path.clone()));
                            }
                            self.graph.set_ty(cell, lists.nelist);
                            let first = self.graph.add(top);
                            let rest = self.graph.add(lists.list);
                            self.graph.set_feature(cell, FIRST, first);
                            self.graph.set_feature(cell, REST, rest);
                            created = j == *k;
                        }
                        if j < *k {
                            cell = self.graph.feature(cell, REST).expect("cons cell");
                        }
                    }
                    let first = self.graph.feature(cell, FIRST).expect("cons cell");
                    if created {
                        self.graph.set_ty(first, fresh_ty);
                    }
                    first
                }
            };
        }
        Ok(cur)
    }

    /// Destructively replaces the type of the node at `path`. Every path
    /// sharing that node observes the new type.
    pub fn revise_type_at(&mut self, path: &FeaturePath, ty: LeafSet) -> Result<(), FsError> {
        if ty.is_empty() {
            return Err(FsError::Bottom(path.clone()));
        }
        let node = self
            .resolve(path)
            .ok_or_else(|| FsError::Absent(path.clone()))?;
        self.graph.set_ty(node, ty);
        Ok(())
    }

    /// A copy with every feature called `name` removed, at any depth.
    pub fn without_feature(&self, name: &str) -> FeatureStructure {
        let mut graph = self.graph.clone();
        for node in &mut graph.nodes {
            node.feats.shift_remove(name);
        }
        FeatureStructure::from_graph(&graph, self.root).expect("removing edges keeps acyclicity")
    }

    pub fn render(&self, h: &TypeHierarchy) -> String {
        text::render(self, h, RenderStyle::default())
    }

    pub fn render_with(&self, h: &TypeHierarchy, style: RenderStyle) -> String {
        text::render(self, h, style)
    }

    /// Number of distinct nodes reachable along more than one path.
    pub fn shared_node_count(&self) -> usize {
        text::shared_nodes(self).len()
    }

    /// Every feature path from the root to a featureless node, with its type.
    /// Shared nodes are reported once per path.
    pub fn leaf_paths(&self) -> Vec<(FeaturePath, LeafSet)> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        self.collect_leaves(self.root, &mut prefix, &mut out);
        out
    }

    fn collect_leaves(&self, node: NodeId, prefix: &mut Vec<Step>, out: &mut Vec<(FeaturePath, LeafSet)>) {
        if !self.graph.has_features(node) {
            out.push((FeaturePath::from_steps(prefix.clone()), self.graph.ty(node)));
            return;
        }
        for (name, child) in self.graph.features(node) {
            prefix.push(Step::Feature(name.to_string()));
            self.collect_leaves(child, prefix, out);
            prefix.pop();
        }
    }
}

/// FS subsumption: `general` subsumes `specific` iff every type, feature and
/// reentrancy of `general` is matched by `specific` via a node mapping.
pub fn fs_subsumes(general: &FeatureStructure, specific: &FeatureStructure) -> bool {
    let mut map: std::collections::HashMap<NodeId, NodeId> = std::collections::HashMap::new();
    let mut work = vec![(general.root, specific.root)];
    while let Some((g, s)) = work.pop() {
        let g = general.graph.deref(g);
        let s = specific.graph.deref(s);
        if let Some(&prev) = map.get(&g) {
            if prev != s {
                return false;
            }
            continue;
        }
        map.insert(g, s);
        if !general.graph.ty(g).subsumes(specific.graph.ty(s)) {
            return false;
        }
        if let Some(a) = general.graph.atom(g) {
            if specific.graph.atom(s) != Some(a) {
                return false;
            }
        }
        for (name, gc) in general.graph.features(g) {
            match specific.graph.feature(s, name) {
                Some(sc) => work.push((gc, sc)),
                None => return false,
            }
        }
    }
    true
}

pub fn unify_fs(a: &FeatureStructure, b: &FeatureStructure) -> Result<FeatureStructure, UnifyFailure> {
    a.unify(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hier() -> TypeHierarchy {
        TypeHierarchy::load(include_str!("../../data/demo.types")).unwrap()
    }

    fn fs(h: &TypeHierarchy, s: &str) -> FeatureStructure {
        FeatureStructure::parse(s, h).unwrap()
    }

    #[test]
    fn unification_narrows_types() {
        let h = hier();
        let r = fs(&h, "[gend: non_fem]").unify(&fs(&h, "[gend: neut]")).unwrap();
        assert_eq!(r.render(&h), "[gend: neut]");
    }

    #[test]
    fn unification_fails_on_disjoint_types() {
        let h = hier();
        let r = fs(&h, "[ctxt: sense_organ]").unify(&fs(&h, "[ctxt: smell]"));
        assert_eq!(r.unwrap_err(), UnifyFailure::TypeClash);
    }

    #[test]
    fn top_is_identity() {
        let h = hier();
        let x = fs(&h, "[a: #1=fem, b: #1, c: <ear | _>]");
        let r = x.unify(&FeatureStructure::atomic(h.top())).unwrap();
        assert_eq!(r.render(&h), x.render(&h));
    }

    #[test]
    fn inputs_are_not_mutated() {
        let h = hier();
        let a = fs(&h, "[g: gender]");
        let b = fs(&h, "[g: fem, h: sg]");
        let _ = a.unify(&b).unwrap();
        assert_eq!(a.render(&h), "[g: gender]");
        assert_eq!(b.render(&h), "[g: fem, h: sg]");
    }

    #[test]
    fn reentrancy_propagates_through_unification() {
        let h = hier();
        let a = fs(&h, "[x: #1=gender, y: #1]");
        let r = a.unify(&fs(&h, "[y: masc]")).unwrap();
        assert_eq!(r.render(&h), "[x: #1=masc, y: #1]");
    }

    #[test]
    fn cycles_fail() {
        let h = hier();
        let a = fs(&h, "[x: #1=[], y: #1]");
        let b = fs(&h, "[x: [f: #2=[]], y: [f: [g: #2]]]");
        // x ≡ y, so x.f ≡ y.f = x.f.g...: a cycle
        let b2 = fs(&h, "[x: #3=[], y: [f: #3]]");
        assert_eq!(a.unify(&b2).unwrap_err(), UnifyFailure::Cycle);
        assert!(a.unify(&b).is_err());
    }

    #[test]
    fn atoms_unify_only_when_equal() {
        let h = hier();
        let a = fs(&h, "[phon: \"Nase\"]");
        assert!(a.unify(&fs(&h, "[phon: \"Nase\"]")).is_ok());
        assert_eq!(
            a.unify(&fs(&h, "[phon: \"Ohr\"]")).unwrap_err(),
            UnifyFailure::AtomClash
        );
    }

    #[test]
    fn resolve_paths() {
        let h = hier();
        let nase = fs(&h, "[gend: fem, gen: u_g, ctxt: sense_organ]");
        let n = nase.resolve(&"gend".parse().unwrap()).unwrap();
        assert_eq!(nase.ty(n), h.ty("fem"));
        assert!(nase.resolve(&"gend.x".parse().unwrap()).is_none());
        let verb = fs(
            &h,
            "[gen: u_g∨npnom∨npnom_npacc, ctxt: arg_struc, args: <[loc: [cont: [gen: u_g∨sense_organ, ctxt: nom_sem]]], [loc: [cont: [gen: u_g∨smell, ctxt: nom_sem]]] | _>]",
        );
        assert_eq!(
            verb.type_at(&"args[1].loc.cont.gen".parse().unwrap()),
            Some(h.ty("u_g").union(h.ty("smell")))
        );
        assert_eq!(verb.type_at(&"args[2].loc".parse().unwrap()), None);
    }

    #[test]
    fn extend_grows_open_lists() {
        let h = hier();
        let mut verb = fs(&h, "[gen: u_g, ctxt: arg_struc, args: <| _>]");
        let p0: FeaturePath = "args[0].loc.cont.gen".parse().unwrap();
        let n = verb.extend_path(&h, &p0, h.ty("u_g")).unwrap();
        assert_eq!(verb.ty(n), h.ty("u_g"));
        assert_eq!(
            verb.render(&h),
            "[gen: u_g, ctxt: arg_struc, args: <[loc: [cont: [gen: u_g]]] | _>]"
        );
        let before = verb.node_count();
        let again = verb.extend_path(&h, &p0, h.ty("ear")).unwrap();
        assert_eq!(verb.node_count(), before);
        assert_eq!(verb.ty(again), h.ty("u_g"));

        verb.extend_path(&h, &"args[1].loc.cont.gen".parse().unwrap(), h.ty("u_g"))
            .unwrap();
        let args = verb.resolve(&"args".parse().unwrap()).unwrap();
        assert_eq!(verb.graph().list_elements(args).0.len(), 2);
    }

    #[test]
    fn extend_refuses_closed_lists() {
        let h = hier();
        let mut verb = fs(&h, "[args: <[a: fem]>]");
        let err = verb
            .extend_path(&h, &"args[1].a".parse().unwrap(), h.top())
            .unwrap_err();
        assert!(matches!(err, FsError::ClosedList(_)));
    }

    #[test]
    fn revise_in_place_is_seen_through_reentrancy() {
        let h = hier();
        let mut x = fs(&h, "[ctxt: #1=sense_organ, other: #1, gen: u_g]");
        x.revise_type_at(&"ctxt".parse().unwrap(), h.ty("nose")).unwrap();
        assert_eq!(x.render(&h), "[ctxt: #1=nose, other: #1, gen: u_g]");
        let err = x.revise_type_at(&"nope".parse().unwrap(), h.ty("nose"));
        assert!(matches!(err, Err(FsError::Absent(_))));
        let err = x.revise_type_at(&"gen".parse().unwrap(), LeafSet::EMPTY);
        assert!(matches!(err, Err(FsError::Bottom(_))));
    }

    #[test]
    fn revise_to_identical_value_is_noop() {
        let h = hier();
        let mut x = fs(&h, "[gen: u_g∨npnom]");
        let before = x.render(&h);
        let v = x.type_at(&"gen".parse().unwrap()).unwrap();
        x.revise_type_at(&"gen".parse().unwrap(), v).unwrap();
        assert_eq!(x.render(&h), before);
        let grown = v.union(h.ty("npnom_npacc"));
        x.revise_type_at(&"gen".parse().unwrap(), grown).unwrap();
        assert_eq!(x.render(&h), "[gen: u_g∨npnom∨npnom_npacc]");
    }

    #[test]
    fn copies_are_isolated_and_keep_sharing() {
        let h = hier();
        let orig = fs(&h, "[subj: #1=[ctxt: ear], arg-st: [args: <#1 | _>]]");
        assert_eq!(orig.shared_node_count(), 1);
        let mut copy = orig.clone();
        assert_eq!(copy.shared_node_count(), 1);
        copy.revise_type_at(&"subj.ctxt".parse().unwrap(), h.ty("nose")).unwrap();
        assert_eq!(
            copy.type_at(&"arg-st.args[0].ctxt".parse().unwrap()),
            Some(h.ty("nose"))
        );
        assert_eq!(orig.type_at(&"subj.ctxt".parse().unwrap()), Some(h.ty("ear")));
    }

    #[test]
    fn subsumption_checks_reentrancy() {
        let h = hier();
        let g = fs(&h, "[a: #1=[], b: #1]");
        let s = fs(&h, "[a: fem, b: fem]");
        assert!(!fs_subsumes(&g, &s));
        assert!(fs_subsumes(&s.unify(&g).unwrap().without_feature("zzz"), &s.unify(&g).unwrap()));
        assert!(fs_subsumes(&fs(&h, "[a: gender]"), &s));
        assert!(!fs_subsumes(&s, &fs(&h, "[a: gender]")));
    }
}
