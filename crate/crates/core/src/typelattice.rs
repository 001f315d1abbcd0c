//! Closed-world type system.
//!
//! Every type denotes a set of leaf types, so unification is set
//! intersection and type union is set union. Arbitrary boolean
//! combinations of declared types are therefore always representable.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

/// Name of the marker leaf for not-yet-observed generalizable information.
pub const GEN_MARKER: &str = "u_g";
/// Name of the marker leaf for still-revisable specializable information.
pub const SPEC_MARKER: &str = "u_s";

/// Maximum number of leaves a hierarchy may declare.
pub const MAX_LEAVES: usize = 128;

/// A set of leaf types, encoded as a bit vector over leaf indices.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LeafSet(u128);

impl LeafSet {
    pub const EMPTY: LeafSet = LeafSet(0);

    pub fn singleton(index: usize) -> LeafSet {
        debug_assert!(index < MAX_LEAVES);
        LeafSet(1u128 << index)
    }

    pub fn from_bits(bits: u128) -> LeafSet {
        LeafSet(bits)
    }

    pub fn bits(self) -> u128 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, index: usize) -> bool {
        index < MAX_LEAVES && self.0 & (1u128 << index) != 0
    }

    /// Greatest lower bound. An empty result is unification failure.
    pub fn unify(self, other: LeafSet) -> LeafSet {
        LeafSet(self.0 & other.0)
    }

    /// Least upper bound.
    pub fn union(self, other: LeafSet) -> LeafSet {
        LeafSet(self.0 | other.0)
    }

    pub fn minus(self, other: LeafSet) -> LeafSet {
        LeafSet(self.0 & !other.0)
    }

    /// `self` subsumes `other` iff `other ⊆ self`.
    pub fn subsumes(self, other: LeafSet) -> bool {
        other.0 & !self.0 == 0
    }

    pub fn strictly_subsumes(self, other: LeafSet) -> bool {
        self.subsumes(other) && self != other
    }

    pub fn intersects(self, other: LeafSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..MAX_LEAVES).filter(move |i| bits & (1u128 << i) != 0)
    }
}

impl fmt::Debug for LeafSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.indices()).finish()
    }
}

pub fn unify_types(a: LeafSet, b: LeafSet) -> LeafSet {
    a.unify(b)
}

pub fn union_types(a: LeafSet, b: LeafSet) -> LeafSet {
    a.union(b)
}

pub fn subsumes(a: LeafSet, b: LeafSet) -> bool {
    a.subsumes(b)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate name `{name}`")]
    Duplicate { line: usize, name: String },
    #[error("line {line}: unknown name `{name}`")]
    UnknownName { line: usize, name: String },
    #[error("line {line}: cyclic definition of `{name}`")]
    Cycle { line: usize, name: String },
    #[error("line {line}: `{name}` denotes the empty set")]
    Empty { line: usize, name: String },
    #[error("line {line}: named type `{name}` includes marker leaf `{marker}`")]
    MarkerInContent {
        line: usize,
        name: String,
        marker: String,
    },
    #[error("line {line}: more than {MAX_LEAVES} leaves declared")]
    TooManyLeaves { line: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeExprError {
    #[error("empty type expression")]
    Empty,
    #[error("unknown type name `{0}`")]
    UnknownName(String),
}

/// An immutable closed-world type hierarchy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeHierarchy {
    leaves: Vec<String>,
    leaf_index: HashMap<String, usize>,
    named: BTreeMap<String, LeafSet>,
    top: LeafSet,
}

impl TypeHierarchy {
    /// Parses a hierarchy declaration file.
    ///
    /// `leaf a b c` declares leaves; `type t = a | u` defines a named type
    /// as the union of its operands, which may be leaves or other named types
    /// defined anywhere in the file. `#` starts a comment.
    pub fn load(text: &str) -> Result<TypeHierarchy, HierarchyError> {
        let mut leaves: Vec<String> = Vec::new();
        let mut leaf_index = HashMap::new();
        // name -> (line, operands)
        let mut defs: BTreeMap<String, (usize, Vec<String>)> = BTreeMap::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut words = content.split_whitespace();
            match words.next() {
                Some("leaf") => {
                    let names: Vec<&str> = words.collect();
                    if names.is_empty() {
                        return Err(HierarchyError::Syntax {
                            line,
                            msg: "`leaf` needs at least one name".into(),
                        });
                    }
                    for name in names {
                        check_ident(name, line)?;
                        if leaf_index.contains_key(name) || defs.contains_key(name) {
                            return Err(HierarchyError::Duplicate {
                                line,
                                name: name.into(),
                            });
                        }
                        if leaves.len() == MAX_LEAVES {
                            return Err(HierarchyError::TooManyLeaves { line });
                        }
                        leaf_index.insert(name.to_string(), leaves.len());
                        leaves.push(name.to_string());
                    }
                }
                Some("type") => {
                    let rest = content["type".len()..].trim();
                    let (name, body) = rest.split_once('=').ok_or_else(|| {
                        HierarchyError::Syntax {
                            line,
                            msg: "expected `type <name> = <operand> | ...`".into(),
                        }
                    })?;
                    let name = name.trim();
                    check_ident(name, line)?;
                    if leaf_index.contains_key(name) || defs.contains_key(name) {
                        return Err(HierarchyError::Duplicate {
                            line,
                            name: name.into(),
                        });
                    }
                    let mut operands = Vec::new();
                    for op in body.split('|') {
                        let op = op.trim();
                        if op.is_empty() {
                            return Err(HierarchyError::Syntax {
                                line,
                                msg: "empty operand".into(),
                            });
                        }
                        check_ident(op, line)?;
                        operands.push(op.to_string());
                    }
                    defs.insert(name.to_string(), (line, operands));
                }
                Some(other) => {
                    return Err(HierarchyError::Syntax {
                        line,
                        msg: format!("unknown declaration `{other}`"),
                    })
                }
                None => {}
            }
        }

        // second pass: resolve names depth-first, detecting cycles
        let mut named: BTreeMap<String, LeafSet> = BTreeMap::new();
        let names: Vec<String> = defs.keys().cloned().collect();
        for name in &names {
            let mut stack = Vec::new();
            resolve_def(name, &defs, &leaf_index, &mut named, &mut stack)?;
        }

        let markers: Vec<(usize, &str)> = [GEN_MARKER, SPEC_MARKER]
            .iter()
            .filter_map(|m| leaf_index.get(*m).map(|&i| (i, *m)))
            .collect();
        for (name, set) in &named {
            for &(idx, marker) in &markers {
                if set.contains(idx) {
                    return Err(HierarchyError::MarkerInContent {
                        line: defs[name].0,
                        name: name.clone(),
                        marker: marker.into(),
                    });
                }
            }
        }

        let top = LeafSet(if leaves.len() == MAX_LEAVES {
            u128::MAX
        } else {
            (1u128 << leaves.len()) - 1
        });
        Ok(TypeHierarchy {
            leaves,
            leaf_index,
            named,
            top,
        })
    }

    pub fn top(&self) -> LeafSet {
        self.top
    }

    pub fn leaf_names(&self) -> &[String] {
        &self.leaves
    }

    pub fn named_types(&self) -> impl Iterator<Item = (&str, LeafSet)> {
        self.named.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn named_count(&self) -> usize {
        self.named.len()
    }

    /// Denotation of a leaf or named type.
    pub fn get(&self, name: &str) -> Option<LeafSet> {
        if let Some(&i) = self.leaf_index.get(name) {
            return Some(LeafSet::singleton(i));
        }
        self.named.get(name).copied()
    }

    /// Like [`get`](Self::get), for names the caller knows are declared.
    pub fn ty(&self, name: &str) -> LeafSet {
        self.get(name)
            .unwrap_or_else(|| panic!("type `{name}` is not declared"))
    }

    pub fn gen_marker(&self) -> Option<LeafSet> {
        self.get(GEN_MARKER)
    }

    pub fn spec_marker(&self) -> Option<LeafSet> {
        self.get(SPEC_MARKER)
    }

    /// Both markers, or the empty set where undeclared.
    pub fn markers(&self) -> LeafSet {
        self.gen_marker()
            .unwrap_or_default()
            .union(self.spec_marker().unwrap_or_default())
    }

    /// Parses a type expression: names joined by `∨` or `\/`.
    /// `⊤` / `top` denote the full leaf set.
    pub fn parse_expr(&self, text: &str) -> Result<LeafSet, TypeExprError> {
        let normalized = text.replace("\\/", "∨");
        let mut acc = LeafSet::EMPTY;
        let mut any = false;
        for part in normalized.split('∨') {
            let part = part.trim();
            if part.is_empty() {
                return Err(TypeExprError::Empty);
            }
            let set = match part {
                "⊤" | "top" => self.top,
                _ => self
                    .get(part)
                    .ok_or_else(|| TypeExprError::UnknownName(part.to_string()))?,
            };
            acc = acc.union(set);
            any = true;
        }
        if !any {
            return Err(TypeExprError::Empty);
        }
        Ok(acc)
    }

    /// Canonical display name of a leaf set.
    ///
    /// An exactly matching name wins (smallest denotation, then
    /// lexicographic). Otherwise marker leaves come first, followed by a
    /// greedy exact cover of the remaining leaves, largest name first.
    pub fn display(&self, set: LeafSet) -> String {
        if set.is_empty() {
            return "⊥".to_string();
        }
        if set == self.top && self.named.values().all(|&v| v != set) {
            return "⊤".to_string();
        }
        if let Some(name) = self.exact_name(set) {
            return name.to_string();
        }
        let markers = self.markers();
        let mut parts: Vec<&str> = Vec::new();
        for m in [GEN_MARKER, SPEC_MARKER] {
            if let Some(&i) = self.leaf_index.get(m) {
                if set.contains(i) {
                    parts.push(m);
                }
            }
        }
        let mut remaining = set.minus(markers);
        while !remaining.is_empty() {
            let (name, den) = self
                .candidates()
                .filter(|(_, den)| remaining.subsumes(*den))
                .min_by(|(na, da), (nb, db)| db.len().cmp(&da.len()).then(na.cmp(nb)))
                .expect("every leaf is a candidate");
            parts.push(name);
            remaining = remaining.minus(den);
        }
        parts.join("∨")
    }

    /// Display with the specializable marker suppressed.
    pub fn display_without_spec_marker(&self, set: LeafSet) -> String {
        match self.spec_marker() {
            Some(m) if set != m => self.display(set.minus(m)),
            _ => self.display(set),
        }
    }

    fn exact_name(&self, set: LeafSet) -> Option<&str> {
        self.candidates()
            .filter(|(_, den)| *den == set)
            .map(|(name, _)| name)
            .min()
    }

    fn candidates(&self) -> impl Iterator<Item = (&str, LeafSet)> {
        self.leaves
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), LeafSet::singleton(i)))
            .chain(self.named.iter().map(|(n, s)| (n.as_str(), *s)))
    }
}

fn check_ident(name: &str, line: usize) -> Result<(), HierarchyError> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(HierarchyError::Syntax {
            line,
            msg: format!("invalid name `{name}`"),
        })
    }
}

fn resolve_def(
    name: &str,
    defs: &BTreeMap<String, (usize, Vec<String>)>,
    leaves: &HashMap<String, usize>,
    named: &mut BTreeMap<String, LeafSet>,
    stack: &mut Vec<String>,
) -> Result<LeafSet, HierarchyError> {
    if let Some(&set) = named.get(name) {
        return Ok(set);
    }
    let (line, operands) = &defs[name];
    if stack.iter().any(|s| s == name) {
        return Err(HierarchyError::Cycle {
            line: *line,
            name: name.into(),
        });
    }
    stack.push(name.to_string());
    let mut acc = LeafSet::EMPTY;
    for op in operands {
        let set = if let Some(&i) = leaves.get(op) {
            LeafSet::singleton(i)
        } else if defs.contains_key(op) {
            resolve_def(op, defs, leaves, named, stack)?
        } else {
            return Err(HierarchyError::UnknownName {
                line: *line,
                name: op.clone(),
            });
        };
        acc = acc.union(set);
    }
    stack.pop();
    if acc.is_empty() {
        return Err(HierarchyError::Empty {
            line: *line,
            name: name.into(),
        });
    }
    named.insert(name.to_string(), acc);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "leaf fem masc neut\ntype non_fem = masc | neut\n";

    #[test]
    fn non_fem_denotes_masc_and_neut() {
        let h = TypeHierarchy::load(SMALL).unwrap();
        assert_eq!(h.ty("non_fem"), h.ty("masc").union(h.ty("neut")));
        assert_eq!(h.ty("non_fem").unify(h.ty("neut")), h.ty("neut"));
    }

    #[test]
    fn unknown_name_is_reported_with_line() {
        let err = TypeHierarchy::load("leaf a\n\ntype t = t2\n").unwrap_err();
        assert_eq!(
            err,
            HierarchyError::UnknownName {
                line: 3,
                name: "t2".into()
            }
        );
        assert!(err.to_string().contains("unknown name"));
    }

    #[test]
    fn cycles_duplicates_and_markers_rejected() {
        let cyc = TypeHierarchy::load("leaf a\ntype x = y | a\ntype y = x\n").unwrap_err();
        assert!(matches!(cyc, HierarchyError::Cycle { .. }));
        let dup = TypeHierarchy::load("leaf a b\ntype a = b\n").unwrap_err();
        assert_eq!(
            dup,
            HierarchyError::Duplicate {
                line: 2,
                name: "a".into()
            }
        );
        let marker = TypeHierarchy::load("leaf u_g a\ntype t = a | u_g\n").unwrap_err();
        assert!(matches!(marker, HierarchyError::MarkerInContent { line: 2, .. }));
    }

    #[test]
    fn forward_references_resolve() {
        let h = TypeHierarchy::load("type big = small | c\ntype small = a | b\nleaf a b c\n").unwrap();
        assert_eq!(h.ty("big").len(), 3);
    }

    #[test]
    fn expression_parsing_accepts_ascii_alias() {
        let h = TypeHierarchy::load(SMALL).unwrap();
        assert_eq!(h.parse_expr("fem\\/masc").unwrap(), h.parse_expr("fem ∨ masc").unwrap());
        assert_eq!(h.parse_expr("top").unwrap(), h.top());
        assert_eq!(
            h.parse_expr("fem∨zzz"),
            Err(TypeExprError::UnknownName("zzz".into()))
        );
    }

    #[test]
    fn display_prefers_smallest_then_lexicographic() {
        let h = TypeHierarchy::load("leaf a b c\ntype zz = a | b\ntype yy = a | b\ntype all = zz | c\n")
            .unwrap();
        assert_eq!(h.display(h.ty("zz")), "yy");
        assert_eq!(h.display(h.ty("a")), "a");
        assert_eq!(h.display(LeafSet::EMPTY), "⊥");
        assert_eq!(h.display(h.top()), "all");
    }
}
