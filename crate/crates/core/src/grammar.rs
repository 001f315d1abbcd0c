//! Sign geometry, generic unknown-word entries, revisability clauses and
//! the argument-frame to valence-type mapping.
//!
//! Signs are flat: `phon`, `head` (typed `noun`, `verb`, `adj`, `det` or
//! `cop`, carrying head features), `cont` for nouns and `arg-st` for verbs.
//!
//! ```text
//! noun: [phon, head: noun[case, num], cont: [ind: [gend, num], gen, ctxt]]
//! adj:  [phon, head: adj[prd: [gen, ctxt], mod_sem]]
//! verb: [phon, head: verb[num], arg-st: [gen, ctxt, args: <[loc: [cont: [gen, ctxt]], case], ...>]]
//! ```

use std::sync::Arc;

use thiserror::Error;

use crate::fstruct::{parse_avm, FeaturePath, FeatureStructure, ListTypes};
use crate::revision::PendingHypothesis;
use crate::syntax::{Cursor, SyntaxError};
use crate::typelattice::{LeafSet, TypeHierarchy};

pub const DEMO_TYPES: &str = include_str!("../data/demo.types");
pub const DEMO_CLAUSES: &str = include_str!("../data/demo.clauses");
pub const DEMO_LEXICON: &str = include_str!("../data/demo.lex");
pub const DEMO_SCRIPT: &str = include_str!("../data/demo.script");

const GENERIC_NOUN: &str = "[head: noun[case: case, num: #1=num], \
     cont: [ind: [gend: u_s∨gender, num: #1], gen: u_g, ctxt: u_s∨nom_sem]]";
const GENERIC_ADJ: &str = "[head: adj[prd: [gen: u_g, ctxt: prd], mod_sem: nom_sem]]";
const GENERIC_VERB: &str = "[head: verb[num: num], arg-st: [gen: u_g, ctxt: arg_struc, args: <| _>]]";

/// Types every grammar over this sign geometry needs.
const REQUIRED_TYPES: &[&str] = &[
    "u_g", "u_s", "noun", "verb", "adj", "det", "cop", "elist", "nelist", "list", "nom", "acc",
    "dat", "pred", "attr", "prd", "gender", "num", "case", "nom_sem", "arg_struc", "npnom",
    "npnom_npacc", "npnom_npdat",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("hierarchy lacks required type `{0}`")]
    MissingType(String),
    #[error("clause file line {line}: {msg}")]
    Clause { line: usize, msg: String },
    #[error("clause file: {0}")]
    ClauseSyntax(SyntaxError),
    #[error("no valence type for argument frame {0}")]
    UnmappedFrame(String),
    #[error("internal template error: {0}")]
    Template(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClauseKind {
    Generalizable,
    Specializable,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClauseSlots {
    Generalizable { gen: FeaturePath, ctxt: FeaturePath },
    Specializable { spec: FeaturePath },
}

/// A grammar-declared pattern locating revisable slots in a word's sign.
#[derive(Clone, Debug)]
pub struct RevisabilityClause {
    pub name: String,
    pub anchor: FeatureStructure,
    /// `None`: match the whole sign. `Some(p)`: match each element of the
    /// list at `p`.
    pub scope: Option<FeaturePath>,
    pub slots: ClauseSlots,
}

impl RevisabilityClause {
    pub fn kind(&self) -> ClauseKind {
        match self.slots {
            ClauseSlots::Generalizable { .. } => ClauseKind::Generalizable,
            ClauseSlots::Specializable { .. } => ClauseKind::Specializable,
        }
    }

    /// Type given to a ctxt slot that has to be created in a lexical entry.
    pub fn ctxt_default(&self) -> Option<LeafSet> {
        match &self.slots {
            ClauseSlots::Generalizable { ctxt, .. } => self.anchor.type_at(ctxt),
            ClauseSlots::Specializable { .. } => None,
        }
    }
}

/// Parses a clause file: one clause per line, `%` comments.
///
/// `clause <name> <generalizable|specializable> anchor <AVM> [scope each <path>]
/// gen=<path> ctxt=<path> | spec=<path>.`
pub fn load_clauses(text: &str, h: &TypeHierarchy) -> Result<Vec<RevisabilityClause>, GrammarError> {
    let mut clauses: Vec<RevisabilityClause> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('%').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| GrammarError::Clause { line, msg };
        let mut c = Cursor::new(content, None);
        let kw = c.ident().map_err(|e| err(e.msg))?;
        if kw != "clause" {
            return Err(err(format!("expected `clause`, found `{kw}`")));
        }
        let name = c.ident().map_err(|e| err(e.msg))?.to_string();
        if clauses.iter().any(|cl| cl.name == name) {
            return Err(err(format!("duplicate clause `{name}`")));
        }
        let kind = match c.ident().map_err(|e| err(e.msg))? {
            "generalizable" => ClauseKind::Generalizable,
            "specializable" => ClauseKind::Specializable,
            other => return Err(err(format!("unknown clause kind `{other}`"))),
        };
        if !c.eat("anchor") {
            return Err(err("expected `anchor`".into()));
        }
        let anchor = parse_avm(&mut c, h).map_err(|e| err(format!("column {}: {}", e.col, e.msg)))?;
        let rest = c.rest().trim();
        let rest = rest
            .strip_suffix('.')
            .ok_or_else(|| err("clause must end with `.`".into()))?;
        let words: Vec<&str> = rest.split_whitespace().collect();
        let mut scope = None;
        let mut gen = None;
        let mut ctxt = None;
        let mut spec = None;
        let mut k = 0;
        while k < words.len() {
            let w = words[k];
            let parse_path = |s: &str| s.parse::<FeaturePath>().map_err(|e| err(e.to_string()));
            if w == "scope" {
                if words.get(k + 1) != Some(&"each") || k + 2 >= words.len() {
                    return Err(err("expected `scope each <path>`".into()));
                }
                scope = Some(parse_path(words[k + 2])?);
                k += 3;
                continue;
            }
            match w.split_once('=') {
                Some(("gen", p)) => gen = Some(parse_path(p)?),
                Some(("ctxt", p)) => ctxt = Some(parse_path(p)?),
                Some(("spec", p)) => spec = Some(parse_path(p)?),
                _ => return Err(err(format!("unexpected `{w}`"))),
            }
            k += 1;
        }
        let slots = match (kind, gen, ctxt, spec) {
            (ClauseKind::Generalizable, Some(gen), Some(ctxt), None) => {
                ClauseSlots::Generalizable { gen, ctxt }
            }
            (ClauseKind::Specializable, None, None, Some(spec)) => ClauseSlots::Specializable { spec },
            (ClauseKind::Generalizable, ..) => {
                return Err(err("generalizable clause needs gen=<path> ctxt=<path>".into()))
            }
            (ClauseKind::Specializable, ..) => {
                return Err(err("specializable clause needs spec=<path>".into()))
            }
        };
        let paths: Vec<&FeaturePath> = match &slots {
            ClauseSlots::Generalizable { gen, ctxt } => vec![gen, ctxt],
            ClauseSlots::Specializable { spec } => vec![spec],
        };
        for p in paths {
            if anchor.resolve(p).is_none() {
                return Err(err(format!("path `{p}` does not resolve in the anchor pattern")));
            }
        }
        clauses.push(RevisabilityClause {
            name,
            anchor,
            scope,
            slots,
        });
    }
    Ok(clauses)
}

/// Maps instantiated argument frames (the case of each argument, in order)
/// to atomic valence types.
#[derive(Clone, Debug)]
pub struct ValenceMapping {
    rules: Vec<(Vec<LeafSet>, LeafSet)>,
}

impl ValenceMapping {
    pub fn demo(h: &TypeHierarchy) -> ValenceMapping {
        let (nom, acc, dat) = (h.ty("nom"), h.ty("acc"), h.ty("dat"));
        ValenceMapping {
            rules: vec![
                (vec![nom], h.ty("npnom")),
                (vec![nom, acc], h.ty("npnom_npacc")),
                (vec![nom, dat], h.ty("npnom_npdat")),
            ],
        }
    }

    pub fn valence_type_of(&self, cases: &[LeafSet]) -> Option<LeafSet> {
        self.rules
            .iter()
            .find(|(frame, _)| frame.as_slice() == cases)
            .map(|(_, v)| *v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Known,
    Acquired,
}

/// A full-form lexical entry: DNF-expanded disjuncts plus metadata.
#[derive(Clone, Debug)]
pub struct LexicalEntry {
    pub form: String,
    pub disjuncts: Vec<FeatureStructure>,
    pub origin: Origin,
    pub pending: Vec<PendingHypothesis>,
}

impl LexicalEntry {
    pub fn render(&self, h: &TypeHierarchy) -> Vec<String> {
        self.disjuncts.iter().map(|d| d.render(h)).collect()
    }
}

/// Immutable grammar configuration: hierarchy, clauses, valence mapping and
/// the generic unknown-word templates.
#[derive(Clone, Debug)]
pub struct Grammar {
    hierarchy: Arc<TypeHierarchy>,
    lists: ListTypes,
    clauses: Vec<RevisabilityClause>,
    valence: ValenceMapping,
    generic: Vec<FeatureStructure>,
}

impl Grammar {
    pub fn new(hierarchy: TypeHierarchy, clauses_text: &str) -> Result<Grammar, GrammarError> {
        for name in REQUIRED_TYPES {
            if hierarchy.get(name).is_none() {
                return Err(GrammarError::MissingType(name.to_string()));
            }
        }
        let lists = ListTypes::of(&hierarchy).expect("list types checked above");
        let clauses = load_clauses(clauses_text, &hierarchy)?;
        let valence = ValenceMapping::demo(&hierarchy);
        let generic = [GENERIC_NOUN, GENERIC_ADJ, GENERIC_VERB]
            .iter()
            .map(|t| {
                FeatureStructure::parse(t, &hierarchy)
                    .map_err(|e| GrammarError::Template(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Grammar {
            hierarchy: Arc::new(hierarchy),
            lists,
            clauses,
            valence,
            generic,
        })
    }

    /// The shipped demo grammar.
    pub fn demo() -> Grammar {
        let h = TypeHierarchy::load(DEMO_TYPES).expect("demo hierarchy is valid");
        Grammar::new(h, DEMO_CLAUSES).expect("demo grammar is valid")
    }

    pub fn hierarchy(&self) -> &TypeHierarchy {
        &self.hierarchy
    }

    pub fn lists(&self) -> ListTypes {
        self.lists
    }

    pub fn clauses(&self) -> &[RevisabilityClause] {
        &self.clauses
    }

    pub fn clause(&self, name: &str) -> Option<&RevisabilityClause> {
        self.clauses.iter().find(|c| c.name == name)
    }

    pub fn valence(&self) -> &ValenceMapping {
        &self.valence
    }

    pub fn gen_marker(&self) -> LeafSet {
        self.hierarchy.ty("u_g")
    }

    pub fn spec_marker(&self) -> LeafSet {
        self.hierarchy.ty("u_s")
    }

    /// Case types of the frame in order; each must be a single case leaf.
    pub fn valence_type_of(&self, cases: &[LeafSet]) -> Result<LeafSet, GrammarError> {
        self.valence.valence_type_of(cases).ok_or_else(|| {
            let shown: Vec<String> = cases.iter().map(|c| self.hierarchy.display(*c)).collect();
            GrammarError::UnmappedFrame(format!("⟨{}⟩", shown.join(",")))
        })
    }

    /// Adds `phon` to a sign, or checks that it already matches.
    pub fn with_phon(&self, fs: &FeatureStructure, form: &str) -> Option<FeatureStructure> {
        let mut g = crate::fstruct::Graph::new();
        let top = self.hierarchy.top();
        let root = g.add(top);
        let phon = g.add_atom(top, form);
        g.set_feature(root, "phon", phon);
        let stub = FeatureStructure::from_graph(&g, root).ok()?;
        stub.unify(fs).ok()
    }

    /// Noun, adjective and verb disjuncts for a word never seen before.
    pub fn generic_unknown_entry(&self, form: &str) -> LexicalEntry {
        LexicalEntry {
            form: form.to_string(),
            disjuncts: self
                .generic
                .iter()
                .map(|t| self.with_phon(t, form).expect("templates carry no phon"))
                .collect(),
            origin: Origin::Acquired,
            pending: Vec::new(),
        }
    }

    /// Applies `f` to each generic template.
    pub fn map_generic(&mut self, f: impl Fn(&FeatureStructure) -> FeatureStructure) {
        self.generic = self.generic.iter().map(f).collect();
    }
}

/// Parses one `entry "<form>" := AVM ('|' AVM)*` header and body, leaving
/// the cursor before any trailing sections and the final `.`.
pub(crate) fn parse_entry_body(
    c: &mut Cursor<'_>,
    grammar: &Grammar,
) -> Result<(String, Origin, Vec<FeatureStructure>), SyntaxError> {
    let at = c.pos();
    c.skip_ws();
    let form = c.quoted()?;
    if form.is_empty() {
        return Err(c.error_at(at, "empty form"));
    }
    let origin = if c.eat("origin") {
        match c.ident()? {
            "acquired" => Origin::Acquired,
            "known" => Origin::Known,
            other => return Err(c.error(&format!("unknown origin `{other}`"))),
        }
    } else {
        Origin::Known
    };
    c.expect(":=")?;
    let mut disjuncts = Vec::new();
    loop {
        let start = c.pos();
        let fs = parse_avm(c, grammar.hierarchy())?;
        let fs = grammar
            .with_phon(&fs, &form)
            .ok_or_else(|| c.error_at(start, &format!("phon does not match form \"{form}\"")))?;
        disjuncts.push(fs);
        if !c.eat("|") {
            break;
        }
    }
    Ok((form, origin, disjuncts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generic_verb_matches_initial_state() {
        let g = Grammar::demo();
        let h = g.hierarchy();
        let e = g.generic_unknown_entry("perzipiert");
        assert_eq!(e.disjuncts.len(), 3);
        assert_eq!(e.origin, Origin::Acquired);
        let verb = &e.disjuncts[2];
        let argst = verb.resolve(&"arg-st".parse().unwrap()).unwrap();
        let sub = FeatureStructure::from_graph(verb.graph(), argst).unwrap();
        assert_eq!(sub.render(h), "[gen: u_g, ctxt: arg_struc, args: <| _>]");
        assert_eq!(
            verb.render(h),
            "[phon: \"perzipiert\", head: verb[num: num], arg-st: [gen: u_g, ctxt: arg_struc, args: <| _>]]"
        );
    }

    #[test]
    fn generic_noun_gender_carries_spec_marker() {
        let g = Grammar::demo();
        let h = g.hierarchy();
        let e = g.generic_unknown_entry("Nase");
        let gend = e.disjuncts[0].type_at(&"cont.ind.gend".parse().unwrap()).unwrap();
        let expected = ["fem", "masc", "neut", "u_s"]
            .iter()
            .fold(LeafSet::EMPTY, |acc, n| acc.union(h.ty(n)));
        assert_eq!(gend, expected);
    }

    #[test]
    fn generic_entries_are_fresh_copies() {
        let g = Grammar::demo();
        let h = g.hierarchy();
        let mut a = g.generic_unknown_entry("x");
        let b = g.generic_unknown_entry("x");
        assert_eq!(a.render(h), b.render(h));
        a.disjuncts[0]
            .revise_type_at(&"cont.ctxt".parse().unwrap(), h.ty("ear"))
            .unwrap();
        assert_ne!(a.render(h), b.render(h));
        assert_eq!(g.generic_unknown_entry("x").render(h), b.render(h));
    }

    #[test]
    fn valence_mapping() {
        let g = Grammar::demo();
        let h = g.hierarchy();
        let (nom, acc, dat) = (h.ty("nom"), h.ty("acc"), h.ty("dat"));
        assert_eq!(g.valence_type_of(&[nom]).unwrap(), h.ty("npnom"));
        assert_eq!(g.valence_type_of(&[nom, acc]).unwrap(), h.ty("npnom_npacc"));
        assert_eq!(g.valence_type_of(&[nom, dat]).unwrap(), h.ty("npnom_npdat"));
        assert!(matches!(
            g.valence_type_of(&[acc]),
            Err(GrammarError::UnmappedFrame(_))
        ));
        assert!(g.valence_type_of(&[nom, acc.union(dat)]).is_err());
    }

    #[test]
    fn shipped_clauses() {
        let g = Grammar::demo();
        let names: Vec<&str> = g.clauses().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            ["gender-spec", "nounsem-spec", "adjusage-gen", "valence-gen", "selres-gen"]
        );
        let selres = g.clause("selres-gen").unwrap();
        assert_eq!(selres.scope.as_ref().unwrap().to_string(), "arg-st.args");
        assert_eq!(selres.ctxt_default(), Some(g.hierarchy().ty("nom_sem")));
    }

    #[test]
    fn clause_errors() {
        let g = Grammar::demo();
        let h = g.hierarchy();
        let bad_path = "clause x specializable anchor [head: noun] spec=cont.ind.gend.";
        let err = load_clauses(bad_path, h).unwrap_err();
        assert!(err.to_string().contains("does not resolve"), "{err}");
        let missing = "\n\nclause y generalizable anchor [a: u_g] gen=a.";
        assert!(matches!(
            load_clauses(missing, h).unwrap_err(),
            GrammarError::Clause { line: 3, .. }
        ));
        let no_dot = "clause z specializable anchor [a: u_g] spec=a";
        assert!(load_clauses(no_dot, h).is_err());
    }

    #[test]
    fn missing_types_rejected() {
        let h = TypeHierarchy::load("leaf a b").unwrap();
        assert_eq!(
            Grammar::new(h, "").unwrap_err(),
            GrammarError::MissingType("u_g".into())
        );
    }
}
