//! Persistent lexicon: form-indexed entries, a version counter, a text store
//! in the lexicon source format and a JSON-lines audit log.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fstruct::{FeaturePath, FeatureStructure, Step, FIRST};
use crate::grammar::{parse_entry_body, Grammar, LexicalEntry, Origin};
use crate::revision::{display_style, AuditRecord, CandidateRecord, PendingHypothesis, RevisionError};
use crate::syntax::{quote, Cursor, SyntaxError};
use crate::typelattice::TypeHierarchy;

const STORE_HEADER: &str = "% lexlearn lexicon store";

#[derive(Debug, Error)]
pub enum LexError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("line {line}: duplicate entry for \"{form}\"")]
    Duplicate { form: String, line: usize },
    #[error("no entry for \"{0}\"")]
    Missing(String),
    #[error("line {line}: bad record: {msg}")]
    Record { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_error(path: &Path, source: std::io::Error) -> LexError {
    LexError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// On-disk form of a pending hypothesis; the form is given by its entry.
#[derive(Serialize, Deserialize)]
struct PendingRecord {
    solution: usize,
    sentence: String,
    candidates: Vec<CandidateRecord>,
}

#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, LexicalEntry>,
    version: u64,
}

impl Lexicon {
    /// Parses a lexicon source or store file.
    pub fn load_string(text: &str, grammar: &Grammar) -> Result<Lexicon, LexError> {
        let h = grammar.hierarchy();
        let mut c = Cursor::new(text, Some('%'));
        let mut lex = Lexicon::default();
        c.skip_ws();
        if c.eat("version") {
            c.skip_ws();
            let at = c.pos();
            let digits = c.take_while(|ch| ch.is_ascii_digit());
            lex.version = digits.parse().map_err(|_| c.error_at(at, "expected a version number"))?;
        }
        loop {
            c.skip_ws();
            if c.at_end() {
                break;
            }
            let at = c.pos();
            c.expect("entry")?;
            let (form, origin, disjuncts) = parse_entry_body(&mut c, grammar)?;
            let mut pending = Vec::new();
            if c.eat("pending") {
                c.expect("{")?;
                loop {
                    c.skip_ws();
                    if c.eat("}") {
                        break;
                    }
                    let line_at = c.pos();
                    let line = c.take_while(|ch| ch != '\n');
                    let line_no = c.line_col(line_at).0;
                    let bad = |msg: String| LexError::Record { line: line_no, msg };
                    let rec: PendingRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
                    let candidates = rec
                        .candidates
                        .iter()
                        .map(|r| r.to_candidate(h))
                        .collect::<Result<Vec<_>, RevisionError>>()
                        .map_err(|e| bad(e.to_string()))?;
                    pending.push(PendingHypothesis {
                        form: form.clone(),
                        solution: rec.solution,
                        sentence: rec.sentence,
                        candidates,
                    });
                }
            }
            c.expect(".")?;
            if lex.entries.contains_key(&form) {
                return Err(LexError::Duplicate {
                    form,
                    line: c.line_col(at).0,
                });
            }
            lex.entries.insert(
                form.clone(),
                LexicalEntry {
                    form,
                    disjuncts,
                    origin,
                    pending,
                },
            );
        }
        Ok(lex)
    }

    pub fn load(path: &Path, grammar: &Grammar) -> Result<Lexicon, LexError> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Lexicon::load_string(&text, grammar)
    }

    /// Deterministic store text: entries sorted by form.
    pub fn save_string(&self, h: &TypeHierarchy) -> String {
        let mut out = format!("{STORE_HEADER}\nversion {}\n", self.version);
        for entry in self.entries.values() {
            out.push_str(&format!("\nentry {}", quote(&entry.form)));
            if entry.origin == Origin::Acquired {
                out.push_str(" origin acquired");
            }
            out.push_str(" :=\n    ");
            out.push_str(&entry.render(h).join("\n  | "));
            if !entry.pending.is_empty() {
                out.push_str("\n  pending {\n");
                for p in &entry.pending {
                    let rec = PendingRecord {
                        solution: p.solution,
                        sentence: p.sentence.clone(),
                        candidates: p
                            .candidates
                            .iter()
                            .map(|c| CandidateRecord::from_candidate(c, h))
                            .collect(),
                    };
                    let json = serde_json::to_string(&rec).expect("pending records serialize");
                    out.push_str(&format!("    {json}\n"));
                }
                out.push_str("  }");
            }
            out.push_str(" .\n");
        }
        out
    }

    pub fn save(&self, path: &Path, h: &TypeHierarchy) -> Result<(), LexError> {
        fs::write(path, self.save_string(h)).map_err(|e| io_error(path, e))
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub(crate) fn set_version(&mut self, version: u64) {
        self.version = version;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &LexicalEntry> {
        self.entries.values()
    }

    pub fn entry(&self, form: &str) -> Option<&LexicalEntry> {
        self.entries.get(form)
    }

    /// The stored spelling of a token: the form itself, or its
    /// decapitalized variant when only that is listed.
    pub fn canonical_form(&self, token: &str) -> String {
        if self.entries.contains_key(token) {
            return token.to_string();
        }
        let mut chars = token.chars();
        if let Some(first) = chars.next() {
            let lowered: String = first.to_lowercase().chain(chars).collect();
            if self.entries.contains_key(&lowered) {
                return lowered;
            }
        }
        token.to_string()
    }

    /// Fresh copies of the disjuncts for `token`; unseen forms get the
    /// generic unknown-word entry.
    pub fn lookup(&self, token: &str, grammar: &Grammar) -> Vec<FeatureStructure> {
        let form = self.canonical_form(token);
        match self.entries.get(&form) {
            Some(e) => e.disjuncts.clone(),
            None => grammar.generic_unknown_entry(&form).disjuncts,
        }
    }

    pub fn retract(&mut self, form: &str) -> Result<LexicalEntry, LexError> {
        self.entries
            .remove(form)
            .ok_or_else(|| LexError::Missing(form.to_string()))
    }

    /// Inserts `entry`, replacing any entry with the same form.
    pub fn assert(&mut self, entry: LexicalEntry) {
        self.entries.insert(entry.form.clone(), entry);
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingHypothesis> {
        self.entries.values().flat_map(|e| e.pending.iter())
    }
}

/// User-facing rendering of an entry: markers for specializable slots are
/// hidden, pending hypotheses listed.
pub fn show_entry(entry: &LexicalEntry, h: &TypeHierarchy) -> String {
    let origin = match entry.origin {
        Origin::Known => "known",
        Origin::Acquired => "acquired",
    };
    let mut out = format!("{} ({origin})\n", entry.form);
    for d in &entry.disjuncts {
        out.push_str(&format!("  {}\n", d.render_with(h, display_style())));
    }
    for p in &entry.pending {
        for c in &p.candidates {
            out.push_str(&format!("  pending (solution {}): {}\n", p.solution + 1, c.describe(h)));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
enum Slot {
    Leaf(String),
    Element(String),
}

fn slots(fs: &FeatureStructure, h: &TypeHierarchy) -> Vec<(String, Slot)> {
    fn walk(
        fs: &FeatureStructure,
        h: &TypeHierarchy,
        node: crate::fstruct::NodeId,
        prefix: &FeaturePath,
        out: &mut Vec<(String, Slot)>,
    ) {
        let g = fs.graph();
        if g.feature(node, FIRST).is_some() {
            let (elems, _) = g.list_elements(node);
            for (k, elem) in elems.into_iter().enumerate() {
                let path = prefix.index(k);
                let sub = FeatureStructure::from_graph(g, elem).expect("entries are acyclic");
                out.push((path.to_string(), Slot::Element(sub.render_with(h, display_style()))));
                walk(fs, h, elem, &path, out);
            }
            return;
        }
        if !g.has_features(node) {
            out.push((prefix.to_string(), Slot::Leaf(h.display_without_spec_marker(g.ty(node)))));
            return;
        }
        for (name, child) in g.features(node) {
            walk(fs, h, child, &prefix.feature(name), out);
        }
    }
    let mut out = Vec::new();
    walk(fs, h, fs.root(), &FeaturePath::root(), &mut out);
    out
}

fn diff_disjunct(h: &TypeHierarchy, before: &FeatureStructure, after: &FeatureStructure, tag: &str) -> Vec<String> {
    let old = slots(before, h);
    let new = slots(after, h);
    let old_map: BTreeMap<&str, &Slot> = old.iter().map(|(p, s)| (p.as_str(), s)).collect();
    let new_map: BTreeMap<&str, &Slot> = new.iter().map(|(p, s)| (p.as_str(), s)).collect();
    let mut lines = Vec::new();
    let mut side = |entries: &[(String, Slot)], other: &BTreeMap<&str, &Slot>, added: bool| {
        let mut covered: Vec<String> = Vec::new();
        for (path, slot) in entries {
            let inside = covered
                .iter()
                .any(|c| path.starts_with(c.as_str()) && path[c.len()..].starts_with(['.', '[']));
            if inside {
                continue;
            }
            let present = other.get(path.as_str());
            let (Slot::Leaf(text) | Slot::Element(text)) = slot;
            match (slot, present) {
                (Slot::Element(_), None) => {
                    covered.push(path.clone());
                    lines.push(if added {
                        format!("{tag}{path}: (none) → {text}")
                    } else {
                        format!("{tag}{path}: {text} → (none)")
                    });
                }
                (Slot::Leaf(_), None) => lines.push(if added {
                    format!("{tag}{path}: (none) → {text}")
                } else {
                    format!("{tag}{path}: {text} → (none)")
                }),
                (Slot::Leaf(_), Some(Slot::Leaf(o))) if added && o != text => {
                    lines.push(format!("{tag}{path}: {o} → {text}"));
                }
                _ => {}
            }
        }
    };
    side(&old, &new_map, false);
    side(&new, &old_map, true);
    lines
}

/// Changed slots between two versions of an entry, as `path: old → new`.
/// Disjuncts are paired by head type when their number changed.
pub fn diff(h: &TypeHierarchy, before: &LexicalEntry, after: &LexicalEntry) -> Vec<String> {
    let mut lines = Vec::new();
    let (nb, na) = (before.disjuncts.len(), after.disjuncts.len());
    if nb != na {
        lines.push(format!("disjuncts: {nb} → {na}"));
    }
    let head: FeaturePath = FeaturePath::from_steps(vec![Step::Feature("head".into())]);
    let mut used: BTreeSet<usize> = BTreeSet::new();
    for (i, a) in after.disjuncts.iter().enumerate() {
        let partner = if nb == na {
            Some(i)
        } else {
            let at = a.type_at(&head);
            (0..nb).find(|j| {
                !used.contains(j)
                    && match (at, before.disjuncts[*j].type_at(&head)) {
                        (Some(x), Some(y)) => x.intersects(y),
                        _ => false,
                    }
            })
        };
        let tag = if na > 1 { format!("[{i}] ") } else { String::new() };
        match partner {
            Some(j) => {
                used.insert(j);
                lines.extend(diff_disjunct(h, &before.disjuncts[j], a, &tag));
            }
            None => lines.push(format!("{tag}(none) → {}", a.render_with(h, display_style()))),
        }
    }
    lines
}

/// Append-only JSON-lines audit log.
#[derive(Clone, Debug)]
pub struct AuditLog {
    path: PathBuf,
}

impl AuditLog {
    pub fn new(path: impl Into<PathBuf>) -> AuditLog {
        AuditLog { path: path.into() }
    }

    /// The log kept next to a store file.
    pub fn for_store(store: &Path) -> AuditLog {
        let mut name = store.as_os_str().to_owned();
        name.push(".audit.jsonl");
        AuditLog::new(PathBuf::from(name))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, records: &[AuditRecord]) -> Result<(), LexError> {
        if records.is_empty() {
            return Ok(());
        }
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| io_error(&self.path, e))?;
        let mut buf = String::new();
        for r in records {
            buf.push_str(&serde_json::to_string(r).expect("audit records serialize"));
            buf.push('\n');
        }
        f.write_all(buf.as_bytes()).map_err(|e| io_error(&self.path, e))
    }

    /// All records; a missing log reads as empty.
    pub fn read(&self) -> Result<Vec<AuditRecord>, LexError> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_error(&self.path, e)),
        };
        parse_audit(&text)
    }
}

pub fn parse_audit(text: &str) -> Result<Vec<AuditRecord>, LexError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LexError::Record {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::DEMO_LEXICON;

    #[test]
    fn demo_lexicon_loads() {
        let g = Grammar::demo();
        let lex = Lexicon::load_string(DEMO_LEXICON, &g).unwrap();
        assert_eq!(lex.len(), 18);
        assert_eq!(lex.version(), 0);
        assert_eq!(lex.entry("den").unwrap().disjuncts.len(), 2);
        assert!(lex.entries().all(|e| e.origin == Origin::Known));
    }

    #[test]
    fn demo_gen_slots_carry_marker_and_known_entries_have_no_spec_marker() {
        let g = Grammar::demo();
        let lex = Lexicon::load_string(DEMO_LEXICON, &g).unwrap();
        for e in lex.entries() {
            for d in &e.disjuncts {
                for (path, t) in d.leaf_paths() {
                    if path.last_feature() == Some("gen") {
                        assert!(t.intersects(g.gen_marker()), "{} {path}", e.form);
                    }
                    if t != g.hierarchy().top() {
                        assert!(!t.intersects(g.spec_marker()), "{} {path}", e.form);
                    }
                }
            }
        }
    }

    #[test]
    fn duplicate_form_is_named() {
        let g = Grammar::demo();
        let text = "entry \"ist\" := [head: cop] .\nentry \"ist\" := [head: cop] .\n";
        let err = Lexicon::load_string(text, &g).unwrap_err();
        assert!(matches!(&err, LexError::Duplicate { form, line: 2 } if form == "ist"), "{err}");
        assert!(err.to_string().contains("\"ist\""));
    }

    #[test]
    fn retract_missing_form_fails() {
        let mut lex = Lexicon::default();
        assert!(matches!(lex.retract("nix"), Err(LexError::Missing(_))));
    }

    #[test]
    fn assert_after_retract_is_identity() {
        let g = Grammar::demo();
        let h = g.hierarchy();
        let mut lex = Lexicon::load_string(DEMO_LEXICON, &g).unwrap();
        let before = lex.save_string(h);
        let e = lex.retract("Ohr").unwrap();
        lex.assert(e);
        assert_eq!(lex.save_string(h), before);
    }

    #[test]
    fn unchanged_entry_has_empty_diff() {
        let g = Grammar::demo();
        let lex = Lexicon::load_string(DEMO_LEXICON, &g).unwrap();
        let e = lex.entry("Dendriten").unwrap();
        assert!(diff(g.hierarchy(), e, e).is_empty());
    }

    #[test]
    fn canonical_form_decapitalizes_only_when_needed() {
        let g = Grammar::demo();
        let lex = Lexicon::load_string(DEMO_LEXICON, &g).unwrap();
        assert_eq!(lex.canonical_form("Die"), "die");
        assert_eq!(lex.canonical_form("Ohr"), "Ohr");
        assert_eq!(lex.canonical_form("Nase"), "Nase");
    }

    #[test]
    fn store_round_trip_is_byte_identical() {
        let g = Grammar::demo();
        let h = g.hierarchy();
        let lex = Lexicon::load_string(DEMO_LEXICON, &g).unwrap();
        let once = lex.save_string(h);
        let twice = Lexicon::load_string(&once, &g).unwrap().save_string(h);
        assert_eq!(once, twice);
    }
}
