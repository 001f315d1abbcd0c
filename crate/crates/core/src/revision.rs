//! Post-parse lexicon revision.
//!
//! 1. project each parse onto its words and match revisability clauses;
//! 2. compute update values (type union for generalizable slots, the parse
//!    value for specializable ones);
//! 3. keep only informative updates;
//! 4. revise the lexical entries in place.
//!
//! Ambiguous parses only apply the updates every solution agrees on. The
//! rest is kept as pending hypotheses on the entry.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fstruct::{FeaturePath, FeatureStructure, FsError, RenderStyle};
use crate::grammar::{ClauseKind, ClauseSlots, Grammar, LexicalEntry, Origin, RevisabilityClause};
use crate::lexstore::Lexicon;
use crate::parser::{parse, tokenize, ParseError, ParseSolution};
use crate::typelattice::{LeafSet, TypeHierarchy};

#[derive(Debug, Error)]
pub enum RevisionError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("bad audit record: {0}")]
    Record(String),
}

/// A proposed revision of one slot of one lexical disjunct.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateCandidate {
    pub form: String,
    pub disjunct: usize,
    pub clause: String,
    pub kind: ClauseKind,
    /// Absolute path within the lexical disjunct.
    pub path: FeaturePath,
    pub old: LeafSet,
    pub new: LeafSet,
    /// Paths to instantiate (with default types) before revising.
    pub ensure: Vec<(FeaturePath, LeafSet)>,
}

impl UpdateCandidate {
    fn key(&self) -> (&str, usize, &str, &FeaturePath, LeafSet) {
        (&self.form, self.disjunct, &self.clause, &self.path, self.new)
    }

    pub fn describe(&self, h: &TypeHierarchy) -> String {
        format!(
            "{} {} [{}]: {} → {}",
            self.form,
            self.path,
            self.clause,
            h.display_without_spec_marker(self.old),
            h.display_without_spec_marker(self.new)
        )
    }
}

/// Solution-specific updates held back because the parse was ambiguous.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingHypothesis {
    pub form: String,
    pub solution: usize,
    pub sentence: String,
    pub candidates: Vec<UpdateCandidate>,
}

impl PendingHypothesis {
    fn same_hypothesis(&self, other: &PendingHypothesis) -> bool {
        self.form == other.form
            && self.candidates.len() == other.candidates.len()
            && self
                .candidates
                .iter()
                .zip(&other.candidates)
                .all(|(a, b)| a.key() == b.key())
    }
}

#[derive(Clone, Debug)]
pub struct EntryChange {
    pub form: String,
    pub before: Option<LexicalEntry>,
    pub after: LexicalEntry,
}

#[derive(Clone, Debug, Default)]
pub struct UpdateReport {
    pub sentence: String,
    pub solutions: usize,
    pub applied: Vec<UpdateCandidate>,
    pub rejected: Vec<UpdateCandidate>,
    /// Newly stored pending hypotheses.
    pub pending: Vec<PendingHypothesis>,
    /// Pending hypotheses already stored by an earlier sentence.
    pub pending_known: Vec<PendingHypothesis>,
    pub changes: Vec<EntryChange>,
    pub errors: Vec<String>,
    /// Lexicon version after processing.
    pub version: u64,
}

impl UpdateReport {
    pub fn grammatical(&self) -> bool {
        self.solutions > 0
    }

    pub fn records(&self, h: &TypeHierarchy) -> Vec<AuditRecord> {
        let rec = |status, solution, c: &UpdateCandidate| AuditRecord {
            version: self.version,
            status,
            sentence: self.sentence.clone(),
            solution,
            candidate: CandidateRecord::from_candidate(c, h),
        };
        let mut out: Vec<AuditRecord> = Vec::new();
        out.extend(self.applied.iter().map(|c| rec(Status::Applied, None, c)));
        out.extend(self.rejected.iter().map(|c| rec(Status::Rejected, None, c)));
        for p in &self.pending {
            out.extend(p.candidates.iter().map(|c| rec(Status::Pending, Some(p.solution), c)));
        }
        out
    }

    pub fn render(&self, h: &TypeHierarchy) -> String {
        let mut out = format!("sentence: {}\n", self.sentence);
        if !self.grammatical() {
            out.push_str("no parse: sentence is ungrammatical; lexicon unchanged\n");
            return out;
        }
        out.push_str(&format!("solutions: {}\n", self.solutions));
        for c in &self.applied {
            out.push_str(&format!("applied: {}\n", c.describe(h)));
        }
        for c in &self.rejected {
            out.push_str(&format!("rejected: {}\n", c.describe(h)));
        }
        for p in &self.pending {
            for c in &p.candidates {
                out.push_str(&format!("pending (solution {}): {}\n", p.solution + 1, c.describe(h)));
            }
        }
        for p in &self.pending_known {
            for c in &p.candidates {
                out.push_str(&format!("pending, already recorded (solution {}): {}\n", p.solution + 1, c.describe(h)));
            }
        }
        for e in &self.errors {
            out.push_str(&format!("error: {e}\n"));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Applied,
    Rejected,
    Pending,
}

/// Serialized form of an [`UpdateCandidate`]; types are display strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub form: String,
    pub disjunct: usize,
    pub clause: String,
    pub kind: ClauseKind,
    pub path: FeaturePath,
    pub old: String,
    pub new: String,
    #[serde(default)]
    pub ensure: Vec<(FeaturePath, String)>,
}

impl CandidateRecord {
    pub fn from_candidate(c: &UpdateCandidate, h: &TypeHierarchy) -> CandidateRecord {
        CandidateRecord {
            form: c.form.clone(),
            disjunct: c.disjunct,
            clause: c.clause.clone(),
            kind: c.kind,
            path: c.path.clone(),
            old: h.display(c.old),
            new: h.display(c.new),
            ensure: c.ensure.iter().map(|(p, t)| (p.clone(), h.display(*t))).collect(),
        }
    }

    pub fn to_candidate(&self, h: &TypeHierarchy) -> Result<UpdateCandidate, RevisionError> {
        let ty = |s: &str| h.parse_expr(s).map_err(|e| RevisionError::Record(e.to_string()));
        Ok(UpdateCandidate {
            form: self.form.clone(),
            disjunct: self.disjunct,
            clause: self.clause.clone(),
            kind: self.kind,
            path: self.path.clone(),
            old: ty(&self.old)?,
            new: ty(&self.new)?,
            ensure: self
                .ensure
                .iter()
                .map(|(p, t)| Ok((p.clone(), ty(t)?)))
                .collect::<Result<_, RevisionError>>()?,
        })
    }
}

/// One line of the JSON-lines audit log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub version: u64,
    pub status: Status,
    pub sentence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<usize>,
    #[serde(flatten)]
    pub candidate: CandidateRecord,
}

/// A clause matched against a word, with the path prefix its slot paths
/// are relative to.
#[derive(Clone, Debug)]
pub struct ClauseMatch<'g> {
    pub clause: &'g RevisabilityClause,
    pub prefix: FeaturePath,
}

/// Step 1 filter: which clauses (and list elements, for scoped clauses)
/// unify with the word's projected sign.
pub fn match_revisability<'g>(
    word: &FeatureStructure,
    clauses: &'g [RevisabilityClause],
) -> Vec<ClauseMatch<'g>> {
    let mut out = Vec::new();
    for clause in clauses {
        match &clause.scope {
            None => {
                if word.unify(&clause.anchor).is_ok() {
                    out.push(ClauseMatch {
                        clause,
                        prefix: FeaturePath::root(),
                    });
                }
            }
            Some(scope) => {
                let Some(list) = word.resolve(scope) else {
                    continue;
                };
                let (elems, _) = word.graph().list_elements(list);
                for (k, elem) in elems.into_iter().enumerate() {
                    let sub = FeatureStructure::from_graph(word.graph(), elem)
                        .expect("projections are acyclic");
                    if sub.unify(&clause.anchor).is_ok() {
                        out.push(ClauseMatch {
                            clause,
                            prefix: scope.index(k),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Step 2: update values for every clause match in one solution.
pub fn compute_updates(
    solution: &ParseSolution,
    lexicon: &Lexicon,
    grammar: &Grammar,
) -> Vec<UpdateCandidate> {
    let h = grammar.hierarchy();
    let (u_g, u_s) = (grammar.gen_marker(), grammar.spec_marker());
    let markers = u_g.union(u_s);
    let mut out = Vec::new();
    for (i, word) in solution.words.iter().enumerate() {
        let projection = solution.projection(i);
        let lexical = &lexicon.lookup(&word.form, grammar)[word.disjunct];
        for m in match_revisability(&projection, grammar.clauses()) {
            let clause = m.clause;
            match &clause.slots {
                ClauseSlots::Generalizable { gen, ctxt } => {
                    let gen_path = m.prefix.join(gen);
                    let ctxt_path = m.prefix.join(ctxt);
                    let Some(observed) = projection.type_at(&ctxt_path) else {
                        continue;
                    };
                    let old = lexical.type_at(&gen_path).unwrap_or(u_g);
                    out.push(UpdateCandidate {
                        form: word.form.clone(),
                        disjunct: word.disjunct,
                        clause: clause.name.clone(),
                        kind: ClauseKind::Generalizable,
                        old,
                        new: old.union(observed.minus(markers)),
                        ensure: vec![
                            (gen_path.clone(), u_g),
                            (ctxt_path, clause.ctxt_default().unwrap_or(h.top())),
                        ],
                        path: gen_path,
                    });
                }
                ClauseSlots::Specializable { spec } => {
                    let path = m.prefix.join(spec);
                    let Some(old) = lexical.type_at(&path) else {
                        continue;
                    };
                    // only slots still marked revisable are eligible
                    if !old.intersects(u_s) {
                        continue;
                    }
                    let Some(observed) = projection.type_at(&path) else {
                        continue;
                    };
                    out.push(UpdateCandidate {
                        form: word.form.clone(),
                        disjunct: word.disjunct,
                        clause: clause.name.clone(),
                        kind: ClauseKind::Specializable,
                        path,
                        old,
                        new: observed.minus(u_s).union(u_s),
                        ensure: Vec::new(),
                    });
                }
            }
        }
    }
    out
}

/// Step 3: would applying the candidate change the entry?
pub fn informative(candidate: &UpdateCandidate, grammar: &Grammar) -> bool {
    match candidate.kind {
        ClauseKind::Generalizable => candidate.new.strictly_subsumes(candidate.old),
        ClauseKind::Specializable => {
            let u_s = grammar.spec_marker();
            candidate
                .old
                .minus(u_s)
                .strictly_subsumes(candidate.new.minus(u_s))
        }
    }
}

/// Splits per-solution candidates into those every solution agrees on and,
/// per solution, the remainder.
pub fn reconcile_solutions(
    per_solution: &[Vec<UpdateCandidate>],
) -> (Vec<UpdateCandidate>, Vec<(usize, Vec<UpdateCandidate>)>) {
    let Some(first) = per_solution.first() else {
        return (Vec::new(), Vec::new());
    };
    let mut agreed: Vec<UpdateCandidate> = Vec::new();
    for c in first {
        let everywhere = per_solution[1..]
            .iter()
            .all(|other| other.iter().any(|o| o.key() == c.key()));
        if everywhere && !agreed.iter().any(|a| a.key() == c.key()) {
            agreed.push(c.clone());
        }
    }
    let mut pending = Vec::new();
    for (i, cands) in per_solution.iter().enumerate() {
        let mut rest: Vec<UpdateCandidate> = Vec::new();
        for c in cands {
            if !agreed.iter().any(|a| a.key() == c.key()) && !rest.iter().any(|r| r.key() == c.key()) {
                rest.push(c.clone());
            }
        }
        if !rest.is_empty() {
            pending.push((i, rest));
        }
    }
    (agreed, pending)
}

#[derive(Clone, Debug, Default)]
pub struct ApplyOutcome {
    pub applied: Vec<UpdateCandidate>,
    pub changes: Vec<EntryChange>,
    pub errors: Vec<String>,
    /// Indices of the pending hypotheses that were newly stored.
    pub pending_stored: Vec<usize>,
}

/// Step 4: revise entries in place and store pending hypotheses. Each entry
/// is all-or-nothing: if any of its updates fails, it is left as it was.
/// Candidate disjunct indices refer to the entries before this call. The
/// version is bumped once if anything changed.
pub fn apply_updates(
    lexicon: &mut Lexicon,
    grammar: &Grammar,
    agreed: &[UpdateCandidate],
    pending: &[PendingHypothesis],
) -> ApplyOutcome {
    let mut outcome = ApplyOutcome::default();
    let mut forms: Vec<&str> = Vec::new();
    for c in agreed {
        if !forms.contains(&c.form.as_str()) {
            forms.push(&c.form);
        }
    }
    let mut remaps: HashMap<String, HashMap<usize, usize>> = HashMap::new();
    for form in forms {
        let cands: Vec<&UpdateCandidate> = agreed.iter().filter(|c| c.form == form).collect();
        let keep: BTreeSet<usize> = pending
            .iter()
            .filter(|p| p.form == form)
            .flat_map(|p| p.candidates.iter().map(|c| c.disjunct))
            .collect();
        let before = lexicon.entry(form).cloned();
        match revise_entry(before.clone(), grammar, form, &cands, keep) {
            Ok((entry, remap)) => {
                lexicon.assert(entry.clone());
                remaps.insert(form.to_string(), remap);
                outcome.applied.extend(cands.into_iter().cloned());
                outcome.changes.push(EntryChange {
                    form: form.to_string(),
                    before,
                    after: entry,
                });
            }
            Err(e) => outcome.errors.push(format!("{form}: {e}")),
        }
    }
    for (i, p) in pending.iter().enumerate() {
        let mut p = p.clone();
        if let Some(remap) = remaps.get(&p.form) {
            for c in &mut p.candidates {
                c.disjunct = remap[&c.disjunct];
            }
        }
        if add_pending(lexicon, grammar, p) {
            outcome.pending_stored.push(i);
        }
    }
    if !outcome.applied.is_empty() || !outcome.pending_stored.is_empty() {
        lexicon.bump_version();
    }
    outcome
}

/// Revised copy of an entry plus the old-to-new disjunct index map.
fn revise_entry(
    existing: Option<LexicalEntry>,
    grammar: &Grammar,
    form: &str,
    cands: &[&UpdateCandidate],
    keep: BTreeSet<usize>,
) -> Result<(LexicalEntry, HashMap<usize, usize>), FsError> {
    let h = grammar.hierarchy();
    let mut entry = existing.unwrap_or_else(|| grammar.generic_unknown_entry(form));
    // acquired entries keep only the contextually selected disjuncts
    let mut used = keep;
    used.extend(cands.iter().map(|c| c.disjunct));
    let mut remap: HashMap<usize, usize> = (0..entry.disjuncts.len()).map(|d| (d, d)).collect();
    if entry.origin == Origin::Acquired && used.len() < entry.disjuncts.len() {
        remap = used.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        entry.disjuncts = used.iter().map(|&d| entry.disjuncts[d].clone()).collect();
        // hypotheses about dropped disjuncts can no longer be confirmed
        entry.pending.retain_mut(|p| {
            p.candidates.iter_mut().all(|c| match remap.get(&c.disjunct) {
                Some(&d) => {
                    c.disjunct = d;
                    true
                }
                None => false,
            })
        });
    }
    for c in cands {
        let fs = remap
            .get(&c.disjunct)
            .and_then(|&d| entry.disjuncts.get_mut(d))
            .ok_or_else(|| FsError::Absent(c.path.clone()))?;
        for (path, default) in &c.ensure {
            fs.extend_path(h, path, *default)?;
        }
        let current = fs.type_at(&c.path).ok_or_else(|| FsError::Absent(c.path.clone()))?;
        let value = match c.kind {
            ClauseKind::Generalizable => current.union(c.new),
            ClauseKind::Specializable => current.unify(c.new),
        };
        fs.revise_type_at(&c.path, value)?;
    }
    Ok((entry, remap))
}

/// Stores a pending hypothesis on its entry unless an identical one is
/// already there. Returns whether it was added.
fn add_pending(lexicon: &mut Lexicon, grammar: &Grammar, p: PendingHypothesis) -> bool {
    let mut entry = lexicon
        .entry(&p.form)
        .cloned()
        .unwrap_or_else(|| grammar.generic_unknown_entry(&p.form));
    if entry.pending.iter().any(|q| q.same_hypothesis(&p)) {
        return false;
    }
    entry.pending.push(p);
    lexicon.assert(entry);
    true
}

fn group_pending(sentence: &str, sets: Vec<(usize, Vec<UpdateCandidate>)>) -> Vec<PendingHypothesis> {
    let mut out: Vec<PendingHypothesis> = Vec::new();
    for (solution, cands) in sets {
        for c in cands {
            match out
                .iter_mut()
                .find(|p| p.solution == solution && p.form == c.form)
            {
                Some(p) => p.candidates.push(c),
                None => out.push(PendingHypothesis {
                    form: c.form.clone(),
                    solution,
                    sentence: sentence.to_string(),
                    candidates: vec![c],
                }),
            }
        }
    }
    out
}

/// Runs the whole pipeline on one sentence.
pub fn process_sentence(
    lexicon: &mut Lexicon,
    grammar: &Grammar,
    sentence: &str,
) -> Result<UpdateReport, RevisionError> {
    let tokens = tokenize(sentence)?;
    let solutions = parse(&tokens, lexicon, grammar)?;
    let mut report = UpdateReport {
        sentence: sentence.trim().to_string(),
        solutions: solutions.len(),
        version: lexicon.version(),
        ..UpdateReport::default()
    };
    if solutions.is_empty() {
        return Ok(report);
    }
    let mut informative_sets = Vec::new();
    for s in &solutions {
        let (keep, reject): (Vec<_>, Vec<_>) = compute_updates(s, lexicon, grammar)
            .into_iter()
            .partition(|c| informative(c, grammar));
        for r in reject {
            if !report.rejected.iter().any(|x| x.key() == r.key()) {
                report.rejected.push(r);
            }
        }
        informative_sets.push(keep);
    }
    let (agreed, pending) = reconcile_solutions(&informative_sets);
    let pending = group_pending(&report.sentence, pending);
    let outcome = apply_updates(lexicon, grammar, &agreed, &pending);
    for (i, p) in pending.into_iter().enumerate() {
        if outcome.pending_stored.contains(&i) {
            report.pending.push(p);
        } else {
            report.pending_known.push(p);
        }
    }
    report.applied = outcome.applied;
    report.changes = outcome.changes;
    report.errors = outcome.errors;
    report.version = lexicon.version();
    Ok(report)
}

/// Rebuilds a lexicon by re-applying the applied and pending records of an
/// audit log, batch by batch, to `initial`.
pub fn replay(
    initial: &Lexicon,
    grammar: &Grammar,
    records: &[AuditRecord],
) -> Result<Lexicon, RevisionError> {
    let h = grammar.hierarchy();
    let mut lexicon = initial.clone();
    let mut i = 0;
    while i < records.len() {
        let version = records[i].version;
        let sentence = &records[i].sentence;
        let mut j = i;
        while j < records.len() && records[j].version == version && &records[j].sentence == sentence {
            j += 1;
        }
        let batch = &records[i..j];
        let applied: Vec<UpdateCandidate> = batch
            .iter()
            .filter(|r| r.status == Status::Applied)
            .map(|r| r.candidate.to_candidate(h))
            .collect::<Result<_, _>>()?;
        let mut sets: Vec<(usize, Vec<UpdateCandidate>)> = Vec::new();
        for r in batch.iter().filter(|r| r.status == Status::Pending) {
            let sol = r.solution.unwrap_or(0);
            let c = r.candidate.to_candidate(h)?;
            match sets.iter_mut().find(|(s, _)| *s == sol) {
                Some((_, v)) => v.push(c),
                None => sets.push((sol, vec![c])),
            }
        }
        let pending = group_pending(sentence, sets);
        let outcome = apply_updates(&mut lexicon, grammar, &applied, &pending);
        if let Some(e) = outcome.errors.first() {
            return Err(RevisionError::Record(format!("replay failed: {e}")));
        }
        lexicon.set_version(version);
        i = j;
    }
    Ok(lexicon)
}

/// Rendering used for user-facing entry display: `u_s` suppressed.
pub fn display_style() -> RenderStyle {
    RenderStyle {
        hide_spec_marker: true,
        sort_features: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::DEMO_LEXICON;

    fn cand(g: &Grammar, kind: ClauseKind, old: &str, new: &str) -> UpdateCandidate {
        let h = g.hierarchy();
        UpdateCandidate {
            form: "x".into(),
            disjunct: 0,
            clause: "c".into(),
            kind,
            path: "a.b".parse().unwrap(),
            old: h.parse_expr(old).unwrap(),
            new: h.parse_expr(new).unwrap(),
            ensure: Vec::new(),
        }
    }

    #[test]
    fn informativeness_ignores_markers() {
        let g = Grammar::demo();
        assert!(informative(&cand(&g, ClauseKind::Generalizable, "u_g", "u_g∨ear"), &g));
        assert!(!informative(&cand(&g, ClauseKind::Generalizable, "u_g∨ear", "u_g∨ear"), &g));
        assert!(informative(&cand(&g, ClauseKind::Specializable, "u_s∨nom_sem", "u_s∨nose"), &g));
        assert!(!informative(&cand(&g, ClauseKind::Specializable, "u_s∨fem", "u_s∨fem"), &g));
    }

    #[test]
    fn reconcile_keeps_only_shared_candidates() {
        let g = Grammar::demo();
        let shared = cand(&g, ClauseKind::Generalizable, "u_g", "u_g∨ear");
        let a = cand(&g, ClauseKind::Generalizable, "u_g", "u_g∨npnom_npacc");
        let b = cand(&g, ClauseKind::Generalizable, "u_g", "u_g∨npnom_npdat");
        let (agreed, pending) = reconcile_solutions(&[vec![shared.clone(), a.clone()], vec![b.clone(), shared.clone()]]);
        assert_eq!(agreed, vec![shared]);
        assert_eq!(pending, vec![(0, vec![a]), (1, vec![b])]);
    }

    #[test]
    fn ungrammatical_sentence_changes_nothing() {
        let g = Grammar::demo();
        let mut lex = Lexicon::load_string(DEMO_LEXICON, &g).unwrap();
        let before = lex.save_string(g.hierarchy());
        let r = process_sentence(&mut lex, &g, "Der sensible Geruch perzipiert.").unwrap();
        assert!(!r.grammatical());
        assert_eq!(lex.save_string(g.hierarchy()), before);
    }

    #[test]
    fn known_entries_keep_their_disjuncts() {
        let g = Grammar::demo();
        let mut lex = Lexicon::load_string(DEMO_LEXICON, &g).unwrap();
        process_sentence(&mut lex, &g, "Das Aktionspotential erreicht den Dendriten.").unwrap();
        assert_eq!(lex.entry("Dendriten").unwrap().disjuncts.len(), 2);
        let erreicht = lex.entry("erreicht").unwrap();
        assert_eq!(erreicht.origin, Origin::Acquired);
        assert_eq!(erreicht.disjuncts.len(), 1);
        assert_eq!(erreicht.pending.len(), 2);
    }

    #[test]
    fn pending_hypotheses_are_not_duplicated() {
        let g = Grammar::demo();
        let mut lex = Lexicon::load_string(DEMO_LEXICON, &g).unwrap();
        let s = "Das Aktionspotential erreicht den Dendriten.";
        process_sentence(&mut lex, &g, s).unwrap();
        let v = lex.version();
        let r = process_sentence(&mut lex, &g, s).unwrap();
        assert!(r.applied.is_empty());
        assert_eq!(lex.entry("erreicht").unwrap().pending.len(), 2);
        assert_eq!(lex.version(), v);
    }
}
