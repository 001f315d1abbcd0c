//! Tokenization and CKY chart parsing over a handful of binary rules.
//!
//! Each chart edge owns a private graph holding the phrase's head sign and
//! the signs of every word it spans, so a complete sentence edge yields the
//! per-word projections directly.

use thiserror::Error;

use crate::fstruct::{FeatureStructure, Graph, NodeId, UnifyFailure};
use crate::grammar::{Grammar, GrammarError};
use crate::lexstore::Lexicon;
use crate::typelattice::LeafSet;

pub const CHART_CAP: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty sentence")]
    Empty,
    #[error("chart exceeded {CHART_CAP} edges")]
    ChartOverflow,
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    pub pos: usize,
}

/// Splits on whitespace and strips sentence-final punctuation.
pub fn tokenize(sentence: &str) -> Result<Vec<Token>, ParseError> {
    let mut words: Vec<&str> = sentence.split_whitespace().collect();
    if let Some(last) = words.pop() {
        let stripped = last.trim_end_matches(['.', '!', '?']);
        if !stripped.is_empty() {
            words.push(stripped);
        }
    }
    if words.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(words
        .into_iter()
        .enumerate()
        .map(|(pos, w)| Token {
            form: w.to_string(),
            pos,
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Det,
    /// N̄: noun possibly with attributive adjectives.
    Noun,
    Adj,
    Verb,
    Copula,
    NounPhrase,
    VerbPhrase,
    Sentence,
}

#[derive(Clone, Debug)]
pub struct WordProjection {
    pub pos: usize,
    pub form: String,
    /// Index of the lexical disjunct this token was parsed with.
    pub disjunct: usize,
    pub node: NodeId,
}

/// One complete analysis of a sentence.
#[derive(Clone, Debug)]
pub struct ParseSolution {
    pub graph: Graph,
    pub root: NodeId,
    pub words: Vec<WordProjection>,
}

impl ParseSolution {
    pub fn root_fs(&self) -> FeatureStructure {
        FeatureStructure::from_graph(&self.graph, self.root).expect("solutions are acyclic")
    }

    /// The fully instantiated sign of word `i` in this solution.
    pub fn projection(&self, i: usize) -> FeatureStructure {
        FeatureStructure::from_graph(&self.graph, self.words[i].node).expect("solutions are acyclic")
    }
}

#[derive(Clone, Debug)]
struct Edge {
    cat: Category,
    start: usize,
    end: usize,
    graph: Graph,
    head: NodeId,
    /// Copular VP: node to be unified with the subject's `cont.ctxt`.
    pred_link: Option<NodeId>,
    /// Verbal VP: the argument list elements, subject first.
    frame: Vec<NodeId>,
    words: Vec<(usize, usize, NodeId)>,
}

/// Merged graph of two edges with the right edge's ids shifted.
struct Merge {
    g: Graph,
    left: Edge,
    right: Edge,
}

impl Merge {
    fn new(left: &Edge, right: &Edge) -> Merge {
        let mut g = left.graph.clone();
        let off = g.append(&right.graph);
        let shift = |n: NodeId| shift_id(n, off);
        let mut r = right.clone();
        r.head = shift(r.head);
        r.pred_link = r.pred_link.map(shift);
        r.frame = r.frame.iter().map(|&n| shift(n)).collect();
        r.words = r.words.iter().map(|&(p, d, n)| (p, d, shift(n))).collect();
        Merge {
            g,
            left: left.clone(),
            right: r,
        }
    }

    fn finish(
        self,
        cat: Category,
        head: NodeId,
        pred_link: Option<NodeId>,
        frame: Vec<NodeId>,
    ) -> Result<Edge, UnifyFailure> {
        let mut words = self.left.words.clone();
        words.extend(self.right.words.iter().copied());
        let mut handles = vec![head];
        handles.extend(pred_link);
        handles.extend(frame.iter().copied());
        handles.extend(words.iter().map(|w| w.2));
        let graph = self.g.compact(&mut handles)?;
        let mut it = handles.into_iter();
        let head = it.next().unwrap();
        let pred_link = pred_link.map(|_| it.next().unwrap());
        let frame: Vec<NodeId> = frame.iter().map(|_| it.next().unwrap()).collect();
        let words = words.iter().map(|&(p, d, _)| (p, d, it.next().unwrap())).collect();
        Ok(Edge {
            cat,
            start: self.left.start,
            end: self.right.end,
            graph,
            head,
            pred_link,
            frame,
            words,
        })
    }
}

fn shift_id(n: NodeId, off: usize) -> NodeId {
    n.shifted(off)
}

/// Follows `names` from `n`, creating unconstrained nodes where missing.
fn slot(g: &mut Graph, top: LeafSet, n: NodeId, names: &[&str]) -> NodeId {
    let mut cur = n;
    for name in names {
        cur = match g.feature(cur, name) {
            Some(c) => c,
            None => {
                let c = g.add(top);
                g.set_feature(cur, name, c);
                c
            }
        };
    }
    cur
}

struct ChartParser<'a> {
    grammar: &'a Grammar,
    top: LeafSet,
    edges: usize,
}

type RuleResult = Result<Option<Edge>, ParseError>;

impl ChartParser<'_> {
    fn ty(&self, name: &str) -> LeafSet {
        self.grammar.hierarchy().ty(name)
    }

    fn unify_with(&self, g: &mut Graph, n: NodeId, ty: LeafSet) -> Result<(), UnifyFailure> {
        let t = g.add(ty);
        g.unify(n, t)
    }

    fn lexical_edges(&self, pos: usize, disjuncts: Vec<FeatureStructure>) -> Vec<Edge> {
        let h = self.grammar.hierarchy();
        let mut out = Vec::new();
        for (d, fs) in disjuncts.into_iter().enumerate() {
            let Some(head_ty) = fs.type_at(&"head".parse().unwrap()) else {
                continue;
            };
            let cat = [
                ("noun", Category::Noun),
                ("verb", Category::Verb),
                ("adj", Category::Adj),
                ("det", Category::Det),
                ("cop", Category::Copula),
            ]
            .iter()
            .find(|(name, _)| h.ty(name).subsumes(head_ty))
            .map(|(_, c)| *c);
            let Some(cat) = cat else { continue };
            let root = fs.root();
            out.push(Edge {
                cat,
                start: pos,
                end: pos + 1,
                graph: fs.graph().clone(),
                head: root,
                pred_link: None,
                frame: Vec::new(),
                words: vec![(pos, d, root)],
            });
        }
        out
    }

    /// Builds an argument frame and aligns it with the verb's lexical
    /// `args` list. The sign's `args` is replaced by the closed frame.
    fn attach_frame(
        &self,
        g: &mut Graph,
        verb: NodeId,
        elems: &[NodeId],
    ) -> Result<(), UnifyFailure> {
        let lists = self.grammar.lists();
        let argst = slot(g, self.top, verb, &["arg-st"]);
        let args = match g.feature(argst, "args") {
            Some(a) => a,
            None => {
                let a = g.add(lists.list);
                g.set_feature(argst, "args", a);
                a
            }
        };
        let (lexical, tail) = g.list_elements(args);
        let open = !g.has_features(tail) && g.ty(tail).subsumes(lists.nelist);
        if lexical.len() > elems.len() && !open
            || lexical.len() < elems.len() && !open
            || lexical.len() == elems.len() && !open && !g.ty(tail).intersects(lists.elist)
        {
            return Err(UnifyFailure::TypeClash);
        }
        for (&l, &e) in lexical.iter().zip(elems) {
            g.unify(l, e)?;
        }
        let end = g.add(lists.elist);
        let frame = g.build_list(lists, elems, end);
        let argst = g.deref(argst);
        g.set_feature(argst, "args", frame);
        Ok(())
    }

    fn frame_element(&self, g: &mut Graph) -> NodeId {
        let e = g.add(self.top);
        slot(g, self.top, e, &["loc", "cont"]);
        slot(g, self.top, e, &["case"]);
        e
    }

    fn intransitive(&mut self, verb: &Edge) -> Option<Edge> {
        let mut g = verb.graph.clone();
        let subj = self.frame_element(&mut g);
        self.attach_frame(&mut g, verb.head, &[subj]).ok()?;
        let mut handles = vec![verb.head, subj];
        handles.extend(verb.words.iter().map(|w| w.2));
        let graph = g.compact(&mut handles).ok()?;
        Some(Edge {
            cat: Category::VerbPhrase,
            start: verb.start,
            end: verb.end,
            graph,
            head: handles[0],
            pred_link: None,
            frame: vec![handles[1]],
            words: verb
                .words
                .iter()
                .zip(&handles[2..])
                .map(|(&(p, d, _), &n)| (p, d, n))
                .collect(),
        })
    }

    fn combine(&mut self, left: &Edge, right: &Edge) -> RuleResult {
        use Category::*;
        let result = match (left.cat, right.cat) {
            (Det, Noun) => self.det_noun(left, right),
            (Adj, Noun) => self.adj_noun(left, right),
            (Verb, NounPhrase) => self.verb_object(left, right),
            (Copula, NounPhrase) => self.copula_np(left, right),
            (Copula, Adj) => self.copula_adj(left, right),
            (NounPhrase, VerbPhrase) => return self.sentence(left, right),
            _ => return Ok(None),
        };
        Ok(result.ok())
    }

    fn det_noun(&self, det: &Edge, noun: &Edge) -> Result<Edge, UnifyFailure> {
        let mut m = Merge::new(det, noun);
        let (d, n, top) = (m.left.head, m.right.head, self.top);
        let g = &mut m.g;
        let a = slot(g, top, d, &["head", "gend"]);
        let b = slot(g, top, n, &["cont", "ind", "gend"]);
        g.unify(a, b)?;
        for f in ["num", "case"] {
            let a = slot(g, top, d, &["head", f]);
            let b = slot(g, top, n, &["head", f]);
            g.unify(a, b)?;
        }
        m.finish(Category::NounPhrase, n, None, Vec::new())
    }

    fn adj_noun(&self, adj: &Edge, noun: &Edge) -> Result<Edge, UnifyFailure> {
        let mut m = Merge::new(adj, noun);
        let (a, n, top) = (m.left.head, m.right.head, self.top);
        let usage = slot(&mut m.g, top, a, &["head", "prd", "ctxt"]);
        self.unify_with(&mut m.g, usage, self.ty("attr"))?;
        let sel = slot(&mut m.g, top, a, &["head", "mod_sem"]);
        let sem = slot(&mut m.g, top, n, &["cont", "ctxt"]);
        m.g.unify(sel, sem)?;
        m.finish(Category::Noun, n, None, Vec::new())
    }

    fn verb_object(&self, verb: &Edge, np: &Edge) -> Result<Edge, UnifyFailure> {
        let mut m = Merge::new(verb, np);
        let (v, o, top) = (m.left.head, m.right.head, self.top);
        let case = slot(&mut m.g, top, o, &["head", "case"]);
        self.unify_with(&mut m.g, case, self.ty("acc").union(self.ty("dat")))?;
        let subj = self.frame_element(&mut m.g);
        let obj = self.frame_element(&mut m.g);
        let obj_cont = slot(&mut m.g, top, obj, &["loc", "cont"]);
        let np_cont = slot(&mut m.g, top, o, &["cont"]);
        m.g.unify(obj_cont, np_cont)?;
        let obj_case = slot(&mut m.g, top, obj, &["case"]);
        m.g.unify(obj_case, case)?;
        self.attach_frame(&mut m.g, v, &[subj, obj])?;
        m.finish(Category::VerbPhrase, v, None, vec![subj, obj])
    }

    fn copula_np(&self, cop: &Edge, np: &Edge) -> Result<Edge, UnifyFailure> {
        let mut m = Merge::new(cop, np);
        let (c, p, top) = (m.left.head, m.right.head, self.top);
        let case = slot(&mut m.g, top, p, &["head", "case"]);
        self.unify_with(&mut m.g, case, self.ty("nom"))?;
        let link = slot(&mut m.g, top, p, &["cont", "ctxt"]);
        m.finish(Category::VerbPhrase, c, Some(link), Vec::new())
    }

    fn copula_adj(&self, cop: &Edge, adj: &Edge) -> Result<Edge, UnifyFailure> {
        let mut m = Merge::new(cop, adj);
        let (c, a, top) = (m.left.head, m.right.head, self.top);
        let usage = slot(&mut m.g, top, a, &["head", "prd", "ctxt"]);
        self.unify_with(&mut m.g, usage, self.ty("pred"))?;
        let link = slot(&mut m.g, top, a, &["head", "mod_sem"]);
        m.finish(Category::VerbPhrase, c, Some(link), Vec::new())
    }

    fn sentence(&self, np: &Edge, vp: &Edge) -> RuleResult {
        let mut m = Merge::new(np, vp);
        let (s, v) = (m.left.head, m.right.head);
        let cases = match self.link_subject(&mut m, s, v) {
            Ok(c) => c,
            Err(_) => return Ok(None),
        };
        if let Some(cases) = cases {
            let valence = self.grammar.valence_type_of(&cases)?;
            let ctxt = slot(&mut m.g, self.top, v, &["arg-st", "ctxt"]);
            if self.unify_with(&mut m.g, ctxt, valence).is_err() {
                return Ok(None);
            }
        }
        Ok(m.finish(Category::Sentence, v, None, Vec::new()).ok())
    }

    /// Unifies the subject into the VP. For verbal VPs, returns the case of
    /// each frame element.
    fn link_subject(
        &self,
        m: &mut Merge,
        s: NodeId,
        v: NodeId,
    ) -> Result<Option<Vec<LeafSet>>, UnifyFailure> {
        let top = self.top;
        let case = slot(&mut m.g, top, s, &["head", "case"]);
        self.unify_with(&mut m.g, case, self.ty("nom"))?;
        let a = slot(&mut m.g, top, s, &["head", "num"]);
        let b = slot(&mut m.g, top, v, &["head", "num"]);
        m.g.unify(a, b)?;
        if let Some(link) = m.right.pred_link {
            let sem = slot(&mut m.g, top, s, &["cont", "ctxt"]);
            m.g.unify(link, sem)?;
            return Ok(None);
        }
        let frame = m.right.frame.clone();
        let Some(&first) = frame.first() else {
            return Ok(None);
        };
        let a = slot(&mut m.g, top, first, &["loc", "cont"]);
        let b = slot(&mut m.g, top, s, &["cont"]);
        m.g.unify(a, b)?;
        let a = slot(&mut m.g, top, first, &["case"]);
        m.g.unify(a, case)?;
        let cases = frame
            .iter()
            .map(|&e| {
                let c = slot(&mut m.g, top, e, &["case"]);
                m.g.ty(c)
            })
            .collect();
        Ok(Some(cases))
    }

    fn count(&mut self, n: usize) -> Result<(), ParseError> {
        self.edges += n;
        if self.edges > CHART_CAP {
            Err(ParseError::ChartOverflow)
        } else {
            Ok(())
        }
    }
}

/// Exhaustive bottom-up parse. Returns every analysis spanning the whole
/// input; an empty list means the sentence is ungrammatical.
pub fn parse(
    tokens: &[Token],
    lexicon: &Lexicon,
    grammar: &Grammar,
) -> Result<Vec<ParseSolution>, ParseError> {
    let n = tokens.len();
    if n == 0 {
        return Err(ParseError::Empty);
    }
    let mut p = ChartParser {
        grammar,
        top: grammar.hierarchy().top(),
        edges: 0,
    };
    // chart[start][len - 1]
    let mut chart: Vec<Vec<Vec<Edge>>> = vec![vec![Vec::new(); n]; n];
    for t in tokens {
        let mut cell = p.lexical_edges(t.pos, lexicon.lookup(&t.form, grammar));
        let vps: Vec<Edge> = cell
            .iter()
            .filter(|e| e.cat == Category::Verb)
            .filter_map(|e| p.intransitive(e))
            .collect();
        cell.extend(vps);
        p.count(cell.len())?;
        chart[t.pos][0] = cell;
    }
    for len in 2..=n {
        for start in 0..=n - len {
            let mut cell = Vec::new();
            for split in 1..len {
                let (lefts, rights) = (&chart[start][split - 1], &chart[start + split][len - split - 1]);
                for l in lefts {
                    for r in rights {
                        if let Some(e) = p.combine(l, r)? {
                            cell.push(e);
                        }
                    }
                }
            }
            p.count(cell.len())?;
            chart[start][len - 1] = cell;
        }
    }
    let solutions = std::mem::take(&mut chart[0][n - 1])
        .into_iter()
        .filter(|e| e.cat == Category::Sentence)
        .map(|e| {
            let mut words: Vec<WordProjection> = e
                .words
                .iter()
                .map(|&(pos, disjunct, node)| WordProjection {
                    pos,
                    form: lexicon.canonical_form(&tokens[pos].form),
                    disjunct,
                    node,
                })
                .collect();
            words.sort_by_key(|w| w.pos);
            ParseSolution {
                graph: e.graph,
                root: e.head,
                words,
            }
        })
        .collect();
    Ok(solutions)
}
