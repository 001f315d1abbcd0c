use lexlearn::grammar::{Grammar, DEMO_LEXICON};
use lexlearn::lexstore::{AuditLog, Lexicon};
use lexlearn::revision::{process_sentence, replay};
use proptest::prelude::*;

const SENTENCES: [&str; 10] = [
    "Die Nase ist ein Sinnesorgan.",
    "Das Ohr perzipiert.",
    "Eine verschnupfte Nase perzipiert den Gestank.",
    "Das Aktionspotential erreicht den Dendriten.",
    "Das Ohr erreicht den Dendriten.",
    "Ein Geruch erreicht die Nase.",
    "Die Blume ist sensibel.",
    "Eine verschnupfte Blume ist schuld.",
    "Der sensible Geruch perzipiert.",
    "Die Blume perzipiert den Geruch.",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn store_and_audit_log_reproduce_the_lexicon(seq in prop::collection::vec(0..SENTENCES.len(), 0..8)) {
        let g = Grammar::demo();
        let h = g.hierarchy();
        let initial = Lexicon::load_string(DEMO_LEXICON, &g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("lex.store");
        let log = AuditLog::for_store(&store);
        let mut lex = initial.clone();
        for i in seq {
            let report = process_sentence(&mut lex, &g, SENTENCES[i]).unwrap();
            log.append(&report.records(h)).unwrap();
        }
        lex.save(&store, h).unwrap();
        let saved = std::fs::read_to_string(&store).unwrap();
        let loaded = Lexicon::load(&store, &g).unwrap();
        prop_assert_eq!(loaded.save_string(h), saved.clone());
        prop_assert_eq!(loaded.version(), lex.version());

        let replayed = replay(&initial, &g, &log.read().unwrap()).unwrap();
        prop_assert_eq!(replayed.save_string(h), saved);
    }
}

#[test]
fn pending_hypotheses_survive_a_round_trip() {
    let g = Grammar::demo();
    let h = g.hierarchy();
    let mut lex = Lexicon::load_string(DEMO_LEXICON, &g).unwrap();
    process_sentence(&mut lex, &g, "Das Aktionspotential erreicht den Dendriten.").unwrap();
    let text = lex.save_string(h);
    assert!(text.contains("entry \"erreicht\" origin acquired"));
    assert!(text.contains("pending {"));
    let back = Lexicon::load_string(&text, &g).unwrap();
    let pending: Vec<_> = back.pending().collect();
    assert_eq!(pending.len(), 2);
    assert_eq!(pending[0].sentence, "Das Aktionspotential erreicht den Dendriten.");
    assert_eq!(pending[0].candidates[0].clause, "valence-gen");
    assert_eq!(back.save_string(h), text);
}

#[test]
fn spec_markers_are_stored_but_hidden_in_display() {
    let g = Grammar::demo();
    let h = g.hierarchy();
    let mut lex = Lexicon::load_string(DEMO_LEXICON, &g).unwrap();
    process_sentence(&mut lex, &g, "Die Nase ist ein Sinnesorgan.").unwrap();
    assert!(lex.save_string(h).contains("gend: u_s∨fem"));
    let shown = lexlearn::lexstore::show_entry(lex.entry("Nase").unwrap(), h);
    assert!(shown.contains("gend: fem") && !shown.contains("u_s"), "{shown}");
}
