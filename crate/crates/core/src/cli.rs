//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::grammar::{Grammar, DEMO_CLAUSES, DEMO_LEXICON, DEMO_SCRIPT, DEMO_TYPES};
use crate::lexstore::{diff, show_entry, AuditLog, Lexicon};
use crate::revision::{process_sentence, replay, AuditRecord, Status, UpdateReport};
use crate::typelattice::TypeHierarchy;

pub const CONFIG_ENV: &str = "LEXLEARN_CONFIG";
pub const DEFAULT_STORE: &str = "lexlearn.store";

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNGRAMMATICAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "lexlearn", version, about = "Incremental lexical acquisition with a typed unification grammar")]
pub struct Cli {
    #[command(flatten)]
    pub opts: Options,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Type hierarchy file (default: shipped demo hierarchy).
    #[arg(long, global = true)]
    pub types: Option<PathBuf>,
    /// Revisability clause file (default: shipped demo clauses).
    #[arg(long, global = true)]
    pub clauses: Option<PathBuf>,
    /// Initial lexicon source (default: shipped demo lexicon).
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    /// Lexicon store, created from the initial lexicon on first use.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Run the full pipeline without persisting anything.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub dry_run: bool,
    /// Print audit records as JSON lines instead of text reports.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub json: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse one sentence and revise the lexicon.
    Process { sentence: String },
    /// Process a file with one sentence per line.
    Batch { file: PathBuf },
    /// Show the entry for a form.
    Show { form: String },
    /// Show the last recorded change to an entry.
    Diff { form: String },
    /// List pending hypotheses.
    Pending,
    /// Run the worked example on a fresh demo lexicon.
    Demo,
    /// Validate the configured files.
    Check,
}

/// An error carrying the file it arose in.
#[derive(Debug)]
struct Failure(String);

impl Failure {
    fn at(path: &str, e: impl std::fmt::Display) -> Failure {
        Failure(format!("{path}: {e}"))
    }
}

struct Session {
    grammar: Grammar,
    lexicon_source: (String, String),
    store: PathBuf,
    dry_run: bool,
    json: bool,
}

fn read_source(path: &Option<PathBuf>, builtin: &str, label: &str) -> Result<(String, String), Failure> {
    match path {
        Some(p) => std::fs::read_to_string(p)
            .map(|t| (p.display().to_string(), t))
            .map_err(|e| Failure::at(&p.display().to_string(), e)),
        None => Ok((format!("<builtin {label}>"), builtin.to_string())),
    }
}

/// Command-line values override the config file named by `LEXLEARN_CONFIG`.
fn resolve_options(cli: Options) -> Result<Options, Failure> {
    let Ok(config) = std::env::var(CONFIG_ENV) else {
        return Ok(cli);
    };
    let text = std::fs::read_to_string(&config).map_err(|e| Failure::at(&config, e))?;
    let file: Options = toml::from_str(&text).map_err(|e| Failure::at(&config, e))?;
    let base = Path::new(&config).parent().unwrap_or(Path::new(""));
    let rel = |p: Option<PathBuf>| p.map(|p| if p.is_relative() { base.join(p) } else { p });
    Ok(Options {
        types: cli.types.or(rel(file.types)),
        clauses: cli.clauses.or(rel(file.clauses)),
        lexicon: cli.lexicon.or(rel(file.lexicon)),
        store: cli.store.or(rel(file.store)),
        dry_run: cli.dry_run,
        json: cli.json,
    })
}

impl Session {
    fn open(opts: Options) -> Result<Session, Failure> {
        let opts = resolve_options(opts)?;
        let (types_name, types) = read_source(&opts.types, DEMO_TYPES, "types")?;
        let (clauses_name, clauses) = read_source(&opts.clauses, DEMO_CLAUSES, "clauses")?;
        let lexicon_source = read_source(&opts.lexicon, DEMO_LEXICON, "lexicon")?;
        let h = TypeHierarchy::load(&types).map_err(|e| Failure::at(&types_name, e))?;
        let grammar = Grammar::new(h, &clauses).map_err(|e| Failure::at(&clauses_name, e))?;
        Ok(Session {
            grammar,
            lexicon_source,
            store: opts.store.unwrap_or_else(|| PathBuf::from(DEFAULT_STORE)),
            dry_run: opts.dry_run,
            json: opts.json,
        })
    }

    fn h(&self) -> &TypeHierarchy {
        self.grammar.hierarchy()
    }

    fn initial(&self) -> Result<Lexicon, Failure> {
        let (name, text) = &self.lexicon_source;
        Lexicon::load_string(text, &self.grammar).map_err(|e| Failure::at(name, e))
    }

    fn current(&self) -> Result<Lexicon, Failure> {
        if self.store.exists() {
            Lexicon::load(&self.store, &self.grammar).map_err(|e| Failure(e.to_string()))
        } else {
            self.initial()
        }
    }

    fn audit(&self) -> AuditLog {
        AuditLog::for_store(&self.store)
    }

    fn persist(&self, lex: &Lexicon, records: &[AuditRecord]) -> Result<(), Failure> {
        if self.dry_run {
            return Ok(());
        }
        lex.save(&self.store, self.h()).map_err(|e| Failure(e.to_string()))?;
        self.audit().append(records).map_err(|e| Failure(e.to_string()))
    }

    fn report(&self, out: &mut dyn Write, report: &UpdateReport) -> std::io::Result<()> {
        if self.json {
            for r in report.records(self.h()) {
                writeln!(out, "{}", serde_json::to_string(&r).expect("records serialize"))?;
            }
            Ok(())
        } else {
            write!(out, "{}", report.render(self.h()))
        }
    }
}

fn show(lex: &Lexicon, grammar: &Grammar, form: &str) -> String {
    let h = grammar.hierarchy();
    let canonical = lex.canonical_form(form);
    match lex.entry(&canonical) {
        Some(e) => show_entry(e, h),
        None => format!(
            "{form}: not in lexicon; generic entry:\n{}",
            show_entry(&grammar.generic_unknown_entry(form), h)
        ),
    }
}

fn script_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Entries shown by `demo`.
pub const DEMO_FORMS: [&str; 2] = ["Nase", "perzipiert"];

fn run_command(command: Command, s: &Session, out: &mut dyn Write) -> Result<i32, Failure> {
    let io = |e: std::io::Error| Failure(format!("output: {e}"));
    match command {
        Command::Process { sentence } => {
            let mut lex = s.current()?;
            let report = process_sentence(&mut lex, &s.grammar, &sentence).map_err(|e| Failure(e.to_string()))?;
            if report.grammatical() {
                s.persist(&lex, &report.records(s.h()))?;
            }
            s.report(out, &report).map_err(io)?;
            if !report.grammatical() {
                return Ok(EXIT_UNGRAMMATICAL);
            }
        }
        Command::Batch { file } => {
            let name = file.display().to_string();
            let text = std::fs::read_to_string(&file).map_err(|e| Failure::at(&name, e))?;
            let mut lex = s.current()?;
            let mut records = Vec::new();
            for (i, sentence) in script_lines(&text).enumerate() {
                if !s.json {
                    writeln!(out, "[{}]", i + 1).map_err(io)?;
                }
                match process_sentence(&mut lex, &s.grammar, sentence) {
                    Ok(report) => {
                        s.report(out, &report).map_err(io)?;
                        records.extend(report.records(s.h()));
                    }
                    Err(e) => writeln!(out, "sentence: {sentence}\nerror: {e}").map_err(io)?,
                }
            }
            s.persist(&lex, &records)?;
        }
        Command::Show { form } => {
            let lex = s.current()?;
            write!(out, "{}", show(&lex, &s.grammar, &form)).map_err(io)?;
        }
        Command::Diff { form } => {
            let records = s.audit().read().map_err(|e| Failure(e.to_string()))?;
            let last = records
                .iter()
                .filter(|r| r.status == Status::Applied && r.candidate.form == form)
                .map(|r| r.version)
                .max();
            let Some(version) = last else {
                writeln!(out, "{form}: no recorded change").map_err(io)?;
                return Ok(EXIT_OK);
            };
            let initial = s.initial()?;
            let upto = |v: u64| -> Result<Lexicon, Failure> {
                let prefix: Vec<AuditRecord> = records.iter().filter(|r| r.version <= v).cloned().collect();
                replay(&initial, &s.grammar, &prefix).map_err(|e| Failure(e.to_string()))
            };
            let before = upto(version - 1)?;
            let after = upto(version)?;
            let generic = s.grammar.generic_unknown_entry(&form);
            let old = before.entry(&form).unwrap_or(&generic);
            let new = after.entry(&form).unwrap_or(&generic);
            writeln!(out, "{form} (version {version})").map_err(io)?;
            for line in diff(s.h(), old, new) {
                writeln!(out, "  {line}").map_err(io)?;
            }
        }
        Command::Pending => {
            let lex = s.current()?;
            let mut any = false;
            for p in lex.pending() {
                any = true;
                writeln!(out, "{} (solution {}) from: {}", p.form, p.solution + 1, p.sentence).map_err(io)?;
                for c in &p.candidates {
                    writeln!(out, "  {}", c.describe(s.h())).map_err(io)?;
                }
            }
            if !any {
                writeln!(out, "no pending hypotheses").map_err(io)?;
            }
        }
        Command::Demo => {
            let mut lex = s.initial()?;
            for (i, sentence) in script_lines(DEMO_SCRIPT).enumerate() {
                let report = process_sentence(&mut lex, &s.grammar, sentence).map_err(|e| Failure(e.to_string()))?;
                if i > 0 {
                    writeln!(out).map_err(io)?;
                }
                writeln!(out, "== after: {} ({} solution(s))", report.sentence, report.solutions).map_err(io)?;
                for form in DEMO_FORMS {
                    write!(out, "{}", show(&lex, &s.grammar, form)).map_err(io)?;
                }
            }
        }
        Command::Check => {
            let lex = s.initial()?;
            let h = s.h();
            writeln!(out, "types: {} leaves, {} named types", h.leaf_count(), h.named_count()).map_err(io)?;
            writeln!(out, "clauses: {}", s.grammar.clauses().len()).map_err(io)?;
            writeln!(out, "lexicon: {} entries", lex.len()).map_err(io)?;
            if s.store.exists() {
                let stored = s.current()?;
                writeln!(out, "store: {} entries, version {}", stored.len(), stored.version()).map_err(io)?;
            }
            writeln!(out, "ok").map_err(io)?;
        }
    }
    Ok(EXIT_OK)
}

/// Runs the CLI and returns the process exit code.
pub fn run(args: impl IntoIterator<Item = std::ffi::OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = Session::open(cli.opts).and_then(|s| run_command(cli.command, &s, out));
    match result {
        Ok(code) => code,
        Err(Failure(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_CONFIG
        }
    }
}
