//! The `corpusforge` admin command line.

pub mod error;
pub mod settings;
pub mod simulate;

use std::fmt::Write as _;
use std::io::Read as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use corpusforge_core::analytics;
use corpusforge_core::clock::SystemClock;
use corpusforge_core::domain::{Role, User, UserId};
use corpusforge_core::invariants;
use corpusforge_core::ledger::Kina;
use corpusforge_core::spectrum::{self, InvolvementProfile, ProfileLine, REFERENCE_PROJECTS};
use corpusforge_core::store::Store;
use corpusforge_core::workflow::{self, ImportItem, NewUser, Platform};

pub use error::CliError;
use settings::{FileSettings, Settings};

#[derive(Debug, Parser)]
#[command(name = "corpusforge", version, about = "Run and administer a community translation platform")]
pub struct Cli {
    /// TOML file with defaults for the options below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding the platform's data.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// User id that administrative commands act as.
    #[arg(long, global = true)]
    pub actor: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import English sentences from a JSON-lines file (`{"en": "..."}` per line).
    Import {
        file: PathBuf,
        #[arg(long)]
        batch: String,
    },
    /// Write approved pairs as JSON lines (`-` for stdout).
    Export {
        out: PathBuf,
        /// Move exported sentences to the Exported state.
        #[arg(long)]
        mark: bool,
    },
    /// Manage accounts.
    #[command(subcommand)]
    Users(UsersCommand),
    /// Community pool and payouts. Amounts are in toea.
    #[command(subcommand)]
    Ledger(LedgerCommand),
    /// Corpus statistics and batch progress.
    Stats {
        #[arg(long)]
        batch: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Place projects on the community involvement spectrum.
    Spectrum(SpectrumArgs),
    /// Run the pipeline end to end on synthetic data.
    Simulate(SimulateArgs),
    /// Check the stored state against every invariant.
    Check,
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<SocketAddr>,
    },
}

#[derive(Debug, Subcommand)]
pub enum UsersCommand {
    Add {
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: String,
        #[arg(long)]
        role: Role,
        #[arg(long, env = "CORPUSFORGE_SECRET", hide_env_values = true)]
        secret: String,
    },
    List,
}

#[derive(Debug, Subcommand)]
pub enum LedgerCommand {
    Contribute {
        #[arg(long)]
        member: String,
        #[arg(long)]
        amount: u64,
    },
    Disburse {
        #[arg(long)]
        translator: String,
        #[arg(long)]
        amount: u64,
    },
    Balances,
    Entries,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Four letters for initiative, design, operations and governance, each E, S or C.
    pub code: Option<String>,
    /// The community was only consulted.
    #[arg(long)]
    pub consulted: bool,
    /// Classify one profile per line (`name<TAB>CODE [consulted]`); `-` reads stdin.
    #[arg(long, conflicts_with = "code")]
    pub file: Option<PathBuf>,
    /// Classify the reference projects and compare with their published levels.
    #[arg(long, conflicts_with_all = ["code", "file"])]
    pub reference: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 2000)]
    pub sentences: usize,
    #[arg(long, default_value_t = 77)]
    pub translators: usize,
    #[arg(long, default_value_t = 4)]
    pub reviewers: usize,
    /// Approval probability for a first attempt.
    #[arg(long, default_value_t = 0.91)]
    pub p1: f64,
    /// Approval probability for a second attempt.
    #[arg(long, default_value_t = 8.0 / 9.0)]
    pub p2: f64,
    /// Chance a translator abandons a claim.
    #[arg(long, default_value_t = 0.02)]
    pub abandon: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl From<&SimulateArgs> for simulate::SimParams {
    fn from(a: &SimulateArgs) -> Self {
        simulate::SimParams {
            sentences: a.sentences,
            translators: a.translators,
            reviewers: a.reviewers,
            p1: a.p1,
            p2: a.p2,
            abandon: a.abandon,
            seed: a.seed,
        }
    }
}

/// Runs a parsed command and returns what it prints on success.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let file = match &cli.config {
        Some(path) => FileSettings::load(path)?,
        None => FileSettings::default(),
    };
    let settings = Settings::resolve(file, |k| std::env::var(k).ok(), cli.data_dir, cli.actor)?;

    match cli.command {
        Command::Spectrum(args) => return run_spectrum(&args),
        Command::Simulate(args) => {
            let report = simulate::run(&(&args).into())?;
            return Ok(report.render());
        }
        Command::Serve { bind } => {
            let mut server = settings.server.clone();
            if let Some(bind) = bind {
                server.bind = bind;
            }
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io("runtime", e))?;
            runtime
                .block_on(corpusforge_api::serve(server))
                .map_err(|e| CliError::io("serve", e))?;
            return Ok(String::new());
        }
        _ => {}
    }

    let platform = open_platform(&settings)?;
    match cli.command {
        Command::Import { file, batch } => {
            let actor = acting_user(&platform, &settings)?;
            let items = read_import_file(&file)?;
            let summary = platform.import_batch(&actor, &batch, &items)?;
            Ok(format!(
                "imported {}, skipped {}\n",
                summary.imported, summary.skipped_duplicates
            ))
        }
        Command::Export { out, mark } => {
            let actor = acting_user(&platform, &settings)?;
            let records = platform.export_approved(&actor, mark)?;
            let text = workflow::to_ndjson(&records);
            if out == Path::new("-") {
                return Ok(text);
            }
            write_atomically(&out, text.as_bytes())?;
            Ok(format!("exported {} records to {}\n", records.len(), out.display()))
        }
        Command::Users(UsersCommand::Add { id, name, role, secret }) => {
            let user = platform.provision_user(
                &UserId::new(settings.actor.as_str()),
                NewUser {
                    id: UserId::new(id),
                    display_name: name,
                    role,
                    secret,
                },
            )?;
            Ok(format!("added {} ({})\n", user.id, user.role))
        }
        Command::Users(UsersCommand::List) => {
            let snap = platform.store().snapshot();
            let mut out = String::new();
            for u in snap.iter::<User>() {
                let u = &u.payload;
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\tsubmitted {}\tapproved {}",
                    u.id, u.role, u.display_name, u.submitted_count, u.approved_count
                );
            }
            Ok(out)
        }
        Command::Ledger(cmd) => run_ledger(&platform, &settings, cmd),
        Command::Stats { batch, json } => {
            if let Some(batch) = batch {
                let counts = platform.progress(&batch)?;
                if json {
                    return Ok(to_json(&counts));
                }
                let mut out = String::new();
                for (status, n) in counts {
                    let _ = writeln!(out, "{status:<16}{n}");
                }
                return Ok(out);
            }
            let report = platform.stats();
            if json {
                Ok(to_json(&report))
            } else {
                Ok(analytics::render_stats(&report))
            }
        }
        Command::Check => {
            let violations = invariants::check(&platform.store().snapshot());
            if violations.is_empty() {
                return Ok("ok\n".into());
            }
            let lines: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(CliError::Invariant(lines.join("\n")))
        }
        Command::Spectrum(_) | Command::Simulate(_) | Command::Serve { .. } => unreachable!(),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    text
}

fn open_platform(settings: &Settings) -> Result<Platform, CliError> {
    let store = Store::open(&settings.server.data_dir)?;
    Ok(Platform::new(
        Arc::new(store),
        Arc::new(SystemClock),
        settings.server.platform(),
    ))
}

fn acting_user(platform: &Platform, settings: &Settings) -> Result<User, CliError> {
    platform.user(&UserId::new(settings.actor.as_str())).map_err(|_| {
        CliError::Validation(format!(
            "unknown actor {:?}; create it with `corpusforge users add` or pass --actor",
            settings.actor
        ))
    })
}

/// Parses the whole file before anything is imported, so one bad line
/// rejects the file.
pub fn read_import_file(path: &Path) -> Result<Vec<ImportItem>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    parse_import(&text)
}

pub fn parse_import(text: &str) -> Result<Vec<ImportItem>, CliError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: ImportItem = serde_json::from_str(line)
            .map_err(|e| CliError::Validation(format!("line {}: {e}", i + 1)))?;
        if item.en.trim().is_empty() {
            return Err(CliError::Validation(format!("line {}: empty English text", i + 1)));
        }
        items.push(item);
    }
    if items.is_empty() {
        return Err(CliError::Validation("import file has no items".into()));
    }
    Ok(items)
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Validation(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(tmp.display(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path.display(), e))
}

fn run_ledger(platform: &Platform, settings: &Settings, cmd: LedgerCommand) -> Result<String, CliError> {
    match cmd {
        LedgerCommand::Contribute { member, amount } => {
            let actor = acting_user(platform, settings)?;
            let entry = platform.contribute(&actor, &UserId::new(member), amount)?;
            Ok(format!("entry {}: {} contributed {}\n", entry.seq, entry.party, Kina(entry.amount_minor)))
        }
        LedgerCommand::Disburse { translator, amount } => {
            let actor = acting_user(platform, settings)?;
            let entry = platform.disburse(&actor, &UserId::new(translator), amount)?;
            Ok(format!("entry {}: paid {} {}\n", entry.seq, entry.party, Kina(entry.amount_minor)))
        }
        LedgerCommand::Balances => {
            let b = platform.balances();
            let mut out = String::new();
            let _ = writeln!(out, "pool        {}", Kina(b.pool_minor));
            let _ = writeln!(out, "contributed {}", Kina(b.contributed_total_minor));
            let _ = writeln!(out, "accrued     {}", Kina(b.accrued_total_minor));
            let _ = writeln!(out, "disbursed   {}", Kina(b.disbursed_total_minor));
            for (who, owed) in &b.owed_minor {
                if *owed > 0 {
                    let _ = writeln!(out, "owed {who} {}", Kina(*owed));
                }
            }
            Ok(out)
        }
        LedgerCommand::Entries => {
            let mut out = String::new();
            for entry in platform.ledger_entries() {
                out.push_str(&serde_json::to_string(&entry).expect("entries serialize"));
                out.push('\n');
            }
            Ok(out)
        }
    }
}

fn run_spectrum(args: &SpectrumArgs) -> Result<String, CliError> {
    let invalid = |e: spectrum::SpectrumError| CliError::Validation(e.to_string());
    if args.reference {
        let mut out = String::new();
        let mut matched = 0;
        for project in REFERENCE_PROJECTS {
            let level = spectrum::classify(&project.profile).map_err(invalid)?;
            let ok = level.level() == project.level;
            matched += usize::from(ok);
            let _ = writeln!(
                out,
                "{:<24} {:<14} {}  expected {}  got {}  {}",
                project.work,
                project.language,
                project.profile.code_string(),
                project.level,
                level.level(),
                if ok { "ok" } else { "MISMATCH" }
            );
        }
        let consulted = InvolvementProfile::new(
            spectrum::Code::E,
            spectrum::Code::E,
            spectrum::Code::E,
            spectrum::Code::E,
        )
        .consulted();
        let level = spectrum::classify(&consulted).map_err(invalid)?;
        let ok = level.level() == 1;
        matched += usize::from(ok);
        let _ = writeln!(
            out,
            "{:<24} {:<14} EEEE  expected 1  got {}  {}",
            "(consultation only)",
            "-",
            level.level(),
            if ok { "ok" } else { "MISMATCH" }
        );
        let total = REFERENCE_PROJECTS.len() + 1;
        let _ = writeln!(out, "{matched}/{total} match");
        if matched != total {
            return Err(CliError::Invariant(out));
        }
        return Ok(out);
    }

    if let Some(path) = &args.file {
        let text = if path == Path::new("-") {
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| CliError::io("stdin", e))?;
            text
        } else {
            std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?
        };
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ProfileLine = line
                .parse()
                .map_err(|e| CliError::Validation(format!("line {}: {e}", i + 1)))?;
            let level = spectrum::classify(&parsed.profile)
                .map_err(|e| CliError::Validation(format!("line {}: {e}", i + 1)))?;
            rows.push((parsed, level));
        }
        return Ok(spectrum::render_report(&rows));
    }

    let code = args
        .code
        .as_deref()
        .ok_or_else(|| CliError::Validation("give a profile code, --file or --reference".into()))?;
    let mut profile: InvolvementProfile = code.parse().map_err(invalid)?;
    profile.consultation_only = args.consulted;
    let level = spectrum::classify(&profile).map_err(invalid)?;
    Ok(format!("{level}\n"))
}
