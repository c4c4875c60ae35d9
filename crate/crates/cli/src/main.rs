//! `cardauth`: register users, run protocol sessions over the simulated
//! channel, run the attacks, and summarize traces.
//!
//! Exit status: 0 for the expected outcome, 1 when an attack verdict does
//! not match `--expect`, 2 for usage and I/O errors.

mod config;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cardauth_core::attacks::{
    deanonymize, extract_master_digest, flood_cost_report, guess_password, wrong_input_scenario, AttackKind,
    AttackVerdict, Dictionary, FloodReport, InputMode, PasswordVerifier,
};
use cardauth_core::scheme::{register_user, Credentials};
use cardauth_core::simnet::{
    eavesdrop, extract_card, AdversaryKnowledge, ChannelTrace, SimClock, Simulator, TamperPolicy, User,
};
use cardauth_core::{ServerState, SmartCard};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use config::{Layout, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(
    name = "cardauth",
    version,
    about = "Smart-card authentication scheme and attack harness"
)]
struct Cli {
    /// Scenario config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config `output_path`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create the server database and one card per configured principal.
    Register {
        /// Allow the same identity to register again (bumps its counter).
        #[arg(long)]
        allow_reregister: bool,
    },
    /// Run login + authentication sessions and write the channel trace.
    Session {
        /// Only this user; by default users take turns.
        #[arg(long)]
        user: Option<String>,
        #[arg(short = 'n', long = "count", default_value_t = 1)]
        count: u64,
        #[arg(long)]
        tamper: Option<TamperPolicy>,
        /// Trace file; defaults to `<out>/trace.jsonl`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run one of the attacks and print its verdict.
    Attack {
        #[arg(value_enum)]
        kind: AttackArg,
        #[arg(long, value_enum, default_value_t = Expect::Success)]
        expect: Expect,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Whose card the adversary extracted (pwguess) or who types the
        /// input (wronginput, flood).
        #[arg(long)]
        victim: Option<String>,
        /// Trace session to attack; defaults to the victim's first login.
        #[arg(long)]
        session: Option<u64>,
        #[arg(long, default_value = "wrong-password")]
        mode: InputMode,
        #[arg(short = 'n', long = "count", default_value_t = 1)]
        count: u64,
    },
    /// Summarize a trace: outcomes, linkability groups, replay statistics.
    Report {
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackArg {
    Pwguess,
    Deanon,
    Wronginput,
    Flood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Expect {
    Success,
    Failure,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Register { allow_reregister } => {
            let (cfg, layout) = scenario(&cli)?;
            cmd_register(&cfg, &layout, cli.seed.unwrap_or(cfg.seed), *allow_reregister)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Session {
            user,
            count,
            tamper,
            trace,
        } => {
            let (cfg, layout) = scenario(&cli)?;
            let trace = trace.clone().unwrap_or_else(|| layout.trace());
            let policy = tamper.clone().unwrap_or_default();
            cmd_session(&cfg, &layout, user.as_deref(), *count, &policy, &trace)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Attack {
            kind,
            expect,
            dict,
            trace,
            victim,
            session,
            mode,
            count,
        } => {
            let (cfg, layout) = scenario(&cli)?;
            let args = AttackArgs {
                dict: dict.clone().or_else(|| cfg.dictionary_path.clone()),
                trace: trace.clone().unwrap_or_else(|| layout.trace()),
                victim: victim.clone(),
                session: *session,
                mode: *mode,
                count: *count,
            };
            let success = cmd_attack(&cfg, &layout, *kind, &args)?;
            let expected = *expect == Expect::Success;
            Ok(if success == expected {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Report { trace } => {
            let cfg = match &cli.config {
                Some(p) => Some(ScenarioConfig::load(p)?),
                None => None,
            };
            let layout = cfg
                .as_ref()
                .map(|c| Layout::new(cli.out.clone().unwrap_or(c.output_path.clone())));
            let trace = match (trace, &layout) {
                (Some(t), _) => t.clone(),
                (None, Some(l)) => l.trace(),
                (None, None) => bail!("report needs --trace or --config"),
            };
            let out = match (&cli.out, &layout) {
                (Some(o), _) => o.join("report.json"),
                (None, Some(l)) => l.report(),
                (None, None) => trace.with_file_name("report.json"),
            };
            cmd_report(cfg.as_ref(), layout.as_ref(), &trace, &out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn scenario(cli: &Cli) -> Result<(ScenarioConfig, Layout)> {
    let path = cli.config.as_ref().context("--config is required")?;
    let cfg = ScenarioConfig::load(path)?;
    let layout = Layout::new(cli.out.clone().unwrap_or_else(|| cfg.output_path.clone()));
    Ok((cfg, layout))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<String> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    emit(&text);
    Ok(text)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn load_server(layout: &Layout) -> Result<ServerState> {
    let path = layout.server();
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {} (run `register` first)", path.display()))?;
    Ok(ServerState::from_json(&text)?)
}

fn load_card(layout: &Layout, id: &str) -> Result<SmartCard> {
    let path = layout.card(id);
    let text = fs::read_to_string(&path).with_context(|| format!("reading card {}", path.display()))?;
    SmartCard::from_json(&text).with_context(|| format!("parsing card {}", path.display()))
}

fn load_user(cfg: &ScenarioConfig, layout: &Layout, id: &str) -> Result<User> {
    let p = cfg.user(id)?;
    let card = load_card(layout, id)?;
    Ok(User {
        creds: Credentials {
            id: p.id.clone(),
            pw: p.pw.clone(),
            r: card.r,
        },
        card,
    })
}

fn load_trace(path: &Path) -> Result<ChannelTrace> {
    let file = fs::File::open(path).with_context(|| format!("opening trace {}", path.display()))?;
    ChannelTrace::read_jsonl(BufReader::new(file)).with_context(|| format!("parsing trace {}", path.display()))
}

/// The adversary's own registration, read back from disk, with `h(x)`
/// already derived.
fn adversary_knowledge(cfg: &ScenarioConfig, layout: &Layout) -> Result<AdversaryKnowledge> {
    let adv = cfg.adversary()?;
    let card = load_card(layout, &adv.id)?;
    let mut know = AdversaryKnowledge::new();
    know.own_creds = Some(Credentials {
        id: adv.id.clone(),
        pw: adv.pw.clone(),
        r: card.r,
    });
    know.own_card = Some(card);
    extract_master_digest(&mut know)?;
    Ok(know)
}

#[derive(Serialize)]
struct RegisterSummary {
    server: PathBuf,
    registry: BTreeMap<String, u64>,
    cards: Vec<PathBuf>,
}

fn cmd_register(cfg: &ScenarioConfig, layout: &Layout, seed: u64, allow_reregister: bool) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut server = ServerState::generate(&mut rng, cfg.freshness_window, cfg.hash_algorithm);
    let mut cards: BTreeMap<String, SmartCard> = BTreeMap::new();
    for p in cfg.users.iter().chain(cfg.adversary.iter()) {
        if server.registration_count(&p.id).is_some() && !allow_reregister {
            bail!("identity `{}` is registered twice (use --allow-reregister)", p.id);
        }
        let (_, card) = register_user(&mut server, &p.id, &p.pw, &mut rng)?;
        cards.insert(p.id.clone(), card);
    }
    write_file(&layout.server(), &(server.to_json() + "\n"))?;
    let mut paths = Vec::new();
    for (id, card) in &cards {
        let path = layout.card(id);
        write_file(&path, &(card.to_json() + "\n"))?;
        paths.push(path);
    }
    print_json(&RegisterSummary {
        server: layout.server(),
        registry: server.registry().clone(),
        cards: paths,
    })?;
    Ok(())
}

#[derive(Serialize)]
struct SessionSummary {
    sessions: u64,
    accepted: u64,
    rejected: BTreeMap<String, u64>,
    card_rejected: BTreeMap<String, u64>,
    undelivered: u64,
    tamper: String,
    trace: PathBuf,
}

fn cmd_session(
    cfg: &ScenarioConfig,
    layout: &Layout,
    user: Option<&str>,
    count: u64,
    policy: &TamperPolicy,
    trace_path: &Path,
) -> Result<()> {
    let server = load_server(layout)?;
    let users: Vec<User> = match user {
        Some(id) => vec![load_user(cfg, layout, id)?],
        None => cfg
            .users
            .iter()
            .map(|p| load_user(cfg, layout, &p.id))
            .collect::<Result<_>>()?,
    };
    let mut sim = Simulator::new(server, SimClock::new(cfg.start_tick));
    let mut summary = SessionSummary {
        sessions: count,
        accepted: 0,
        rejected: BTreeMap::new(),
        card_rejected: BTreeMap::new(),
        undelivered: 0,
        tamper: policy.to_string(),
        trace: trace_path.to_path_buf(),
    };
    for k in 0..count {
        let u = &users[(k % users.len() as u64) as usize];
        let out = sim.run_session(u, policy);
        match (&out.server, &out.card) {
            (Some(Ok(_)), Some(Ok(_))) if out.keys_agree() => summary.accepted += 1,
            (Some(Err(r)), _) => *summary.rejected.entry(r.to_string()).or_default() += 1,
            (Some(Ok(_)), Some(Err(r))) => *summary.card_rejected.entry(r.to_string()).or_default() += 1,
            _ => summary.undelivered += 1,
        }
    }
    write_file(trace_path, &sim.trace().to_jsonl_string())?;
    print_json(&summary)?;
    Ok(())
}

struct AttackArgs {
    dict: Option<PathBuf>,
    trace: PathBuf,
    victim: Option<String>,
    session: Option<u64>,
    mode: InputMode,
    count: u64,
}

#[derive(Serialize)]
struct RecoveredLogin {
    session_id: u64,
    tick: u64,
    id: Option<String>,
}

#[derive(Serialize)]
struct DeanonOutput {
    #[serde(flatten)]
    verdict: AttackVerdict,
    logins: Vec<RecoveredLogin>,
}

#[derive(Serialize)]
struct FloodOutput {
    #[serde(flatten)]
    verdict: AttackVerdict,
    report: FloodReport,
}

fn cmd_attack(cfg: &ScenarioConfig, layout: &Layout, kind: AttackArg, args: &AttackArgs) -> Result<bool> {
    let (name, text, success) = match kind {
        AttackArg::Pwguess => {
            let victim_id = args.victim.as_deref().context("pwguess needs --victim")?;
            let dict_path = args.dict.as_ref().context("pwguess needs --dict or dictionary_path")?;
            let dict = Dictionary::load(dict_path).with_context(|| format!("loading {}", dict_path.display()))?;
            let mut know = adversary_knowledge(cfg, layout)?;
            let victim = extract_card(&mut know, victim_id, &load_card(layout, victim_id)?);
            eavesdrop(&load_trace(&args.trace)?, &mut know);

            // The adversary picks the victim's login by de-anonymizing it.
            let (session_id, msg) = match args.session {
                Some(s) => know
                    .intercepted_logins()
                    .find(|(id, _)| *id == s)
                    .with_context(|| format!("no login for session {s} in trace"))?,
                None => know
                    .intercepted_logins()
                    .find(|(_, m)| {
                        deanonymize(&know, m)
                            .map(|v| v.recovered.as_deref() == Some(victim_id))
                            .unwrap_or(false)
                    })
                    .with_context(|| format!("no login by `{victim_id}` in trace"))?,
            };
            let mut verdict = guess_password(&know, &victim, msg, &dict)?.with_transcript(vec![session_id]);
            let hits = PasswordVerifier::prepare(&know, &victim, msg)?.hits(&dict);
            verdict.verifier_hits = Some(hits.len() as u64);
            let success = verdict.success;
            ("pwguess", print_json(&verdict)?, success)
        }
        AttackArg::Deanon => {
            let know = adversary_knowledge(cfg, layout)?;
            let trace = load_trace(&args.trace)?;
            let mut logins = Vec::new();
            for (event, msg) in trace.logins() {
                logins.push(RecoveredLogin {
                    session_id: event.session_id,
                    tick: event.tick.0,
                    id: deanonymize(&know, msg)?.recovered,
                });
            }
            let all = !logins.is_empty() && logins.iter().all(|l| l.id.is_some());
            let mut distinct: Vec<&str> = logins.iter().filter_map(|l| l.id.as_deref()).collect();
            distinct.sort_unstable();
            distinct.dedup();
            let verdict = AttackVerdict {
                kind: AttackKind::Deanonymize,
                success: all,
                recovered: (!distinct.is_empty()).then(|| distinct.join(",")),
                work: logins.len() as u64,
                transcript: logins.iter().map(|l| l.session_id).collect(),
                verifier_hits: None,
                detail: None,
            };
            let success = verdict.success;
            ("deanon", print_json(&DeanonOutput { verdict, logins })?, success)
        }
        AttackArg::Wronginput => {
            let id = args.victim.clone().unwrap_or_else(|| cfg.users[0].id.clone());
            let user = load_user(cfg, layout, &id)?;
            let mut sim = Simulator::new(load_server(layout)?, SimClock::new(cfg.start_tick));
            let trials: Vec<AttackVerdict> = (0..args.count.max(1))
                .map(|_| wrong_input_scenario(&mut sim, &user, args.mode))
                .collect();
            let passed = trials.iter().filter(|v| v.success).count();
            let mut verdict = trials[0].clone();
            verdict.success = passed == trials.len();
            verdict.work = trials.len() as u64;
            verdict.transcript = trials.iter().flat_map(|v| v.transcript.clone()).collect();
            verdict.detail = Some(format!(
                "mode={} trials={} reproduced={passed}",
                args.mode,
                trials.len()
            ));
            let success = verdict.success;
            ("wronginput", print_json(&verdict)?, success)
        }
        AttackArg::Flood => {
            let id = args.victim.clone().unwrap_or_else(|| cfg.users[0].id.clone());
            let user = load_user(cfg, layout, &id)?;
            let mut sim = Simulator::new(load_server(layout)?, SimClock::new(cfg.start_tick));
            let report = flood_cost_report(&mut sim, &user, args.count, args.mode);
            let expected_rejections = if args.mode == InputMode::Control {
                0
            } else {
                report.messages_sent
            };
            let success = report.server_rejections == expected_rejections;
            let verdict = AttackVerdict {
                kind: AttackKind::WrongInput,
                success,
                recovered: Some(format!("{} rejections", report.server_rejections)),
                work: report.messages_sent,
                transcript: Vec::new(),
                verifier_hits: None,
                detail: Some(format!("mode={} flood", args.mode)),
            };
            ("flood", print_json(&FloodOutput { verdict, report })?, success)
        }
    };
    write_file(&layout.verdict(name), &text)?;
    Ok(success)
}

fn cmd_report(cfg: Option<&ScenarioConfig>, layout: Option<&Layout>, trace_path: &Path, out: &Path) -> Result<()> {
    let trace = load_trace(trace_path)?;
    let know = match (cfg, layout) {
        (Some(c), Some(l)) if c.adversary.is_some() => Some(adversary_knowledge(c, l)?),
        _ => None,
    };
    let report = report::build(&trace, know.as_ref(), cfg.map(|c| c.freshness_window))?;
    write_file(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    emit(&report::render(&report));
    Ok(())
}
