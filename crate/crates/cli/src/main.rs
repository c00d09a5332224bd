// SPDX-License-Identifier: Apache-2.0

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use maat_core::audit::{read_log, score_by_agent};
use maat_core::compiler::{compile, CompileError};
use maat_core::lang::{parse, render};
use maat_core::mediator::wire::{Message, SubmitIntent};
use maat_core::mediator::{serve, Agent, AgentConfig, TcpTransport, Transport};
use maat_core::ontology::{builtin_ontology, OntologyRegistry};
use maat_core::simnet::{run_scenario_file, WallClock};

const EXIT_LANG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NET: u8 = 4;
const EXIT_SCENARIO: u8 = 5;

#[derive(Parser)]
#[command(name = "maat", version, about = "Intent language tools, mediation agent and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse an intent and print its canonical form
    Parse {
        /// Intent file; standard input when omitted
        file: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Compile an intent into a reification plan
    Compile {
        file: PathBuf,
        #[arg(long, env = "MAAT_ONTOLOGY")]
        ontology: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run a mediation agent
    Agent {
        #[command(subcommand)]
        command: AgentCommand,
    },
    /// Send an intent to a running agent
    Submit {
        #[arg(long)]
        agent: String,
        file: PathBuf,
        /// Requesting node
        #[arg(long)]
        from: String,
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
    },
    /// Run simulation scenarios
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
    /// Score mediation logs
    Audit {
        #[command(subcommand)]
        command: AuditCommand,
    },
    /// Inspect agent sessions
    Sessions {
        #[command(subcommand)]
        command: SessionsCommand,
    },
}

#[derive(Subcommand)]
enum AgentCommand {
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the endpoint in the config (default 127.0.0.1:7470)
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    Run {
        file: PathBuf,
        /// Directory for the report and audit log
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum AuditCommand {
    Score {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum SessionsCommand {
    List {
        #[arg(long)]
        agent: String,
        #[arg(long)]
        json: bool,
    },
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

type Outcome = Result<(), Failure>;

trait Code<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Code<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Parse { file, json } => cmd_parse(file.as_deref(), json),
        Command::Compile { file, ontology, json } => cmd_compile(&file, ontology.as_deref(), json),
        Command::Agent {
            command: AgentCommand::Run { config, listen },
        } => cmd_agent_run(&config, listen),
        Command::Submit {
            agent,
            file,
            from,
            timeout_ms,
        } => cmd_submit(&agent, &file, &from, timeout_ms),
        Command::Scenario {
            command: ScenarioCommand::Run { file, out, json },
        } => cmd_scenario_run(&file, &out, json),
        Command::Audit {
            command: AuditCommand::Score { file, json },
        } => cmd_audit_score(&file, json),
        Command::Sessions {
            command: SessionsCommand::List { agent, json },
        } => cmd_sessions_list(&agent, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn read_input(file: Option<&Path>) -> Result<String, Failure> {
    match file {
        Some(p) => std::fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .code(EXIT_IO),
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).context("reading stdin").code(EXIT_IO)?;
            Ok(s)
        }
    }
}

fn print_json<T: serde::Serialize + ?Sized>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn cmd_parse(file: Option<&Path>, json: bool) -> Outcome {
    let text = read_input(file)?;
    match parse(&text) {
        Ok(intent) => {
            if json {
                print_json(&intent);
            } else {
                println!("{}", render(&intent));
            }
            Ok(())
        }
        Err(e) => {
            let name = file.map(|p| p.display().to_string()).unwrap_or_else(|| "<stdin>".into());
            for d in &e.diagnostics {
                eprintln!("{name}:{d}");
            }
            Err(Failure {
                code: EXIT_LANG,
                error: anyhow!("{} diagnostic(s)", e.diagnostics.len()),
            })
        }
    }
}

fn load_ontology(path: Option<&Path>) -> Result<OntologyRegistry, Failure> {
    match path {
        None => Ok(builtin_ontology()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .code(EXIT_IO)?;
            OntologyRegistry::from_json(&text)
                .with_context(|| format!("loading ontology {}", p.display()))
                .code(EXIT_LANG)
        }
    }
}

fn cmd_compile(file: &Path, ontology: Option<&Path>, json: bool) -> Outcome {
    let registry = load_ontology(ontology)?;
    let text = read_input(Some(file))?;
    let intent = parse(&text).map_err(|e| {
        for d in &e.diagnostics {
            eprintln!("{}:{d}", file.display());
        }
        Failure {
            code: EXIT_LANG,
            error: anyhow!("{} diagnostic(s)", e.diagnostics.len()),
        }
    })?;
    let plan = compile(&intent, &registry).map_err(|e| {
        if let CompileError::CompileOnInvalid(errs) = &e {
            for v in errs {
                eprintln!("{}: {}", file.display(), serde_json::to_string(v).expect("serializable"));
            }
        }
        Failure {
            code: EXIT_LANG,
            error: e.into(),
        }
    })?;
    if json {
        print_json(&plan);
    } else {
        for (i, action) in plan.actions.iter().enumerate() {
            let root = if i == plan.root.0 { " (root)" } else { "" };
            println!(
                "#{i} {}{root} {}",
                action.verb(),
                serde_json::to_string(action).expect("serializable")
            );
        }
        println!("digest {}", plan.digest());
    }
    Ok(())
}

fn cmd_agent_run(config: &Path, listen: Option<String>) -> Outcome {
    let cfg = AgentConfig::load(config).code(EXIT_IO)?;
    let addr = listen
        .or_else(|| cfg.endpoint.clone())
        .unwrap_or_else(|| "127.0.0.1:7470".to_string());
    let agent = Agent::from_config(cfg, Arc::new(WallClock::default()), Arc::new(TcpTransport::new())).code(EXIT_IO)?;
    let handle = serve(Arc::new(agent), &addr)
        .with_context(|| format!("listening on {addr}"))
        .code(EXIT_NET)?;
    println!("listening on {}", handle.local_addr());
    std::io::stdout().flush().ok();
    handle.wait().context("saving sessions").code(EXIT_IO)
}

fn request(agent: &str, msg: Message, timeout_ms: u64) -> Result<Message, Failure> {
    let reply = TcpTransport::new().request(agent, msg, timeout_ms).code(EXIT_NET)?;
    match reply {
        Message::Error(e) => Err(Failure {
            code: EXIT_NET,
            error: anyhow!("agent answered {}: {}", e.code, e.message),
        }),
        other => Ok(other),
    }
}

fn cmd_submit(agent: &str, file: &Path, from: &str, timeout_ms: u64) -> Outcome {
    let text = read_input(Some(file))?;
    let msg = Message::SubmitIntent(SubmitIntent {
        intent_text: text,
        requester: from.to_string(),
    });
    match request(agent, msg, timeout_ms)? {
        Message::Result(body) => {
            print_json(&*body);
            Ok(())
        }
        other => Err(Failure {
            code: EXIT_NET,
            error: anyhow!("unexpected reply {}", other.type_name()),
        }),
    }
}

fn cmd_scenario_run(file: &Path, out: &Path, json: bool) -> Outcome {
    let stem = file
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".json").trim_end_matches(".scenario"))
        .unwrap_or("scenario")
        .to_string();
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .code(EXIT_IO)?;
    let audit = out.join(format!("{stem}.audit.jsonl"));
    let report = run_scenario_file(file, Some(&audit)).code(EXIT_SCENARIO)?;
    let report_path = out.join(format!("{stem}.report.json"));
    let text = serde_json::to_string_pretty(&report).expect("serializable");
    std::fs::write(&report_path, format!("{text}\n"))
        .with_context(|| format!("writing {}", report_path.display()))
        .code(EXIT_IO)?;
    if json {
        println!("{text}");
        return Ok(());
    }
    for s in &report.steps {
        let detail = match &s.result {
            maat_core::mediator::MediationResult::Reified { bindings, score, .. } => {
                let parts: Vec<String> = bindings.iter().map(describe_binding).collect();
                format!("score {score} | {}", parts.join(" | "))
            }
            maat_core::mediator::MediationResult::Failed { unsatisfied, reason, .. } => {
                let names: Vec<String> = unsatisfied.iter().map(|c| c.to_string()).collect();
                format!("{reason} [{}]", names.join(", "))
            }
            maat_core::mediator::MediationResult::NonIdnFallback { reason } => reason.clone(),
            maat_core::mediator::MediationResult::Rejected { errors } => errors.join("; "),
        };
        println!(
            "step {} t={} {} via {} -> {} (escalations {}) {}",
            s.step,
            s.completed_at,
            s.from,
            s.agent_chain.join(">"),
            s.result.kind(),
            s.escalation_count,
            detail
        );
    }
    println!("report {}", report_path.display());
    println!("audit {}", audit.display());
    Ok(())
}

fn describe_binding(b: &maat_core::mediator::ActionBinding) -> String {
    use maat_core::mediator::Binding;
    let what = match &b.binding {
        Binding::Candidate { node_id, .. } => node_id.clone(),
        Binding::Group {
            address, ttl, members, ..
        } => format!(
            "group {} ttl {ttl} members {}",
            address.map(|a| a.to_string()).unwrap_or_else(|| "-".into()),
            members.join(",")
        ),
        Binding::Placement {
            content,
            node_id,
            announce,
            ..
        } => format!("{}{content} on {node_id}", if *announce { "announce " } else { "" }),
        Binding::Source { content, node_id } => {
            format!("{content} from {}", node_id.as_deref().unwrap_or("-"))
        }
        Binding::Registration {
            service_name, node_id, ..
        } => format!("{service_name} on {node_id}"),
        Binding::Rule { traffic_spec, rule_id, .. } => {
            format!("{traffic_spec} {}", rule_id.as_deref().unwrap_or("-"))
        }
    };
    format!("{} {} {what}", b.action, b.verb)
}

fn cmd_audit_score(file: &Path, json: bool) -> Outcome {
    let records = read_log(file)
        .with_context(|| format!("reading {}", file.display()))
        .code(EXIT_IO)?;
    let scores = score_by_agent(&records).code(EXIT_IO)?;
    if json {
        print_json(&scores);
        return Ok(());
    }
    println!("{:<24} {:>8} {:>8} {:>10}", "agent", "sessions", "score", "failures");
    for s in scores.values() {
        println!(
            "{:<24} {:>8} {:>8} {:>10}",
            s.agent_id,
            s.count,
            s.mean,
            format!("{:.3}", s.failure_fraction)
        );
    }
    Ok(())
}

fn cmd_sessions_list(agent: &str, json: bool) -> Outcome {
    let sessions = match request(agent, Message::ListSessions, 10_000)? {
        Message::Sessions(s) => s.sessions,
        other => {
            return Err(Failure {
                code: EXIT_NET,
                error: anyhow!("unexpected reply {}", other.type_name()),
            })
        }
    };
    if json {
        print_json(&sessions);
        return Ok(());
    }
    println!("{:<36} {:<10} {:<16} {:<12} {:>4}", "session", "state", "outcome", "requester", "esc");
    for s in sessions {
        println!(
            "{:<36} {:<10} {:<16} {:<12} {:>4}",
            s.session_id,
            format!("{:?}", s.state).to_lowercase(),
            s.outcome.unwrap_or_default(),
            s.requester,
            s.escalation_count
        );
    }
    Ok(())
}
