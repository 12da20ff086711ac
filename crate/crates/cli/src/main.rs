use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pullstream::entail::{entails, Binding, Engine, Run, Scheduler};
use pullstream::events::{parse_trace, render_trace, Event, History, Payload, Port, RequestKind};
use pullstream::harness::{conform, SweepConfig, DEFAULT_MAX_N_CAP};
use pullstream::lang::{parse_order, render_order};
use pullstream::order::{normalize, normalize_antecedent};
use pullstream::protocol::{check, CheckOptions, CheckReport, InterfaceSpec, Mode, SequenceParams};
use pullstream::reference::{Pipeline, SinkParams, SourceParams, TransformerParams};

const EXIT_VIOLATION: u8 = 2;

#[derive(Parser)]
#[command(name = "pullcheck", version, about = "Pull-stream protocol checker, generator and rule engine")]
struct Cli {
    /// Seed for the deterministic scheduler.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Step cap for rule-engine runs.
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a trace file against the protocol at one interface.
    Check(CheckArgs),
    /// Print the partial order for a normal or early-terminated sequence.
    Generate(GenerateArgs),
    /// Run a source/transformer/sink pipeline on the rule engine.
    Run(RunArgs),
    /// Exhaustively run and check a grid of pipelines.
    Conform(ConformArgs),
    /// Normalize a partial-order expression.
    Norm { expr: String },
    /// Decide whether a trace entails an expression.
    Entails { trace: PathBuf, expr: String },
}

#[derive(Args)]
struct CheckArgs {
    trace: PathBuf,
    /// Interface as `INPUT,OUTPUT`: the port requests are initiated on, then
    /// the port answers are initiated on.
    #[arg(long, default_value = "I,O")]
    iface: String,
    /// Prime level of the interface variables; inferred when omitted.
    #[arg(long)]
    level: Option<u8>,
    /// The trace is complete.
    #[arg(long)]
    finite: bool,
    #[arg(long)]
    allow_out_of_order: bool,
    #[arg(long)]
    allow_concurrent_asks: bool,
    /// Write a JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Coroutine,
    InOrder,
    OutOfOrder,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TerminateKind {
    Abort,
    Error,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TerminatedKind {
    Done,
    Err,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, conflicts_with = "early", required_unless_present = "early")]
    normal: bool,
    #[arg(long)]
    early: bool,
    #[arg(long)]
    n: u32,
    #[arg(long, required_if_eq("early", "true"))]
    r: Option<u32>,
    /// Wait for the last value before terminating (the default).
    #[arg(long, overrides_with = "no_wait")]
    wait: bool,
    #[arg(long)]
    no_wait: bool,
    #[arg(long, value_enum, default_value = "coroutine")]
    mode: ModeArg,
    #[arg(long, default_value = "I,O")]
    iface: String,
    #[arg(long, default_value_t = 0)]
    level: u8,
    /// Also list every concrete trace, one file each when --out is given.
    #[arg(long)]
    expand: bool,
    /// Keep only traces whose terminate requests are of this kind.
    #[arg(long, value_enum)]
    terminate: Option<TerminateKind>,
    /// Keep only traces whose terminated answers are of this kind.
    #[arg(long, value_enum)]
    terminated: Option<TerminatedKind>,
}

#[derive(Args)]
struct RunArgs {
    /// Source parameters, e.g. `n=2,err=false`.
    #[arg(long, default_value = "n=1")]
    source: String,
    /// A take stage, e.g. `r=1,err=false`; repeat for more stages.
    #[arg(long)]
    transformer: Vec<String>,
    /// Sink parameters, e.g. `r=2,err=false,w=true`.
    #[arg(long, default_value = "r=1,w=true")]
    sink: String,
    #[arg(long)]
    faulty_take: bool,
    /// `seed=N` for one deterministic run or `all` for every schedule.
    #[arg(long)]
    schedule: Option<String>,
}

#[derive(Args)]
struct ConformArgs {
    #[arg(long, default_value_t = 2)]
    max_n: u32,
    #[arg(long)]
    faulty_take: bool,
    /// Leave out source-to-sink pipelines.
    #[arg(long)]
    no_direct: bool,
    /// Leave out pipelines with a take stage.
    #[arg(long)]
    no_take: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_N_CAP)]
    cap: u32,
}

struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::fmt::Debug for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn parse_port(text: &str) -> Result<Port> {
    let text = text.trim();
    let (name, index) = match text.split_once('_') {
        Some((name, idx)) => (name, Some(idx.parse::<u32>().map_err(|_| usage(format!("bad port `{text}`")))?)),
        None => (text, None),
    };
    if !Port::valid_name(name) || index == Some(0) {
        return Err(usage(format!("bad port `{text}`")));
    }
    Ok(match index {
        Some(i) => Port::indexed(name, i),
        None => Port::new(name),
    })
}

fn parse_iface(text: &str, level: u8) -> Result<InterfaceSpec> {
    let (input, output) = text
        .split_once(',')
        .ok_or_else(|| usage(format!("interface must be `INPUT,OUTPUT`, got `{text}`")))?;
    InterfaceSpec::new(parse_port(input)?, parse_port(output)?, level).map_err(|e| usage(e.to_string()))
}

fn infer_level(h: &History, input: &Port, output: &Port) -> u8 {
    h.iter()
        .filter(|e| e.port.as_ref().is_some_and(|p| p == input || p == output))
        .find_map(|e| e.stream_var().map(|v| v.primes))
        .unwrap_or(0)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_check(args: &CheckArgs) -> Result<u8> {
    let trace = parse_trace(&read(&args.trace)?).map_err(|e| usage(format!("{}: {e}", args.trace.display())))?;
    let probe = parse_iface(&args.iface, 0)?;
    let level = args
        .level
        .unwrap_or_else(|| infer_level(&trace.history, &probe.input, &probe.output));
    let iface = parse_iface(&args.iface, level)?;
    let opts = CheckOptions {
        finite: args.finite,
        allow_out_of_order: args.allow_out_of_order,
        allow_concurrent_asks: args.allow_concurrent_asks,
    };
    let report = match check(&trace.history, &iface, opts) {
        Ok(r) => r,
        Err(e) => {
            let line = match &e {
                pullstream::protocol::ProtocolError::Malformed { position, .. } => trace.line_of(*position),
                _ => 0,
            };
            return Err(usage(format!("malformed trace at line {line}: {e}")));
        }
    };
    for v in &report.violations {
        println!("INV{} @line{}: {}", v.invariant, trace.line_of(v.position), v.message);
    }
    for p in &report.pending {
        println!("pending: {p}");
    }
    println!(
        "{} {} ({} events)",
        if report.passed() { "PASS" } else { "FAIL" },
        iface,
        iface.project(&trace.history).len()
    );
    if let Some(path) = &args.report {
        let json = serde_json::json!({
            "trace": args.trace.display().to_string(),
            "options": opts,
            "report": report,
            "lines": report.violations.iter().map(|v| trace.line_of(v.position)).collect::<Vec<_>>(),
        });
        write(path, &serde_json::to_string_pretty(&json)?)?;
    }
    Ok(if report.passed() { 0 } else { EXIT_VIOLATION })
}

fn keep_trace(l: &[Event], terminate: Option<TerminateKind>, terminated: Option<TerminatedKind>) -> bool {
    l.iter().all(|e| match &e.payload {
        Payload::Request { kind, .. } if kind.is_terminate() => match terminate {
            Some(TerminateKind::Abort) => *kind == RequestKind::Abort,
            Some(TerminateKind::Error) => matches!(kind, RequestKind::Error(_)),
            None => true,
        },
        Payload::Answer { value, .. } if value.is_terminated() => match terminated {
            Some(TerminatedKind::Done) => value.to_string() == "done",
            Some(TerminatedKind::Err) => value.to_string() != "done",
            None => true,
        },
        _ => true,
    })
}

fn cmd_generate(args: &GenerateArgs, out: Option<&Path>) -> Result<u8> {
    let iface = parse_iface(&args.iface, args.level)?;
    let mode = match args.mode {
        ModeArg::Coroutine => Mode::Coroutine,
        ModeArg::InOrder => Mode::ConcurrentInOrder,
        ModeArg::OutOfOrder => Mode::ConcurrentOutOfOrder,
    };
    let params = if args.early {
        let r = args.r.ok_or_else(|| usage("--early needs --r"))?;
        SequenceParams::early(args.n, r, !args.no_wait).map_err(|e| usage(e.to_string()))?
    } else {
        SequenceParams::normal(args.n)
    }
    .with_mode(mode);
    let expr = params.expr(&iface).map_err(|e| usage(e.to_string()))?;
    println!("{}", render_order(&expr));
    if !args.expand {
        return Ok(0);
    }
    let traces: Vec<Vec<Event>> = params
        .linearizations(&iface)?
        .into_iter()
        .filter(|l| keep_trace(l, args.terminate, args.terminated))
        .collect();
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (k, l) in traces.iter().enumerate() {
                let h = History::from_events(l.iter().cloned())?;
                write(&dir.join(format!("trace_{:03}.trace", k + 1)), &render_trace(&h))?;
            }
            println!("{} trace files in {}", traces.len(), dir.display());
        }
        None => {
            for (k, l) in traces.iter().enumerate() {
                let h = History::from_events(l.iter().cloned())?;
                print!("\n# trace {}\n{}", k + 1, render_trace(&h));
            }
        }
    }
    Ok(0)
}

fn stage_fields(spec: &str, allowed: &[&str]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("expected key=value, got `{part}`")))?;
        if !allowed.contains(&k) {
            return Err(usage(format!("unknown parameter `{k}` (expected one of {})", allowed.join(", "))));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn nat(k: &str, v: &str) -> Result<u32> {
    v.parse().map_err(|_| usage(format!("{k} must be a natural number, got `{v}`")))
}

fn flag(k: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(usage(format!("{k} must be true or false, got `{v}`"))),
    }
}

fn parse_pipeline(args: &RunArgs) -> Result<Pipeline> {
    let mut source = SourceParams::default();
    for (k, v) in stage_fields(&args.source, &["n", "err"])? {
        match k.as_str() {
            "n" => source.n = nat(&k, &v)?,
            _ => source.err = flag(&k, &v)?,
        }
    }
    let mut sink = SinkParams { r: 0, err: false, w: true };
    for (k, v) in stage_fields(&args.sink, &["r", "err", "w"])? {
        match k.as_str() {
            "r" => sink.r = nat(&k, &v)?,
            "err" => sink.err = flag(&k, &v)?,
            _ => sink.w = flag(&k, &v)?,
        }
    }
    let mut p = Pipeline::new(source, sink).faulty(args.faulty_take);
    for spec in &args.transformer {
        let mut t = TransformerParams::default();
        for (k, v) in stage_fields(spec, &["r", "err"])? {
            match k.as_str() {
                "r" => t.r = nat(&k, &v)?,
                _ => t.err = flag(&k, &v)?,
            }
        }
        p = p.transformer(t);
    }
    Ok(p)
}

fn check_run(p: &Pipeline, run: &Run) -> Result<Vec<CheckReport>> {
    p.interfaces()
        .iter()
        .map(|iface| check(&run.history, iface, CheckOptions::finite()).map_err(Into::into))
        .collect()
}

fn cmd_run(args: &RunArgs, cli: &Cli) -> Result<u8> {
    let p = parse_pipeline(args)?;
    let scheduler = match args.schedule.as_deref() {
        None => Scheduler::Deterministic { seed: cli.seed },
        Some("all") => Scheduler::Exhaustive,
        Some(s) => match s.strip_prefix("seed=").map(str::parse::<u64>) {
            Some(Ok(seed)) => Scheduler::Deterministic { seed },
            _ => return Err(usage(format!("--schedule must be `seed=N` or `all`, got `{s}`"))),
        },
    };
    let mut cfg = p.engine_config(scheduler);
    if let Some(steps) = cli.max_steps {
        cfg = cfg.max_steps(steps);
    }
    let engine = Engine::new(cfg)?;
    let runs = match scheduler {
        Scheduler::Exhaustive => engine.explore()?,
        Scheduler::Deterministic { seed } => vec![engine.run_seeded(seed)?],
    };
    println!("{p}");
    let mut failed = false;
    let mut manifest = String::new();
    for (k, run) in runs.iter().enumerate() {
        let reports = check_run(&p, run)?;
        let ok = reports.iter().all(CheckReport::passed);
        failed |= !ok;
        let file = format!("history_{:03}.trace", k + 1);
        println!("history {}: {} ({} events)", k + 1, if ok { "PASS" } else { "FAIL" }, run.history.len());
        for r in &reports {
            for v in &r.violations {
                println!("  INV{} @{} event {}: {}", v.invariant, r.interface, v.position + 1, v.message);
            }
        }
        if let Some(dir) = &cli.out {
            write(&dir.join(&file), &render_trace(&run.history))?;
            writeln!(manifest, "{p} -> {file} -> {}", if ok { "PASS" } else { "FAIL" })?;
        } else if runs.len() == 1 {
            print!("{}", render_trace(&run.history));
        }
    }
    if let Some(dir) = &cli.out {
        write(&dir.join("manifest.txt"), &manifest)?;
    }
    Ok(if failed { EXIT_VIOLATION } else { 0 })
}

fn cmd_conform(args: &ConformArgs, out: Option<&Path>) -> Result<u8> {
    let mut cfg = SweepConfig::new(args.max_n).faulty(args.faulty_take);
    cfg.direct = !args.no_direct;
    cfg.with_take = !args.no_take;
    cfg.validate(args.cap).map_err(|e| usage(e.to_string()))?;
    let report = conform(&cfg);
    for o in report.outcomes.iter().filter(|o| !o.ok()) {
        println!("FAIL {}", o.pipeline);
        if let Some(e) = &o.error {
            println!("  error: {e}");
        }
        let ids: BTreeSet<u8> = o.violations.iter().map(|f| f.violation.invariant).collect();
        if let Some(f) = o.violations.first() {
            println!(
                "  {} violations (invariants {:?}); first: history {} {} INV{}: {}",
                o.violations.len(),
                ids,
                f.history + 1,
                f.interface,
                f.violation.invariant,
                f.violation.message
            );
        }
        if !o.shape_mismatches.is_empty() {
            println!("  {} projections outside their generator", o.shape_mismatches.len());
        }
    }
    println!(
        "{} pipelines, {} histories, {} failing",
        report.pipelines, report.histories, report.failing
    );
    if let Some(path) = out {
        write(path, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(if report.ok() { 0 } else { EXIT_VIOLATION })
}

fn cmd_norm(expr: &str) -> Result<u8> {
    let x = parse_order(expr).map_err(|e| usage(e.to_string()))?;
    let n = normalize(&x).or_else(|_| normalize_antecedent(&x))?;
    println!("{}", render_order(&n));
    Ok(0)
}

fn cmd_entails(trace: &Path, expr: &str) -> Result<u8> {
    let t = parse_trace(&read(trace)?).map_err(|e| usage(format!("{}: {e}", trace.display())))?;
    let x = parse_order(expr).map_err(|e| usage(e.to_string()))?;
    let holds = entails(&t.history, &x, &Binding::new())?;
    println!("{holds}");
    Ok(if holds { 0 } else { EXIT_VIOLATION })
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Generate(a) => cmd_generate(a, cli.out.as_deref()),
        Command::Run(a) => cmd_run(a, cli),
        Command::Conform(a) => cmd_conform(a, cli.out.as_deref()),
        Command::Norm { expr } => cmd_norm(expr),
        Command::Entails { trace, expr } => cmd_entails(trace, expr),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if e.downcast_ref::<Usage>().is_some() {
                eprintln!("usage error: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}
