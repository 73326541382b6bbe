//! `blendcac` command-line driver.
//!
//! Every run command takes an explicit `--seed`; time is always virtual.
//! Artifacts go under `--out` and are byte-identical across reruns with
//! the same inputs. Failures are reported on stderr as one JSON object
//! (`{"error": kind, "message": ...}`) with a nonzero exit status.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blendcac_core::ledger::{export_chain, format_cents, import_chain, Call, ChainConfig, Ledger};
use blendcac_netsim::report::{
    check_expectations, render_expectations, render_measurements, render_traces, write_breakdown_csv,
    write_comparison_csv, Summary,
};
use blendcac_netsim::testbed::{bench_scenario, demo_testbed, BASELINE_LABEL, BENCH_LABEL, DEMO_CASES};
use blendcac_netsim::{run_config, Measurement, Preset, ReportFormat, RunOutput, ScenarioConfig, SimError, Simulation};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "blendcac", version, about = "Blockchain-enabled capability access control simulator")]
struct Cli {
    /// Print the scenario event log to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the five-node testbed through the four authorization cases.
    Demo(RunArgs),
    /// Run a scenario file and check its expectations.
    Scenario {
        file: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Warm-up plus N requests per profile; writes breakdown and comparison CSVs.
    Bench {
        #[arg(long, value_enum, default_value_t = BenchProfile::Satellite)]
        profile: BenchProfile,
        /// Warm requests after the first (cold) one.
        #[arg(long, default_value_t = 100)]
        requests: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Replay an exported chain and dump blocks, zones and tokens.
    Inspect { chain: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Seed for identities, link delays and drops.
    #[arg(long)]
    seed: u64,
    /// Override the scenario block interval.
    #[arg(long)]
    block_interval_ms: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "blendcac-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Text => ReportFormat::Text,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchProfile {
    Satellite,
    Ground,
}

impl BenchProfile {
    /// Breakdown preset and the link preset used for the comparison.
    fn presets(self) -> (Preset, Preset) {
        match self {
            BenchProfile::Satellite => (Preset::Satellite, Preset::SatelliteLink),
            BenchProfile::Ground => (Preset::Ground, Preset::GroundLink),
        }
    }
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code,
            kind,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        let kind = if e.kind() == std::io::ErrorKind::NotFound {
            "file-not-found"
        } else {
            "io"
        };
        Failure::new(2, kind, format!("{}: {e}", path.display()))
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let kind = match e {
            SimError::Config(_) => "invalid-scenario",
            SimError::Event { .. } => "scenario-event",
            SimError::Setup(_) => "topology",
            SimError::Ledger(_) => "ledger",
        };
        Failure::new(2, kind, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Demo(run) => demo(&run, cli.verbose),
        Command::Scenario { file, run } => scenario(&file, &run, cli.verbose),
        Command::Bench { profile, requests, run } => bench(profile, requests, &run, cli.verbose),
        Command::Inspect { chain } => inspect(&chain),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let body = serde_json::json!({ "error": f.kind, "message": f.message });
            eprintln!("{body}");
            ExitCode::from(f.code)
        }
    }
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> CmdResult {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::io(&path, e))
}

fn prepare(run: &RunArgs, mut cfg: ScenarioConfig) -> Result<ScenarioConfig, Failure> {
    if let Some(ms) = run.block_interval_ms {
        cfg.block_interval_ms = ms;
    }
    fs::create_dir_all(&run.out).map_err(|e| Failure::io(&run.out, e))?;
    Ok(cfg)
}

/// Chain export, gas report, per-request rows, stage traces, summary and
/// event log, all prefixed with `prefix`.
fn write_run(run: &RunArgs, prefix: &str, sim: &Simulation, out: &RunOutput) -> Result<Summary, Failure> {
    let fmt: ReportFormat = run.format.into();
    let ext = fmt.extension();
    let dir = &run.out;
    let mut chain = Vec::new();
    let mut gas = Vec::new();
    sim.ledger().read(|l| {
        export_chain(l.blocks(), &mut chain).expect("in-memory write");
        l.gas_report().write_csv(&mut gas).expect("in-memory write");
    });
    write(dir, &format!("{prefix}chain.jsonl"), chain)?;
    write(dir, &format!("{prefix}gas.csv"), gas)?;
    write(dir, &format!("{prefix}measurements.{ext}"), render_measurements(&out.measurements, fmt))?;
    write(dir, &format!("{prefix}traces.csv"), render_traces(&out.measurements))?;
    let summary = Summary::of(&out.measurements);
    write(dir, &format!("{prefix}summary.{ext}"), summary.render(fmt))?;
    let log: String = out.log.iter().map(|e| format!("{:>10} ms  {}\n", e.at_ms, e.what)).collect();
    write(dir, &format!("{prefix}events.log"), log)?;
    Ok(summary)
}

fn print_log(out: &RunOutput, verbose: u8) {
    if verbose > 0 {
        for e in &out.log {
            eprintln!("{:>10} ms  {}", e.at_ms, e.what);
        }
    }
}

fn demo(run: &RunArgs, verbose: u8) -> CmdResult {
    let cfg = prepare(run, demo_testbed())?;
    let (sim, out) = run_config(cfg.clone(), run.seed)?;
    print_log(&out, verbose);
    write_run(run, "demo_", &sim, &out)?;

    let mut table = format!(
        "{:<4} {:<36} {:<30} {:<16} {:<6} {}\n",
        "case", "description", "requester -> provider", "check", "result", "detail"
    );
    let mut all_as_expected = true;
    for (i, case) in DEMO_CASES.iter().enumerate() {
        let m = out
            .measurements
            .iter()
            .find(|m| m.label == case.label)
            .ok_or_else(|| Failure::new(2, "demo", format!("no measurement for {}", case.label)))?;
        let (check, pass) = match case.check {
            Some(stage) => (
                stage.as_str(),
                m.trace
                    .stages
                    .iter()
                    .any(|s| s.stage == stage && s.outcome == blendcac_core::enforcement::StageOutcome::Pass),
            ),
            None => ("decision", m.outcome.is_grant()),
        };
        all_as_expected &= pass == case.expect_pass;
        let detail = match m.stage() {
            Some(stage) => format!("denied at {stage}: {}", m.reason()),
            None => "granted".to_string(),
        };
        table.push_str(&format!(
            "({}) {:<36} {:<30} {:<16} {:<6} {}\n",
            (b'a' + i as u8) as char,
            case.description,
            format!("{} -> {}", m.requester, m.provider),
            check,
            if pass { "pass" } else { "deny" },
            detail
        ));
    }
    print!("{table}");
    write(&run.out, "demo_table.txt", &table)?;
    if all_as_expected {
        Ok(())
    } else {
        Err(Failure::new(1, "demo-mismatch", "a demo case did not produce its expected result"))
    }
}

fn scenario(file: &Path, run: &RunArgs, verbose: u8) -> CmdResult {
    let text = fs::read_to_string(file).map_err(|e| Failure::io(file, e))?;
    let cfg = ScenarioConfig::from_toml(&text).map_err(|e| Failure::new(2, "invalid-scenario", e.to_string()))?;
    let cfg = prepare(run, cfg)?;
    let (sim, out) = run_config(cfg.clone(), run.seed)?;
    print_log(&out, verbose);
    let summary = write_run(run, "", &sim, &out)?;
    let results = check_expectations(&cfg.expectations, &out.measurements);
    let rendered = render_expectations(&results);
    write(&run.out, "expectations.txt", &rendered)?;
    print!("{}", summary.render(ReportFormat::Text));
    print!("{rendered}");
    let failed = results.iter().filter(|r| !r.ok).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::new(
            1,
            "expectations-failed",
            format!("{failed} of {} expectations failed", results.len()),
        ))
    }
}

fn by_label(ms: &[Measurement], label: &str) -> Vec<Measurement> {
    ms.iter().filter(|m| m.label == label).cloned().collect()
}

fn bench(profile: BenchProfile, requests: usize, run: &RunArgs, verbose: u8) -> CmdResult {
    let (breakdown, link) = profile.presets();
    for (kind, preset) in [("breakdown", breakdown), ("comparison", link)] {
        let cfg = prepare(run, bench_scenario(preset, requests))?;
        let (sim, out) = run_config(cfg, run.seed)?;
        print_log(&out, verbose);
        let prefix = format!("bench_{}_", preset.as_str());
        let summary = write_run(run, &prefix, &sim, &out)?;
        let name = format!("{kind}_{}.csv", preset.as_str());
        let mut csv = Vec::new();
        let written = if kind == "breakdown" {
            write_breakdown_csv(preset.as_str(), &out.measurements, &mut csv)
        } else {
            write_comparison_csv(
                &by_label(&out.measurements, BENCH_LABEL),
                &by_label(&out.measurements, BASELINE_LABEL),
                &mut csv,
            )
        };
        written.map_err(|e| Failure::new(2, "report", e.to_string()))?;
        write(&run.out, &name, csv)?;
        println!("== {} ({name})", preset.as_str());
        print!("{}", summary.render(ReportFormat::Text));
        println!();
    }
    Ok(())
}

fn inspect(path: &Path) -> CmdResult {
    let file = fs::File::open(path).map_err(|e| Failure::io(path, e))?;
    let blocks = import_chain(BufReader::new(file)).map_err(|e| Failure::new(2, "corrupt-chain", e.to_string()))?;
    let supervisor = blocks
        .first()
        .and_then(|b| b.txs.first())
        .filter(|t| t.call == Call::DeployContracts)
        .map(|t| t.sender)
        .ok_or_else(|| Failure::new(2, "corrupt-chain", "genesis block does not deploy the contracts"))?;
    let interval = blocks
        .windows(2)
        .map(|w| w[1].timestamp - w[0].timestamp)
        .filter(|d| *d > 0)
        .min()
        .unwrap_or(blendcac_core::ledger::DEFAULT_BLOCK_INTERVAL_MS);
    let ledger = Ledger::from_blocks(ChainConfig::new(supervisor).with_block_interval(interval), blocks)
        .map_err(|e| Failure::new(2, "corrupt-chain", e.to_string()))?;

    let mut s = String::new();
    s.push_str(&format!("[chain]\nheight = {}\nsupervisor = \"{supervisor}\"\ntip = \"{}\"\n", ledger.height(), ledger.tip().digest));
    for b in ledger.blocks() {
        s.push_str(&format!(
            "\n[[block]]\nheight = {}\ntimestamp = {}\ndigest = \"{}\"\n",
            b.height, b.timestamp, b.digest
        ));
        for tx in &b.txs {
            let outcome = ledger
                .receipt(&tx.digest())
                .map(|r| format!("{:?}", r.outcome))
                .unwrap_or_default();
            s.push_str(&format!(
                "tx = {{ sender = \"{}\", nonce = {}, op = \"{}\", gas = {}, outcome = {:?} }}\n",
                tx.sender,
                tx.nonce,
                tx.call.op_name(),
                tx.gas_used,
                outcome
            ));
        }
    }
    let state = ledger.state();
    for z in state.vzone.zones() {
        s.push_str(&format!("\n[[zone]]\nVZoneID = {:?}\nmaster = \"{}\"\nuid = {}\n", z.zone_id, z.master, z.uid));
    }
    for n in state.vzone.nodes() {
        s.push_str(&format!(
            "\n[[vnode]]\nvid = \"{}\"\nVZoneID = {:?}\nnode_type = {}\n",
            n.vid,
            n.vzone_id,
            n.node_type.code()
        ));
    }
    for t in state.capac.tokens() {
        s.push_str(&format!(
            "\n[[token]]\nvid = \"{}\"\nid = {}\nVZone_master = \"{}\"\nisValid = {}\nissuedate = {}\nexpireddate = {}\nauthorization = {}\n",
            t.vid,
            t.id,
            t.vzone_master,
            t.is_valid,
            t.issue_date,
            t.expired_date,
            serde_json::to_string(&t.authorization).expect("rules serialize")
        ));
    }
    let gas = ledger.gas_report();
    s.push_str(&format!(
        "\n[gas]\ntransactions = {}\ntotal_gas = {}\ntotal_usd = \"{}\"\n",
        gas.charges.len(),
        gas.total_gas(),
        format_cents(gas.total_usd_cents())
    ));
    print!("{s}");
    Ok(())
}
