use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use ridealert::config::SimConfig;
use ridealert::gsm::parse_contacts;
use ridealert::nmea::{parse_sentence_bytes, to_geofix, NmeaError};
use ridealert::sim::bom::{bom_total, BomTable};
use ridealert::sim::power::{power_budget, PowerProfile};
use ridealert::sim::scenario::{generate, Scenario, ScenarioKind};
use ridealert::sim::{replay, ReplayOptions, RideTrace};

#[derive(Parser)]
#[command(
    name = "ridealert",
    version,
    about = "Crash detection pipeline simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ride trace (JSONL).
    Simulate {
        #[arg(long, value_enum)]
        scenario: ScenarioKind,
        /// Ride length in seconds.
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Crash (or wobble) start, seconds into the ride.
        #[arg(long)]
        crash_at: Option<f64>,
        /// Output path, `-` for stdout.
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Replay a trace; exits 2 when an accident is confirmed.
    Replay {
        /// Trace path, `-` for stdin.
        #[arg(long)]
        trace: PathBuf,
        /// Emergency contacts, comma separated E.164 numbers.
        #[arg(long)]
        contacts: String,
        /// Re-arm after the rider is upright again.
        #[arg(long)]
        rearm: bool,
        /// Optional TOML overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Transcript path, `-` for stdout.
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Decode GGA/RMC sentences, one JSON fix per line.
    ParseNmea {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Battery runtime from a component current profile.
    PowerBudget {
        /// CSV: component,current_mA,vmin,vmax
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 2500.0)]
        capacity_mah: f64,
        #[arg(long)]
        json: bool,
    },
    /// Total cost of a bill of materials.
    Bom {
        /// CSV: component,quantity,unit_price_bdt
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn open_input(path: &Path) -> anyhow::Result<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok(Box::new(BufReader::new(f)))
    }
}

fn open_output(path: &Path) -> anyhow::Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(BufWriter::new(io::stdout())))
    } else {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Box::new(BufWriter::new(f)))
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            scenario,
            duration,
            seed,
            crash_at,
            out,
        } => {
            let scenario = Scenario {
                name: scenario,
                duration_s: duration,
                seed,
                crash_at_s: crash_at,
            };
            let trace = generate(&scenario)?;
            let mut w = open_output(&out)?;
            trace.write_jsonl(&mut w)?;
            w.flush()?;
        }
        Command::Replay {
            trace,
            contacts,
            rearm,
            config,
            out,
        } => {
            let config = match config {
                Some(path) => SimConfig::load(&path)?,
                None => SimConfig::default(),
            };
            let options = ReplayOptions {
                rearm,
                ..ReplayOptions::from_config(&config)?
            };
            let contacts = parse_contacts(&contacts)?;
            let trace = RideTrace::read_jsonl(open_input(&trace)?)?;
            let outcome = replay(&trace, &contacts, &options)?;
            let mut w = open_output(&out)?;
            outcome.write_jsonl(&mut w)?;
            w.flush()?;
            return Ok(ExitCode::from(outcome.exit_code()));
        }
        Command::ParseNmea { input } => {
            let mut reader = open_input(&input)?;
            let stdout = io::stdout();
            let mut w = stdout.lock();
            let (mut skipped, mut rejected) = (0, 0);
            let mut line = Vec::new();
            let mut line_no = 0;
            while reader.read_until(b'\n', &mut line)? > 0 {
                line_no += 1;
                if line.iter().all(u8::is_ascii_whitespace) {
                    line.clear();
                    continue;
                }
                match parse_sentence_bytes(&line).and_then(|s| to_geofix(&s)) {
                    Ok(fix) => {
                        serde_json::to_writer(&mut w, &fix)?;
                        writeln!(w)?;
                    }
                    Err(NmeaError::UnsupportedSentence(_)) => skipped += 1,
                    Err(e) => {
                        rejected += 1;
                        eprintln!("line {line_no}: {e}");
                    }
                }
                line.clear();
            }
            if skipped + rejected > 0 {
                eprintln!("{skipped} unsupported, {rejected} rejected");
            }
        }
        Command::PowerBudget {
            profile,
            capacity_mah,
            json,
        } => {
            let profile = PowerProfile::<f64>::from_csv(open_input(&profile)?, capacity_mah)?;
            let report = power_budget(&profile)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("total current: {:.2} mA", report.total_current_ma);
                println!(
                    "runtime: {:.2} h on {} mAh",
                    report.runtime_h, report.battery_capacity_mah
                );
                for m in &report.flagged {
                    println!(
                        "flag: {} needs {}-{} V, outside the {} V rail",
                        m.component, m.vmin, m.vmax, m.rail_v
                    );
                }
            }
        }
        Command::Bom { file, json } => {
            let mut text = String::new();
            open_input(&file)?.read_to_string(&mut text)?;
            let table = BomTable::from_csv(text.as_bytes())?;
            let total = bom_total(&table);
            if json {
                println!(
                    "{}",
                    serde_json::json!({ "rows": table.rows, "total_bdt": total })
                );
            } else {
                for r in &table.rows {
                    println!(
                        "{:>3} x {:<50} {:>6}",
                        r.quantity,
                        r.component,
                        u64::from(r.quantity) * r.unit_price_bdt
                    );
                }
                println!("total: {total} BDT");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // Exit code 2 is reserved for a confirmed accident, so usage errors
    // must not use clap's default.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
