use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use anomaly_core::protocols::{parse_protocol_list, Granularity};
use anomaly_core::stats::{percent, Scope, EDGE_COLUMNS};
use anomaly_core::{
    anomaly_distribution, check_isolation, concurrency_degree, count, detect_anomalies, edge_distribution, enumerate,
    format_history, parse_history, rollback_table, stats, AnomalyClass, AnomalySubclass, HistorySpec, IsolationLevel,
    Priority, TerminalMode,
};

#[derive(Parser)]
#[command(name = "anomaly", version, about = "Detect, classify and count transaction-history anomalies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the anomalies of one history, or of each line of a file.
    Classify {
        /// History text, e.g. "W1[x] R2[x] A1 C2".
        history: Option<String>,
        /// Read histories from a file, one per line.
        #[arg(long, conflicts_with = "history")]
        file: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Only the anomaly whose cycle closes first.
        #[arg(long)]
        earliest: bool,
    },
    /// Count a history set, optionally writing every member.
    Enumerate {
        #[command(flatten)]
        set: SetArgs,
        /// Write the histories here, one per line.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Anomaly distribution over a history set.
    Stats {
        #[command(flatten)]
        set: SetArgs,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Edge-kind distribution over a history set.
    Edges {
        #[command(flatten)]
        set: SetArgs,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// True and false rollback rates of concurrency-control protocols.
    Rollback {
        #[command(flatten)]
        set: SetArgs,
        #[command(flatten)]
        report: ReportArgs,
        /// Comma-separated protocol names, or `all`.
        #[arg(long, default_value = "OCC,MaaT,MVTO,TO,SSI,NoWait")]
        protocols: String,
        /// Count victim transactions instead of histories.
        #[arg(long)]
        per_transaction: bool,
    },
    /// Whether a history is admissible at an isolation level.
    Isolation {
        history: String,
        #[arg(long, default_value = "nrw")]
        level: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Concurrency degree of each protocol.
    Degree {
        #[arg(long, default_value = "all")]
        protocols: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Args)]
struct SetArgs {
    /// m,n,k or m,n,k,mode.
    spec: String,
    /// Overrides the mode in the spec string.
    #[arg(long)]
    mode: Option<TerminalMode>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "ANOMALY_SHARDS")]
    shards: Option<usize>,
}

impl SetArgs {
    fn spec(&self) -> Result<HistorySpec> {
        let spec: HistorySpec = self.spec.parse().with_context(|| format!("bad spec `{}`", self.spec))?;
        Ok(self.mode.map_or(spec, |m| spec.with_mode(m)))
    }

    fn shards(&self) -> usize {
        self.shards
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the CSV table here and print only a summary.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Md,
    Machine,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let code = match cmd {
        Command::Classify { history, file, format, earliest } => classify(&mut out, history, file, format, earliest)?,
        Command::Enumerate { set, out: path } => {
            let spec = set.spec()?;
            let n = count(spec)?;
            if let Some(path) = path {
                let started = Instant::now();
                let mut w = BufWriter::new(fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?);
                for h in enumerate(spec) {
                    writeln!(w, "{}", format_history(&h))?;
                }
                w.flush()?;
                progress(spec, n, started);
            }
            writeln!(out, "{n}")?;
            ExitCode::SUCCESS
        }
        Command::Stats { set, report } => {
            let spec = set.spec()?;
            let priority = Priority::default();
            let started = Instant::now();
            let s = stats(spec, &priority, set.shards());
            progress(spec, s.histories, started);
            let d = anomaly_distribution(spec, &s, &priority);
            let summary = || {
                let mut text = format!(
                    "{} {}: {} histories, {} cyclic ({}%)\n",
                    spec,
                    spec.mode,
                    s.histories,
                    s.cyclic,
                    percent(s.cyclic, s.histories)
                );
                for c in [AnomalyClass::Wat, AnomalyClass::Rat, AnomalyClass::Iat] {
                    text += &format!("{c} {}%  ", percent(s.class_total(c), s.cyclic));
                }
                text.push('\n');
                for c in [AnomalySubclass::Sda, AnomalySubclass::Dda, AnomalySubclass::Mda] {
                    text += &format!("{c} {}%  ", percent(s.subclass_total(c), s.cyclic));
                }
                text.push('\n');
                for (label, n) in s.ranked_labels(&priority).into_iter().take(5) {
                    text += &format!("{label}: {}%\n", percent(n, s.cyclic));
                }
                text
            };
            emit(&mut out, &report, d.to_csv()?, d.to_markdown(), summary)?;
            ExitCode::SUCCESS
        }
        Command::Edges { set, report } => {
            let spec = set.spec()?;
            let started = Instant::now();
            let s = stats(spec, &Priority::default(), set.shards());
            progress(spec, s.histories, started);
            let d = edge_distribution(spec, &s);
            let summary = || {
                let mut text = String::new();
                for scope in [Scope::History, Scope::Cycles] {
                    let total: u64 = EDGE_COLUMNS.iter().map(|&(_, k)| s.edge_count(k, scope)).sum();
                    text += &format!("{scope}:");
                    for (name, k) in EDGE_COLUMNS {
                        text += &format!(" {name}={}%", percent(s.edge_count(k, scope), total));
                    }
                    text.push('\n');
                }
                text
            };
            emit(&mut out, &report, d.to_csv()?, d.to_markdown(), summary)?;
            ExitCode::SUCCESS
        }
        Command::Rollback { set, report, protocols, per_transaction } => {
            let spec = set.spec()?;
            let protocols = parse_protocol_list(&protocols)?;
            let started = Instant::now();
            let mut table = rollback_table(spec, &protocols, set.shards());
            progress(spec, table.stats.first().map_or(0, |s| s.n), started);
            if per_transaction {
                table.granularity = Granularity::Transaction;
            }
            let summary = || {
                let mut text = String::new();
                for (h, v) in table.header().iter().zip(table.row()) {
                    text += &format!("{h:>12} {v}\n");
                }
                text
            };
            if report.format == Format::Machine && report.out.is_none() {
                writeln!(out, "{}", table.header().join(";"))?;
                writeln!(out, "{}", table.row().join(";"))?;
                writeln!(out, "{}", table.count_row().join(";"))?;
            } else {
                emit(&mut out, &report, table.to_csv()?, table.to_markdown(), summary)?;
            }
            ExitCode::SUCCESS
        }
        Command::Isolation { history, level, format } => {
            let level: IsolationLevel = level.parse()?;
            let h = parse_history(&history)?;
            let verdict = check_isolation(&h, level)?;
            match format {
                Format::Machine | Format::Csv => {
                    writeln!(out, "{}", if verdict.admissible { "admissible" } else { "rejected" })?;
                    for v in &verdict.violations {
                        writeln!(out, "{}", v.to_line())?;
                    }
                }
                _ => {
                    if verdict.admissible {
                        writeln!(out, "admissible at {level}")?;
                    } else {
                        writeln!(out, "not admissible at {level}:")?;
                        for v in &verdict.violations {
                            writeln!(out, "  {}", v.to_line())?;
                        }
                    }
                }
            }
            if verdict.admissible { ExitCode::SUCCESS } else { ExitCode::from(1) }
        }
        Command::Degree { protocols, format } => {
            for p in parse_protocol_list(&protocols)? {
                let d = concurrency_degree(p, None);
                match format {
                    Format::Csv | Format::Machine => writeln!(out, "{},{}", p.name(), d)?,
                    _ => writeln!(out, "{:<12}{:>6}  ({:.3})", p.name(), d.to_string(), *d.numer() as f64 / *d.denom() as f64)?,
                }
            }
            ExitCode::SUCCESS
        }
    };
    out.flush()?;
    Ok(code)
}

fn classify(out: &mut impl Write, history: Option<String>, file: Option<PathBuf>, format: Format, earliest: bool) -> Result<ExitCode> {
    let inputs: Vec<String> = match (history, file) {
        (Some(h), _) => vec![h],
        (None, Some(path)) => read_lines(&path)?,
        (None, None) => bail!("give a history or --file"),
    };
    let mut found = false;
    for (i, text) in inputs.iter().enumerate() {
        let h = match parse_history(text) {
            Ok(h) => h,
            Err(e) if inputs.len() > 1 => bail!("line {}: {e}", i + 1),
            Err(e) => bail!(e),
        };
        let mut reports = detect_anomalies(&h)?;
        if earliest {
            reports.truncate(1);
        }
        found |= !reports.is_empty();
        let prefix = if inputs.len() > 1 { format!("{};", i + 1) } else { String::new() };
        if reports.is_empty() {
            writeln!(out, "{prefix}serializable")?;
        }
        for r in &reports {
            match format {
                Format::Machine => writeln!(out, "{prefix}{};{}", r.to_line(), r.earliest_close_position)?,
                Format::Md => writeln!(out, "| {} | {} | {} | {} |", r.title(), r.class, r.subclass, r.cycle.signature())?,
                _ => writeln!(out, "{prefix}{}", r.to_line())?,
            }
        }
    }
    Ok(if found { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn emit(out: &mut impl Write, report: &ReportArgs, csv: String, md: String, summary: impl Fn() -> String) -> Result<()> {
    if let Some(path) = &report.out {
        fs::write(path, &csv).with_context(|| format!("cannot write {}", path.display()))?;
        write!(out, "{}", summary())?;
        return Ok(());
    }
    match report.format {
        Format::Csv | Format::Machine => write!(out, "{csv}")?,
        Format::Md => write!(out, "{md}")?,
        Format::Text => write!(out, "{}", summary())?,
    }
    Ok(())
}

fn progress(spec: HistorySpec, histories: u64, started: Instant) {
    let secs = started.elapsed().as_secs_f64();
    eprintln!(
        "{spec} {}: {histories} histories in {secs:.1}s ({:.0}/s)",
        spec.mode,
        histories as f64 / secs.max(1e-9)
    );
}
