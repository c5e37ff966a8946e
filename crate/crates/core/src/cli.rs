//! `filpost` command line.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 when a command
//! fails on its input.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{
    decode_stream, decode_stream_lenient, encode_stream, strip_line_breaks, CodecError, FilStream,
};
use crate::czm::{
    self, inverse_identify, CzmError, ForwardConfig, InverseOptions, ResponseCurve, SurrogateKind,
    SyntheticModel, TSLParams,
};
use crate::format::sig6;
use crate::jobs::{cleanup, render_input, run_job, JobError, JobSpec};
use crate::records::{
    extract_elements, extract_nodal_field, extract_nodes, extract_raw, extract_stresses,
    ElementRow, ElementTable, NodalFieldTable, NodalRow, NodeRow, NodeTable, Precision,
    RecordError, StressRow, StressTable, DISPLACEMENT_KEY, ELEMENT_KEY, NODE_KEY,
    REACTION_FORCE_KEY, STRESS_KEY,
};
use crate::truss::{self, optimize_truss, AnalyticTruss, ExternalTruss, TrussConfig, TrussError};
use crate::vtk::{write_hazard_csv, write_hazard_vtk, VtkError};
use crate::weibull::{
    field_from_results, fit_three_parameter, hazard_map, rank_failure_loads, read_failure_loads,
    read_fields_csv, FitOptions, WeibullError, WeibullParams,
};

pub const DEFAULT_SEED: u64 = 2017;

#[derive(Debug, Parser)]
#[command(
    name = "filpost",
    version,
    about = "Post-processing for ASCII finite-element results files"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump every record of a results file, then counts per key.
    Decode {
        /// Results file; standard input when omitted or `-`.
        input: Option<PathBuf>,
        /// Skip malformed records instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Print the records of one key as a table.
    Extract {
        #[arg(long)]
        key: i64,
        input: Option<PathBuf>,
        /// Full precision instead of 6 significant digits.
        #[arg(long)]
        full: bool,
    },
    /// Generate a fixture results file: node grid, CPE4 elements,
    /// displacements and stresses.
    Synth {
        #[arg(long, default_value_t = 16)]
        nodes: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Calibrate threshold, modulus and scale against failure loads.
    WeibullFit {
        /// CSV rows `load_level,element_id,sigma1,volume`.
        #[arg(long)]
        fields: PathBuf,
        /// One failure load per line.
        #[arg(long)]
        loads: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        v0: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        /// Hold the threshold fixed (two-parameter fit).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Per-element failure probability of a results file's stress field.
    Hazard {
        input: PathBuf,
        #[arg(long)]
        sigma_th: f64,
        #[arg(long)]
        m: f64,
        #[arg(long)]
        sigma_u: f64,
        #[arg(long, default_value_t = 1.0)]
        v0: f64,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = HazardFormat::Vtk)]
        format: HazardFormat,
    },
    /// Minimum-weight sizing of the two-bar truss.
    TrussOpt {
        /// TOML problem file.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        external: ExternalArgs,
    },
    /// Identify cohesive strength and energy from a load-CMOD curve.
    CzmIdentify {
        /// CSV `cmod,load` target curve.
        #[arg(long, conflicts_with = "synthetic")]
        target: Option<PathBuf>,
        /// Use the forward model at `TC,GC` as the target.
        #[arg(long, value_parser = parse_pair)]
        synthetic: Option<(f64, f64)>,
        /// `T_min,T_max,G_min,G_max`.
        #[arg(long = "box", value_parser = parse_box, default_value = "100,300,20,100")]
        bounds: [[f64; 2]; 2],
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
        #[arg(long, default_value_t = 10)]
        max_outer: usize,
        #[arg(long, default_value_t = 5)]
        n_init: usize,
        #[arg(long, value_enum, default_value_t = Kind::Interpolant)]
        kind: Kind,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Run an external solver job and summarize its results file.
    Run {
        #[command(flatten)]
        job: JobArgs,
        /// Input deck template rendered to `{workdir}/{job}.inp`.
        #[arg(long)]
        template: Option<PathBuf>,
        /// `MARKER=replacement line`, repeatable.
        #[arg(long = "set", value_parser = parse_sub)]
        substitutions: Vec<(String, String)>,
        /// Leave result files in place.
        #[arg(long)]
        keep: bool,
    },
    /// Stand-in truss solver speaking the lock-file protocol.
    #[command(hide = true)]
    SolveTruss {
        #[arg(long)]
        deck: PathBuf,
        #[arg(long)]
        job: String,
        #[arg(long, default_value_t = 0)]
        delay_ms: u64,
    },
    /// Stand-in cohesive-zone solver speaking the lock-file protocol.
    #[command(hide = true)]
    SolveCzm {
        #[arg(long)]
        deck: PathBuf,
        #[arg(long)]
        job: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HazardFormat {
    Vtk,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Interpolant,
    Network,
}

#[derive(Debug, Args)]
pub struct ExternalArgs {
    /// Run each analysis as an external job with this command (`{job}` is
    /// substituted).
    #[arg(long)]
    pub external: Option<String>,
    #[arg(long, default_value = ".")]
    pub workdir: PathBuf,
    #[arg(long, default_value = "truss")]
    pub job: String,
}

#[derive(Debug, Args)]
pub struct JobArgs {
    /// Shell command; `{job}` is replaced by the job name.
    #[arg(long)]
    pub command: String,
    #[arg(long)]
    pub job: String,
    #[arg(long, default_value = ".")]
    pub workdir: PathBuf,
    /// Seconds before the first lock check.
    #[arg(long, default_value_t = 0.5)]
    pub initial_wait: f64,
    #[arg(long, default_value_t = 0.1)]
    pub poll: f64,
    #[arg(long, default_value_t = 600.0)]
    pub timeout: f64,
}

fn parse_floats(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers"));
    }
    Ok(v)
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = parse_floats(s, 2)?;
    Ok((v[0], v[1]))
}

fn parse_box(s: &str) -> Result<[[f64; 2]; 2], String> {
    let v = parse_floats(s, 4)?;
    Ok([[v[0], v[1]], [v[2], v[3]]])
}

fn parse_sub(s: &str) -> Result<(String, String), String> {
    let (m, r) = s.split_once('=').ok_or("expected MARKER=line")?;
    if m.is_empty() {
        return Err("empty marker".into());
    }
    Ok((m.to_string(), r.to_string()))
}

fn seconds(v: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(v).map_err(|_| CliError::Usage(format!("invalid duration {v}")))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Weibull(#[from] WeibullError),
    #[error(transparent)]
    Truss(#[from] TrussError),
    #[error(transparent)]
    Czm(#[from] CzmError),
    #[error(transparent)]
    Job(#[from] JobError),
    #[error(transparent)]
    Vtk(#[from] VtkError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::File {
            path: path.to_path_buf(),
            source,
        })
}

fn input_text(input: &Option<PathBuf>, stdin: &mut dyn Read) -> Result<String, CliError> {
    match input {
        Some(p) if p.as_os_str() != "-" => read_text(p),
        _ => {
            let mut s = String::new();
            stdin.read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn dispatch<I, T>(
    args: I,
    stdin: &mut dyn Read,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(cli.command, stdin, out) {
        Ok(()) => 0,
        // reader closed early, e.g. `| head`
        Err(CliError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(
    command: Command,
    stdin: &mut dyn Read,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    match command {
        Command::Decode { input, lenient } => {
            let text = strip_line_breaks(&input_text(&input, stdin)?);
            let stream = if lenient {
                let (stream, errors) = decode_stream_lenient(&text);
                for e in &errors {
                    log::warn!("skipped: {e}");
                }
                stream
            } else {
                decode_stream(&text)?
            };
            write_dump(&stream, out)
        }
        Command::Extract { key, input, full } => {
            let stream = decode_stream(&strip_line_breaks(&input_text(&input, stdin)?))?;
            let precision = if full {
                Precision::Full
            } else {
                Precision::Sig6
            };
            write_table(&stream, key, precision, out)
        }
        Command::Synth {
            nodes,
            seed,
            output,
        } => {
            let text = encode_stream(&synth_stream(nodes, seed));
            match output {
                Some(p) => {
                    fs::write(&p, text).map_err(|source| CliError::File { path: p, source })?
                }
                None => out.write_all(text.as_bytes())?,
            }
            Ok(())
        }
        Command::WeibullFit {
            fields,
            loads,
            v0,
            tol,
            max_iter,
            threshold,
        } => {
            let fields = read_fields_csv(open(&fields)?)?;
            let loads = read_failure_loads(open(&loads)?)?;
            let opts = FitOptions {
                tol,
                max_iter,
                fixed_threshold: threshold,
            };
            let fit = fit_three_parameter(&fields, &rank_failure_loads(&loads), v0, &opts)?;
            let p = fit.params;
            writeln!(out, "sigma_th = {}", sig6(p.sigma_th))?;
            writeln!(out, "m = {}", sig6(p.m))?;
            writeln!(out, "sigma_u = {}", sig6(p.sigma_u))?;
            writeln!(out, "V0 = {}", sig6(p.v0))?;
            writeln!(out, "iterations = {}", fit.trace.len())?;
            writeln!(out)?;
            writeln!(out, "iteration,sigma_th,m,sigma_u,residual,change")?;
            for (i, t) in fit.trace.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    i + 1,
                    sig6(t.params.sigma_th),
                    sig6(t.params.m),
                    sig6(t.params.sigma_u),
                    sig6(t.residual),
                    sig6(t.change)
                )?;
            }
            Ok(())
        }
        Command::Hazard {
            input,
            sigma_th,
            m,
            sigma_u,
            v0,
            output,
            format,
        } => {
            let params = WeibullParams::new(sigma_th, m, sigma_u, v0)?;
            let stream = decode_stream(&strip_line_breaks(&read_text(&input)?))?;
            let nodes = extract_nodes(&stream)?;
            let elements = extract_elements(&stream)?;
            let field = field_from_results(0.0, &nodes, &elements, &extract_stresses(&stream)?)?;
            let map = hazard_map(&field, &params);
            let file = File::create(&output).map_err(|source| CliError::File {
                path: output.clone(),
                source,
            })?;
            let mut w = BufWriter::new(file);
            match format {
                HazardFormat::Vtk => write_hazard_vtk(&mut w, &nodes, &elements, &map)?,
                HazardFormat::Csv => write_hazard_csv(&mut w, &map)?,
            }
            w.flush()?;
            let max = map.probability.iter().copied().fold(0.0, f64::max);
            writeln!(out, "elements = {}", map.element_ids.len())?;
            writeln!(out, "max_probability = {}", sig6(max))?;
            writeln!(out, "output = {}", output.display())?;
            Ok(())
        }
        Command::TrussOpt { config, external } => {
            let cfg = TrussConfig::parse(&read_text(&config)?)?;
            let opts = cfg.options();
            let opt = match external.external {
                None => optimize_truss(&cfg.problem, cfg.start(), &opts, &mut AnalyticTruss)?,
                Some(command) => {
                    let mut job = JobSpec::new(command, external.job, external.workdir);
                    job.initial_wait = Duration::ZERO;
                    job.poll_interval = Duration::from_millis(5);
                    job.cleanup_suffixes.push(".inp".into());
                    let mut analysis = ExternalTruss::new(job, truss::deck_template(&cfg.problem));
                    optimize_truss(&cfg.problem, cfg.start(), &opts, &mut analysis)?
                }
            };
            write!(out, "{}", truss::report(&opt))?;
            writeln!(out)?;
            writeln!(
                out,
                "minimum weight {} N at A = [{}, {}] m^2",
                sig6(opt.state.weight),
                sig6(opt.state.areas[0]),
                sig6(opt.state.areas[1])
            )?;
            Ok(())
        }
        Command::CzmIdentify {
            target,
            synthetic,
            bounds,
            tol,
            max_outer,
            n_init,
            kind,
            seed,
        } => {
            let mut model = SyntheticModel::default();
            let target = match (target, synthetic) {
                (Some(path), _) => {
                    ResponseCurve::from_csv(&read_text(&path)?, &model.config.abscissae())?
                }
                (None, Some((tc, gc))) => {
                    czm::forward_model(&TSLParams::new(tc, gc)?, &model.config)
                }
                (None, None) => {
                    return Err(CliError::Usage(
                        "one of --target or --synthetic is required".into(),
                    ))
                }
            };
            let opts = InverseOptions {
                bounds,
                n_init,
                tol,
                max_outer,
                kind: match kind {
                    Kind::Interpolant => SurrogateKind::Interpolant,
                    Kind::Network => SurrogateKind::Network,
                },
                seed,
                ..InverseOptions::default()
            };
            let result = inverse_identify(&target, &mut model, &opts)?;
            write!(out, "{}", result.report())?;
            Ok(())
        }
        Command::Run {
            job,
            template,
            substitutions,
            keep,
        } => {
            let spec = JobSpec {
                command_template: job.command,
                job_name: job.job,
                workdir: job.workdir,
                initial_wait: seconds(job.initial_wait)?,
                poll_interval: seconds(job.poll)?,
                timeout: seconds(job.timeout)?,
                cleanup_suffixes: JobSpec::new("", "", "").cleanup_suffixes,
            };
            spec.validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(t) = template {
                let subs: Vec<(&str, &str)> = substitutions
                    .iter()
                    .map(|(m, r)| (m.as_str(), r.as_str()))
                    .collect();
                let deck = render_input(&read_text(&t)?, &subs)?;
                fs::write(spec.workdir.join(format!("{}.inp", spec.job_name)), deck)?;
            } else if !substitutions.is_empty() {
                return Err(CliError::Usage("--set needs --template".into()));
            }
            let path = run_job(&spec)?;
            let stream = decode_stream(&strip_line_breaks(&read_text(&path)?))?;
            writeln!(out, "results = {}", path.display())?;
            write_counts(&stream, out)?;
            if !keep {
                cleanup(&spec)?;
            }
            Ok(())
        }
        Command::SolveTruss {
            deck,
            job,
            delay_ms,
        } => {
            let text = read_text(&deck)?;
            stub_solve(&job, Duration::from_millis(delay_ms), || {
                Ok(truss::solve_deck(&text)?)
            })
        }
        Command::SolveCzm { deck, job } => {
            let text = read_text(&deck)?;
            stub_solve(&job, Duration::ZERO, || {
                Ok(czm::solve_deck(&text, &ForwardConfig::default())?)
            })
        }
    }
}

/// Holds `{job}.lck` while producing `{job}.fil` in the current directory.
fn stub_solve(
    job: &str,
    delay: Duration,
    solve: impl FnOnce() -> Result<String, CliError>,
) -> Result<(), CliError> {
    let lock = PathBuf::from(format!("{job}.lck"));
    fs::write(&lock, "")?;
    let result = (|| {
        std::thread::sleep(delay);
        let text = solve()?;
        fs::write(format!("{job}.fil"), text)?;
        Ok(())
    })();
    fs::remove_file(&lock)?;
    result
}

fn write_counts(stream: &FilStream, out: &mut dyn Write) -> Result<(), CliError> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for r in &stream.records {
        *counts.entry(r.key()).or_default() += 1;
    }
    for (key, n) in counts {
        writeln!(out, "key {key}: {n} records")?;
    }
    Ok(())
}

fn write_dump(stream: &FilStream, out: &mut dyn Write) -> Result<(), CliError> {
    for (i, r) in stream.records.iter().enumerate() {
        write!(out, "#{} key {} length {}:", i + 1, r.key(), r.length())?;
        for item in r.attributes() {
            write!(out, " {item}")?;
        }
        writeln!(out)?;
    }
    writeln!(out)?;
    write_counts(stream, out)
}

fn write_table(
    stream: &FilStream,
    key: i64,
    precision: Precision,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    match key {
        NODE_KEY => extract_nodes(stream)?.write_csv(out, precision)?,
        ELEMENT_KEY => extract_elements(stream)?.write_csv(out)?,
        DISPLACEMENT_KEY | REACTION_FORCE_KEY => {
            extract_nodal_field(stream, key)?.write_csv(out, precision)?
        }
        STRESS_KEY => extract_stresses(stream)?.write_csv(out, precision)?,
        _ => {
            for attrs in extract_raw(stream, key) {
                let cells: Vec<String> = attrs
                    .iter()
                    .map(|a| match (a.as_int(), a.as_float(), a.as_text()) {
                        (Some(i), _, _) => i.to_string(),
                        (_, Some(f), _) if precision == Precision::Full => format!("{f:e}"),
                        (_, Some(f), _) => sig6(f),
                        (_, _, Some(t)) => t.trim_end().to_string(),
                        _ => String::new(),
                    })
                    .collect();
                writeln!(out, "{}", cells.join(","))?;
            }
        }
    }
    Ok(())
}

/// Node grid `ceil(sqrt(n))` wide with unit spacing, a CPE4 element on
/// every complete cell, random nodal displacements and one random
/// integration-point stress per element.
pub fn synth_stream(nodes: usize, seed: u64) -> FilStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = (nodes as f64).sqrt().ceil().max(1.0) as usize;
    let node_rows: Vec<NodeRow> = (0..nodes)
        .map(|k| NodeRow {
            node_id: k as i64 + 1,
            coords: vec![(k % nx) as f64, (k / nx) as f64],
        })
        .collect();
    let id = |i: usize, j: usize| (j * nx + i + 1) as i64;
    let mut elements = Vec::new();
    for j in 0..nodes.div_ceil(nx).saturating_sub(1) {
        for i in 0..nx - 1 {
            let corners = [id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)];
            if corners.iter().all(|&c| c as usize <= nodes) {
                elements.push(ElementRow {
                    element_id: elements.len() as i64 + 1,
                    element_type: "CPE4".into(),
                    connectivity: corners.to_vec(),
                });
            }
        }
    }
    let displacements = NodalFieldTable {
        key: DISPLACEMENT_KEY,
        rows: node_rows
            .iter()
            .map(|n| NodalRow {
                node_id: n.node_id,
                components: vec![rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-3..1e-3)],
            })
            .collect(),
    };
    let stresses = StressTable {
        rows: elements
            .iter()
            .map(|e| StressRow {
                element_id: e.element_id,
                integration_point: 1,
                components: (0..4).map(|_| rng.gen_range(0.0..1000.0)).collect(),
            })
            .collect(),
    };
    let node_table = NodeTable { rows: node_rows };
    let element_table = ElementTable { rows: elements };
    let mut records = node_table.to_records();
    records.extend(
        element_table
            .to_records()
            .expect("generated connectivity is valid"),
    );
    records.extend(displacements.to_records());
    records.extend(stresses.to_records());
    FilStream::new(records)
}
