//! `owadj` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or data error, 2 some method failed.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use owadj::estimators::{Analysis, EstimandKind, Method, DEFAULT_LEVEL};
use owadj::report::{
    balance_report, balance_table_json, balance_table_tsv, estimate_table_json, estimate_table_tsv, EstimateRow,
};
use owadj::simulation::{write_summary_tsv, MonteCarloOptions, Scenario};
use owadj::variance::OwVarianceForm;
use owadj::{load_csv, ColumnSchema, Error, LogisticOptions, OutcomeKind, TrialDataset, WeightingScheme};

#[derive(Parser)]
#[command(
    name = "owadj",
    version,
    about = "Propensity-score weighting for covariate adjustment in randomized trials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Treatment effect estimates, one row per method and estimand.
    Estimate(EstimateArgs),
    /// Baseline characteristics and absolute standardized differences.
    Balance(BalanceArgs),
    /// Monte Carlo simulation of a scenario file.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Auto,
    Continuous,
    Binary,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    treatment: String,
    /// Comma-separated covariate columns; all remaining columns when omitted.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Covariates entering the propensity model; defaults to all covariates.
    #[arg(long, value_delimiter = ',')]
    ps_covariates: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "auto")]
    outcome_kind: KindArg,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated methods: unadj, ipw, ow, att, mw, lr, aipw.
    #[arg(long, value_delimiter = ',', default_value = "unadj,ipw,lr,aipw,ow")]
    methods: Vec<String>,
    /// Comma-separated estimands: rd, logrr, logor. Binary outcomes default to all three.
    #[arg(long, value_delimiter = ',')]
    estimands: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
    /// OW variance form: display or empirical.
    #[arg(long, default_value = "display")]
    ow_variance: String,
}

#[derive(Args)]
struct BalanceArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Weighting schemes compared with the unweighted sample.
    #[arg(long, value_delimiter = ',', default_value = "ipw,ow")]
    schemes: Vec<String>,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file, `key = value` lines or JSON.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for summary.tsv, summary.json and replicates.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    estimands: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long, default_value = "display")]
    ow_variance: String,
    /// Worker threads; all cores when unset.
    #[arg(long, env = "OWADJ_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let res = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Balance(a) => cmd_balance(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn parse_list<T: std::str::FromStr<Err = Error>>(items: &[String]) -> Result<Vec<T>, Error> {
    items.iter().map(|s| s.trim().parse()).collect()
}

fn clean(names: &[String]) -> Vec<String> {
    names
        .iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn check_level(level: f64) -> Result<(), Error> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("level must be in (0, 1), got {level}")))
    }
}

fn header(path: &PathBuf) -> Result<Vec<String>, Error> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidArgument(format!("{other:?}")),
    })?;
    Ok(rdr.headers()?.iter().map(|h| h.trim().to_string()).collect())
}

fn load(args: &DataArgs) -> Result<TrialDataset, Error> {
    let covariates = match &args.covariates {
        Some(c) => clean(c),
        None => header(&args.data)?
            .into_iter()
            .filter(|h| *h != args.outcome && *h != args.treatment)
            .collect(),
    };
    let schema = ColumnSchema {
        outcome: args.outcome.clone(),
        treatment: args.treatment.clone(),
        covariates,
        outcome_kind: match args.outcome_kind {
            KindArg::Auto => None,
            KindArg::Continuous => Some(OutcomeKind::Continuous),
            KindArg::Binary => Some(OutcomeKind::Binary),
        },
    };
    let ds = load_csv(&args.data, &schema)?;
    let report = owadj::dataset::validate(&ds);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ds)
}

fn ps_dataset(ds: &TrialDataset, ps: &Option<Vec<String>>) -> Result<Option<TrialDataset>, Error> {
    match ps {
        None => Ok(None),
        Some(names) => {
            let names = clean(names);
            for n in &names {
                if !ds.covariate_names().contains(n) {
                    return Err(Error::MissingColumn(n.clone()));
                }
            }
            ds.select_covariates(&names).map(Some)
        }
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<ExitCode, Error> {
    check_level(args.level)?;
    let methods: Vec<Method> = parse_list(&args.methods)?;
    let ow_form: OwVarianceForm = args.ow_variance.parse()?;
    let ds = load(&args.data)?;
    let estimands: Vec<EstimandKind> = match &args.estimands {
        Some(e) => parse_list(e)?,
        None if ds.outcome_kind() == OutcomeKind::Binary => EstimandKind::ALL.to_vec(),
        None => vec![EstimandKind::Rd],
    };
    if ds.outcome_kind() != OutcomeKind::Binary {
        if let Some(e) = estimands.iter().find(|e| e.is_ratio()) {
            return Err(Error::EstimandRequiresBinary {
                estimand: e.label().to_string(),
            });
        }
    }
    // the propensity subset applies to the weighting estimators only
    let ps_ds = ps_dataset(&ds, &args.data.ps_covariates)?;
    let mut full = Analysis::new(&ds);
    full.ow_form = ow_form;
    let mut weighting = ps_ds.as_ref().map(|d| {
        let mut a = Analysis::new(d);
        a.ow_form = ow_form;
        a
    });

    let mut rows = Vec::new();
    for m in &methods {
        for &e in &estimands {
            let analysis = match (m, weighting.as_mut()) {
                (Method::Weighting(_), Some(a)) => a,
                _ => &mut full,
            };
            let res = analysis.estimate(m, e).map(|est| est.with_level(args.level));
            rows.push(EstimateRow::from_result(&m.label(), e, res));
        }
    }
    let text = match args.format {
        Format::Tsv => estimate_table_tsv(&rows, args.level),
        Format::Json => estimate_table_json(&rows) + "\n",
    };
    write_stdout(&text)?;
    Ok(if rows.iter().any(|r| r.error.is_some()) {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_balance(args: BalanceArgs) -> Result<ExitCode, Error> {
    let schemes: Vec<WeightingScheme> = parse_list(&args.schemes)?;
    let ds = load(&args.data)?;
    let ps = args.data.ps_covariates.as_deref().map(clean);
    let report = balance_report(&ds, ps.as_deref(), &schemes, &LogisticOptions::default())?;
    let text = match args.format {
        Format::Tsv => balance_table_tsv(&report),
        Format::Json => balance_table_json(&report) + "\n",
    };
    write_stdout(&text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, Error> {
    check_level(args.level)?;
    let mut sc = Scenario::load(&args.scenario)?;
    if let Some(r) = args.replicates {
        sc.replicates = r;
    }
    if let Some(s) = args.seed {
        sc.seed = s;
    }
    let mut opts = MonteCarloOptions {
        level: args.level,
        ow_form: args.ow_variance.parse()?,
        threads: args.threads.filter(|&t| t > 0),
        ..MonteCarloOptions::default()
    };
    if let Some(m) = &args.methods {
        opts.methods = parse_list(m)?;
    }
    if let Some(e) = &args.estimands {
        opts.estimands = parse_list(e)?;
    }
    let summary = owadj::run_monte_carlo(&sc, &opts)?;
    summary.write_dir(&args.out)?;
    let mut buf = Vec::new();
    write_summary_tsv(&summary, &mut buf).map_err(|e| Error::io("<stdout>", e))?;
    write_stdout(&String::from_utf8_lossy(&buf))?;
    Ok(ExitCode::SUCCESS)
}

fn write_stdout(text: &str) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}
