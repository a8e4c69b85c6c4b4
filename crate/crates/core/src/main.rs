//! Command-line front end: simulation cells, panel fitting, grouping
//! reports, the rolling forecast evaluation and full simulation grids.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use factor_group::{
    fit_pipeline, load_csv_panel, ospe_rolling, run_replications, standardize, summary_csv_row,
    write_panel_csv, CvMode, Error, ForecastMethod, LambdaSelection, Panel, PipelineFit,
    PipelineOptions, Scenario, ScenarioConfig, SUMMARY_CSV_HEADER,
};

#[derive(Parser)]
#[command(
    name = "factor-group",
    version,
    about = "Penalized PCA for approximate factor panels with latent group structure"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// Worker threads (default: FACTOR_GROUP_THREADS env var, else all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Base RNG seed for simulation commands
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Ceiling for the group-number search (default: min(15, N))
    #[arg(long, global = true)]
    k_bar: Option<usize>,

    /// Cross-validation folds
    #[arg(long, global = true, default_value_t = 20)]
    folds: usize,

    /// CV criterion: 1 scores the penalized fit, 2 the post-grouping fit
    #[arg(long, global = true, value_parser = ["1", "2"], default_value = "2")]
    cv_mode: String,

    /// Use the bare candidate grid {1, 1/0.95, …, 20, N} without the
    /// prepended λ = 0
    #[arg(long, global = true)]
    paper_grid: bool,

    /// Output format for tables written to stdout or --out
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Md,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded Monte-Carlo replications of one scenario cell
    Simulate {
        #[arg(long, value_parser = parse_scenario)]
        scenario: Scenario,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        kappa: f64,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Output path ("-" for stdout)
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Fit the full pipeline on a CSV panel and write loadings, scores and groups
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Factor count, or "auto" for the information criterion
        #[arg(long, default_value = "auto")]
        r: String,
        /// Penalty level, or "cv" for cross-validation
        #[arg(long, default_value = "cv")]
        lambda: String,
        /// Name of the date column (default: first column)
        #[arg(long)]
        date_column: Option<String>,
        /// z-score each series before fitting
        #[arg(long)]
        standardize: bool,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Fit and print the group memberships with the IC(K) trace
    Group {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "auto")]
        r: String,
        #[arg(long, default_value = "cv")]
        lambda: String,
        #[arg(long)]
        date_column: Option<String>,
        #[arg(long)]
        standardize: bool,
    },
    /// Rolling out-of-sample prediction errors for both estimators
    Ospe {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        date_column: Option<String>,
        /// First day of the initial training window (YYYY-MM-DD)
        #[arg(long)]
        train_start: String,
        /// Last day of the initial training window (YYYY-MM-DD)
        #[arg(long)]
        train_end: String,
        /// First evaluation month (YYYY-MM)
        #[arg(long)]
        eval_start: String,
        /// Last evaluation month (YYYY-MM)
        #[arg(long)]
        eval_end: String,
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Replicate every (T, N, κ) cell of a scenario's simulation grid
    Grid {
        #[arg(long, value_parser = parse_scenario)]
        scenario: Scenario,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Restrict the grid to one T
        #[arg(long)]
        t: Option<usize>,
        /// Restrict the grid to one N
        #[arg(long)]
        n: Option<usize>,
        /// Restrict the grid to one κ
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long, default_value = "-")]
        out: String,
    },
}

fn parse_scenario(raw: &str) -> Result<Scenario, String> {
    match raw.to_ascii_lowercase().as_str() {
        "s1" | "1" => Ok(Scenario::S1),
        "s2" | "2" => Ok(Scenario::S2),
        other => Err(format!("unknown scenario {other:?}, expected s1 or s2")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let usage_ok = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if usage_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };

    let threads = cli.global.threads.or_else(|| {
        std::env::var("FACTOR_GROUP_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(threads) = threads {
        if threads > 0 {
            if let Err(err) = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
            {
                eprintln!("factor-group: could not size the thread pool: {err}");
                return ExitCode::from(2);
            }
        }
    }

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("factor-group: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Simulate {
            scenario,
            t,
            n,
            kappa,
            reps,
            out,
        } => {
            let config = ScenarioConfig::new(*scenario, *t, *n, *kappa, cli.global.seed)?;
            let options = pipeline_options(&cli.global, None, None)?;
            let summary = run_replications(&config, *reps, &options);
            let rows = vec![summary_csv_row(&config, &summary)];
            let meta = metadata_lines(
                cli.global.seed,
                &format!("simulate {scenario} t={t} n={n} kappa={kappa} reps={reps}"),
            );
            write_table(out, &meta, SUMMARY_CSV_HEADER, &rows, cli.global.format)
        }
        Command::Grid {
            scenario,
            reps,
            t,
            n,
            kappa,
            out,
        } => {
            let options = pipeline_options(&cli.global, None, None)?;
            let mut rows = Vec::new();
            for (cell_t, cell_n, cell_kappa) in grid_cells(*scenario, *t, *n, *kappa) {
                let config =
                    ScenarioConfig::new(*scenario, cell_t, cell_n, cell_kappa, cli.global.seed)?;
                let summary = run_replications(&config, *reps, &options);
                rows.push(summary_csv_row(&config, &summary));
            }
            let meta = metadata_lines(
                cli.global.seed,
                &format!("grid {scenario} reps={reps} t={t:?} n={n:?} kappa={kappa:?}"),
            );
            write_table(out, &meta, SUMMARY_CSV_HEADER, &rows, cli.global.format)
        }
        Command::Fit {
            input,
            r,
            lambda,
            date_column,
            standardize: do_standardize,
            out_dir,
        } => {
            let panel = prepared_panel(input, date_column.as_deref(), *do_standardize)?;
            let options = pipeline_options(&cli.global, Some(r), Some(lambda))?;
            let fitted = fit_pipeline(&panel, &options)?;
            std::fs::create_dir_all(out_dir)?;
            write_fit_artifacts(&panel, &fitted, out_dir, &cli.global)?;
            eprintln!(
                "fit: r={} lambda={} k_hat={} -> {}",
                fitted.r,
                fitted.lambda,
                fitted.selection.k_hat,
                out_dir.join("{loadings,scores,groups}.csv").display()
            );
            Ok(())
        }
        Command::Group {
            input,
            r,
            lambda,
            date_column,
            standardize: do_standardize,
        } => {
            let panel = prepared_panel(input, date_column.as_deref(), *do_standardize)?;
            let options = pipeline_options(&cli.global, Some(r), Some(lambda))?;
            let fitted = fit_pipeline(&panel, &options)?;
            let rows: Vec<String> = panel
                .series_names()
                .iter()
                .zip(fitted.partition.assignment())
                .map(|(name, group)| format!("{name},{group}"))
                .collect();
            let mut meta = metadata_lines(
                cli.global.seed,
                &format!(
                    "group r={} lambda={} k_hat={}",
                    fitted.r, fitted.lambda, fitted.selection.k_hat
                ),
            );
            for (i, s) in fitted.selection.s_values.iter().enumerate() {
                meta.push(format!(
                    "K={} S={s} rho={} IC={}",
                    i + 1,
                    fitted.selection.rho_values[i],
                    fitted.selection.ic_values[i]
                ));
            }
            write_table("-", &meta, "series,group", &rows, cli.global.format)
        }
        Command::Ospe {
            input,
            date_column,
            train_start,
            train_end,
            eval_start,
            eval_end,
            out,
        } => {
            let panel = load_csv_panel(input, date_column.as_deref())?;
            let months = month_range(eval_start, eval_end)?;
            let options = pipeline_options(&cli.global, None, None)?;
            let ppca = ospe_rolling(
                &panel,
                train_start,
                train_end,
                &months,
                ForecastMethod::Ppca,
                &options,
            )?;
            let pca = ospe_rolling(
                &panel,
                train_start,
                train_end,
                &months,
                ForecastMethod::PcaTw,
                &options,
            )?;
            let rows: Vec<String> = months
                .iter()
                .enumerate()
                .map(|(i, month)| format!("{month},{},{}", pca.ospe[i], ppca.ospe[i]))
                .collect();
            let meta = metadata_lines(
                cli.global.seed,
                &format!("ospe train={train_start}..{train_end} eval={eval_start}..{eval_end}"),
            );
            write_table(out, &meta, "month,ospe_pca,ospe_ppca", &rows, cli.global.format)
        }
    }
}

fn prepared_panel(
    input: &Path,
    date_column: Option<&str>,
    do_standardize: bool,
) -> Result<Panel, Error> {
    let panel = load_csv_panel(input, date_column)?;
    if do_standardize {
        Ok(standardize(&panel)?.0)
    } else {
        Ok(panel)
    }
}

fn pipeline_options(
    global: &GlobalArgs,
    r: Option<&str>,
    lambda: Option<&str>,
) -> Result<PipelineOptions, Error> {
    let r = match r {
        None | Some("auto") => None,
        Some(raw) => Some(raw.parse::<usize>().map_err(|_| {
            Error::InvalidArgument(format!(
                "--r expects a positive integer or \"auto\", got {raw:?}"
            ))
        })?),
    };
    let lambda = match lambda {
        None | Some("cv") => LambdaSelection::CrossValidated,
        Some(raw) => LambdaSelection::Fixed(raw.parse::<f64>().map_err(|_| {
            Error::InvalidArgument(format!("--lambda expects a number or \"cv\", got {raw:?}"))
        })?),
    };
    Ok(PipelineOptions {
        r,
        lambda,
        paper_grid: global.paper_grid,
        folds: global.folds,
        cv_mode: if global.cv_mode == "1" {
            CvMode::Cv1
        } else {
            CvMode::Cv2
        },
        k_bar: global.k_bar,
        ..PipelineOptions::default()
    })
}

/// Paper simulation grids per scenario, optionally narrowed to one cell.
fn grid_cells(
    scenario: Scenario,
    t: Option<usize>,
    n: Option<usize>,
    kappa: Option<f64>,
) -> Vec<(usize, usize, f64)> {
    let (t_values, n_values): (&[usize], &[usize]) = match scenario {
        Scenario::S1 => (&[100, 150, 200], &[90, 120, 150]),
        Scenario::S2 => (&[100, 150], &[120, 160, 200]),
    };
    let kappa_values = [0.5, 0.8, 1.0];
    let mut cells = Vec::new();
    for &cell_t in t_values {
        if t.is_some_and(|v| v != cell_t) {
            continue;
        }
        for &cell_n in n_values {
            if n.is_some_and(|v| v != cell_n) {
                continue;
            }
            for &cell_kappa in &kappa_values {
                if kappa.is_some_and(|v| v != cell_kappa) {
                    continue;
                }
                cells.push((cell_t, cell_n, cell_kappa));
            }
        }
    }
    cells
}

fn month_range(start: &str, end: &str) -> Result<Vec<String>, Error> {
    let parse = |raw: &str| -> Result<(i32, u32), Error> {
        let bad = || Error::InvalidArgument(format!("month {raw:?} is not in YYYY-MM form"));
        let (y, m) = raw.split_once('-').ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok((year, month))
    };
    let (mut year, mut month) = parse(start)?;
    let (end_year, end_month) = parse(end)?;
    let mut months = Vec::new();
    while (year, month) <= (end_year, end_month) {
        months.push(format!("{year:04}-{month:02}"));
        month += 1;
        if month > 12 {
            month = 1;
            year += 1;
        }
    }
    if months.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "empty month range {start}..{end}"
        )));
    }
    Ok(months)
}

fn metadata_lines(seed: u64, config: &str) -> Vec<String> {
    vec![
        format!("seed={seed}"),
        format!("version={}", env!("CARGO_PKG_VERSION")),
        format!("config={:016x}", fnv1a64(config)),
    ]
}

fn fnv1a64(data: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in data.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn write_table(
    out: &str,
    metadata: &[String],
    header: &str,
    rows: &[String],
    format: OutputFormat,
) -> Result<(), Error> {
    let mut buffer = Vec::new();
    match format {
        OutputFormat::Csv => {
            for line in metadata {
                writeln!(buffer, "# {line}")?;
            }
            writeln!(buffer, "{header}")?;
            for row in rows {
                writeln!(buffer, "{row}")?;
            }
        }
        OutputFormat::Md => {
            let cols: Vec<&str> = header.split(',').collect();
            writeln!(buffer, "| {} |", cols.join(" | "))?;
            writeln!(buffer, "|{}", "---|".repeat(cols.len()))?;
            for row in rows {
                writeln!(
                    buffer,
                    "| {} |",
                    row.split(',').collect::<Vec<_>>().join(" | ")
                )?;
            }
        }
    }
    if out == "-" {
        std::io::stdout().write_all(&buffer)?;
    } else {
        std::fs::write(out, buffer)?;
    }
    Ok(())
}

fn write_fit_artifacts(
    panel: &Panel,
    fitted: &PipelineFit,
    out_dir: &Path,
    global: &GlobalArgs,
) -> Result<(), Error> {
    let meta = metadata_lines(
        global.seed,
        &format!("fit r={} lambda={}", fitted.r, fitted.lambda),
    );
    let r = fitted.r;
    let loadings = fitted.postgroup.loadings();
    let scores = fitted.postgroup.scores();

    let mut out = Vec::new();
    for line in &meta {
        writeln!(out, "# {line}")?;
    }
    write!(out, "series")?;
    for l in 1..=r {
        write!(out, ",b_{l}")?;
    }
    writeln!(out, ",group")?;
    for (i, name) in panel.series_names().iter().enumerate() {
        write!(out, "{name}")?;
        for l in 0..r {
            write!(out, ",{}", loadings[(i, l)])?;
        }
        writeln!(out, ",{}", fitted.partition.assignment()[i])?;
    }
    std::fs::write(out_dir.join("loadings.csv"), out)?;

    let score_names: Vec<String> = (1..=r).map(|l| format!("f_{l}")).collect();
    let score_panel = Panel::new(scores.clone(), panel.time_labels().to_vec(), score_names)?;
    let mut out = Vec::new();
    write_panel_csv(&score_panel, &meta, &mut out)?;
    std::fs::write(out_dir.join("scores.csv"), out)?;

    let mut out = Vec::new();
    for line in &meta {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "series,group")?;
    for (name, group) in panel
        .series_names()
        .iter()
        .zip(fitted.partition.assignment())
    {
        writeln!(out, "{name},{group}")?;
    }
    std::fs::write(out_dir.join("groups.csv"), out)?;
    Ok(())
}
