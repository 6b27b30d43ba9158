//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 1 for usage or configuration problems, 2 for runtime failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Config;
use crate::dataset::{build_dataset, load_dataset, save_dataset, RecordEncoding};
use crate::error::{Error, Result};
use crate::harness::{
    experiment_sumrate_vs_k, experiment_sumrate_vs_rth, experiment_timing, write_csv, Experiment, RunContext, TRIAL_HEADER,
};
use crate::lstm::{evaluate, evaluate_persistence, load_model, save_model, train};
use crate::optimizer::{read_problem, solve_with_admission, write_solution, SolverKind};
use crate::util::fingerprint;

#[derive(Debug, Parser)]
#[command(name = "lifi-po", version, about = "Proactive optimization for mobile indoor LiFi")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML config file; missing keys take their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every output file
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Write datasets as CSV text instead of binary
    #[arg(long, global = true)]
    text: bool,
    /// Single-threaded run with reproducible output files
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate trajectories and write the SNR-window / pose dataset
    GenerateDataset,
    /// Train the LSTM pose predictor on a dataset
    Train {
        /// Dataset .meta file (default: <out-dir>/dataset.meta)
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Positioning error per horizon on the held-out split, LSTM vs persistence
    EvaluatePredictor {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Model .meta file (default: <out-dir>/model.meta)
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Solve one precoding problem read from a text file
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, value_enum, default_value = "ccp")]
        solver: SolverArg,
    },
    /// Monte-Carlo comparison of genie, PO, persistence and aged CSI
    RunPoExperiment {
        /// Model .meta file (default: scenario.model, then <out-dir>/model.meta)
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated subset of sumrate_vs_k, sumrate_vs_rth, timing
        #[arg(long, value_delimiter = ',')]
        experiments: Vec<String>,
    },
    /// Turn experiment CSVs into whitespace-separated columns for plotting
    PlotData {
        /// Directory holding the CSVs (default: <out-dir>)
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Ccp,
    Multistart,
    Grid,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Ccp => SolverKind::Ccp,
            SolverArg::Multistart => SolverKind::MultiStart,
            SolverArg::Grid => SolverKind::Grid,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let config = match load_config(&cli.global) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match dispatch(&cli, &config) {
        Ok(()) => 0,
        Err(e @ (Error::Config(_) | Error::InvalidArgument(_))) => {
            eprintln!("error: {e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_config(g: &Global) -> Result<Config> {
    let mut config = match &g.config {
        Some(p) if !p.exists() => return Err(Error::Config(format!("config file {} does not exist", p.display()))),
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = g.seed {
        config.seed = s;
    }
    Ok(config)
}

fn dispatch(cli: &Cli, config: &Config) -> Result<()> {
    let g = &cli.global;
    fs::create_dir_all(&g.out_dir).map_err(|e| Error::io(&g.out_dir, e))?;
    let default_in = |p: &Option<PathBuf>, name: &str| p.clone().unwrap_or_else(|| g.out_dir.join(name));
    match &cli.command {
        Command::GenerateDataset => generate(g, config),
        Command::Train { dataset } => train_cmd(g, config, &default_in(dataset, "dataset.meta")),
        Command::EvaluatePredictor { dataset, model } => {
            evaluate_cmd(g, config, &default_in(dataset, "dataset.meta"), &default_in(model, "model.meta"))
        }
        Command::Solve { problem, solver } => solve_cmd(g, config, problem, (*solver).into()),
        Command::RunPoExperiment { model, experiments } => {
            let model = model
                .clone()
                .or_else(|| config.scenario.model.clone())
                .unwrap_or_else(|| g.out_dir.join("model.meta"));
            experiment_cmd(g, config, &model, experiments)
        }
        Command::PlotData { input } => plot_cmd(g, input.as_deref().unwrap_or(&g.out_dir)),
    }
}

fn generate(g: &Global, config: &Config) -> Result<()> {
    let ds = build_dataset(config.seed, &config.dataset, &config.scene(), !g.deterministic)?;
    let encoding = if g.text { RecordEncoding::Csv } else { RecordEncoding::F64Le };
    let path = save_dataset(&ds, &g.out_dir.join("dataset"), encoding)?;
    println!("wrote {} ({} samples)", path.display(), ds.samples.len());
    Ok(())
}

fn train_cmd(g: &Global, config: &Config, dataset: &Path) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let outcome = train(&ds, &config.train, config.seed)?;
    let path = save_model(&outcome.model, &g.out_dir.join("model"))?;
    let rows: Vec<Vec<String>> = outcome
        .history
        .iter()
        .map(|e| vec![e.epoch.to_string(), e.train.to_string(), e.validation.to_string()])
        .collect();
    write_csv(&g.out_dir.join("history.csv"), &["epoch", "train_mse", "validation_mse"], &rows)?;
    let last = outcome.history.last().expect("history holds the untrained model");
    println!(
        "wrote {} (best epoch {}, final train {:.5}, validation {:.5})",
        path.display(),
        outcome.best_epoch,
        last.train,
        last.validation
    );
    Ok(())
}

fn evaluate_cmd(g: &Global, config: &Config, dataset: &Path, model: &Path) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let model = load_model(model)?;
    let (_, test) = ds.partition();
    let scene = config.scene();
    let lstm = evaluate(&model, &ds, &test, &scene.layout)?;
    let base = evaluate_persistence(&ds, &test, &scene, &config.dataset)?;
    let mut rows = Vec::new();
    for l in 0..lstm.mean_position_error.len() {
        let a = lstm.mean_angle_error[l];
        let b = base.mean_angle_error[l];
        rows.push(vec![
            (l + 1).to_string(),
            lstm.mean_position_error[l].to_string(),
            base.mean_position_error[l].to_string(),
            a[0].to_string(),
            a[1].to_string(),
            a[2].to_string(),
            b[0].to_string(),
            b[1].to_string(),
            b[2].to_string(),
        ]);
        println!(
            "L={}: lstm {:.4} m, persistence {:.4} m",
            l + 1,
            lstm.mean_position_error[l],
            base.mean_position_error[l]
        );
    }
    write_csv(
        &g.out_dir.join("predictor_eval.csv"),
        &[
            "horizon",
            "lstm_position_error_m",
            "persistence_position_error_m",
            "lstm_yaw_error_deg",
            "lstm_pitch_error_deg",
            "lstm_roll_error_deg",
            "persistence_yaw_error_deg",
            "persistence_pitch_error_deg",
            "persistence_roll_error_deg",
        ],
        &rows,
    )
}

fn solve_cmd(g: &Global, config: &Config, problem: &Path, solver: SolverKind) -> Result<()> {
    let spec = read_problem(problem)?;
    let options = crate::optimizer::CcpOptions {
        seed: config.seed,
        ..config.optimizer.clone()
    };
    let sol = solve_with_admission(&spec, solver, &options)?;
    let (s, _) = write_solution(&sol, solver.name(), &g.out_dir)?;
    println!(
        "wrote {} ({} of {} users admitted, sum rate {:.6} nats/s/Hz)",
        s.display(),
        sol.admitted.len(),
        spec.users(),
        sol.objective
    );
    Ok(())
}

fn experiment_cmd(g: &Global, config: &Config, model_path: &Path, names: &[String]) -> Result<()> {
    let experiments: Vec<Experiment> = if names.is_empty() {
        Experiment::ALL
            .into_iter()
            .filter(|e| !(g.deterministic && *e == Experiment::Timing))
            .collect()
    } else {
        names.iter().map(|n| n.parse()).collect::<Result<_>>()?
    };
    let model = load_model(model_path)?;
    let scene = config.scene();
    if model.meta.m != scene.num_aps() {
        return Err(Error::Config(format!(
            "model expects {} APs but the layout has {}",
            model.meta.m,
            scene.num_aps()
        )));
    }
    config.scenario.validate(model.meta.l_max, scene.num_aps())?;
    let options = crate::optimizer::CcpOptions {
        seed: config.seed,
        ..config.optimizer.clone()
    };
    let sc = &config.scenario;
    let ctx = RunContext {
        scene: &scene,
        model: &model,
        horizon: sc.horizon,
        r_th: sc.r_th,
        delta: config.delta(),
        solver: sc.solver,
        options: &options,
    };
    let parallel = !g.deterministic;
    for e in &experiments {
        let out = match e {
            Experiment::SumrateVsK => experiment_sumrate_vs_k(&ctx, &sc.k_sweep, sc.n_slots, config.seed, parallel)?,
            Experiment::SumrateVsRth => {
                experiment_sumrate_vs_rth(&ctx, sc.users, &sc.r_th_sweep, sc.n_slots, config.seed, parallel)?
            }
            Experiment::Timing => experiment_timing(&ctx, &sc.timing_k_sweep, sc.timing_slots, config.seed)?,
        };
        let path = g.out_dir.join(format!("{}.csv", e.name()));
        write_csv(&path, &out.header, &out.rows)?;
        write_csv(&g.out_dir.join(format!("{}_trials.csv", e.name())), &TRIAL_HEADER, &out.trials)?;
        println!("wrote {}", path.display());
    }

    let model_text = fs::read_to_string(model_path).map_err(|e| Error::io(model_path, e))?;
    let mut m = String::new();
    let _ = writeln!(m, "tool: lifi-po {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "seed: {}", config.seed);
    let _ = writeln!(m, "config_fingerprint: {}", config.fingerprint());
    let _ = writeln!(m, "model: {}", model_path.display());
    let _ = writeln!(m, "model_fingerprint: {}", fingerprint(&model_text));
    let _ = writeln!(m, "deterministic: {}", g.deterministic);
    let names: Vec<&str> = experiments.iter().map(|e| e.name()).collect();
    let _ = writeln!(m, "experiments: {}", names.join(", "));
    let manifest = g.out_dir.join("run_manifest.txt");
    fs::write(&manifest, m).map_err(|e| Error::io(&manifest, e))?;
    let cfg_path = g.out_dir.join("config_used.toml");
    fs::write(&cfg_path, config.to_toml()).map_err(|e| Error::io(&cfg_path, e))
}

/// Rows of a CSV file keyed by header name.
fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("expected {} columns, found {}", header.len(), cells.len()),
            });
        }
        rows.push(header.iter().map(|h| h.to_string()).zip(cells.iter().map(|c| c.to_string())).collect());
    }
    Ok(rows)
}

/// One line per `x` value with a (mean, ci) column pair per series.
fn pivot(rows: &[BTreeMap<String, String>], x: &str, series: &str, mean: &str, ci: &str) -> String {
    let mut names: Vec<String> = Vec::new();
    let mut table: BTreeMap<String, BTreeMap<String, (String, String)>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for r in rows {
        let key = r[x].clone();
        if !order.contains(&key) {
            order.push(key.clone());
        }
        if !names.contains(&r[series]) {
            names.push(r[series].clone());
        }
        table.entry(key).or_default().insert(r[series].clone(), (r[mean].clone(), r[ci].clone()));
    }
    let mut s = format!("# {x}");
    for n in &names {
        let _ = write!(s, " {n}_{mean} {n}_{ci}");
    }
    s.push('\n');
    for key in order {
        s.push_str(&key);
        for n in &names {
            let (a, b) = table[&key].get(n).cloned().unwrap_or(("nan".into(), "nan".into()));
            let _ = write!(s, " {a} {b}");
        }
        s.push('\n');
    }
    s
}

fn plot_cmd(g: &Global, input: &Path) -> Result<()> {
    let dir = g.out_dir.join("plot");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    for (file, x) in [("sumrate_vs_k.csv", "k"), ("sumrate_vs_rth.csv", "r_th_nats")] {
        let path = input.join(file);
        if !path.exists() {
            continue;
        }
        let rows = read_csv(&path)?;
        let mut solvers: Vec<String> = Vec::new();
        for r in &rows {
            if !solvers.contains(&r["solver"]) {
                solvers.push(r["solver"].clone());
            }
        }
        for solver in solvers {
            let sub: Vec<_> = rows.iter().filter(|r| r["solver"] == solver).cloned().collect();
            let stem = file.trim_end_matches(".csv");
            put(format!("{stem}_{solver}.dat"), pivot(&sub, x, "case", "mean_sum_rate_nats", "ci95_sum_rate_nats"))?;
            put(format!("{stem}_{solver}_admitted.dat"), pivot(&sub, x, "case", "mean_admitted", "mean_position_error_m"))?;
        }
    }
    let timing = input.join("timing.csv");
    if timing.exists() {
        let rows: Vec<_> = read_csv(&timing)?.into_iter().filter(|r| r["case"] == "genie").collect();
        put("timing.dat".into(), pivot(&rows, "k", "solver", "mean_solve_time_s", "ci95_solve_time_s"))?;
    }
    for (file, name) in [("history.csv", "loss.dat"), ("predictor_eval.csv", "position_error.dat")] {
        let path = input.join(file);
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut lines = text.lines();
            let head = lines.next().unwrap_or("").replace(',', " ");
            let body: Vec<String> = lines.map(|l| l.replace(',', " ")).collect();
            put(name.into(), format!("# {head}\n{}\n", body.join("\n")))?;
        }
    }
    if written.is_empty() {
        return Err(Error::InvalidArgument(format!("no experiment CSVs found in {}", input.display())));
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
