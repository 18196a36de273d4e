use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use ecgloc::ecg::{compare_ecgs, simulate_ecg, solve_eikonal, EcgTrace, PhantomSpec, SimConfig, DEFAULT_QRS_FRACTION};
use ecgloc::eval::{eval_input, parse_results, score, write_reports, SubjectResult};
use ecgloc::geometry::{resample_contours, ResampleMode};
use ecgloc::model::{config_hash, Variant};
use ecgloc::report::{boxplot, ecg_overlay, scatter, PlotKind};
use ecgloc::synth::{make_dataset, split_counts, Dataset, SliceProtocol, Split, Subject};
use ecgloc::textio::{self, read_to_string, write_atomic};
use ecgloc::train::{
    format_sweep, load_model, sweep, train, SweepAxis, TrainConfig, TrainOptions, TrainState,
    CONFIG_KEYS,
};
use ecgloc::{Electrode, Error, Result};

const MANIFEST: &str = "run_manifest.txt";

#[derive(Parser, Debug)]
#[command(name = "ecgloc", version, about = "Electrode localization from sparse torso contours")]
struct Cli {
    /// Training configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 guarantees bit-exact output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic dataset (60/10/30 split) into --out.
    Generate {
        #[arg(long, default_value_t = 200)]
        subjects: usize,
    },
    /// Train one model on the training split.
    Train(TrainArgs),
    /// Train one model per value of N_kp or N_rr and evaluate each on the test split.
    Sweep {
        #[command(flatten)]
        train: TrainArgs,
        /// N_kp or N_rr.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// Predict electrodes for one subject or a whole split.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Subject id within --data; writes electrodes.txt directly under --out.
        #[arg(long, conflicts_with_all = ["split", "contours"])]
        subject: Option<u32>,
        /// Predict every subject of a split into --out/<id>/.
        #[arg(long)]
        split: Option<String>,
        /// Contour file to predict from instead of a dataset subject.
        #[arg(long, conflicts_with = "split")]
        contours: Option<PathBuf>,
    },
    /// Score predictions against ground truth and write result tables.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
        checkpoint: Option<PathBuf>,
        /// Directory holding <id>/electrodes.txt (and optionally <id>/dense.xyz).
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Simulate 8-lead QRS complexes for a subject's electrodes.
    SimulateEcg {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        subject: u32,
        /// Electrode file to simulate and compare against the ground-truth electrodes.
        #[arg(long)]
        electrodes: Option<PathBuf>,
        /// Phantom specification; defaults to the standard phantom at the subject's heart position.
        #[arg(long)]
        phantom: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        dt_ms: f64,
        #[arg(long, default_value_t = 10.0)]
        upstroke_ms: f64,
    },
    /// Render an SVG figure.
    Plot {
        /// boxplot | scatter | ecg-overlay
        #[arg(long)]
        kind: String,
        /// results.csv for boxplot and scatter, the reference ECG for ecg-overlay.
        #[arg(long)]
        input: PathBuf,
        /// Predicted ECG (ecg-overlay only).
        #[arg(long)]
        predicted: Option<PathBuf>,
        /// Scatter x column of results.csv.
        #[arg(long, default_value = "scale")]
        x: String,
        /// Output file name inside --out.
        #[arg(long)]
        file: Option<String>,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Configuration override `key=value`; repeatable, wins over --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for --set variant=...
    #[arg(long)]
    variant: Option<String>,
    /// Continue from a training state checkpoint (state.ckpt).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Print one line per epoch.
    #[arg(long)]
    verbose: bool,
}

/// Accumulates what a run read and wrote for `run_manifest.txt`.
struct Run {
    command: String,
    config_hash: String,
    seeds: Vec<(String, u64)>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl Run {
    fn new(command: &str) -> Run {
        Run {
            command: command.to_owned(),
            config_hash: String::new(),
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        write_atomic(&path, bytes)?;
        self.outputs.push(path);
        Ok(())
    }

    fn finish(&self, out: &Path) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "config_hash = {}", self.config_hash);
        for (k, v) in &self.seeds {
            let _ = writeln!(s, "seed.{k} = {v}");
        }
        for p in &self.inputs {
            let _ = writeln!(s, "input = {}", p.display());
        }
        for p in &self.outputs {
            let _ = writeln!(s, "output = {}", p.display());
        }
        let _ = writeln!(s, "tool_version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "wall_clock_s = {:.3}", self.started.elapsed().as_secs_f64());
        write_atomic(&out.join(MANIFEST), s.as_bytes())
    }
}

fn config_help() -> String {
    let width = CONFIG_KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from(
        "Configuration keys (--config file lines `key = value`, or --set key=value; unknown keys are errors):\n",
    );
    for (k, d) in CONFIG_KEYS {
        let _ = writeln!(s, "  {k:width$}  {d}");
    }
    s.push_str("\nExit codes: 0 ok, 2 usage or configuration error, 3 data error, 4 numeric failure.");
    s
}

fn load_config(cli: &Cli, run: &mut Run) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            run.inputs.push(p.clone());
            TrainConfig::from_text(&read_to_string(p)?, &p.display().to_string())?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_overrides(cfg: &mut TrainConfig, args: &TrainArgs) -> Result<()> {
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.apply(k.trim(), v.trim())?;
    }
    if let Some(v) = &args.variant {
        cfg.variant = Variant::parse(v)?;
    }
    cfg.validate()
}

fn parse_split(s: &str) -> Result<Split> {
    s.parse().map_err(|_| Error::Config(format!("unknown split '{s}' (train, val or test)")))
}

fn open_data(path: &Path, run: &mut Run) -> Result<Dataset> {
    run.inputs.push(path.to_path_buf());
    Dataset::open(path)
}

fn cmd_generate(cli: &Cli, subjects: usize, run: &mut Run) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    run.seeds.push(("master".into(), seed));
    let protocol = SliceProtocol::default();
    let m = make_dataset(&cli.out, subjects, &protocol, seed)?;
    run.outputs.push(cli.out.join("manifest.txt"));
    run.outputs.push(cli.out.join("subjects"));
    run.config_hash = config_hash(&m.format());
    let (tr, va, te) = m.counts();
    debug_assert_eq!((tr, va, te), split_counts(subjects));
    println!("generated {subjects} subjects: train {tr} / val {va} / test {te}");
    Ok(())
}

fn cmd_train(cli: &Cli, args: &TrainArgs, run: &mut Run) -> Result<()> {
    let mut state = match &args.resume {
        Some(p) => {
            run.inputs.push(p.clone());
            if cli.config.is_some() || !args.set.is_empty() || args.variant.is_some() {
                return Err(Error::Config("--resume takes its configuration from the checkpoint".into()));
            }
            TrainState::from_checkpoint(&ecgloc::model::Checkpoint::load(p)?)?
        }
        None => {
            let mut cfg = load_config(cli, run)?;
            apply_overrides(&mut cfg, args)?;
            TrainState::new(cfg)?
        }
    };
    run.config_hash = state.config.hash();
    run.seeds.push(("train".into(), state.config.seed));
    let ds = open_data(&args.data, run)?;
    let train_set = ds.load_split(Split::Train)?;
    let val_set = ds.load_split(Split::Val)?;
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    write_atomic(&cli.out.join("config.txt"), state.config.to_text().as_bytes())?;
    let report = train(
        &mut state,
        &train_set,
        &val_set,
        &TrainOptions {
            out_dir: Some(&cli.out),
            stop_after: None,
            verbose: args.verbose,
        },
    )?;
    for f in ["config.txt", "metrics.csv", "validation.csv", "state.ckpt", "best.ckpt"] {
        run.outputs.push(cli.out.join(f));
    }
    if let Some(v) = report.validation.last() {
        println!("epoch {}: validation ED {:.4} cm", v.epoch, v.ed);
    }
    if let Some(b) = &state.best {
        println!("best validation ED {:.4} cm at epoch {}", b.val_ed, b.epoch);
    }
    Ok(())
}

fn cmd_sweep(cli: &Cli, args: &TrainArgs, axis: &str, values: &[usize], run: &mut Run) -> Result<()> {
    let axis = SweepAxis::parse(axis)?;
    let mut cfg = load_config(cli, run)?;
    apply_overrides(&mut cfg, args)?;
    run.config_hash = cfg.hash();
    run.seeds.push(("train".into(), cfg.seed));
    let ds = open_data(&args.data, run)?;
    let (tr, va, te) = (ds.load_split(Split::Train)?, ds.load_split(Split::Val)?, ds.load_split(Split::Test)?);
    let rows = sweep(&cfg, axis, values, &tr, &va, &te, Some(&cli.out), args.verbose)?;
    run.outputs.push(cli.out.join("sweep.csv"));
    print!("{}", format_sweep(axis, &rows));
    Ok(())
}

fn write_prediction(run: &mut Run, dir: &Path, pred: &ecgloc::model::Prediction, header: &str) -> Result<()> {
    run.write(dir.join("electrodes.txt"), textio::format_electrodes(&pred.electrodes, header).as_bytes())?;
    run.write(dir.join("keypoints.xyz"), textio::format_xyz(&pred.keypoints, header).as_bytes())?;
    if let Some(d) = &pred.dense {
        run.write(dir.join("dense.xyz"), textio::format_xyz(d, header).as_bytes())?;
    }
    Ok(())
}

fn cmd_infer(
    cli: &Cli,
    checkpoint: &Path,
    data: Option<&Path>,
    subject: Option<u32>,
    split: Option<&str>,
    contours: Option<&Path>,
    run: &mut Run,
) -> Result<()> {
    run.inputs.push(checkpoint.to_path_buf());
    let (cfg, model) = load_model(checkpoint)?;
    run.config_hash = cfg.hash();
    let seed = cli.seed.unwrap_or(cfg.seed);
    run.seeds.push(("resample".into(), seed));
    let header = format!("manifest: {MANIFEST}");
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    if let Some(path) = contours {
        run.inputs.push(path.to_path_buf());
        let set = textio::read_contours(path)?;
        let input = resample_contours(&set, model.config.n_in, seed, ResampleMode::Random)?;
        let pred = model.predict(&input)?;
        return write_prediction(run, &cli.out, &pred, &header);
    }
    let data = data.ok_or_else(|| Error::Config("infer needs --contours or --data".into()))?;
    let ds = open_data(data, run)?;
    let subjects: Vec<Subject> = match (subject, split) {
        (Some(id), _) => vec![ds.load(id)?],
        (None, Some(s)) => ds.load_split(parse_split(s)?)?,
        (None, None) => return Err(Error::Config("infer needs --subject or --split".into())),
    };
    for s in &subjects {
        let input = eval_input(s, model.config.n_in, seed)?;
        let pred = model.predict(&input).map_err(|e| Error::Subject { id: s.id, source: Box::new(e) })?;
        let dir = if subject.is_some() { cli.out.clone() } else { cli.out.join(format!("{:04}", s.id)) };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_prediction(run, &dir, &pred, &header)?;
    }
    println!("wrote predictions for {} subject(s)", subjects.len());
    Ok(())
}

fn cmd_evaluate(
    cli: &Cli,
    data: &Path,
    split: &str,
    checkpoint: Option<&Path>,
    predictions: Option<&Path>,
    run: &mut Run,
) -> Result<()> {
    let ds = open_data(data, run)?;
    let subjects = ds.load_split(parse_split(split)?)?;
    let results: Vec<SubjectResult> = if let Some(ck) = checkpoint {
        run.inputs.push(ck.to_path_buf());
        let (cfg, model) = load_model(ck)?;
        run.config_hash = cfg.hash();
        let seed = cli.seed.unwrap_or(cfg.seed);
        run.seeds.push(("resample".into(), seed));
        ecgloc::eval::evaluate_model(&model, &subjects, seed)?
    } else {
        let dir = predictions.expect("clap enforces one of checkpoint/predictions");
        run.inputs.push(dir.to_path_buf());
        subjects
            .iter()
            .map(|s| {
                let d = dir.join(format!("{:04}", s.id));
                let wrap = |e| Error::Subject { id: s.id, source: Box::new(e) };
                let el = textio::read_electrodes(&d.join("electrodes.txt")).map_err(wrap)?;
                let dense_path = d.join("dense.xyz");
                let dense = if dense_path.exists() { Some(textio::read_xyz(&dense_path).map_err(wrap)?) } else { None };
                score(s, &el, dense.as_ref())
            })
            .collect::<Result<_>>()?
    };
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let agg = write_reports(&cli.out, &results)?;
    for f in ["results.csv", "electrodes.csv", "correlations.csv"] {
        run.outputs.push(cli.out.join(f));
    }
    print!("{} subjects: ED {:.4} ± {:.4} cm", agg.n, agg.ed_mean, agg.ed_sd);
    if let (Some(m), Some(s)) = (agg.cd_mean, agg.cd_sd) {
        print!(", CD {m:.4} ± {s:.4} cm");
    }
    println!();
    Ok(())
}

fn cmd_simulate(
    cli: &Cli,
    data: &Path,
    id: u32,
    electrodes: Option<&Path>,
    phantom: Option<&Path>,
    sim: SimConfig,
    run: &mut Run,
) -> Result<()> {
    let ds = open_data(data, run)?;
    let s = ds.load(id)?;
    let spec = match phantom {
        Some(p) => {
            run.inputs.push(p.to_path_buf());
            PhantomSpec::from_text(&read_to_string(p)?, &p.display().to_string())?
        }
        None => PhantomSpec::for_torso(&s.spec, &SliceProtocol::default()),
    };
    run.config_hash = config_hash(&spec.to_text());
    let ph = spec.build()?;
    let act = solve_eikonal(&ph)?;
    if !act.unreachable.is_empty() {
        eprintln!("warning: {} tissue voxels are unreachable from the roots", act.unreachable.len());
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    run.write(cli.out.join("phantom.txt"), spec.to_text().as_bytes())?;
    let gt = simulate_ecg(&ph, &act, &s.electrodes, &sim)?;
    run.write(cli.out.join("ecg_reference.csv"), gt.to_csv().as_bytes())?;
    println!("QRS activation spans {:.1} ms over {} samples", act.max_time(), gt.len());
    if let Some(p) = electrodes {
        run.inputs.push(p.to_path_buf());
        let pred_el = textio::read_electrodes(p)?;
        let pred = simulate_ecg(&ph, &act, &pred_el, &sim)?;
        run.write(cli.out.join("ecg_predicted.csv"), pred.to_csv().as_bytes())?;
        let c = compare_ecgs(&pred, &gt, DEFAULT_QRS_FRACTION)?;
        let mut t = String::from("lead,dtw,pearson\n");
        for (i, name) in ecgloc::ecg::LEAD_NAMES.iter().enumerate() {
            let _ = writeln!(t, "{name},{},{}", c.dtw[i], c.pearson[i]);
        }
        let _ = writeln!(t, "mean,{},{}", c.mean_dtw, c.mean_pearson);
        run.write(cli.out.join("ecg_comparison.csv"), t.as_bytes())?;
        println!(
            "mean DTW {:.4}, mean Pearson {:.4}, QRS {:.1} vs {:.1} ms",
            c.mean_dtw, c.mean_pearson, c.qrs_pred_ms, c.qrs_gt_ms
        );
    }
    Ok(())
}

fn results_column(results: &[SubjectResult], name: &str) -> Result<Vec<f64>> {
    let col = |f: fn(&SubjectResult) -> Option<f64>| -> Result<Vec<f64>> {
        results
            .iter()
            .map(f)
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::Invalid(format!("column '{name}' has missing values")))
    };
    match name {
        "scale" => col(|r| r.scale),
        "CD_torso" | "cd" => col(|r| r.cd),
        "mean_ED" => Ok(results.iter().map(|r| r.mean_ed).collect()),
        _ => Err(Error::Config(format!("unknown scatter column '{name}' (scale, CD_torso or mean_ED)"))),
    }
}

fn cmd_plot(
    cli: &Cli,
    kind: &str,
    input: &Path,
    predicted: Option<&Path>,
    x: &str,
    file: Option<&str>,
    run: &mut Run,
) -> Result<()> {
    let kind = PlotKind::parse(kind)?;
    run.inputs.push(input.to_path_buf());
    let text = read_to_string(input)?;
    let src = input.display().to_string();
    let svg = match kind {
        PlotKind::Boxplot => {
            let rs = parse_results(&text, &src)?;
            let groups: Vec<(String, Vec<f64>)> = Electrode::ALL
                .iter()
                .map(|e| (e.name().to_owned(), rs.iter().map(|r| r.per_electrode[e.index()]).collect()))
                .collect();
            boxplot(&groups, "Euclidean error per electrode", "error (cm)")?
        }
        PlotKind::Scatter => {
            let rs = parse_results(&text, &src)?;
            scatter(&results_column(&rs, x)?, &results_column(&rs, "mean_ED")?, x, "mean_ED")?
        }
        PlotKind::EcgOverlay => {
            let p = predicted.ok_or_else(|| Error::Config("ecg-overlay needs --predicted".into()))?;
            run.inputs.push(p.to_path_buf());
            let reference = EcgTrace::from_csv(&text, &src)?;
            let pred = EcgTrace::from_csv(&read_to_string(p)?, &p.display().to_string())?;
            ecg_overlay(&reference, &pred, "Reference (black) and predicted (red) leads")?
        }
    };
    let name = file.map(str::to_owned).unwrap_or_else(|| {
        match kind {
            PlotKind::Boxplot => "boxplot.svg",
            PlotKind::Scatter => "scatter.svg",
            PlotKind::EcgOverlay => "ecg_overlay.svg",
        }
        .to_owned()
    });
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    run.write(cli.out.join(name), svg.as_bytes())
}

fn dispatch(cli: &Cli, run: &mut Run) -> Result<()> {
    match &cli.cmd {
        Cmd::Generate { subjects } => cmd_generate(cli, *subjects, run),
        Cmd::Train(args) => cmd_train(cli, args, run),
        Cmd::Sweep { train, axis, values } => cmd_sweep(cli, train, axis, values, run),
        Cmd::Infer {
            checkpoint,
            data,
            subject,
            split,
            contours,
        } => cmd_infer(cli, checkpoint, data.as_deref(), *subject, split.as_deref(), contours.as_deref(), run),
        Cmd::Evaluate {
            data,
            split,
            checkpoint,
            predictions,
        } => cmd_evaluate(cli, data, split, checkpoint.as_deref(), predictions.as_deref(), run),
        Cmd::SimulateEcg {
            data,
            subject,
            electrodes,
            phantom,
            dt_ms,
            upstroke_ms,
        } => {
            let sim = SimConfig {
                dt_ms: *dt_ms,
                upstroke_ms: *upstroke_ms,
                ..SimConfig::default()
            };
            if !(sim.dt_ms > 0.0) {
                return Err(Error::Config("--dt-ms must be positive".into()));
            }
            cmd_simulate(cli, data, *subject, electrodes.as_deref(), phantom.as_deref(), sim, run)
        }
        Cmd::Plot {
            kind,
            input,
            predicted,
            x,
            file,
        } => cmd_plot(cli, kind, input, predicted.as_deref(), x, file.as_deref(), run),
    }
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Generate { .. } => "generate",
        Cmd::Train(_) => "train",
        Cmd::Sweep { .. } => "sweep",
        Cmd::Infer { .. } => "infer",
        Cmd::Evaluate { .. } => "evaluate",
        Cmd::SimulateEcg { .. } => "simulate-ecg",
        Cmd::Plot { .. } => "plot",
    }
}

fn main() -> ExitCode {
    let help = config_help();
    let mut command = Cli::command().after_long_help(help.clone());
    for name in ["train", "sweep"] {
        command = command.mut_subcommand(name, |c| c.after_long_help(help.clone()));
    }
    let cli = match Cli::from_arg_matches(&command.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let mut run = Run::new(command_name(&cli.cmd));
    let outcome = dispatch(&cli, &mut run).and_then(|()| {
        std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
        run.finish(&cli.out)
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
