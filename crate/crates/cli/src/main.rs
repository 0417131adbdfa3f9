use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wlatt::data::{generate_synthetic, Dataset, Sample, SynthConfig};
use wlatt::metrics::{evaluate, EvalReport};
use wlatt::model::{load_weights_file, ArchSpec, MultiLevelModel, PRESET_ARCHS};
use wlatt::nn::{Mode, Tensor2};
use wlatt::rng::Rng;
use wlatt::train::{bce_batch, fit, save_checkpoint, score_samples, TrainConfig};

const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "wlatt",
    version,
    about = "Attention pooling models for weakly labelled clips"
)]
struct Cli {
    /// Print the preset architecture strings and exit.
    #[arg(long)]
    list_archs: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its event-frame sidecar.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint directory.
    Train(TrainArgs),
    /// Score a model (or a score file) against a labelled dataset.
    Evaluate(EvaluateArgs),
    /// Print per-clip class scores above a threshold.
    Predict(PredictArgs),
    /// Compare analytic and numerical gradients on a toy model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Dataset file to write.
    #[arg(long)]
    out: PathBuf,
    /// Sidecar with the event frames; defaults to `<out>.truth.tsv`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// TOML file with generator settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_classes: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    event_frames_min: Option<usize>,
    #[arg(long)]
    event_frames_max: Option<usize>,
    #[arg(long)]
    labels_per_sample_min: Option<usize>,
    #[arg(long)]
    labels_per_sample_max: Option<usize>,
    #[arg(long)]
    signal_scale: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, required_unless_present = "config")]
    arch: Option<String>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with training settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    hidden_units: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    early_stop_patience: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Args)]
struct ModelArgs {
    /// Weight file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    arch: String,
    /// Hidden width; read from the weight file when omitted.
    #[arg(long)]
    hidden_units: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, required_unless_present = "scores")]
    model: Option<PathBuf>,
    #[arg(long, required_unless_present = "scores")]
    arch: Option<String>,
    #[arg(long)]
    hidden_units: Option<usize>,
    /// Scores in the `predict` output format instead of a model.
    #[arg(long, conflicts_with_all = ["model", "arch", "hidden_units"])]
    scores: Option<PathBuf>,
    /// Labelled dataset.
    #[arg(long)]
    data: PathBuf,
    /// Also write tab-separated per-class records here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    data: PathBuf,
    /// Only scores strictly above this value are printed.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    arch: String,
    /// Toy dimensions `T,M,H,K`.
    #[arg(long, default_value = "2,4,5,3", value_parser = parse_toy_dims)]
    toy_dims: [usize; 4],
    /// Clips in the toy batch.
    #[arg(long, default_value_t = 4)]
    clips: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_toy_dims(text: &str) -> std::result::Result<[usize; 4], String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("expected T,M,H,K, got {text:?}"));
    }
    let mut dims = [0; 4];
    for (d, p) in dims.iter_mut().zip(&parts) {
        *d = p
            .trim()
            .parse()
            .ok()
            .filter(|&v: &usize| v > 0)
            .ok_or_else(|| format!("{p:?} is not a positive integer"))?;
    }
    Ok(dims)
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn overlay<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let mut cfg: SynthConfig = read_config(args.config.as_deref())?;
    overlay(&mut cfg.n_classes, args.n_classes);
    overlay(&mut cfg.n_samples, args.n_samples);
    overlay(&mut cfg.frames, args.frames);
    overlay(&mut cfg.feature_dim, args.feature_dim);
    overlay(&mut cfg.event_frames_min, args.event_frames_min);
    overlay(&mut cfg.event_frames_max, args.event_frames_max);
    overlay(&mut cfg.labels_per_sample_min, args.labels_per_sample_min);
    overlay(&mut cfg.labels_per_sample_max, args.labels_per_sample_max);
    overlay(&mut cfg.signal_scale, args.signal_scale);
    overlay(&mut cfg.noise_sigma, args.noise_sigma);
    overlay(&mut cfg.seed, args.seed);
    cfg.validate().context("invalid generator settings")?;

    let truth_path = args.truth.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".truth.tsv");
        p.into()
    });
    let mut data_sink = create(&args.out)?;
    let mut truth_sink = create(&truth_path)?;

    let synthetic = generate_synthetic(&cfg)?;
    let dataset = Dataset::new(
        cfg.frames,
        cfg.feature_dim,
        cfg.n_classes,
        synthetic.samples,
    );
    let bytes = wlatt::data::write_dataset(&dataset.samples, &dataset.header, &mut data_sink)?;
    data_sink.flush()?;
    synthetic.truth.write(&mut truth_sink)?;
    truth_sink.flush()?;
    println!(
        "wrote {} clips ({bytes} bytes) to {} and event frames to {}",
        dataset.samples.len(),
        args.out.display(),
        truth_path.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = read_config(args.config.as_deref())?;
    overlay(&mut cfg.arch, args.arch);
    overlay(&mut cfg.hidden_units, args.hidden_units);
    overlay(&mut cfg.batch_size, args.batch_size);
    overlay(&mut cfg.lr, args.lr);
    overlay(&mut cfg.epochs, args.epochs);
    overlay(&mut cfg.seed, args.seed);
    overlay(&mut cfg.eval_every, args.eval_every);
    overlay(&mut cfg.early_stop_patience, args.early_stop_patience);
    overlay(&mut cfg.dropout, args.dropout);
    cfg.validate().context("invalid training settings")?;

    let train_set = load_dataset(&args.train)?;
    let valid_set = load_dataset(&args.valid)?;
    let (m, k) = (train_set.header.feature_dim(), train_set.header.n_classes());
    let model = cfg
        .build_model(m, k)
        .with_context(|| format!("building architecture {:?}", cfg.arch))?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let log_path = args.out.join("train_log.jsonl");
    let mut log = create(&log_path)?;
    std::fs::write(args.out.join("config.toml"), toml::to_string(&cfg)?)?;

    let outcome = fit(model, &train_set, Some(&valid_set), &cfg, &mut log)?;
    save_checkpoint(&args.out, &outcome)?;
    match &outcome.best_report {
        Some(r) => println!(
            "best epoch {}: valid mAP {:.4}, AUC {:.4}, d' {:.4}",
            outcome.best_epoch, r.map, r.mean_auc, r.dprime
        ),
        None => println!(
            "trained {} epochs without evaluation",
            outcome.records.len()
        ),
    }
    println!("checkpoint written to {}", args.out.display());
    Ok(())
}

fn load_model(args: &ModelArgs, data: &Dataset) -> Result<MultiLevelModel> {
    load_weights_file(
        &args.model,
        &args.arch,
        args.hidden_units,
        data.header.n_classes(),
        data.header.feature_dim(),
    )
    .with_context(|| format!("loading weights {}", args.model.display()))
}

/// Parses `id<TAB>k:score,...` lines; absent classes score 0.
fn read_scores(path: &Path, data: &Dataset) -> Result<Tensor2> {
    let k = data.header.n_classes();
    let index: HashMap<&str, usize> = data
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut scores = Tensor2::zeros(data.samples.len(), k);
    let mut seen = vec![false; data.samples.len()];
    let reader =
        BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let at = || format!("{}:{}", path.display(), lineno + 1);
        let (id, entries) = line.split_once('\t').unwrap_or((line.as_str(), ""));
        let &row = index
            .get(id)
            .with_context(|| format!("{}: unknown sample id {id:?}", at()))?;
        if std::mem::replace(&mut seen[row], true) {
            bail!("{}: duplicate sample id {id:?}", at());
        }
        for entry in entries.split(',').filter(|e| !e.is_empty()) {
            let (class, score) = entry
                .split_once(':')
                .with_context(|| format!("{}: expected class:score, got {entry:?}", at()))?;
            let class: usize = class
                .parse()
                .with_context(|| format!("{}: bad class {class:?}", at()))?;
            let score: f64 = score
                .parse()
                .with_context(|| format!("{}: bad score {score:?}", at()))?;
            if class >= k {
                bail!("{}: class {class} is out of range for K={k}", at());
            }
            scores[(row, class)] = score;
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        bail!(
            "{}: no scores for sample {:?}",
            path.display(),
            data.samples[missing].id
        );
    }
    Ok(scores)
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let scores = match (&args.scores, &args.model, &args.arch) {
        (Some(path), _, _) => read_scores(path, &data)?,
        (None, Some(model), Some(arch)) => {
            let model_args = ModelArgs {
                model: model.clone(),
                arch: arch.clone(),
                hidden_units: args.hidden_units,
            };
            score_samples(&load_model(&model_args, &data)?, &data.samples)?
        }
        _ => bail!("either --scores or both --model and --arch are required"),
    };
    let refs: Vec<&Sample> = data.samples.iter().collect();
    let report: EvalReport = evaluate(
        &scores,
        &wlatt::data::multi_hot(&refs, data.header.n_classes())?,
    )
    .with_context(|| format!("evaluating against {}", args.data.display()))?;
    print!("{}", report.to_table());
    if let Some(path) = &args.report {
        std::fs::write(path, report.to_records())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let model = load_model(&args.model, &data)?;
    let scores = score_samples(&model, &data.samples)?;
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for (n, s) in data.samples.iter().enumerate() {
        let entries: Vec<String> = scores
            .row(n)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > args.threshold)
            .map(|(k, p)| format!("{k}:{p:.6}"))
            .collect();
        writeln!(out, "{}\t{}", s.id, entries.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Returns whether every check stayed under the tolerance.
fn gradcheck(args: GradcheckArgs) -> Result<bool> {
    let [t, m, h, k] = args.toy_dims;
    let n = args.clips;
    let spec = ArchSpec::parse(&args.arch, h, k)?;
    let rows = n * t;
    if rows < 2 {
        bail!("the toy batch needs at least two frame rows for batch norm, got {rows}");
    }
    // inputs whose pre-activations sit on a ReLU kink make central
    // differences meaningless, so redraw until they clear it
    const KINK_MARGIN: f64 = 1e-3;
    const MAX_DRAWS: u64 = 1000;
    let mut rng = Rng::new(args.seed);
    let mut chosen = None;
    for _ in 0..MAX_DRAWS {
        let mut model =
            MultiLevelModel::build(spec.clone(), m, rng.next_u64()).with_dropout(0.0)?;
        let x = Tensor2::from_vec(rows, m, (0..rows * m).map(|_| rng.normal()).collect())?;
        let y = Tensor2::from_vec(n, k, (0..n * k).map(|_| rng.below(2) as f64).collect())?;
        for _ in 0..5 {
            model.forward(&x, t, Mode::Train, &mut rng)?;
        }
        let clear = [Mode::Train, Mode::Infer]
            .iter()
            .map(|&mode| model.relu_margin(&x, t, mode))
            .collect::<wlatt::Result<Vec<f64>>>()?
            .iter()
            .all(|&margin| margin > KINK_MARGIN);
        if clear {
            chosen = Some((model, x, y));
            break;
        }
    }
    let Some((model, x, y)) = chosen else {
        bail!("no input clear of ReLU kinks after {MAX_DRAWS} draws");
    };
    let mut ok = true;
    for mode in [Mode::Train, Mode::Infer] {
        let report = model.grad_check(&x, t, mode, |z| bce_batch(z, &y))?;
        let pass = report.max_rel_error < GRADCHECK_TOL;
        ok &= pass;
        println!(
            "{}\t{mode:?}\tmax_rel_error={:.3e}\tparams={}\t{}",
            args.arch,
            report.max_rel_error,
            report.checked,
            if pass { "ok" } else { "FAIL" }
        );
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if cli.list_archs {
        for arch in PRESET_ARCHS {
            println!("{arch}");
        }
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a command is required (gen-data, train, evaluate, predict, gradcheck)");
        eprintln!("run `wlatt --help` for usage");
        return ExitCode::from(2);
    };
    let result = match command {
        Command::GenData(a) => gen_data(a).map(|()| true),
        Command::Train(a) => train(a).map(|()| true),
        Command::Evaluate(a) => evaluate_cmd(a).map(|()| true),
        Command::Predict(a) => predict(a).map(|()| true),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
