use std::path::{Path, PathBuf};

use anyhow::Context;
use log::info;
use serde::{Deserialize, Serialize};
use skelact_core::data::{load_json_sequence, synth_generate, write_json_sequence, Dataset, SkeletonSequence, SynthSpec};
use skelact_core::evaluation::{default_class_names, delta_table, evaluate_model, filter_confusion, EvalReport};
use skelact_core::models::{Checkpoint, Model, ModelConfig, ModelKind};
use skelact_core::pipeline::{InputPipeline, InputVariant};
use skelact_core::render::{render_confusion_svg, render_skeleton_svg, RenderStyle};
use skelact_core::taylor::{motion_magnitude, taylor_transform, TaylorConfig, TaylorMode};
use skelact_core::topology::build_ntu_graph;
use skelact_core::training::{train_with_observer, TrainConfig};

use crate::{
    Cli, Command, CompareArgs, ConfusionArgs, EvalArgs, Failure, InputArg, ModeArg, ModelArg, RenderCommand,
    SkeletonArgs, SplitArg, SynthArgs, TrainArgs, TransformArgs,
};

type Outcome = Result<(), Failure>;

/// Resolved settings written next to every run's outputs.
#[derive(Serialize)]
struct RunConfig<'a, S> {
    command: &'a str,
    seed: Option<u64>,
    out_dir: &'a Path,
    verbosity: u8,
    threads: Option<usize>,
    settings: S,
}

pub fn dispatch(cli: &Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Transform(a) => transform(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Compare(a) => compare(cli, a),
        Command::Render(RenderCommand::Skeleton(a)) => render_skeleton(cli, a),
        Command::Render(RenderCommand::Confusion(a)) => render_confusion(cli, a),
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| skelact_core::Error::Schema(e.to_string()))
        .with_context(|| format!("parsing {}", path.display()))
}

fn snapshot<S: Serialize>(cli: &Cli, command: &str, dir: &Path, seed: Option<u64>, settings: S) -> anyhow::Result<()> {
    let cfg = RunConfig {
        command,
        seed,
        out_dir: dir,
        verbosity: cli.verbose,
        threads: cli.threads,
        settings,
    };
    let path = dir.join(format!("{command}.run_config.json"));
    write_text(&path, &serde_json::to_string_pretty(&cfg)?)
}

fn synth(cli: &Cli, args: &SynthArgs) -> Outcome {
    let mut spec: SynthSpec = match &args.config {
        Some(path) => read_json(path)?,
        None => SynthSpec::default(),
    };
    if let Some(v) = args.classes {
        spec.num_classes = v;
    }
    if let Some(v) = args.per_class {
        spec.per_class = v;
    }
    if let Some(v) = args.frames {
        spec.frames = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    let dir = &args.out.out;
    ensure_dir(dir)?;
    let ds = synth_generate(&spec)?;
    ds.write_to(dir)?;
    info!("wrote {} sequences to {}", ds.sequences.len(), dir.display());
    snapshot(cli, "synth", dir, Some(spec.seed), &spec)?;
    Ok(())
}

fn file_stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".json").unwrap_or(&name).to_string()
}

fn load_sequence(path: &Path) -> anyhow::Result<SkeletonSequence> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_json_sequence(&text).with_context(|| format!("loading {}", path.display()))
}

fn transform(cli: &Cli, args: &TransformArgs) -> Outcome {
    let cfg = TaylorConfig {
        block_frames: args.block,
        step: args.step,
        order: args.order,
        mode: match args.mode {
            ModeArg::Replace => TaylorMode::Replace,
            ModeArg::Concat => TaylorMode::Concat,
        },
    };
    cfg.validate()?;
    let dir = &args.out.out;
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for input in &args.inputs {
        let seq = load_sequence(input)?;
        let out = taylor_transform(&seq, &cfg).with_context(|| format!("transforming {}", input.display()))?;
        let stem = file_stem(input);
        let path = dir.join(format!("{stem}.taylor.json"));
        write_text(&path, &write_json_sequence(&out)?)?;
        written.push(path);
        if args.motion {
            let path = dir.join(format!("{stem}.motion.json"));
            write_text(&path, &motion_magnitude(&seq, &cfg)?.to_json()?)?;
            written.push(path);
        }
    }
    info!("wrote {} files", written.len());
    #[derive(Serialize)]
    struct Settings<'a> {
        inputs: &'a [PathBuf],
        taylor: TaylorConfig,
        motion: bool,
    }
    snapshot(
        cli,
        "transform",
        dir,
        None,
        Settings {
            inputs: &args.inputs,
            taylor: cfg,
            motion: args.motion,
        },
    )?;
    Ok(())
}

/// Schema of the `train --config` file; every section is optional.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainFile {
    model: Option<ModelConfig>,
    training: Option<TrainConfig>,
    pipeline: Option<InputPipeline>,
}

#[derive(Debug, Serialize)]
struct TrainSettings {
    manifest: PathBuf,
    checkpoint: PathBuf,
    history: PathBuf,
    model: ModelConfig,
    training: TrainConfig,
    pipeline: InputPipeline,
}

fn resolve_train(args: &TrainArgs, num_classes: usize) -> Result<TrainSettings, Failure> {
    let file: TrainFile = match &args.config {
        Some(path) => read_json(path)?,
        None => TrainFile::default(),
    };
    let kind = match args.model {
        ModelArg::Stgcn => ModelKind::Stgcn,
        ModelArg::Hyperformer => ModelKind::Hyperformer,
    };
    let mut model = file.model.unwrap_or_else(|| ModelConfig::default_for(kind));
    if model.kind() != kind {
        return Err(Failure::Usage(format!(
            "--model {} conflicts with a `{}` model in the config file",
            kind.name(),
            model.kind().name()
        )));
    }
    let mut pipeline = file.pipeline.unwrap_or_else(|| InputPipeline::new(InputVariant::Original));
    pipeline.variant = match args.input {
        InputArg::Original => InputVariant::Original,
        InputArg::Taylor => InputVariant::Taylor,
    };
    model.set_num_classes(num_classes);
    model.set_in_channels(pipeline.channels());
    if let Some(frames) = model.required_frames() {
        if frames != pipeline.preprocess.target_frames {
            return Err(skelact_core::Error::Config(format!(
                "model expects {frames} frames but the pipeline resizes to {}",
                pipeline.preprocess.target_frames
            ))
            .into());
        }
    }

    let mut training = file.training.unwrap_or_else(|| TrainConfig::for_model(kind));
    if let Some(v) = args.epochs {
        training.total_epochs = v;
    }
    if let Some(v) = args.batch_size {
        training.batch_size = v;
    }
    if let Some(v) = args.lr {
        training.base_lr = v;
    }
    if let Some(v) = args.seed {
        training.seed = v;
    }
    training.validate()?;

    let checkpoint = args.out.clone().unwrap_or_else(|| {
        std::env::var_os("SKELACT_OUT_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
            .join("checkpoint.json")
    });
    let history = args.history.clone().unwrap_or_else(|| parent_dir(&checkpoint).join("history.csv"));
    Ok(TrainSettings {
        manifest: args.manifest.clone(),
        checkpoint,
        history,
        model,
        training,
        pipeline,
    })
}

fn train(cli: &Cli, args: &TrainArgs) -> Outcome {
    let dataset = Dataset::read_from(&args.manifest)?;
    let settings = resolve_train(args, dataset.manifest.num_classes)?;
    let dir = parent_dir(&settings.checkpoint);
    ensure_dir(&dir)?;
    snapshot(cli, "train", &dir, Some(settings.training.seed), &settings)?;

    let split = dataset.split()?;
    let raw: Vec<SkeletonSequence> = dataset.select(&split.train).into_iter().cloned().collect();
    let data = settings.pipeline.prepare_all(&raw)?;
    let mut model = Model::build(&settings.model, settings.training.seed)?;
    info!(
        "training {} on {} sequences for {} epochs",
        settings.model.kind().name(),
        data.len(),
        settings.training.total_epochs
    );
    let history = train_with_observer(&mut model, &data, &settings.training, |r| {
        info!("epoch {} lr {:.3e} loss {:.4} acc {:.1}", r.epoch, r.lr, r.loss, r.train_acc);
    })?;
    history.write_csv(&settings.history)?;
    Checkpoint {
        model,
        pipeline: settings.pipeline.clone(),
    }
    .save(&settings.checkpoint)?;
    if let Some(last) = history.final_record() {
        println!("epochs {} loss {:.4} train top-1 {:.2}", history.epochs.len(), last.loss, last.train_acc);
    }
    Ok(())
}

fn eval(cli: &Cli, args: &EvalArgs) -> Outcome {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let dataset = Dataset::read_from(&args.manifest)?;
    let indices: Vec<usize> = match args.split {
        SplitArg::Train => dataset.split()?.train,
        SplitArg::Test => dataset.split()?.test,
        SplitArg::All => (0..dataset.sequences.len()).collect(),
    };
    let raw: Vec<SkeletonSequence> = dataset.select(&indices).into_iter().cloned().collect();
    let data = ckpt.pipeline.prepare_all(&raw)?;
    let tag = args.tag.clone().unwrap_or_else(|| match ckpt.pipeline.variant {
        InputVariant::Original => "original".to_string(),
        InputVariant::Taylor => "taylor".to_string(),
    });
    let report = evaluate_model(&ckpt.model, &data, args.batch_size, &tag)?;
    let dir = &args.out.out;
    ensure_dir(dir)?;
    report.save(&dir.join(format!("{tag}.report.json")))?;
    write_text(&dir.join(format!("{tag}.confusion.csv")), &report.confusion_csv()?)?;
    println!("{tag}: top-1 {:.2} top-5 {:.2} over {} samples", report.top1, report.top5, report.sample_count);

    #[derive(Serialize)]
    struct Settings<'a> {
        checkpoint: &'a Path,
        manifest: &'a Path,
        split: &'a str,
        tag: &'a str,
        batch_size: usize,
    }
    let split = match args.split {
        SplitArg::Train => "train",
        SplitArg::Test => "test",
        SplitArg::All => "all",
    };
    snapshot(
        cli,
        &format!("eval_{tag}"),
        dir,
        None,
        Settings {
            checkpoint: &args.checkpoint,
            manifest: &args.manifest,
            split,
            tag: &tag,
            batch_size: args.batch_size,
        },
    )?;
    Ok(())
}

fn compare(cli: &Cli, args: &CompareArgs) -> Outcome {
    let a = EvalReport::load(&args.baseline)?;
    let b = EvalReport::load(&args.candidate)?;
    let names = default_class_names(a.num_classes);
    let table = delta_table(&a, &b, args.top, &names)?;
    let text = table.to_text();
    let dir = &args.out.out;
    ensure_dir(dir)?;
    write_text(&dir.join("delta.txt"), &text)?;
    write_text(&dir.join("delta.csv"), &table.to_csv()?)?;
    print!("{text}");

    #[derive(Serialize)]
    struct Settings<'a> {
        baseline: &'a Path,
        candidate: &'a Path,
        top: usize,
    }
    snapshot(
        cli,
        "compare",
        dir,
        None,
        Settings {
            baseline: &args.baseline,
            candidate: &args.candidate,
            top: args.top,
        },
    )?;
    Ok(())
}

fn load_style(path: Option<&Path>) -> anyhow::Result<RenderStyle> {
    let style = match path {
        Some(p) => read_json(p)?,
        None => RenderStyle::default(),
    };
    style.validate()?;
    Ok(style)
}

fn render_skeleton(cli: &Cli, args: &SkeletonArgs) -> Outcome {
    let seq = load_sequence(&args.sequence)?;
    let (frames, bodies, joints, channels) = seq.frames.dim();
    if args.frame >= frames || args.body >= bodies || channels < 3 {
        return Err(skelact_core::Error::Domain(format!(
            "frame {} body {} is outside a {frames}-frame, {bodies}-body sequence",
            args.frame, args.body
        ))
        .into());
    }
    let points: Vec<[f64; 3]> = (0..joints)
        .map(|j| std::array::from_fn(|c| seq.frames[[args.frame, args.body, j, c]]))
        .collect();
    let taylor = TaylorConfig {
        block_frames: args.block,
        ..TaylorConfig::default()
    };
    let motion = if args.taylor {
        Some(motion_magnitude(&seq, &taylor)?.at_frame(args.frame, args.body))
    } else {
        None
    };
    let style = load_style(args.style.as_deref())?;
    let svg = render_skeleton_svg(&points, motion.as_deref(), &build_ntu_graph(), &style)?;
    let dir = parent_dir(&args.out);
    ensure_dir(&dir)?;
    write_text(&args.out, &svg)?;

    #[derive(Serialize)]
    struct Settings<'a> {
        sequence: &'a Path,
        frame: usize,
        body: usize,
        taylor: Option<TaylorConfig>,
        style: RenderStyle,
        out: &'a Path,
    }
    snapshot(
        cli,
        "render_skeleton",
        &dir,
        None,
        Settings {
            sequence: &args.sequence,
            frame: args.frame,
            body: args.body,
            taylor: args.taylor.then_some(taylor),
            style,
            out: &args.out,
        },
    )?;
    Ok(())
}

fn render_confusion(cli: &Cli, args: &ConfusionArgs) -> Outcome {
    let report = EvalReport::load(&args.report)?;
    let matrix = filter_confusion(&report, args.threshold)?;
    let style = load_style(args.style.as_deref())?;
    let svg = render_confusion_svg(&matrix, &default_class_names(report.num_classes), &style)?;
    let dir = parent_dir(&args.out);
    ensure_dir(&dir)?;
    write_text(&args.out, &svg)?;

    #[derive(Serialize)]
    struct Settings<'a> {
        report: &'a Path,
        threshold: f64,
        style: RenderStyle,
        out: &'a Path,
    }
    snapshot(
        cli,
        "render_confusion",
        &dir,
        None,
        Settings {
            report: &args.report,
            threshold: args.threshold,
            style,
            out: &args.out,
        },
    )?;
    Ok(())
}
