use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use detctx::dataset::{self, Dataset};
use detctx::eval::{self, EvalParams, Subset};
use detctx::lcr::{self, LabelingStandard, LcrParams};
use detctx::pipeline::{self, RUN_REPORT};
use detctx::scf::{self, ContextGraph, Hyper, ProbabilityArtifact, RegionFeatures, RelationDescriptor, TrainedModel};
use detctx::scr::{self, ApplyParams, SceneContext};
use detctx::synth::{self, SceneSpec};
use detctx::{json, Error, Result};

#[derive(Parser)]
#[command(
    name = "detctx",
    version,
    about = "Context stages and evaluation for object-detection pipelines"
)]
struct Cli {
    /// Pipeline config (required by `run`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config, the scene spec or training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Map,
    Mr2,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubsetArg {
    Reasonable,
    Heavy,
    All,
    Small,
}

impl From<SubsetArg> for Subset {
    fn from(s: SubsetArg) -> Subset {
        match s {
            SubsetArg::Reasonable => Subset::Reasonable,
            SubsetArg::Heavy => Subset::Heavy,
            SubsetArg::All => Subset::All,
            SubsetArg::Small => Subset::Small,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Append enlarged twin labels for small objects.
    LcrTransform {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        standard: LabelingStandard,
        #[arg(long)]
        enlarge: f64,
    },
    /// Build the label co-occurrence graph.
    ScfBuildGraph {
        #[arg(long)]
        annotations: PathBuf,
        /// Comma-separated category names, in graph order.
        #[arg(long, value_delimiter = ',')]
        categories: Vec<String>,
        /// `conditional` or `binary:<tau>`.
        #[arg(long, default_value = "conditional")]
        descriptor: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the semantic projection on labelled region features.
    ScfTrain {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// JSON object with any of lr, momentum, weight_decay, epochs, hidden_dim, leaky_slope.
        #[arg(long)]
        hyper: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project region features into the semantic space.
    ScfProject {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill missing overlap thresholds from ground truth.
    ScrDerive {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long, default_value_t = scr::DEFAULT_PERCENTILE)]
        percentile: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Promote suppressed detections that fit the spatial rules.
    ScrApply {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        /// Annotation file with stuff segmentations; also supplies the id universe.
        #[arg(long)]
        masks: Option<PathBuf>,
        /// Annotation file supplying the id universe when no masks are given.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        keep_threshold: f64,
        #[arg(long, default_value_t = 0.05)]
        candidate_floor: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score detections against ground truth.
    Evaluate {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, value_enum, default_value = "map")]
        metric: Metric,
        #[arg(long, value_enum, default_value = "reasonable")]
        subset: SubsetArg,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the stages enabled in --config.
    Run,
    /// Generate a synthetic scene.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_ann: PathBuf,
        #[arg(long)]
        out_det: PathBuf,
    },
}

fn parse_descriptor(s: &str) -> Result<RelationDescriptor> {
    match s.split_once(':') {
        None if s == "conditional" => Ok(RelationDescriptor::Conditional),
        Some(("binary", t)) => t
            .parse()
            .map(RelationDescriptor::Binary)
            .map_err(|_| Error::config("--descriptor", format!("bad binary threshold `{t}`"))),
        _ => Err(Error::config(
            "--descriptor",
            format!("expected conditional or binary:<tau>, got `{s}`"),
        )),
    }
}

fn load_dataset(path: &PathBuf) -> Result<Dataset> {
    let (ds, warnings) = dataset::load_annotations(path)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(ds)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::LcrTransform {
            annotations,
            out,
            standard,
            enlarge,
        } => {
            let ds = load_dataset(&annotations)?;
            let params = LcrParams::new(standard, enlarge)?;
            let transformed = lcr::transform_dataset(&ds, &params)?;
            dataset::save_annotations(&out, &transformed)?;
            println!(
                "{} twin labels added ({} annotations)",
                transformed.annotations().len() - ds.annotations().len(),
                transformed.annotations().len()
            );
        }
        Command::ScfBuildGraph {
            annotations,
            categories,
            descriptor,
            out,
        } => {
            let ds = load_dataset(&annotations)?;
            let graph = scf::build_graph(&ds, &categories, parse_descriptor(&descriptor)?)?;
            json::write(&out, &graph)?;
            println!("graph over {} categories written to {}", graph.len(), out.display());
        }
        Command::ScfTrain {
            graph,
            embeddings,
            features,
            hyper,
            out,
        } => {
            let graph: ContextGraph = json::read(&graph)?;
            let emb = scf::load_embeddings(&embeddings, &graph.categories)?;
            let regions = RegionFeatures::load(&features)?;
            let mut hyper: Hyper = match hyper {
                Some(p) => json::read(p)?,
                None => Hyper::default(),
            };
            if let Some(seed) = cli.seed {
                hyper.seed = seed;
            }
            let fit = scf::fit(&graph, &emb, &regions, &hyper)?;
            json::write(&out, &TrainedModel::new(&graph.categories, &fit))?;
            println!(
                "final loss {:.6}, training accuracy {:.4}",
                fit.loss_trace.last().copied().unwrap_or(f64::NAN),
                fit.train_accuracy
            );
        }
        Command::ScfProject {
            graph,
            weights,
            embeddings,
            features,
            out,
        } => {
            let graph: ContextGraph = json::read(&graph)?;
            let model: TrainedModel = json::read(&weights)?;
            if model.categories != graph.categories {
                return Err(Error::InvalidData("weights and graph list different categories".into()));
            }
            let emb = scf::load_embeddings(&embeddings, &graph.categories)?;
            let regions = RegionFeatures::load(&features)?;
            let space = scf::gcn_forward(&scf::normalize(&graph), &emb.matrix, &model.weights()?)?;
            let probs = scf::project(&space, &regions.features)?;
            json::write(&out, &ProbabilityArtifact::new(&graph.categories, &probs))?;
            println!("projected {} regions", regions.len());
        }
        Command::ScrDerive {
            annotations,
            rules,
            percentile,
            out,
        } => {
            let ds = load_dataset(&annotations)?;
            let rules = scr::load_rules(&rules)?;
            let derived = scr::derive_thresholds(&ds, &rules, percentile)?;
            scr::save_rules(&out, &derived)?;
            for r in &derived {
                if let Some(t) = r.overlap_threshold {
                    println!("{r}: {t}");
                }
            }
        }
        Command::ScrApply {
            detections,
            rules,
            masks,
            annotations,
            keep_threshold,
            candidate_floor,
            out,
        } => {
            let universe = masks.or(annotations).ok_or_else(|| {
                Error::config(
                    "--masks",
                    "pass --masks or --annotations to supply categories and images",
                )
            })?;
            let ds = load_dataset(&universe)?;
            let dets = dataset::load_detections(&detections, &ds)?;
            let rules = scr::load_rules(&rules)?;
            let params = ApplyParams {
                keep_threshold,
                candidate_floor,
            };
            let output = scr::apply(&dets, &rules, &SceneContext::new(&ds)?, &params)?;
            dataset::save_detections(&out, &output.detections)?;
            println!(
                "{} detections kept, {} promoted",
                output.detections.len(),
                output.promoted.len()
            );
        }
        Command::Evaluate {
            annotations,
            detections,
            metric,
            subset,
            iou,
            report,
        } => {
            let ds = load_dataset(&annotations)?;
            let dets = dataset::load_detections(&detections, &ds)?;
            let subsets = match metric {
                Metric::Map => vec![],
                Metric::Mr2 => vec![subset.into()],
            };
            let params = EvalParams {
                iou,
                ..EvalParams::default()
            };
            let r = eval::evaluate(&ds, &dets, &params, &subsets)?;
            json::write(&report, &r)?;
            match metric {
                Metric::Map => match r.map {
                    Some(m) => println!("mAP@{iou}: {m:.4}"),
                    None => println!("mAP@{iou}: undefined (no ground truth)"),
                },
                Metric::Mr2 => {
                    for m in &r.miss_rates {
                        match m.mr2 {
                            Some(v) => println!("MR-2 {} {:?}: {v:.4}", m.category, m.subset),
                            None => println!("MR-2 {} {:?}: undefined", m.category, m.subset),
                        }
                    }
                }
            }
        }
        Command::Run => {
            let path = cli
                .config
                .ok_or_else(|| Error::config("--config", "`run` needs a pipeline config"))?;
            let mut config = pipeline::parse_config(&path)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            let report = pipeline::run_pipeline(&config)?;
            for stage in &report.stages {
                println!("{:<5} {} artifact(s)", stage.stage, stage.artifacts.len());
            }
            println!("report: {}", config.out_dir().join(RUN_REPORT).display());
        }
        Command::Synth { spec, out_ann, out_det } => {
            let mut spec: SceneSpec = json::read(&spec)?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let (ds, dets) = synth::generate(&spec)?;
            dataset::save_annotations(&out_ann, &ds)?;
            dataset::save_detections(&out_det, &dets)?;
            println!("{} annotations, {} detections", ds.annotations().len(), dets.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
