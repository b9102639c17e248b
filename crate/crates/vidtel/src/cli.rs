//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use vidtel_core::broker::{Classifiers, ProviderMap};
use vidtel_core::features::{window_label, SUBPROFILE_WINDOWS};
use vidtel_core::ml::{
    cross_validate, forest_grid, info_gain_merit, tree_grid, tune_grid, Algorithm, AlgorithmParams, ConfusionMatrix,
    Dataset, MlError, MlpParams, TrainedModel, TreeParams,
};
use vidtel_core::traffgen::{generate_dataset, generate_trace, GenParams, StressTrace};

use crate::config::{engine_config, Config, GenerateConfig};
use crate::dataset_io::{read_dataset, write_dataset};
use crate::error::{Error, Result};
use crate::model_io::{read_model, write_model};
use crate::replay::{replay, Speed};
use crate::report::{analyze, read_verdict_log, write_analytics, write_replay_report};
use crate::trace::{read_truth_file, write_trace_file, write_truth_file, TraceHeader, TraceReader};

pub const IDENTIFIER_MODEL_FILE: &str = "identifier.model.json";
pub const RESOLUTION_MODEL_FILE: &str = "resolution.model.json";

#[derive(Debug, Parser)]
#[command(
    name = "vidtel",
    version,
    about = "Flow telemetry simulator and video traffic classifier"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled dataset, a mixed trace or the stress trace.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a trace through the switch, inspector and broker.
    Replay {
        trace: PathBuf,
        /// Directory holding identifier.model.json and resolution.model.json.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Provider map, `suffix<TAB>provider` per line.
        #[arg(long)]
        providers: Option<PathBuf>,
        /// Truth sidecar to score final verdicts against.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Speed::Max)]
        speed: Speed,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset file.
    Train {
        dataset: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate a parameter grid and rank it.
    Tune {
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = AlgorithmArg::Forest)]
        algorithm: AlgorithmArg,
        /// Forest depths, e.g. `1-12` or `3,5,9`.
        #[arg(long, default_value = "1-12")]
        depths: String,
        /// Forest attributes per split.
        #[arg(long, default_value = "1-6")]
        attrs: String,
        #[arg(long, default_value_t = 20)]
        trees: usize,
        /// Tree minimum leaf sizes.
        #[arg(long, default_value = "1,2,4,8,16")]
        min_leaves: String,
        /// MLP hidden unit counts.
        #[arg(long, default_value = "2,4,8,16")]
        hidden: String,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a confusion matrix from cross-validation or a saved model.
    Eval {
        dataset: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Score this model on the whole dataset instead of cross-validating.
        #[arg(long)]
        model_file: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytics tables from a replay verdict log.
    Report {
        verdicts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated accuracy per sub-profile window.
    AccuracyCurve {
        dataset: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average information-gain merit of each attribute.
    Merit {
        dataset: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Tree,
    Forest,
    Mlp,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Tree => Algorithm::Tree,
            AlgorithmArg::Forest => Algorithm::Forest,
            AlgorithmArg::Mlp => Algorithm::Mlp,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Forest)]
    pub algorithm: AlgorithmArg,
    /// Overrides as `key=value,...`, e.g. `depth=9,attrs=1,trees=100`.
    #[arg(long, default_value = "")]
    pub params: String,
}

impl ModelArgs {
    pub fn resolve(&self, data: &Dataset) -> Result<AlgorithmParams> {
        parse_params(self.algorithm.into(), &self.params, data)
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::usage(format!("bad value for {key}: {v:?}")))
}

/// Parameters for `algorithm`, starting from the operating defaults for the
/// dataset's class count and applying `key=value` overrides.
pub fn parse_params(algorithm: Algorithm, spec: &str, data: &Dataset) -> Result<AlgorithmParams> {
    let mut params = match algorithm {
        Algorithm::Tree => AlgorithmParams::Tree(TreeParams::default()),
        Algorithm::Forest if data.n_classes() > 2 => AlgorithmParams::default_resolution(),
        Algorithm::Forest => AlgorithmParams::default_identifier(),
        Algorithm::Mlp => AlgorithmParams::Mlp(MlpParams::default()),
    };
    for kv in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("parameter {kv:?} is not key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        match (&mut params, k) {
            (AlgorithmParams::Tree(p), "min_leaf") => p.min_leaf = parse_value(k, v)?,
            (AlgorithmParams::Tree(p), "depth") => p.max_depth = parse_value(k, v)?,
            (AlgorithmParams::Forest(p), "depth") => p.max_depth = parse_value(k, v)?,
            (AlgorithmParams::Forest(p), "attrs") => p.attrs_per_split = parse_value(k, v)?,
            (AlgorithmParams::Forest(p), "trees") => p.n_trees = parse_value(k, v)?,
            (AlgorithmParams::Forest(p), "min_leaf") => p.min_leaf = parse_value(k, v)?,
            (AlgorithmParams::Forest(p), "bootstrap") => p.bootstrap = parse_value(k, v)?,
            (AlgorithmParams::Mlp(p), "hidden") => p.hidden_units = parse_value(k, v)?,
            (AlgorithmParams::Mlp(p), "epochs") => p.epochs = parse_value(k, v)?,
            (AlgorithmParams::Mlp(p), "lr") => p.learning_rate = parse_value(k, v)?,
            _ => return Err(Error::usage(format!("unknown {} parameter {k:?}", algorithm.name()))),
        }
    }
    Ok(params)
}

/// `1-12`, `1,2,4` or a mix such as `1-3,8`.
pub fn parse_list(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (parse_value("range", a)?, parse_value("range", b)?);
                if a > b {
                    return Err(Error::usage(format!("empty range {part:?}")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_value("list", part)?),
        }
    }
    if out.is_empty() {
        return Err(Error::usage(format!("empty list {s:?}")));
    }
    Ok(out)
}

fn ml_error(e: MlError) -> Error {
    match e {
        MlError::BadParams(_) | MlError::TooFewInstances { .. } => Error::usage(e.to_string()),
        _ => Error::data(e.to_string()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn load_classifiers(dir: &Path) -> Result<Classifiers> {
    let id = read_model(&dir.join(IDENTIFIER_MODEL_FILE))?;
    let res = read_model(&dir.join(RESOLUTION_MODEL_FILE))?;
    Classifiers::new(id, res).map_err(|e| Error::data(e.to_string()))
}

pub fn confusion_text(c: &ConfusionMatrix) -> String {
    format!("{c}accuracy={:.4}\n", c.accuracy())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, seed, out } => {
            let cfg = GenerateConfig::from_config(&Config::load(&config)?, seed)?;
            create_dir(&out)?;
            match cfg {
                GenerateConfig::Dataset(d) => {
                    let sets = generate_dataset(&d, &GenParams::default());
                    write_dataset(&out.join("identifier.csv"), &sets.identifier)?;
                    write_dataset(&out.join("resolution.csv"), &sets.resolution)?;
                    log::info!(
                        "{} identifier and {} resolution instances",
                        sets.identifier.len(),
                        sets.resolution.len()
                    );
                }
                GenerateConfig::Trace(t) => {
                    let trace = generate_trace(&t, &GenParams::default()).map_err(|e| Error::usage(e.to_string()))?;
                    write_trace_file(&out.join("trace.txt"), TraceHeader::default(), trace.records)?;
                    write_truth_file(&out.join("truth.txt"), trace.truth)?;
                }
                GenerateConfig::Stress(s) => {
                    let trace = StressTrace::new(s).map_err(|e| Error::usage(e.to_string()))?;
                    write_truth_file(&out.join("truth.txt"), trace.truth())?;
                    let n = write_trace_file(&out.join("trace.txt"), TraceHeader::default(), trace)?;
                    log::info!("{n} stress records");
                }
            }
            Ok(())
        }
        Command::Replay {
            trace,
            models,
            config,
            providers,
            truth,
            speed,
            out,
        } => {
            let (engine_cfg, provider_path) = match &config {
                Some(p) => engine_config(&Config::load(p)?)?,
                None => engine_config(&Config::default())?,
            };
            let provider_path = providers.or(provider_path.map(PathBuf::from));
            let provider_map = match provider_path {
                Some(p) => {
                    let text =
                        std::fs::read_to_string(&p).map_err(|e| Error::usage(format!("{}: {e}", p.display())))?;
                    ProviderMap::parse(&text).map_err(|e| Error::usage(format!("{}: {e}", p.display())))?
                }
                None => ProviderMap::with_defaults(),
            };
            let classifiers = models.as_deref().map(load_classifiers).transpose()?;
            let truth = truth.as_deref().map(read_truth_file).transpose()?;
            let reader = TraceReader::open(&trace)?;
            let epoch = reader.header().start_epoch;
            let result = replay(reader, epoch, engine_cfg, provider_map, classifiers, speed)?;
            write_replay_report(&out, &result, truth.as_deref())
        }
        Command::Train {
            dataset,
            model,
            seed,
            out,
        } => {
            let data = read_dataset(&dataset)?;
            let params = model.resolve(&data)?;
            let m = TrainedModel::train(&data, params, seed).map_err(ml_error)?;
            log::info!("trained {}", m.describe());
            write_model(&out, &m)
        }
        Command::Tune {
            dataset,
            algorithm,
            depths,
            attrs,
            trees,
            min_leaves,
            hidden,
            folds,
            seed,
            out,
        } => {
            let data = read_dataset(&dataset)?;
            let grid = match algorithm {
                AlgorithmArg::Forest => forest_grid(parse_list(&depths)?, parse_list(&attrs)?, trees),
                AlgorithmArg::Tree => tree_grid(parse_list(&min_leaves)?),
                AlgorithmArg::Mlp => parse_list(&hidden)?
                    .into_iter()
                    .map(|h| {
                        AlgorithmParams::Mlp(MlpParams {
                            hidden_units: h,
                            ..MlpParams::default()
                        })
                    })
                    .collect(),
            };
            let rows = tune_grid(&data, &grid, folds, seed).map_err(ml_error)?;
            let mut text = String::new();
            for r in &rows {
                writeln!(text, "{r}").unwrap();
            }
            emit(out.as_deref(), &text)
        }
        Command::Eval {
            dataset,
            model,
            model_file,
            folds,
            seed,
            out,
        } => {
            let data = read_dataset(&dataset)?;
            let confusion = match model_file {
                Some(p) => {
                    let m = read_model(&p)?;
                    if m.class_names != data.class_names || m.attribute_names != data.attribute_names {
                        return Err(Error::data("model and dataset vocabularies differ"));
                    }
                    let mut c = ConfusionMatrix::new(&data.class_names);
                    for inst in &data.instances {
                        c.record(inst.label, m.predict(&inst.values).class);
                    }
                    c
                }
                None => {
                    let params = model.resolve(&data)?;
                    cross_validate(&data, &params, folds, seed).map_err(ml_error)?.confusion
                }
            };
            emit(out.as_deref(), &confusion_text(&confusion))
        }
        Command::Report { verdicts, out } => {
            let rows = read_verdict_log(&verdicts)?;
            let a = analyze(&rows)?;
            create_dir(&out)?;
            write_analytics(&out, &a)
        }
        Command::AccuracyCurve {
            dataset,
            model,
            folds,
            seed,
            out,
        } => {
            let data = read_dataset(&dataset)?;
            let text = accuracy_curve(&data, &model.resolve(&data)?, folds, seed)?;
            emit(out.as_deref(), &text)
        }
        Command::Merit {
            dataset,
            folds,
            seed,
            out,
        } => {
            let data = read_dataset(&dataset)?;
            if data.len() < folds {
                return Err(Error::usage(format!(
                    "{} instances cannot fill {folds} folds",
                    data.len()
                )));
            }
            let report = info_gain_merit(&data, folds, seed);
            let mut text = String::from("attribute\tmerit\n");
            for (name, score) in &report.scores {
                writeln!(text, "{name}\t{score:.6}").unwrap();
            }
            emit(out.as_deref(), &text)
        }
    }
}

/// `window<TAB>accuracy` rows, one per sub-profile window.
pub fn accuracy_curve(data: &Dataset, params: &AlgorithmParams, folds: usize, seed: u64) -> Result<String> {
    if data.instances.iter().any(|i| i.window.is_none()) {
        return Err(Error::usage("dataset lacks sub-profile window annotations"));
    }
    if let Some(i) = data
        .instances
        .iter()
        .find(|i| i.window.is_some_and(|w| w >= SUBPROFILE_WINDOWS.len()))
    {
        return Err(Error::data(format!("unknown window index {:?}", i.window)));
    }
    let cv = cross_validate(data, params, folds, seed).map_err(ml_error)?;
    let mut text = String::from("window\taccuracy\n");
    for (w, span) in SUBPROFILE_WINDOWS.iter().enumerate() {
        if let Some(acc) = cv.accuracy_where(data, |i| data.instances[i].window == Some(w)) {
            writeln!(text, "{}\t{acc:.4}", window_label(*span)).unwrap();
        }
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(&["x"], &["video", "nonvideo"])
    }

    #[test]
    fn params_override_defaults() {
        let p = parse_params(Algorithm::Forest, "depth=3, trees=7", &toy()).unwrap();
        let AlgorithmParams::Forest(f) = p else { panic!() };
        assert_eq!((f.max_depth, f.n_trees, f.attrs_per_split), (3, 7, 1));
        let e = parse_params(Algorithm::Tree, "attrs=2", &toy()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(parse_params(Algorithm::Mlp, "lr=x", &toy()).is_err());
        assert_eq!(p.to_string(), "depth=3,attrs=1,trees=7,min_leaf=1,bootstrap=true");
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list("1-3,8").unwrap(), [1, 2, 3, 8]);
        assert!(parse_list("3-1").is_err());
        assert!(parse_list("").is_err());
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["vidtel", "replay", "t.txt", "--out", "r", "--speed", "realtime"]).unwrap();
        assert!(matches!(
            cli.command,
            Command::Replay {
                speed: Speed::Realtime,
                ..
            }
        ));
        let err = Cli::try_parse_from(["vidtel", "train", "d.csv", "--out", "m", "--algorithm", "svm"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
