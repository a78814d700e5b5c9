use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use cusprune::corpus::{build_dimension_corpus, load_documents};
use cusprune::eval::{bench_speed, expert_report, tokenize_docs, EvalData, EvalDataset};
use cusprune::io::{read_string, write_file_atomic};
use cusprune::prune::{
    aggressive_plan, calibrate_impacts, layer_baseline_plan, plan_for_tau, score_corpora, CalibrateOptions,
};
use cusprune::relevance::irrelevant_set;
use cusprune::{
    enumerate_neurons, Bundle, DimensionCorpus, DimensionSpec, McqItem, NeuronClass, PrunePlan, ScoreConfig, SummItem,
};
use serde::de::DeserializeOwned;

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;

fn model_arg() -> Arg {
    Arg::new("model")
        .long("model")
        .value_name("DIR")
        .value_parser(value_parser!(PathBuf))
        .required(true)
        .help("Model bundle directory")
}

fn out_arg(help: &'static str) -> Arg {
    Arg::new("out")
        .long("out")
        .value_name("PATH")
        .value_parser(value_parser!(PathBuf))
        .required(true)
        .help(help)
}

fn corpus_args() -> [Arg; 3] {
    [
        Arg::new("corpus")
            .long("corpus")
            .value_name("FILE")
            .value_parser(value_parser!(PathBuf))
            .action(ArgAction::Append)
            .help("JSONL documents; applies to the --dim flags that follow it"),
        Arg::new("dim")
            .long("dim")
            .value_name("AXIS=VALUE[,AXIS=VALUE]")
            .action(ArgAction::Append)
            .help("Dimension to specialize for, e.g. lang=de or domain=medical,task=mcq"),
        Arg::new("max-tokens")
            .long("max-tokens")
            .value_name("N")
            .value_parser(value_parser!(usize))
            .default_value("512")
            .help("Tokens scored per document"),
    ]
}

fn cli() -> Command {
    Command::new("cusprune")
        .about("Dimension-specific structured pruning for decoder-only transformers")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("threads")
                .long("threads")
                .value_name("N")
                .value_parser(value_parser!(usize))
                .global(true)
                .help("Worker thread cap"),
        )
        .subcommand(
            Command::new("score")
                .about("Score corpora and write impact matrices and irrelevant sets")
                .arg(model_arg())
                .args(corpus_args())
                .arg(
                    Arg::new("tau")
                        .long("tau")
                        .value_name("PERCENT")
                        .value_parser(value_parser!(f64))
                        .default_value("25")
                        .help("Per-document percentile for the irrelevant sets"),
                )
                .arg(out_arg("Output directory")),
        )
        .subcommand(
            Command::new("prune")
                .about("Compute a pruning plan")
                .arg(model_arg())
                .args(corpus_args())
                .arg(
                    Arg::new("sigma")
                        .long("sigma")
                        .value_name("RATIO")
                        .value_parser(value_parser!(f64))
                        .help("Target fraction of parameters to remove"),
                )
                .arg(
                    Arg::new("layers")
                        .long("layers")
                        .value_name("N")
                        .value_parser(value_parser!(usize))
                        .help("Remove the N least important layers first; without --sigma, remove only those layers"),
                )
                .arg(
                    Arg::new("tau")
                        .long("tau")
                        .value_name("PERCENT")
                        .value_parser(value_parser!(f64))
                        .help("Use a fixed percentile instead of calibrating to --sigma"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_name("INT")
                        .value_parser(value_parser!(u64))
                        .help("Recorded in the plan provenance"),
                )
                .arg(
                    Arg::new("force-closest")
                        .long("force-closest")
                        .action(ArgAction::SetTrue)
                        .help("Accept the closest ratio when the tolerance cannot be met"),
                )
                .arg(out_arg("Plan JSON path")),
        )
        .subcommand(
            Command::new("apply")
                .about("Apply a plan and write the pruned bundle")
                .arg(model_arg())
                .arg(
                    Arg::new("plan")
                        .long("plan")
                        .value_name("FILE")
                        .value_parser(value_parser!(PathBuf))
                        .required(true),
                )
                .arg(out_arg("Pruned bundle directory")),
        )
        .subcommand(
            Command::new("eval")
                .about("Compare a dense and a pruned bundle")
                .arg(model_arg())
                .arg(path_arg("pruned", "DIR", "Pruned bundle directory").required(true))
                .arg(path_arg("expert", "FILE", "JSONL documents from the target dimension"))
                .arg(path_arg("general", "FILE", "JSONL documents from other dimensions"))
                .arg(path_arg("mcq", "FILE", "JSONL multiple-choice items"))
                .arg(path_arg("summ", "FILE", "JSONL summarization items"))
                .arg(path_arg("plan", "FILE", "Plan recorded in the report"))
                .arg(
                    Arg::new("max-tokens")
                        .long("max-tokens")
                        .value_name("N")
                        .value_parser(value_parser!(usize))
                        .default_value("512"),
                )
                .arg(out_arg("Report JSON path")),
        )
        .subcommand(
            Command::new("bench")
                .about("Time a dense and a pruned bundle on the same token streams")
                .arg(model_arg())
                .arg(path_arg("pruned", "DIR", "Pruned bundle directory").required(true))
                .arg(path_arg("corpus", "FILE", "JSONL documents to time on").required(true))
                .arg(
                    Arg::new("repetitions")
                        .long("repetitions")
                        .value_name("N")
                        .value_parser(value_parser!(usize))
                        .default_value("5"),
                )
                .arg(out_arg("Timing JSON path")),
        )
        .subcommand(
            Command::new("inspect")
                .about("Summarize a bundle directory or a plan file")
                .arg(
                    Arg::new("path")
                        .value_name("PATH")
                        .value_parser(value_parser!(PathBuf))
                        .required(true),
                ),
        )
}

fn path_arg(name: &'static str, value: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name(value)
        .value_parser(value_parser!(PathBuf))
        .help(help)
}

fn path(m: &ArgMatches, name: &str) -> PathBuf {
    m.get_one::<PathBuf>(name).expect("required by clap").clone()
}

/// Pair every `--dim` with the `--corpus` given before it.
fn dimension_corpora(m: &ArgMatches) -> Result<Vec<DimensionCorpus>> {
    let dims: Vec<(usize, &String)> = match (m.indices_of("dim"), m.get_many::<String>("dim")) {
        (Some(i), Some(v)) => i.zip(v).collect(),
        _ => bail!(cusprune::Error::Invalid("at least one dimension required".into())),
    };
    let corpora: Vec<(usize, &PathBuf)> = match (m.indices_of("corpus"), m.get_many::<PathBuf>("corpus")) {
        (Some(i), Some(v)) => i.zip(v).collect(),
        _ => bail!(cusprune::Error::Invalid("--corpus is required".into())),
    };
    let mut loaded = Vec::with_capacity(corpora.len());
    for (_, p) in &corpora {
        loaded.push(load_documents(p)?);
    }
    let mut out = Vec::with_capacity(dims.len());
    for (idx, text) in dims {
        let owner = corpora
            .iter()
            .rposition(|(ci, _)| *ci < idx)
            .ok_or_else(|| cusprune::Error::Invalid(format!("--dim {text} comes before any --corpus")))?;
        let spec: DimensionSpec = text.parse()?;
        let corpus = build_dimension_corpus(&loaded[owner], &spec)?;
        for w in corpus.variety_warnings() {
            log::warn!("{w}");
        }
        log::info!(
            "{}: {} documents from {}",
            corpus.label(),
            corpus.len(),
            corpora[owner].1.display()
        );
        out.push(corpus);
    }
    Ok(out)
}

fn file_name_for(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_score(m: &ArgMatches) -> Result<()> {
    let corpora = dimension_corpora(m)?;
    let bundle = Bundle::load(path(m, "model"))?;
    let out = path(m, "out");
    let max_tokens = *m.get_one::<usize>("max-tokens").unwrap();
    let cfg = ScoreConfig {
        tau: *m.get_one::<f64>("tau").unwrap(),
        max_tokens_per_doc: max_tokens,
    };
    cfg.validate()?;
    let universe = enumerate_neurons(&bundle.config)?;
    let impacts = score_corpora(
        &bundle.config,
        &bundle.weights,
        &bundle.vocab,
        &corpora,
        &universe,
        max_tokens,
    )?;
    std::fs::create_dir_all(&out).map_err(|e| cusprune::Error::io(&out, e))?;
    for m in &impacts {
        let name = file_name_for(&m.dimension);
        m.save(&out.join(format!("{name}.impacts.bin")))?;
        let set = irrelevant_set(m, &universe, &cfg)?;
        set.save(&out.join(format!("{name}.irrelevant.txt")))?;
        println!(
            "{}: {} documents, {} irrelevant at tau {}",
            m.dimension,
            m.n_docs(),
            set.len(),
            cfg.tau
        );
    }
    Ok(())
}

fn cmd_prune(m: &ArgMatches) -> Result<()> {
    let corpora = dimension_corpora(m)?;
    let sigma = m.get_one::<f64>("sigma").copied();
    let tau = m.get_one::<f64>("tau").copied();
    let layers = m.get_one::<usize>("layers").copied();
    let seed = m.get_one::<u64>("seed").copied();
    let max_tokens = *m.get_one::<usize>("max-tokens").unwrap();
    if tau.is_some() && (sigma.is_some() || layers.is_some()) {
        bail!(cusprune::Error::Invalid(
            "--tau cannot be combined with --sigma or --layers".into()
        ));
    }
    if sigma.is_none() && tau.is_none() && layers.is_none() {
        bail!(cusprune::Error::Invalid(
            "one of --sigma, --tau or --layers is required".into()
        ));
    }
    let bundle = Bundle::load(path(m, "model"))?;
    let (c, w, v) = (&bundle.config, &bundle.weights, &bundle.vocab);
    let options = CalibrateOptions {
        force_closest: m.get_flag("force-closest"),
        max_tokens_per_doc: max_tokens,
        seed,
        ..CalibrateOptions::default()
    };
    let plan = match (sigma, tau, layers) {
        (_, Some(tau), _) => {
            ScoreConfig {
                tau,
                max_tokens_per_doc: max_tokens,
            }
            .validate()?;
            let universe = enumerate_neurons(c)?;
            let impacts = score_corpora(c, w, v, &corpora, &universe, max_tokens)?;
            plan_for_tau(&universe, &impacts, tau, seed)?
        }
        (Some(sigma), None, Some(n)) => aggressive_plan(c, w, v, &corpora, sigma, n, &options)?,
        (None, None, Some(n)) => layer_baseline_plan(c, w, v, &corpora, n, &options)?,
        (Some(sigma), None, None) => {
            let universe = enumerate_neurons(c)?;
            let impacts = score_corpora(c, w, v, &corpora, &universe, max_tokens)?;
            calibrate_impacts(&universe, &impacts, sigma, &options)?
        }
        (None, None, None) => unreachable!("checked above"),
    };
    let out = path(m, "out");
    plan.save(&out)?;
    println!(
        "plan: {} units, achieved ratio {:.6} at tau {}, {} of {} parameters",
        plan.len(),
        plan.achieved_ratio,
        plan.tau,
        plan.provenance.removed_params,
        plan.provenance.total_params
    );
    Ok(())
}

fn cmd_apply(m: &ArgMatches) -> Result<()> {
    let bundle = Bundle::load(path(m, "model"))?;
    let plan = PrunePlan::load(&path(m, "plan"))?;
    let (config, weights) = cusprune::apply_plan(&bundle.config, &bundle.weights, &plan)?;
    let pruned = Bundle {
        config,
        weights,
        vocab: bundle.vocab,
    };
    pruned.save(path(m, "out"))?;
    println!(
        "parameters: {} -> {}",
        bundle.config.param_count(),
        pruned.config.param_count()
    );
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(p: &Path) -> Result<Vec<T>> {
    let text = read_string(p)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                anyhow!(cusprune::Error::Parse {
                    line: i + 1,
                    message: e.to_string()
                })
                .context(p.display().to_string())
            })
        })
        .collect()
}

fn cmd_eval(m: &ArgMatches) -> Result<()> {
    let mut datasets = Vec::new();
    for name in ["expert", "general"] {
        if let Some(p) = m.get_one::<PathBuf>(name) {
            datasets.push(EvalDataset {
                name: name.into(),
                data: EvalData::Corpus(load_documents(p)?),
            });
        }
    }
    if let Some(p) = m.get_one::<PathBuf>("mcq") {
        datasets.push(EvalDataset {
            name: "mcq".into(),
            data: EvalData::Mcq(read_jsonl::<McqItem>(p)?),
        });
    }
    if let Some(p) = m.get_one::<PathBuf>("summ") {
        datasets.push(EvalDataset {
            name: "summ".into(),
            data: EvalData::Summ(read_jsonl::<SummItem>(p)?),
        });
    }
    if datasets.is_empty() {
        bail!(cusprune::Error::Invalid(
            "at least one of --expert, --general, --mcq, --summ required".into()
        ));
    }
    let dense = Bundle::load(path(m, "model"))?;
    let pruned = Bundle::load(path(m, "pruned"))?;
    let plan = m.get_one::<PathBuf>("plan").map(|p| p.display().to_string());
    let report = expert_report(
        &dense,
        &pruned,
        &datasets,
        plan,
        *m.get_one::<usize>("max-tokens").unwrap(),
    )?;
    write_file_atomic(&path(m, "out"), report.to_json()?.as_bytes())?;
    for d in &report.datasets {
        let r = d.retention.map_or("n/a".into(), |r| format!("{r:.2}%"));
        println!("{}: dense {:.4} pruned {:.4} retention {r}", d.name, d.dense, d.pruned);
    }
    Ok(())
}

fn cmd_bench(m: &ArgMatches) -> Result<()> {
    let dense = Bundle::load(path(m, "model"))?;
    let pruned = Bundle::load(path(m, "pruned"))?;
    let docs = load_documents(&path(m, "corpus"))?;
    let streams = tokenize_docs(
        &dense.vocab,
        &docs,
        dense.config.max_seq_len.min(pruned.config.max_seq_len),
    );
    let reps = *m.get_one::<usize>("repetitions").unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let t = pool.install(|| {
        bench_speed(
            &dense.config,
            &dense.weights,
            &pruned.config,
            &pruned.weights,
            &streams,
            reps,
        )
    })?;
    let mut json = serde_json::to_string_pretty(&t)?;
    json.push('\n');
    write_file_atomic(&path(m, "out"), json.as_bytes())?;
    println!(
        "speedup {:.3} ({:.0} vs {:.0} tokens/s), FLOP ratio {:.3}",
        t.speedup, t.pruned_tokens_per_sec, t.dense_tokens_per_sec, t.flop_ratio
    );
    Ok(())
}

fn cmd_inspect(m: &ArgMatches) -> Result<()> {
    let p = path(m, "path");
    if p.is_dir() {
        let b = Bundle::load(&p)?;
        let c = &b.config;
        println!("bundle: {}", p.display());
        println!("fingerprint: {}", b.fingerprint()?);
        println!(
            "layers: {}  d_model: {}  head_dim: {}  vocab: {}  max_seq_len: {}",
            c.n_layers, c.d_model, c.head_dim, c.vocab_size, c.max_seq_len
        );
        for l in 0..c.n_layers {
            let s = c.layer_shape(l);
            println!(
                "  layer {l}: d_ff {} v_dims {:?} params {}",
                s.d_ff,
                s.v_dims,
                c.layer_param_count(l)
            );
        }
        for (k, v) in &c.metadata {
            println!("{k}: {v}");
        }
        println!("parameters: {}", c.param_count());
    } else {
        let plan = PrunePlan::load(&p)?;
        println!("plan: {}", p.display());
        println!("fingerprint: {}", plan.fingerprint);
        println!(
            "sigma: {}  tau: {}  achieved: {}",
            plan.sigma, plan.tau, plan.achieved_ratio
        );
        for class in [
            NeuronClass::LayerUnit,
            NeuronClass::AttnHead,
            NeuronClass::AttnValueChannel,
            NeuronClass::FfnChannel,
        ] {
            let n = plan.neurons().filter(|n| n.class == class).count();
            if n > 0 {
                println!("  {class:?}: {n}");
            }
        }
        for d in &plan.provenance.dimensions {
            println!(
                "  dimension {}: {} documents, {} irrelevant",
                d.dimension, d.documents, d.irrelevant
            );
        }
        println!(
            "removed parameters: {} of {}",
            plan.provenance.removed_params, plan.provenance.total_params
        );
    }
    Ok(())
}

fn run(m: &ArgMatches) -> Result<()> {
    if let Some(&n) = m.get_one::<usize>("threads") {
        if n == 0 {
            bail!(cusprune::Error::Invalid("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match m.subcommand() {
        Some(("score", s)) => cmd_score(s),
        Some(("prune", s)) => cmd_prune(s),
        Some(("apply", s)) => cmd_apply(s),
        Some(("eval", s)) => cmd_eval(s),
        Some(("bench", s)) => cmd_bench(s),
        Some(("inspect", s)) => cmd_inspect(s),
        _ => unreachable!("subcommand required"),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<cusprune::Error>() {
            return if e.is_io() { EXIT_IO } else { EXIT_VALIDATION };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CUSPRUNE_LOG", "warn")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
