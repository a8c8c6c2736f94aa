use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use gram::datasets::{corpus_stats, default_split_sizes, generate, split_corpus, CorpusSpec, Family};
use gram::evaluation::{evaluate, EvalReport};
use gram::graph::{read_corpus, write_corpus};
use gram::model::{GramModel, ModelConfig, Variant};
use gram::sampler::{build_seed_bank, generate_many, Decoding, SampleOptions};
use gram::training::{save_history, Checkpoint, TrainConfig, Trainer};
use gram::LabeledGraph;

use crate::failure::Failure;
use crate::{DatasetArgs, EvalArgs, SampleArgs, StatsArgs, TrainArgs};

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_corpus(path: &Path) -> Result<Vec<LabeledGraph>, Failure> {
    let graphs = read_corpus(path).map_err(|e| match e {
        gram::Error::Io { .. } => Failure::Data(e.to_string()),
        _ => Failure::Data(format!("{}: {e}", path.display())),
    })?;
    if graphs.is_empty() {
        return Err(Failure::Data(format!("{}: corpus is empty", path.display())));
    }
    Ok(graphs)
}

/// Fails unless the directory `path` would be created in exists.
fn check_writable(path: &Path) -> Result<(), Failure> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => return Ok(()),
    };
    if parent.is_dir() {
        Ok(())
    } else {
        Err(Failure::Data(format!("output directory {} does not exist", parent.display())))
    }
}

fn echo<T: Serialize>(what: &str, value: &T) {
    eprintln!("{what}: {}", serde_json::to_string(value).expect("config serializes"));
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// `<dir>/<stem>.<part>.jsonl` for the corpus at `out`.
pub fn split_path(out: &Path, part: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    out.with_file_name(format!("{stem}.{part}.jsonl"))
}

fn parse_split(text: &str) -> Result<(usize, usize, usize), Failure> {
    let parts: Vec<&str> = text.split(',').collect();
    let bad = || Failure::Usage(format!("--split expects three comma-separated counts, got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let n: Vec<usize> = parts.iter().map(|p| p.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
    Ok((n[0], n[1], n[2]))
}

pub fn dataset(args: DatasetArgs) -> Result<(), Failure> {
    let mut spec = match &args.config {
        Some(p) => read_json::<CorpusSpec>(p)?,
        None => CorpusSpec::default(),
    };
    if let Some(f) = &args.family {
        spec.family = f.parse::<Family>().map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if let Some(v) = args.count {
        spec.count = v;
    }
    if let Some(v) = args.nmin {
        spec.n_min = v;
    }
    if let Some(v) = args.nmax {
        spec.n_max = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    spec.validate()?;
    let sizes = match &args.split {
        Some(s) => parse_split(s)?,
        None => default_split_sizes(spec.count),
    };
    if sizes.0 + sizes.1 + sizes.2 != spec.count {
        return Err(Failure::Usage(format!(
            "split {}+{}+{} does not add up to count {}",
            sizes.0, sizes.1, sizes.2, spec.count
        )));
    }
    check_writable(&args.out)?;
    echo("corpus spec", &spec);
    eprintln!("seed: {}", spec.seed);

    let graphs = generate(&spec)?;
    let (train, test, val) = split_corpus(&graphs, sizes, spec.seed)?;
    write_corpus(&args.out, &graphs)?;
    for (part, set) in [("train", &train), ("test", &test), ("val", &val)] {
        write_corpus(split_path(&args.out, part), set)?;
    }
    println!(
        "wrote {} graphs to {} (train {}, test {}, val {})",
        graphs.len(),
        args.out.display(),
        train.len(),
        test.len(),
        val.len()
    );
    Ok(())
}

/// Config file layout for `train`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
}

fn corpus_alphabets(graphs: &[LabeledGraph]) -> Result<(usize, usize), Failure> {
    let first = (graphs[0].node_alphabet(), graphs[0].edge_alphabet());
    for (i, g) in graphs.iter().enumerate() {
        if (g.node_alphabet(), g.edge_alphabet()) != first {
            return Err(Failure::Data(format!(
                "graph {} has alphabets ({}, {}) but graph 1 has ({}, {})",
                i + 1,
                g.node_alphabet(),
                g.edge_alphabet(),
                first.0,
                first.1
            )));
        }
    }
    Ok(first)
}

fn resolve_train(args: &TrainArgs, alphabets: (usize, usize)) -> Result<(ModelConfig, TrainConfig), Failure> {
    let file = match &args.config {
        Some(p) => read_json::<RunConfig>(p)?,
        None => RunConfig::default(),
    };
    let mut model = file.model.unwrap_or(ModelConfig {
        node_labels: alphabets.0,
        edge_labels: alphabets.1,
        ..ModelConfig::default()
    });
    let mut train = file.train.unwrap_or_default();
    if (model.node_labels, model.edge_labels) != alphabets {
        return Err(Failure::Data(format!(
            "config alphabets ({}, {}) do not match the corpus ({}, {})",
            model.node_labels, model.edge_labels, alphabets.0, alphabets.1
        )));
    }
    if let Some(v) = &args.variant {
        model.variant = v.parse::<Variant>().map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let overrides = [
        (&mut model.d_model, args.d_model),
        (&mut model.heads, args.heads),
        (&mut model.d_ff, args.d_ff),
        (&mut model.blocks, args.blocks),
        (&mut model.radius, args.radius),
        (&mut model.distance_cap, args.distance_cap),
        (&mut model.n_min, args.nmin),
        (&mut train.epochs, args.epochs),
        (&mut train.batch_size, args.batch_size),
    ];
    for (slot, value) in overrides {
        if let Some(v) = value {
            *slot = v;
        }
    }
    if let Some(v) = args.lr {
        train.learning_rate = v;
    }
    if let Some(v) = args.seed {
        train.seed = v;
    }
    model.validate()?;
    train.validate()?;
    Ok((model, train))
}

pub fn train(args: TrainArgs) -> Result<(), Failure> {
    let corpus = load_corpus(&args.corpus)?;
    let alphabets = corpus_alphabets(&corpus)?;
    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            let cfg = ckpt.model_config.clone();
            if (cfg.node_labels, cfg.edge_labels) != alphabets {
                return Err(Failure::Data("checkpoint alphabets do not match the corpus".into()));
            }
            let mut t = Trainer::from_checkpoint(ckpt)?;
            if let Some(e) = args.epochs {
                t.config.epochs = e;
            }
            t
        }
        None => {
            let (model, train) = resolve_train(&args, alphabets)?;
            Trainer::new(GramModel::new(model, train.seed)?, train)?
        }
    };
    let n_min = trainer.model.config().n_min;
    if !corpus.iter().any(|g| g.n() > n_min) {
        return Err(Failure::Data(format!("no graph in the corpus has more than {n_min} nodes")));
    }
    if args.save_every == Some(0) {
        return Err(Failure::Usage("--save-every must be positive".into()));
    }
    check_writable(&args.out)?;
    if let Some(h) = &args.history {
        check_writable(h)?;
    }
    echo("model config", trainer.model.config());
    echo("train config", &trainer.config);
    eprintln!("seed: {}", trainer.config.seed);

    trainer.train(&corpus, |t| {
        if let Some(r) = t.history.last() {
            log::info!("epoch {} nll {:.4} alpha {:.3} beta {:.3}", r.epoch, r.mean_nll, r.mean_alpha, r.mean_beta);
        }
        if args.save_every.is_some_and(|k| t.epoch() % k == 0) {
            t.checkpoint().save(&args.out)?;
        }
        Ok(())
    })?;
    trainer.checkpoint().save(&args.out)?;
    if let Some(h) = &args.history {
        save_history(h, &trainer.history)?;
    }
    match trainer.history.last() {
        Some(r) => println!("trained {} epochs, final mean NLL {:.4}", r.epoch, r.mean_nll),
        None => println!("nothing to train: checkpoint already at epoch {}", trainer.epoch()),
    }
    Ok(())
}

pub fn sample(args: SampleArgs) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(&args.checkpoint).map_err(|e| Failure::Data(format!("{}: {e}", args.checkpoint.display())))?;
    let model = ckpt.model()?;
    let corpus = load_corpus(&args.train)?;
    let cfg = model.config().clone();
    if corpus_alphabets(&corpus)? != (cfg.node_labels, cfg.edge_labels) {
        return Err(Failure::Data("checkpoint alphabets do not match the training corpus".into()));
    }
    if args.count == 0 || args.seeds_per_graph == 0 {
        return Err(Failure::Usage("--count and --seeds-per-graph must be positive".into()));
    }
    if args.max_nodes <= cfg.n_min {
        return Err(Failure::Usage(format!("--max-nodes must exceed the seed size {}", cfg.n_min)));
    }
    check_writable(&args.out)?;
    let options = SampleOptions {
        max_nodes: args.max_nodes,
        decoding: if args.argmax { Decoding::Argmax } else { Decoding::Sample },
    };
    echo("model config", &cfg);
    echo("sample options", &options);
    eprintln!("seed: {}", args.seed);

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let bank = build_seed_bank(&corpus, cfg.n_min, args.seeds_per_graph, &mut rng)
        .map_err(|e| Failure::Data(e.to_string()))?;
    let generated = generate_many(&model, &bank, args.count, options, args.seed)?;
    let graphs: Vec<LabeledGraph> = generated.iter().map(|g| g.graph.clone()).collect();
    write_corpus(&args.out, &graphs)?;
    let truncated = generated.iter().filter(|g| g.truncated).count();
    let forced: usize = generated.iter().map(|g| g.forced_steps).sum();
    let mean_n = graphs.iter().map(|g| g.n() as f64).sum::<f64>() / graphs.len() as f64;
    println!(
        "wrote {} graphs to {} (mean nodes {mean_n:.1}, truncated {truncated}, forced edge steps {forced})",
        graphs.len(),
        args.out.display()
    );
    Ok(())
}

fn report_table(r: &EvalReport) -> String {
    let rows = [
        ("gk_mmd2", r.gk_mmd2),
        ("degree_mmd2", r.degree_mmd2),
        ("clustering_mmd2", r.clustering_mmd2),
        ("orbit_mmd2", r.orbit_mmd2),
        ("unique_ratio", r.unique_ratio),
        ("novel_ratio", r.novel_ratio),
    ];
    let mut out = String::new();
    for (name, v) in rows {
        out.push_str(&format!("{name:<16} {v:.6}\n"));
    }
    out.push_str(&format!("{:<16} {}\n{:<16} {}\n", "generated", r.generated, "reference", r.reference));
    out
}

pub fn eval(args: EvalArgs) -> Result<(), Failure> {
    let generated = load_corpus(&args.generated)?;
    let reference = load_corpus(&args.reference)?;
    let train = match &args.train {
        Some(p) => load_corpus(p)?,
        None => Vec::new(),
    };
    for p in args.json.iter().chain(&args.csv) {
        check_writable(p)?;
    }
    eprintln!("seed: {}", args.seed);
    let report = evaluate(&generated, &reference, &train, args.seed)?;
    print!("{}", report_table(&report));
    if let Some(p) = &args.json {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        write_text(p, &format!("{text}\n"))?;
    }
    if let Some(p) = &args.csv {
        write_text(p, &format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()))?;
    }
    Ok(())
}

pub fn stats(args: StatsArgs) -> Result<(), Failure> {
    let corpus = load_corpus(&args.corpus)?;
    eprintln!("seed: {}", args.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let s = corpus_stats(&corpus, &mut rng)?;
    println!("{:<12} {}", "graphs", s.graphs);
    println!("{:<12} {:.2}", "mean_nodes", s.mean_nodes);
    println!("{:<12} {:.2}", "mean_edges", s.mean_edges);
    println!("{:<12} {:.3}", "mean_degree", s.mean_degree);
    println!("{:<12} {}", "max_degree", s.max_degree);
    println!("{:<12} {:.3}", "mean_alpha", s.mean_alpha);
    println!("{:<12} {:.3}", "mean_beta", s.mean_beta);
    println!("{:<12} {}", "max_beta", s.max_beta);
    Ok(())
}
