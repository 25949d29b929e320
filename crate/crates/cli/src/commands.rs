//! Handlers for the pipeline subcommands. Each one resolves its
//! configuration (flags over config file over defaults), runs the stage, and
//! stamps every artifact with the resolved settings and seed.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use serde_json::json;

use ngd_core::artifact::{save_json, Provenance};
use ngd_core::cnn;
use ngd_core::corpus::{
    generate_synth, read_corpus, write_corpus, write_phrases, Document, Vocabulary,
};
use ngd_core::eval::{self, CorpusSource, PipelineConfig, TopK};
use ngd_core::gp::{self, default_scale_grid, median_heuristic, KernelConfig};
use ngd_core::linalg::Matrix;
use ngd_core::ngram::{
    build_dictionary, presence_vector, read_dictionary, write_dictionary, write_presence,
    NgramDictionary, PresenceVector,
};
use ngd_core::nnls::DEFAULT_TOL;
use ngd_core::reduce::{self, fit_linear_map, read_map, select_top_k, write_ranking};

use crate::artifacts::{load_selected, save_selected, write_meta, ExplanationArtifact};
use crate::config::{auto_kernel, default_synth_spec, NgramSection};
use crate::{
    runtime, usage, ClassifyArgs, CliResult, EvaluateArgs, ExplainArgs, FeaturizeArgs, FitMapArgs,
    Global, ReduceArgs, SynthArgs, TrainCnnArgs,
};

/// Decouples the hold-out shuffle stream from network initialization, which
/// consumes the raw seed.
const HOLDOUT_SALT: u64 = 0x517c_c1b7_2722_0a95;

fn provenance(command: &str, seed: u64, config: impl Serialize) -> CliResult<Provenance> {
    Ok(Provenance { command: command.to_string(), seed, config: serde_json::to_value(config)? })
}

/// Error adapter naming the file a failed operation was about.
fn at<E: Into<anyhow::Error>>(path: &Path) -> impl FnOnce(E) -> crate::CliError + '_ {
    move |e| crate::CliError::Runtime(e.into().context(path.display().to_string()))
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Smallest label range covering the corpus.
fn class_count(docs: &[Document]) -> usize {
    docs.iter().map(|d| d.label).max().map_or(0, |m| m + 1)
}

fn labels(docs: &[Document]) -> Vec<usize> {
    docs.iter().map(|d| d.label).collect()
}

/// Splits rows into (train, held-out) with per-class proportions, keeping at
/// least one training row per class. Deterministic given the seed.
fn stratified_holdout(
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> CliResult<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(usage(format!("validation fraction must be in (0, 1), got {fraction}")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ HOLDOUT_SALT);
    let mut held = Vec::new();
    for members in by_class.values() {
        let mut rows = members.clone();
        rows.shuffle(&mut rng);
        let n = rows.len();
        let take = if n <= 1 {
            0
        } else {
            ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
        };
        held.extend(rows.into_iter().take(take));
    }
    if held.is_empty() {
        return Err(runtime("corpus too small to hold out a validation split"));
    }
    held.sort_unstable();
    let train = (0..labels.len()).filter(|i| held.binary_search(i).is_err()).collect();
    Ok((train, held))
}

fn subset(docs: &[Document], rows: &[usize]) -> Vec<Document> {
    rows.iter().map(|&i| docs[i].clone()).collect()
}

fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    let picked: Vec<Vec<f64>> = rows.iter().map(|&i| m.row(i).to_vec()).collect();
    Matrix::from_rows(&picked)
}

pub fn synth(global: &Global, args: &SynthArgs) -> CliResult<()> {
    let mut spec = global.config.synth.clone().unwrap_or_else(default_synth_spec);
    if let Some(v) = args.classes {
        spec.num_classes = v;
    }
    if let Some(v) = args.docs_per_class {
        spec.docs_per_class = v;
    }
    if let Some(v) = args.doc_length {
        spec.doc_length = v;
    }
    if let Some(v) = args.phrases_per_class {
        spec.phrases_per_class = v;
    }
    if let Some(v) = args.phrase_length {
        spec.phrase_length = v;
    }
    if let Some(v) = args.filler_vocab {
        spec.filler_vocab_size = v;
    }
    if let Some(v) = args.noise {
        spec.noise_rate = v;
    }
    spec.seed = global.seed_or(spec.seed);

    let corpus = generate_synth(&spec)?;
    let prov = provenance("synth", spec.seed, &spec)?;

    write_corpus(&args.out, &corpus.docs).map_err(at(&args.out))?;
    write_meta(&args.out, "corpus", &prov)?;
    let phrases_path =
        args.phrases_out.clone().unwrap_or_else(|| args.out.with_extension("phrases.jsonl"));
    write_phrases(&phrases_path, &corpus.phrases).map_err(at(&phrases_path))?;
    write_meta(&phrases_path, "phrases", &prov)?;

    println!(
        "wrote {} documents ({} classes) to {} and phrases to {}",
        corpus.docs.len(),
        spec.num_classes,
        args.out.display(),
        phrases_path.display()
    );
    Ok(())
}

pub fn train_cnn(global: &Global, args: &TrainCnnArgs) -> CliResult<()> {
    let mut cfg = global.config.cnn.clone().unwrap_or_default();
    if let Some(v) = args.embed_dim {
        cfg.embed_dim = v;
    }
    if let Some(v) = &args.widths {
        cfg.filter_widths = v.clone();
    }
    if let Some(v) = args.filters {
        cfg.filters_per_module = v;
    }
    if let Some(v) = args.l2 {
        cfg.l2_coeff = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.patience {
        cfg.patience = v;
    }
    cfg.seed = global.seed_or(cfg.seed);
    let vocab_min_count =
        args.vocab_min_count.or(global.config.vocab_min_count).unwrap_or(1);
    let val_fraction = args.val_fraction.unwrap_or(0.1);

    let docs = read_corpus(&args.corpus).map_err(at(&args.corpus))?;
    let num_classes = class_count(&docs);
    if num_classes < 2 {
        return Err(runtime("corpus has a single class; nothing to classify"));
    }
    let (train_rows, val_rows) = stratified_holdout(&labels(&docs), val_fraction, cfg.seed)?;
    let train_docs = subset(&docs, &train_rows);
    let val_docs = subset(&docs, &val_rows);

    let vocab = ngd_core::corpus::build_vocab(&train_docs, vocab_min_count)?;
    let (model, log) = cnn::train(&train_docs, &val_docs, &vocab, num_classes, &cfg)?;

    let prov = provenance(
        "train-cnn",
        cfg.seed,
        json!({
            "corpus": path_str(&args.corpus),
            "cnn": cfg,
            "vocab_min_count": vocab_min_count,
            "val_fraction": val_fraction,
        }),
    )?;
    cnn::save_model(&args.model_out, &model, &vocab, Some(prov.clone()))
        .map_err(at(&args.model_out))?;
    if let Some(log_path) = &args.log_out {
        cnn::write_training_log(log_path, &log).map_err(at(log_path))?;
        write_meta(log_path, "training-log", &prov)?;
    }

    let best = log.iter().map(|e| e.val_accuracy).fold(f64::NEG_INFINITY, f64::max);
    println!(
        "trained {} epochs, best validation accuracy {:.4}, model in {}",
        log.len(),
        best,
        args.model_out.display()
    );
    Ok(())
}

pub fn featurize(global: &Global, args: &FeaturizeArgs) -> CliResult<()> {
    let section = global.config.ngram.clone().unwrap_or_default();
    let ngram = NgramSection {
        min: args.ngram_min.unwrap_or(section.min),
        max: args.ngram_max.unwrap_or(section.max),
        min_df: args.min_df.unwrap_or(section.min_df),
    };
    let docs = read_corpus(&args.corpus).map_err(at(&args.corpus))?;

    let seed = global.seed_or(0);
    let (dict, dict_desc) = match (&args.dict_in, &args.dict_out) {
        (Some(path), _) => (read_dictionary(path).map_err(at(path))?, path_str(path)),
        (None, Some(path)) => {
            let dict = build_dictionary(&docs, ngram.min, ngram.max, ngram.min_df)?;
            let prov = provenance(
                "featurize",
                seed,
                json!({
                    "corpus": path_str(&args.corpus),
                    "ngram_min": ngram.min,
                    "ngram_max": ngram.max,
                    "min_df": ngram.min_df,
                }),
            )?;
            write_dictionary(path, &dict).map_err(at(path))?;
            write_meta(path, "dictionary", &prov)?;
            (dict, path_str(path))
        }
        (None, None) => {
            return Err(usage("either --dict-in or --dict-out is required"));
        }
    };

    if let Some(presence_path) = &args.presence_out {
        let rows: Vec<PresenceVector> =
            docs.iter().map(|d| presence_vector(d, &dict)).collect();
        let prov = provenance(
            "featurize",
            seed,
            json!({ "corpus": path_str(&args.corpus), "dictionary": dict_desc }),
        )?;
        write_presence(presence_path, &rows).map_err(at(presence_path))?;
        write_meta(presence_path, "presence", &prov)?;
        println!(
            "dictionary of {} n-grams; presence rows for {} documents in {}",
            dict.len(),
            rows.len(),
            presence_path.display()
        );
    } else {
        println!("dictionary of {} n-grams", dict.len());
    }
    Ok(())
}

/// Encodes every document through the model's vocabulary and stacks the
/// internal representations as matrix rows.
fn representations(docs: &[Document], model: &cnn::CnnModel, vocab: &Vocabulary) -> Matrix {
    let rows: Vec<Vec<f64>> =
        docs.iter().map(|d| model.representation(&vocab.encode(&d.tokens))).collect();
    Matrix::from_rows(&rows)
}

fn presence_rows(docs: &[Document], dict: &NgramDictionary) -> Vec<PresenceVector> {
    docs.iter().map(|d| presence_vector(d, dict)).collect()
}

pub fn fit_map(global: &Global, args: &FitMapArgs) -> CliResult<()> {
    let tol = args.tol.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0) {
        return Err(usage(format!("tolerance must be positive, got {tol}")));
    }
    let docs = read_corpus(&args.corpus).map_err(at(&args.corpus))?;
    let (model, vocab, _) = cnn::load_model(&args.model).map_err(at(&args.model))?;
    let dict = Arc::new(read_dictionary(&args.dict).map_err(at(&args.dict))?);

    let presence = reduce::presence_matrix(&presence_rows(&docs, &dict))?;
    let reps = representations(&docs, &model, &vocab);
    let map = fit_linear_map(&presence, &reps, dict, tol)?;

    let seed = global.seed_or(0);
    let prov = provenance(
        "fit-map",
        seed,
        json!({
            "corpus": path_str(&args.corpus),
            "model": path_str(&args.model),
            "dict": path_str(&args.dict),
            "tol": tol,
        }),
    )?;
    reduce::write_map(&args.map_out, &map).map_err(at(&args.map_out))?;
    write_meta(&args.map_out, "linear-map", &prov)?;

    let d = map.diagnostics();
    println!(
        "fit {}x{} map: objective {:.6e}, stationarity residual {:.3e}",
        map.rep_dim(),
        map.num_features(),
        d.objective,
        d.kkt_residual
    );
    Ok(())
}

pub fn reduce(global: &Global, args: &ReduceArgs) -> CliResult<()> {
    let top = match (args.top_k, args.top_fraction) {
        (Some(k), None) => TopK::Count(k),
        (None, Some(f)) => TopK::Fraction(f),
        (None, None) => global.config.top_k.unwrap_or(TopK::Fraction(0.1)),
        (Some(_), Some(_)) => unreachable!("flags conflict"),
    };
    match top {
        TopK::Count(k) if k == 0 => return Err(usage("--top-k must be at least 1")),
        TopK::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(usage(format!("--top-fraction must be in (0, 1], got {f}")))
        }
        _ => {}
    }

    let dict = Arc::new(read_dictionary(&args.dict).map_err(at(&args.dict))?);
    let map = read_map(&args.map, Arc::clone(&dict)).map_err(at(&args.map))?;
    let ranking = reduce::contributions(&map);
    let k = top.resolve(dict.len())?;
    let selected = select_top_k(&ranking, k)?;

    let seed = global.seed_or(0);
    let prov = provenance(
        "reduce",
        seed,
        json!({
            "map": path_str(&args.map),
            "dict": path_str(&args.dict),
            "top_k": top,
        }),
    )?;
    if let Some(ranking_path) = &args.ranking_out {
        write_ranking(ranking_path, &ranking, &dict).map_err(at(ranking_path))?;
        write_meta(ranking_path, "ranking", &prov)?;
    }
    save_selected(&args.selected_out, &dict, &selected, Some(prov))?;

    println!(
        "selected {} of {} n-grams into {}",
        selected.len(),
        dict.len(),
        args.selected_out.display()
    );
    Ok(())
}

pub fn classify(global: &Global, args: &ClassifyArgs) -> CliResult<()> {
    let base = global.config.kernel.clone().unwrap_or_else(auto_kernel);
    let ridge = args.ridge.unwrap_or(base.ridge);
    let val_fraction = args.val_fraction.unwrap_or(0.1);
    let seed = global.seed_or(0);

    let docs = read_corpus(&args.corpus).map_err(at(&args.corpus))?;
    let num_classes = class_count(&docs);
    if num_classes < 2 {
        return Err(runtime("corpus has a single class; nothing to classify"));
    }
    let dict = read_dictionary(&args.dict).map_err(at(&args.dict))?;
    let selected = load_selected(&args.selected, &dict)?;

    let features = Matrix::from_rows(
        &docs
            .iter()
            .map(|d| presence_vector(d, &dict).dense_subset(&selected.indices))
            .collect::<Vec<_>>(),
    );
    let all_labels = labels(&docs);

    // Tuning consumes a held-out split; the rows it sees never enter the
    // final fit. With an explicit --length-scale there is nothing to tune,
    // so every row is used.
    let (length_scale, fit_rows, tuned) = match args.length_scale {
        Some(scale) => {
            if !(scale > 0.0) {
                return Err(usage(format!("--length-scale must be positive, got {scale}")));
            }
            (scale, (0..docs.len()).collect::<Vec<_>>(), false)
        }
        None => {
            let (train_rows, val_rows) = stratified_holdout(&all_labels, val_fraction, seed)?;
            let train_features = select_rows(&features, &train_rows);
            let train_labels: Vec<usize> = train_rows.iter().map(|&i| all_labels[i]).collect();
            let val_features = select_rows(&features, &val_rows);
            let val_labels: Vec<usize> = val_rows.iter().map(|&i| all_labels[i]).collect();
            let grid = if base.scale_grid.is_empty() {
                default_scale_grid(median_heuristic(&train_features))
            } else {
                base.scale_grid.clone()
            };
            let tune_cfg = KernelConfig { length_scale: 1.0, ridge, scale_grid: grid };
            let scale = gp::tune_scale(
                &train_features,
                &train_labels,
                &val_features,
                &val_labels,
                num_classes,
                &tune_cfg,
            )?;
            (scale, train_rows, true)
        }
    };

    let fit_features = select_rows(&features, &fit_rows);
    let fit_labels: Vec<usize> = fit_rows.iter().map(|&i| all_labels[i]).collect();
    let fit_cfg = KernelConfig { length_scale, ridge, scale_grid: vec![length_scale] };
    let clf = gp::fit(&fit_features, &fit_labels, num_classes, &fit_cfg)?;

    let prov = provenance(
        "classify",
        seed,
        json!({
            "corpus": path_str(&args.corpus),
            "dict": path_str(&args.dict),
            "selected": path_str(&args.selected),
            "length_scale": length_scale,
            "ridge": ridge,
            "tuned": tuned,
            "val_fraction": if tuned { Some(val_fraction) } else { None },
        }),
    )?;
    gp::save_classifier(&args.classifier_out, &clf, &selected.indices, Some(prov))
        .map_err(at(&args.classifier_out))?;

    let train_accuracy = {
        let predictions = clf.predict(&fit_features)?;
        eval::accuracy(&predictions, &fit_labels)?
    };
    println!(
        "fit kernel classifier on {} rows (length scale {:.4}, training accuracy {:.4}) into {}",
        fit_rows.len(),
        length_scale,
        train_accuracy,
        args.classifier_out.display()
    );
    Ok(())
}

pub fn explain(global: &Global, args: &ExplainArgs) -> CliResult<()> {
    if args.top == 0 {
        return Err(usage("--top must be at least 1"));
    }
    let docs = read_corpus(&args.corpus).map_err(at(&args.corpus))?;
    let doc = docs
        .iter()
        .find(|d| d.doc_id == args.doc_id)
        .ok_or_else(|| runtime(format!("document id {} not found in corpus", args.doc_id)))?;
    let (model, vocab, _) = cnn::load_model(&args.model).map_err(at(&args.model))?;
    let dict = Arc::new(read_dictionary(&args.dict).map_err(at(&args.dict))?);
    let map = read_map(&args.map, dict).map_err(at(&args.map))?;

    let rep = model.representation(&vocab.encode(&doc.tokens));
    let explanation = reduce::explain(&args.doc_id.to_string(), &rep, &map, args.top)?;

    let seed = global.seed_or(0);
    let prov = provenance(
        "explain",
        seed,
        json!({
            "corpus": path_str(&args.corpus),
            "model": path_str(&args.model),
            "map": path_str(&args.map),
            "dict": path_str(&args.dict),
            "doc_id": args.doc_id,
            "top": args.top,
        }),
    )?;
    let artifact = ExplanationArtifact::new(explanation, Some(prov));
    match &args.out {
        Some(path) => {
            save_json(path, &artifact).map_err(at(path))?;
            println!("wrote explanation for document {} to {}", args.doc_id, path.display());
        }
        None => {
            // Tolerate a consumer that stops reading (`ngd explain … | head`):
            // a closed pipe is not a failed explanation.
            use std::io::Write;
            let rendered = serde_json::to_string_pretty(&artifact)?;
            if let Err(e) = writeln!(std::io::stdout().lock(), "{rendered}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

pub fn evaluate(global: &Global, args: &EvaluateArgs) -> CliResult<()> {
    let seed = global.seed_or(0);
    let corpus = match &args.corpus {
        Some(path) => CorpusSource::Files {
            corpus: path.clone(),
            phrases: args.phrases.clone(),
        },
        None => match (&global.config.corpus, &global.config.synth) {
            (Some(source), _) => source.clone(),
            (None, Some(spec)) => CorpusSource::Synthetic(spec.clone()),
            (None, None) => {
                // No corpus configured anywhere: generate the default one,
                // tied to the master seed so --seed varies the data too.
                let mut spec = default_synth_spec();
                spec.seed = seed;
                CorpusSource::Synthetic(spec)
            }
        },
    };
    let top_k = match (args.top_k, args.top_fraction) {
        (Some(k), None) => TopK::Count(k),
        (None, Some(f)) => TopK::Fraction(f),
        (None, None) => global.config.top_k.unwrap_or(TopK::Fraction(0.1)),
        (Some(_), Some(_)) => unreachable!("flags conflict"),
    };
    let ngram = global.config.ngram.clone().unwrap_or_default();
    let config = PipelineConfig {
        corpus,
        folds: args.folds.or(global.config.folds).unwrap_or(10),
        vocab_min_count: global.config.vocab_min_count.unwrap_or(1),
        cnn: global.config.cnn.clone().unwrap_or_default(),
        ngram_min: ngram.min,
        ngram_max: ngram.max,
        min_df: ngram.min_df,
        top_k,
        kernel: global.config.kernel.clone().unwrap_or_else(auto_kernel),
        seed,
    };

    let report = eval::run_cv(&config)?;
    save_json(&args.report_out, &report).map_err(at(&args.report_out))?;
    let table = eval::render_table(&report);
    std::fs::write(&args.table_out, &table).map_err(at(&args.table_out))?;
    let prov = provenance("evaluate", seed, &config)?;
    write_meta(&args.table_out, "table", &prov)?;

    print!("{table}");
    println!(
        "report in {}, table in {}",
        args.report_out.display(),
        args.table_out.display()
    );
    Ok(())
}
