use std::fs;
use std::process::ExitCode;

use seqlab::cells::{CellKind, GateVariant};
use seqlab::corpus::{self, Document, SeqUnit};
use seqlab::crf::{self, CrfModel, CrfTrainConfig};
use seqlab::embeddings::{
    init_embedding_layer, load_word2vec_text, save_word2vec_text, train_skipgram, SkipGramConfig,
};
use seqlab::model::{grad_check, ModelConfig, SequenceModel, TrainConfig};
use seqlab::numerics::{Matrix, Rng};
use seqlab::serialize::{load_model, save_model, AnyModel};
use seqlab::tagscheme::{self, Metrics};
use seqlab::vocab::{TagSet, Vocabulary};
use seqlab::{Error, Result};

use crate::report;
use crate::runmanifest::RunManifest;
use crate::{
    parse_profile, resolve_seed, Arch, CrossvalArgs, EmbedTrainArgs, EvaluateArgs, GradcheckArgs,
    PredictArgs, SynthArgs, TrainArgs,
};

const GRAD_TOLERANCE: f64 = 1e-6;

fn corpus_vocab(docs: &[Document]) -> Vocabulary {
    Vocabulary::from_tokens(
        docs.iter()
            .flat_map(|d| d.sentences.iter())
            .flat_map(|s| s.tokens.iter())
            .map(|t| t.to_lowercase()),
    )
}

fn corpus_tagset(docs: &[Document]) -> TagSet {
    TagSet::from_tags(
        docs.iter()
            .flat_map(|d| d.sentences.iter())
            .flat_map(|s| s.tags.iter().cloned()),
    )
}

/// Everything needed to build and train one model; shared by `train` and
/// `crossval`.
struct TrainSpec {
    arch: Arch,
    hidden: usize,
    dim: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
    seq_unit: SeqUnit,
    variant: GateVariant,
    use_bias: bool,
    clip_norm: Option<f64>,
    l2: f64,
}

impl TrainSpec {
    fn validate(&self) -> Result<()> {
        if self.arch.cell_kind().is_none() && self.seq_unit == SeqUnit::Document {
            return Err(Error::contract(
                "CRF models train at sentence granularity; --seq-unit document applies to recurrent models only",
            ));
        }
        Ok(())
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::json!({
            "arch": self.arch.name(),
            "hidden": self.hidden,
            "dim": self.dim,
            "epochs": self.epochs,
            "lr": self.lr,
            "seq_unit": self.seq_unit.name(),
            "variant": self.variant.name(),
            "use_bias": self.use_bias,
            "clip_norm": self.clip_norm,
            "l2": self.l2,
        })
    }
}

/// Builds the embedding matrix for a vocabulary: pretrained rows where
/// covered, seeded uniform rows elsewhere.
fn embedding_for(
    vocab: &Vocabulary,
    pretrained: Option<&seqlab::EmbeddingTable>,
    dim: usize,
    seed: u64,
) -> Matrix {
    match pretrained {
        Some(table) => init_embedding_layer(vocab, table, seed),
        None => {
            let bound = 0.5 / dim as f64;
            Matrix::fill_uniform(
                vocab.len(),
                dim,
                -bound,
                bound,
                &mut Rng::new(seed).substream("embed.random"),
            )
        }
    }
}

fn build_and_train(
    spec: &TrainSpec,
    docs: &[Document],
    pretrained: Option<&seqlab::EmbeddingTable>,
    quiet: bool,
) -> Result<(AnyModel, Vec<f64>)> {
    spec.validate()?;
    let vocab = corpus_vocab(docs);
    let tagset = corpus_tagset(docs);
    let dim = pretrained.map_or(spec.dim, |t| t.dim());
    let embedding = embedding_for(&vocab, pretrained, dim, spec.seed);

    match spec.arch.cell_kind() {
        Some(kind) => {
            let mut model = SequenceModel::init(
                vocab,
                tagset,
                embedding,
                ModelConfig {
                    cell_kind: kind,
                    hidden: spec.hidden,
                    variant: spec.variant,
                    use_bias: spec.use_bias,
                    seq_unit: spec.seq_unit,
                },
                spec.seed,
            );
            let trace = model.train(
                docs,
                &TrainConfig {
                    learning_rate: spec.lr,
                    epochs: spec.epochs,
                    seed: spec.seed,
                    clip_norm: spec.clip_norm,
                    seq_unit: spec.seq_unit,
                    shuffle: true,
                },
            )?;
            if !quiet {
                for (i, loss) in trace.iter().enumerate() {
                    println!("epoch {:>3}  loss {loss:.6}", i + 1);
                }
            }
            Ok((AnyModel::Sequence(model), trace))
        }
        None => {
            let context = spec.arch == Arch::Crf;
            let mut model = CrfModel::init(vocab, tagset, embedding, context);
            let trace = crf::train_crf(
                &mut model,
                docs,
                &CrfTrainConfig {
                    learning_rate: spec.lr,
                    epochs: spec.epochs,
                    seed: spec.seed,
                    l2: spec.l2,
                    shuffle: true,
                },
            )?;
            if !quiet {
                for (i, ll) in trace.iter().enumerate() {
                    println!("epoch {:>3}  mean log-likelihood {ll:.6}", i + 1);
                }
            }
            Ok((AnyModel::Crf(model), trace))
        }
    }
}

pub fn train(args: TrainArgs) -> Result<ExitCode> {
    let seed = resolve_seed(args.seed);
    let docs = corpus::load_conll(&args.train)?;
    let pretrained = args
        .embeddings
        .as_ref()
        .map(load_word2vec_text)
        .transpose()?;
    let spec = TrainSpec {
        arch: args.arch,
        hidden: args.hidden,
        dim: args.dim,
        epochs: args.epochs,
        lr: args.lr,
        seed,
        seq_unit: args.seq_unit.into(),
        variant: args.variant.into(),
        use_bias: args.use_bias,
        clip_norm: args.clip_norm,
        l2: args.l2,
    };
    let (model, _) = build_and_train(&spec, &docs, pretrained.as_ref(), false)?;
    save_model(&model, &args.out)?;

    let mut manifest = RunManifest::new("train", spec.arch.name(), seed, spec.config_json());
    manifest.add_input("train", &args.train)?;
    if let Some(p) = &args.embeddings {
        manifest.add_input("embeddings", p)?;
    }
    manifest.write_alongside(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

/// Tags documents with a trained model, preserving the input's sentence
/// and document structure.
pub fn predict_docs(model: &AnyModel, docs: &[Document]) -> Vec<Document> {
    docs.iter()
        .map(|doc| {
            let sentences = match model {
                AnyModel::Sequence(m) if m.config.seq_unit == SeqUnit::Document => {
                    let tokens: Vec<String> = doc
                        .sentences
                        .iter()
                        .flat_map(|s| s.tokens.iter().cloned())
                        .collect();
                    let tags = m.predict(&tokens);
                    let mut offset = 0;
                    doc.sentences
                        .iter()
                        .map(|s| {
                            let slice = tags[offset..offset + s.len()].to_vec();
                            offset += s.len();
                            corpus::TaggedSequence::new(s.tokens.clone(), slice)
                        })
                        .collect()
                }
                AnyModel::Sequence(m) => doc
                    .sentences
                    .iter()
                    .map(|s| corpus::TaggedSequence::new(s.tokens.clone(), m.predict(&s.tokens)))
                    .collect(),
                AnyModel::Crf(m) => doc
                    .sentences
                    .iter()
                    .map(|s| corpus::TaggedSequence::new(s.tokens.clone(), m.predict(&s.tokens)))
                    .collect(),
            };
            Document {
                id: doc.id.clone(),
                sentences,
            }
        })
        .collect()
}

pub fn predict(args: PredictArgs) -> Result<ExitCode> {
    let model = load_model(&args.model)?;
    let docs = corpus::load_conll(&args.input)?;
    let tagged = predict_docs(&model, &docs);
    corpus::save_conll(&tagged, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn doc_tags(docs: &[Document]) -> Vec<Vec<String>> {
    docs.iter()
        .flat_map(|d| d.sentences.iter())
        .map(|s| s.tags.clone())
        .collect()
}

pub fn evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let gold = corpus::load_conll(&args.gold)?;
    let pred = corpus::load_conll(&args.pred)?;
    let metrics = tagscheme::evaluate(&doc_tags(&gold), &doc_tags(&pred))?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report::metrics_json(&metrics, report::eval_config(None)))
                .expect("metrics serialize")
        );
    } else {
        print!("{}", report::metrics_text(&metrics));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn crossval(args: CrossvalArgs) -> Result<ExitCode> {
    let seed = resolve_seed(args.seed);
    let docs = corpus::load_conll(&args.data)?;
    let assignment = tagscheme::kfold_split(docs.len(), args.folds, seed)?;
    let pretrained = args
        .embeddings
        .as_ref()
        .map(load_word2vec_text)
        .transpose()?;
    let spec = TrainSpec {
        arch: args.arch,
        hidden: args.hidden,
        dim: args.dim,
        epochs: args.epochs,
        lr: args.lr,
        seed,
        seq_unit: args.seq_unit.into(),
        variant: args.variant.into(),
        use_bias: args.use_bias,
        clip_norm: args.clip_norm,
        l2: args.l2,
    };
    spec.validate()?;

    let mut pooled: std::collections::BTreeMap<String, tagscheme::LabelCounts> =
        std::collections::BTreeMap::new();
    let mut token_hits = 0usize;
    let mut token_total = 0usize;
    let mut fold_lines = Vec::new();
    for fold in 0..args.folds {
        let train_docs: Vec<Document> = docs
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a != fold)
            .map(|(d, _)| d.clone())
            .collect();
        let test_docs: Vec<Document> = docs
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a == fold)
            .map(|(d, _)| d.clone())
            .collect();
        let (model, _) = build_and_train(&spec, &train_docs, pretrained.as_ref(), true)?;
        let predicted = predict_docs(&model, &test_docs);
        let fold_metrics = tagscheme::evaluate(&doc_tags(&test_docs), &doc_tags(&predicted))?;
        for (label, c) in &fold_metrics.per_label {
            let e = pooled.entry(label.clone()).or_default();
            e.tp += c.tp;
            e.fp += c.fp;
            e.fn_ += c.fn_;
        }
        let fold_tokens: usize = test_docs
            .iter()
            .flat_map(|d| d.sentences.iter())
            .map(|s| s.len())
            .sum();
        token_hits += (fold_metrics.token_accuracy * fold_tokens as f64).round() as usize;
        token_total += fold_tokens;
        fold_lines.push(format!(
            "fold {fold}: P {:.4} R {:.4} F {:.4} ({} test docs)",
            fold_metrics.precision,
            fold_metrics.recall,
            fold_metrics.f1,
            test_docs.len()
        ));
    }
    let token_accuracy = if token_total == 0 {
        0.0
    } else {
        token_hits as f64 / token_total as f64
    };
    let pooled = Metrics::from_counts(pooled, token_accuracy);
    if args.json {
        let mut config = report::eval_config(Some(args.folds));
        config["arch"] = serde_json::json!(spec.arch.name());
        config["seed"] = serde_json::json!(seed);
        println!(
            "{}",
            serde_json::to_string_pretty(&report::metrics_json(&pooled, config))
                .expect("metrics serialize")
        );
    } else {
        for line in &fold_lines {
            println!("{line}");
        }
        println!("pooled micro-average over {} folds:", args.folds);
        print!("{}", report::metrics_text(&pooled));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    let base_seed = resolve_seed(args.seed.or(Some(7)));
    let archs: Vec<Arch> = match args.arch {
        Some(a) => vec![a],
        None => vec![Arch::Rnn, Arch::Lstm, Arch::Gru, Arch::Crf, Arch::CrfNocontext],
    };
    let mut all_ok = true;
    for arch in archs {
        match arch.cell_kind() {
            Some(kind) => {
                for variant in [GateVariant::Paper, GateVariant::Standard] {
                    for use_bias in [false, true] {
                        if use_bias && kind != CellKind::Lstm {
                            continue;
                        }
                        let worst = model_gradcheck_sweep(
                            kind,
                            variant,
                            use_bias,
                            base_seed,
                            args.seeds,
                        )?;
                        report_line(
                            &format!(
                                "{} ({}, bias={})",
                                kind.name(),
                                variant.name(),
                                if use_bias { "on" } else { "off" }
                            ),
                            worst,
                            &mut all_ok,
                        );
                    }
                }
            }
            None => {
                let context = arch == Arch::Crf;
                let worst = crf_gradcheck_sweep(context, base_seed, args.seeds)?;
                report_line(arch.name(), worst, &mut all_ok);
            }
        }
    }
    if all_ok {
        println!("all gradients within {GRAD_TOLERANCE:.0e}");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: gradient check exceeded {GRAD_TOLERANCE:.0e}");
        Ok(ExitCode::from(3))
    }
}

fn report_line(label: &str, worst: f64, all_ok: &mut bool) {
    let ok = worst < GRAD_TOLERANCE;
    *all_ok &= ok;
    println!(
        "{label:<28} max relative error {worst:.3e}  {}",
        if ok { "ok" } else { "FAIL" }
    );
}

/// Worst relative error over `seeds` consecutive seeds for one full
/// bidirectional model configuration.
pub fn model_gradcheck_sweep(
    kind: CellKind,
    variant: GateVariant,
    use_bias: bool,
    base_seed: u64,
    seeds: usize,
) -> Result<f64> {
    let docs = corpus::gen_synthetic(corpus::SynthProfile::Local, 2, 1234);
    let sample = docs[0].sentences[0].clone();
    let vocab = corpus_vocab(&docs);
    let tagset = corpus_tagset(&docs);
    let mut worst = 0.0f64;
    for s in 0..seeds {
        let seed = base_seed + s as u64;
        let embedding = embedding_for(&vocab, None, 3, seed ^ 0x5eed);
        let mut model = SequenceModel::init(
            vocab.clone(),
            tagset.clone(),
            embedding,
            ModelConfig {
                cell_kind: kind,
                hidden: 3,
                variant,
                use_bias,
                seq_unit: SeqUnit::Sentence,
            },
            seed,
        );
        worst = worst.max(grad_check(&mut model, &sample, 1e-5)?);
    }
    Ok(worst)
}

/// Worst relative error for the CRF log-likelihood gradient over `seeds`
/// consecutive seeds, with and without L2.
#[allow(clippy::needless_range_loop)]
pub fn crf_gradcheck_sweep(context: bool, base_seed: u64, seeds: usize) -> Result<f64> {
    let docs = corpus::gen_synthetic(corpus::SynthProfile::Local, 2, 4321);
    let sentence = docs[0].sentences[0].clone();
    let vocab = corpus_vocab(&docs);
    let tagset = corpus_tagset(&docs);
    let mut worst = 0.0f64;
    for s in 0..seeds {
        let seed = base_seed + s as u64;
        let embedding = embedding_for(&vocab, None, 3, seed ^ 0xc4f);
        let mut model = CrfModel::init(vocab.clone(), tagset.clone(), embedding, context);
        let mut rng = Rng::new(seed).substream("crf.check");
        for k in 0..crf::weight_count(&model) {
            crf::set_weight(&mut model, k, rng.uniform(-1.0, 1.0));
        }
        let features = model.featurize_sentence(&sentence.tokens);
        let gold: Vec<usize> = sentence
            .tags
            .iter()
            .map(|t| model.tagset.index_of(t).expect("tag from same corpus"))
            .collect();
        for l2 in [0.0, 1e-3] {
            let (_, grads) = crf::loglik_and_grad(&model, &features, &gold, l2)?;
            let flat = crf::flatten_grads(&grads);
            let eps = 1e-5;
            for k in 0..crf::weight_count(&model) {
                let orig = crf::get_weight(&model, k);
                crf::set_weight(&mut model, k, orig + eps);
                let fp = penalized_loglik(&model, &features, &gold, l2)?;
                crf::set_weight(&mut model, k, orig - eps);
                let fm = penalized_loglik(&model, &features, &gold, l2)?;
                crf::set_weight(&mut model, k, orig);
                let numeric = (fp - fm) / (2.0 * eps);
                let diff = (flat[k] - numeric).abs();
                let err = if diff < 1e-9 {
                    0.0
                } else {
                    diff / flat[k].abs().max(numeric.abs())
                };
                worst = worst.max(err);
            }
        }
    }
    Ok(worst)
}

fn penalized_loglik(
    model: &CrfModel,
    features: &[Vec<f64>],
    gold: &[usize],
    l2: f64,
) -> Result<f64> {
    let (ln_p, _) = crf::loglik_and_grad(model, features, gold, 0.0)?;
    let mut sq = 0.0;
    for k in 0..crf::weight_count(model) {
        let w = crf::get_weight(model, k);
        sq += w * w;
    }
    Ok(ln_p - 0.5 * l2 * sq)
}

pub fn embed_train(args: EmbedTrainArgs) -> Result<ExitCode> {
    let seed = resolve_seed(args.seed);
    let text = fs::read_to_string(&args.corpus)?;
    let sentences: Vec<Vec<String>> = text
        .lines()
        .map(|l| l.split_whitespace().map(|t| t.to_string()).collect())
        .filter(|s: &Vec<String>| !s.is_empty())
        .collect();
    let table = train_skipgram(
        &sentences,
        &SkipGramConfig {
            dim: args.dim,
            window: args.window,
            negatives: args.negatives,
            epochs: args.epochs,
            learning_rate: args.lr,
            min_count: args.min_count,
            seed,
            ..Default::default()
        },
    )?;
    save_word2vec_text(&table, &args.out)?;
    println!(
        "wrote {} ({} words, dim {})",
        args.out.display(),
        table.vocab.len(),
        table.dim()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn synth(args: SynthArgs) -> Result<ExitCode> {
    if args.sentences == 0 {
        return Err(Error::contract("--sentences must be >= 1"));
    }
    let profile = parse_profile(&args.profile)?;
    let seed = resolve_seed(args.seed);
    let docs = corpus::gen_synthetic(profile, args.sentences, seed);
    corpus::save_conll(&docs, &args.out)?;
    println!(
        "wrote {} ({} documents, {} sentences)",
        args.out.display(),
        docs.len(),
        args.sentences
    );
    Ok(ExitCode::SUCCESS)
}
