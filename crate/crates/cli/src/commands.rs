//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use gazeflow_core::analyses::{
    duplicate_subset_report, grouped_correlation, mean_standardized_by_group, stratified_entropy, GroupOptions,
    SourceEntropy,
};
use gazeflow_core::attnflow::{
    flow_importance, head_received, mean_last_layer, oracle_head, read_tensor, ExportManifest,
};
use gazeflow_core::corpus::{pool_scores, words_from_tokens, Aligner};
use gazeflow_core::fixtures::{generate, write_fixtures, FixtureConfig};
use gazeflow_core::langmodel::{predictability, read_sentences, Discount, FreqTable, KnConfig, KnModel};
use gazeflow_core::metrics::{correlate_corpus, entropy_bits, CorrelateOptions};
use gazeflow_core::reduction::{aggregate_reduction, connect, rank_tokens, run_reduction, write_curves};
use gazeflow_core::report::{tag_means_long, write_correlation_csv, write_entropy_csv, write_grouped_csv, write_long_csv};
use gazeflow_core::{Alignment, AttentionTensor, FlowTarget, ScoreVector, Task};

use crate::io::{create_out, load_corpus, load_human, load_score_sets, single_source, write_json, write_vectors};
use crate::{
    AttnInput, Cli, Command, CorrelateArgs, DuplicatesArgs, EntropyArgs, ExportArgs, FlowArgs, FreqArgs, GroupedArgs,
    OracleArgs, PredictabilityArgs, ReduceArgs, RevealOrder,
};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Flow(a) => flow(a),
        Command::MeanAttn(a) => mean_attn(a),
        Command::OracleHead(a) => oracle(a),
        Command::Correlate(a) => correlate(a, cli.seed),
        Command::Grouped(a) => grouped(a),
        Command::Entropy(a) => entropy(a, cli.seed),
        Command::Duplicates(a) => duplicates(a, cli.seed),
        Command::Predictability(a) => predict(a),
        Command::FreqBaseline(a) => freq_baseline(a),
        Command::Reduce(a) => reduce(a, cli.seed),
        Command::ExportFixtures(a) => export(a, cli.seed),
    }
}

struct AttnItem {
    id: String,
    tensor: AttentionTensor<f64>,
    alignment: Alignment,
    human: Option<Vec<f64>>,
}

fn load_attention(input: &AttnInput) -> Result<Vec<AttnItem>> {
    let mut tensors: Vec<(String, AttentionTensor<f64>)> = Vec::new();
    if let Some(path) = &input.manifest {
        let (manifest, base) = ExportManifest::read(path)?;
        for s in &manifest.skipped {
            log::warn!("exporter skipped `{}`: {}", s.id, s.reason);
        }
        for e in &manifest.sentences {
            tensors.push((e.id.clone(), manifest.load(&base, e).with_context(|| format!("sentence `{}`", e.id))?));
        }
    } else {
        for path in &input.tensors {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .with_context(|| format!("no file stem in {}", path.display()))?;
            let t = read_tensor(path).with_context(|| format!("reading {}", path.display()))?;
            tensors.push((id, t));
        }
    }
    let corpus = input.corpus.as_ref().map(|p| load_corpus(p, input.task)).transpose()?;
    let aligner = Aligner::new(input.marker.clone());
    tensors
        .into_iter()
        .map(|(id, tensor)| {
            let mask = tensor.special_mask.as_deref();
            let (alignment, human) = match &corpus {
                Some(c) => {
                    let s = c.get(&id).with_context(|| format!("sentence `{id}` is not in the corpus"))?;
                    let al = aligner
                        .align(&s.words, &tensor.tokens, mask)
                        .with_context(|| format!("aligning `{id}`"))?;
                    (al, Some(s.fixation_ms.clone()))
                }
                None => (words_from_tokens(&tensor.tokens, &input.marker, mask).1, None),
            };
            Ok(AttnItem {
                id,
                tensor,
                alignment,
                human,
            })
        })
        .collect()
}

fn parse_target(s: &str) -> Result<FlowTarget> {
    if s.eq_ignore_ascii_case("aggregate") {
        return Ok(FlowTarget::Aggregate);
    }
    s.parse::<usize>()
        .map(FlowTarget::Position)
        .with_context(|| format!("target must be `aggregate` or a token position, got `{s}`"))
}

fn flow(a: &FlowArgs) -> Result<()> {
    let target = parse_target(&a.target)?;
    let residual = !a.no_residual;
    let items = load_attention(&a.input)?;
    let Some(first) = items.first() else {
        bail!("no tensors given");
    };
    let layer = a.layer.unwrap_or(first.tensor.layers() - 1);
    let source = a.input.source.clone().unwrap_or_else(|| format!("flow.{layer}"));
    let mut out = Vec::with_capacity(items.len());
    for it in &items {
        let tokens = flow_importance(&it.tensor, layer, target, residual).with_context(|| format!("sentence `{}`", it.id))?;
        out.push(ScoreVector::new(&it.id, &source, pool_scores(&tokens, &it.alignment)?));
    }
    log::info!("flow scores for {} sentences (layer {layer}, residual {residual})", out.len());
    write_vectors(&a.input.out, &out)
}

fn mean_attn(a: &AttnInput) -> Result<()> {
    let source = a.source.clone().unwrap_or_else(|| "mean".into());
    let mut out = Vec::new();
    for it in load_attention(a)? {
        let tokens = mean_last_layer(&it.tensor);
        out.push(ScoreVector::new(&it.id, &source, pool_scores(&tokens, &it.alignment)?));
    }
    write_vectors(&a.out, &out)
}

fn oracle(a: &OracleArgs) -> Result<()> {
    if a.input.corpus.is_none() {
        bail!("oracle-head needs --corpus for the human fixations");
    }
    let source = a.input.source.clone().unwrap_or_else(|| "oracle".into());
    let mut vectors = Vec::new();
    let mut choices = Vec::new();
    for it in load_attention(&a.input)? {
        let human = it.human.as_ref().expect("corpus given");
        match oracle_head(&it.tensor, human, &it.alignment) {
            Ok((head, rho)) => {
                let words = pool_scores(&head_received(&it.tensor, head), &it.alignment)?;
                vectors.push(ScoreVector::new(&it.id, &source, words));
                choices.push((it.id, head, rho));
            }
            Err(e) => log::warn!("sentence `{}`: {e}", it.id),
        }
    }
    if choices.is_empty() {
        bail!("no sentence yields a usable head");
    }
    write_vectors(&a.input.out, &vectors)?;
    if let Some(path) = &a.heads_out {
        let mut w = csv::Writer::from_writer(create_out(path)?);
        w.write_record(["sentence_id", "head", "rho"])?;
        for (id, head, rho) in &choices {
            w.write_record([id.clone(), head.to_string(), rho.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn correlate(a: &CorrelateArgs, seed: u64) -> Result<()> {
    let human = load_human(&a.human, a.task)?;
    let opts = CorrelateOptions {
        permutations: a.permutations,
        seed,
    };
    let reports = load_score_sets(&a.scores)?
        .iter()
        .map(|m| {
            correlate_corpus(&human, m, a.level, a.kind, opts)
                .with_context(|| format!("{} vs {}", human.source, m.source))
        })
        .collect::<Result<Vec<_>>>()?;
    write_correlation_csv(&reports, create_out(&a.out)?)?;
    Ok(())
}

fn grouped(a: &GroupedArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus, a.task)?;
    let human = match &a.human {
        Some(p) => load_human(p, a.task)?,
        None => corpus.gaze_scores(),
    };
    let pred = a.predictability.as_ref().map(|p| single_source(p, None)).transpose()?;
    let opts = GroupOptions {
        kind: a.kind,
        min_n: a.min_n,
        top_k: (a.top_k > 0).then_some(a.top_k),
        bins: a.bins,
        length_width: a.width,
    };
    let models = load_score_sets(&a.scores)?;
    let reports = models
        .iter()
        .map(|m| {
            grouped_correlation(&human, m, &corpus, pred.as_ref(), a.grouping, &opts)
                .with_context(|| format!("{} vs {}", human.source, m.source))
        })
        .collect::<Result<Vec<_>>>()?;
    write_grouped_csv(&reports, create_out(&a.out)?)?;
    if let Some(path) = &a.means_out {
        let mut rows = Vec::new();
        for set in std::iter::once(&human).chain(&models) {
            let mut means = mean_standardized_by_group(set, &corpus).with_context(|| format!("source {}", set.source))?;
            if let Some(k) = opts.top_k {
                means.truncate(k);
            }
            rows.extend(tag_means_long(&set.source, &means));
        }
        write_long_csv(&rows, create_out(path)?)?;
    }
    Ok(())
}

fn entropy(a: &EntropyArgs, seed: u64) -> Result<()> {
    let sources = |corpus: &gazeflow_core::Corpus, paths: &[PathBuf]| -> Result<Vec<gazeflow_core::ScoreSet>> {
        let mut sets = Vec::new();
        if a.gaze {
            sets.push(corpus.gaze_scores());
        }
        if !paths.is_empty() {
            sets.extend(load_score_sets(paths)?);
        }
        if sets.is_empty() {
            bail!("no score sources for {}", corpus.source_name);
        }
        Ok(sets)
    };
    let corpus_a = load_corpus(&a.corpus_a, a.task_a)?;
    let sets_a = sources(&corpus_a, &a.scores_a)?;
    let rows = match &a.corpus_b {
        Some(path) => {
            let corpus_b = load_corpus(path, a.task_b)?;
            let sets_b = sources(&corpus_b, &a.scores_b)?;
            stratified_entropy(&corpus_a, &sets_a, &corpus_b, &sets_b, seed)?
        }
        None => {
            let mut rows = Vec::new();
            for set in &sets_a {
                let ids: Vec<&str> = corpus_a
                    .sentences
                    .iter()
                    .filter(|s| set.get(&s.id).is_some())
                    .map(|s| s.id.as_str())
                    .collect();
                if ids.is_empty() {
                    bail!("source `{}` covers no corpus sentence", set.source);
                }
                let mut total = 0.0;
                for id in &ids {
                    total += entropy_bits(&set.get(id).expect("filtered").values)
                        .with_context(|| format!("sentence `{id}`"))?;
                }
                rows.push(SourceEntropy {
                    side: corpus_a.source_name.clone(),
                    source: set.source.clone(),
                    mean_bits: total / ids.len() as f64,
                    n: ids.len(),
                });
            }
            rows
        }
    };
    write_entropy_csv(&rows, create_out(&a.out)?)?;
    Ok(())
}

fn duplicates(a: &DuplicatesArgs, seed: u64) -> Result<()> {
    let nr = load_corpus(&a.nr, Task::NR)?;
    let tsr = load_corpus(&a.tsr, Task::REL)?;
    let models = if a.scores.is_empty() {
        Vec::new()
    } else {
        load_score_sets(&a.scores)?
    };
    let opts = CorrelateOptions {
        permutations: a.permutations,
        seed,
    };
    let report = duplicate_subset_report(&nr, &tsr, &models, a.kind, opts)?;
    log::info!("{} duplicate sentences", report.pairs.len());
    write_correlation_csv(&report.reports, create_out(&a.out)?)?;
    Ok(())
}

fn open(path: &PathBuf) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn predict(a: &PredictabilityArgs) -> Result<()> {
    let model = match (&a.model, &a.train) {
        (Some(path), _) => KnModel::load(std::io::BufReader::new(open(path)?))?,
        (None, Some(path)) => {
            let text = read_sentences(open(path)?)?;
            let cfg = KnConfig {
                order: a.order,
                discount: a.discount.map_or(Discount::Estimated, Discount::Fixed),
                unk_threshold: a.unk_threshold,
                pad_sentences: true,
                lowercase: !a.keep_case,
            };
            KnModel::train(&text, &cfg)?
        }
        (None, None) => bail!("need --train or --model"),
    };
    let corpus = load_corpus(&a.corpus, a.task)?;
    let vectors: Vec<ScoreVector> = corpus
        .sentences
        .iter()
        .map(|s| ScoreVector::new(&s.id, &a.source, predictability(&model, &s.words)))
        .collect();
    write_vectors(&a.out, &vectors)?;
    if let Some(path) = &a.model_out {
        let mut w = create_out(path)?;
        model.save(&mut w)?;
    }
    if let (Some(eval), Some(path)) = (&a.eval, &a.ppl_out) {
        let stream: Vec<String> = read_sentences(open(eval)?)?.into_iter().flatten().collect();
        let ppl = model.perplexity(&stream)?;
        write_json(
            path,
            &json!({
                "order": model.order(),
                "discounts": model.discounts(),
                "ppl": ppl.ppl,
                "scored": ppl.scored,
                "oov": ppl.oov,
            }),
        )?;
    }
    Ok(())
}

fn freq_baseline(a: &FreqArgs) -> Result<()> {
    let table = FreqTable::from_tsv(open(&a.freq)?)?;
    let corpus = load_corpus(&a.corpus, a.task)?;
    let vectors: Vec<ScoreVector> = corpus
        .sentences
        .iter()
        .map(|s| {
            let values = s.words.iter().map(|w| table.neg_log_freq(w)).collect();
            ScoreVector::new(&s.id, &a.source, values)
        })
        .collect();
    write_vectors(&a.out, &vectors)
}

fn reduce(a: &ReduceArgs, seed: u64) -> Result<()> {
    let corpus = load_corpus(&a.corpus, a.task)?;
    let scores = a.scores.as_ref().map(|p| single_source(p, a.source.as_deref())).transpose()?;
    let task_name = a.task_name.clone().unwrap_or_else(|| corpus.task.to_string().to_lowercase());
    let mut scorer = connect(&a.scorer).with_context(|| format!("connecting to scorer `{}`", a.scorer))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curves = Vec::new();
    for s in &corpus.sentences {
        if s.label.is_none() {
            log::warn!("sentence `{}` has no label; skipped", s.id);
            continue;
        }
        let order = match a.order {
            RevealOrder::Importance => {
                let set = scores.as_ref().expect("clap requires --scores");
                let Some(v) = set.get(&s.id) else {
                    log::warn!("no `{}` scores for `{}`; skipped", set.source, s.id);
                    continue;
                };
                if v.trimmed || v.values.len() != s.len() {
                    bail!("sentence `{}`: need one untrimmed score per word", s.id);
                }
                rank_tokens(&v.values)
            }
            RevealOrder::Random => {
                let mut order: Vec<usize> = (0..s.len()).collect();
                order.shuffle(&mut rng);
                order
            }
        };
        curves.push(run_reduction(s, &order, &mut scorer, &task_name)?);
    }
    if curves.is_empty() {
        bail!("no labelled sentence to reduce");
    }
    write_curves(&curves, create_out(&a.out)?)?;
    if let Some(path) = &a.summary {
        let summary = aggregate_reduction(&curves, a.grid)?;
        write_json(path, &summary)?;
    }
    Ok(())
}

fn export(a: &ExportArgs, seed: u64) -> Result<()> {
    let cfg = FixtureConfig {
        sentences: a.sentences,
        duplicates: a.sentences.min(FixtureConfig::default().duplicates),
        layers: a.layers,
        heads: a.heads,
        seed,
        ..FixtureConfig::default()
    };
    if cfg.sentences == 0 || cfg.layers == 0 || cfg.heads == 0 {
        bail!("sentences, layers and heads must be positive");
    }
    let fx = generate(&cfg);
    write_fixtures(&fx, &a.out)?;
    let by_task: BTreeMap<&str, usize> = [("sr", fx.sr.len()), ("nr", fx.nr.len())].into_iter().collect();
    log::info!("wrote fixtures to {}: {by_task:?}", a.out.display());
    Ok(())
}
