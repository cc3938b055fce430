use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use tod_core::corpus::{
    build_graph, load_gold_labels, split_cases, CitationExtractor, Corpus, DocId, Document, GoldLabel,
    MetadataExtractor, Splitter,
};
use tod_core::discourse::{fallback_tree, read_trees, split_edus, write_trees, RstTree};
use tod_core::evaluation::{compare, expected_random_metrics, split_ids, NotAddressedPolicy, Report};
use tod_core::extraction::{
    optimize, run_random, Budget, ExtractionConfig, ExtractionResult, Extractor, Method, PlanPrompt,
    TrainingCase,
};
use tod_core::sectioning::{SectioningConfig, Sectioner, SegmentedOpinion};

use crate::config::PipelineConfig;
use crate::store::{read_json, read_jsonl, write_json, write_jsonl, Split, Store};

pub struct RunContext {
    pub config: PipelineConfig,
    pub store: Store,
    /// Seed for the split and the random baseline.
    pub seed: u64,
}

impl RunContext {
    fn corpus(&self) -> Result<Corpus> {
        let docs: Vec<Document> = read_jsonl(&self.store.corpus())?;
        let mut corpus = Corpus::new(docs)?;
        if self.store.gold().exists() {
            corpus.attach_gold(&load_gold_labels(&self.store.gold())?)?;
        }
        Ok(corpus)
    }

    fn golds(&self, corpus: &Corpus) -> BTreeMap<DocId, bool> {
        corpus.gold_for_feature(&self.config.feature).into_iter().collect()
    }

    fn extraction_config(&self) -> ExtractionConfig {
        ExtractionConfig {
            model: self.config.model.clone(),
            step_mode: self.config.step_mode,
            ..ExtractionConfig::default()
        }
    }

    /// The stored split, or a fresh one over the labeled documents.
    fn split(&self, corpus: &Corpus) -> Result<Split> {
        if self.store.split().exists() {
            return read_json(&self.store.split());
        }
        let split = self.make_split(corpus)?;
        write_json(&self.store.split(), &split)?;
        Ok(split)
    }

    fn make_split(&self, corpus: &Corpus) -> Result<Split> {
        let labeled: Vec<DocId> = self.golds(corpus).into_keys().collect();
        if labeled.is_empty() {
            bail!("no gold labels for feature {:?}; run ingest with --gold", self.config.feature);
        }
        let config = tod_core::evaluation::SplitConfig {
            seed: self.seed,
            ..self.config.split
        };
        let (train, test) = split_ids(&labeled, &config)?;
        Ok(Split { train, test })
    }

    fn segmented(&self) -> Result<BTreeMap<DocId, SegmentedOpinion>> {
        if !self.store.segmented().exists() {
            return Ok(BTreeMap::new());
        }
        let segs: Vec<SegmentedOpinion> = read_jsonl(&self.store.segmented())?;
        Ok(segs.into_iter().map(|s| (s.doc_id.clone(), s)).collect())
    }

    fn trees(&self) -> Result<BTreeMap<DocId, RstTree>> {
        if !self.store.trees().exists() {
            return Ok(BTreeMap::new());
        }
        Ok(load_trees(&self.store.trees())?.into_iter().map(|t| (t.doc_id.clone(), t)).collect())
    }
}

fn load_trees(path: &Path) -> Result<Vec<RstTree>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_trees(BufReader::new(file)).with_context(|| format!("reading trees from {}", path.display()))
}

fn docs_for<'a>(corpus: &'a Corpus, ids: &[DocId]) -> Result<Vec<&'a Document>> {
    ids.iter()
        .map(|id| corpus.get(id).with_context(|| format!("document {id} is not in the corpus")))
        .collect()
}

pub fn ingest(ctx: &RunContext, inputs: &[PathBuf], gold: Option<&Path>) -> Result<()> {
    let splitter = Splitter::new(&ctx.config.splitter()?)?;
    let metadata = MetadataExtractor::new(&ctx.config.metadata_rules()?)?;
    let mut docs = Vec::new();
    for input in inputs {
        let raw = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
        for block in split_cases(&raw, &splitter).with_context(|| format!("splitting {}", input.display()))? {
            docs.push(metadata.extract(&block.text).with_context(|| format!("parsing a case in {}", input.display()))?);
        }
    }
    let mut corpus = Corpus::new(docs)?;

    let citer = CitationExtractor::new(&ctx.config.citation_rules()?)?;
    let citations: Vec<_> = corpus.documents().iter().flat_map(|d| citer.extract(d)).collect();
    let graph = build_graph(&corpus, &citations)?;

    write_jsonl(&ctx.store.corpus(), corpus.documents())?;
    write_jsonl(&ctx.store.citations(), &citations)?;
    write_json(&ctx.store.graph(), &graph)?;
    if let Some(path) = gold {
        let labels = load_gold_labels(path)?;
        corpus.attach_gold(&labels)?;
        write_jsonl(&ctx.store.gold(), &labels)?;
    }
    println!(
        "ingested {} documents, {} citations, {} graph nodes",
        corpus.len(),
        citations.len(),
        graph.nodes.len()
    );
    Ok(())
}

pub fn segment(ctx: &RunContext) -> Result<()> {
    let corpus = ctx.corpus()?;
    let gateway = ctx.config.gateway()?;
    let prompts = ctx.config.prompts()?;
    let config = SectioningConfig {
        model: ctx.config.model.clone(),
        ..SectioningConfig::default()
    };
    let sectioner = Sectioner::new(&gateway, &prompts, config);
    let segs = corpus
        .documents()
        .par_iter()
        .map(|d| sectioner.segment_and_label(d).with_context(|| format!("segmenting {}", d.id)))
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(&ctx.store.segmented(), &segs)?;
    println!("segmented {} documents into {} sections", segs.len(), segs.iter().map(|s| s.sections.len()).sum::<usize>());
    Ok(())
}

pub fn rst_import(ctx: &RunContext, files: &[PathBuf], fallback: bool) -> Result<()> {
    let corpus = ctx.corpus()?;
    let mut trees: BTreeMap<DocId, RstTree> = BTreeMap::new();
    for file in files {
        for tree in load_trees(file)? {
            if corpus.get(&tree.doc_id).is_none() {
                bail!("{}: tree for unknown document {}", file.display(), tree.doc_id);
            }
            if trees.insert(tree.doc_id.clone(), tree).is_some() {
                bail!("{}: duplicate tree for a document", file.display());
            }
        }
    }
    let mut built = 0;
    let mut out = Vec::new();
    for doc in corpus.documents() {
        match trees.remove(&doc.id) {
            Some(t) => out.push(t),
            None if fallback => {
                out.push(fallback_tree(doc.id.clone(), split_edus(&doc.opinion_text))?);
                built += 1;
            }
            None => log::warn!("no discourse tree for {}", doc.id),
        }
    }
    let mut buf = Vec::new();
    write_trees(&mut buf, &out)?;
    crate::store::write_atomic(&ctx.store.trees(), &buf)?;
    println!("stored {} trees ({built} built by the fallback)", out.len());
    Ok(())
}

pub fn optimize_cmd(ctx: &RunContext, max_iterations: Option<u32>, minibatch: Option<usize>) -> Result<()> {
    let corpus = ctx.corpus()?;
    let split = ctx.make_split(&corpus)?;
    write_json(&ctx.store.split(), &split)?;
    let golds = ctx.golds(&corpus);
    let segs = ctx.segmented()?;
    let trees = ctx.trees()?;
    let train: Vec<TrainingCase<'_>> = docs_for(&corpus, &split.train)?
        .into_iter()
        .map(|doc| TrainingCase {
            doc,
            seg: segs.get(&doc.id),
            tree: trees.get(&doc.id),
            gold: golds[&doc.id],
        })
        .collect();

    let gateway = ctx.config.gateway()?;
    let prompts = ctx.config.prompts()?;
    let feature = ctx.config.feature();
    let seed = PlanPrompt::seed(&feature, &prompts);
    let extractor = Extractor::new(&gateway, &prompts, ctx.extraction_config());
    let mut budget = Budget::default();
    if let Some(n) = max_iterations {
        budget.max_iterations = n;
    }
    budget.minibatch_size = minibatch;
    let outcome = optimize(&feature, &train, &seed, budget, &extractor, &gateway, &prompts)?;
    write_json(&ctx.store.prompt(), &outcome.prompt)?;
    write_json(&ctx.store.trace(), &outcome.trace)?;
    println!(
        "prompt version {} ({:?}, {} evaluations)",
        outcome.prompt.version,
        outcome.trace.status,
        outcome.trace.iterations.len()
    );
    Ok(())
}

fn plan_prompt(ctx: &RunContext, explicit: Option<&Path>) -> Result<PlanPrompt> {
    if let Some(path) = explicit {
        return read_json(path);
    }
    if ctx.store.prompt().exists() {
        return read_json(&ctx.store.prompt());
    }
    log::warn!("no optimized prompt found; using the seed prompt");
    Ok(PlanPrompt::seed(&ctx.config.feature(), &ctx.config.prompts()?))
}

pub fn extract(ctx: &RunContext, method: Method, prompt: Option<&Path>) -> Result<()> {
    let corpus = ctx.corpus()?;
    let split = ctx.split(&corpus)?;
    let feature = ctx.config.feature();
    let results: Vec<ExtractionResult> = if method == Method::Random {
        run_random(&split.test, &feature.id, ctx.config.random_p, ctx.seed)?
    } else {
        let docs = docs_for(&corpus, &split.test)?;
        let gateway = ctx.config.gateway()?;
        let prompts = ctx.config.prompts()?;
        let extractor = Extractor::new(&gateway, &prompts, ctx.extraction_config());
        let plan = plan_prompt(ctx, prompt)?;
        let (segs, trees) = if method == Method::AgenticTod {
            (ctx.segmented()?, ctx.trees()?)
        } else {
            Default::default()
        };
        docs.par_iter()
            .map(|doc| {
                let r = match method {
                    Method::Vanilla => extractor.vanilla(doc, &feature),
                    Method::Cot => extractor.cot(doc, &feature),
                    Method::Agentic => extractor.agentic(doc, &feature, &plan),
                    Method::AgenticTod => {
                        let seg = segs.get(&doc.id).with_context(|| format!("{} has not been segmented", doc.id))?;
                        let tree = trees.get(&doc.id).with_context(|| format!("{} has no discourse tree", doc.id))?;
                        extractor.agentic_tod(doc, seg, tree, &feature, &plan)
                    }
                    Method::Random => unreachable!(),
                };
                r.with_context(|| format!("extracting from {}", doc.id))
            })
            .collect::<Result<_>>()?
    };
    write_jsonl(&ctx.store.results(method), &results)?;
    let positives = results.iter().filter(|r| r.label.is_positive()).count();
    println!("{}: {} documents, {positives} labeled true", method.display_name(), results.len());
    Ok(())
}

fn method_of(path: &Path, results: &[ExtractionResult]) -> Result<Method> {
    let Some(first) = results.first() else {
        bail!("{} holds no results", path.display());
    };
    if results.iter().any(|r| r.method != first.method) {
        bail!("{} mixes methods", path.display());
    }
    Ok(first.method)
}

pub fn evaluate(ctx: &RunContext, result_files: &[PathBuf], gold: Option<&Path>) -> Result<()> {
    let files: Vec<PathBuf> = if result_files.is_empty() {
        Method::ALL.iter().map(|m| ctx.store.results(*m)).filter(|p| p.exists()).collect()
    } else {
        result_files.to_vec()
    };
    if files.is_empty() {
        bail!("no result files found under {}", ctx.store.dir.join("results").display());
    }
    let mut runs = Vec::new();
    for file in &files {
        let results: Vec<ExtractionResult> = read_jsonl(file)?;
        runs.push((method_of(file, &results)?, results));
    }

    let gold_path = gold.map(Path::to_path_buf).unwrap_or_else(|| ctx.store.gold());
    let labels: Vec<GoldLabel> = load_gold_labels(&gold_path).with_context(|| format!("reading {}", gold_path.display()))?;
    let predicted: BTreeSet<&DocId> = runs.iter().flat_map(|(_, rs)| rs.iter().map(|r| &r.doc_id)).collect();
    let golds: BTreeMap<DocId, bool> = labels
        .into_iter()
        .filter(|l| l.feature_id == ctx.config.feature && predicted.contains(&l.doc_id))
        .map(|l| (l.doc_id, l.label))
        .collect();

    let report = compare(&runs, &golds, NotAddressedPolicy::AsNegative)?;
    write_json(&ctx.store.report_json(), &report)?;
    emit_report(ctx, &report)
}

pub fn report(ctx: &RunContext) -> Result<()> {
    let report: Report = read_json(&ctx.store.report_json())?;
    emit_report(ctx, &report)
}

/// The comparison table followed by the random baseline's expectation at
/// the test set's class prior.
pub fn render_report(report: &Report, random_p: f64) -> String {
    let mut text = report.to_text();
    if report.n > 0 {
        let q = report.positives as f64 / report.n as f64;
        let m = expected_random_metrics(random_p, q);
        text.push_str(&format!(
            "random expectation (p = {random_p:.3}, q = {q:.3}): acc {:.3}, pre {:.3}, rec {:.3}, f1 {:.3}\n",
            m.accuracy, m.precision, m.recall, m.f1
        ));
    }
    text
}

fn emit_report(ctx: &RunContext, report: &Report) -> Result<()> {
    let text = render_report(report, ctx.config.random_p);
    crate::store::write_atomic(&ctx.store.report_text(), text.as_bytes())?;
    print!("{text}");
    Ok(())
}
