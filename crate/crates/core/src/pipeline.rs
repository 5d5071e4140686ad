//! On-disk dataset tree: generation from a [`PipelineConfig`] and verified
//! loading of corpora and number-agreement tasks.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::corpus::{
    build_corpus, build_na_task, derive_seed, file_digest, CorpusError, CorpusManifest, DatasetEntry, DatasetId,
    DatasetStats, NaTask, NaTaskEntry, NaTaskSpec, Split, TokenStream,
};
use crate::evaluation::svg::LinePlot;
use crate::grammar::{estimate_truncation, GrammarParams};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Seed of one dataset, from the pipeline seed and the dataset's name.
pub fn dataset_seed(seed: u64, p: &GrammarParams, split: Split) -> u64 {
    derive_seed(seed, &format!("corpus {} {} {}", p.p1, p.p2, split))
}

pub fn task_seed(seed: u64, spec: &NaTaskSpec) -> u64 {
    derive_seed(seed, &format!("natask {} {}", spec.d, spec.s))
}

/// Truncation limits are shared by the three splits of one (p1, p2).
pub fn limits_seed(seed: u64, p: &GrammarParams) -> u64 {
    derive_seed(seed, &format!("limits {} {}", p.p1, p.p2))
}

fn ensure_empty(root: &Path, force: bool) -> Result<(), CorpusError> {
    if root.exists() && fs::read_dir(root)?.next().is_some() && !force {
        return Err(CorpusError::Exists(root.to_path_buf()));
    }
    fs::create_dir_all(root)?;
    Ok(())
}

/// Generates corpora for every (p1, p2) of `cfg` (or only `only`) and
/// every task of the config's grid, then writes the manifest, the
/// effective config and dataset statistics.
pub fn generate_data(
    root: &Path,
    cfg: &PipelineConfig,
    only: Option<(f64, f64)>,
    force: bool,
    workers: usize,
) -> Result<CorpusManifest, CorpusError> {
    ensure_empty(root, force)?;
    let mut params = cfg.grammar_params().map_err(|e| CorpusError::Manifest(e.to_string()))?;
    if let Some((p1, p2)) = only {
        params.retain(|p| p.p1 == p1 && p.p2 == p2);
        if params.is_empty() {
            params.push(
                GrammarParams { p1, p2, number_prob_sg: cfg.grammar.number_prob_sg }.validated()?,
            );
        }
    }
    let specs = cfg.task_specs().map_err(|e| CorpusError::Manifest(e.to_string()))?;
    fs::create_dir_all(root.join("corpora"))?;
    fs::create_dir_all(root.join("natask"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CorpusError::Manifest(e.to_string()))?;
    let jobs: Vec<(GrammarParams, Split, usize)> = params
        .iter()
        .flat_map(|p| {
            [(Split::Train, cfg.corpus.train_tokens), (Split::Valid, cfg.corpus.valid_tokens), (Split::Test, cfg.corpus.test_tokens)]
                .map(|(s, n)| (*p, s, n))
        })
        .collect();
    let (datasets, natasks) = pool.install(|| -> Result<_, CorpusError> {
        let limits: Vec<_> = params
            .par_iter()
            .map(|p| {
                let mut rng = ChaCha8Rng::seed_from_u64(limits_seed(cfg.seed, p));
                estimate_truncation(p, cfg.grammar.presample, &mut rng)
            })
            .collect::<Result<_, _>>()?;
        let datasets: Vec<(DatasetEntry, DatasetStats)> = jobs
            .par_iter()
            .map(|&(p, split, target)| {
                let lim = limits[params.iter().position(|q| *q == p).expect("param present")];
                let seed = dataset_seed(cfg.seed, &p, split);
                let stream = build_corpus(&p, &lim, target, split, seed)?;
                let rel = format!("corpora/{}.txt", stream.id.stem());
                let mut w = BufWriter::new(File::create(root.join(&rel))?);
                stream.write_text(&mut w)?;
                w.flush()?;
                drop(w);
                info!("{rel}: {} tokens, {} sentences", stream.len(), stream.sentence_count());
                let st = stream.stats().clone();
                Ok((
                    DatasetEntry {
                        params: p,
                        split,
                        seed,
                        limits: lim,
                        tokens: stream.len(),
                        sentences: stream.sentence_count(),
                        max_depth: st.max_depth(),
                        max_spacing: st.max_spacing_seen(),
                        sha256: file_digest(&root.join(&rel))?,
                        file: rel,
                    },
                    st,
                ))
            })
            .collect::<Result<_, CorpusError>>()?;
        let natasks: Vec<NaTaskEntry> = specs
            .par_iter()
            .map(|spec| {
                let seed = task_seed(cfg.seed, spec);
                let task = build_na_task(*spec, seed)?;
                let file = format!("natask/{}.txt", spec.stem());
                let index_file = format!("natask/{}.idx", spec.stem());
                let mut tw = BufWriter::new(File::create(root.join(&file))?);
                let mut iw = BufWriter::new(File::create(root.join(&index_file))?);
                task.write(&mut tw, &mut iw)?;
                tw.flush()?;
                iw.flush()?;
                drop((tw, iw));
                Ok(NaTaskEntry {
                    d: spec.d,
                    s: spec.s,
                    seed,
                    n: spec.n_sentences,
                    sha256: file_digest(&root.join(&file))?,
                    index_sha256: file_digest(&root.join(&index_file))?,
                    file,
                    index_file,
                })
            })
            .collect::<Result<_, CorpusError>>()?;
        Ok((datasets, natasks))
    })?;
    write_statistics(root, &datasets)?;
    fs::write(root.join("config.toml"), cfg.to_toml())?;
    let mut manifest = CorpusManifest::new(cfg.seed, cfg.digest());
    manifest.datasets = datasets.into_iter().map(|(e, _)| e).collect();
    manifest.natasks = natasks;
    manifest.save(&root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn write_statistics(root: &Path, datasets: &[(DatasetEntry, DatasetStats)]) -> Result<(), CorpusError> {
    let mut csv = String::from("# dataset statistics: depth and maximum spacing per corpus\ndataset,kind,value,count\n");
    for (e, st) in datasets {
        let stem = DatasetId { p1: e.params.p1, p2: e.params.p2, split: e.split, seed: e.seed }.stem();
        for (kind, h) in [("depth", &st.depth), ("max_spacing", &st.max_spacing), ("length", &st.length)] {
            for (v, c) in h {
                csv.push_str(&format!("{stem},{kind},{v},{c}\n"));
            }
        }
    }
    fs::write(root.join("stats.csv"), csv)?;
    let train: Vec<&(DatasetEntry, DatasetStats)> = datasets.iter().filter(|(e, _)| e.split == Split::Train).collect();
    for (kind, pick) in [
        ("depth", (|s: &DatasetStats| s.depth.clone()) as fn(&DatasetStats) -> _),
        ("max_spacing", |s: &DatasetStats| s.max_spacing.clone()),
    ] {
        let max = train.iter().map(|(_, s)| pick(s).keys().next_back().copied().unwrap_or(0)).max().unwrap_or(0);
        let series = train
            .iter()
            .map(|(e, s)| {
                let h = pick(s);
                let n = s.sentences.max(1) as f64;
                (
                    format!("p1={} p2={}", e.params.p1, e.params.p2),
                    (0..=max).map(|v| *h.get(&v).unwrap_or(&0) as f64 / n).collect(),
                )
            })
            .collect();
        let title = format!("training {kind} distribution");
        let svg = LinePlot { title: &title, x_labels: (0..=max).map(|v| v.to_string()).collect(), series, guide: None }
            .render();
        fs::write(root.join(format!("stats_{kind}.svg")), svg)?;
    }
    Ok(())
}

/// A generated dataset tree with a verified manifest.
pub struct DataDir {
    pub root: PathBuf,
    pub manifest: CorpusManifest,
}

impl DataDir {
    pub fn open(root: &Path) -> Result<Self, CorpusError> {
        let manifest = CorpusManifest::load_verified(&root.join(MANIFEST_FILE))?;
        Ok(DataDir { root: root.to_path_buf(), manifest })
    }

    pub fn entry(&self, p1: f64, p2: f64, split: Split) -> Result<&DatasetEntry, CorpusError> {
        self.manifest
            .dataset(p1, p2, split)
            .ok_or_else(|| CorpusError::Manifest(format!("no {split} corpus for p1={p1} p2={p2}")))
    }

    pub fn stream(&self, p1: f64, p2: f64, split: Split) -> Result<TokenStream, CorpusError> {
        let e = self.entry(p1, p2, split)?;
        let id = DatasetId { p1, p2, split, seed: e.seed };
        TokenStream::read_text(id, BufReader::new(File::open(self.root.join(&e.file))?))
    }

    /// Maximal depth and spacing seen in the training corpus.
    pub fn train_limits(&self, p1: f64, p2: f64) -> Result<(usize, usize), CorpusError> {
        let e = self.entry(p1, p2, Split::Train)?;
        Ok((e.max_depth, e.max_spacing))
    }

    pub fn task(&self, d: usize, s: usize) -> Result<NaTask, CorpusError> {
        let e = self.manifest.natask(d, s).ok_or(CorpusError::InvalidTask { d, s })?;
        NaTask::read(
            BufReader::new(File::open(self.root.join(&e.file))?),
            BufReader::new(File::open(self.root.join(&e.index_file))?),
        )
    }

    /// Every listed task passing `keep`, ordered by (d, s).
    pub fn tasks(&self, keep: impl Fn(usize, usize) -> bool) -> Result<Vec<NaTask>, CorpusError> {
        let mut keys: Vec<(usize, usize)> =
            self.manifest.natasks.iter().map(|t| (t.d, t.s)).filter(|&(d, s)| keep(d, s)).collect();
        keys.sort_unstable();
        keys.into_iter().map(|(d, s)| self.task(d, s)).collect()
    }
}
