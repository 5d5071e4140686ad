use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{unit_location, AnalysisError};
use crate::cells::{Ablation, Architecture, Model, ModelConfig};
use crate::corpus::{build_vocabulary, NaTask};
use crate::evaluation::{na_accuracy, ModelPredictor, NaResult};
use crate::grammar::{Number, Token};

/// Accuracy below which an ablated unit counts as necessary.
pub const ABLATION_THRESHOLD: f64 = 0.55;
pub const SCAN_DEPTHS: [usize; 5] = [1, 2, 3, 4, 5];
pub const SCAN_SPACING: usize = 2;

/// A read-only view of `model` with the given flat unit ids zeroed after
/// every cell update.
pub fn ablate<'a>(model: &'a Model, units: &[usize], hidden_only: bool) -> Result<ModelPredictor<'a>, AnalysisError> {
    let cfg = &model.config;
    let total = cfg.layers * cfg.hidden;
    if let Some(&bad) = units.iter().find(|&&u| u >= total) {
        return Err(crate::cells::CellError::InvalidUnit { unit: bad, hidden: total }.into());
    }
    let mut ab = Ablation::none().hidden_only(hidden_only);
    for &id in units {
        let (l, u) = unit_location(cfg, id);
        ab.units.entry(l).or_default().push(u);
    }
    Ok(ModelPredictor::new(model).with_ablation(ab)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanOptions {
    pub threshold: f64,
    /// Scan every layer instead of only the top one.
    pub all_layers: bool,
    pub hidden_only: bool,
    /// Explicit flat unit ids to scan, in any order.
    pub units: Option<Vec<usize>>,
    pub workers: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { threshold: ABLATION_THRESHOLD, all_layers: false, hidden_only: false, units: None, workers: 1 }
    }
}

/// One (depth, verb, number split) line of the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub d: usize,
    /// 1 = innermost verb.
    pub verb: usize,
    /// Number of the noun governing this verb.
    pub split: Number,
    pub baseline: f64,
    /// The intact model is already below threshold; no units are listed.
    pub baseline_below: bool,
    /// Flat ids whose single ablation drops accuracy below threshold.
    pub units: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub threshold: f64,
    pub s: usize,
    pub hidden_only: bool,
    pub all_layers: bool,
    /// Scanned flat ids, ascending.
    pub scanned: Vec<usize>,
    pub rows: Vec<AblationRow>,
    /// Accuracy per scanned unit, aligned with `rows`.
    pub ablated: BTreeMap<usize, Vec<f64>>,
}

fn split_rows(d: usize, r: &NaResult) -> Vec<(usize, Number, f64)> {
    (1..=d)
        .flat_map(|k| [Number::Sg, Number::Pl].map(|n| (k, n, r.verb_accuracy_split(k, n))))
        .collect()
}

/// Ablates each unit on its own and records where accuracy falls below
/// the threshold, per task depth, verb position and governing-noun number.
pub fn ablation_scan(model: &Model, tasks: &[NaTask], opts: &ScanOptions) -> Result<AblationReport, AnalysisError> {
    let cfg = &model.config;
    let mut tasks: Vec<&NaTask> = tasks.iter().collect();
    tasks.sort_by_key(|t| (t.spec.d, t.spec.s));
    let s = tasks.first().map_or(SCAN_SPACING, |t| t.spec.s);
    if tasks.iter().any(|t| t.spec.s != s) {
        return Err(AnalysisError::Config("ablation tasks must share one spacing".into()));
    }
    let mut scanned = match &opts.units {
        Some(u) => u.clone(),
        None if opts.all_layers => (0..cfg.layers * cfg.hidden).collect(),
        None => ((cfg.layers - 1) * cfg.hidden..cfg.layers * cfg.hidden).collect(),
    };
    scanned.sort_unstable();
    scanned.dedup();
    let base = ModelPredictor::new(model);
    let baseline: Vec<(usize, Number, f64, usize)> = tasks
        .iter()
        .map(|t| Ok(split_rows(t.spec.d, &na_accuracy(&base, t)?).into_iter().map(|(k, n, a)| (k, n, a, t.spec.d))))
        .collect::<Result<Vec<_>, AnalysisError>>()?
        .into_iter()
        .flatten()
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| AnalysisError::Config(e.to_string()))?;
    let ablated: BTreeMap<usize, Vec<f64>> = pool.install(|| {
        scanned
            .par_iter()
            .map(|&u| {
                let p = ablate(model, &[u], opts.hidden_only)?;
                let mut acc = Vec::with_capacity(baseline.len());
                for t in &tasks {
                    acc.extend(split_rows(t.spec.d, &na_accuracy(&p, t)?).into_iter().map(|(_, _, a)| a));
                }
                Ok((u, acc))
            })
            .collect::<Result<_, AnalysisError>>()
    })?;
    let rows = baseline
        .iter()
        .enumerate()
        .map(|(i, &(verb, split, b, d))| {
            let baseline_below = !(b >= opts.threshold);
            let units = if baseline_below {
                Vec::new()
            } else {
                ablated.iter().filter(|(_, acc)| acc[i] < opts.threshold).map(|(&u, _)| u).collect()
            };
            AblationRow { d, verb, split, baseline: b, baseline_below, units }
        })
        .collect();
    Ok(AblationReport {
        threshold: opts.threshold,
        s,
        hidden_only: opts.hidden_only,
        all_layers: opts.all_layers,
        scanned,
        rows,
        ablated,
    })
}

impl AblationReport {
    pub fn row(&self, d: usize, verb: usize, split: Number) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.d == d && r.verb == verb && r.split == split)
    }

    /// Every unit listed anywhere, ascending.
    pub fn listed_units(&self) -> Vec<usize> {
        let mut u: Vec<usize> = self.rows.iter().flat_map(|r| r.units.iter().copied()).collect();
        u.sort_unstable();
        u.dedup();
        u
    }

    pub fn write_csv<W: Write>(&self, mut w: W, title: &str) -> Result<(), AnalysisError> {
        writeln!(w, "# {title}")?;
        writeln!(
            w,
            "# threshold={} s={} hidden_only={} all_layers={} scanned={}",
            self.threshold,
            self.s,
            self.hidden_only,
            self.all_layers,
            self.scanned.len()
        )?;
        writeln!(w, "d,verb,split,baseline,status,units")?;
        for r in &self.rows {
            let status = if r.baseline_below { "baseline_below_threshold" } else { "ok" };
            let units: Vec<String> = r.units.iter().map(usize::to_string).collect();
            writeln!(w, "{},{},{},{},{status},{}", r.d, r.verb, r.split, r.baseline, units.join(";"))?;
        }
        Ok(())
    }

    /// Reads back the rows and header of [`write_csv`](Self::write_csv);
    /// per-unit accuracies and the scanned list are not stored there.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, AnalysisError> {
        let bad = |m: &str| AnalysisError::Format(m.to_string());
        let mut report = AblationReport {
            threshold: f64::NAN,
            s: 0,
            hidden_only: false,
            all_layers: false,
            scanned: Vec::new(),
            rows: Vec::new(),
            ablated: BTreeMap::new(),
        };
        let mut seen_header = false;
        let mut seen_meta = false;
        for line in r.lines() {
            let line = line?;
            if let Some(c) = line.strip_prefix('#') {
                for kv in c.split_whitespace() {
                    let Some((k, v)) = kv.split_once('=') else { continue };
                    seen_meta = true;
                    match k {
                        "threshold" => report.threshold = v.parse().map_err(|_| bad("threshold"))?,
                        "s" => report.s = v.parse().map_err(|_| bad("s"))?,
                        "hidden_only" => report.hidden_only = v.parse().map_err(|_| bad("hidden_only"))?,
                        "all_layers" => report.all_layers = v.parse().map_err(|_| bad("all_layers"))?,
                        _ => {}
                    }
                }
                continue;
            }
            if !seen_header {
                if line != "d,verb,split,baseline,status,units" {
                    return Err(bad("unexpected header"));
                }
                seen_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad("row must have 6 fields"));
            }
            let d: usize = f[0].parse().map_err(|_| bad("d"))?;
            let verb: usize = f[1].parse().map_err(|_| bad("verb"))?;
            if verb == 0 || verb > d {
                return Err(bad("verb position out of range"));
            }
            let baseline_below = match f[4] {
                "ok" => false,
                "baseline_below_threshold" => true,
                _ => return Err(bad("status")),
            };
            let units = if f[5].is_empty() {
                Vec::new()
            } else {
                f[5].split(';').map(|u| u.parse().map_err(|_| bad("unit id"))).collect::<Result<_, _>>()?
            };
            report.rows.push(AblationRow {
                d,
                verb,
                split: f[2].parse().map_err(|_| bad("split"))?,
                baseline: f[3].parse().map_err(|_| bad("baseline"))?,
                baseline_below,
                units,
            });
        }
        if !seen_header || !seen_meta || !report.threshold.is_finite() {
            return Err(bad("missing header"));
        }
        Ok(report)
    }
}

/// A hand-set one-layer LSTM whose unit `unit` carries the number of the
/// most recent noun and is the only route from input to the verb logits.
/// All other units are dead.
pub fn single_unit_oracle(hidden: usize, unit: usize) -> Result<Model, AnalysisError> {
    if unit >= hidden {
        return Err(crate::cells::CellError::InvalidUnit { unit, hidden }.into());
    }
    let cfg = ModelConfig::new(Architecture::Lstm, 1, hidden, 2, 0.0);
    let mut m = Model::zeros(cfg)?;
    let vocab = build_vocabulary();
    let p = &mut m.params;
    let embed = &mut p.by_name_mut("embed").expect("embed").value;
    for id in 0..vocab.len() {
        if let Ok(Token::Noun(_, n)) = vocab.token(id) {
            embed[(id, 0)] = 1.0;
            embed[(id, 1)] = if n == Number::Pl { 1.0 } else { -1.0 };
        }
    }
    let w = &mut p.by_name_mut("l0.w").expect("w").value;
    w[(unit, 0)] = 30.0; // input gate opens on nouns
    w[(hidden + unit, 0)] = -30.0; // forget gate closes on nouns
    w[(2 * hidden + unit, 1)] = 3.0; // candidate carries the sign
    let b = &mut p.by_name_mut("l0.b").expect("b").value;
    b[(0, unit)] = -15.0;
    b[(0, hidden + unit)] = 15.0;
    b[(0, 3 * hidden + unit)] = 15.0;
    let dec = &mut p.by_name_mut("dec.w").expect("dec").value;
    for n in [Number::Sg, Number::Pl] {
        for v in vocab.verb_ids(n) {
            dec[(v, unit)] = if n == Number::Pl { 10.0 } else { -10.0 };
        }
    }
    Ok(m)
}
