use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{canonical_task, run_states, signature_label, AnalysisError, StateKind};
use crate::cells::{Ablation, Model};
use crate::corpus::{NaTask, NaTaskSpec};
use crate::evaluation::svg::LinePlot;

/// Activation statistics of one noun-number group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTrace {
    /// Bit `j` set when noun `j + 1` (from the outside) is plural.
    pub signature: usize,
    pub count: usize,
    /// Per timestep; NaN when the group is empty.
    pub mean: Vec<f64>,
    /// Population standard deviation per timestep.
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitTrace {
    pub layer: usize,
    pub unit: usize,
    pub kind: StateKind,
    pub spec: NaTaskSpec,
    /// All `2^d` groups, by signature.
    pub groups: Vec<GroupTrace>,
}

/// Group-averaged activation of one unit after each token of every
/// sentence in `task`.
pub fn record_unit(
    model: &Model,
    task: &NaTask,
    layer: usize,
    unit: usize,
    kind: StateKind,
) -> Result<UnitTrace, AnalysisError> {
    if unit >= model.config.hidden {
        return Err(crate::cells::CellError::InvalidUnit { unit, hidden: model.config.hidden }.into());
    }
    let (ids, sigs) = canonical_task(task);
    let states = run_states(model, &ids, &Ablation::none(), layer, kind)?;
    let d = task.spec.d;
    let mut groups: Vec<GroupTrace> = (0..1usize << d)
        .map(|signature| GroupTrace {
            signature,
            count: sigs.iter().filter(|&&s| s == signature).count(),
            mean: Vec::with_capacity(states.len()),
            std: Vec::with_capacity(states.len()),
        })
        .collect();
    for st in &states {
        let mut sum = vec![0.0; groups.len()];
        let mut sq = vec![0.0; groups.len()];
        for (i, &g) in sigs.iter().enumerate() {
            let v = st[(i, unit)];
            sum[g] += v;
            sq[g] += v * v;
        }
        for (g, gt) in groups.iter_mut().enumerate() {
            let n = gt.count as f64;
            let m = sum[g] / n;
            gt.mean.push(m);
            gt.std.push((sq[g] / n - m * m).max(0.0).sqrt());
        }
    }
    Ok(UnitTrace { layer, unit, kind, spec: task.spec, groups })
}

/// Mean and population std of two pooled group sets, per timestep.
type Pooled = (Vec<f64>, Vec<f64>, usize);

impl UnitTrace {
    pub fn len(&self) -> usize {
        self.groups.first().map_or(0, |g| g.mean.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn pool(&self, keep: impl Fn(usize) -> bool) -> Pooled {
        let t_len = self.len();
        let gs: Vec<&GroupTrace> = self.groups.iter().filter(|g| g.count > 0 && keep(g.signature)).collect();
        let n: usize = gs.iter().map(|g| g.count).sum();
        let mut mean = vec![0.0; t_len];
        let mut std = vec![0.0; t_len];
        for t in 0..t_len {
            let m = gs.iter().map(|g| g.count as f64 * g.mean[t]).sum::<f64>() / n as f64;
            // total variance = mean within-group variance + variance of group means
            let v = gs.iter().map(|g| g.count as f64 * (g.std[t].powi(2) + (g.mean[t] - m).powi(2))).sum::<f64>()
                / n as f64;
            mean[t] = m;
            std[t] = v.max(0.0).sqrt();
        }
        (mean, std, n)
    }

    /// Sentences pooled by the number of noun `j` (1 = outermost):
    /// `[singular, plural]`, each `(mean, std, count)`.
    pub fn split_by_noun(&self, j: usize) -> [Pooled; 2] {
        let bit = j - 1;
        [self.pool(|s| (s >> bit) & 1 == 0), self.pool(|s| (s >> bit) & 1 == 1)]
    }

    /// Timesteps from noun `j` up to (not including) the verb agreeing with it.
    pub fn noun_verb_span(&self, j: usize) -> Range<usize> {
        let k = self.spec.d - j + 1;
        self.spec.noun_position(j)..self.spec.verb_position(k)
    }

    /// Gap between the singular and plural means of noun `j`'s split,
    /// averaged over `span`, in units of the averaged pooled within-split
    /// standard deviation. Infinite when the splits are separated and
    /// noiseless.
    pub fn separation(&self, j: usize, span: Range<usize>) -> f64 {
        let [(ms, ss, ns), (mp, sp, np)] = self.split_by_noun(j);
        if ns == 0 || np == 0 || span.is_empty() {
            return 0.0;
        }
        let n = (ns + np) as f64;
        let len = span.len() as f64;
        let gap = span.clone().map(|t| (mp[t] - ms[t]).abs()).sum::<f64>() / len;
        let within = span
            .map(|t| ((ns as f64 * ss[t].powi(2) + np as f64 * sp[t].powi(2)) / n).sqrt())
            .sum::<f64>()
            / len;
        if within == 0.0 {
            if gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            gap / within
        }
    }

    /// One row per timestep; mean and std columns per group.
    pub fn write_csv<W: Write>(&self, mut w: W, title: &str) -> Result<(), AnalysisError> {
        let d = self.spec.d;
        writeln!(w, "# {title}")?;
        writeln!(
            w,
            "# layer={} unit={} kind={} d={} s={} n={}",
            self.layer,
            self.unit,
            self.kind.as_str(),
            d,
            self.spec.s,
            self.groups.iter().map(|g| g.count).sum::<usize>()
        )?;
        let mut header = vec!["t".to_string()];
        for g in &self.groups {
            let l = signature_label(g.signature, d);
            header.push(format!("{l}_mean"));
            header.push(format!("{l}_std"));
        }
        writeln!(w, "{}", header.join(","))?;
        for t in 0..self.len() {
            let mut row = vec![t.to_string()];
            for g in &self.groups {
                row.push(g.mean[t].to_string());
                row.push(g.std[t].to_string());
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Group means over time; the x axis marks nouns and verbs.
    pub fn to_svg(&self, title: &str) -> String {
        let spec = self.spec;
        let mut x_labels = vec![String::new(); self.len()];
        for j in 1..=spec.d {
            x_labels[spec.noun_position(j)] = format!("n{j}");
            x_labels[spec.verb_position(spec.d - j + 1)] = format!("v{j}");
        }
        let series = self
            .groups
            .iter()
            .filter(|g| g.count > 0)
            .map(|g| (signature_label(g.signature, spec.d), g.mean.clone()))
            .collect();
        LinePlot { title, x_labels, series, guide: None }.render()
    }
}
