use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{canonical_task, run_states, signature_label, AnalysisError, StateKind};
use crate::cells::{Ablation, Model};
use crate::corpus::{NaTask, NaTaskSpec};
use crate::evaluation::svg::XyPlot;

/// Eigenvalues at or below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;

/// Principal components of a point cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit vectors, largest variance first. Each is signed so that its
    /// largest-magnitude entry (lowest index on ties) is positive.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues (sample covariance, `n − 1` denominator).
    pub eigenvalues: Vec<f64>,
    /// Fraction of total variance per component.
    pub explained: Vec<f64>,
    /// Point dimension.
    pub dim: usize,
}

/// PCA of the rows of `points` via eigendecomposition of the covariance.
/// Components with (numerically) zero variance are dropped with a warning.
pub fn pca(points: &[Vec<f64>]) -> Result<Pca, AnalysisError> {
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);
    if n < 2 || dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(AnalysisError::Config("need at least two points of equal, nonzero dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AnalysisError::Config("non-finite state value".into()));
    }
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut c = vec![0.0; dim];
    for p in points {
        for ((ci, v), m) in c.iter_mut().zip(p).zip(&mean) {
            *ci = v - m;
        }
        for i in 0..dim {
            for j in i..dim {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut components = Vec::new();
    let mut eigenvalues = Vec::new();
    for &k in &order {
        let lambda = eig.eigenvalues[k];
        if top == 0.0 || lambda <= top * RANK_TOL {
            break;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let lead = v.iter().enumerate().fold(0, |b, (i, x)| if x.abs() > v[b].abs() { i } else { b });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        eigenvalues.push(lambda);
    }
    if components.len() < dim {
        warn!("covariance has rank {} of {dim}; keeping the nonzero components", components.len());
    }
    let explained = eigenvalues.iter().map(|l| l / total).collect();
    Ok(Pca { mean, components, eigenvalues, explained, dim })
}

impl Pca {
    pub fn rank(&self) -> usize {
        self.components.len()
    }

    /// Coordinates of `x − mean` on every kept component.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum()).collect()
    }

    /// Centered point from its coordinates.
    pub fn reconstruct_centered(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (c, a) in self.components.iter().zip(coords) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += a * v;
            }
        }
        out
    }
}

/// Which states feed the PCA.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcaTarget {
    pub layer: usize,
    pub kind: StateKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub spec: NaTaskSpec,
    pub target: PcaTarget,
    pub pca: Pca,
    /// Per noun-number group: `(signature, count, per-timestep mean
    /// coordinates on the first two components)`. A missing component
    /// contributes 0.
    pub trajectories: Vec<(usize, usize, Vec<[f64; 2]>)>,
}

/// One basis for the states of all sentences and timesteps of `task`;
/// trajectories are averaged per timestep and noun-number group.
pub fn pca_states(model: &Model, task: &NaTask, target: PcaTarget) -> Result<PcaResult, AnalysisError> {
    let (ids, sigs) = canonical_task(task);
    let states = run_states(model, &ids, &Ablation::none(), target.layer, target.kind)?;
    let points: Vec<Vec<f64>> =
        (0..ids.len()).flat_map(|i| states.iter().map(move |st| st.row(i).to_vec())).collect();
    let pca = pca(&points)?;
    let d = task.spec.d;
    let t_len = states.len();
    let mut sums = vec![vec![[0.0; 2]; t_len]; 1 << d];
    let mut counts = vec![0usize; 1 << d];
    for (i, &g) in sigs.iter().enumerate() {
        counts[g] += 1;
        for (t, st) in states.iter().enumerate() {
            let p = pca.project(st.row(i));
            for c in 0..2 {
                sums[g][t][c] += p.get(c).copied().unwrap_or(0.0);
            }
        }
    }
    let trajectories = sums
        .into_iter()
        .enumerate()
        .map(|(g, tr)| {
            let n = counts[g] as f64;
            (g, counts[g], tr.into_iter().map(|[a, b]| [a / n, b / n]).collect())
        })
        .collect();
    Ok(PcaResult { spec: task.spec, target, pca, trajectories })
}

impl PcaResult {
    pub fn write_variance_csv<W: Write>(&self, mut w: W, title: &str) -> Result<(), AnalysisError> {
        writeln!(w, "# {title}")?;
        writeln!(w, "# dim={} rank={}", self.pca.dim, self.pca.rank())?;
        writeln!(w, "component,eigenvalue,explained")?;
        for (k, (l, e)) in self.pca.eigenvalues.iter().zip(&self.pca.explained).enumerate() {
            writeln!(w, "{},{l},{e}", k + 1)?;
        }
        Ok(())
    }

    pub fn write_trajectory_csv<W: Write>(&self, mut w: W, title: &str) -> Result<(), AnalysisError> {
        writeln!(w, "# {title}")?;
        writeln!(
            w,
            "# d={} s={} layer={} kind={}",
            self.spec.d,
            self.spec.s,
            self.target.layer,
            self.target.kind.as_str()
        )?;
        writeln!(w, "group,count,t,pc1,pc2")?;
        for (g, n, tr) in &self.trajectories {
            let label = signature_label(*g, self.spec.d);
            for (t, [a, b]) in tr.iter().enumerate() {
                writeln!(w, "{label},{n},{t},{a},{b}")?;
            }
        }
        Ok(())
    }

    pub fn to_svg(&self, title: &str) -> String {
        let series = self
            .trajectories
            .iter()
            .filter(|(_, n, _)| *n > 0)
            .map(|(g, _, tr)| (signature_label(*g, self.spec.d), tr.iter().map(|&[a, b]| (a, b)).collect()))
            .collect();
        XyPlot { title, x_label: "PC1", y_label: "PC2", series }.render()
    }
}
