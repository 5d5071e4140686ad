use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cells::Architecture;
use crate::corpus::{build_na_task, NaTaskSpec};
use crate::evaluation::{na_accuracy, ModelPredictor, NextTokenModel};
use crate::grammar::Number;

fn task(d: usize, s: usize, n: usize) -> NaTask {
    build_na_task(NaTaskSpec { d, s, n_sentences: n }, 100 + 10 * d as u64 + s as u64).unwrap()
}

fn scan_tasks(n: usize) -> Vec<NaTask> {
    SCAN_DEPTHS.iter().map(|&d| task(d, SCAN_SPACING, n)).collect()
}

fn ids(t: &NaTask) -> Vec<Vec<usize>> {
    let v = build_vocabulary();
    t.sentences.iter().map(|s| v.encode(&s.tokens)).collect()
}

#[test]
fn empty_ablation_changes_nothing() {
    let m = Model::new(ModelConfig::new(Architecture::Lstm, 2, 6, 4, 0.0), 9).unwrap();
    let t = task(2, 2, 12);
    let pos = [3, 7, 9];
    let a = ModelPredictor::new(&m).next_token_probs(&ids(&t), &pos).unwrap();
    let b = ablate(&m, &[], false).unwrap().next_token_probs(&ids(&t), &pos).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ablating_a_dead_unit_changes_nothing() {
    let mut m = Model::new(ModelConfig::new(Architecture::Lstm, 1, 6, 4, 0.0), 4).unwrap();
    let dead = 2;
    // no path out of the unit: recurrent and decoder weights from it are zero
    let u = &mut m.params.by_name_mut("l0.u").unwrap().value;
    for r in 0..u.rows() {
        u[(r, dead)] = 0.0;
    }
    let dw = &mut m.params.by_name_mut("dec.w").unwrap().value;
    for r in 0..dw.rows() {
        dw[(r, dead)] = 0.0;
    }
    let t = task(3, 1, 10);
    let pos = [2, 8, 11];
    let a = ModelPredictor::new(&m).next_token_probs(&ids(&t), &pos).unwrap();
    let b = ablate(&m, &[dead], false).unwrap().next_token_probs(&ids(&t), &pos).unwrap();
    assert_eq!(a, b);
    let c = ablate(&m, &[0], false).unwrap().next_token_probs(&ids(&t), &pos).unwrap();
    assert_ne!(a, c);
}

#[test]
fn invalid_unit_ids_are_rejected() {
    let m = Model::zeros(ModelConfig::new(Architecture::Gru, 2, 4, 4, 0.0)).unwrap();
    assert!(ablate(&m, &[7], false).is_ok());
    assert!(ablate(&m, &[8], false).is_err());
    assert!(single_unit_oracle(4, 4).is_err());
    assert!(record_unit(&m, &task(1, 1, 4), 0, 4, StateKind::Hidden).is_err());
    assert!(record_unit(&m, &task(1, 1, 4), 2, 0, StateKind::Hidden).is_err());
    assert!(record_unit(&m, &task(1, 1, 4), 0, 0, StateKind::Cell).is_err());
}

#[test]
fn oracle_unit_is_exactly_what_the_scan_finds() {
    let (h, u) = (5, 3);
    let m = single_unit_oracle(h, u).unwrap();
    let tasks = scan_tasks(200);
    let r = ablation_scan(&m, &tasks, &ScanOptions { workers: 2, ..Default::default() }).unwrap();
    assert_eq!(r.scanned, (0..h).collect::<Vec<_>>());
    assert_eq!(r.rows.len(), 2 * (1 + 2 + 3 + 4 + 5));
    for &d in &SCAN_DEPTHS {
        for split in [Number::Sg, Number::Pl] {
            let row = r.row(d, 1, split).unwrap();
            assert_eq!(row.baseline, 1.0);
            assert!(!row.baseline_below);
            assert_eq!(row.units, vec![u]);
        }
    }
    assert_eq!(r.listed_units(), vec![u]);
    // ties after ablation count as wrong
    assert!(r.ablated[&u].iter().all(|&a| a == 0.0));
    for other in (0..h).filter(|&x| x != u) {
        assert_eq!(r.ablated[&other], r.rows.iter().map(|row| row.baseline).collect::<Vec<_>>());
    }
}

#[test]
fn oracle_holds_the_latest_noun() {
    let m = single_unit_oracle(3, 0).unwrap();
    let t = task(4, 3, 100);
    let res = na_accuracy(&ModelPredictor::new(&m), &t).unwrap();
    // verb k is right exactly when noun d-k+1 matches the innermost noun
    for k in 1..=4 {
        let want = t.sentences.iter().filter(|s| s.nouns[4 - k] == s.nouns[3]).count() as f64 / 100.0;
        assert!((res.verb_accuracy(k) - want).abs() < 1e-12, "verb {k}");
    }
}

#[test]
fn scan_is_invariant_to_unit_order() {
    let m = Model::new(ModelConfig::new(Architecture::Lstm, 2, 4, 4, 0.0), 5).unwrap();
    let tasks = scan_tasks(30);
    let fwd = ScanOptions { threshold: 0.9, units: Some((0..8).collect()), workers: 3, ..Default::default() };
    let rev = ScanOptions { units: Some((0..8).rev().collect()), workers: 1, ..fwd.clone() };
    let a = ablation_scan(&m, &tasks, &fwd).unwrap();
    let b = ablation_scan(&m, &tasks, &rev).unwrap();
    assert_eq!(a, b);
    let all = ScanOptions { all_layers: true, ..fwd.clone() };
    assert_eq!(ablation_scan(&m, &tasks, &all).unwrap().scanned, (0..8).collect::<Vec<_>>());
    assert_eq!(ablation_scan(&m, &tasks, &ScanOptions::default()).unwrap().scanned, vec![4, 5, 6, 7]);
}

#[test]
fn untrained_baseline_below_threshold_lists_nothing() {
    let m = Model::zeros(ModelConfig::new(Architecture::Lstm, 1, 4, 4, 0.0)).unwrap();
    let r = ablation_scan(&m, &scan_tasks(20), &ScanOptions::default()).unwrap();
    assert!(r.rows.iter().all(|row| row.baseline_below && row.units.is_empty()));
    let mut buf = Vec::new();
    r.write_csv(&mut buf, "ablation").unwrap();
    assert!(String::from_utf8(buf).unwrap().contains("baseline_below_threshold"));
}

#[test]
fn scan_rejects_mixed_spacings() {
    let m = Model::zeros(ModelConfig::new(Architecture::Srn, 1, 2, 2, 0.0)).unwrap();
    assert!(ablation_scan(&m, &[task(1, 1, 4), task(2, 2, 4)], &ScanOptions::default()).is_err());
}

#[test]
fn ablation_report_csv_round_trips() {
    let m = single_unit_oracle(4, 1).unwrap();
    let r = ablation_scan(&m, &scan_tasks(50), &ScanOptions::default()).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf, "table1: single-unit ablation").unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.contains("threshold=0.55"));
    assert!(text.contains("1,1,sg,1,ok,1\n"));
    let back = AblationReport::read_csv(&buf[..]).unwrap();
    assert_eq!(back.rows, r.rows);
    assert_eq!((back.threshold, back.s, back.hidden_only), (0.55, 2, false));
    for bad in ["", "# threshold=0.55\nd,verb\n", "# threshold=0.55\nd,verb,split,baseline,status,units\n1,2,sg,1,ok,\n"] {
        assert!(AblationReport::read_csv(bad.as_bytes()).is_err(), "{bad:?}");
    }
}

#[test]
fn all_unit_ablation_destroys_agreement() {
    let m = single_unit_oracle(4, 2).unwrap();
    let p = ablate(&m, &[0, 1, 2, 3], false).unwrap();
    for t in scan_tasks(40) {
        let r = na_accuracy(&p, &t).unwrap();
        assert!(r.per_verb().iter().all(|&a| a <= ABLATION_THRESHOLD));
    }
    // hidden-only ablation still silences the decoder's input
    let p = ablate(&m, &[2], true).unwrap();
    assert_eq!(na_accuracy(&p, &task(2, 2, 20)).unwrap().overall(), 0.0);
}

#[test]
fn constant_unit_gives_identical_flat_groups() {
    let mut m = Model::zeros(ModelConfig::new(Architecture::Srn, 1, 3, 2, 0.0)).unwrap();
    m.params.by_name_mut("l0.b").unwrap().value[(0, 1)] = 0.7;
    let t = task(2, 2, 40);
    let tr = record_unit(&m, &t, 0, 1, StateKind::Hidden).unwrap();
    assert_eq!(tr.groups.len(), 4);
    assert_eq!(tr.len(), t.spec.sentence_len());
    let c = 0.7f64.tanh();
    for g in tr.groups.iter().filter(|g| g.count > 0) {
        assert!(g.mean.iter().all(|&v| (v - c).abs() < 1e-15));
        assert!(g.std.iter().all(|&v| v < 1e-7));
    }
    assert_eq!(tr.groups.iter().map(|g| g.count).sum::<usize>(), 40);
    assert_eq!(tr.separation(1, tr.noun_verb_span(1)), 0.0);
}

#[test]
fn depth_one_has_two_groups() {
    let m = Model::new(ModelConfig::new(Architecture::Gru, 1, 3, 2, 0.0), 1).unwrap();
    let tr = record_unit(&m, &task(1, 3, 30), 0, 2, StateKind::Hidden).unwrap();
    assert_eq!(tr.groups.iter().map(|g| g.signature).collect::<Vec<_>>(), vec![0, 1]);
}

#[test]
fn oracle_unit_separates_noun_numbers() {
    let (h, u) = (4, 1);
    let m = single_unit_oracle(h, u).unwrap();
    let t = task(1, 2, 200);
    let r = ablation_scan(&m, &[t.clone()], &ScanOptions::default()).unwrap();
    for id in r.listed_units() {
        for kind in [StateKind::Hidden, StateKind::Cell] {
            let tr = record_unit(&m, &t, 0, id, kind).unwrap();
            let span = tr.noun_verb_span(1);
            assert_eq!(span, 2..5);
            assert!(tr.separation(1, span) > 2.0);
        }
    }
    let dead = record_unit(&m, &t, 0, 0, StateKind::Hidden).unwrap();
    assert_eq!(dead.separation(1, dead.noun_verb_span(1)), 0.0);
}

#[test]
fn split_pooling_matches_direct_statistics() {
    let m = Model::new(ModelConfig::new(Architecture::Lstm, 1, 4, 3, 0.0), 2).unwrap();
    let t = task(3, 1, 64);
    let tr = record_unit(&m, &t, 0, 3, StateKind::Cell).unwrap();
    let states = run_states(&m, &ids(&t), &Ablation::none(), 0, StateKind::Cell).unwrap();
    for j in 1..=3 {
        let [sg, pl] = tr.split_by_noun(j);
        for (want, (mean, std, n)) in [(Number::Sg, sg), (Number::Pl, pl)] {
            let rows: Vec<usize> = (0..64).filter(|&i| t.sentences[i].nouns[j - 1] == want).collect();
            assert_eq!(n, rows.len());
            for (time, st) in states.iter().enumerate() {
                let v: Vec<f64> = rows.iter().map(|&i| st[(i, 3)]).collect();
                let m0 = v.iter().sum::<f64>() / v.len() as f64;
                let s0 = (v.iter().map(|x| (x - m0).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
                assert!((mean[time] - m0).abs() < 1e-12);
                assert!((std[time] - s0).abs() < 1e-7);
            }
        }
    }
}

#[test]
fn trace_outputs_render() {
    let m = single_unit_oracle(2, 0).unwrap();
    let tr = record_unit(&m, &task(2, 1, 20), 0, 0, StateKind::Hidden).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf, "unit trace").unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.contains("t,SS_mean,SS_std,PS_mean,PS_std,SP_mean"));
    assert_eq!(text.lines().count(), 3 + tr.len());
    let svg = tr.to_svg("unit 0");
    assert!(svg.contains("<polyline") && svg.contains(">n1<") && svg.contains(">v2<"));
}

fn random_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|k| rng.random::<f64>() * (k + 1) as f64).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn pca_components_are_orthonormal_and_sorted() {
    let p = pca(&random_points(300, 6, 1)).unwrap();
    assert_eq!(p.rank(), 6);
    for i in 0..6 {
        for j in 0..6 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((dot(&p.components[i], &p.components[j]) - want).abs() < 1e-8);
        }
    }
    assert!(p.explained.windows(2).all(|w| w[0] >= w[1]));
    assert!((p.explained.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn pca_reconstructs_centered_points() {
    let pts = random_points(100, 5, 2);
    let p = pca(&pts).unwrap();
    for x in &pts {
        let back = p.reconstruct_centered(&p.project(x));
        for ((b, x), m) in back.iter().zip(x).zip(&p.mean) {
            assert!((b - (x - m)).abs() < 1e-6);
        }
    }
}

#[test]
fn pca_matches_a_known_covariance() {
    // points (±a, 0) and (0, ±b): covariance diag(2a²/3, 2b²/3) with n − 1 = 3
    let (a, b) = (3.0, 1.0);
    let pts = vec![vec![a, 0.0], vec![-a, 0.0], vec![0.0, b], vec![0.0, -b]];
    let p = pca(&pts).unwrap();
    assert!((p.eigenvalues[0] - 2.0 * a * a / 3.0).abs() < 1e-12);
    assert!((p.eigenvalues[1] - 2.0 * b * b / 3.0).abs() < 1e-12);
    assert!((p.explained[0] - 0.9).abs() < 1e-12);
    assert_eq!(p.components[0], vec![1.0, 0.0]);
}

#[test]
fn points_on_a_line_give_one_component() {
    let dir = [0.6, -0.8, 0.0];
    let pts: Vec<Vec<f64>> = (0..50).map(|i| dir.iter().map(|d| 1.0 + d * (i as f64 * 0.37).sin()).collect()).collect();
    let p = pca(&pts).unwrap();
    assert_eq!(p.rank(), 1);
    assert!((p.explained[0] - 1.0).abs() < 1e-12);
    // sign convention: largest-magnitude entry positive
    assert!((p.components[0][1] - 0.8).abs() < 1e-9);
    for x in &pts {
        let back = p.reconstruct_centered(&p.project(x));
        assert!(back.iter().zip(x).zip(&p.mean).all(|((b, x), m)| (b - (x - m)).abs() < 1e-9));
    }
}

#[test]
fn pca_rejects_degenerate_input() {
    assert!(pca(&[vec![1.0]]).is_err());
    assert!(pca(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    assert!(pca(&[vec![f64::NAN], vec![1.0]]).is_err());
    assert_eq!(pca(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap().rank(), 0);
}

#[test]
fn pca_states_ignore_sentence_order() {
    let m = Model::new(ModelConfig::new(Architecture::Lstm, 2, 5, 4, 0.0), 8).unwrap();
    let t = task(2, 2, 60);
    let mut shuffled = t.clone();
    shuffled.sentences.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    assert_ne!(shuffled.sentences, t.sentences);
    let target = PcaTarget { layer: 1, kind: StateKind::Hidden };
    let a = pca_states(&m, &t, target).unwrap();
    let b = pca_states(&m, &shuffled, target).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.trajectories.len(), 4);
    assert_eq!(a.trajectories[0].2.len(), t.spec.sentence_len());
    let cell = pca_states(&m, &t, PcaTarget { layer: 0, kind: StateKind::Cell }).unwrap();
    assert_eq!(cell.pca.dim, 5);
}

#[test]
fn pca_trajectory_means_match_direct_projection() {
    let m = Model::new(ModelConfig::new(Architecture::Srn, 1, 4, 3, 0.0), 6).unwrap();
    let t = task(1, 1, 30);
    let r = pca_states(&m, &t, PcaTarget { layer: 0, kind: StateKind::Hidden }).unwrap();
    let states = run_states(&m, &ids(&t), &Ablation::none(), 0, StateKind::Hidden).unwrap();
    for (g, n, tr) in &r.trajectories {
        let rows: Vec<usize> = (0..30).filter(|&i| t.sentences[i].signature() == *g).collect();
        assert_eq!(*n, rows.len());
        for (time, st) in states.iter().enumerate() {
            let pc1 = rows.iter().map(|&i| dot(&r.pca.components[0], &st.row(i).iter().zip(&r.pca.mean).map(|(x, m)| x - m).collect::<Vec<_>>())).sum::<f64>()
                / rows.len() as f64;
            assert!((tr[time][0] - pc1).abs() < 1e-12);
        }
    }
    let mut buf = Vec::new();
    r.write_variance_csv(&mut buf, "pca").unwrap();
    r.write_trajectory_csv(&mut buf, "pca").unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.contains("component,eigenvalue,explained") && text.contains("group,count,t,pc1,pc2"));
    assert!(r.to_svg("pca").contains("PC1"));
}
