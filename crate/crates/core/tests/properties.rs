use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nestagree::analysis::pca;
use nestagree::cells::{Architecture, Checkpoint, Model, ModelConfig, Provenance, StackConfig};
use nestagree::config::PipelineConfig;
use nestagree::corpus::{build_na_task, check_na_sentence, NaTask, NaTaskSpec};
use nestagree::grammar::{
    derivation_log_prob, parse_sentence, parse_tokens, render_tokens, sample_derivation, sentence_log_prob,
    GrammarParams, Token,
};
use nestagree::numcore::{gemm, Tape, Tensor, Trans};

fn grammar_params() -> impl Strategy<Value = GrammarParams> {
    (0.05f64..0.6, 0.05f64..0.6).prop_map(|(p1, p2)| GrammarParams::new(p1, p2).unwrap())
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Tensor::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_sentences_parse_back_to_their_derivation(params in grammar_params(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = sample_derivation(&params, &mut rng).unwrap();
        let toks = d.tokens();
        prop_assert_eq!(toks.len(), d.len());
        prop_assert_eq!(&parse_tokens(&render_tokens(&toks)).unwrap(), &toks);
        prop_assert_eq!(&parse_sentence(&toks).unwrap(), &d);
        let lp = derivation_log_prob(&params, &d);
        prop_assert!(lp < 0.0 && lp.is_finite());
        prop_assert_eq!(sentence_log_prob(&params, &toks).unwrap(), lp);
    }

    #[test]
    fn sampled_sentences_agree_in_nesting_order(params in grammar_params(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = sample_derivation(&params, &mut rng).unwrap();
        let mut open = Vec::new();
        for t in d.tokens() {
            match t {
                Token::Noun(_, n) => open.push(n),
                Token::Verb(_, n) => prop_assert_eq!(open.pop(), Some(n)),
                _ => {}
            }
        }
        prop_assert!(open.is_empty());
        prop_assert_eq!(d.agreement_pairs().len(), d.depth());
        for (n, v) in d.agreement_pairs() {
            prop_assert_eq!(n.number(), v.number());
        }
    }

    #[test]
    fn na_tasks_satisfy_the_template(d in 1usize..=10, s in prop::sample::select(vec![1usize, 2, 5, 16, 32]), seed in any::<u64>()) {
        let mut spec = NaTaskSpec::new(d, s).unwrap();
        spec.n_sentences = 8;
        let task = build_na_task(spec, seed).unwrap();
        for sent in &task.sentences {
            prop_assert_eq!(sent.tokens.len(), 2 * d + (2 * d + 1) * s);
            prop_assert_eq!(&check_na_sentence(&spec, &sent.tokens).unwrap(), &sent.nouns);
        }
        let (mut t, mut i) = (Vec::new(), Vec::new());
        task.write(&mut t, &mut i).unwrap();
        prop_assert_eq!(NaTask::read(&t[..], &i[..]).unwrap(), task);
    }

    #[test]
    fn gemm_matches_naive_product(a in matrix(3, 4), b in matrix(5, 4), beta in -1.0f64..1.0) {
        let mut out = Tensor::filled(3, 5, 0.5);
        gemm(2.0, &a, Trans::N, &b, Trans::T, beta, &mut out);
        for i in 0..3 {
            for j in 0..5 {
                let dot: f64 = (0..4).map(|k| a[(i, k)] * b[(j, k)]).sum();
                prop_assert!((out[(i, j)] - (2.0 * dot + beta * 0.5)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(x in matrix(3, 6)) {
        let mut tape = Tape::new();
        let v = tape.leaf(x.clone());
        let s = tape.softmax_rows(v);
        let p = tape.value(s);
        for r in 0..3 {
            prop_assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.row(r).iter().all(|&q| q > 0.0));
            // order preserving
            for a in 0..6 {
                for b in 0..6 {
                    if x[(r, a)] < x[(r, b)] {
                        prop_assert!(p[(r, a)] <= p[(r, b)]);
                    }
                }
            }
        }
    }

    #[test]
    fn cumax_rows_rise_monotonically_to_one(x in matrix(2, 7)) {
        let mut tape = Tape::new();
        let v = tape.leaf(x);
        let c = tape.cumax_rows(v);
        let g = tape.value(c);
        for r in 0..2 {
            let row = g.row(r);
            prop_assert!(row.windows(2).all(|w| w[1] >= w[0] - 1e-15));
            prop_assert!(row[0] > 0.0);
            prop_assert!((row[6] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stack_mass_changes_only_by_push_and_pop(
        cells in 1usize..6,
        width in 1usize..4,
        vals in prop::collection::vec(-2.0f64..2.0, 40),
        raw in prop::collection::vec(0.01f64..1.0, 3),
        noop in any::<bool>(),
    ) {
        let n_act = if noop { 3 } else { 2 };
        let total: f64 = raw[..n_act].iter().sum();
        let acts: Vec<f64> = raw[..n_act].iter().map(|a| a / total).collect();
        let old = Tensor::from_vec(1, cells * width, vals[..cells * width].to_vec()).unwrap();
        let push = Tensor::from_vec(1, width, vals[30..30 + width].to_vec()).unwrap();
        let mut tape = Tape::new();
        let (s, a, p) = (tape.leaf(old.clone()), tape.leaf(Tensor::from_vec(1, n_act, acts.clone()).unwrap()), tape.leaf(push.clone()));
        let out = tape.stack_update(s, a, p, cells + 1);
        let new = tape.value(out);
        prop_assert_eq!(new.cols(), (cells + 1) * width);
        let top: f64 = old.row(0)[..width].iter().sum();
        let expected = old.sum() + acts[0] * push.sum() - acts[1] * top;
        prop_assert!((new.sum() - expected).abs() < 1e-10);
        // a pure push is an exact shift
        let pure = tape.leaf(Tensor::from_vec(1, 2, vec![1.0, 0.0]).unwrap());
        let shifted = tape.stack_update(s, pure, p, cells + 1);
        let sh = tape.value(shifted);
        prop_assert_eq!(&sh.row(0)[..width], push.row(0));
        prop_assert_eq!(&sh.row(0)[width..], old.row(0));
    }

    #[test]
    fn pca_ignores_point_order(
        pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 8..30),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let p = match pca(&pts) {
            Ok(p) => p,
            Err(_) => return Ok(()),
        };
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let q = pca(&shuffled).unwrap();
        prop_assert_eq!(p.rank(), q.rank());
        for (a, b) in p.eigenvalues.iter().zip(&q.eigenvalues) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        // components are only defined up to rotation inside repeated
        // eigenvalues; compare those with a clear gap to their neighbours
        let gap = |k: usize| {
            let e = &p.eigenvalues;
            let lo = if k + 1 < e.len() { e[k] - e[k + 1] } else { e[k] };
            let hi = if k > 0 { e[k - 1] - e[k] } else { f64::INFINITY };
            lo.min(hi) > 1e-3 * e[0]
        };
        for k in (0..p.rank()).filter(|&k| gap(k)) {
            for (x, y) in p.components[k].iter().zip(&q.components[k]) {
                prop_assert!((x - y).abs() < 1e-6, "component {} differs", k);
            }
        }
    }

    #[test]
    fn checkpoints_round_trip_bytes(arch in prop::sample::select(Architecture::ALL.to_vec()), seed in any::<u64>(), hidden in 1usize..5) {
        let cfg = ModelConfig::new(arch, 2, hidden * 2, 3, 0.1)
            .with_chunk(2)
            .with_stack(StackConfig { n_stacks: 1, depth: 4, noop: seed % 2 == 0 });
        let ck = Checkpoint::new(Model::new(cfg, seed).unwrap(), Provenance {
            dataset: None,
            seed,
            epoch: 1,
            valid_ppl: Some(3.5),
            clip: None,
            tool_version: "test".into(),
        });
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn configs_round_trip_through_toml(seed in any::<u64>(), sentences in 1usize..2000, hidden in 1usize..64, epochs in prop::option::of(1usize..50)) {
        let mut c = PipelineConfig::default();
        c.seed = seed;
        c.natask.sentences = sentences;
        c.model.hidden = hidden;
        c.training.epochs = epochs;
        let back = PipelineConfig::parse(&c.to_toml()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.digest(), c.digest());
    }
}
