mod common;

use masklm::analysis::{bernstein_weights, dissimilarity_s, ensemble_predict, interpolate_linear, EnsembleMode};
use masklm::data::{gen_classification_task, Language, SplitSizes, Variant, Vocab};
use masklm::masking::{binarize, init_scores, BinaryMask, MaskedLinear, MaskingConfig};
use masklm::model::{MaskPlan, Model, TransformerConfig};
use masklm::params::ParamStore;
use masklm::persist::{mask_payload_bytes, Checkpoint};
use masklm::tensor::{Graph, Tensor};
use masklm::training::{mcc, Adam};
use proptest::prelude::*;

use common::*;

fn tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    let data = (0..rows * cols)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 2001) as f32 / 1000.0 - 1.0
        })
        .collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        proptest::collection::vec(any::<bool>(), r * c).prop_map(move |bits| BinaryMask::new(r, c, bits).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn tensor_length_must_match_shape(r in 1usize..6, c in 1usize..6, extra in 1usize..4) {
        prop_assert!(Tensor::new(vec![r, c], vec![0.0; r * c]).is_ok());
        prop_assert!(Tensor::new(vec![r, c], vec![0.0; r * c + extra]).is_err());
    }

    #[test]
    fn second_backward_doubles_gradients(m in 1usize..5, k in 1usize..5, n in 1usize..5, seed in any::<u64>()) {
        let mut g = Graph::new();
        let a = g.leaf(tensor(m, k, seed), true);
        let b = g.leaf(tensor(k, n, seed ^ 1), true);
        let y = g.matmul(a, b).unwrap();
        let y = g.gelu(y);
        let loss = g.sum(y);
        g.backward(loss).unwrap();
        let once = g.grad(a).unwrap().clone();
        g.backward(loss).unwrap();
        let twice = g.grad(a).unwrap();
        prop_assert_eq!(twice.bits(), once.map(|v| 2.0 * v).bits());
    }

    #[test]
    fn forward_is_bitwise_deterministic(seed in any::<u64>()) {
        let run = || {
            let mut g = Graph::new();
            let a = g.constant(tensor(3, 7, seed));
            let b = g.constant(tensor(7, 5, seed ^ 2));
            let y = g.matmul(a, b).unwrap();
            let y = g.softmax(y, 1).unwrap();
            g.value(y).bits()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn cached_mask_tracks_scores(r in 1usize..8, c in 1usize..8, seed in any::<u64>(), tau in 0.3f32..0.7) {
        let weight = tensor(r, c, seed);
        let mut lin = MaskedLinear::with_scores(weight, None, tensor(r, c, seed ^ 3).map(|v| v + 0.5), tau).unwrap();
        let _ = lin.binary_mask();
        let fresh = tensor(r, c, seed ^ 4).map(|v| v + 0.5);
        lin.set_scores(fresh.clone()).unwrap();
        prop_assert_eq!(lin.binary_mask().clone(), binarize(&fresh, tau).unwrap());
    }

    #[test]
    fn masked_forward_equals_dense_on_materialized(r in 1usize..8, c in 1usize..8, n in 1usize..4, seed in any::<u64>()) {
        let cfg = MaskingConfig { init_sparsity: 0.4, seed, ..MaskingConfig::default() };
        let mut lin = MaskedLinear::new(tensor(r, c, seed), Some(tensor(1, c, seed ^ 5).reshape(&[c]).unwrap()), &cfg, 0).unwrap();
        let x = tensor(n, r, seed ^ 6);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let out = lin.forward(&mut g, xv).unwrap().output;
        let mut h = Graph::new();
        let xv = h.constant(x);
        let w = h.constant(lin.materialize());
        let b = h.constant(tensor(1, c, seed ^ 5).reshape(&[c]).unwrap());
        let y = h.matmul(xv, w).unwrap();
        let dense = h.add(y, b).unwrap();
        prop_assert_eq!(g.value(out).bits(), h.value(dense).bits());
    }

    #[test]
    fn init_sparsity_converges_to_p(p in 0.0f64..=1.0, seed in any::<u64>()) {
        let cfg = MaskingConfig { init_sparsity: p, seed, ..MaskingConfig::default() };
        let n = 40_000usize;
        let scores = init_scores(&[200, 200], &cfg, 1).unwrap();
        let realized = binarize(&scores, cfg.tau).unwrap().sparsity();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        prop_assert!((realized - p).abs() <= 5.0 * se + 1e-4, "p {} realized {}", p, realized);
    }

    #[test]
    fn pack_roundtrip(mask in mask_strategy()) {
        let bytes = mask.pack();
        prop_assert_eq!(bytes.len(), mask_payload_bytes(mask.rows(), mask.cols()));
        prop_assert_eq!(BinaryMask::unpack(mask.rows(), mask.cols(), &bytes).unwrap(), mask);
    }

    #[test]
    fn dissimilarity_is_symmetric_and_nonnegative(
        (init, a, b) in (1usize..10, 1usize..10).prop_flat_map(|(r, c)| {
            let m = move || proptest::collection::vec(any::<bool>(), r * c)
                .prop_map(move |bits| BinaryMask::new(r, c, bits).unwrap());
            (m(), m(), m())
        })
    ) {
        match (dissimilarity_s(&init, &a, &init, &b), dissimilarity_s(&init, &b, &init, &a)) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x, y);
                prop_assert!(x >= 0.0);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "asymmetric definedness"),
        }
        if a != init {
            prop_assert_eq!(dissimilarity_s(&init, &a, &init, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn bernstein_weights_sum_to_one(bends in 0usize..8, t in 0.0f64..=1.0) {
        let w = bernstein_weights(bends, t);
        prop_assert_eq!(w.len(), bends + 2);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mcc_is_bounded_and_perfect_is_one(gold in proptest::collection::vec(0usize..4, 1..40), noise in proptest::collection::vec(0usize..4, 40)) {
        prop_assert_eq!(mcc(&gold, &gold, 4), if gold.iter().all(|&g| g == gold[0]) { 0.0 } else { 1.0 });
        let pred: Vec<usize> = noise[..gold.len()].to_vec();
        let m = mcc(&pred, &gold, 4);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&m));
    }

    #[test]
    fn identical_members_ensemble_is_argmax(rows in proptest::collection::vec(proptest::collection::vec(-5.0f32..5.0, 3), 1..10)) {
        let expected: Vec<usize> = rows.iter().map(|r| {
            let mut best = 0;
            for (i, &v) in r.iter().enumerate() {
                if v > r[best] { best = i; }
            }
            best
        }).collect();
        for mode in [EnsembleMode::Labels, EnsembleMode::Logits, EnsembleMode::Probs] {
            prop_assert_eq!(ensemble_predict(&[rows.clone(), rows.clone()], mode).unwrap(), expected.clone());
        }
    }

    #[test]
    fn adam_buffers_mirror_trainable_params(sizes in proptest::collection::vec((1usize..5, 1usize..5, any::<bool>()), 1..6)) {
        let mut store = ParamStore::new();
        for (i, &(r, c, trainable)) in sizes.iter().enumerate() {
            store.insert(format!("p{i}"), tensor(r, c, i as u64), trainable);
            store.get_mut(&format!("p{i}")).unwrap().grad = Some(tensor(r, c, 99));
        }
        let mut adam = Adam::new();
        adam.step(&mut store, 1e-3).unwrap();
        for (i, &(r, c, trainable)) in sizes.iter().enumerate() {
            prop_assert_eq!(adam.buffer_len(&format!("p{i}")), trainable.then_some(r * c));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(16) })]

    #[test]
    fn interpolation_is_symmetric_under_endpoint_swap(gamma in 0.5f64..=1.0, seed in 0u64..4) {
        let a = Model::init(tiny_arch(), seed).unwrap();
        let b = Model::init(tiny_arch(), seed + 10).unwrap();
        let x = interpolate_linear(&a, &b, gamma).unwrap();
        let y = interpolate_linear(&b, &a, 1.0 - gamma).unwrap();
        for (name, p) in x.params.iter() {
            prop_assert_eq!(p.value.bits(), y.params.value(name).unwrap().bits());
        }
    }

    #[test]
    fn generators_are_pure(seed in any::<u64>(), lang_seed in 0u64..50) {
        let lang = Language::new(Vocab::new(96).unwrap(), lang_seed);
        let sizes = SplitSizes { train: 20, dev: 8, test: 8 };
        let a = gen_classification_task(&lang, seed, 3, sizes, 6, Variant::B).unwrap();
        let b = gen_classification_task(&lang, seed, 3, sizes, 6, Variant::B).unwrap();
        prop_assert_eq!(&a.train, &b.train);
        prop_assert_eq!(&a.test, &b.test);
        for e in a.train.iter().chain(&a.dev).chain(&a.test) {
            prop_assert!(e.class().unwrap() < 3);
            prop_assert!(e.ids.len() <= 8);
        }
    }

    #[test]
    fn checkpoint_roundtrip_any_seed(seed in any::<u64>(), labels in 2usize..5) {
        let mut model = Model::init(tiny_arch(), seed).unwrap();
        model.attach_classifier(labels, seed).unwrap();
        let bytes = Checkpoint::from_model(&model, seed, "finetune").unwrap().to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn block_mask_bits_follow_dimensions(heads in 1usize..4, head_dim in 1usize..8, ffn_mult in 1usize..5, blocks in 1usize..6) {
        let d = heads * head_dim;
        let cfg = TransformerConfig { num_blocks: blocks, hidden: d, ffn: d * ffn_mult, heads, ..TransformerConfig::default() };
        let per_block = (4 * d * d + 2 * d * d * ffn_mult) as u64;
        prop_assert_eq!(cfg.block_maskable(), per_block);
        let plan = MaskPlan { classifier: false, ..MaskPlan::all(blocks) };
        prop_assert_eq!(plan.encoder_mask_bits(&cfg), per_block * blocks as u64 + (d * d) as u64);
    }
}
