//! Randomized properties of the graph, aggregation, fusion, data and
//! training stages.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regionembed::aggregation::{head_attention, init_view_features, multi_head_aggregate_with, AttentionKind, OutputNorm};
use regionembed::data::{generate_city, load_dataset, write_dataset, CityConfig, DatasetPaths, FeatureTable};
use regionembed::fusion::{gated_combine, memory_attention, view_weighted_sum};
use regionembed::graph::{build_graphs, feature_graph, trip_counts, View};
use regionembed::math::soft_threshold;
use regionembed::tensor::{dot, norm};
use regionembed::training::{forward, ModelParams, Prepared, TrainConfig};
use regionembed::{Tape, Tensor};

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

fn small_city(seed: u64) -> CityConfig {
    CityConfig { n_regions: 8, n_districts: 2, n_trips: 120, seed, ..CityConfig::default() }
}

fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn graphs_are_symmetric_and_in_unit_interval(seed in 0u64..10_000) {
        let data = generate_city(&small_city(seed)).unwrap();
        for g in build_graphs(&data) {
            let m = &g.matrix;
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    prop_assert!((m.get(i, j) - m.get(j, i)).abs() <= 1e-12);
                    prop_assert!((0.0..=1.0).contains(&m.get(i, j)), "{} at ({i},{j})", m.get(i, j));
                }
            }
        }
    }

    #[test]
    fn cleansing_shrinks_and_keeps_sign(seed in 0u64..10_000, tau in 0.0f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, 6, 6, -2.0, 2.0);
        let y = soft_threshold(&x, tau).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            prop_assert!(b.abs() <= a.abs());
            prop_assert!(*b == 0.0 || b.signum() == a.signum());
        }
    }

    #[test]
    fn function_graph_ignores_per_region_scale(seed in 0u64..10_000, k in 0usize..8, factor in 0.01f64..100.0) {
        let data = generate_city(&small_city(seed)).unwrap();
        let mut counts = data.poi.counts.clone();
        counts.row_mut(k).iter_mut().for_each(|v| *v *= factor);
        let scaled = FeatureTable::new(data.poi.categories.clone(), counts).unwrap();
        let a = feature_graph(&data.poi, View::Function).matrix;
        let b = feature_graph(&scaled, View::Function).matrix;
        prop_assert!(a.max_abs_diff(&b) <= 1e-12);
    }

    #[test]
    fn aggregation_is_permutation_equivariant(seed in 0u64..10_000, regions_axis in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d, t) = (5, 6, 2);
        let h = random(&mut rng, n, d, -1.0, 1.0);
        let heads: Vec<Tensor> = (0..t).map(|_| random(&mut rng, d / t, d, -1.0, 1.0)).collect();
        let perm = permutation(&mut rng, n);
        let norm = if regions_axis { OutputNorm::Regions } else { OutputNorm::Features };
        let run = |h: Tensor| {
            let mut tape = Tape::new();
            let hv = tape.leaf(h);
            let hs: Vec<_> = heads.iter().map(|w| tape.leaf(w.clone())).collect();
            let (out, _) = multi_head_aggregate_with(&mut tape, hv, &hs, AttentionKind::Cosine, None, norm).unwrap();
            tape.value(out).clone()
        };
        let direct = run(h.clone()).select_rows(&perm);
        let permuted = run(h.select_rows(&perm));
        prop_assert!(direct.max_abs_diff(&permuted) <= 1e-12);
    }

    #[test]
    fn attention_rows_are_distributions_without_self(seed in 0u64..10_000, n in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let h = tape.leaf(random(&mut rng, n, 4, -1.0, 1.0));
        let w = tape.leaf(random(&mut rng, 4, 4, -1.0, 1.0));
        let head = head_attention(&mut tape, h, w).unwrap();
        let a = tape.value(head.attention);
        for i in 0..n {
            prop_assert_eq!(a.get(i, i), 0.0);
            prop_assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for j in (0..n).filter(|&j| j != i) {
                prop_assert!(a.get(i, j) > 0.0 && a.get(i, j) < 1.0 || n == 2);
            }
        }
    }

    /// The cosine score of a pair depends only on that pair's features.
    #[test]
    fn pair_scores_ignore_other_rows(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random(&mut rng, 5, 4, -1.0, 1.0);
        let w = random(&mut rng, 4, 4, -1.0, 1.0);
        let scores = |h: &Tensor| {
            let mut tape = Tape::new();
            let (hv, wv) = (tape.leaf(h.clone()), tape.leaf(w.clone()));
            let head = head_attention(&mut tape, hv, wv).unwrap();
            (tape.value(head.scores).clone(), tape.value(head.attention).clone())
        };
        let (s1, a1) = scores(&h);
        let mut h2 = h.clone();
        h2.row_mut(4).iter_mut().for_each(|v| *v = rng.random_range(-3.0..3.0));
        let (s2, a2) = scores(&h2);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((s1.get(i, j) - s2.get(i, j)).abs() <= 1e-12);
            }
            // Ratios within the untouched block survive renormalization.
            if i != 0 && i != 1 {
                let r1 = a1.get(i, 0) / a1.get(i, 1);
                let r2 = a2.get(i, 0) / a2.get(i, 1);
                prop_assert!((r1 - r2).abs() <= 1e-9 * r1.abs().max(1.0));
            }
        }
    }

    #[test]
    fn gate_output_lies_between_inputs(seed in 0u64..10_000, logit in -6.0f64..6.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (e, g) = (random(&mut rng, 4, 3, -2.0, 2.0), random(&mut rng, 4, 3, -2.0, 2.0));
        let mut tape = Tape::new();
        let (ev, gv, a) = (tape.leaf(e.clone()), tape.leaf(g.clone()), tape.leaf(Tensor::scalar(logit)));
        let out = gated_combine(&mut tape, ev, gv, a).unwrap();
        for ((x, y), z) in e.data().iter().zip(g.data()).zip(tape.value(out).data()) {
            prop_assert!(*z >= x.min(*y) - 1e-12 && *z <= x.max(*y) + 1e-12);
        }
    }

    #[test]
    fn view_and_memory_weights_sum_to_one(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let views: Vec<_> = (0..4).map(|_| tape.leaf(random(&mut rng, 6, 5, -3.0, 3.0))).collect();
        let w = tape.leaf(random(&mut rng, 5, 1, -1.0, 1.0));
        let b = tape.leaf(Tensor::scalar(rng.random_range(-1.0..1.0)));
        let (_, weights) = view_weighted_sum(&mut tape, &views, w, b).unwrap();
        let keys = tape.leaf(random(&mut rng, 3, 5, -1.0, 1.0));
        let att = memory_attention(&mut tape, views[0], keys).unwrap();
        for m in [tape.value(weights), tape.value(att)] {
            for i in 0..m.rows() {
                prop_assert!((m.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dataset_round_trips_through_files(seed in 0u64..10_000, districts in 1usize..5) {
        let cfg = CityConfig { n_regions: 9, n_districts: districts, n_trips: 60, seed, ..CityConfig::default() };
        let data = generate_city(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&data, dir.path()).unwrap();
        let back = load_dataset(&DatasetPaths::in_dir(dir.path()), None).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn loss_is_invariant_to_region_relabeling(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = generate_city(&CityConfig { n_regions: 5, n_districts: 2, n_trips: 50, seed, ..CityConfig::default() }).unwrap();
        let cfg = TrainConfig { dim: 4, heads: 2, memory: 3, seed, ..TrainConfig::default() };
        let prep = Prepared::new(&data);
        let mut params = ModelParams::init(5, &cfg).unwrap();
        for v in View::ALL {
            params.set(&format!("tau.{v}"), Tensor::scalar(0.05));
        }
        let perm = permutation(&mut rng, 5);
        let mut inv = vec![0; 5];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let permute = |m: &Tensor| Tensor::from_fn(5, 5, |i, j| m.get(perm[i], perm[j]));
        let graphs = [0, 1, 2, 3].map(|k| permute(&prep.graphs[k]));
        let permuted = Prepared::from_parts(graphs, trip_counts(&data.trips.relabel(&inv)));
        let mut moved = params.clone();
        for v in View::ALL {
            let name = format!("proj.{v}");
            moved.set(&name, params.get(&name).unwrap().select_rows(&perm));
        }
        let a = forward(&prep, &params, &cfg).unwrap().losses.total;
        let b = forward(&permuted, &moved, &cfg).unwrap().losses.total;
        prop_assert!((a - b).abs() <= 1e-9 * a.abs());
    }
}

/// Rows in the same district are more alike than rows across districts,
/// on average over ten seeds.
#[test]
fn same_district_features_are_more_similar() {
    for noise in [0.0, 0.1, 0.2] {
        let (mut within, mut across) = (Vec::new(), Vec::new());
        for seed in 0..10 {
            let data = generate_city(&CityConfig { noise_level: noise, seed, ..CityConfig::default() }).unwrap();
            let d = data.regions.districts.as_ref().unwrap();
            for table in [&data.poi, &data.checkins] {
                let c = &table.counts;
                for i in 0..c.rows() {
                    for j in i + 1..c.rows() {
                        let sim = dot(c.row(i), c.row(j)) / (norm(c.row(i)) * norm(c.row(j)));
                        if d[i] == d[j] { within.push(sim) } else { across.push(sim) }
                    }
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&within) > mean(&across), "noise {noise}: {} vs {}", mean(&within), mean(&across));
    }
}

#[test]
fn init_features_follow_graph() {
    let mut tape = Tape::new();
    let g = tape.leaf(Tensor::identity(3));
    let p = tape.leaf(Tensor::from_fn(3, 2, |i, j| (i * 2 + j) as f64));
    let h = init_view_features(&mut tape, g, p).unwrap();
    assert_eq!(tape.value(h), tape.value(p));
}
