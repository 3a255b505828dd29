use gcnsim::cache::{Cache, CacheConfig};
use gcnsim::cost::{m_fs, m_row, MissRateFn};
use gcnsim::dataflow::{run_feature_sliced, run_row_product, RoundResult, TileConfig, Traversal};
use gcnsim::graph::{gen_synthetic, normalize_laplacian, GraphModel};
use gcnsim::matrix::gen_features;
use gcnsim::memory::MemSpec;
use gcnsim::Fixed;

fn measured(r: &RoundResult) -> MissRateFn<f64> {
    MissRateFn::Constant(r.feature_misses as f64 / r.feature_read_requests as f64)
}

#[test]
fn row_model_with_measured_miss_rate_matches_simulator() {
    for seed in 0..4 {
        let g = normalize_laplacian(&gen_synthetic::<Fixed>(GraphModel::Rmat, 256, 2000, seed).unwrap());
        let x = gen_features(256, 32, seed);
        let mut cache = Cache::new(CacheConfig::lru(8 * 1024, 4, 64)).unwrap();
        let (_, r) = run_row_product(&g, &x, &mut cache, &MemSpec::hbm2()).unwrap();
        let model = m_row(256, g.num_edges() as u64, 32, &measured(&r));
        assert_eq!(model.total_words.round() as u64, r.total_words());
        assert_eq!(model.topology_words as u64, r.topology_reads);
        assert_eq!(model.output_words as u64, r.output_writes);
    }
}

#[test]
fn sliced_model_with_measured_miss_rate_matches_simulator() {
    let g = normalize_laplacian(&gen_synthetic::<Fixed>(GraphModel::Uniform, 512, 4000, 9).unwrap());
    let e = g.num_edges() as u64;
    let x = gen_features(512, 64, 9);
    for b_f in [1usize, 2, 4] {
        for b_v in [1usize, 2, 4, 8] {
            let tiles = TileConfig::uniform(b_f, b_v).unwrap();
            let mut cache = Cache::new(CacheConfig::lru(8 * 1024, 4, 64)).unwrap();
            let (_, rounds) =
                run_feature_sliced(&g, &x, &tiles, &mut cache, &MemSpec::hbm2(), Traversal::RepeatOutput).unwrap();
            let t = RoundResult::accumulate(&rounds);
            let model = m_fs(512, e, 64, b_f as u64, b_v as u64, &measured(&t));
            assert_eq!(model.total_words.round() as u64, t.total_words(), "B_F={b_f} B_V={b_v}");
        }
    }
}
