use gcnsim::cache::CacheConfig;
use gcnsim::dataflow::{run_tiled, SimOptions, TileConfig};
use gcnsim::graph::{gen_synthetic, normalize_laplacian, Csr, GraphModel};
use gcnsim::matrix::gen_features;
use gcnsim::memory::MemSpec;
use gcnsim::multichip::{run_multichip, LinkSpec};
use gcnsim::oracle::dense_aggregate;
use gcnsim::{CsrGraph, Fixed};

fn circulant(v: usize, degree: usize) -> CsrGraph {
    let edges = (0..v).flat_map(|i| (1..=degree).map(move |k| (i as u32, ((i + k) % v) as u32)));
    normalize_laplacian(&Csr::<Fixed>::from_edges(v, edges).unwrap())
}

fn link(bw: f64) -> LinkSpec {
    LinkSpec {
        bytes_per_cycle: bw,
        hop_latency_cycles: 20,
    }
}

fn cache() -> CacheConfig {
    CacheConfig::lru(16 * 1024, 8, 64)
}

#[test]
fn split_output_matches_single_chip() {
    let g = normalize_laplacian(&gen_synthetic::<Fixed>(GraphModel::Rmat, 256, 2000, 3).unwrap());
    let x = gen_features(256, 16, 3);
    let reference = dense_aggregate(&g, &x).unwrap();
    for n in [1, 2, 4, 8] {
        let run = run_multichip(&g, &x, n, 2, &cache(), &MemSpec::hbm2(), &link(256.0), &SimOptions::default()).unwrap();
        assert_eq!(run.output, reference, "{n} chips");
        assert_eq!(run.total_send_bytes_per_chip() as usize * n, (n - 1) * 256 * 16 * 4);
        assert!(run.plans.iter().all(|p| p.steps == n - 1));
    }
}

#[test]
fn one_chip_is_the_static_run() {
    let g = normalize_laplacian(&gen_synthetic::<Fixed>(GraphModel::Uniform, 128, 900, 4).unwrap());
    let x = gen_features(128, 16, 4);
    let mem = MemSpec::hbm2();
    let run = run_multichip(&g, &x, 1, 2, &cache(), &mem, &link(256.0), &SimOptions::default()).unwrap();
    let mut c = gcnsim::cache::Cache::new(cache()).unwrap();
    let (_, rounds) = run_tiled(&g, &x, &TileConfig::uniform(2, 1).unwrap(), &mut c, &mem, &SimOptions::default()).unwrap();
    assert_eq!(run.report.cycles, rounds.iter().map(|r| r.cycles).sum::<u64>());
    assert_eq!(run.report.exposed_comm_cycles, 0);
}

#[test]
fn speedup_non_decreasing_in_link_bandwidth() {
    let g = circulant(512, 8);
    let x = gen_features(512, 64, 5);
    let mem = MemSpec::hbm2();
    let opts = SimOptions::default();
    let base = run_multichip(&g, &x, 1, 4, &cache(), &mem, &link(32.0), &opts).unwrap().report.cycles;
    for n in [2, 4, 8] {
        let mut last = 0.0;
        for bw in [32.0, 64.0, 128.0, 256.0] {
            let cycles = run_multichip(&g, &x, n, 4, &cache(), &mem, &link(bw), &opts).unwrap().report.cycles;
            let speedup = base as f64 / cycles as f64;
            assert!(speedup >= last, "n={n} bw={bw}: {speedup} < {last}");
            last = speedup;
        }
    }
}

#[test]
fn denser_graphs_scale_better() {
    let mem = MemSpec::hbm2();
    let opts = SimOptions::default();
    let n = 8;
    let mut last = 0.0;
    for d in [2, 4, 8, 16, 32] {
        let g = circulant(1024, d);
        let x = gen_features(1024, 64, 6);
        let base = run_multichip(&g, &x, 1, 4, &cache(), &mem, &link(32.0), &opts).unwrap().report.cycles;
        let multi = run_multichip(&g, &x, n, 4, &cache(), &mem, &link(32.0), &opts).unwrap().report.cycles;
        let efficiency = base as f64 / multi as f64 / n as f64;
        assert!(efficiency >= last, "degree {d}: {efficiency} < {last}");
        last = efficiency;
    }
}

#[test]
fn rejects_bad_chip_counts() {
    let g = circulant(64, 2);
    let x = gen_features(64, 4, 1);
    for n in [0, 3, 128] {
        assert!(run_multichip(&g, &x, n, 1, &cache(), &MemSpec::hbm2(), &link(32.0), &SimOptions::default()).is_err());
    }
}
