use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gsnn_bench::random_undirected;
use gsnn_core::layers::{Appnp, ForwardCtx, Gat, GatConfig, Gcn, Gin, GinEps, LayerParams, Linear, PreparedGraph, Sgc};
use gsnn_core::Tape;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Forward plus backward of one layer on a Cora-sized random graph.
fn layers(c: &mut Criterion) {
    let g = random_undirected(2708, 3.9, 64, 3);
    let prepared = PreparedGraph::new(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = LayerParams::new();
    let gcn = Gcn::new(&mut params, "gcn", 64, 16, true, &mut rng);
    let sgc = Sgc::new(&mut params, "sgc", 64, 16, 2, &mut rng).unwrap();
    let gat = Gat::new(&mut params, "gat", 64, GatConfig { heads: 8, head_dim: 8, ..GatConfig::default() }, &mut rng).unwrap();
    let gin = Gin::new(&mut params, "gin", 64, 16, 16, GinEps::Fixed(0.0), &mut rng);
    let lin = Linear::new(&mut params, "lin", 64, 16, true, &mut rng);
    let appnp = Appnp::new(10, 0.1).unwrap();

    let mut group = c.benchmark_group("layer_fwd_bwd");
    group.sample_size(10);
    for name in ["gcn", "sgc", "gat", "gin", "appnp"] {
        group.bench_function(name, |b| {
            b.iter(|| {
                let tape = Tape::new();
                let p = params.bind(&tape);
                let x = tape.constant(g.x().clone());
                let out = match name {
                    "gcn" => gcn.forward(&p, &prepared, x),
                    "sgc" => sgc.forward(&p, &prepared, x),
                    "gat" => gat.forward(&p, &prepared, x, &mut ForwardCtx::eval()),
                    "gin" => gin.forward(&p, prepared.edge_index(), x),
                    _ => lin.forward(&p, x).and_then(|h| appnp.forward(&prepared, h)),
                }
                .unwrap();
                out.sum().unwrap().backward().unwrap();
                black_box(p.get(lin.weight()).grad());
            })
        });
    }
    group.finish();
}

criterion_group!(benches, layers);
criterion_main!(benches);
