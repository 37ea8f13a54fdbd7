//! Rough single-machine throughput probe. Run with:
//!
//! ```text
//! cargo run -p randset --example throughput --release
//! ```
//!
//! Prints matmul GFLOP/s, encoder clouds/s, and probe epoch times so
//! experiment configs can be sized for the machine at hand.


use randset::encoders::{build_encoder, EncoderSpec};
use randset::nn::NormKind;
use randset::probes::{train_probe, ProbeSpec};
use randset::rng::RngState;
use randset::{EmbeddingMatrix, Matrix, PointCloud};
use std::time::Instant;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = RngState::new(seed);
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.uniform(-1.0, 1.0);
    }
    m
}

fn time_matmul(m: usize, k: usize, n: usize, reps: usize) -> f64 {
    let a = random_matrix(m, k, 1);
    let b = random_matrix(k, n, 2);
    let t = Instant::now();
    let mut acc = 0.0;
    for _ in 0..reps {
        acc += a.matmul(&b).unwrap().data()[0];
    }
    let dt = t.elapsed().as_secs_f64();
    assert!(acc.is_finite());
    2.0 * (m * k * n * reps) as f64 / dt / 1e9
}

fn main() {
    println!(
        "matmul 32x1024*1024x512 (probe step): {:.2} GFLOP/s",
        time_matmul(32, 1024, 512, 200)
    );
    println!(
        "matmul 512x128*128x1024 (encoder block): {:.2} GFLOP/s",
        time_matmul(512, 128, 1024, 200)
    );

    // Encoder throughput: PointNet with instance norm, 4 blocks, 512-point
    // 2-D clouds (the MNIST-PC shape).
    let spec = EncoderSpec::pointnet(2, 4, NormKind::Instance, 7).unwrap();
    let params = build_encoder(&spec).unwrap();
    let n_clouds = 64;
    let clouds: Vec<PointCloud> = (0..n_clouds)
        .map(|i| {
            PointCloud::new(random_matrix(512, 2, 100 + i as u64), 0, format!("c{i}")).unwrap()
        })
        .collect();
    let t = Instant::now();
    for c in &clouds {
        params.embed_cloud(c).unwrap();
    }
    let dt = t.elapsed().as_secs_f64();
    println!("pointnet-in4 embed: {:.1} clouds/s", n_clouds as f64 / dt);

    // Probe epoch times on synthetic 1024-dim embeddings.
    let n_train = 10_000;
    let em = EmbeddingMatrix {
        values: random_matrix(n_train, 1024, 3),
        labels: (0..n_train).map(|i| i % 10).collect(),
        ids: (0..n_train).map(|i| i.to_string()).collect(),
        class_names: (0..10).map(|c| c.to_string()).collect(),
        dataset_name: "synthetic".into(),
        encoder_tag: "none".into(),
        encoder_seed: 0,
        order_seed: 0,
        batch_size: 32,
    };
    let test = em.take(&(0..2000).collect::<Vec<_>>()).unwrap();
    for kind in ["linclf", "nonlinclf"] {
        let mut spec = ProbeSpec::linear(10, 1);
        if kind == "nonlinclf" {
            spec = ProbeSpec::nonlinear(10, 1);
        }
        spec.epochs = 1;
        let t = Instant::now();
        train_probe(&spec, &em, &test).unwrap();
        println!(
            "{kind} epoch on {n_train} embeddings: {:.2} s",
            t.elapsed().as_secs_f64()
        );
    }
}
