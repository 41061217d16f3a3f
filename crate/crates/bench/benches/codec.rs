use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use fabricmigrate_core::link::{decode_stream, encode_frame, Frame, FrameKind, MAX_PAYLOAD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frames(count: usize) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..count)
        .map(|i| {
            let payload = (0..rng.random_range(0..=MAX_PAYLOAD)).map(|_| rng.random()).collect();
            Frame::new(i as u16, FrameKind::ALL[i % FrameKind::ALL.len()], i as u8, payload)
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let frames = frames(256);
    let stream: Vec<u8> = frames.iter().flat_map(|f| encode_frame(f).unwrap()).collect();

    let mut group = c.benchmark_group("codec");
    group.throughput(Throughput::Bytes(stream.len() as u64));
    group.bench_function("encode_256", |b| {
        b.iter(|| {
            for f in &frames {
                black_box(encode_frame(black_box(f)).unwrap());
            }
        })
    });
    group.bench_function("decode_256", |b| b.iter(|| black_box(decode_stream(black_box(&stream)))));
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
