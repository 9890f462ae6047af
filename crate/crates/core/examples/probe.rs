use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sspt_core::engine::{FailureFlag, ParameterSample, TrackingRecord};
use sspt_core::geometry::Vec3;
use sspt_core::io::{read_records, write_records};

fn random_records(n: usize, seed: u64) -> Vec<TrackingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut index = 0u64;
    (0..n)
        .map(|_| {
            let accepted = rng.gen::<f64>() < 0.4;
            let flags = if accepted {
                vec![]
            } else {
                let k = 1 + (rng.gen::<f64>() * 2.0) as usize;
                FailureFlag::ALL[..k].to_vec()
            };
            let step = 0.2 + rng.gen::<f64>() * 1.8;
            let radius = 2.0 + rng.gen::<f64>() * 98.0;
            TrackingRecord {
                seed_pos: Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                params: ParameterSample {
                    step_size: step,
                    radius,
                    cone_angle: 2.0 * (step / radius).asin(),
                    fod_threshold: 0.1,
                },
                accepted,
                flags,
                n_backtracks: (rng.gen::<f64>() * 64.0) as u32,
                n_points: 1 + (rng.gen::<f64>() * 400.0) as u32,
                duration_us: (rng.gen::<f64>() * 1e6) as u64,
                streamline_index: accepted.then(|| {
                    index += 1;
                    index - 1
                }),
            }
        })
        .collect()
}

fn main() {
    let records = random_records(10_000, 1);
    write_records("/tmp/probe2.jsonl", &records).unwrap();
    let back = read_records("/tmp/probe2.jsonl").unwrap();
    for (i, (a, b)) in back.iter().zip(&records).enumerate() {
        if a != b {
            println!("first mismatch at {i}");
            println!("back: {a:?}");
            println!("orig: {b:?}");
            break;
        }
    }
    println!("lens: {} vs {}", back.len(), records.len());
}
