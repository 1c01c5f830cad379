use std::time::Instant;

use kinit::ekm::{train, EkmModel, Example, ModelConfig, TrainConfig};

fn main() {
    let model = EkmModel::<f32>::new(ModelConfig::default(), 94, 13, 1).unwrap();
    let set: Vec<Example> = (0..64)
        .map(|i| Example {
            input: (0..94 * 13)
                .map(|j| ((i * 31 + j * 7) % 17) as f32 / 17.0 - 0.5)
                .collect(),
            label: i % 4,
            clip_id: format!("c{i}"),
        })
        .collect();
    let t = Instant::now();
    let cfg = TrainConfig {
        epochs: 2,
        ..Default::default()
    };
    let (_, h) = train(model, &set, &[], &cfg).unwrap();
    let dt = t.elapsed().as_secs_f64();
    println!(
        "{:?}\nper-sample-step {:.2} ms",
        h.epochs,
        dt * 1000.0 / 128.0
    );
}
