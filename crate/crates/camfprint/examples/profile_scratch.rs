use camfprint::data::stratified_split;
use camfprint::signature::{build_signature_net, train_phase1, Phase1Config};
use camfprint::synth::{generate_synthetic, SynthConfig};
use std::time::Instant;

fn main() {
    let dir = std::env::temp_dir().join("camfprint-tune");
    let _ = std::fs::remove_dir_all(&dir);
    let synth = SynthConfig {
        n_devices: 8,
        images_per_device: 40,
        image_size: (64, 64),
        seed: 1234,
        ..Default::default()
    };
    let manifest = generate_synthetic(&synth, &dir).unwrap();
    let manifest = stratified_split(&manifest, 0.70, 0.15, 99).unwrap();

    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let batch: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(16);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(10);

    let cfg = Phase1Config {
        epochs,
        stop_epoch: epochs,
        learning_rate: lr,
        batch_size: batch,
        seed: 7,
        ..Default::default()
    };
    let net = build_signature_net(8, (64, 64), cfg.seed).unwrap();
    let t = Instant::now();
    let out = train_phase1(net, &manifest, &cfg).unwrap();
    for e in &out.log {
        println!(
            "epoch {:2}: train_loss {:.4} acc {:.3} | val_loss {:.4} acc {:.3}",
            e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
        );
    }
    println!("total {:?} (lr {lr}, batch {batch})", t.elapsed());
}
