use mrm_core::nets::ModelConfig;
use mrm_core::masking::MaskConfig;
use mrm_core::pretrain::{prepare_records, train, masked_token_accuracy, TrainConfig};
use mrm_core::record_io::synth::synth_generate;

fn main() {
    let t0 = std::time::Instant::now();
    let (records, vocab) = synth_generate(8, 13, 64).unwrap();
    let model = ModelConfig::desk(vocab.size());
    let prepared = prepare_records(&records, &vocab, &model).unwrap();
    for (lr, epochs) in [(3e-3f64, 2000usize), (1e-3, 2000)] {
        let cfg = TrainConfig {
            epochs,
            batch_size: 8,
            peak_lr: lr,
            warmup_epochs: Some(epochs / 10),
            seed: 4,
            mask: MaskConfig { image_ratio: 0.75, report_ratio: 0.5, seed: 4 },
            ..TrainConfig::default()
        };
        let t = std::time::Instant::now();
        let run = train(&prepared, &model, &cfg, None).unwrap();
        let last = run.log.last().unwrap();
        let acc = masked_token_accuracy(&prepared, &run.checkpoint.params, &model, &cfg.mask, epochs as u64).unwrap();
        println!("lr={lr} epochs={epochs}: L_I={:.6e} L_R={:.4e} acc={acc:.4} elapsed={:.1?}", last.loss.image, last.loss.report, t.elapsed());
        // intermediate losses
        for s in [0usize, 99, 499, 999, 1499, 1999] {
            if s < run.log.len() { let r = &run.log[s]; println!("  step {s}: L_R={:.4} L_I={:.6}", r.loss.report, r.loss.image); }
        }
    }
    println!("total {:.1?}", t0.elapsed());
}
