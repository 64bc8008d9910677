use std::time::Instant;
use treesum_core::model::{batch_loss, prepare_example, ModelConfig, SummaryModel};
use treesum_core::nn::Tape;
use treesum_core::preprocess::{
    build_vocab, encode_example, generate_records, preprocess_record, Channel, Limits,
};

#[test]
#[ignore]
fn probe_forward_backward_speed() {
    let records = generate_records(11, 8);
    let limits = Limits::default();
    let examples: Vec<_> = records
        .iter()
        .map(|r| preprocess_record(&r.id, &r.code, r.summary.as_deref(), &limits).unwrap())
        .collect();
    let ast_vocab = build_vocab(&examples, Channel::Ast, 2000);
    let code_vocab = build_vocab(&examples, Channel::Code, 2000);
    let summary_vocab = build_vocab(&examples, Channel::Summary, 2000);
    let encoded: Vec<_> = examples
        .iter()
        .map(|e| encode_example(e, &ast_vocab, &code_vocab, &summary_vocab))
        .collect();
    let config = ModelConfig {
        d: 128,
        heads: 4,
        enc_layers: 2,
        dec_layers: 2,
        ff: 512,
        k_clip: 16,
        dropout: 0.0,
        ast_vocab: ast_vocab.size(),
        code_vocab: code_vocab.size(),
        summary_vocab: summary_vocab.size(),
        max_code_len: 200,
        max_summary_len: 30,
        no_aggregation: false,
        no_copy: false,
    };
    let model: SummaryModel<f32> = SummaryModel::new(config.clone(), 3);
    let prepared: Vec<_> = encoded
        .iter()
        .map(|e| prepare_example(e, &summary_vocab, false))
        .collect();
    let t0 = Instant::now();
    let reps = 5;
    for _ in 0..reps {
        let tape: Tape<f32> = Tape::new(0);
        let b = tape.bind(&model.params);
        let loss = batch_loss(&tape, &b, &config, &prepared, false).unwrap();
        let _ = tape.backward(loss).unwrap();
    }
    let per_example = t0.elapsed().as_secs_f64() / (reps * prepared.len()) as f64;
    println!("fwd+bwd per example at d=128: {:.1} ms", per_example * 1e3);
}
