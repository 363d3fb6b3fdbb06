#![no_main]
use libfuzzer_sys::fuzz_target;
use tbcnn::embeddings::read_embeddings;
use tbcnn::synth::toy_vocab;

fuzz_target!(|data: &[u8]| {
    let vocab = toy_vocab(10, 2);
    if let Ok(table) = read_embeddings(data, &vocab, 3, 0) {
        assert_eq!(table.rows(), vocab.num_words());
        assert_eq!(table.dim(), 3);
    }
});
