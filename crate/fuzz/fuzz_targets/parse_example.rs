#![no_main]
use libfuzzer_sys::fuzz_target;
use tbcnn::data::{parse_example, RawPair};
use tbcnn::synth::toy_vocab;

fuzz_target!(|line: &str| {
    let vocab = toy_vocab(20, 4);
    let parsed = parse_example(line, 1, &vocab);
    if let Ok(raw) = RawPair::parse(line, 1) {
        let again = RawPair::parse(&raw.to_json(), 1).unwrap();
        assert_eq!(raw, again);
    } else {
        assert!(parsed.is_err());
    }
    if let Ok(Some(ex)) = parsed {
        assert!(!ex.premise.is_empty() && !ex.hypothesis.is_empty());
    }
});
