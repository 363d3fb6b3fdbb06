#![no_main]
use libfuzzer_sys::fuzz_target;
use tbcnn::tree::validate_heads;

fuzz_target!(|data: &[u8]| {
    let heads: Vec<usize> = data.iter().map(|&b| usize::from(b % 16)).collect();
    if let Ok((parents, root)) = validate_heads(&heads) {
        assert_eq!(parents.len(), heads.len());
        assert!(parents[root].is_none());
        assert_eq!(parents.iter().filter(|p| p.is_none()).count(), 1);
    }
});
