#![allow(dead_code)]

use lesionkit::condmap::{build_pairs, LesionPair, PairParams};
use lesionkit::corpus::Corpus;
use lesionkit::phantom::{gen_corpus_in_memory, PhantomSpec};

pub fn phantom(n: usize, image_size: usize, seed: u64) -> Corpus {
    let spec = PhantomSpec { image_size, seed, ..PhantomSpec::default() };
    gen_corpus_in_memory(&spec, n).unwrap()
}

pub fn pairs(corpus: &Corpus, patch_size: usize) -> Vec<LesionPair> {
    build_pairs(corpus, "test", &PairParams { patch_size, ..PairParams::default() }).unwrap().pairs
}

/// Bit patterns of every parameter value, for exact change detection.
pub fn fingerprint<T: lesionkit_tensor::Scalar>(store: &lesionkit_tensor::ParamStore<T>) -> Vec<u64> {
    store.iter().flat_map(|p| p.value.data().iter().map(|v| v.to_f64_lossy().to_bits())).collect()
}
