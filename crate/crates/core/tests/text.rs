mod common;

use dssvae::text::{delinearize, linearize, parse_bracketed, ParseTree};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LABELS: [&str; 5] = ["S", "NP", "VP", "NN", "DT"];

fn tree(seed: u64, n: usize) -> ParseTree {
    common::random_tree(&mut ChaCha8Rng::seed_from_u64(seed), n, &LABELS)
}

proptest! {
    #[test]
    fn linearize_round_trips(seed in any::<u64>(), n in 1usize..=30) {
        let t = tree(seed, n);
        let lin = linearize(&t);
        prop_assert_eq!(lin.len(), 2 * t.num_internal() + t.num_leaves());
        prop_assert_eq!(delinearize(lin.symbols()).unwrap(), t);
    }

    #[test]
    fn bracketed_text_round_trips(seed in any::<u64>(), n in 1usize..=30) {
        let t = tree(seed, n);
        prop_assert_eq!(parse_bracketed(&t.to_string()).unwrap(), t);
    }

    #[test]
    fn truncated_sequences_are_rejected(seed in any::<u64>(), n in 2usize..=30, cut in 1usize..60) {
        let t = tree(seed, n);
        let lin = linearize(&t);
        let cut = cut.min(lin.len() - 1);
        prop_assert!(delinearize(&lin.symbols()[..cut]).is_err());
    }
}
