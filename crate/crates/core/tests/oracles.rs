mod common;

use common::{compare_formulas, FORMULAS};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn formulas_agree_with_brute_force(seed in any::<u64>()) {
        let results = compare_formulas(seed);
        prop_assert_eq!(results.len(), FORMULAS.len());
        for (name, ok, detail) in results {
            prop_assert!(ok, "{} disagrees: {}", name, detail);
        }
    }
}
