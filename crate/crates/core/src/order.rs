//! Feasibility-first lexicographic ordering.

use std::cmp::Ordering;

use crate::types::Id;

/// Sort key under the stage preference: feasible before infeasible, then
/// larger score, then smaller id. `Ordering::Less` means "ranked first".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankKey {
    pub feasible: bool,
    pub score: f64,
    pub id: Id,
}

impl RankKey {
    pub fn new(feasible: bool, score: f64, id: Id) -> Self {
        Self { feasible, score, id }
    }
}

/// NaN scores rank as negative infinity.
fn sanitize(score: f64) -> f64 {
    if score.is_nan() {
        f64::NEG_INFINITY
    } else {
        score
    }
}

/// Compares two candidates; `Less` means `a` precedes `b`.
pub fn lex_compare(a: &RankKey, b: &RankKey) -> Ordering {
    b.feasible
        .cmp(&a.feasible)
        .then_with(|| sanitize(b.score).total_cmp(&sanitize(a.score)))
        .then_with(|| a.id.cmp(&b.id))
}

/// True when `a` strictly dominates `b` under the preference, ignoring ids.
pub fn strictly_dominates(a: &RankKey, b: &RankKey) -> bool {
    (a.feasible, sanitize(a.score)) > (b.feasible, sanitize(b.score))
}

impl Eq for RankKey {}

impl PartialOrd for RankKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RankKey {
    fn cmp(&self, other: &Self) -> Ordering {
        lex_compare(self, other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn feasible_dominates_infeasible() {
        let a = RankKey::new(true, -5.0, 1);
        let b = RankKey::new(false, 10.0, 2);
        assert_eq!(lex_compare(&a, &b), Ordering::Less);
    }

    #[test]
    fn larger_score_wins_within_class() {
        let a = RankKey::new(true, 3.0, 1);
        let b = RankKey::new(true, 7.0, 2);
        assert_eq!(lex_compare(&a, &b), Ordering::Greater);
    }

    #[test]
    fn ties_go_to_smaller_id() {
        let a = RankKey::new(false, 1.0, 2);
        let b = RankKey::new(false, 1.0, 9);
        assert_eq!(lex_compare(&a, &b), Ordering::Less);
        assert!(!strictly_dominates(&a, &b));
    }

    #[test]
    fn nan_behaves_like_negative_infinity() {
        let a = RankKey::new(false, f64::NAN, 1);
        let b = RankKey::new(false, f64::NEG_INFINITY, 2);
        assert_eq!(lex_compare(&a, &b), Ordering::Less);
        let c = RankKey::new(false, -1e300, 3);
        assert_eq!(lex_compare(&c, &a), Ordering::Less);
    }

    fn key() -> impl Strategy<Value = RankKey> {
        (
            any::<bool>(),
            prop_oneof![(-5i32..5).prop_map(f64::from), Just(f64::NEG_INFINITY), Just(f64::NAN)],
            0u64..6,
        )
            .prop_map(|(f, s, id)| RankKey::new(f, s, id))
    }

    proptest! {
        #[test]
        fn lex_compare_is_a_total_order(a in key(), b in key(), c in key()) {
            // antisymmetry
            prop_assert_eq!(lex_compare(&a, &b), lex_compare(&b, &a).reverse());
            // transitivity
            if lex_compare(&a, &b) != Ordering::Greater && lex_compare(&b, &c) != Ordering::Greater {
                prop_assert_ne!(lex_compare(&a, &c), Ordering::Greater);
            }
            // equality only for identical (feasible, score, id)
            if lex_compare(&a, &b) == Ordering::Equal {
                prop_assert_eq!(a.id, b.id);
                prop_assert_eq!(a.feasible, b.feasible);
            }
        }
    }
}
