use super::{AnnotatedExample, Token};
use std::collections::BTreeSet;

/// Which rationale set(s) a variant is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetSelector {
    Index(usize),
    Union,
}

/// Input variants: the full input, the rationale alone, or the input with
/// the rationale removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    RationaleOnly(SetSelector),
    NonRationale(SetSelector),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VariantError {
    #[error("rationale set {index} requested but example has {available}")]
    BadSetIndex { index: usize, available: usize },
}

fn selected(ex: &AnnotatedExample, sel: SetSelector) -> Result<BTreeSet<usize>, VariantError> {
    match sel {
        SetSelector::Union => Ok(ex.rationale_union()),
        SetSelector::Index(index) => {
            ex.rationale_sets
                .get(index)
                .map(|s| s.to_set())
                .ok_or(VariantError::BadSetIndex {
                    index,
                    available: ex.rationale_sets.len(),
                })
        }
    }
}

/// Keep (or drop) `positions` from every segment, preserving segmentation
/// and token order. Tokens keep their source positions.
pub fn filter_positions(
    ex: &AnnotatedExample,
    positions: &BTreeSet<usize>,
    keep: bool,
) -> Vec<Vec<Token>> {
    ex.segments
        .iter()
        .map(|seg| {
            seg.iter()
                .filter(|t| positions.contains(&t.index) == keep)
                .cloned()
                .collect()
        })
        .collect()
}

pub fn build_variant(ex: &AnnotatedExample, v: Variant) -> Result<Vec<Vec<Token>>, VariantError> {
    match v {
        Variant::Full => Ok(ex.segments.clone()),
        Variant::RationaleOnly(sel) => Ok(filter_positions(ex, &selected(ex, sel)?, true)),
        Variant::NonRationale(sel) => Ok(filter_positions(ex, &selected(ex, sel)?, false)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, RationaleSet, Task};
    use proptest::prelude::*;

    fn abcd(sets: Vec<Vec<usize>>) -> AnnotatedExample {
        AnnotatedExample::from_texts(
            "x",
            Task::Sa,
            vec![vec!["a".into(), "b".into(), "c".into(), "d".into()]],
            Label::Class("pos".into()),
            sets.into_iter().map(RationaleSet::new).collect(),
        )
    }

    fn texts(segs: &[Vec<Token>]) -> Vec<Vec<&str>> {
        segs.iter()
            .map(|s| s.iter().map(|t| t.text.as_str()).collect())
            .collect()
    }

    #[test]
    fn rationale_and_complement() {
        let ex = abcd(vec![vec![1, 3]]);
        let r = build_variant(&ex, Variant::RationaleOnly(SetSelector::Index(0))).unwrap();
        let nr = build_variant(&ex, Variant::NonRationale(SetSelector::Index(0))).unwrap();
        assert_eq!(texts(&r), vec![vec!["b", "d"]]);
        assert_eq!(texts(&nr), vec![vec!["a", "c"]]);
        assert_eq!(build_variant(&ex, Variant::Full).unwrap(), ex.segments);
    }

    #[test]
    fn union_variant() {
        let ex = abcd(vec![vec![0], vec![1]]);
        let r = build_variant(&ex, Variant::RationaleOnly(SetSelector::Union)).unwrap();
        assert_eq!(texts(&r), vec![vec!["a", "b"]]);
    }

    #[test]
    fn bad_set_index() {
        let ex = abcd(vec![vec![0]]);
        assert_eq!(
            build_variant(&ex, Variant::NonRationale(SetSelector::Index(1))),
            Err(VariantError::BadSetIndex {
                index: 1,
                available: 1
            })
        );
    }

    #[test]
    fn pair_segmentation_is_preserved() {
        let ex = AnnotatedExample::from_texts(
            "p",
            Task::Sts,
            vec![vec!["a".into(), "b".into()], vec!["c".into(), "d".into()]],
            Label::Class("1".into()),
            vec![RationaleSet::new(vec![1, 2])],
        );
        let r = build_variant(&ex, Variant::RationaleOnly(SetSelector::Index(0))).unwrap();
        assert_eq!(texts(&r), vec![vec!["b"], vec!["c"]]);
        let nr = build_variant(&ex, Variant::NonRationale(SetSelector::Index(0))).unwrap();
        assert_eq!(texts(&nr), vec![vec!["a"], vec!["d"]]);
    }

    proptest! {
        #[test]
        fn rationale_and_complement_partition_the_input(
            len in 1usize..12,
            picks in proptest::collection::btree_set(0usize..12, 1..6),
        ) {
            let picks: Vec<usize> = picks.into_iter().filter(|&i| i < len).collect();
            prop_assume!(!picks.is_empty());
            let ex = AnnotatedExample::from_texts(
                "x",
                Task::Sa,
                vec![(0..len).map(|i| format!("t{}", i % 3)).collect()],
                Label::Class("c".into()),
                vec![RationaleSet::new(picks)],
            );
            let r = build_variant(&ex, Variant::RationaleOnly(SetSelector::Index(0))).unwrap();
            let nr = build_variant(&ex, Variant::NonRationale(SetSelector::Index(0))).unwrap();
            let mut merged: Vec<Token> = r.concat().into_iter().chain(nr.concat()).collect();
            merged.sort_by_key(|t| t.index);
            prop_assert_eq!(merged, ex.segments.concat());
            prop_assert!(r[0].windows(2).all(|w| w[0].index < w[1].index));
            prop_assert!(nr[0].windows(2).all(|w| w[0].index < w[1].index));
        }
    }
}
