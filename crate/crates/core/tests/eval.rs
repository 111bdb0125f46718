use geoseg::eval::{
    confusion, diff_image, f1_score, scores, ConfusionMatrix, DIFF_AGREE, DIFF_DISAGREE,
    DIFF_UNKNOWN,
};
use geoseg::{EvalError, LabelGrid, NUM_CLASSES, UNKNOWN};
use proptest::prelude::*;

#[test]
fn hand_counted_four_pixel_grid() {
    let reference = LabelGrid::new(2, 2, vec![0, 0, 2, 5]);
    let predicted = LabelGrid::new(2, 2, vec![0, 1, 2, 2]);
    let cm = confusion(&reference, &predicted, None).unwrap();
    let mut want = ConfusionMatrix::default();
    want.counts[0][0] = 1;
    want.counts[0][1] = 1;
    want.counts[2][2] = 1;
    want.counts[5][2] = 1;
    assert_eq!(cm, want);
    let s = scores(&cm);
    assert_eq!(s.accuracy, 0.5);
    assert_eq!(s.precision[2], 0.5);
    assert_eq!(s.recall[0], 0.5);
    assert_eq!(s.precision[1], 0.0);
}

#[test]
fn identical_grids_give_a_diagonal_and_perfect_scores() {
    let g = LabelGrid::new(3, 2, vec![0, 1, 2, 3, 4, 5]);
    let cm = confusion(&g, &g, None).unwrap();
    assert!(cm.is_diagonal());
    let s = scores(&cm);
    assert_eq!(s.accuracy, 1.0);
    assert!(s
        .precision
        .iter()
        .chain(&s.recall)
        .chain(&s.f1)
        .all(|&v| v == 1.0));
}

#[test]
fn empty_mask_gives_zero_matrix() {
    let g = LabelGrid::filled(3, 3, 1);
    let cm = confusion(&g, &g, Some(&[false; 9])).unwrap();
    assert_eq!(cm, ConfusionMatrix::default());
}

#[test]
fn absent_class_scores_zero() {
    let g = LabelGrid::filled(2, 2, 0);
    let s = scores(&confusion(&g, &g, None).unwrap());
    assert_eq!((s.precision[3], s.recall[3], s.f1[3]), (0.0, 0.0, 0.0));
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let a = LabelGrid::filled(2, 3, 0);
    let b = LabelGrid::filled(3, 2, 0);
    assert!(matches!(
        confusion(&a, &b, None),
        Err(EvalError::Dimension { .. })
    ));
    assert!(diff_image(&a, &b).is_err());
}

#[test]
fn building_row_f1() {
    assert!((100.0 * f1_score(0.95, 0.944) - 94.7).abs() < 0.05);
}

#[test]
fn diff_colors() {
    let a = LabelGrid::new(3, 1, vec![0, 1, UNKNOWN]);
    let b = LabelGrid::new(3, 1, vec![0, 2, 2]);
    let d = diff_image(&a, &b).unwrap();
    assert_eq!(d.color(), &[DIFF_AGREE, DIFF_DISAGREE, DIFF_UNKNOWN]);
    let same = diff_image(&a, &a).unwrap();
    assert_eq!(same.color()[..2], [DIFF_AGREE, DIFF_AGREE]);
}

fn grid_strategy() -> impl Strategy<Value = (LabelGrid, LabelGrid, Vec<bool>)> {
    (1usize..8, 1usize..8).prop_flat_map(|(w, h)| {
        let n = w * h;
        (
            proptest::collection::vec(0u8..7, n),
            proptest::collection::vec(0u8..7, n),
            proptest::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(a, b, m)| (LabelGrid::new(w, h, a), LabelGrid::new(w, h, b), m))
    })
}

proptest! {
    #[test]
    fn totals_match_counted_pixels((a, b, mask) in grid_strategy()) {
        let cm = confusion(&a, &b, Some(&mask)).unwrap();
        let counted = (0..a.len())
            .filter(|&i| mask[i] && a.as_slice()[i] < UNKNOWN && b.as_slice()[i] < UNKNOWN)
            .count() as u64;
        prop_assert_eq!(cm.total(), counted);
        let s = scores(&cm);
        if counted > 0 {
            prop_assert!((s.accuracy - cm.trace() as f64 / counted as f64).abs() < 1e-12);
        }
        for c in 0..NUM_CLASSES {
            let (p, r, f) = (s.precision[c], s.recall[c], s.f1[c]);
            if p + r > 0.0 {
                prop_assert!(f >= p.min(r) - 1e-12 && f <= p.max(r) + 1e-12);
            } else {
                prop_assert_eq!(f, 0.0);
            }
        }
    }

    #[test]
    fn self_confusion_is_diagonal((a, _, _) in grid_strategy()) {
        prop_assert!(confusion(&a, &a, None).unwrap().is_diagonal());
    }
}
