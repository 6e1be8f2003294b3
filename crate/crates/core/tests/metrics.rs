//! AUC and SER against brute-force recomputations.

mod common;

use common::oracles::{check_auc, check_ser, random_map_case};
use common::rng;
use hsad_core::detection::{auc, normalize_map, roc_points, ser, DetectionMap, GroundTruthMask};

#[test]
fn auc_equals_mann_whitney() {
    check_auc(1000, 7).unwrap();
}

#[test]
fn ser_equals_naive_sum() {
    check_ser(1000, 8).unwrap();
}

#[test]
fn roc_is_a_monotone_staircase() {
    let mut r = rng(9);
    for _ in 0..200 {
        let (map, gt) = random_map_case(&mut r);
        let pts = roc_points(&map, &gt).unwrap();
        assert_eq!(pts[0], (0.0, 0.0));
        assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        for w in pts.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }
}

#[test]
fn worked_example() {
    let gt = GroundTruthMask::new(1, 4, vec![true, false, true, false]).unwrap();
    let map = DetectionMap::new(1, 4, vec![0.8, 0.9, 0.7, 0.1]).unwrap();
    assert_eq!(auc(&map, &gt).unwrap(), 0.5);
    assert_eq!(roc_points(&map, &gt).unwrap(), vec![(0.0, 0.0), (0.5, 0.0), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]);
}

#[test]
fn perfect_and_constant_maps() {
    let labels = vec![true, false, false, true, false, false];
    let gt = GroundTruthMask::new(2, 3, labels.clone()).unwrap();
    let indicator = DetectionMap::new(2, 3, labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect()).unwrap();
    assert_eq!(auc(&indicator, &gt).unwrap(), 1.0);
    assert_eq!(ser(&indicator, &gt).unwrap(), 0.0);
    let constant = normalize_map(&DetectionMap::new(2, 3, vec![0.4; 6]).unwrap());
    assert_eq!(auc(&constant, &gt).unwrap(), 0.5);
    // Constant maps normalize to zero, so every anomaly pixel misses by one.
    assert!((ser(&constant, &gt).unwrap() - 100.0 * 2.0 / 6.0).abs() < 1e-12);
    let inverted = auc(&indicator, &gt.inverted()).unwrap();
    assert_eq!(inverted, 0.0);
}

#[test]
fn degenerate_inputs_rejected() {
    let all_background = GroundTruthMask::new(1, 3, vec![false; 3]).unwrap();
    let map = DetectionMap::new(1, 3, vec![0.1, 0.2, 0.3]).unwrap();
    assert!(auc(&map, &all_background).is_err());
    let gt = GroundTruthMask::new(1, 3, vec![true, false, false]).unwrap();
    let wide = DetectionMap::new(3, 1, vec![0.1, 0.2, 0.3]).unwrap();
    assert!(auc(&wide, &gt).is_err());
    let unnormalized = DetectionMap::new(1, 3, vec![0.1, 2.0, 0.3]).unwrap();
    assert!(ser(&unnormalized, &gt).is_err());
}
