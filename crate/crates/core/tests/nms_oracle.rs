use semgap::matcher::dedup;
use semgap::synthetic::{oracle_nms, random_detections};

#[test]
fn survivors_match_oracle_over_100_seeds() {
    for seed in 0..100 {
        let dets = random_detections(seed, 50, 3, 24);
        for thr in [0.3, 0.5, 0.7] {
            let fast = dedup(&dets, thr).unwrap();
            let slow = oracle_nms(&dets, thr);
            assert_eq!(fast, slow, "seed {seed}, threshold {thr}");
        }
    }
}

#[test]
fn survivors_are_pairwise_below_threshold() {
    for seed in 100..150 {
        let dets = random_detections(seed, 50, 2, 24);
        let kept = dedup(&dets, 0.5).unwrap();
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                if a.category_id == b.category_id {
                    assert!(a.mask.iou(&b.mask, false).unwrap() < 0.5);
                }
            }
        }
        assert!(kept.len() <= dets.len());
    }
}

#[test]
fn threshold_one_keeps_all_but_exact_duplicates() {
    for seed in 150..170 {
        let dets = random_detections(seed, 30, 2, 24);
        let kept = dedup(&dets, 1.0).unwrap();
        let mut distinct = 0;
        for (i, d) in dets.iter().enumerate() {
            if !dets[..i]
                .iter()
                .any(|e| e.category_id == d.category_id && e.mask == d.mask)
            {
                distinct += 1;
            }
        }
        assert_eq!(kept.len(), distinct, "seed {seed}");
    }
}
