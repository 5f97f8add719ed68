use dist_web::{clip_views, surface, top_half, two_class_score};

#[test]
fn surface_corners_match_the_score_formula() {
    let s = surface(5).unwrap();
    assert_eq!(s.len(), 25);
    assert_eq!(s[0], 0.0);
    assert!((s[24] - 0.5).abs() < 1e-12);
    assert!((two_class_score(0.8, 0.9).unwrap() - 0.463938).abs() < 1e-6);
    // rows follow the second checkpoint, which carries twice the weight
    assert!(s[5 * 4] > s[4]);
}

#[test]
fn top_half_uses_a_strict_median_cut() {
    let (median, picked) = top_half(&[0.1, 0.4, 0.3, 0.4]).unwrap();
    assert_eq!(median, Some(0.35));
    assert_eq!(picked, vec![1, 3]);
    let (median, picked) = top_half(&[0.2, 0.2, 0.2]).unwrap();
    assert_eq!(median, Some(0.2));
    assert!(picked.is_empty());
    assert_eq!(top_half(&[]).unwrap(), (None, vec![]));
}

#[test]
fn clip_views_tile_two_rows_of_target_frames() {
    let (w, h, rgba) = clip_views(1, 4, 0.3, 7, 8).unwrap();
    assert_eq!((w, h), (8 * 32, 2 * 32));
    assert_eq!(rgba.len(), w * h * 4);
    assert!(rgba.chunks(4).all(|p| p[3] == 255 && p[0] == p[1] && p[1] == p[2]));
    assert_eq!(clip_views(1, 4, 0.3, 7, 8).unwrap().2, rgba);
    assert!(clip_views(5, 4, 0.3, 7, 8).is_err());
}
