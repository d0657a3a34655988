use featreg::metrics::tre30_subset;
use featreg::*;
use proptest::prelude::*;

fn dims_strategy(lo: usize, hi: usize) -> impl Strategy<Value = [usize; 3]> {
    (lo..=hi, lo..=hi, lo..=hi).prop_map(|(a, b, c)| [a, b, c])
}

fn field_strategy(dims: [usize; 3], mag: f64) -> impl Strategy<Value = DisplacementField<f64>> {
    let n = 3 * dims.iter().product::<usize>();
    prop::collection::vec(-mag..mag, n)
        .prop_map(move |d| DisplacementField::new(d, Grid::image(dims)).unwrap())
}

fn features(c: usize, dims: [usize; 3], data: Vec<f64>) -> FeatureVolume<f64> {
    FeatureVolume::new(data, c, Grid::image(dims), Provenance::External).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lcc_stays_in_unit_interval(
        (dims, f, m) in dims_strategy(2, 6).prop_flat_map(|d| {
            let n = 2 * d.iter().product::<usize>();
            (Just(d), prop::collection::vec(-5.0..5.0f64, n), prop::collection::vec(-5.0..5.0f64, n))
        }),
        w in 1usize..3,
    ) {
        let v = lcc_similarity(&features(2, dims, f), &features(2, dims, m), w).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn nearest_warp_introduces_no_labels(
        (labels, u) in dims_strategy(2, 6).prop_flat_map(|d| {
            let n = d.iter().product::<usize>();
            (prop::collection::vec(0u32..5, n).prop_map(move |l| Volume::from_data(l, d).unwrap()),
             field_strategy(d, 4.0))
        }),
    ) {
        let w = warp_labels(&labels, &u).unwrap();
        prop_assert!(w.data().iter().all(|l| labels.data().contains(l)));
    }

    #[test]
    fn mean_is_commutative(
        (a, b) in dims_strategy(1, 5).prop_flat_map(|d| (field_strategy(d, 10.0), field_strategy(d, 10.0))),
    ) {
        prop_assert_eq!(mean_fields(&a, &b).unwrap(), mean_fields(&b, &a).unwrap());
    }

    #[test]
    fn composing_with_zero_is_identity(u in dims_strategy(1, 5).prop_flat_map(|d| field_strategy(d, 3.0))) {
        let z = DisplacementField::zeros(*u.grid());
        prop_assert_eq!(&compose_fields(&u, &z).unwrap(), &u);
        prop_assert_eq!(&compose_fields(&z, &u).unwrap(), &u);
    }

    #[test]
    fn dice_stays_in_unit_interval(
        (a, b, u) in dims_strategy(2, 5).prop_flat_map(|d| {
            let n = d.iter().product::<usize>();
            (prop::collection::vec(1u32..4, n).prop_map(move |l| Volume::from_data(l, d).unwrap()),
             prop::collection::vec(0u32..4, n).prop_map(move |l| Volume::from_data(l, d).unwrap()),
             field_strategy(d, 2.0))
        }),
    ) {
        let r = dice(&a, &b, &u).unwrap();
        prop_assert!(r.per_label.values().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((0.0..=1.0).contains(&r.mean));
    }

    #[test]
    fn tre30_subset_has_ceil_thirty_percent(
        pts in prop::collection::vec(((0.0..9.0f64, 0.0..9.0f64, 0.0..9.0f64), (0.0..9.0f64, 0.0..9.0f64, 0.0..9.0f64)), 1..40),
    ) {
        let fixed: Vec<[f64; 3]> = pts.iter().map(|(p, _)| [p.0, p.1, p.2]).collect();
        let moving: Vec<[f64; 3]> = pts.iter().map(|(_, q)| [q.0, q.1, q.2]).collect();
        let n = fixed.len();
        let lm = LandmarkSet::new(fixed, moving, [1.0; 3], [1.0; 3]).unwrap();
        let s = tre30_subset(&lm);
        prop_assert_eq!(s.len(), (3 * n).div_ceil(10));
        let mut sorted = s.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), s.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mind_features_lie_in_unit_interval(
        v in dims_strategy(7, 9).prop_flat_map(|d| {
            prop::collection::vec(-100.0..100.0f64, d.iter().product::<usize>())
                .prop_map(move |x| Volume::from_data(x, d).unwrap())
        }),
    ) {
        let f = encode_mind_ssc(&v, &MindConfig::default()).unwrap();
        prop_assert!(f.data().iter().all(|x| (0.0..=1.0).contains(x)));
        let n = f.voxels();
        for i in 0..n {
            let mx = (0..f.channels()).map(|c| f.channel(c)[i]).fold(0.0f64, f64::max);
            prop_assert!((mx - 1.0).abs() < 1e-9);
        }
    }
}
