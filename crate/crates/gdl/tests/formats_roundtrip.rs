use gated_depth_core::estimate::{init_regressor, Activation, DepthRange};
use gated_depth_core::grid::Grid;
use gdl::formats::{
    decode_checkpoint, decode_fmap, decode_pgm, encode_checkpoint, encode_fmap, encode_pgm, parse_csv,
    render_preview,
};
use proptest::prelude::*;

fn pixel() -> impl Strategy<Value = f32> {
    prop_oneof![
        8 => any::<f32>().prop_filter("finite", |v| v.is_finite()),
        1 => Just(f32::NAN),
        1 => Just(f32::INFINITY),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fmap_round_trips_f32_values(w in 1usize..20, h in 1usize..20, seed in proptest::collection::vec(pixel(), 400)) {
        let map = Grid::from_fn(w, h, |x, y| f64::from(seed[y * 20 + x]));
        let bytes = encode_fmap(&map);
        prop_assert_eq!(bytes.len(), 16 + 4 * w * h);
        let back = decode_fmap(&bytes).unwrap();
        prop_assert_eq!(back.dims(), (w, h));
        for (a, b) in map.as_slice().iter().zip(back.as_slice()) {
            prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
        prop_assert_eq!(encode_fmap(&back), bytes);
    }

    #[test]
    fn pgm_round_trips_both_depths(w in 1usize..30, h in 1usize..30, wide in any::<bool>(), raw in proptest::collection::vec(any::<u16>(), 900)) {
        let maxval = if wide { 1023 } else { 255 };
        let samples: Vec<u16> = raw[..w * h].iter().map(|v| v % (maxval + 1)).collect();
        let bytes = encode_pgm(w, h, maxval, &samples);
        let (grid, m) = decode_pgm(&bytes).unwrap();
        prop_assert_eq!(m, maxval);
        prop_assert_eq!(grid.dims(), (w, h));
        prop_assert_eq!(grid.as_slice(), samples.as_slice());
    }

    #[test]
    fn checkpoint_round_trips_exactly(hidden in proptest::collection::vec(1usize..12, 1..4), seed in any::<u64>(), tanh in any::<bool>(), near in 0.5f64..20.0, span in 1.0f64..200.0) {
        let mut widths = vec![3];
        widths.extend(&hidden);
        widths.push(2);
        let activation = if tanh { Activation::Tanh } else { Activation::Softplus };
        let model = init_regressor(&widths, DepthRange::new(near, near + span).unwrap(), seed)
            .unwrap()
            .with_activation(activation);
        let bytes = encode_checkpoint(&model);
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn decoders_reject_garbage_without_panicking(bytes in proptest::collection::vec(any::<u8>(), 0..64), prefix in 0usize..3) {
        let mut data = [b"FMAP\x01\x00\x00\x00".as_slice(), b"P5\n", b"GDLR\x01\x00\x00\x00"][prefix].to_vec();
        data.extend(&bytes);
        let _ = decode_fmap(&data);
        let _ = decode_pgm(&data);
        let _ = decode_checkpoint(&data);
    }

    #[test]
    fn truncated_files_are_errors(w in 1usize..8, h in 1usize..8, cut in 1usize..16) {
        let map = Grid::filled(w, h, 1.5);
        let fmap = encode_fmap(&map);
        prop_assert!(decode_fmap(&fmap[..fmap.len() - cut.min(fmap.len())]).is_err());
        let pgm = encode_pgm(w, h, 1023, &vec![7; w * h]);
        prop_assert!(decode_pgm(&pgm[..pgm.len() - cut.min(pgm.len())]).is_err());
    }

    #[test]
    fn preview_spans_full_range(w in 2usize..16, h in 1usize..16, lo in -1e3f64..1e3, span in 1e-3f64..1e3) {
        let map = Grid::from_fn(w, h, |x, y| lo + span * (x + y * w) as f64 / (w * h - 1) as f64);
        let img = render_preview(&map);
        prop_assert_eq!(img.as_slice()[0], 0);
        prop_assert_eq!(*img.as_slice().last().unwrap(), 255);
        prop_assert!(img.as_slice().windows(2).all(|p| p[0] <= p[1]));
    }
}

#[test]
fn huge_header_dimensions_are_rejected() {
    let mut fmap = b"FMAP".to_vec();
    for v in [1u32, u32::MAX, u32::MAX] {
        fmap.extend(v.to_le_bytes());
    }
    assert!(decode_fmap(&fmap).is_err());
    assert!(decode_pgm(b"P5\n4294967295 4294967295\n1023\n\x00\x00").is_err());
    let mut ckpt = b"GDLR".to_vec();
    for v in [1u32, 3, 3, u32::MAX, 2] {
        ckpt.extend(v.to_le_bytes());
    }
    assert!(decode_checkpoint(&ckpt).is_err());
}

#[test]
fn csv_round_trips_through_parser() {
    let (header, rows) = parse_csv("a,b\n1,2.5\nnan,-3\n").unwrap();
    assert_eq!(header, ["a", "b"]);
    assert_eq!(rows[0], [1.0, 2.5]);
    assert!(rows[1][0].is_nan());
}
