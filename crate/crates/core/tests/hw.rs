use proptest::prelude::*;
use turf_core::hw::*;
use turf_core::kernels::WinogradConfig;
use turf_core::model::{LayerKind, LayerSpec};
use turf_core::Error;

/// Buffer table cells as (multiplier, base) where base is "P" for
/// P_c*T_h*T_w and "T" for T_c*T_h*T_w; None marks an inefficient cell.
const TABLE: [(&str, [Option<(u64, char)>; 3]); 4] = [
    ("FM,CM", [Some((1, 'P')), Some((1, 'T')), Some((2, 'P'))]),
    ("CM,FM", [Some((1, 'T')), Some((1, 'T')), Some((2, 'T'))]),
    ("FM,FM", [Some((1, 'P')), Some((1, 'T')), Some((2, 'P'))]),
    ("CM,CM", [Some((1, 'T')), None, Some((2, 'T'))]),
];

fn parse_seq(s: &str) -> Seq {
    if s == "FM" { Seq::FilterMajor } else { Seq::ChannelMajor }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn buffer_table(th in 1u32..64, tw in 1u32..64, pc in 1u32..32, extra in 0u32..64) {
        let tc = pc + extra;
        let tile = Dims::new(th, tw, tc, 1);
        let par = Dims::new(1, 1, pc, 1);
        for (pair, cells) in TABLE {
            let (a, b) = pair.split_once(',').unwrap();
            for (opt, cell) in BufferOption::ALL.iter().zip(cells) {
                let got = buffer_words(parse_seq(a), parse_seq(b), tile, par, *opt);
                match cell {
                    Some((k, 'P')) => prop_assert_eq!(got.unwrap(), k * (pc * th * tw) as u64),
                    Some((k, _)) => prop_assert_eq!(got.unwrap(), k * (tc * th * tw) as u64),
                    None => prop_assert!(matches!(got, Err(Error::InefficientConfig(_)))),
                }
            }
        }
    }

    #[test]
    fn tuple_widths(pc in 1u64..16, pf in 1u64..16, ph in 1u64..8, pw in 1u64..8, k in 1u64..8, m in prop::sample::select(vec![2usize, 4])) {
        let lb = ModuleDesc::line_buffer(pc, ph, pw, k);
        prop_assert_eq!(lb.in_width, pc * ph * pw);
        prop_assert_eq!(lb.out_width, pc * (k + ph - 1) * (k + pw - 1));
        let ib = ModuleDesc::input_buffer(pc, pw);
        prop_assert_eq!((ib.in_width, ib.out_width), (pc * pw, pc * pw));
        let ob = ModuleDesc::output_buffer(pf, pw);
        prop_assert_eq!((ob.in_width, ob.out_width), (pf * pw, pf * pw));
        let wino = WinogradConfig::new(m, 3).unwrap();
        let tk = (m as u64) + 2;
        let it = ModuleDesc::winograd_input_transform(pc, 3, &wino);
        prop_assert_eq!((it.in_width, it.out_width), (pc * tk * tk, pc * tk * tk));
        let wt = ModuleDesc::winograd_weight_transform(pc, pf, 3, &wino);
        prop_assert_eq!((wt.in_width, wt.out_width), (pc * pf * 9, pc * pf * tk * tk));
        let ot = ModuleDesc::winograd_output_transform(pc, pf, 3, &wino);
        prop_assert_eq!((ot.in_width, ot.out_width), (pc * pf * tk * tk, pc * pf * (m * m) as u64));
    }

    #[test]
    fn pipelines_chain(kind in prop::sample::select(vec![LayerKind::StandardConv, LayerKind::DepthwiseConv, LayerKind::PointwiseConv, LayerKind::FullyConnected]),
                       pc in 1u32..8, pf in 1u32..8, ps in 1u32..5, wino in any::<bool>(), k in prop::sample::select(vec![1u32, 3, 5])) {
        let layer = match kind {
            LayerKind::StandardConv => LayerSpec::conv_same(k, 1, 8),
            LayerKind::DepthwiseConv => LayerSpec::depthwise(k, 1, k / 2),
            LayerKind::PointwiseConv => LayerSpec::pointwise(8),
            _ => LayerSpec::fully_connected(8),
        };
        let pf = if kind == LayerKind::DepthwiseConv { pc } else { pf };
        let (ps, wino) = if wino && k == 3 && matches!(kind, LayerKind::StandardConv | LayerKind::DepthwiseConv) {
            (if ps > 2 { 4 } else { 2 }, true)
        } else {
            (ps, false)
        };
        let hw = LayerHwConfig { tile: Dims::new(8, 8, 8, 8), parallelism: Dims::new(ps, ps, pc, pf), seq: Seq::FilterMajor, use_winograd: wino, layer_kind: kind };
        let chain = instantiate_layer(&layer, &hw).unwrap();
        prop_assert!(check_chaining(&chain).is_ok());
    }
}

#[test]
fn table_cells_symbolic() {
    let t = Dims::new(8, 8, 16, 16);
    let p = Dims::new(1, 1, 4, 4);
    let expect = [[256, 1024, 512], [1024, 1024, 2048], [256, 1024, 512]];
    for (row, (a, b)) in [(Seq::FilterMajor, Seq::ChannelMajor), (Seq::ChannelMajor, Seq::FilterMajor), (Seq::FilterMajor, Seq::FilterMajor)]
        .into_iter()
        .enumerate()
    {
        for (col, opt) in BufferOption::ALL.into_iter().enumerate() {
            assert_eq!(buffer_words(a, b, t, p, opt).unwrap(), expect[row][col]);
        }
    }
    let cc = |o| buffer_words(Seq::ChannelMajor, Seq::ChannelMajor, t, p, o);
    assert_eq!(cc(BufferOption::MatchPrev).unwrap(), 1024);
    assert_eq!(cc(BufferOption::Double).unwrap(), 2048);
    assert!(cc(BufferOption::MatchNext).is_err());
}
