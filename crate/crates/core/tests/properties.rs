use fmfog::energy::{battery_life, reference_profile, DutyMode};
use fmfog::imu_data::{SensorLocation, SensorSite, Side};
use fmfog::models::{load_checkpoint, make_mask, read_checkpoint, save_checkpoint, FmFogConfig, FmFogModel};
use fmfog::preprocess::{
    load_window_pack, read_windows, save_window_pack, windowize, write_windows, CanonicalStream, LabelRule, Window,
    WindowConfig, WindowLabel, N_CHANNELS,
};
use fmfog::runtime::{intervention_dispatch, InterventionPattern};
use fmfog::tensor_nn::ops::softmax_rows_inplace;
use proptest::prelude::*;

fn blank(rows: usize) -> CanonicalStream {
    CanonicalStream {
        subject_id: "p".into(),
        location: SensorLocation::new(SensorSite::Trunk, Side::Unknown),
        rate_hz: 100.0,
        timestamps_s: (0..rows).map(|i| i as f64 / 100.0).collect(),
        channels: vec![0.5; rows * N_CHANNELS],
        present_mask: [true; N_CHANNELS],
        annotations: Vec::new(),
    }
}

fn window(values: Vec<f32>, fog: bool, start: f64) -> Window {
    Window {
        present_mask: Window::infer_present_mask(&values),
        values,
        label: if fog { WindowLabel::Fog } else { WindowLabel::NonFog },
        location_id: 2,
        subject_id: "p07".into(),
        start_time_s: start,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn window_count_formula(rows in 0usize..3000) {
        let n = windowize(&blank(rows), &WindowConfig::default(), LabelRule::FogTail).unwrap().len();
        let mut want = 0;
        let mut s = 0;
        while s + 128 <= rows {
            want += 1;
            s += 64;
        }
        prop_assert_eq!(n, want);
    }

    #[test]
    fn mask_size_is_floor_of_ratio(len in 1usize..300, ratio in 0.0f64..1.0, seed: u64) {
        let m = make_mask(len, ratio, seed);
        prop_assert_eq!(m.len(), len);
        prop_assert_eq!(m.iter().filter(|&&b| b).count(), (ratio * len as f64 + 1e-9).floor() as usize);
    }

    #[test]
    fn softmax_rows_are_distributions(v in prop::collection::vec(-50.0f64..50.0, 1..40), width in 1usize..5) {
        let n = v.len() / width * width;
        let mut x = v[..n].to_vec();
        softmax_rows_inplace(&mut x, width);
        for row in x.chunks(width) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn window_pack_round_trips(n in 0usize..4, seed in 0u64..1000, fog: bool) {
        let ws: Vec<Window> = (0..n)
            .map(|k| {
                let values = (0..128 * N_CHANNELS)
                    .map(|i| ((i as u64 * 2654435761 + seed + k as u64) % 1000) as f32 / 100.0 - 5.0)
                    .collect();
                window(values, fog, k as f64 * 0.64)
            })
            .collect();
        let mut buf = Vec::new();
        write_windows(&mut buf, &ws).unwrap();
        prop_assert_eq!(read_windows(buf.as_slice()).unwrap(), ws);
    }

    #[test]
    fn dispatch_alternates_and_is_ordered(fog in prop::collection::vec(any::<bool>(), 0..80)) {
        let decisions: Vec<(f64, bool)> = fog.iter().enumerate().map(|(i, &f)| (i as f64 * 0.64, f)).collect();
        let cmds = intervention_dispatch(&decisions, &InterventionPattern::default());
        prop_assert!(cmds.windows(2).all(|w| w[0].time_s <= w[1].time_s && w[0].on != w[1].on));
        prop_assert!(cmds.first().is_none_or(|c| c.on));
        prop_assert_eq!(cmds.is_empty(), !fog.contains(&true));
    }

    #[test]
    fn battery_life_decreases_with_duty(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assume!((a - b).abs() > 1e-9);
        let p = reference_profile().unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(battery_life(&p, DutyMode::Triggered(lo)).unwrap() > battery_life(&p, DutyMode::Triggered(hi)).unwrap());
    }
}

#[test]
fn pack_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.fwin");
    let ws = vec![window(vec![1.25; 128 * N_CHANNELS], true, 3.2)];
    save_window_pack(&path, &ws).unwrap();
    assert_eq!(load_window_pack(&path).unwrap(), ws);
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = FmFogConfig {
        d_model: 8,
        n_blocks: 1,
        n_heads: 2,
        d_ff: 16,
        ..FmFogConfig::default()
    };
    let m = FmFogModel::<f32>::new(cfg, 9).unwrap();
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    save_checkpoint(&m, &a, Some("test")).unwrap();
    let back: FmFogModel<f32> = load_checkpoint(&a).unwrap();
    save_checkpoint(&back, &b, Some("test")).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(read_checkpoint(&a).unwrap().meta("provenance"), Some("test"));
}
