use unmask_core::evaluation::{cube_score_map, CellFill};
use unmask_core::features::{WORK_HEIGHT, WORK_WIDTH};
use unmask_core::ingest::{encode_pgm, resize_bilinear, FrameFormat, FrameReader};
use unmask_core::pipeline::{
    gaussian_kernel, kernel_radius, run_detector, run_detector_with, smooth_at, write_bins_json, zip_inputs,
    ChannelSelection, DetectorConfig, Execution, FrameInput, FrameScore, OnlineDetector,
};
use unmask_core::synth::{random_activations, BlockVideo};
use unmask_core::{Error, Frame, Result};

fn block_frames(n: usize) -> Vec<Frame> {
    BlockVideo {
        frames: n,
        anomaly: n / 2..n / 2 + 15,
        ..BlockVideo::default()
    }
    .render()
}

fn motion(frames: Vec<Frame>) -> impl Iterator<Item = Result<FrameInput>> + Send {
    frames.into_iter().map(|f| Ok(FrameInput::motion(f)))
}

#[test]
fn minimal_clip_backfills_leading_frames() {
    let out = run_detector(motion(block_frames(20)), &DetectorConfig::default(), &Execution::single_core()).unwrap();
    let s = &out.series;
    assert_eq!(s.len(), 20);
    assert_eq!(out.records.len(), 1);
    let score = out.records[0].scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(s.fused.iter().all(|&v| v == score));
    let mut csv = Vec::new();
    s.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(text.lines().nth(1).unwrap().starts_with("0,"));
    assert!(text.lines().nth(1).unwrap().contains(",,"));
}

#[test]
fn short_stream_is_rejected() {
    let err = run_detector(motion(block_frames(19)), &DetectorConfig::default(), &Execution::single_core()).unwrap_err();
    assert!(matches!(err, Error::StreamTooShort { frames: 19, needed: 20 }));
}

#[test]
fn threads_do_not_change_results() {
    let config = DetectorConfig::default();
    let single = run_detector(motion(block_frames(120)), &config, &Execution::single_core()).unwrap();
    for workers in [0, 2, 4] {
        let exec = Execution {
            workers,
            queue: 1,
            keep_profiles: false,
        };
        let mut emitted = Vec::new();
        let multi = run_detector_with(motion(block_frames(120)), &config, &exec, |f| emitted.push(f.frame)).unwrap();
        assert_eq!(multi.series, single.series);
        assert_eq!(emitted, (0..120).collect::<Vec<_>>());
    }
}

#[test]
fn online_matches_batch_away_from_the_live_edge() {
    for (stride, sigma) in [(5, 10.0), (1, 3.0), (15, 2.0), (7, 0.0)] {
        let config = DetectorConfig {
            stride,
            smooth_sigma: sigma,
            ..DetectorConfig::default()
        };
        let frames = block_frames(97);
        let batch = run_detector(motion(frames.clone()), &config, &Execution::single_core()).unwrap();
        let mut det = OnlineDetector::new(config).unwrap();
        let mut emitted: Vec<(FrameScore, usize)> = Vec::new();
        let mut available = 0;
        let mut record = |scores: Vec<FrameScore>, emitted: &mut Vec<(FrameScore, usize)>| {
            available += scores.len();
            emitted.extend(scores.into_iter().map(|s| (s, available)));
        };
        for f in frames {
            let out = det.push(FrameInput::motion(f)).unwrap();
            record(out, &mut emitted);
        }
        let (tail, _) = det.finish().unwrap();
        record(tail, &mut emitted);

        let fused = &batch.series.fused;
        let kernel = gaussian_kernel(sigma);
        let r = kernel_radius(sigma);
        assert_eq!(emitted.len(), fused.len());
        for (i, (score, avail)) in emitted.iter().enumerate() {
            assert_eq!(score.frame, i);
            assert_eq!(score.fused.to_bits(), fused[i].to_bits(), "stride {stride}, frame {i}");
            let live = smooth_at(&fused[..*avail], i, &kernel).clamp(0.0, 1.0);
            assert_eq!(score.smoothed.to_bits(), live.to_bits());
            if i + r < *avail {
                assert_eq!(score.smoothed.to_bits(), batch.series.smoothed[i].to_bits());
            }
        }
    }
}

#[test]
fn fusion_stays_between_channels() {
    let n = 45;
    let config = DetectorConfig {
        channel: ChannelSelection::Fusion,
        ..DetectorConfig::default()
    };
    let acts = random_activations(n, 16, 13, 3);
    let inputs = zip_inputs(
        Some(Box::new(block_frames(n).into_iter().map(Ok))),
        Some(Box::new(acts.into_iter().map(Ok))),
    );
    let out = run_detector(inputs, &config, &Execution::default()).unwrap();
    let s = &out.series;
    let motion = s.channel(unmask_core::Channel::Motion).unwrap();
    let appearance = s.channel(unmask_core::Channel::Appearance).unwrap();
    for f in 0..n {
        let (a, b) = (motion[f], appearance[f]);
        assert!(a.min(b) <= s.fused[f] && s.fused[f] <= a.max(b));
        assert!((s.fused[f] - (a + b) / 2.0).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&s.smoothed[f]));
    }
    let mut json = Vec::new();
    write_bins_json(&mut json, &out.records, &s.channels, config.bins.count()).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
    assert_eq!(v["0"]["scores"]["appearance"].as_array().unwrap().len(), 4);
}

#[test]
fn misaligned_streams_fail() {
    let inputs = zip_inputs(
        Some(Box::new(block_frames(30).into_iter().map(Ok))),
        Some(Box::new(random_activations(25, 4, 13, 1).into_iter().map(Ok))),
    );
    let config = DetectorConfig {
        channel: ChannelSelection::Fusion,
        ..DetectorConfig::default()
    };
    let err = run_detector(inputs, &config, &Execution::single_core()).unwrap_err();
    assert!(matches!(err, Error::Alignment(_)), "{err}");

    let err = run_detector(
        random_activations(25, 4, 13, 1).into_iter().map(|a| Ok(FrameInput::appearance(a))),
        &DetectorConfig::default(),
        &Execution::single_core(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Alignment(_)), "{err}");
}

#[test]
fn pgm_directory_at_other_resolution() {
    let dir = tempfile::tempdir().unwrap();
    for (i, f) in block_frames(25).iter().enumerate() {
        let big = resize_bilinear(f, 2 * WORK_WIDTH, 2 * WORK_HEIGHT).unwrap();
        std::fs::write(dir.path().join(format!("frame_{i:03}.pgm")), encode_pgm(&big)).unwrap();
    }
    let reader = FrameReader::open(dir.path(), FrameFormat::PgmSequence).unwrap();
    let out = run_detector(zip_inputs(Some(Box::new(reader)), None), &DetectorConfig::default(), &Execution::default()).unwrap();
    assert_eq!(out.series.len(), 25);
    assert!(out.series.smoothed.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn maps_cover_every_frame() {
    let config = DetectorConfig::default();
    let out = run_detector(motion(block_frames(60)), &config, &Execution::single_core()).unwrap();
    for fill in [CellFill::BinScore, CellFill::Zero] {
        let maps = cube_score_map(&out.records, 60, &config.channels(), &config.bins, fill).unwrap();
        assert_eq!(maps.len(), 60);
        assert!(maps.iter().all(|m| m.grid.iter().all(|v| (0.0..=1.0).contains(v))));
    }
    // with bin-score fill, the grid maximum equals the frame score
    let maps = cube_score_map(&out.records, 60, &config.channels(), &config.bins, CellFill::BinScore).unwrap();
    for (m, &s) in maps.iter().zip(&out.series.fused) {
        let max = m.grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((max - s).abs() < 1e-12);
    }
}

#[test]
fn profiles_are_kept_on_request() {
    let exec = Execution {
        keep_profiles: true,
        ..Execution::single_core()
    };
    let out = run_detector(motion(block_frames(30)), &DetectorConfig::default(), &exec).unwrap();
    let profiles = out.profiles.unwrap();
    assert_eq!(profiles.len(), 3 * 4);
    assert!(profiles.iter().all(|p| p.profile.loops() == 10));
}
