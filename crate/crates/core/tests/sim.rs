use std::f64::consts::TAU;

use nalgebra::Vector3;
use proptest::prelude::*;
use ruled_odometry::error::Error;
use ruled_odometry::geometry::point_to_ruling_distance;
use ruled_odometry::imu::{derotate_point, integrate_gamma, integrate_gyro};
use ruled_odometry::pipeline::{run_pipeline, FrameInput, PipelineConfig, PipelineInput};
use ruled_odometry::sim::{synthesize, NoiseSpec, RotationAxis, RotationSpec, ScenarioSpec, SceneLine, TrajectorySpec};

fn noiseless(duration: f64) -> ScenarioSpec {
    ScenarioSpec {
        duration,
        noise: NoiseSpec::noiseless(),
        ..ScenarioSpec::default()
    }
}

fn trajectory(which: u8) -> TrajectorySpec {
    match which % 4 {
        0 => TrajectorySpec::LinearParallel { amplitude: 0.3, period: 2.0 },
        1 => TrajectorySpec::CircularTilted { amplitude: 0.2, period: 3.0 },
        2 => TrajectorySpec::Zigzag { amplitude: 0.3, segment_duration: 0.5 },
        _ => TrajectorySpec::Square { side: 0.3, segment_duration: 0.5, dwell: 0.2 },
    }
}

fn rotation(which: u8) -> RotationSpec {
    let axis = match which % 4 {
        0 => RotationAxis::None,
        1 => RotationAxis::RotX,
        2 => RotationAxis::RotY,
        _ => RotationAxis::RotZ,
    };
    RotationSpec { axis, rate: 0.2, period: None }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn same_spec_gives_identical_output(seed in 0u64..1000, traj in 0u8..4, rot in 0u8..4) {
        let spec = ScenarioSpec {
            seed,
            duration: 0.4,
            trajectory: trajectory(traj),
            rotation: rotation(rot),
            obs_noise: 0.002,
            outlier_fraction: 0.05,
            noise: NoiseSpec { accel_bias: Vector3::repeat(0.02), ..NoiseSpec::default() },
            ..ScenarioSpec::default()
        };
        let a = synthesize(&spec).unwrap();
        let b = synthesize(&spec).unwrap();
        prop_assert_eq!(a.imu.samples(), b.imu.samples());
        prop_assert_eq!(&a.frames, &b.frames);
        prop_assert_eq!(&a.truth, &b.truth);
        let other = synthesize(&ScenarioSpec { seed: seed + 1, ..spec }).unwrap();
        prop_assert_ne!(&a.frames, &other.frames);
    }

    #[test]
    fn noiseless_points_lie_on_the_displaced_rulings(seed in 0u64..1000, traj in 0u8..4, rot in 0u8..4) {
        let spec = ScenarioSpec {
            seed,
            trajectory: trajectory(traj),
            rotation: rotation(rot),
            ..noiseless(1.0)
        };
        let sim = synthesize(&spec).unwrap();
        let lines = sim.truth.lines_in_camera(0.0).unwrap();
        let start = sim.truth.frames[0].orientation.inverse();
        for (f, truth) in sim.frames.iter().zip(&sim.truth.frames).step_by(7) {
            let q = start * truth.orientation;
            let x = sim.truth.displacement(0.0, f.t);
            for (o, label) in f.observations.iter().zip(&f.labels) {
                let p = derotate_point(&o.p, &q).unwrap();
                let d = point_to_ruling_distance(&p, &lines[label.unwrap()], &x).unwrap();
                prop_assert!(d < 1e-12, "distance {} at t = {}", d, f.t);
            }
        }
    }
}

#[test]
fn double_integrated_accel_matches_the_displacement() {
    let spec = ScenarioSpec {
        trajectory: TrajectorySpec::CircularTilted { amplitude: 0.3, period: 3.0 },
        rotation: RotationSpec { axis: RotationAxis::RotZ, rate: 0.3, period: None },
        noise: NoiseSpec { gravity: Vector3::zeros(), ..NoiseSpec::noiseless() },
        ..ScenarioSpec::default()
    };
    let sim = synthesize(&spec).unwrap();
    let times = sim.truth.frame_times();
    let rotation = integrate_gyro(&sim.imu, 0.0).unwrap();
    let gamma = integrate_gamma(&sim.imu, 0.0, &times, &rotation).unwrap();
    let s0 = spec.motion().state(0.0);
    let inv0 = s0.orientation.inverse();
    let worst = times
        .iter()
        .map(|&t| {
            let expected = inv0 * (spec.motion().state(t).position - s0.position) - inv0 * s0.velocity * t;
            (gamma.at(t).unwrap() - expected).amax()
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "largest deviation {worst} m over 12 s");
}

#[test]
fn integrated_gyro_matches_the_orientation() {
    // Tilting about x or y soon sweeps the rulings out of view; the optical
    // axis can spin for the whole sequence.
    for (which, duration) in [(1, 1.0), (2, 1.0), (3, 12.0)] {
        let spec = ScenarioSpec {
            trajectory: TrajectorySpec::CircularParallel { amplitude: 0.2, period: 3.0 },
            rotation: RotationSpec { rate: 0.3, ..rotation(which) },
            ..noiseless(duration)
        };
        let sim = synthesize(&spec).unwrap();
        let table = integrate_gyro(&sim.imu, 0.0).unwrap();
        let start = sim.truth.frames[0].orientation.inverse();
        let worst = sim
            .truth
            .frames
            .iter()
            .map(|f| table.at(f.t).unwrap().angle_to(&(start * f.orientation)))
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{:?}: largest deviation {worst} rad", spec.rotation.axis);
    }
}

#[test]
fn static_camera_sees_fixed_rulings_and_pure_gravity() {
    let bias = Vector3::new(0.01, -0.02, 0.03);
    let spec = ScenarioSpec {
        trajectory: TrajectorySpec::Waypoints { points: vec![Vector3::zeros()], segment_duration: 1.0, dwell: 0.0 },
        noise: NoiseSpec { accel_bias: bias, ..NoiseSpec::noiseless() },
        ..noiseless(1.0)
    };
    let sim = synthesize(&spec).unwrap();
    for s in sim.imu.samples() {
        assert_eq!(s.accel, spec.noise.gravity + bias);
        assert_eq!(s.gyro, Vector3::zeros());
    }
    let lines = sim.truth.lines_in_camera(0.0).unwrap();
    for f in &sim.frames {
        assert_eq!(f.observations.len(), sim.frames[0].observations.len());
        for (o, label) in f.observations.iter().zip(&f.labels) {
            let d = point_to_ruling_distance(&o.p, &lines[label.unwrap()], &Vector3::zeros()).unwrap();
            assert!(d < 1e-12);
        }
    }
}

#[test]
fn sine_motion_has_closed_form_acceleration() {
    let (amplitude, period) = (0.3, 2.0);
    let spec = ScenarioSpec {
        trajectory: TrajectorySpec::LinearParallel { amplitude, period },
        noise: NoiseSpec { gravity: Vector3::zeros(), ..NoiseSpec::noiseless() },
        ..ScenarioSpec::default()
    };
    let sim = synthesize(&spec).unwrap();
    let w = TAU / period;
    for s in sim.imu.samples() {
        let expected = -amplitude * w * w * (w * s.t).sin();
        assert!((s.accel.x - expected).abs() < 1e-9, "t = {}", s.t);
        assert!(s.accel.y.abs() < 1e-12 && s.accel.z.abs() < 1e-12);
    }
}

#[test]
fn line_behind_the_camera_is_reported() {
    let mut spec = noiseless(1.0);
    spec.lines.push(SceneLine::new(Vector3::new(0.0, 0.0, -2.0), Vector3::x(), 1.0));
    let err = synthesize(&spec).unwrap_err();
    assert!(matches!(err, Error::LineNotVisible { line: 4, .. }), "{err:?}");
}

#[test]
fn rasters_follow_the_frame_count() {
    let spec = ScenarioSpec { raster: true, ..noiseless(0.5) };
    let sim = synthesize(&spec).unwrap();
    assert_eq!(sim.rasters.as_ref().unwrap().len(), 45);
    let short = synthesize(&ScenarioSpec { raster_duration: Some(0.1), ..spec }).unwrap();
    assert_eq!(short.rasters.unwrap().len(), 10);
    assert!(synthesize(&noiseless(0.5)).unwrap().rasters.is_none());
}

#[test]
fn outlier_fraction_is_honoured() {
    let spec = ScenarioSpec { outlier_fraction: 0.1, ..noiseless(1.0) };
    let sim = synthesize(&spec).unwrap();
    let (total, outliers) = sim.frames.iter().fold((0, 0), |(n, o), f| {
        (n + f.labels.len(), o + f.labels.iter().filter(|l| l.is_none()).count())
    });
    let fraction = outliers as f64 / total as f64;
    assert!((fraction - 0.1).abs() < 0.01, "{fraction}");
}

#[test]
fn ground_truth_start_reproduces_the_translation_signal() {
    for (seed, traj) in [(0, 0u8), (7, 1)] {
        let spec = ScenarioSpec { seed, trajectory: trajectory(traj), ..noiseless(2.0) };
        let sim = synthesize(&spec).unwrap();
        let frames: Vec<FrameInput> = sim
            .frames
            .iter()
            .map(|f| FrameInput { t: f.t, observations: f.observations.clone() })
            .collect();
        let times = sim.truth.frame_times();
        let input = PipelineInput {
            imu: &sim.imu,
            frames: &frames,
            rasters: None,
            intrinsics: spec.intrinsics,
            initial: Some(sim.truth.window_truth(&times[..10]).unwrap().params),
        };
        let mut worst: f64 = 0.0;
        run_pipeline(&input, &PipelineConfig::default(), &mut |w| {
            let signal = w.translation_signal();
            for &t in &w.frame_times {
                let err = (signal.at(t).unwrap() - sim.truth.displacement(w.t_start(), t)).amax();
                worst = worst.max(err);
            }
        })
        .unwrap();
        assert!(worst < 1e-4, "seed {seed}: largest deviation {worst} m");
    }
}
