use crowdpose3d::pipeline::{export_scenes, load_inputs, run_loaded, PipelineConfig};
use crowdpose3d::reconstruct::{reconstruct_scene, SolverConfig};
use crowdpose3d::synth::{generate, SceneSpec};
use crowdpose3d::{io, Execution, SkeletonSchema};

#[test]
fn exported_scene_reloads_bit_exact() {
    let schema = SkeletonSchema::default();
    let spec = SceneSpec { n_persons: 6, occlusion_rate: 0.1, seed: 21, ..SceneSpec::default() };
    let gt = generate(&spec, &schema).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = export_scenes(std::slice::from_ref(&gt), dir.path(), &PipelineConfig::default()).unwrap();
    let inputs = load_inputs(&cfg).unwrap();

    assert_eq!(inputs.cameras.len(), gt.cameras.len());
    for (a, b) in inputs.cameras.iter().zip(&gt.cameras) {
        assert_eq!(a.projection(), b.projection());
    }
    let views = io::frame_views(&inputs.frames[0], &inputs.cameras, schema.num_joints(), &cfg.sigma).unwrap();
    for (v, dets) in views.iter().zip(&gt.detections) {
        assert_eq!(&v.detections, dets);
    }
    let reloaded = &inputs.gt.as_ref().unwrap()[0];
    for (a, b) in reloaded.iter().zip(&gt.poses3d) {
        assert_eq!(a.joints, b.joints);
    }
    assert_eq!(inputs.gt_correspondence.as_ref().unwrap()[0], gt.correspondence);
}

#[test]
fn file_pipeline_matches_in_memory_reconstruction() {
    let schema = SkeletonSchema::default();
    let spec = SceneSpec { n_persons: 5, seed: 22, ..SceneSpec::default() };
    let gt = generate(&spec, &schema).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = export_scenes(std::slice::from_ref(&gt), dir.path(), &PipelineConfig::default()).unwrap();
    let inputs = load_inputs(&cfg).unwrap();
    let run = run_loaded(&inputs, &cfg).unwrap();
    let frame = &run.frames[0];
    let direct = reconstruct_scene(&frame.matching.tracks, &gt.views(), &schema, &SolverConfig::default(), Execution::Sequential);
    assert_eq!(frame.poses, direct.poses);
    let report = run.report.unwrap();
    assert_eq!(report.matching_precision, Some(1.0));
    assert!(report.mpjpe_mm.unwrap().overall_mm < 100.0);
}

#[test]
fn both_execution_modes_agree() {
    let schema = SkeletonSchema::default();
    let scenes: Vec<_> =
        (0..3).map(|s| generate(&SceneSpec { n_persons: 6, seed: 30 + s, ..SceneSpec::default() }, &schema).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = export_scenes(&scenes, dir.path(), &PipelineConfig::default()).unwrap();
    let inputs = load_inputs(&cfg).unwrap();
    cfg.execution = Execution::Sequential;
    let seq = run_loaded(&inputs, &cfg).unwrap();
    cfg.execution = Execution::Parallel;
    let par = run_loaded(&inputs, &cfg).unwrap();
    assert_eq!(seq.pose_frames(), par.pose_frames());
}
