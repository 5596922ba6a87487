use std::fs;

use mvpose_core::project_to_view;
use mvpose_rig::dataset::read_png;
use mvpose_rig::{
    build_dataset, camera_rig, full_task_list, BuildOptions, CameraRigConfig, DatasetSource,
    LiftTask, NormFit, OcclusionConfig, RigError, Split, SubjectProfile, SyntheticDataset,
    VerticalRange,
};

fn subjects(n: u32) -> Vec<SubjectProfile> {
    (0..n).map(|i| SubjectProfile::random(i, 17)).collect()
}

#[test]
fn two_hundred_frames_give_one_hundred_odd_records() {
    let dir = tempfile::tempdir().unwrap();
    let subs = subjects(1);
    let tasks = [LiftTask::new(VerticalRange::FK, 0, 1, 0)];
    let cams = camera_rig(&CameraRigConfig::default()).unwrap();
    let index = build_dataset(&subs, &tasks, &cams, &BuildOptions::default(), dir.path()).unwrap();
    let seq = &index.sequences[0];
    assert_eq!(seq.generated_frames, 200);
    assert_eq!(seq.records.len(), 100);
    assert!(seq.records.iter().all(|r| r.frame_index % 2 == 1));
}

#[test]
fn full_grid_index_is_consistent_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let subs = subjects(2);
    let tasks = full_task_list(&subs, 6);
    let cams = camera_rig(&CameraRigConfig::default()).unwrap();
    let opts = BuildOptions {
        seed: 5,
        ..Default::default()
    };
    let index = build_dataset(&subs, &tasks, &cams, &opts, dir.path()).unwrap();
    assert_eq!(index.sequences.len(), 36);
    assert_eq!(index.num_records(), 36 * 3);
    assert_eq!(index.records(Split::Train).count(), 18 * 3);

    let ds = SyntheticDataset::open(dir.path()).unwrap();
    assert_eq!(ds.index(), &index);
    for (_, rec) in index.records(Split::Test).chain(index.records(Split::Train)) {
        for (v, cam) in cams.iter().enumerate() {
            assert!(dir.path().join(&rec.images[v]).is_file());
            let p2 = project_to_view(&rec.pose_3d, cam).unwrap();
            for (a, b) in p2.coords.iter().zip(&rec.pose_2d[v].coords) {
                assert!((a[0] - b[0]).abs() <= 1e-6 && (a[1] - b[1]).abs() <= 1e-6);
            }
        }
    }
    let (_, rec) = index.records(Split::Train).next().unwrap();
    let img = ds.load_image(&rec.images[1]).unwrap();
    assert_eq!((img.width(), img.height()), (256, 256));

    let first = fs::read(dir.path().join("index.json")).unwrap();
    let again = tempfile::tempdir().unwrap();
    build_dataset(&subs, &tasks, &cams, &opts, again.path()).unwrap();
    assert_eq!(first, fs::read(again.path().join("index.json")).unwrap());
    let png = &rec.images[0];
    assert_eq!(fs::read(dir.path().join(png)).unwrap(), fs::read(again.path().join(png)).unwrap());
}

#[test]
fn norm_params_fit_train_unless_asked() {
    let subs = subjects(1);
    let tasks = full_task_list(&subs, 4);
    let cams = camera_rig(&CameraRigConfig::default()).unwrap();
    let a = tempfile::tempdir().unwrap();
    let train = build_dataset(&subs, &tasks, &cams, &BuildOptions::default(), a.path()).unwrap();
    let b = tempfile::tempdir().unwrap();
    let opts = BuildOptions {
        norm_fit: NormFit::All,
        ..Default::default()
    };
    let all = build_dataset(&subs, &tasks, &cams, &opts, b.path()).unwrap();
    let train_poses = train.records(Split::Train).map(|(_, r)| &r.pose_3d);
    assert_eq!(train.norm_params, mvpose_core::fit_norm_params(train_poses).unwrap());
    for axis in 0..3 {
        assert!(all.norm_params.min_xyz[axis] <= train.norm_params.min_xyz[axis]);
        assert!(all.norm_params.max_xyz[axis] >= train.norm_params.max_xyz[axis]);
    }
}

#[test]
fn refuses_non_empty_output_without_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("stale.txt"), "x").unwrap();
    let subs = subjects(1);
    let tasks = [LiftTask::new(VerticalRange::KS, 30, 1, 0).with_duration(4)];
    let cams = camera_rig(&CameraRigConfig::default()).unwrap();
    let err = build_dataset(&subs, &tasks, &cams, &BuildOptions::default(), dir.path()).unwrap_err();
    assert!(matches!(err, RigError::OutputNotEmpty(_)));
    let opts = BuildOptions {
        overwrite: true,
        ..Default::default()
    };
    build_dataset(&subs, &tasks, &cams, &opts, dir.path()).unwrap();
    let test_only = [LiftTask::new(VerticalRange::KS, 30, 2, 0).with_duration(4)];
    let err = build_dataset(&subs, &test_only, &cams, &opts, dir.path()).unwrap_err();
    assert!(err.to_string().contains("normalization"), "{err}");
}

#[test]
fn io_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.png");
    let msg = read_png(&missing).unwrap_err().to_string();
    assert!(msg.contains("nope.png"), "{msg}");
    let msg = SyntheticDataset::open(dir.path()).err().unwrap().to_string();
    assert!(msg.contains("index.json"), "{msg}");
}

#[test]
fn occluders_hide_joints_in_one_view_only() {
    let dir = tempfile::tempdir().unwrap();
    let subs = subjects(1);
    let tasks = [LiftTask::new(VerticalRange::FS, 60, 1, 0).with_duration(40)];
    let cams = camera_rig(&CameraRigConfig::default()).unwrap();
    let opts = BuildOptions {
        occlusion: Some(OcclusionConfig::default()),
        ..Default::default()
    };
    let index = build_dataset(&subs, &tasks, &cams, &opts, dir.path()).unwrap();
    let mut hidden = 0;
    for (_, rec) in index.records(Split::Train) {
        assert!(rec.occluded[1].iter().all(|f| !f));
        hidden += rec.occluded[0].iter().filter(|&&f| f).count();
        for (j, &f) in rec.occluded[0].iter().enumerate() {
            if f {
                assert!(!rec.pose_2d[0].visible[j]);
            }
        }
    }
    assert!(hidden > 20, "only {hidden} joints hidden");
}
