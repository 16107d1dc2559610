use std::fs;

use neurofeedback::eval::physionet::{physionet_cohort, run_path};
use neurofeedback::eval::{evaluate, render_table, EvalConfig, EvalError};
use neurofeedback::signal_io::write_edf;
use neurofeedback::synthetic::{mi_recording, SyntheticParams};
use neurofeedback::veto::TrainingParams;

fn fast_cfg() -> EvalConfig {
    EvalConfig {
        veto: TrainingParams {
            epochs: 60,
            ..TrainingParams::default()
        },
        ..EvalConfig::default()
    }
}

fn small_params() -> SyntheticParams {
    SyntheticParams {
        trials_per_class: 5,
        ..SyntheticParams::separable()
    }
}

#[test]
fn nested_and_flat_layouts_load() {
    let dir = tempfile::tempdir().unwrap();
    let nested = dir.path().join("S001");
    fs::create_dir(&nested).unwrap();
    for (i, run) in [4, 8, 12].into_iter().enumerate() {
        let edf = write_edf(&mi_recording(&small_params(), i as u64)).unwrap();
        fs::write(nested.join(format!("S001R{run:02}.edf")), &edf).unwrap();
        let edf = write_edf(&mi_recording(&small_params(), 10 + i as u64)).unwrap();
        fs::write(dir.path().join(format!("S002R{run:02}.edf")), &edf).unwrap();
    }
    assert!(run_path(dir.path(), 1, 8).unwrap().ends_with("S001/S001R08.edf"));
    assert!(run_path(dir.path(), 2, 12).unwrap().ends_with("S002R12.edf"));
    assert!(run_path(dir.path(), 3, 4).is_none());

    let cfg = fast_cfg();
    let cohort = physionet_cohort(dir.path(), &[1, 2], &cfg).unwrap();
    assert_eq!(cohort.iter().map(|(id, t)| (id.as_str(), t.len())).collect::<Vec<_>>(), [("S001", 30), ("S002", 30)]);
    let r = evaluate(&cohort, &cfg).unwrap();
    assert_eq!(r.per_subject["S001"].baseline, 1.0);
    assert!(render_table(&r).contains("S002"));
}

#[test]
fn missing_run_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let edf = write_edf(&mi_recording(&small_params(), 0)).unwrap();
    fs::write(dir.path().join("S001R04.edf"), edf).unwrap();
    let err = physionet_cohort(dir.path(), &[1], &fast_cfg()).unwrap_err();
    assert!(matches!(err, EvalError::Data(m) if m.contains("S001R08.edf")));
}
