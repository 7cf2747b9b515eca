use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use bimgame::harness::plot::{line_chart, series_from_csv};
use bimgame::harness::{run_plan, ExperimentPlan, Manifest, Variant};
use bimgame::neural::Architecture;
use bimgame::Error;

fn tiny_plan(dir: &Path) -> ExperimentPlan {
    let mut plan = ExperimentPlan::from_toml_str(
        r#"
        name = "tiny"
        tasks = ["FULL"]
        seeds = [3]
        preset = "desk"
        histogram_bin = 100

        [expert]
        horizon = 10

        [dataset]
        n_trajectories = 3
        max_steps = 3000
        test_fraction = 0.34

        [pretrain]
        epochs = 1
        bptt_chunk = 32

        [rl]
        workers = 2
        budget = 300
        episode_cap = 60
        eval_every = 150
        eval_seeds = [1, 2]

        [dagger]
        iterations = 2
        episodes_per_iteration = 1
        rollout_cap = 20
        eval_seeds = [5]
        [dagger.train]
        epochs = 1
        "#,
    )
    .unwrap();
    plan.pretrain.arch = Architecture::tiny();
    plan.rl.arch = Architecture::tiny();
    plan.dagger.train.arch = Architecture::tiny();
    plan.dagger.task = plan.tasks[0];
    plan.out_dir = dir.to_path_buf();
    plan.validate().unwrap();
    plan
}

fn files_under(root: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out
}

#[test]
fn full_pipeline_is_resumable_and_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = tiny_plan(tmp.path());
    let first = run_plan(&plan).unwrap();
    assert!(first.skipped.is_empty());
    assert!(first.executed.contains(&"rl_full_pre_a3c_shape_s3".to_string()));

    // every artifact is reachable from the manifest with its producing hash
    let manifest = Manifest::parse(&fs::read_to_string(tmp.path().join("manifest.txt")).unwrap()).unwrap();
    for f in files_under(tmp.path()) {
        if f == "manifest.txt" {
            continue;
        }
        assert!(manifest.producer(&f).is_some(), "{f} not in manifest");
    }
    assert!(manifest.records().iter().all(|r| !r.seeds.is_empty() || r.name == "plan"));

    // one series per variant, all five in one plot
    let legend = fs::read_to_string(tmp.path().join("plots/full_curves_legend.csv")).unwrap();
    assert_eq!(legend.lines().count(), 1 + Variant::ALL.len());

    // the plot is exactly the rendering of the CSV columns
    let mut series = Vec::new();
    for v in Variant::ALL {
        let text = fs::read_to_string(tmp.path().join(format!("curves/full_{v}_s3.csv"))).unwrap();
        series.push(if v.is_a3c() {
            series_from_csv(v.name(), &text, "step", "ma100").unwrap()
        } else {
            series_from_csv(v.name(), &text, "expert_queries", "eval_return").unwrap()
        });
    }
    let png = image::open(tmp.path().join("plots/full_curves.png")).unwrap().to_rgb8();
    assert_eq!(png, line_chart(&series));

    // a rerun trains nothing
    let second = run_plan(&plan).unwrap();
    assert!(second.executed.is_empty(), "{:?}", second.executed);
    assert_eq!(second.reports, first.reports);

    // deleting one variant's outputs regenerates only that variant, identically
    let curve = tmp.path().join("curves/full_a3c_shape_s3.csv");
    let before = fs::read_to_string(&curve).unwrap();
    fs::remove_file(&curve).unwrap();
    let third = run_plan(&plan).unwrap();
    assert_eq!(third.executed, vec!["rl_full_a3c_shape_s3".to_string()]);
    assert_eq!(fs::read_to_string(&curve).unwrap(), before);
}

#[test]
fn changed_config_is_a_stale_artifact_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut plan = tiny_plan(tmp.path());
    plan.variants = vec![Variant::A3C];
    run_plan(&plan).unwrap();
    plan.rl.budget += 60;
    match run_plan(&plan) {
        Err(Error::Stale(msg)) => assert!(msg.contains("rl_full_a3c_s3"), "{msg}"),
        other => panic!("expected stale error, got {other:?}"),
    }
}

#[test]
fn unrecorded_artifact_is_stale() {
    let tmp = tempfile::tempdir().unwrap();
    let mut plan = tiny_plan(tmp.path());
    plan.variants = vec![Variant::A3C];
    fs::create_dir_all(tmp.path().join("data")).unwrap();
    fs::write(tmp.path().join("data/full.traj"), b"junk").unwrap();
    assert!(matches!(run_plan(&plan), Err(Error::Stale(_))));
}

#[test]
fn lock_file_blocks_a_second_writer() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = tiny_plan(tmp.path());
    fs::write(tmp.path().join(".lock"), "1").unwrap();
    assert!(matches!(run_plan(&plan), Err(Error::Precondition(_))));
    assert!(tmp.path().join(".lock").exists());
}

#[test]
fn shipped_plan_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../plans/desk.toml");
    let plan = ExperimentPlan::load(&path).unwrap();
    assert_eq!(plan.variants.len(), Variant::ALL.len());
    assert!(plan.out_dir.ends_with("runs/desk"));
}
