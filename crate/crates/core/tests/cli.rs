mod support;

use std::path::Path;
use std::process::{Command, Output};

use lectern::model::{BBox, SceneProgram};
use lectern::store;
use support::*;

fn lectern(project: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lectern"))
        .arg("--project")
        .arg(project)
        .args(args)
        .env_remove("LECTERN_HALT_AFTER_PAGE")
        .env_remove("LECTERN_LLM_ENDPOINT")
        .env_remove("LECTERN_TTS_ENDPOINT")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn generate(project: &Path) -> Output {
    let d = sample_dir();
    lectern(
        project,
        &[
            "generate",
            "--outline",
            d.join("outline.json").to_str().unwrap(),
            "--config",
            d.join("config.json").to_str().unwrap(),
            "--replay",
            d.join("fixtures").to_str().unwrap(),
        ],
    )
}

#[test]
fn missing_outline_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lectern(
        tmp.path(),
        &["generate", "--outline", "/no/such/outline.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(
        text(&out.stderr).contains("/no/such/outline.json"),
        "{}",
        text(&out.stderr)
    );
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lectern(tmp.path(), &["generate", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn empty_fixture_dir_is_a_fixture_miss() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tempfile::tempdir().unwrap();
    let outline = sample_dir().join("outline.json");
    let out = lectern(
        tmp.path(),
        &[
            "generate",
            "--outline",
            outline.to_str().unwrap(),
            "--replay",
            empty.path().to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
}

#[test]
fn rerun_is_a_no_op_and_inspect_reports_overlaps() {
    let tmp = tempfile::tempdir().unwrap();
    let first = generate(tmp.path());
    assert_eq!(first.status.code(), Some(0), "{}", text(&first.stderr));
    assert!(text(&first.stdout).contains("pages"));

    let before = tree(tmp.path());
    let again = generate(tmp.path());
    assert_eq!(again.status.code(), Some(0));
    assert!(text(&again.stdout).contains("nothing to do"));
    assert_eq!(tree(tmp.path()), before);

    let clean = lectern(tmp.path(), &["inspect", "--page", "1"]);
    assert_eq!(clean.status.code(), Some(0));
    assert!(
        text(&clean.stdout).contains("no conflicts"),
        "{}",
        text(&clean.stdout)
    );

    // stack two elements on top of each other
    let run = std::fs::read_dir(tmp.path())
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let path = run.join("pages/1/scene");
    let mut scene: SceneProgram = store::load_from(&path).unwrap();
    let leaves: Vec<usize> = (0..scene.elements.len())
        .filter(|&i| scene.elements[i].children.is_empty())
        .collect();
    let (a, b) = (leaves[0], leaves[1]);
    scene.elements[b].bbox = BBox::new(
        scene.elements[a].bbox.cx,
        scene.elements[a].bbox.cy,
        1.0,
        0.5,
    );
    store::save_to(&path, &scene).unwrap();
    let (ida, idb) = (scene.elements[a].id.clone(), scene.elements[b].id.clone());

    let dirty = lectern(tmp.path(), &["inspect", "--page", "1"]);
    let s = text(&dirty.stdout);
    assert_eq!(dirty.status.code(), Some(0));
    let line = s
        .lines()
        .find(|l| l.starts_with("overlap"))
        .unwrap_or_else(|| panic!("{s}"));
    assert!(line.contains(&ida) && line.contains(&idb), "{line}");

    let missing = lectern(tmp.path(), &["inspect", "--page", "99"]);
    assert_eq!(missing.status.code(), Some(1));
}
