//! Full run of the bundled sample from recorded fixtures, then a resume
//! that finds nothing left to do.

use std::path::PathBuf;

use lectern::canon;
use lectern::gateway::{FixtureStore, Gateway};
use lectern::model::{LectureOutline, PipelineConfig};
use lectern::pipeline::{self, Pipeline, RunOutcome};

fn main() {
    let sample = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/sample");
    let outline: LectureOutline =
        canon::from_slice(&std::fs::read(sample.join("outline.json")).unwrap()).unwrap();
    let config: PipelineConfig =
        canon::from_slice(&std::fs::read(sample.join("config.json")).unwrap()).unwrap();
    let project = std::env::temp_dir().join(format!("lectern-pipeline-{}", std::process::id()));

    let p = Pipeline::new(
        &project,
        Gateway::new(FixtureStore::replay(sample.join("fixtures")), config.seed),
    );
    let RunOutcome::Complete(out) = p.run(&outline, &config).unwrap() else {
        unreachable!("review is off in the sample config")
    };
    for seg in &out.video_plan.segments {
        println!(
            "page {:>2}: {:>7.3} s  {}",
            seg.page_index, seg.duration_s, seg.video_ref
        );
    }
    println!(
        "total {:.3} s, {} network calls",
        out.video_plan.total_duration_s,
        p.gateway.transport_calls()
    );

    let run_id = pipeline::run_id_for(&outline, &config);
    let again = Pipeline::new(
        &project,
        Gateway::new(FixtureStore::replay(sample.join("fixtures")), config.seed),
    );
    again.resume(&run_id).unwrap();
    println!(
        "resume of {run_id}: {} network calls",
        again.gateway.transport_calls()
    );
    let _ = std::fs::remove_dir_all(&project);
}
