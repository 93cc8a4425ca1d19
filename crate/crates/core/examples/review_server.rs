//! Park the sample run for review and serve the review API.
//!
//!     cargo run --example review_server -- 8080
//!     curl localhost:8080/runs

use std::path::PathBuf;
use std::sync::Arc;

use lectern::canon;
use lectern::gateway::{FixtureStore, Gateway, Service};
use lectern::mock::MockLlm;
use lectern::model::{LectureOutline, PipelineConfig};
use lectern::pipeline::{Pipeline, RunOutcome};
use lectern::review::{self, ReviewService};

fn main() {
    let port: u16 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(8080);
    let sample = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/sample");
    let outline: LectureOutline =
        canon::from_slice(&std::fs::read(sample.join("outline.json")).unwrap()).unwrap();
    let mut config: PipelineConfig =
        canon::from_slice(&std::fs::read(sample.join("config.json")).unwrap()).unwrap();
    config.review_enabled = true;
    let project = std::env::temp_dir().join("lectern-review");
    let gw = || {
        Gateway::new(FixtureStore::passthrough(), 0).with_transport(Service::Llm, Arc::new(MockLlm))
    };

    let run_id = match Pipeline::new(&project, gw())
        .run(&outline, &config)
        .unwrap()
    {
        RunOutcome::AwaitingReview { run_id, pending } => {
            println!("pages awaiting review: {pending:?}");
            run_id
        }
        RunOutcome::Complete(_) => {
            println!(
                "run already complete; delete {} to start over",
                project.display()
            );
            return;
        }
    };
    let svc = ReviewService::open(Pipeline::new(&project, gw()), &run_id).unwrap();
    println!("http://127.0.0.1:{port}/runs/{run_id}/pages");
    review::serve(&svc, port).unwrap();
}
