use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use tod_core::gateway::{
    load_fixtures, Completion, CompletionRequest, FnTransport, Gateway, GatewayError, GatewayMode, JsonSchema,
    ModelSettings, TransportError,
};

fn counting_transport(calls: Arc<AtomicUsize>) -> Arc<FnTransport<impl Fn(&CompletionRequest) -> Result<Completion, TransportError> + Send + Sync>> {
    Arc::new(FnTransport(move |req: &CompletionRequest| {
        calls.fetch_add(1, Ordering::SeqCst);
        Ok(Completion::text(format!("{{\"echo\": {:?}}}", req.messages[0].content)))
    }))
}

#[test]
fn recorded_exchanges_replay_without_transport() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixtures.jsonl");
    let calls = Arc::new(AtomicUsize::new(0));
    let recorder = Gateway::builder(GatewayMode::Record(path.clone()))
        .transport(counting_transport(calls.clone()))
        .build()
        .unwrap();
    let model = ModelSettings::default();
    let a = recorder.complete(&model.prompt("first")).unwrap();
    let b = recorder.complete(&model.prompt("second")).unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 2);
    assert_eq!(load_fixtures(&path).unwrap().len(), 2);

    let replay = Gateway::replay(&path).unwrap();
    assert_eq!(replay.complete(&model.prompt("first")).unwrap().text, a.text);
    assert_eq!(replay.complete(&model.prompt("second")).unwrap().text, b.text);
    let parsed = replay
        .complete_json(&model.prompt("first"), &JsonSchema::object([("echo", JsonSchema::String)]), 0)
        .unwrap();
    assert_eq!(parsed.value["echo"], "first");
    assert_eq!(replay.upstream_calls(), 0);
}

#[test]
fn replay_miss_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    let replay = Gateway::replay(&path).unwrap();
    let err = replay.complete(&ModelSettings::default().prompt("unseen")).unwrap_err();
    assert!(matches!(err, GatewayError::FixtureMiss { ref key } if key.len() == 64), "{err:?}");
}

#[test]
fn settings_change_the_cache_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixtures.jsonl");
    let calls = Arc::new(AtomicUsize::new(0));
    let recorder = Gateway::builder(GatewayMode::Record(path.clone()))
        .transport(counting_transport(calls.clone()))
        .build()
        .unwrap();
    let cold = ModelSettings::default();
    let warm = ModelSettings {
        temperature: 0.7,
        ..ModelSettings::default()
    };
    recorder.complete(&cold.prompt("same")).unwrap();
    recorder.complete(&cold.prompt("same")).unwrap();
    recorder.complete(&warm.prompt("same")).unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 2);
}
