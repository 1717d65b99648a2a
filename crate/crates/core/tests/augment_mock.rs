use commentq_core::augment::{
    augment_blocking, cooperative_script, format_completion, generate_pairs, label_pairs, run_mock_server,
    GenerationConfig, PromptTemplate, ScriptedResponse,
};
use commentq_core::corpus::{CodeCommentPair, Corpus, Label, Source};
use commentq_core::synth::{synthesize, SynthConfig};
use commentq_core::Error;

fn completion(comment: &str, code: &str) -> ScriptedResponse {
    ScriptedResponse::Completion(format_completion(comment, code))
}

fn text(s: &str) -> ScriptedResponse {
    ScriptedResponse::Completion(s.to_string())
}

fn config(endpoint: &str, count: usize) -> GenerationConfig {
    GenerationConfig {
        endpoint: endpoint.to_string(),
        count,
        requests_in_flight: 1,
        backoff_ms: 1,
        api_key_env: "COMMENTQ_TEST_UNSET_KEY".into(),
        ..GenerationConfig::default()
    }
}

fn fresh(n: usize, tag: &str) -> Vec<CodeCommentPair> {
    (0..n)
        .map(|i| {
            CodeCommentPair::new(
                format!("/* {tag} step {i} */"),
                format!("int {tag}_{i}(void) {{ return {i}; }}"),
                Label::Unlabeled,
                Source::Generated,
            )
        })
        .collect()
}

fn base() -> Corpus {
    synthesize(&SynthConfig::new("base", 30, 20, 17)).unwrap()
}

#[tokio::test]
async fn three_well_formed_completions() {
    let pairs = fresh(3, "ok");
    let script = pairs.iter().map(|p| completion(&p.comment, &p.code)).collect();
    let server = run_mock_server(script, 0).await.unwrap();
    let out = generate_pairs(&config(&server.url(), 3), &PromptTemplate::default())
        .await
        .unwrap();
    server.shutdown().await;
    assert_eq!(out.pairs.len(), 3);
    assert!(out.discarded.is_empty());
    for (got, want) in out.pairs.iter().zip(&pairs) {
        assert_eq!(got.label, Label::Unlabeled);
        assert_eq!(got.source, Source::Generated);
        assert_eq!(got.id, want.content_hash());
        assert_eq!((&got.comment, &got.code), (&want.comment, &want.code));
    }
}

#[tokio::test]
async fn malformed_completion_is_discarded() {
    let script = vec![
        completion("/* a */", "int a;"),
        text("no fences at all"),
        completion("/* c */", "int c;"),
    ];
    let server = run_mock_server(script, 0).await.unwrap();
    let out = generate_pairs(&config(&server.url(), 3), &PromptTemplate::default())
        .await
        .unwrap();
    server.shutdown().await;
    assert_eq!(out.pairs.len(), 2);
    assert_eq!(out.discarded.len(), 1);
}

#[tokio::test]
async fn zero_count_is_a_config_error() {
    let err = generate_pairs(&config("http://127.0.0.1:9", 0), &PromptTemplate::default())
        .await
        .unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[tokio::test]
async fn all_malformed_is_generation_failure() {
    let server = run_mock_server(vec![text("nothing useful")], 0).await.unwrap();
    let err = generate_pairs(&config(&server.url(), 2), &PromptTemplate::default())
        .await
        .unwrap_err();
    server.shutdown().await;
    assert!(matches!(err, Error::GenerationFailed { requested: 2 }));
}

#[tokio::test]
async fn constant_useful_labels_everything() {
    let server = run_mock_server(vec![text("Useful")], 0).await.unwrap();
    let out = label_pairs(fresh(4, "u"), &config(&server.url(), 4), &PromptTemplate::default())
        .await
        .unwrap();
    server.shutdown().await;
    assert_eq!(out.pairs.len(), 4);
    assert!(out.pairs.iter().all(|p| p.label == Label::Useful));
}

#[tokio::test]
async fn persistent_maybe_drops_only_that_pair() {
    let pairs = fresh(3, "m");
    let mut script = vec![text("Useful")];
    script.extend(std::iter::repeat_n(text("maybe"), 4));
    script.push(text("  not USEFUL \n"));
    let server = run_mock_server(script, 0).await.unwrap();
    let out = label_pairs(pairs.clone(), &config(&server.url(), 3), &PromptTemplate::default())
        .await
        .unwrap();
    let prompts = server.prompts().await;
    server.shutdown().await;
    assert_eq!(prompts.len(), 6);
    assert_eq!(out.dropped, vec![pairs[1].id.clone()]);
    let labels: Vec<(&str, Label)> = out.pairs.iter().map(|p| (p.id.as_str(), p.label)).collect();
    assert_eq!(
        labels,
        [(pairs[0].id.as_str(), Label::Useful), (pairs[2].id.as_str(), Label::NotUseful)]
    );
}

#[tokio::test]
async fn labeled_input_is_rejected() {
    let mut pairs = fresh(2, "l");
    pairs[1].label = Label::Useful;
    let err = label_pairs(pairs, &config("http://127.0.0.1:9", 2), &PromptTemplate::default())
        .await
        .unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn duplicates_of_base_are_deduped() {
    let base = base();
    let mut script: Vec<ScriptedResponse> = base.pairs()[..2]
        .iter()
        .map(|p| completion(&p.comment, &p.code))
        .collect();
    let new = fresh(3, "d");
    script.extend(new.iter().map(|p| completion(&p.comment, &p.code)));
    script.extend(std::iter::repeat_n(text("Useful"), 5));
    let run = augment_blocking(&base, &config("http://unused", 5), &PromptTemplate::default(), Some(script)).unwrap();
    assert_eq!(run.corpus.len(), base.len() + 3);
    assert_eq!(run.stats.deduped, 2);
    assert_eq!(run.stats.merged, 3);
    assert_eq!(&run.corpus.pairs()[..base.len()], base.pairs());
}

#[test]
fn unparseable_and_unlabelable_are_both_lost() {
    let base = base();
    let new = fresh(3, "x");
    let mut script = vec![
        completion(&new[0].comment, &new[0].code),
        text("```\nonly one block\n```"),
        completion(&new[1].comment, &new[1].code),
        completion(&new[2].comment, &new[2].code),
        text("Not Useful"),
    ];
    script.extend(std::iter::repeat_n(text("unsure"), 4));
    script.push(text("Useful"));
    let run = augment_blocking(&base, &config("http://unused", 4), &PromptTemplate::default(), Some(script)).unwrap();
    let s = run.stats;
    assert_eq!((s.requested, s.generated, s.discarded), (4, 3, 1));
    assert_eq!((s.labeled, s.dropped, s.merged, s.deduped), (2, 1, 2, 0));
    assert_eq!(s.merged + s.deduped + s.dropped, s.generated);
    let added: Vec<&CodeCommentPair> = run.corpus.pairs()[base.len()..].iter().collect();
    assert_eq!(added.len(), 2);
    assert!(added.iter().all(|p| p.source == Source::Generated));
    assert_eq!((added[0].label, added[1].label), (Label::NotUseful, Label::Useful));
}

#[test]
fn cooperative_mock_adds_every_requested_pair() {
    let base = synthesize(&SynthConfig::new("seed", 5378, 3670, 1)).unwrap();
    assert_eq!(base.len(), 9048);
    let wanted = synthesize(&SynthConfig {
        source: Source::Generated,
        ..SynthConfig::new("gen", 700, 539, 2)
    })
    .unwrap();
    let wanted: Vec<CodeCommentPair> = wanted
        .pairs()
        .iter()
        .map(|p| CodeCommentPair::new(format!("{} [g]", p.comment), p.code.clone(), p.label, Source::Generated))
        .collect();
    assert_eq!(wanted.len(), 1239);
    let before = base.clone();
    let run = augment_blocking(
        &base,
        &config("http://unused", 1239),
        &PromptTemplate::default(),
        Some(cooperative_script(&wanted)),
    )
    .unwrap();
    assert_eq!(base, before);
    assert_eq!(run.corpus.len(), 10287);
    assert_eq!(run.stats.merged, 1239);
    for (got, want) in run.corpus.pairs()[9048..].iter().zip(&wanted) {
        assert_eq!((got.id.as_str(), got.label), (want.id.as_str(), want.label));
    }
}

#[test]
fn mock_runs_are_reproducible() {
    let base = base();
    let new = fresh(6, "r");
    let mut script = vec![text("garbage")];
    script.extend(new.iter().map(|p| completion(&p.comment, &p.code)));
    script.extend([text("Useful"), text("no"), text("Not Useful")]);
    script.push(text("Useful"));
    let cfg = config("http://unused", 7);
    let a = augment_blocking(&base, &cfg, &PromptTemplate::default(), Some(script.clone())).unwrap();
    let b = augment_blocking(&base, &cfg, &PromptTemplate::default(), Some(script)).unwrap();
    assert_eq!(a.corpus, b.corpus);
    assert_eq!(a.stats, b.stats);
    assert_eq!(a.prompts, b.prompts);
}

async fn post(url: &str, content: &str) -> reqwest::Response {
    reqwest::Client::new()
        .post(format!("{url}/v1/chat/completions"))
        .json(&serde_json::json!({
            "model": "m",
            "messages": [{"role": "user", "content": content}],
            "temperature": 0.0,
            "max_tokens": 8,
        }))
        .send()
        .await
        .unwrap()
}

#[tokio::test]
async fn mock_repeats_last_entry_and_records_prompts() {
    let server = run_mock_server(vec![text("same")], 0).await.unwrap();
    for i in 0..3 {
        let reply: serde_json::Value = post(&server.url(), &format!("prompt {i}")).await.json().await.unwrap();
        assert_eq!(reply["choices"][0]["message"]["content"], "same");
    }
    assert_eq!(server.prompts().await, ["prompt 0", "prompt 1", "prompt 2"]);
    server.shutdown().await;
}

#[tokio::test]
async fn empty_script_answers_server_error() {
    let server = run_mock_server(Vec::new(), 0).await.unwrap();
    for _ in 0..2 {
        assert_eq!(post(&server.url(), "hi").await.status().as_u16(), 500);
    }
    server.shutdown().await;
}

#[tokio::test]
async fn labeling_prompt_carries_code_verbatim() {
    let pairs = fresh(1, "verbatim");
    let server = run_mock_server(vec![text("Useful")], 0).await.unwrap();
    label_pairs(pairs.clone(), &config(&server.url(), 1), &PromptTemplate::default())
        .await
        .unwrap();
    let prompts = server.prompts().await;
    server.shutdown().await;
    assert!(prompts[0].contains(&pairs[0].code));
    assert!(prompts[0].contains(&pairs[0].comment));
}

#[tokio::test]
async fn busy_port_is_a_bind_error() {
    let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port();
    let err = run_mock_server(vec![text("x")], port).await.err().unwrap();
    assert!(matches!(err, Error::Bind(_)));
}

#[tokio::test]
async fn transient_status_is_retried_and_client_errors_are_not() {
    let script = vec![ScriptedResponse::Status { status: 503 }, ScriptedResponse::Status { status: 429 }, text("Useful")];
    let server = run_mock_server(script, 0).await.unwrap();
    let out = label_pairs(fresh(1, "t"), &config(&server.url(), 1), &PromptTemplate::default())
        .await
        .unwrap();
    assert_eq!(server.prompts().await.len(), 3);
    server.shutdown().await;
    assert_eq!(out.pairs[0].label, Label::Useful);

    let server = run_mock_server(vec![ScriptedResponse::Status { status: 401 }], 0).await.unwrap();
    let err = label_pairs(fresh(1, "t"), &config(&server.url(), 1), &PromptTemplate::default())
        .await
        .unwrap_err();
    assert_eq!(server.prompts().await.len(), 1);
    server.shutdown().await;
    assert!(matches!(err, Error::Transport(_)));
}

#[tokio::test]
async fn retries_exhausted_is_transport_error() {
    let server = run_mock_server(vec![ScriptedResponse::Status { status: 500 }], 0).await.unwrap();
    let err = generate_pairs(&config(&server.url(), 1), &PromptTemplate::default())
        .await
        .unwrap_err();
    assert_eq!(server.prompts().await.len(), 4);
    server.shutdown().await;
    assert!(matches!(err, Error::Transport(_)));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_requests_keep_input_order() {
    let pairs = fresh(8, "c");
    let server = run_mock_server(vec![text("Not Useful")], 0).await.unwrap();
    let cfg = GenerationConfig {
        requests_in_flight: 4,
        ..config(&server.url(), 8)
    };
    let out = label_pairs(pairs.clone(), &cfg, &PromptTemplate::default()).await.unwrap();
    let mut prompts = server.prompts().await;
    server.shutdown().await;
    let ids: Vec<&str> = out.pairs.iter().map(|p| p.id.as_str()).collect();
    let want: Vec<&str> = pairs.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(ids, want);
    assert!(out.pairs.iter().all(|p| p.label == Label::NotUseful));
    let mut expected: Vec<String> = pairs.iter().map(|p| PromptTemplate::default().labeling_prompt(p)).collect();
    prompts.sort();
    expected.sort();
    assert_eq!(prompts, expected);
}
