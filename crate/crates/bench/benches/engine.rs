use std::hint::black_box;

use cardloom_bench::{fenced_reply, provenance_dag};
use cardloom_core::card::{rebase_through, TextAnchor, TextEdit};
use cardloom_core::orchestrator::parse_text_reply;
use cardloom_core::session::{card_id, compute_metrics, GenerationMode};
use cardloom_core::{CardId, ClusterIndex, Command, MultimodalIntent, NarrativeObject, Orchestrator, Session};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("compute_metrics");
    for nodes in [50, 500, 5_000] {
        let graph = provenance_dag(nodes, 42);
        group.bench_with_input(BenchmarkId::from_parameter(nodes), &graph, |b, g| {
            b.iter(|| compute_metrics(black_box(g)).unwrap())
        });
    }
    group.finish();
}

fn rebase(c: &mut Criterion) {
    let story = "Maya waits by the harbor gate while the lantern gutters in the wind. ".repeat(4);
    let anchor = TextAnchor::new(CardId::new("c"), &story, 200, 215).unwrap();
    let edits: Vec<TextEdit> = (0..64).map(|i| TextEdit::replace(i, 0, 1)).collect();
    c.bench_function("rebase_through/64_edits", |b| {
        b.iter(|| rebase_through(black_box(&anchor), black_box(&edits), story.chars().count()).unwrap())
    });
}

fn parse(c: &mut Criterion) {
    let raw = fenced_reply(100);
    c.bench_function("parse_text_reply/fenced_100_words", |b| b.iter(|| parse_text_reply(black_box(&raw)).unwrap()));
}

fn generation(c: &mut Criterion) {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    let orch = Orchestrator::mock();
    let mut base = Session::new("bench");
    rt.block_on(base.execute(Command::Open { context: Default::default() }, &orch, vec![], 0)).unwrap();

    let mut group = c.benchmark_group("mock_generation");
    for (name, mode) in [("exact_craft", GenerationMode::ExactCraft), ("creative_spark", GenerationMode::CreativeSpark)]
    {
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut s = base.clone();
                let cmd = Command::Generate { mode, intent: MultimodalIntent::text("Maya at the harbor gate") };
                rt.block_on(s.execute(cmd, &orch, vec![], 1)).unwrap()
            })
        });
    }
    group.finish();
}

fn clusters(c: &mut Criterion) {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    let orch = Orchestrator::mock();
    let mut s = Session::new("bench");
    rt.block_on(async {
        s.execute(Command::Open { context: Default::default() }, &orch, vec![], 0).await.unwrap();
        for i in 0..20 {
            let cmd = Command::Generate {
                mode: GenerationMode::ExactCraft,
                intent: MultimodalIntent::text("Maya and the gate"),
            };
            s.execute(cmd, &orch, vec![], i).await.unwrap();
        }
        for (n, name) in (1..=20).flat_map(|i| [(i, "Maya"), (i, "gate")]) {
            let cmd = Command::AddHighlight {
                card_id: card_id(n),
                start: 0,
                end: 4,
                object: Some(NarrativeObject::character(name)),
                comment: None,
            };
            s.execute(cmd, &orch, vec![], 30).await.unwrap();
        }
    });
    c.bench_function("cluster_rebuild/40_highlights", |b| {
        b.iter(|| ClusterIndex::rebuild(black_box(s.highlights.values()), |id| s.cards.contains_key(id)))
    });
}

criterion_group!(benches, metrics, rebase, parse, generation, clusters);
criterion_main!(benches);
