//! Seeded workload builders shared by the benchmarks.

use cardloom_core::{CardId, InstrumentKind, ProvenanceEdge, ProvenanceGraph};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A provenance-shaped DAG: most cards have one parent, about one in seven
/// is a collage of two or three earlier cards, the rest are roots.
pub fn provenance_dag(nodes: usize, seed: u64) -> ProvenanceGraph {
    let mut rng = rng(seed);
    let ids: Vec<CardId> = (0..nodes).map(|i| CardId::new(format!("card-{i:05}"))).collect();
    let mut graph = ProvenanceGraph::new();
    for id in &ids {
        graph.add_node(id.clone()).expect("fresh id");
    }
    let single =
        [InstrumentKind::ExactCraft, InstrumentKind::Lasso, InstrumentKind::Filter, InstrumentKind::PerspectiveShift];
    for i in 1..nodes {
        let roll: f64 = rng.random();
        if roll < 0.15 {
            continue;
        }
        if roll < 0.85 || i < 3 {
            let parent = rng.random_range(0..i);
            let kind = *single.choose(&mut rng).expect("non-empty");
            graph.add_edge(ProvenanceEdge::new(ids[parent].clone(), ids[i].clone(), kind)).expect("forward edge");
        } else {
            let k = rng.random_range(2..=3);
            for parent in rand::seq::index::sample(&mut rng, i, k) {
                graph
                    .add_edge(ProvenanceEdge::new(ids[parent].clone(), ids[i].clone(), InstrumentKind::Collage))
                    .expect("forward edge");
            }
        }
    }
    graph
}

/// A reply in the shape text models tend to produce: fenced, with an extra key.
pub fn fenced_reply(words: usize) -> String {
    let story = (0..words).map(|i| ["harbor", "lantern", "Maya", "tide"][i % 4]).collect::<Vec<_>>().join(" ");
    format!(
        "```json\n{{\"story\": \"{story}\", \"intention\": \"evening scene\", \"sketch_information\": \"none\", \"mood\": \"quiet\"}}\n```"
    )
}
