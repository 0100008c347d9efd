//! Collage requests serialize their placements top-to-bottom, then
//! left-to-right, whatever order the frame listed them in.

use cardloom_core::instruments::{CollageFrame, FramePoint, FrameSize, PixelRect, Placement, PlacementSource, Point};
use cardloom_core::session::{card_id, GenerationMode};
use cardloom_core::{Command, MultimodalIntent, Orchestrator, Session};
use serde_json::{json, Value};

fn placement(source: PlacementSource, (x, y): (f64, f64), (w, h): (f64, f64)) -> Placement {
    Placement { source, position: FramePoint { x, y }, size: FrameSize { w, h } }
}

async fn two_card_session() -> Session {
    let orch = Orchestrator::mock();
    let mut s = Session::new("collage");
    for (i, text) in ["the harbor at dusk", "a lantern on the pier"].into_iter().enumerate() {
        let cmd = Command::Generate { mode: GenerationMode::ExactCraft, intent: MultimodalIntent::text(text) };
        s.execute(cmd, &orch, vec![], i as u64).await.unwrap();
    }
    s
}

fn scrambled_frame() -> CollageFrame {
    CollageFrame {
        placements: vec![
            placement(
                PlacementSource::ImageCrop { card_id: card_id(2), rect: PixelRect::new(0, 0, 16, 16) },
                (0.7, 0.1),
                (0.25, 0.25),
            ),
            placement(PlacementSource::TextNote { text: "the lantern goes out".into() }, (0.1, 0.75), (0.5, 0.1)),
            placement(
                PlacementSource::ImageCrop { card_id: card_id(1), rect: PixelRect::new(8, 8, 32, 32) },
                (0.05, 0.1),
                (0.3, 0.3),
            ),
            placement(
                PlacementSource::SketchFragment { strokes: vec![vec![Point::new(1.0, 1.0), Point::new(20.0, 5.0)]] },
                (0.4, 0.5),
                (0.2, 0.2),
            ),
        ],
    }
}

#[tokio::test]
async fn request_matches_golden_layout() {
    let session = two_card_session().await;
    let cmd = Command::Collage { frame: scrambled_frame(), intent_text: Some("night falls".into()) };
    let prepared = session.prepare(&cmd, &[]).unwrap();
    let request = serde_json::to_value(&prepared.plans[0].request).unwrap();

    let golden: Value = serde_json::from_str(include_str!("fixtures/collage_request.json")).unwrap();
    assert_eq!(request["mode"], golden["mode"]);
    assert_eq!(request["intent"]["reference_cards"], golden["reference_cards"]);
    assert_eq!(request["placements"], golden["placements"]);
    assert_eq!(prepared.plans[0].parents, vec![card_id(1), card_id(2)]);
}

#[tokio::test]
async fn frame_order_does_not_change_the_request() {
    let session = two_card_session().await;
    let mut frame = scrambled_frame();
    let first = session.prepare(&Command::Collage { frame: frame.clone(), intent_text: None }, &[]).unwrap();
    frame.placements.reverse();
    let second = session.prepare(&Command::Collage { frame, intent_text: None }, &[]).unwrap();
    assert_eq!(
        serde_json::to_string(&first.plans[0].request).unwrap(),
        serde_json::to_string(&second.plans[0].request).unwrap()
    );
    assert_eq!(json!(first.plans[0].slots), json!(second.plans[0].slots));
}

#[tokio::test]
async fn committed_collage_links_both_sources() {
    let mut session = two_card_session().await;
    let cmd = Command::Collage { frame: scrambled_frame(), intent_text: None };
    let applied = session.execute(cmd, &Orchestrator::mock(), vec![], 9).await.unwrap();
    let parents: Vec<_> = session.graph.parents(&applied.created[0]).map(|e| e.parent.clone()).collect();
    assert_eq!(parents, vec![card_id(1), card_id(2)]);
    assert!(session.check_invariants().is_ok());
}
