use lstm_distill::heatmap::{render_html, HeatmapDoc};
use lstm_distill::importance::Method;

const GOLDEN: &str = include_str!("golden/heatmap_3tok.html");

#[test]
fn three_token_document_matches_golden() {
    let doc = HeatmapDoc::new(
        vec!["worst".into(), "service".into(), "ever".into()],
        vec![2.0, -0.5, 1.0],
        Method::Gamma,
    )
    .unwrap();
    let html = render_html(&doc);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(
            concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/heatmap_3tok.html"),
            &html,
        )
        .unwrap();
    }
    assert_eq!(html, GOLDEN);
    assert_eq!(html.matches("<span").count(), 3);
}
