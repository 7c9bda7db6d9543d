use skelact_core::data::{synth_generate, SynthSpec};
use skelact_core::evaluation::{evaluate, filter_confusion};
use skelact_core::numerics::Tensor;
use skelact_core::render::{luminance, render_confusion_svg, render_skeleton_svg, RenderStyle};
use skelact_core::taylor::{motion_magnitude, TaylorConfig};
use skelact_core::topology::build_ntu_graph;

fn pose() -> Vec<[f64; 3]> {
    let ds = synth_generate(&SynthSpec {
        per_class: 1,
        frames: 16,
        ..SynthSpec::default()
    })
    .unwrap();
    let f = &ds.sequences[0].frames;
    (0..25).map(|j| [f[[0, 0, j, 0]], f[[0, 0, j, 1]], f[[0, 0, j, 2]]]).collect()
}

fn count(doc: &roxmltree::Document, tag: &str, class: &str) -> usize {
    doc.descendants()
        .filter(|n| n.has_tag_name(tag) && n.attribute("class") == Some(class))
        .count()
}

fn motion_radii(doc: &roxmltree::Document) -> Vec<(usize, f64)> {
    doc.descendants()
        .filter(|n| n.attribute("class") == Some("motion"))
        .map(|n| {
            (
                n.attribute("data-joint").unwrap().parse().unwrap(),
                n.attribute("r").unwrap().parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn static_pose_has_bones_and_joints_only() {
    let svg = render_skeleton_svg(&pose(), None, &build_ntu_graph(), &RenderStyle::default()).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert_eq!(count(&doc, "line", "bone"), 24);
    assert_eq!(count(&doc, "circle", "joint"), 25);
    assert_eq!(count(&doc, "circle", "motion"), 0);
}

#[test]
fn motion_radius_follows_base_plus_scale() {
    let style = RenderStyle {
        motion_base_radius: 1.0,
        motion_radius_scale: 3.0,
        ..RenderStyle::default()
    };
    let mut motion = vec![0.0; 25];
    motion[7] = 2.0;
    let svg = render_skeleton_svg(&pose(), Some(&motion), &build_ntu_graph(), &style).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let circle = doc
        .descendants()
        .find(|n| n.attribute("class") == Some("motion"))
        .unwrap();
    assert_eq!(circle.attribute("r"), Some("7"));
    assert_eq!(circle.attribute("data-joint"), Some("7"));
}

#[test]
fn larger_motion_draws_larger_circle() {
    let mut motion = vec![0.0; 25];
    motion[3] = 1.0;
    motion[11] = 2.0;
    let svg = render_skeleton_svg(&pose(), Some(&motion), &build_ntu_graph(), &RenderStyle::default()).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let radii = motion_radii(&doc);
    assert_eq!(radii.len(), 2);
    assert!(radii[1].1 > radii[0].1);
}

#[test]
fn taylor_motion_overlay_renders_one_circle_per_moving_joint() {
    let ds = synth_generate(&SynthSpec {
        per_class: 1,
        frames: 16,
        ..SynthSpec::default()
    })
    .unwrap();
    let field = motion_magnitude(&ds.sequences[0], &TaylorConfig::default()).unwrap();
    let mags = field.at_frame(0, 0);
    let f = &ds.sequences[0].frames;
    let joints: Vec<[f64; 3]> = (0..25).map(|j| [f[[0, 0, j, 0]], f[[0, 0, j, 1]], f[[0, 0, j, 2]]]).collect();
    let svg = render_skeleton_svg(&joints, Some(&mags), &build_ntu_graph(), &RenderStyle::default()).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(motion_radii(&doc).len(), mags.iter().filter(|&&m| m > 0.0).count());
}

#[test]
fn non_finite_joint_is_named() {
    let mut p = pose();
    p[13][1] = f64::NAN;
    let err = render_skeleton_svg(&p, None, &build_ntu_graph(), &RenderStyle::default()).unwrap_err();
    assert!(err.to_string().contains("joint 13"), "{err}");
}

#[test]
fn rendering_is_byte_identical() {
    let motion: Vec<f64> = (0..25).map(|j| j as f64 * 0.001).collect();
    let style = RenderStyle::default();
    let a = render_skeleton_svg(&pose(), Some(&motion), &build_ntu_graph(), &style).unwrap();
    let b = render_skeleton_svg(&pose(), Some(&motion), &build_ntu_graph(), &style).unwrap();
    assert_eq!(a, b);
}

fn cell_fills(svg: &str) -> Vec<((usize, usize), [u8; 3])> {
    let doc = roxmltree::Document::parse(svg).unwrap();
    doc.descendants()
        .filter(|n| n.attribute("class") == Some("cell"))
        .map(|n| {
            let fill = n.attribute("fill").unwrap();
            let c = |i: usize| u8::from_str_radix(&fill[i..i + 2], 16).unwrap();
            (
                (
                    n.attribute("data-row").unwrap().parse().unwrap(),
                    n.attribute("data-col").unwrap().parse().unwrap(),
                ),
                [c(1), c(3), c(5)],
            )
        })
        .collect()
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("a<{i}>&b")).collect()
}

#[test]
fn identity_matrix_paints_only_diagonal() {
    let m: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 100.0 } else { 0.0 }).collect()).collect();
    let svg = render_confusion_svg(&m, &names(4), &RenderStyle::default()).unwrap();
    let cells = cell_fills(&svg);
    assert_eq!(cells.len(), 4);
    assert!(cells.iter().all(|((r, c), _)| r == c));
    // labels survive escaping
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let label = doc.descendants().find(|n| n.attribute("class") == Some("label")).unwrap();
    assert_eq!(label.text(), Some("a<0>&b"));
}

#[test]
fn higher_value_is_darker() {
    let m = vec![vec![100.0, 0.0], vec![50.0, 50.0]];
    let cells = cell_fills(&render_confusion_svg(&m, &names(2), &RenderStyle::default()).unwrap());
    let fill = |rc| cells.iter().find(|(k, _)| *k == rc).unwrap().1;
    assert!(luminance(fill((0, 0))) < luminance(fill((1, 0))));
}

#[test]
fn empty_matrix_is_valid_svg() {
    let svg = render_confusion_svg(&[], &[], &RenderStyle::default()).unwrap();
    roxmltree::Document::parse(&svg).unwrap();
    assert!(cell_fills(&svg).is_empty());
}

#[test]
fn filtered_confusion_renders_only_surviving_cells() {
    // rows: [19, 1] → [95, 5]; [1, 1, ...] style small entries vanish
    let logits = Tensor::new(
        vec![23, 2],
        (0..23)
            .flat_map(|i| if i < 19 || i == 20 { [1.0, 0.0] } else { [0.0, 1.0] })
            .collect(),
    )
    .unwrap();
    let labels: Vec<usize> = (0..23).map(|i| if i < 20 { 0 } else { 1 }).collect();
    let report = evaluate(&logits, &labels).unwrap();
    let filtered = filter_confusion(&report, 5.0).unwrap();
    assert_eq!(filtered[0], vec![95.0, 5.0]);
    let cells = cell_fills(&render_confusion_svg(&filtered, &names(2), &RenderStyle::default()).unwrap());
    assert_eq!(cells.len(), 4);
}
