mod common;

use image::{Rgba, RgbaImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tapwise::ui_model::{annotate_screenshot, label_text_height, parse_hierarchy};

use common::{check_fixture, check_labels, hierarchy_fixtures, mutate_hierarchy, render_registry, shape};

#[test]
fn fixture_suite() {
    let fixtures = hierarchy_fixtures();
    assert!(fixtures.len() >= 20, "only {} fixtures", fixtures.len());
    for f in &fixtures {
        check_fixture(f).unwrap();
    }
}

#[test]
fn login_screen_has_five_of_twelve_nodes() {
    let f = hierarchy_fixtures().into_iter().find(|f| f.name == "01_login.xml").unwrap();
    assert_eq!(f.nodes, 12);
    let reg = parse_hierarchy(&f.xml, f.screen).unwrap();
    assert_eq!(reg.len(), 5);
    let email = reg.by_identifier("com.example.app:id/email").unwrap();
    assert!(email.editable);
    assert_eq!(reg.input_target().map(|e| e.label), Some(1));
}

#[test]
fn mutations_preserve_registry() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for f in hierarchy_fixtures() {
        let base = parse_hierarchy(&f.xml, f.screen).unwrap();
        let mut xml = f.xml.clone();
        for _ in 0..20 {
            xml = mutate_hierarchy(&xml, &mut rng);
            let reg = parse_hierarchy(&xml, f.screen).unwrap_or_else(|e| panic!("{}: {e}\n{xml}", f.name));
            assert_eq!(shape(&reg), shape(&base), "{}\n{xml}", f.name);
            check_labels(&reg).unwrap();
        }
    }
}

#[test]
fn reparse_of_rendered_registry_is_a_fixpoint() {
    for f in hierarchy_fixtures() {
        let reg = parse_hierarchy(&f.xml, f.screen).unwrap();
        let again = parse_hierarchy(&render_registry(&reg), f.screen).unwrap();
        assert_eq!(shape(&again), shape(&reg), "{}", f.name);
        let twice = parse_hierarchy(&render_registry(&again), f.screen).unwrap();
        assert_eq!(twice, again, "{}", f.name);
    }
}

#[test]
fn source_hash_tracks_exact_text() {
    let f = &hierarchy_fixtures()[0];
    let a = parse_hierarchy(&f.xml, f.screen).unwrap();
    let b = parse_hierarchy(&format!("{} ", f.xml), f.screen).unwrap();
    assert_eq!(a.elements, b.elements);
    assert_ne!(a.source_hash, b.source_hash);
}

/// Connected regions (4-neighbourhood) of pixels that differ between two
/// images, as (min x, min y, max x, max y).
fn changed_regions(a: &RgbaImage, b: &RgbaImage) -> Vec<(u32, u32, u32, u32)> {
    let (w, h) = a.dimensions();
    let changed = |x: u32, y: u32| a.get_pixel(x, y) != b.get_pixel(x, y);
    let mut seen = vec![false; (w * h) as usize];
    let mut regions = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if seen[(y * w + x) as usize] || !changed(x, y) {
                continue;
            }
            let mut bbox = (x, y, x, y);
            let mut stack = vec![(x, y)];
            seen[(y * w + x) as usize] = true;
            while let Some((px, py)) = stack.pop() {
                bbox = (bbox.0.min(px), bbox.1.min(py), bbox.2.max(px), bbox.3.max(py));
                let around = [(px.wrapping_sub(1), py), (px + 1, py), (px, py.wrapping_sub(1)), (px, py + 1)];
                for (nx, ny) in around {
                    if nx < w && ny < h && !seen[(ny * w + nx) as usize] && changed(nx, ny) {
                        seen[(ny * w + nx) as usize] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            regions.push(bbox);
        }
    }
    regions
}

#[test]
fn five_elements_give_five_label_clusters() {
    let size = (1080u32, 1920u32);
    let centres = [(200, 300), (800, 300), (540, 960), (200, 1600), (800, 1600)];
    let nodes: String = centres
        .iter()
        .enumerate()
        .map(|(i, (x, y))| {
            format!(r#"<node resource-id="e{i}" clickable="true" bounds="[{},{}][{},{}]" />"#, x - 150, y - 80, x + 150, y + 80)
        })
        .collect();
    let reg = parse_hierarchy(&format!("<hierarchy>{nodes}</hierarchy>"), size).unwrap();
    let img = RgbaImage::from_pixel(size.0, size.1, Rgba([180, 190, 200, 255]));
    let out = annotate_screenshot(&img, &reg).unwrap();

    let mut regions = changed_regions(&img, &out);
    regions.sort_by_key(|r| (r.1, r.0));
    assert_eq!(regions.len(), 5, "{regions:?}");
    let text_h = label_text_height(size.1);
    for ((x, y), (x0, y0, x1, y1)) in centres.iter().zip(&regions) {
        // Each cluster is centred on its element within a pixel and is at
        // least as tall as the label glyphs.
        assert!((((x0 + x1) / 2) as i32 - x).abs() <= 1, "{x} vs {x0}..{x1}");
        assert!((((y0 + y1) / 2) as i32 - y).abs() <= 1, "{y} vs {y0}..{y1}");
        assert!(y1 - y0 + 1 >= text_h);
    }
    // Box pixels are halved, glyph pixels are white.
    let (x, y) = (regions[0].0 + 1, (regions[0].1 + regions[0].3) / 2);
    let p = out.get_pixel(x, y);
    assert!(*p == Rgba([90, 95, 100, 255]) || *p == Rgba([255, 255, 255, 255]), "{p:?}");
}
