use image::{Rgba, RgbaImage};
use thiserror::Error;

use super::ElementRegistry;
use crate::font;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("screenshot is {actual:?} but the registry was parsed for {expected:?}")]
pub struct AnnotateError {
    pub expected: (u32, u32),
    pub actual: (u32, u32),
}

/// Label glyph height: 3% of the screen height, never below 24 px.
pub fn label_text_height(screen_height: u32) -> u32 {
    ((screen_height as f64 * 0.03).round() as u32).max(24)
}

/// Returns a copy of `image` with every element's label drawn at the centre
/// of its bounds: white glyphs on a rounded, half-transparent black box.
pub fn annotate_screenshot(image: &RgbaImage, registry: &ElementRegistry) -> Result<RgbaImage, AnnotateError> {
    let actual = image.dimensions();
    if actual != registry.screen_size {
        return Err(AnnotateError { expected: registry.screen_size, actual });
    }
    let mut out = image.clone();
    let text_h = label_text_height(actual.1);
    for element in &registry.elements {
        draw_label(&mut out, element.bounds.center(), &element.label.to_string(), text_h);
    }
    Ok(out)
}

fn draw_label(img: &mut RgbaImage, (cx, cy): (i32, i32), text: &str, text_h: u32) {
    let pad = (text_h / 4) as i64;
    let box_w = font::text_width(text, text_h) as i64 + 2 * pad;
    let box_h = text_h as i64 + 2 * pad;
    let left = cx as i64 - box_w / 2;
    let top = cy as i64 - box_h / 2;
    let radius = pad;
    let (w, h) = (img.width() as i64, img.height() as i64);

    for y in top.max(0)..(top + box_h).min(h) {
        for x in left.max(0)..(left + box_w).min(w) {
            if outside_rounded_corner(x - left, y - top, box_w, box_h, radius) {
                continue;
            }
            let p = img.get_pixel_mut(x as u32, y as u32);
            for c in 0..3 {
                p[c] /= 2;
            }
        }
    }
    font::draw_text(img, left + pad, top + pad, text_h, text, Rgba([255, 255, 255, 255]));
}

fn outside_rounded_corner(x: i64, y: i64, w: i64, h: i64, r: i64) -> bool {
    if r == 0 {
        return false;
    }
    let cx = if x < r { r } else if x >= w - r { w - r - 1 } else { return false };
    let cy = if y < r { r } else if y >= h - r { h - r - 1 } else { return false };
    let (dx, dy) = (x - cx, y - cy);
    dx * dx + dy * dy > r * r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ui_model::{Bounds, UiElement};

    fn element(label: u32, bounds: Bounds) -> UiElement {
        UiElement {
            identifier: format!("e{label}"),
            label,
            bounds,
            class_name: "android.widget.Button".into(),
            text_content: String::new(),
            clickable: true,
            long_clickable: false,
            editable: false,
        }
    }

    fn registry(size: (u32, u32), elements: Vec<UiElement>) -> ElementRegistry {
        ElementRegistry { elements, screen_size: size, source_hash: String::new() }
    }

    fn white(size: (u32, u32)) -> RgbaImage {
        RgbaImage::from_pixel(size.0, size.1, Rgba([255, 255, 255, 255]))
    }

    fn diff_mask(a: &RgbaImage, b: &RgbaImage) -> Vec<(u32, u32)> {
        a.enumerate_pixels().filter(|(x, y, p)| b.get_pixel(*x, *y) != *p).map(|(x, y, _)| (x, y)).collect()
    }

    #[test]
    fn text_height_rule() {
        assert_eq!(label_text_height(640), 24);
        assert_eq!(label_text_height(800), 24);
        assert_eq!(label_text_height(1920), 58);
    }

    #[test]
    fn empty_registry_is_identity() {
        let img = white((200, 300));
        let out = annotate_screenshot(&img, &registry((200, 300), vec![])).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn dimension_mismatch() {
        let err = annotate_screenshot(&white((10, 10)), &registry((20, 20), vec![])).unwrap_err();
        assert_eq!(err, AnnotateError { expected: (20, 20), actual: (10, 10) });
    }

    #[test]
    fn single_label_is_centered_on_its_element() {
        let size = (1080, 1920);
        let img = white(size);
        let reg = registry(size, vec![element(1, Bounds::new(0, 0, 100, 50))]);
        let out = annotate_screenshot(&img, &reg).unwrap();
        assert_eq!(out.dimensions(), size);
        assert_eq!(img, white(size), "input mutated");
        let diff = diff_mask(&img, &out);
        assert!(!diff.is_empty());
        // Style at 1920 px: 58 px glyphs (41 px wide for one digit), 14 px
        // padding, so the box is 69x86 centred on (50, 25) and clipped at y=0.
        let (bw, bh) = (41 + 2 * 14, 58 + 2 * 14);
        let (left, top) = (50 - bw / 2, 25 - bh / 2);
        for &(x, y) in &diff {
            let (x, y) = (x as i64, y as i64);
            assert!(x >= left && x < left + bw && y >= top && y < top + bh, "({x},{y}) outside box");
        }
        let min_x = diff.iter().map(|p| p.0).min().unwrap() as i64;
        let max_x = diff.iter().map(|p| p.0).max().unwrap() as i64;
        assert!((min_x + max_x - 100).abs() <= 1, "{min_x}..{max_x}");
    }

    #[test]
    fn backing_box_halves_the_background() {
        let size = (400, 400);
        let img = RgbaImage::from_pixel(size.0, size.1, Rgba([200, 100, 50, 255]));
        let reg = registry(size, vec![element(7, Bounds::new(100, 100, 300, 300))]);
        let out = annotate_screenshot(&img, &reg).unwrap();
        let colors: std::collections::BTreeSet<[u8; 4]> = out.pixels().map(|p| p.0).collect();
        assert_eq!(
            colors,
            [[200, 100, 50, 255], [100, 50, 25, 255], [255, 255, 255, 255]].into_iter().collect()
        );
    }
}
