use image::{Rgba, RgbaImage};

use super::{page_registry, ScreenshotSource, SimAppSpec, SimState};
use crate::font;

const TITLE_BAR: u32 = 48;

fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Rewrites the `text` attribute of the node whose `resource-id` is `sink`.
/// Returns `None` when no such node exists or the document does not parse.
pub fn reflect_text(xml: &str, sink: &str, text: &str) -> Option<String> {
    let doc = roxmltree::Document::parse(xml).ok()?;
    let node = doc
        .descendants()
        .find(|n| n.has_tag_name("node") && n.attribute("resource-id") == Some(sink))?;
    let escaped = escape_attr(text);
    let mut out = String::with_capacity(xml.len() + escaped.len());
    match node.attribute_node("text") {
        Some(attr) => {
            let r = attr.range_value();
            out.push_str(&xml[..r.start]);
            out.push_str(&escaped);
            out.push_str(&xml[r.end..]);
        }
        None => {
            let at = node.range().start + 1 + node.tag_name().name().len();
            out.push_str(&xml[..at]);
            out.push_str(&format!(" text=\"{escaped}\""));
            out.push_str(&xml[at..]);
        }
    }
    Some(out)
}

fn fill(img: &mut RgbaImage, x0: i32, y0: i32, x1: i32, y1: i32, color: Rgba<u8>) {
    let (w, h) = (img.width() as i32, img.height() as i32);
    for y in y0.max(0)..y1.min(h) {
        for x in x0.max(0)..x1.min(w) {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

fn fit_text(text: &str, max_width: u32, height: u32) -> String {
    let mut s: String = text.chars().filter(|c| !c.is_control()).collect();
    while !s.is_empty() && font::text_width(&s, height) > max_width {
        s.pop();
    }
    s
}

/// Draws the current page: a title bar with the page title, then one box per
/// interactive element with its text. Fixture pages return their image.
pub fn render_page(spec: &SimAppSpec, state: &SimState) -> RgbaImage {
    let page = spec.page(&state.current_page);
    let (w, h) = spec.screen_size;
    let background = match &page.screenshot {
        ScreenshotSource::Fixture(img) => return (**img).clone(),
        ScreenshotSource::Procedural { background } => *background,
    };
    let mut img = RgbaImage::from_pixel(w, h, Rgba([background[0], background[1], background[2], 255]));

    let bar = TITLE_BAR.min(h);
    fill(&mut img, 0, 0, w as i32, bar as i32, Rgba([40, 60, 90, 255]));
    let title_h = 14;
    let title = fit_text(&page.title, w.saturating_sub(16), title_h);
    font::draw_text(&mut img, 8, ((bar - title_h.min(bar)) / 2) as i64, title_h, &title, Rgba([255, 255, 255, 255]));

    let border = Rgba([90, 90, 90, 255]);
    for el in &page_registry(spec, state).elements {
        let b = el.bounds;
        let face = if el.editable { Rgba([255, 255, 255, 255]) } else { Rgba([225, 228, 232, 255]) };
        fill(&mut img, b.left, b.top, b.right, b.bottom, border);
        fill(&mut img, b.left + 2, b.top + 2, b.right - 2, b.bottom - 2, face);
        let text_h = 12u32.min((b.height().max(0) as u32).saturating_sub(6));
        if text_h >= 5 {
            let text = fit_text(&el.text_content, (b.width().max(0) as u32).saturating_sub(8), text_h);
            let y = b.top as i64 + (b.height() as i64 - text_h as i64) / 2;
            font::draw_text(&mut img, b.left as i64 + 4, y, text_h, &text, Rgba([20, 20, 20, 255]));
        }
    }
    img
}
