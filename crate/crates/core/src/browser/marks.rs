//! Set-of-Marks annotation: numbered labels over interactive elements so a
//! model can reference them by small integers.
//!
//! Annotation is a pure function of the observation. Text renderings get a
//! `[n]` token injected before each element line; image screenshots get a
//! numbered box drawn at each element's bounding box, with label plates
//! shifted so overlapping elements keep distinguishable labels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use image::{Rgba, RgbaImage};

use super::{BBox, ElementDescriptor, PageObservation, ScreenshotArtifact};

/// An observation plus its dense mark assignment and marked screenshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedObservation {
    pub observation: PageObservation,
    /// mark_id (1..=n, document order) to element.
    pub marks: BTreeMap<u32, ElementDescriptor>,
    /// Screenshot with marks applied (tokens injected or boxes drawn).
    pub marked_screenshot: ScreenshotArtifact,
    /// Where each label plate landed, image annotations only.
    pub label_placements: Vec<(u32, BBox)>,
}

impl MarkedObservation {
    pub fn element(&self, mark_id: u32) -> Option<&ElementDescriptor> {
        self.marks.get(&mark_id)
    }

    pub fn mark_count(&self) -> usize {
        self.marks.len()
    }
}

/// Assign dense mark ids 1..n in document order and produce the marked
/// screenshot. Same observation in, same marks out.
pub fn annotate_marks(observation: &PageObservation) -> MarkedObservation {
    let mut marks = BTreeMap::new();
    let mut relabeled = Vec::with_capacity(observation.elements.len());
    for (i, element) in observation.elements.iter().enumerate() {
        let mut element = element.clone();
        element.mark_id = i as u32 + 1;
        marks.insert(element.mark_id, element.clone());
        relabeled.push(element);
    }

    let (marked_screenshot, label_placements) = match &observation.screenshot {
        ScreenshotArtifact::TextRender(text) => (
            ScreenshotArtifact::TextRender(inject_text_marks(text, &relabeled)),
            Vec::new(),
        ),
        ScreenshotArtifact::Image(bytes) => {
            let (bytes, placements) = overlay_image_marks(bytes, &relabeled);
            (ScreenshotArtifact::Image(bytes), placements)
        }
    };

    MarkedObservation {
        observation: observation.clone(),
        marks,
        marked_screenshot,
        label_placements,
    }
}

/// Rebuild the element section of a text rendering with `[n]` tokens. The
/// prose before the `ELEMENTS:` separator is preserved verbatim; with no
/// separator (foreign renderings) the marked list is appended.
fn inject_text_marks(text: &str, elements: &[ElementDescriptor]) -> String {
    let mut out = String::new();
    let mut found_separator = false;
    for line in text.lines() {
        out.push_str(line);
        out.push('\n');
        if line.trim() == "ELEMENTS:" {
            found_separator = true;
            break;
        }
    }
    if !found_separator {
        if !out.is_empty() && !out.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("ELEMENTS:\n");
    }
    for element in elements {
        let _ = writeln!(out, "[{}] {}", element.mark_id, element.pseudo_html());
    }
    out
}

const LABEL_COLOR: Rgba<u8> = Rgba([220, 30, 30, 255]);
const LABEL_TEXT_COLOR: Rgba<u8> = Rgba([255, 255, 255, 255]);
const GLYPH_W: u32 = 3;
const GLYPH_H: u32 = 5;
const GLYPH_SCALE: u32 = 2;
const LABEL_PAD: u32 = 2;

/// 3x5 bitmap font for the digits 0-9, row-major, one bit per pixel.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111], // 0
    [0b010, 0b110, 0b010, 0b010, 0b111], // 1
    [0b111, 0b001, 0b111, 0b100, 0b111], // 2
    [0b111, 0b001, 0b111, 0b001, 0b111], // 3
    [0b101, 0b101, 0b111, 0b001, 0b001], // 4
    [0b111, 0b100, 0b111, 0b001, 0b111], // 5
    [0b111, 0b100, 0b111, 0b101, 0b111], // 6
    [0b111, 0b001, 0b010, 0b010, 0b010], // 7
    [0b111, 0b101, 0b111, 0b101, 0b111], // 8
    [0b111, 0b101, 0b111, 0b001, 0b111], // 9
];

fn label_size(mark_id: u32) -> (u32, u32) {
    let digits = mark_id.to_string().len() as u32;
    let width = digits * (GLYPH_W * GLYPH_SCALE + GLYPH_SCALE) + 2 * LABEL_PAD;
    let height = GLYPH_H * GLYPH_SCALE + 2 * LABEL_PAD;
    (width, height)
}

fn rects_overlap(a: &BBox, b: &BBox) -> bool {
    a.x < b.x + b.width && b.x < a.x + a.width && a.y < b.y + b.height && b.y < a.y + a.height
}

fn draw_rect_outline(img: &mut RgbaImage, bbox: &BBox, color: Rgba<u8>) {
    let (w, h) = img.dimensions();
    let x1 = bbox.x.min(w.saturating_sub(1));
    let y1 = bbox.y.min(h.saturating_sub(1));
    let x2 = (bbox.x + bbox.width).min(w).saturating_sub(1);
    let y2 = (bbox.y + bbox.height).min(h).saturating_sub(1);
    for x in x1..=x2 {
        img.put_pixel(x, y1, color);
        img.put_pixel(x, y2, color);
    }
    for y in y1..=y2 {
        img.put_pixel(x1, y, color);
        img.put_pixel(x2, y, color);
    }
}

fn draw_label(img: &mut RgbaImage, plate: &BBox, mark_id: u32) {
    let (w, h) = img.dimensions();
    for y in plate.y..(plate.y + plate.height).min(h) {
        for x in plate.x..(plate.x + plate.width).min(w) {
            img.put_pixel(x, y, LABEL_COLOR);
        }
    }
    let mut pen_x = plate.x + LABEL_PAD;
    let pen_y = plate.y + LABEL_PAD;
    for ch in mark_id.to_string().chars() {
        let glyph = &DIGITS[ch.to_digit(10).unwrap_or(0) as usize];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - col)) != 0 {
                    for dy in 0..GLYPH_SCALE {
                        for dx in 0..GLYPH_SCALE {
                            let px = pen_x + col * GLYPH_SCALE + dx;
                            let py = pen_y + row as u32 * GLYPH_SCALE + dy;
                            if px < w && py < h {
                                img.put_pixel(px, py, LABEL_TEXT_COLOR);
                            }
                        }
                    }
                }
            }
        }
        pen_x += GLYPH_W * GLYPH_SCALE + GLYPH_SCALE;
    }
}

/// Find a plate position near the element's top-left corner that does not
/// intersect any already-placed plate, probing downward then rightward.
fn place_label(bbox: &BBox, size: (u32, u32), taken: &[(u32, BBox)]) -> BBox {
    let (width, height) = size;
    for step in 0..16u32 {
        for (dx, dy) in [(0, step), (step, 0), (step, step)] {
            let candidate = BBox {
                x: bbox.x + dx * (width / 2 + 2),
                y: bbox.y + dy * (height + 2),
                width,
                height,
            };
            if !taken.iter().any(|(_, t)| rects_overlap(&candidate, t)) {
                return candidate;
            }
        }
    }
    BBox {
        x: bbox.x,
        y: bbox.y,
        width,
        height,
    }
}

fn overlay_image_marks(png: &[u8], elements: &[ElementDescriptor]) -> (Vec<u8>, Vec<(u32, BBox)>) {
    let Ok(decoded) = image::load_from_memory(png) else {
        return (png.to_vec(), Vec::new());
    };
    let mut img = decoded.to_rgba8();
    let mut placements: Vec<(u32, BBox)> = Vec::new();
    for element in elements {
        draw_rect_outline(&mut img, &element.bbox, LABEL_COLOR);
        let plate = place_label(&element.bbox, label_size(element.mark_id), &placements);
        draw_label(&mut img, &plate, element.mark_id);
        placements.push((element.mark_id, plate));
    }
    let mut out = Vec::new();
    let _ = image::DynamicImage::ImageRgba8(img)
        .write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png);
    (out, placements)
}
