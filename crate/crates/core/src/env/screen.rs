use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::action::Point;

pub const SCREEN_WIDTH: i32 = 1080;
pub const SCREEN_HEIGHT: i32 = 2400;
pub const GRID_COLS: i32 = 12;
pub const GRID_ROWS: i32 = 24;
pub const CELL_WIDTH: i32 = SCREEN_WIDTH / GRID_COLS;
pub const CELL_HEIGHT: i32 = SCREEN_HEIGHT / GRID_ROWS;
/// Number of coordinate cells the executor chooses from.
pub const NUM_CELLS: usize = (GRID_COLS * GRID_ROWS) as usize;

/// Index of the grid cell containing `p`.
pub fn cell_of(p: Point) -> usize {
    let col = (p.x / CELL_WIDTH).clamp(0, GRID_COLS - 1);
    let row = (p.y / CELL_HEIGHT).clamp(0, GRID_ROWS - 1);
    (row * GRID_COLS + col) as usize
}

/// Centre pixel of grid cell `cell`.
pub fn cell_center(cell: usize) -> Point {
    let cell = cell as i32;
    let col = cell % GRID_COLS;
    let row = cell / GRID_COLS;
    Point::new(col * CELL_WIDTH + CELL_WIDTH / 2, row * CELL_HEIGHT + CELL_HEIGHT / 2)
}

/// Axis-aligned bounding box, serialized as `[x, y, w, h]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 4]", into = "[i32; 4]")]
pub struct BBox {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl BBox {
    pub const fn new(x: i32, y: i32, w: i32, h: i32) -> Self {
        BBox { x, y, w, h }
    }

    /// Box covering `cols x rows` grid cells starting at `(col, row)`.
    pub const fn cells(col: i32, row: i32, cols: i32, rows: i32) -> Self {
        BBox::new(col * CELL_WIDTH, row * CELL_HEIGHT, cols * CELL_WIDTH, rows * CELL_HEIGHT)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x < self.x + self.w && p.y >= self.y && p.y < self.y + self.h
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }

    /// Tap point used by the scripted expert: centre of the cell holding the box centre.
    pub fn anchor(&self) -> Point {
        cell_center(cell_of(Point::new(self.x + self.w / 2, self.y + self.h / 2)))
    }
}

impl From<[i32; 4]> for BBox {
    fn from(v: [i32; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [i32; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Button,
    Icon,
    TextField,
    ListItem,
    AppIcon,
    Toggle,
}

impl ElementKind {
    pub const ALL: [ElementKind; 6] = [
        ElementKind::Button,
        ElementKind::Icon,
        ElementKind::TextField,
        ElementKind::ListItem,
        ElementKind::AppIcon,
        ElementKind::Toggle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn noun(self) -> &'static str {
        match self {
            ElementKind::Button => "button",
            ElementKind::Icon => "icon",
            ElementKind::TextField => "input field",
            ElementKind::ListItem => "list item",
            ElementKind::AppIcon => "app icon",
            ElementKind::Toggle => "switch",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UiElement {
    pub element_id: String,
    pub kind: ElementKind,
    pub label: String,
    pub bbox: BBox,
    #[serde(default)]
    pub state: BTreeMap<String, String>,
}

impl UiElement {
    pub fn text(&self) -> Option<&str> {
        self.state.get("text").map(String::as_str)
    }
}

/// Structured observation of the device screen.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Screen {
    pub screen_id: String,
    pub elements: Vec<UiElement>,
    pub width: i32,
    pub height: i32,
}

impl Screen {
    pub fn element(&self, id: &str) -> Option<&UiElement> {
        self.elements.iter().find(|e| e.element_id == id)
    }

    pub fn element_at(&self, p: Point) -> Option<&UiElement> {
        self.elements.iter().find(|e| e.bbox.contains(p))
    }

    pub fn element_by_label(&self, label: &str) -> Option<&UiElement> {
        self.elements.iter().find(|e| e.label == label)
    }

    /// Checks the structural invariants of an observation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut ids = std::collections::BTreeSet::new();
        for (i, e) in self.elements.iter().enumerate() {
            if !ids.insert(e.element_id.as_str()) {
                return Err(format!("duplicate element id {}", e.element_id));
            }
            let b = e.bbox;
            if b.w <= 0 || b.h <= 0 {
                return Err(format!("{} has empty bbox", e.element_id));
            }
            if b.x < 0 || b.y < 0 || b.x + b.w > self.width || b.y + b.h > self.height {
                return Err(format!("{} leaves the screen", e.element_id));
            }
            if e.kind == ElementKind::TextField && !e.state.contains_key("text") {
                return Err(format!("text field {} lacks text state", e.element_id));
            }
            for other in &self.elements[i + 1..] {
                if b.intersects(&other.bbox) {
                    return Err(format!("{} overlaps {}", e.element_id, other.element_id));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_round_trip() {
        for cell in 0..NUM_CELLS {
            assert_eq!(cell_of(cell_center(cell)), cell);
        }
        assert_eq!(cell_center(0), Point::new(45, 50));
    }

    #[test]
    fn anchor_lies_in_box() {
        let b = BBox::cells(4, 19, 3, 2);
        assert!(b.contains(b.anchor()));
        assert_eq!(b.anchor(), Point::new(5 * 90 + 45, 20 * 100 + 50));
    }
}
