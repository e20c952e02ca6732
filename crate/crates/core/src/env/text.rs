//! Observation text rendering and the few parsers scripted agents need.

use super::{BlockId, StateView};

/// Transcript style reading, e.g. `a: 9.65cm`.
pub fn format_reading(block: BlockId, cm: f64) -> String {
    format!("{block}: {cm:.2}cm")
}

/// Inverse of [`format_reading`].
pub fn parse_reading(text: &str) -> Option<(BlockId, f64)> {
    let (name, value) = text.trim().split_once(':')?;
    let block = BlockId::parse(name)?;
    let cm = value.trim().strip_suffix("cm")?.trim().parse().ok()?;
    Some((block, cm))
}

/// One-line description of the visible state.
pub fn render_view(view: &StateView) -> String {
    let towers = super::action::render_towers(&view.towers);
    let holding = match view.holding {
        Some(b) => b.to_string(),
        None => "nothing".to_string(),
    };
    format!("Stacks (bottom to top): {towers}. Holding: {holding}.")
}

/// `a: 7.12cm, b: 5.50cm, ...`
pub fn render_heights(heights: &[(BlockId, f64)]) -> String {
    heights.iter().map(|&(b, h)| format_reading(b, h)).collect::<Vec<_>>().join(", ")
}
