//! SVG figures: a single skeleton pose with optional motion circles, and a
//! confusion-matrix heatmap.
//!
//! Poses are projected orthographically onto the x/y plane (depth dropped,
//! y flipped for screen space) and scaled to fit the canvas.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::topology::SkeletalGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub joint_radius: f64,
    pub bone_width: f64,
    pub bone_color: String,
    pub joint_color: String,
    pub motion_color: String,
    pub motion_opacity: f64,
    /// Motion circle radius is `motion_base_radius + motion_radius_scale · magnitude`.
    pub motion_base_radius: f64,
    pub motion_radius_scale: f64,
    /// Heatmap fill at 0% and 100%.
    pub ramp_low: [u8; 3],
    pub ramp_high: [u8; 3],
    pub cell_size: f64,
    pub label_width: f64,
    pub font_size: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            width: 400.0,
            height: 500.0,
            margin: 30.0,
            joint_radius: 4.0,
            bone_width: 3.0,
            bone_color: "#333333".into(),
            joint_color: "#1f4e9c".into(),
            motion_color: "green".into(),
            motion_opacity: 0.45,
            motion_base_radius: 2.0,
            motion_radius_scale: 400.0,
            ramp_low: [232, 240, 250],
            ramp_high: [8, 48, 107],
            cell_size: 14.0,
            label_width: 240.0,
            font_size: 10.0,
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("width", self.width),
            ("height", self.height),
            ("joint_radius", self.joint_radius),
            ("bone_width", self.bone_width),
            ("motion_base_radius", self.motion_base_radius),
            ("motion_radius_scale", self.motion_radius_scale),
            ("cell_size", self.cell_size),
            ("font_size", self.font_size),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Render(format!("style.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("margin", self.margin), ("label_width", self.label_width)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Render(format!("style.{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.motion_opacity) {
            return Err(Error::Render("style.motion_opacity must be in [0, 1]".into()));
        }
        if 2.0 * self.margin >= self.width.min(self.height) {
            return Err(Error::Render("margins leave no drawing area".into()));
        }
        Ok(())
    }

    pub fn motion_radius(&self, magnitude: f64) -> f64 {
        self.motion_base_radius + self.motion_radius_scale * magnitude
    }

    /// Heatmap fill for a percentage, linear between the ramp anchors.
    pub fn ramp(&self, percent: f64) -> [u8; 3] {
        let t = (percent / 100.0).clamp(0.0, 1.0);
        let mut out = [0u8; 3];
        for (o, (&lo, &hi)) in out.iter_mut().zip(self.ramp_low.iter().zip(&self.ramp_high)) {
            *o = (lo as f64 + (hi as f64 - lo as f64) * t).round() as u8;
        }
        out
    }
}

pub fn escape_xml(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Relative luminance in [0, 1].
pub fn luminance([r, g, b]: [u8; 3]) -> f64 {
    (0.2126 * r as f64 + 0.7152 * g as f64 + 0.0722 * b as f64) / 255.0
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
}

/// Draws one pose. `joints` holds `x, y, z` per joint; `motion`, when given,
/// holds a non-negative magnitude per joint and adds a circle for each
/// positive entry.
pub fn render_skeleton_svg(
    joints: &[[f64; 3]],
    motion: Option<&[f64]>,
    graph: &SkeletalGraph,
    style: &RenderStyle,
) -> Result<String> {
    style.validate()?;
    if joints.len() != graph.joint_count {
        return Err(Error::TopologyMismatch {
            expected: graph.joint_count,
            found: joints.len(),
        });
    }
    if let Some(i) = joints.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::Render(format!("joint {i} has a non-finite coordinate")));
    }
    if let Some(m) = motion {
        if m.len() != joints.len() {
            return Err(Error::Render(format!("{} motion magnitudes for {} joints", m.len(), joints.len())));
        }
        if let Some(i) = m.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Render(format!("joint {i} has invalid motion magnitude {}", m[i])));
        }
    }

    let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in joints {
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    let avail_w = style.width - 2.0 * style.margin;
    let avail_h = style.height - 2.0 * style.margin;
    let fit = |avail: f64, extent: f64| if extent > 0.0 { avail / extent } else { f64::INFINITY };
    let scale = fit(avail_w, max_x - min_x).min(fit(avail_h, max_y - min_y));
    let scale = if scale.is_finite() { scale } else { 1.0 };
    let off_x = style.margin + (avail_w - (max_x - min_x) * scale) / 2.0;
    let off_y = style.margin + (avail_h - (max_y - min_y) * scale) / 2.0;
    let screen: Vec<(f64, f64)> = joints
        .iter()
        .map(|p| (off_x + (p[0] - min_x) * scale, off_y + (max_y - p[1]) * scale))
        .collect();

    let mut out = String::new();
    header(&mut out, style.width, style.height);
    let _ = writeln!(
        out,
        r#"<g stroke="{}" stroke-width="{}" stroke-linecap="round">"#,
        escape_xml(&style.bone_color),
        style.bone_width
    );
    for &(a, b) in &graph.edges {
        let _ = writeln!(
            out,
            r#"<line class="bone" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#,
            screen[a].0, screen[a].1, screen[b].0, screen[b].1
        );
    }
    out.push_str("</g>\n");
    if let Some(m) = motion {
        let _ = writeln!(
            out,
            r#"<g fill="{}" fill-opacity="{}">"#,
            escape_xml(&style.motion_color),
            style.motion_opacity
        );
        for (i, &mag) in m.iter().enumerate().filter(|(_, &v)| v > 0.0) {
            let _ = writeln!(
                out,
                r#"<circle class="motion" data-joint="{i}" cx="{:.3}" cy="{:.3}" r="{}"/>"#,
                screen[i].0,
                screen[i].1,
                style.motion_radius(mag)
            );
        }
        out.push_str("</g>\n");
    }
    let _ = writeln!(out, r#"<g fill="{}">"#, escape_xml(&style.joint_color));
    for (i, (x, y)) in screen.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<circle class="joint" data-joint="{i}" cx="{x:.3}" cy="{y:.3}" r="{}"/>"#,
            style.joint_radius
        );
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

/// Draws a square percent matrix as a grid. Only positive cells are
/// painted; fill darkens with the value.
pub fn render_confusion_svg(matrix: &[Vec<f64>], labels: &[String], style: &RenderStyle) -> Result<String> {
    style.validate()?;
    let n = matrix.len();
    if let Some(r) = matrix.iter().position(|row| row.len() != n) {
        return Err(Error::Render(format!("row {r} has {} entries, expected {n}", matrix[r].len())));
    }
    if labels.len() != n {
        return Err(Error::Render(format!("{} labels for {n} classes", labels.len())));
    }
    let cell = style.cell_size;
    let left = style.label_width;
    let top = style.font_size * 2.0;
    let width = left + cell * n as f64 + style.margin;
    let height = top + cell * n as f64 + style.margin;

    let mut out = String::new();
    header(&mut out, width, height);
    let _ = writeln!(
        out,
        r#"<g font-family="sans-serif" font-size="{}" text-anchor="end">"#,
        style.font_size
    );
    for (i, label) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text class="label" x="{:.3}" y="{:.3}" dominant-baseline="middle">{}</text>"#,
            left - 4.0,
            top + cell * (i as f64 + 0.5),
            escape_xml(label)
        );
    }
    out.push_str("</g>\n");
    let _ = writeln!(
        out,
        r##"<rect class="frame" x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#999999"/>"##,
        cell * n as f64,
        cell * n as f64
    );
    for (i, row) in matrix.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v.is_nan() || v <= 0.0 {
                continue;
            }
            let fill = style.ramp(v);
            let _ = writeln!(
                out,
                r#"<rect class="cell" data-row="{i}" data-col="{j}" data-value="{v}" x="{:.3}" y="{:.3}" width="{cell}" height="{cell}" fill="{}"/>"#,
                left + cell * j as f64,
                top + cell * i as f64,
                hex(fill)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
