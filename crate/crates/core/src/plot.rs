//! SVG rendering of a scene and a trajectory.

use std::fmt::Write as _;

use crate::densifier::Trajectory;
use crate::geometry::{transform_vertices, Point2, Pose};
use crate::scene::Scene;

const SCALE: f64 = 60.0;
const PAD: f64 = 20.0;

struct Canvas {
    y_hi: f64,
    x_lo: f64,
}

impl Canvas {
    fn pt(&self, p: Point2) -> (f64, f64) {
        (PAD + (p.x - self.x_lo) * SCALE, PAD + (self.y_hi - p.y) * SCALE)
    }

    fn outline(&self, scene: &Scene, q: &Pose) -> String {
        transform_vertices(&scene.object, q)
            .into_iter()
            .map(|p| {
                let (x, y) = self.pt(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Renders obstacles in gray, faint outlines at every dense state and
/// highlighted outlines at waypoint marks.
pub fn render_svg(scene: &Scene, traj: Option<&Trajectory>) -> String {
    let ws = &scene.workspace;
    let c = Canvas { y_hi: ws.y_hi, x_lo: ws.x_lo };
    let (w, h) = (ws.width() * SCALE + 2.0 * PAD, ws.height() * SCALE + 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#);
    let _ = writeln!(s, r#"<title>{}</title>"#, scene.id);
    let _ = writeln!(
        s,
        r#"<rect class="workspace" x="{PAD}" y="{PAD}" width="{:.2}" height="{:.2}" fill="white" stroke="black" stroke-width="2"/>"#,
        ws.width() * SCALE,
        ws.height() * SCALE
    );
    for (i, o) in scene.obstacles.iter().enumerate() {
        let (x, y) = c.pt(Point2::new(o.x_lo, o.y_hi));
        let _ = writeln!(
            s,
            r##"<rect class="obstacle" data-index="{i}" x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#808080"/>"##,
            o.width() * SCALE,
            o.height() * SCALE
        );
    }
    if let Some(t) = traj {
        let path: Vec<String> = t
            .states
            .iter()
            .map(|q| {
                let (x, y) = c.pt(Point2::new(q.x, q.y));
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(s, r##"<polyline class="path" points="{}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##, path.join(" "));
        for q in &t.states {
            let _ = writeln!(
                s,
                r##"<polygon class="state" points="{}" fill="none" stroke="#1f77b4" stroke-opacity="0.25" stroke-width="0.8"/>"##,
                c.outline(scene, q)
            );
        }
        for m in &t.waypoint_marks {
            if let Some(q) = t.states.get(m.dense_index) {
                let _ = writeln!(
                    s,
                    r##"<polygon class="waypoint" points="{}" fill="#ff7f0e" fill-opacity="0.25" stroke="#d62728" stroke-width="1.5"/>"##,
                    c.outline(scene, q)
                );
            }
        }
    }
    for (class, q, color) in [("start", &scene.start, "#2ca02c"), ("goal", &scene.goal, "#9467bd")] {
        let _ = writeln!(
            s,
            r#"<polygon class="{class}" points="{}" fill="{color}" fill-opacity="0.35" stroke="{color}" stroke-width="2"/>"#,
            c.outline(scene, q)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densifier::{densify, LatticeConfig};
    use crate::eval::baseline_waypoints;
    use crate::scene::{generate_scene, GenParams, ObjectShape};
    use crate::verifier::VerifyConfig;

    #[test]
    fn svg_has_obstacles_and_outlines() {
        let s = generate_scene(&GenParams::id(ObjectShape::I, 2, 4)).unwrap();
        let t = densify(&s, &baseline_waypoints(&s, 3), &LatticeConfig::default(), &VerifyConfig::default()).unwrap();
        let svg = render_svg(&s, Some(&t));
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("class=\"obstacle\"").count(), s.obstacles.len());
        assert_eq!(svg.matches("class=\"waypoint\"").count(), t.waypoint_marks.len());
        assert_eq!(svg.matches("class=\"state\"").count(), t.states.len());
        assert!(render_svg(&s, None).contains("class=\"goal\""));
    }
}
