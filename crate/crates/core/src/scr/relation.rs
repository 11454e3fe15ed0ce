use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::geometry::{contact, intersection_centroid, measure, BBox, Contact, Region};

use super::rules::{Predicate, RelationRule, Topology};

/// Relative tolerance for the containment tests behind within, contains and
/// equal. Box intersections pick up rounding from the edge arithmetic.
pub const CONTAINMENT_TOLERANCE: f64 = 1e-6;

fn covers(intersection: f64, area: f64) -> bool {
    (area - intersection).abs() <= CONTAINMENT_TOLERANCE * area
}

/// Evaluates the topological part of a rule for subject `s` and object `o`.
///
/// Overlap is subject-directional: the object must cover at least
/// `threshold` of the subject without swallowing it. Within accepts
/// containment either way round.
pub fn eval_topology(t: Topology, s: &Region<'_>, o: &Region<'_>, threshold: Option<f64>) -> Result<bool> {
    let m = measure(s, o)?;
    let s_in_o = m.area_a > 0.0 && covers(m.intersection, m.area_a);
    let o_in_s = m.area_b > 0.0 && covers(m.intersection, m.area_b);
    Ok(match t {
        Topology::Overlap => {
            let Some(threshold) = threshold else {
                return Err(Error::MissingThreshold {
                    rule: "overlap relation".into(),
                });
            };
            if m.area_a == 0.0 {
                false
            } else {
                let ios = (m.intersection / m.area_a).clamp(0.0, 1.0);
                ios >= threshold && ios > 0.0 && !s_in_o
            }
        }
        Topology::Within => m.intersection > 0.0 && (s_in_o || o_in_s),
        Topology::Contains => m.intersection > 0.0 && o_in_s,
        Topology::Equal => m.intersection > 0.0 && s_in_o && o_in_s,
        Topology::Touch => contact(s, o)? == Contact::Touching,
        Topology::Disjoint => contact(s, o)? == Contact::Apart,
    })
}

/// Directional predicate. The object's reference point is the centroid of
/// the intersection when there is one, otherwise the object's own centroid;
/// it is compared strictly against the subject's center.
pub fn eval_pred(p: Predicate, s: &Region<'_>, o: &Region<'_>) -> Result<bool> {
    let Some((cx, cy)) = s.centroid() else {
        return Ok(false);
    };
    let reference = match intersection_centroid(s, o)? {
        Some(c) => Some(c),
        None => o.centroid(),
    };
    let Some((rx, ry)) = reference else {
        return Ok(false);
    };
    Ok(match p {
        Predicate::Under => ry > cy,
        Predicate::Above => ry < cy,
        Predicate::LeftOf => rx < cx,
        Predicate::RightOf => rx > cx,
    })
}

/// Search zone for `candidate` around `subject`, clipped to the image.
///
/// Without search expressions the zone is the whole image. For `under` the
/// zone has width W centered on the subject, its bottom one candidate height
/// below the subject's bottom edge and its top H above that; the other
/// predicates mirror this. A rule without a predicate centers the W×H zone on
/// the subject. Returns `None` when the zone lies entirely outside the image.
pub fn search_area(rule: &RelationRule, subject: &BBox, candidate: &BBox, image: &ImageRecord) -> Result<Option<BBox>> {
    let (iw, ih) = (image.width as f64, image.height as f64);
    let (Some(he), Some(we)) = (rule.search_height, rule.search_width) else {
        if rule.search_height.is_some() || rule.search_width.is_some() {
            return Err(Error::config(
                format!("{rule}.Search_height"),
                "Search_height and Search_width must be given together",
            ));
        }
        return Ok(Some(BBox::new(0.0, 0.0, iw, ih)));
    };
    let h = he.eval(subject, candidate);
    let w = we.eval(subject, candidate);
    for (name, v) in [("Search_height", h), ("Search_width", w)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Expression(format!("{rule} {name} evaluates to {v}")));
        }
    }
    let (cx, cy) = subject.center();
    let zone = match rule.pred {
        Some(Predicate::Under) => {
            let bottom = subject.bottom() + candidate.h;
            BBox::new(cx - w / 2.0, bottom - h, w, h)
        }
        Some(Predicate::Above) => {
            let top = subject.y - candidate.h;
            BBox::new(cx - w / 2.0, top, w, h)
        }
        Some(Predicate::LeftOf) => {
            let left = subject.x - candidate.w;
            BBox::new(left, cy - h / 2.0, w, h)
        }
        Some(Predicate::RightOf) => {
            let right = subject.right() + candidate.w;
            BBox::new(right - w, cy - h / 2.0, w, h)
        }
        None => BBox::new(cx - w / 2.0, cy - h / 2.0, w, h),
    };
    Ok(zone.clip(iw, ih))
}
