//! Spatial relations between annotated objects and the instruction text built from them.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::depth::DepthMap;
use crate::error::Result;
use crate::fusion::anchor_depth;

pub const DEFAULT_TAU_D: f64 = 0.15;
pub const DEFAULT_TAU_XY: f64 = 0.05;

pub type InstanceId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    LeftOf,
    RightOf,
    Above,
    Below,
    InFrontOf,
    Behind,
    Near,
}

impl Predicate {
    pub const ALL: [Predicate; 7] = [
        Predicate::LeftOf,
        Predicate::RightOf,
        Predicate::Above,
        Predicate::Below,
        Predicate::InFrontOf,
        Predicate::Behind,
        Predicate::Near,
    ];

    /// The predicate seen from the anchor's side.
    pub fn inverse(self) -> Predicate {
        match self {
            Predicate::LeftOf => Predicate::RightOf,
            Predicate::RightOf => Predicate::LeftOf,
            Predicate::Above => Predicate::Below,
            Predicate::Below => Predicate::Above,
            Predicate::InFrontOf => Predicate::Behind,
            Predicate::Behind => Predicate::InFrontOf,
            Predicate::Near => Predicate::Near,
        }
    }

    /// Phrase used when rendering instructions.
    pub fn phrase(self) -> &'static str {
        match self {
            Predicate::LeftOf => "to the left of",
            Predicate::RightOf => "to the right of",
            Predicate::Above => "above",
            Predicate::Below => "below",
            Predicate::InFrontOf => "in front of",
            Predicate::Behind => "behind",
            Predicate::Near => "near",
        }
    }

    fn synonyms(self) -> &'static [&'static str] {
        match self {
            Predicate::LeftOf => &["to the left of", "left of"],
            Predicate::RightOf => &["to the right of", "right of"],
            Predicate::Above => &["above", "over"],
            Predicate::Below => &["below", "underneath", "under"],
            Predicate::InFrontOf => &["in front of"],
            Predicate::Behind => &["behind"],
            Predicate::Near => &["near", "next to"],
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub subject: InstanceId,
    pub predicate: Predicate,
    pub anchor: InstanceId,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau_d: f64,
    pub tau_xy: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { tau_d: DEFAULT_TAU_D, tau_xy: DEFAULT_TAU_XY }
    }
}

/// Named object with a box, as used for relation derivation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: InstanceId,
    pub name: String,
    pub bbox: BBox,
}

/// A box with a resolved scalar depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Placed {
    pub bbox: BBox,
    pub depth: f64,
}

struct Deltas {
    dd: f64,
    dx: f64,
    dy: f64,
}

fn deltas(target: &Placed, anchor: &Placed) -> Deltas {
    let (tx, ty) = target.bbox.center();
    let (ax, ay) = anchor.bbox.center();
    Deltas { dd: target.depth - anchor.depth, dx: tx - ax, dy: ty - ay }
}

/// Relation of `target` with respect to `anchor`.
///
/// Depth differences win over vertical offsets, which win over horizontal ones.
pub fn classify(target: &Placed, anchor: &Placed, th: &Thresholds) -> Predicate {
    let Deltas { dd, dx, dy } = deltas(target, anchor);
    if dd.abs() >= th.tau_d {
        if dd > 0.0 {
            Predicate::InFrontOf
        } else {
            Predicate::Behind
        }
    } else if dy.abs() >= dx.abs() && dy.abs() >= th.tau_xy {
        if dy < 0.0 {
            Predicate::Above
        } else {
            Predicate::Below
        }
    } else if dx.abs() >= th.tau_xy {
        if dx < 0.0 {
            Predicate::LeftOf
        } else {
            Predicate::RightOf
        }
    } else {
        Predicate::Near
    }
}

/// Distance of the pair from the nearest decision boundary of [`classify`].
///
/// Pairs with a small margin flip predicate under tiny perturbations.
pub fn decision_margin(target: &Placed, anchor: &Placed, th: &Thresholds) -> f64 {
    let Deltas { dd, dx, dy } = deltas(target, anchor);
    let (dd, ax, ay) = (dd.abs(), dx.abs(), dy.abs());
    if dd >= th.tau_d {
        return dd - th.tau_d;
    }
    let depth_margin = th.tau_d - dd;
    let vertical = ay >= ax && ay >= th.tau_xy;
    if vertical {
        return depth_margin.min(ay - ax).min(ay - th.tau_xy);
    }
    let not_vertical = (ax - ay).max(th.tau_xy - ay);
    if ax >= th.tau_xy {
        depth_margin.min(not_vertical).min(ax - th.tau_xy)
    } else {
        depth_margin.min(not_vertical).min(th.tau_xy - ax)
    }
}

/// One relation per anchor, with depths read at each box center.
pub fn derive_relations(
    target: &Instance,
    anchors: &[Instance],
    depth: &DepthMap,
    th: &Thresholds,
) -> Result<Vec<Relation>> {
    let t = Placed { bbox: target.bbox, depth: anchor_depth(depth, &target.bbox)? as f64 };
    anchors
        .iter()
        .map(|a| {
            let p = Placed { bbox: a.bbox, depth: anchor_depth(depth, &a.bbox)? as f64 };
            Ok(Relation { subject: target.id, predicate: classify(&t, &p, th), anchor: a.id })
        })
        .collect()
}

const VERBS: [&str; 3] = ["Place", "Put", "Position"];

/// Fills a seeded instruction template.
///
/// `anchor_names` maps anchor ids to category names; relations whose anchor
/// has no name are rendered with the id instead.
pub fn render_instruction(
    target_name: &str,
    relations: &[Relation],
    anchor_names: &HashMap<InstanceId, String>,
    seed: u64,
) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let verb = VERBS[rng.random_range(0..VERBS.len())];
    let clauses: Vec<String> = relations
        .iter()
        .map(|r| {
            let name = anchor_names.get(&r.anchor).cloned().unwrap_or_else(|| r.anchor.to_string());
            format!("{} the {}", r.predicate.phrase(), name)
        })
        .collect();
    format!("{verb} the {target_name} {}.", clauses.join(", and "))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedInstruction {
    pub target: String,
    pub clauses: Vec<(Predicate, String)>,
}

fn match_phrase(text: &str) -> Option<(Predicate, usize)> {
    let mut best: Option<(Predicate, usize)> = None;
    for p in Predicate::ALL {
        for syn in p.synonyms() {
            if text.starts_with(syn)
                && text[syn.len()..].starts_with(" the ")
                && best.is_none_or(|(_, l)| syn.len() > l)
            {
                best = Some((p, syn.len()));
            }
        }
    }
    best
}

/// Parses text produced by [`render_instruction`] (and light variations of it).
pub fn parse_instruction(text: &str) -> Option<ParsedInstruction> {
    let body = text.trim().trim_end_matches('.').trim().to_lowercase();
    let rest = VERBS.iter().find_map(|v| body.strip_prefix(&format!("{} the ", v.to_lowercase())))?;

    // target runs up to the first relation phrase
    let mut split = None;
    for (i, _) in rest.match_indices(' ') {
        if match_phrase(&rest[i + 1..]).is_some() {
            split = Some(i);
            break;
        }
    }
    let split = split?;
    let target = rest[..split].trim().to_string();
    let mut remaining = &rest[split + 1..];
    let mut clauses = Vec::new();
    loop {
        let (pred, len) = match_phrase(remaining)?;
        remaining = &remaining[len + " the ".len()..];
        // anchor name ends at the next clause separator that introduces a phrase
        let mut end = remaining.len();
        let mut next = None;
        for sep in [", and ", ", ", " and "] {
            for (i, _) in remaining.match_indices(sep) {
                if i < end && match_phrase(&remaining[i + sep.len()..]).is_some() {
                    end = i;
                    next = Some(i + sep.len());
                }
            }
        }
        let name = remaining[..end].trim();
        if name.is_empty() {
            return None;
        }
        clauses.push((pred, name.to_string()));
        match next {
            Some(n) => remaining = &remaining[n..],
            None => break,
        }
    }
    if target.is_empty() || clauses.is_empty() {
        return None;
    }
    Some(ParsedInstruction { target, clauses })
}
