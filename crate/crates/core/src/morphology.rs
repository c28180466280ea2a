//! Binary morphology on [`Mask`]s: Euclidean disk dilation and convex-hull fill.

use crate::error::Result;
use crate::mask::{Mask, MaskKind};

fn to_bits(mask: &Mask) -> Vec<bool> {
    mask.raster().data().iter().map(|&v| v >= 0.5).collect()
}

fn from_bits(width: u32, height: u32, kind: MaskKind, bits: &[bool]) -> Result<Mask> {
    Mask::from_fn(width, height, kind, |x, y| bits[(y * width + x) as usize])
}

/// Sets every pixel whose center lies within Euclidean distance `radius` of a set pixel.
pub fn dilate_disk(mask: &Mask, radius: u32) -> Result<Mask> {
    let (w, h) = mask.dims();
    if radius == 0 {
        return Mask::new(mask.raster().map(|v| if v >= 0.5 { 1.0 } else { 0.0 })?, mask.kind());
    }
    let bits = to_bits(mask);
    let (wu, hu) = (w as usize, h as usize);
    let r = radius as i64;

    // prefix counts per row so a horizontal window query is O(1)
    let mut prefix = vec![0u32; hu * (wu + 1)];
    for y in 0..hu {
        let row = &mut prefix[y * (wu + 1)..(y + 1) * (wu + 1)];
        for x in 0..wu {
            row[x + 1] = row[x] + bits[y * wu + x] as u32;
        }
    }
    let half_widths: Vec<i64> = (-r..=r).map(|dy| ((r * r - dy * dy) as f64).sqrt().floor() as i64).collect();

    let mut out = vec![false; wu * hu];
    for y in 0..hu as i64 {
        for (k, dy) in (-r..=r).enumerate() {
            let sy = y + dy;
            if sy < 0 || sy >= hu as i64 {
                continue;
            }
            let hw = half_widths[k];
            let row = &prefix[sy as usize * (wu + 1)..(sy as usize + 1) * (wu + 1)];
            for x in 0..wu as i64 {
                let idx = y as usize * wu + x as usize;
                if out[idx] {
                    continue;
                }
                let lo = (x - hw).max(0) as usize;
                let hi = (x + hw + 1).min(wu as i64) as usize;
                if row[hi] > row[lo] {
                    out[idx] = true;
                }
            }
        }
    }
    from_bits(w, h, mask.kind(), &out)
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull (monotone chain) of integer points.
pub fn convex_hull(points: &mut Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    points.sort_unstable();
    points.dedup();
    if points.len() < 3 {
        return points.clone();
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(points.len() * 2);
    for &p in points.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in points.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn inside_hull(hull: &[(i64, i64)], p: (i64, i64)) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => {
            cross(hull[0], hull[1], p) == 0
                && p.0 >= hull[0].0.min(hull[1].0)
                && p.0 <= hull[0].0.max(hull[1].0)
                && p.1 >= hull[0].1.min(hull[1].1)
                && p.1 <= hull[0].1.max(hull[1].1)
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
    }
}

/// Fills the convex hull of the set pixel centers. Exact integer arithmetic,
/// so every originally set pixel stays set.
pub fn fill_convex_hull(mask: &Mask) -> Result<Mask> {
    let (w, h) = mask.dims();
    // per-row extremes are enough to determine the hull
    let mut points = Vec::new();
    let mut rows = vec![None::<(u32, u32)>; h as usize];
    for (x, y) in mask.set_pixels() {
        let e = rows[y as usize].get_or_insert((x, x));
        e.0 = e.0.min(x);
        e.1 = e.1.max(x);
    }
    for (y, e) in rows.iter().enumerate() {
        if let Some((lo, hi)) = e {
            points.push((*lo as i64, y as i64));
            points.push((*hi as i64, y as i64));
        }
    }
    let hull = convex_hull(&mut points);
    let (y_lo, y_hi) = match (hull.iter().map(|p| p.1).min(), hull.iter().map(|p| p.1).max()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Mask::empty(w, h, mask.kind()),
    };
    let (x_lo, x_hi) = (hull.iter().map(|p| p.0).min().unwrap(), hull.iter().map(|p| p.0).max().unwrap());
    let mut bits = vec![false; (w * h) as usize];
    for y in y_lo..=y_hi {
        // the hull is convex, so each row is a single run
        let Some(left) = (x_lo..=x_hi).find(|&x| inside_hull(&hull, (x, y))) else { continue };
        let right = (left..=x_hi).rev().find(|&x| inside_hull(&hull, (x, y))).unwrap_or(left);
        for x in left..=right {
            bits[(y as u32 * w + x as u32) as usize] = true;
        }
    }
    from_bits(w, h, mask.kind(), &bits)
}

/// Filled axis-aligned bounding rectangle of the set pixels.
pub fn fill_bounding_rect(mask: &Mask) -> Result<Mask> {
    let (w, h) = mask.dims();
    match mask.bounding_rect() {
        Some(rect) => Mask::from_rect(w, h, rect),
        None => Mask::empty(w, h, MaskKind::Box),
    }
}
