//! Network geometry: AP placement, straight-line user mobility on a wrap-around
//! torus, and minimum-image distances.
//!
//! The network square `[0, side)²` is treated as a torus. The user position is
//! always kept in canonical coordinates and AP distances use the minimum image,
//! which keeps every AP–user distance continuous when the user crosses the
//! boundary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_AP_HEIGHT: f64 = 15.0;
pub const DEFAULT_USER_HEIGHT: f64 = 1.5;
pub const DEFAULT_WRAP_MARGIN: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    area_side: f64,
    ap_positions: Vec<Point2>,
    ap_height: f64,
    user_height: f64,
    wrap_margin: f64,
}

impl NetworkLayout {
    pub fn new(
        area_side: f64,
        ap_positions: Vec<Point2>,
        ap_height: f64,
        user_height: f64,
        wrap_margin: f64,
    ) -> Result<Self> {
        if !(area_side > 0.0 && area_side.is_finite()) {
            return Err(Error::config(format!("area side must be positive, got {area_side}")));
        }
        if ap_positions.is_empty() {
            return Err(Error::config("layout needs at least one AP"));
        }
        for (i, p) in ap_positions.iter().enumerate() {
            if !(0.0..=area_side).contains(&p.x) || !(0.0..=area_side).contains(&p.y) {
                return Err(Error::config(format!("AP {i} at ({}, {}) outside the area", p.x, p.y)));
            }
        }
        if !(ap_height - user_height > 0.0) {
            return Err(Error::config("AP height must exceed user height"));
        }
        if !(wrap_margin >= 0.0 && wrap_margin < area_side / 2.0) {
            return Err(Error::config(format!(
                "wrap margin {wrap_margin} must be in [0, {})",
                area_side / 2.0
            )));
        }
        Ok(NetworkLayout {
            area_side,
            ap_positions,
            ap_height,
            user_height,
            wrap_margin,
        })
    }

    /// Draws `count` AP positions i.i.d. uniform over the square, using the
    /// default heights and wrap margin (margin is clamped below `side / 2`).
    pub fn place_aps<R: Rng + ?Sized>(count: usize, area_side: f64, rng: &mut R) -> Result<Self> {
        if count == 0 {
            return Err(Error::config("AP count must be at least 1"));
        }
        if !(area_side > 0.0 && area_side.is_finite()) {
            return Err(Error::config(format!("area side must be positive, got {area_side}")));
        }
        let positions = (0..count)
            .map(|_| Point2::new(rng.gen::<f64>() * area_side, rng.gen::<f64>() * area_side))
            .collect();
        let margin = DEFAULT_WRAP_MARGIN.min(area_side * 0.25);
        NetworkLayout::new(area_side, positions, DEFAULT_AP_HEIGHT, DEFAULT_USER_HEIGHT, margin)
    }

    pub fn with_heights(mut self, ap_height: f64, user_height: f64) -> Result<Self> {
        if !(ap_height - user_height > 0.0) {
            return Err(Error::config("AP height must exceed user height"));
        }
        self.ap_height = ap_height;
        self.user_height = user_height;
        Ok(self)
    }

    pub fn with_wrap_margin(mut self, wrap_margin: f64) -> Result<Self> {
        if !(wrap_margin >= 0.0 && wrap_margin < self.area_side / 2.0) {
            return Err(Error::config("wrap margin must be below half the area side"));
        }
        self.wrap_margin = wrap_margin;
        Ok(self)
    }

    pub fn area_side(&self) -> f64 {
        self.area_side
    }

    pub fn ap_positions(&self) -> &[Point2] {
        &self.ap_positions
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn height_difference(&self) -> f64 {
        self.ap_height - self.user_height
    }

    pub fn wrap_margin(&self) -> f64 {
        self.wrap_margin
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.area_side / 2.0, self.area_side / 2.0)
    }

    /// Maps any point onto the canonical torus square `[0, side)²`.
    pub fn canonicalize(&self, p: Point2) -> Point2 {
        Point2::new(p.x.rem_euclid(self.area_side), p.y.rem_euclid(self.area_side))
    }

    /// Minimum-image planar distance between two points on the torus.
    pub fn torus_distance(&self, a: Point2, b: Point2) -> f64 {
        let side = self.area_side;
        let wrap = |d: f64| {
            let d = d.rem_euclid(side);
            d.min(side - d)
        };
        wrap(a.x - b.x).hypot(wrap(a.y - b.y))
    }

    /// Minimum-image planar distance from `position` to AP `ap_index`.
    pub fn distance_2d(&self, position: Point2, ap_index: usize) -> Result<f64> {
        let ap = self.ap_positions.get(ap_index).ok_or(Error::IndexOutOfRange {
            index: ap_index,
            len: self.ap_positions.len(),
        })?;
        Ok(self.torus_distance(position, *ap))
    }

    /// Distances from `position` to every AP, in AP order.
    pub fn distances_from(&self, position: Point2) -> Vec<f64> {
        self.ap_positions
            .iter()
            .map(|ap| self.torus_distance(position, *ap))
            .collect()
    }
}

/// Straight-line user motion state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub position: Point2,
    pub heading: Point2,
    pub speed: f64,
    pub step_duration: f64,
    pub cycle_index: u64,
    /// Number of boundary crossings so far.
    pub wraps: u64,
}

impl TrajectoryState {
    pub fn new(position: Point2, heading: Point2, speed: f64, step_duration: f64) -> Result<Self> {
        let n = heading.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::config("heading must be a nonzero vector"));
        }
        if !(speed >= 0.0) {
            return Err(Error::config(format!("speed must be nonnegative, got {speed}")));
        }
        if !(step_duration > 0.0) {
            return Err(Error::config("step duration must be positive"));
        }
        Ok(TrajectoryState {
            position,
            heading: Point2::new(heading.x / n, heading.y / n),
            speed,
            step_duration,
            cycle_index: 0,
            wraps: 0,
        })
    }

    /// Heading drawn uniformly on the unit circle.
    pub fn random_heading<R: Rng + ?Sized>(rng: &mut R) -> Point2 {
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        Point2::new(theta.cos(), theta.sin())
    }

    pub fn step_length(&self) -> f64 {
        self.speed * self.step_duration
    }

    /// Moves one decision cycle along the heading and folds the position back
    /// into the torus square.
    pub fn advance(&self, layout: &NetworkLayout) -> TrajectoryState {
        let step = self.step_length();
        let raw = Point2::new(
            self.position.x + self.heading.x * step,
            self.position.y + self.heading.y * step,
        );
        let canon = layout.canonicalize(raw);
        let wrapped = canon.x != raw.x || canon.y != raw.y;
        TrajectoryState {
            position: canon,
            cycle_index: self.cycle_index + 1,
            wraps: self.wraps + u64::from(wrapped),
            ..*self
        }
    }

    /// Positions for the next `steps` cycles (excluding the current one).
    pub fn predict_positions(&self, layout: &NetworkLayout, steps: usize) -> Vec<Point2> {
        let mut out = Vec::with_capacity(steps);
        let mut cur = *self;
        for _ in 0..steps {
            cur = cur.advance(layout);
            out.push(cur.position);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square(side: f64, aps: Vec<Point2>) -> NetworkLayout {
        NetworkLayout::new(side, aps, 15.0, 1.5, 200.0).unwrap()
    }

    #[test]
    fn place_aps_in_bounds_and_deterministic() {
        let a = NetworkLayout::place_aps(125, 1000.0, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = NetworkLayout::place_aps(125, 1000.0, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.num_aps(), 125);
        assert!(a
            .ap_positions()
            .iter()
            .all(|p| (0.0..=1000.0).contains(&p.x) && (0.0..=1000.0).contains(&p.y)));
        assert_eq!(a, b);

        let one = NetworkLayout::place_aps(1, 1000.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(one.num_aps(), 1);
    }

    #[test]
    fn place_aps_rejects_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            NetworkLayout::place_aps(0, 1000.0, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn advance_moves_by_step() {
        let layout = square(1000.0, vec![Point2::new(0.0, 0.0)]);
        let t = TrajectoryState::new(Point2::new(500.0, 500.0), Point2::new(1.0, 0.0), 10.0, 1.0).unwrap();
        let n = t.advance(&layout);
        assert_eq!(n.position, Point2::new(510.0, 500.0));
        assert_eq!(n.cycle_index, 1);

        let still = TrajectoryState::new(Point2::new(500.0, 500.0), Point2::new(0.0, 1.0), 0.0, 1.0).unwrap();
        let s = still.advance(&layout);
        assert_eq!(s.position, still.position);
        assert_eq!(s.cycle_index, 1);
    }

    #[test]
    fn wrap_keeps_distances_on_torus() {
        let aps = vec![
            Point2::new(10.0, 500.0),
            Point2::new(990.0, 20.0),
            Point2::new(400.0, 700.0),
        ];
        let layout = square(1000.0, aps.clone());
        let t = TrajectoryState::new(Point2::new(995.0, 500.0), Point2::new(1.0, 0.0), 10.0, 1.0).unwrap();
        let n = t.advance(&layout);
        assert!((n.position.x - 5.0).abs() < 1e-9);
        assert_eq!(n.wraps, 1);
        // brute force over the nine translated copies of each AP
        for (b, ap) in aps.iter().enumerate() {
            let mut best = f64::INFINITY;
            for dx in [-1000.0, 0.0, 1000.0] {
                for dy in [-1000.0, 0.0, 1000.0] {
                    let d = (n.position.x - ap.x - dx).hypot(n.position.y - ap.y - dy);
                    best = best.min(d);
                }
            }
            assert!((layout.distance_2d(n.position, b).unwrap() - best).abs() < 1e-9);
        }
    }

    #[test]
    fn distance_examples() {
        let layout = square(1000.0, vec![Point2::new(990.0, 0.0), Point2::new(300.0, 300.0)]);
        assert!((layout.distance_2d(Point2::new(0.0, 0.0), 0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(layout.distance_2d(Point2::new(300.0, 300.0), 1).unwrap(), 0.0);
        assert!(matches!(
            layout.distance_2d(Point2::new(0.0, 0.0), 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
        let a = Point2::new(12.0, 870.0);
        let b = Point2::new(640.0, 33.0);
        assert_eq!(layout.torus_distance(a, b), layout.torus_distance(b, a));
    }

    #[test]
    fn invalid_layouts_rejected() {
        assert!(NetworkLayout::new(1000.0, vec![Point2::new(1001.0, 0.0)], 15.0, 1.5, 200.0).is_err());
        assert!(NetworkLayout::new(1000.0, vec![Point2::new(1.0, 0.0)], 1.0, 1.5, 200.0).is_err());
        assert!(NetworkLayout::new(1000.0, vec![Point2::new(1.0, 0.0)], 15.0, 1.5, 500.0).is_err());
    }
}
