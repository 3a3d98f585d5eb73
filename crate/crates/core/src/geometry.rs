//! AP and blockage point processes, LoS probabilities and the law of the
//! distance to the nearest LoS AP.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::Serialize;

use crate::params::{DerivedConstants, Scenario, WallLengthMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn polar(r: f64, angle: f64) -> Self {
        Self::new(r * angle.cos(), r * angle.sin())
    }
}

pub fn human_los_probability(d: f64, c: &DerivedConstants) -> f64 {
    (-c.alpha * d).exp()
}

pub fn wall_los_probability(d: f64, c: &DerivedConstants) -> f64 {
    (-c.eta * d).exp()
}

/// Probability that a link of horizontal length `d` is not blocked.
pub fn los_probability(d: f64, c: &DerivedConstants) -> f64 {
    (-c.blockage_rate() * d).exp()
}

/// Radial intensity of LoS APs, `2πλ_A d e^{-(α+η)d}`.
pub fn los_intensity(d: f64, c: &DerivedConstants, s: &Scenario) -> f64 {
    2.0 * std::f64::consts::PI * s.lambda_a * d * los_probability(d, c)
}

/// Mean number of LoS APs within horizontal distance `d`.
pub fn los_mass(d: f64, c: &DerivedConstants, s: &Scenario) -> f64 {
    let a = c.blockage_rate();
    let two_pi_lambda = 2.0 * std::f64::consts::PI * s.lambda_a;
    if a == 0.0 {
        return 0.5 * two_pi_lambda * d * d;
    }
    let x = a * d;
    // 1 - e^{-x}(1+x), accurate for small x.
    let tail = if x < 1e-3 {
        x * x * (0.5 - x / 3.0 + x * x / 8.0)
    } else {
        -(-x).exp_m1() - x * (-x).exp()
    };
    two_pi_lambda / (a * a) * tail
}

/// `los_mass(∞)`; infinite without blockage.
pub fn los_mass_total(c: &DerivedConstants, s: &Scenario) -> f64 {
    let a = c.blockage_rate();
    if a == 0.0 {
        return if s.lambda_a > 0.0 { f64::INFINITY } else { 0.0 };
    }
    2.0 * std::f64::consts::PI * s.lambda_a / (a * a)
}

pub fn nearest_los_pdf(d0: f64, c: &DerivedConstants, s: &Scenario) -> f64 {
    if d0 <= 0.0 {
        return 0.0;
    }
    los_intensity(d0, c, s) * (-los_mass(d0, c, s)).exp()
}

pub fn nearest_los_cdf(d0: f64, c: &DerivedConstants, s: &Scenario) -> f64 {
    if d0 <= 0.0 {
        return 0.0;
    }
    -(-los_mass(d0, c, s)).exp_m1()
}

/// Distance at which the nearest-LoS CDF reaches `p`; `None` when `p` is
/// at or beyond the total mass `1 - e^{-Ξ(∞)}`.
pub fn nearest_los_quantile(p: f64, c: &DerivedConstants, s: &Scenario) -> Option<f64> {
    if p <= 0.0 {
        return Some(0.0);
    }
    let target = -(-p).ln_1p();
    if target >= los_mass_total(c, s) {
        return None;
    }
    let mut hi = 1.0;
    while los_mass(hi, c, s) < target {
        hi *= 2.0;
        if hi > 1e9 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if los_mass(mid, c, s) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Uniform points in a disc of `radius` with Poisson(`λπr²`) count.
pub fn sample_ppp_disc<R: Rng + ?Sized>(lambda: f64, radius: f64, rng: &mut R) -> Vec<Point2> {
    let mean = lambda * std::f64::consts::PI * radius * radius;
    let n = poisson_count(mean, rng);
    (0..n)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            Point2::polar(r, rng.random::<f64>() * std::f64::consts::TAU)
        })
        .collect()
}

pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as usize
}

/// AP positions on the horizontal plane, centered on the typical UE.
#[derive(Debug, Clone, Serialize)]
pub struct ApField {
    pub positions: Vec<Point2>,
    pub region_radius: f64,
}

pub fn sample_ap_field<R: Rng + ?Sized>(
    s: &Scenario,
    c: &DerivedConstants,
    rng: &mut R,
) -> ApField {
    ApField {
        positions: sample_ppp_disc(s.lambda_a, c.sim_radius, rng),
        region_radius: c.sim_radius,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Parallel to the x axis.
    Horizontal,
    /// Parallel to the y axis.
    Vertical,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Human {
    pub center: Point2,
    pub radius: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Wall {
    pub center: Point2,
    pub length: f64,
    pub orientation: Orientation,
}

impl Wall {
    pub fn endpoints(&self) -> (Point2, Point2) {
        let h = 0.5 * self.length;
        match self.orientation {
            Orientation::Horizontal => (
                Point2::new(self.center.x - h, self.center.y),
                Point2::new(self.center.x + h, self.center.y),
            ),
            Orientation::Vertical => (
                Point2::new(self.center.x, self.center.y - h),
                Point2::new(self.center.x, self.center.y + h),
            ),
        }
    }
}

/// Explicit human and wall realization around the typical UE.
#[derive(Debug, Clone, Serialize)]
pub struct BlockageField {
    pub humans: Vec<Human>,
    pub walls: Vec<Wall>,
    pub region_radius: f64,
    #[serde(skip)]
    grid: Option<Grid>,
}

impl BlockageField {
    pub fn new(humans: Vec<Human>, walls: Vec<Wall>, region_radius: f64) -> Self {
        Self {
            humans,
            walls,
            region_radius,
            grid: None,
        }
    }

    pub fn empty(region_radius: f64) -> Self {
        Self::new(Vec::new(), Vec::new(), region_radius)
    }

    /// Build the spatial index used by [`is_los`]; worthwhile when many
    /// links are tested against one field.
    pub fn indexed(mut self, cell: f64) -> Self {
        self.grid = Some(Grid::build(&self, cell));
        self
    }
}

/// Sample humans and walls whose centers fall within `radius` of the UE.
pub fn sample_blockage_field_in<R: Rng + ?Sized>(
    s: &Scenario,
    radius: f64,
    rng: &mut R,
) -> BlockageField {
    let humans = sample_ppp_disc(s.lambda_b, radius, rng)
        .into_iter()
        .map(|center| Human {
            center,
            radius: s.r_b,
            height: s.h_b,
        })
        .collect();
    let exp = Exp::new(1.0 / s.mean_l_w).expect("positive mean length");
    let walls = sample_ppp_disc(s.lambda_w, radius, rng)
        .into_iter()
        .map(|center| {
            let length = match s.wall_length {
                WallLengthMode::Fixed => s.mean_l_w,
                WallLengthMode::Exponential => exp.sample(rng),
            };
            let orientation = if rng.random::<bool>() {
                Orientation::Horizontal
            } else {
                Orientation::Vertical
            };
            Wall {
                center,
                length,
                orientation,
            }
        })
        .collect();
    BlockageField::new(humans, walls, radius)
}

/// Margin beyond the AP region within which wall centers can still block.
pub fn wall_margin(s: &Scenario) -> f64 {
    match s.wall_length {
        WallLengthMode::Fixed => 0.5 * s.mean_l_w,
        WallLengthMode::Exponential => 5.0 * s.mean_l_w,
    }
}

/// Blockage field covering the simulation disc plus edge margins.
pub fn sample_blockage_field<R: Rng + ?Sized>(
    s: &Scenario,
    c: &DerivedConstants,
    rng: &mut R,
) -> BlockageField {
    let radius = c.sim_radius + wall_margin(s).max(s.r_b);
    sample_blockage_field_in(s, radius, rng)
}

/// Horizontal extent, measured from the UE, over which a human cylinder can
/// cut the link ray.
pub fn human_zone_length(d: f64, s: &Scenario) -> f64 {
    d * (s.h_b - s.h_u) / (s.h_a - s.h_u)
}

fn human_blocks(h: &Human, dir: Point2, zone: f64) -> bool {
    let along = h.center.x * dir.x + h.center.y * dir.y;
    if !(0.0..=zone).contains(&along) {
        return false;
    }
    let across = h.center.x * dir.y - h.center.y * dir.x;
    across.abs() <= h.radius
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0))
}

fn wall_blocks(w: &Wall, ap: Point2) -> bool {
    let (a, b) = w.endpoints();
    segments_intersect(Point2::ORIGIN, ap, a, b)
}

/// LoS test for the link from the UE at the origin to an AP at `ap`.
///
/// A human blocks when its center lies within `R_B` of the link's ground
/// track, measured perpendicular to it, over the stretch next to the UE
/// where the ray is lower than the human height. Walls reach the ceiling,
/// so any crossing blocks.
pub fn is_los(ap: Point2, field: &BlockageField, s: &Scenario) -> bool {
    let d = ap.norm();
    if d == 0.0 {
        return true;
    }
    let dir = Point2::new(ap.x / d, ap.y / d);
    let zone = human_zone_length(d, s);
    match &field.grid {
        Some(grid) => grid.is_los(field, ap, dir, zone),
        None => {
            !field.humans.iter().any(|h| human_blocks(h, dir, zone))
                && !field.walls.iter().any(|w| wall_blocks(w, ap))
        }
    }
}

/// Blockage status of one link of length `d` in a random direction, each in
/// a fresh field: `(clear of humans, clear of walls)`.
pub fn sample_link_clearance<R: Rng + ?Sized>(d: f64, s: &Scenario, rng: &mut R) -> (bool, bool) {
    let ap = Point2::polar(d, rng.random::<f64>() * std::f64::consts::TAU);
    let field = sample_blockage_field_in(s, d + wall_margin(s).max(s.r_b), rng);
    let dir = Point2::new(ap.x / d, ap.y / d);
    let zone = human_zone_length(d, s);
    let humans = !field.humans.iter().any(|h| human_blocks(h, dir, zone));
    let walls = !field.walls.iter().any(|w| wall_blocks(w, ap));
    (humans, walls)
}

/// Uniform bucket grid over the field's bounding square.
#[derive(Debug, Clone)]
struct Grid {
    origin: f64,
    cell: f64,
    n: usize,
    humans: Vec<Vec<u32>>,
    walls: Vec<Vec<u32>>,
}

impl Grid {
    fn build(field: &BlockageField, cell: f64) -> Self {
        let half = field.region_radius
            + field.walls.iter().map(|w| w.length).fold(0.0, f64::max)
            + field.humans.iter().map(|h| h.radius).fold(0.0, f64::max);
        let origin = -half;
        let n = ((2.0 * half / cell).ceil() as usize).max(1);
        let mut g = Self {
            origin,
            cell,
            n,
            humans: vec![Vec::new(); n * n],
            walls: vec![Vec::new(); n * n],
        };
        for (i, h) in field.humans.iter().enumerate() {
            let (x0, y0) = g.cell_of(h.center.x - h.radius, h.center.y - h.radius);
            let (x1, y1) = g.cell_of(h.center.x + h.radius, h.center.y + h.radius);
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    g.humans[cy * n + cx].push(i as u32);
                }
            }
        }
        for (i, w) in field.walls.iter().enumerate() {
            let (a, b) = w.endpoints();
            let (x0, y0) = g.cell_of(a.x.min(b.x), a.y.min(b.y));
            let (x1, y1) = g.cell_of(a.x.max(b.x), a.y.max(b.y));
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    g.walls[cy * n + cx].push(i as u32);
                }
            }
        }
        g
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let clamp = |v: f64| (((v - self.origin) / self.cell).floor().max(0.0) as usize).min(self.n - 1);
        (clamp(x), clamp(y))
    }

    /// Cells crossed by the segment from the origin to `end`, in order.
    fn traverse(&self, end: Point2, mut visit: impl FnMut(usize) -> bool) -> bool {
        let (mut cx, mut cy) = self.cell_of(0.0, 0.0);
        let (ex, ey) = self.cell_of(end.x, end.y);
        let step_x: isize = if end.x > 0.0 { 1 } else { -1 };
        let step_y: isize = if end.y > 0.0 { 1 } else { -1 };
        let next_boundary = |c: usize, step: isize| {
            self.origin + (c as f64 + if step > 0 { 1.0 } else { 0.0 }) * self.cell
        };
        let mut t_max_x = if end.x != 0.0 {
            (next_boundary(cx, step_x) - 0.0) / end.x
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if end.y != 0.0 {
            (next_boundary(cy, step_y) - 0.0) / end.y
        } else {
            f64::INFINITY
        };
        let t_dx = if end.x != 0.0 { self.cell / end.x.abs() } else { f64::INFINITY };
        let t_dy = if end.y != 0.0 { self.cell / end.y.abs() } else { f64::INFINITY };
        loop {
            if visit(cy * self.n + cx) {
                return true;
            }
            if cx == ex && cy == ey {
                return false;
            }
            if t_max_x < t_max_y {
                if t_max_x > 1.0 {
                    return false;
                }
                cx = (cx as isize + step_x).clamp(0, self.n as isize - 1) as usize;
                t_max_x += t_dx;
            } else {
                if t_max_y > 1.0 {
                    return false;
                }
                cy = (cy as isize + step_y).clamp(0, self.n as isize - 1) as usize;
                t_max_y += t_dy;
            }
        }
    }

    fn is_los(&self, field: &BlockageField, ap: Point2, dir: Point2, zone: f64) -> bool {
        let zone_end = Point2::new(dir.x * zone, dir.y * zone);
        let blocked_h = zone > 0.0
            && self.traverse(zone_end, |cell| {
                self.humans[cell]
                    .iter()
                    .any(|&i| human_blocks(&field.humans[i as usize], dir, zone))
            });
        if blocked_h {
            return false;
        }
        !self.traverse(ap, |cell| {
            self.walls[cell]
                .iter()
                .any(|&i| wall_blocks(&field.walls[i as usize], ap))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_constants;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Scenario, DerivedConstants) {
        let s = Scenario::default();
        let c = derive_constants(&s);
        (s, c)
    }

    #[test]
    fn los_probability_reference() {
        let (_, c) = setup();
        assert_eq!(los_probability(0.0, &c), 1.0);
        assert!((los_probability(10.0, &c) - 0.3911).abs() < 1e-4);
        for d in [1.0, 5.0, 20.0] {
            let prod = human_los_probability(d, &c) * wall_los_probability(d, &c);
            assert!((prod - los_probability(d, &c)).abs() < 1e-15);
        }
    }

    #[test]
    fn intensity_reference() {
        let (s, c) = setup();
        assert_eq!(los_intensity(0.0, &c, &s), 0.0);
        assert!((los_intensity(10.0, &c, &s) - 2.457).abs() < 1e-3);
        let peak = 1.0 / c.blockage_rate();
        assert!((peak - 10.650).abs() < 1e-3);
        let f = |d| los_intensity(d, &c, &s);
        assert!(f(peak) > f(peak - 0.01) && f(peak) > f(peak + 0.01));
    }

    #[test]
    fn nearest_los_reference() {
        let (s, c) = setup();
        assert_eq!(nearest_los_pdf(0.0, &c, &s), 0.0);
        assert!((los_mass(2.0, &c, &s) - 1.1096).abs() < 5e-4);
        assert!((nearest_los_pdf(2.0, &c, &s) - 0.3434).abs() < 5e-4);
        assert!((los_mass_total(&c, &s) - 71.27).abs() < 0.01);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let (s, c) = setup();
        for p in [0.01, 0.3, 0.5, 0.9, 0.999999] {
            let d = nearest_los_quantile(p, &c, &s).unwrap();
            assert!((nearest_los_cdf(d, &c, &s) - p).abs() < 1e-12);
        }
        assert!(nearest_los_quantile(1.0, &c, &s).is_none());
    }

    #[test]
    fn empty_fields() {
        let (mut s, c) = setup();
        s.lambda_a = 0.0;
        s.lambda_b = 0.0;
        s.lambda_w = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_ap_field(&s, &c, &mut rng).positions.is_empty());
        let field = sample_blockage_field(&s, &c, &mut rng);
        assert!(field.humans.is_empty() && field.walls.is_empty());
        assert!(is_los(Point2::new(7.0, -3.0), &field, &s));
    }

    #[test]
    fn constructed_blockers() {
        let (s, _) = setup();
        let ap = Point2::new(10.0, 0.0);
        let blocker = Human { center: Point2::new(1.0, 0.0), radius: s.r_b, height: s.h_b };
        let field = BlockageField::new(vec![blocker], vec![], 20.0);
        assert!(!is_los(ap, &field, &s));
        // Beyond the low-ray stretch (3.5 m for d = 10) the ray clears heads.
        let far = Human { center: Point2::new(5.0, 0.0), ..blocker };
        assert!(is_los(ap, &BlockageField::new(vec![far], vec![], 20.0), &s));
        let wall = Wall { center: Point2::new(8.0, 0.5), length: 3.0, orientation: Orientation::Vertical };
        assert!(!is_los(ap, &BlockageField::new(vec![], vec![wall], 20.0), &s));
        let parallel = Wall { orientation: Orientation::Horizontal, ..wall };
        assert!(is_los(ap, &BlockageField::new(vec![], vec![parallel], 20.0), &s));
    }

    #[test]
    fn grid_agrees_with_scan() {
        let (s, c) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let field = sample_blockage_field(&s, &c, &mut rng);
            let indexed = field.clone().indexed(2.0);
            let aps = sample_ap_field(&s, &c, &mut rng);
            for &ap in aps.positions.iter().take(800) {
                assert_eq!(is_los(ap, &field, &s), is_los(ap, &indexed, &s), "{ap:?}");
            }
        }
    }

    #[test]
    fn field_counts() {
        let (s, _) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 2000;
        let (mut nh, mut nw, mut horiz) = (0usize, 0usize, 0usize);
        for _ in 0..n {
            let f = sample_blockage_field_in(&s, 30.0, &mut rng);
            nh += f.humans.len();
            nw += f.walls.len();
            horiz += f.walls.iter().filter(|w| w.orientation == Orientation::Horizontal).count();
        }
        let mh = nh as f64 / n as f64;
        let mw = nw as f64 / n as f64;
        assert!((mh - 282.74).abs() < 0.02 * 282.74, "{mh}");
        assert!((mw - 113.1).abs() < 0.02 * 113.1, "{mw}");
        assert!((horiz as f64 / nw as f64 - 0.5).abs() < 0.02);
    }
}
