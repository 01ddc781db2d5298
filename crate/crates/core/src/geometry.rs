//! Perforated domain description, validation and a seeded layout generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NlmcError, Result};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn unit() -> Self {
        Self::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Displacement component normal to this side (0 = x, 1 = y).
    pub fn normal_component(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// Boundary condition type of each side of the outer rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryRules {
    pub left: BoundaryKind,
    pub right: BoundaryKind,
    pub bottom: BoundaryKind,
    pub top: BoundaryKind,
}

impl BoundaryRules {
    pub fn all(kind: BoundaryKind) -> Self {
        Self {
            left: kind,
            right: kind,
            bottom: kind,
            top: kind,
        }
    }

    /// Zero Dirichlet on `x = x0` and `y = y0`, Neumann on the other two sides.
    pub fn dirichlet_left_bottom() -> Self {
        Self {
            left: BoundaryKind::Dirichlet,
            right: BoundaryKind::Neumann,
            bottom: BoundaryKind::Dirichlet,
            top: BoundaryKind::Neumann,
        }
    }

    pub fn kind(&self, side: Side) -> BoundaryKind {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
            Side::Bottom => self.bottom,
            Side::Top => self.top,
        }
    }

    pub fn has_dirichlet(&self) -> bool {
        Side::ALL
            .iter()
            .any(|&s| self.kind(s) == BoundaryKind::Dirichlet)
    }
}

impl Default for BoundaryRules {
    fn default() -> Self {
        Self::dirichlet_left_bottom()
    }
}

/// A single hole. Polygons must be convex and listed counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Perforation {
    Disk { center: [f64; 2], radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Perforation {
    pub fn disk(cx: f64, cy: f64, radius: f64) -> Self {
        Perforation::Disk {
            center: [cx, cy],
            radius,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Perforation::Disk { center, radius } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                dx * dx + dy * dy < radius * radius
            }
            Perforation::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|k| {
                    let a = vertices[k];
                    let b = vertices[(k + 1) % n];
                    cross(sub(b, a), sub(p, a)) > 0.0
                })
            }
        }
    }

    /// `[xmin, ymin, xmax, ymax]`.
    pub fn bounding_box(&self) -> [f64; 4] {
        match self {
            Perforation::Disk { center, radius } => [
                center[0] - radius,
                center[1] - radius,
                center[0] + radius,
                center[1] + radius,
            ],
            Perforation::Polygon { vertices } => vertices.iter().fold(
                [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                |b, v| [b[0].min(v[0]), b[1].min(v[1]), b[2].max(v[0]), b[3].max(v[1])],
            ),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Perforation::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            Perforation::Polygon { vertices } => {
                let n = vertices.len();
                0.5 * (0..n)
                    .map(|k| cross(vertices[k], vertices[(k + 1) % n]))
                    .sum::<f64>()
            }
        }
    }

    /// Distance from `p` to the shape (0 inside).
    pub fn distance_to_point(&self, p: [f64; 2]) -> f64 {
        match self {
            Perforation::Disk { center, radius } => (norm(sub(p, *center)) - radius).max(0.0),
            Perforation::Polygon { vertices } => {
                if self.contains(p) {
                    return 0.0;
                }
                let n = vertices.len();
                (0..n)
                    .map(|k| point_segment_distance(p, vertices[k], vertices[(k + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Gap between two shapes, or 0 if they intersect.
    pub fn gap(&self, other: &Perforation) -> f64 {
        match (self, other) {
            (Perforation::Disk { center: c, radius: r }, o)
            | (o, Perforation::Disk { center: c, radius: r }) => {
                (o.distance_to_point(*c) - r).max(0.0)
            }
            (Perforation::Polygon { vertices: a }, Perforation::Polygon { vertices: b }) => {
                if a.iter().any(|&v| other.contains(v)) || b.iter().any(|&v| self.contains(v)) {
                    return 0.0;
                }
                let d1 = a.iter().map(|&v| other.distance_to_point(v));
                let d2 = b.iter().map(|&v| self.distance_to_point(v));
                d1.chain(d2).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Smallest distance from the shape to the boundary of `rect`
    /// (negative when the shape pokes outside).
    pub fn clearance_to(&self, rect: &Rect) -> f64 {
        let b = self.bounding_box();
        let d = [b[0] - rect.x0, b[1] - rect.y0, rect.x1 - b[2], rect.y1 - b[3]];
        d.into_iter().fold(f64::INFINITY, f64::min)
    }

    fn validate(&self, id: usize) -> Result<()> {
        match self {
            Perforation::Disk { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0 && center.iter().all(|c| c.is_finite())) {
                    return Err(NlmcError::InvalidParams(format!(
                        "perforation {id}: radius must be positive and finite"
                    )));
                }
            }
            Perforation::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return Err(NlmcError::InvalidParams(format!(
                        "perforation {id}: polygon needs at least 3 vertices"
                    )));
                }
                let convex_ccw = (0..n).all(|k| {
                    let a = vertices[k];
                    let b = vertices[(k + 1) % n];
                    let c = vertices[(k + 2) % n];
                    cross(sub(b, a), sub(c, b)) > 0.0
                });
                if !convex_ccw {
                    return Err(NlmcError::InvalidParams(format!(
                        "perforation {id}: polygon must be convex and counter-clockwise"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = sub(b, a);
    let t = ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1]);
    let t = t.clamp(0.0, 1.0);
    norm(sub(p, [a[0] + t * ab[0], a[1] + t * ab[1]]))
}

/// Parameters of the jittered-lattice layout generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutGenerator {
    pub count: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub seed: u64,
    /// Distance from the outer boundary to the first and last lattice rows.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Maximum displacement of a center from its lattice site, per axis.
    #[serde(default)]
    pub jitter: f64,
    /// Minimum gap between holes and to the outer boundary.
    #[serde(default)]
    pub clearance: f64,
}

fn default_margin() -> f64 {
    0.03
}

/// Provenance written next to a generated layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub generator: LayoutGenerator,
}

impl LayoutGenerator {
    /// Places `count` disks on a `n × n` lattice spanning `domain` minus the
    /// margin, visiting sites row by row. Each disk gets a random radius and
    /// jitter; draws violating the clearance are rejected and redrawn.
    pub fn generate(&self, domain: Rect, boundary: BoundaryRules) -> Result<PerforatedGeometry> {
        if self.radius_min <= 0.0 || self.radius_max < self.radius_min {
            return Err(NlmcError::Generator("invalid radius range".into()));
        }
        let n = (self.count as f64).sqrt().ceil().max(1.0) as usize;
        let spacing = |len: f64| {
            if n > 1 {
                (len - 2.0 * self.margin) / (n - 1) as f64
            } else {
                0.0
            }
        };
        let (sx, sy) = (spacing(domain.width()), spacing(domain.height()));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut placed: Vec<Perforation> = Vec::with_capacity(self.count);
        for site in 0..self.count {
            let (ix, iy) = (site % n, site / n);
            let base = if n > 1 {
                [domain.x0 + self.margin + ix as f64 * sx, domain.y0 + self.margin + iy as f64 * sy]
            } else {
                [0.5 * (domain.x0 + domain.x1), 0.5 * (domain.y0 + domain.y1)]
            };
            let mut accepted = None;
            for _ in 0..1000 {
                let r = if self.radius_max > self.radius_min {
                    rng.gen_range(self.radius_min..self.radius_max)
                } else {
                    self.radius_min
                };
                let mut jitter = || {
                    if self.jitter > 0.0 {
                        rng.gen_range(-self.jitter..self.jitter)
                    } else {
                        0.0
                    }
                };
                let c = [base[0] + jitter(), base[1] + jitter()];
                let disk = Perforation::disk(c[0], c[1], r);
                let ok = disk.clearance_to(&domain) >= self.clearance.max(f64::MIN_POSITIVE)
                    && placed.iter().all(|p| p.gap(&disk) >= self.clearance.max(f64::MIN_POSITIVE));
                if ok {
                    accepted = Some(disk);
                    break;
                }
            }
            match accepted {
                Some(d) => placed.push(d),
                None => {
                    return Err(NlmcError::Generator(format!(
                        "could not place perforation {} after 1000 draws",
                        site + 1
                    )))
                }
            }
        }
        Ok(PerforatedGeometry {
            domain,
            boundary,
            perforations: placed,
            metadata: Some(GeneratorMeta {
                generator: self.clone(),
            }),
        })
    }
}

/// Outer rectangle, holes and outer boundary conditions.
///
/// Perforation ids are 1-based in documents and messages; `perforations[l - 1]`
/// is perforation `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerforatedGeometry {
    pub domain: Rect,
    #[serde(default)]
    pub boundary: BoundaryRules,
    #[serde(default, rename = "perforation")]
    pub perforations: Vec<Perforation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<GeneratorMeta>,
}

impl PerforatedGeometry {
    pub fn new(domain: Rect, boundary: BoundaryRules, perforations: Vec<Perforation>) -> Self {
        Self {
            domain,
            boundary,
            perforations,
            metadata: None,
        }
    }

    /// Unit square with the default boundary rules and no holes.
    pub fn unit_square() -> Self {
        Self::new(Rect::unit(), BoundaryRules::default(), Vec::new())
    }

    /// Checks shapes, strict containment and pairwise separation by at least
    /// `clearance`.
    pub fn validate(&self, clearance: f64) -> Result<()> {
        let d = &self.domain;
        if !(d.width() > 0.0 && d.height() > 0.0) {
            return Err(NlmcError::InvalidParams("empty domain rectangle".into()));
        }
        for (k, p) in self.perforations.iter().enumerate() {
            p.validate(k + 1)?;
            let c = p.clearance_to(d);
            if c <= 0.0 || c < clearance {
                return Err(NlmcError::PerforationOutsideDomain { id: k + 1, clearance });
            }
        }
        // Bounding-box sweep keeps the pairwise check near-linear for lattices.
        let mut order: Vec<usize> = (0..self.perforations.len()).collect();
        let boxes: Vec<[f64; 4]> = self.perforations.iter().map(|p| p.bounding_box()).collect();
        order.sort_by(|&a, &b| boxes[a][0].total_cmp(&boxes[b][0]));
        for (n, &a) in order.iter().enumerate() {
            for &b in &order[n + 1..] {
                if boxes[b][0] - boxes[a][2] > clearance {
                    break;
                }
                if boxes[b][1] - boxes[a][3] > clearance || boxes[a][1] - boxes[b][3] > clearance {
                    continue;
                }
                let gap = self.perforations[a].gap(&self.perforations[b]);
                if gap <= 0.0 || gap < clearance {
                    let (a, b) = (a.min(b), a.max(b));
                    return Err(NlmcError::PerforationOverlap {
                        a: a + 1,
                        b: b + 1,
                        gap,
                        clearance,
                    });
                }
            }
        }
        Ok(())
    }

    /// Index (0-based) of the perforation containing `p`, if any.
    pub fn perforation_at(&self, p: [f64; 2]) -> Option<usize> {
        self.perforations.iter().position(|q| q.contains(p))
    }

    pub fn total_perforation_area(&self) -> f64 {
        self.perforations.iter().map(Perforation::area).sum()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| NlmcError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| NlmcError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// SHA-256 of the shape data (metadata excluded), as lowercase hex.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in [self.domain.x0, self.domain.y0, self.domain.x1, self.domain.y1] {
            h.update(v.to_le_bytes());
        }
        for s in Side::ALL {
            h.update([self.boundary.kind(s) as u8]);
        }
        for p in &self.perforations {
            match p {
                Perforation::Disk { center, radius } => {
                    h.update(b"d");
                    for v in [center[0], center[1], *radius] {
                        h.update(v.to_le_bytes());
                    }
                }
                Perforation::Polygon { vertices } => {
                    h.update(b"p");
                    h.update((vertices.len() as u64).to_le_bytes());
                    for v in vertices {
                        h.update(v[0].to_le_bytes());
                        h.update(v[1].to_le_bytes());
                    }
                }
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip() {
        let mut g = PerforatedGeometry::unit_square();
        g.perforations.push(Perforation::disk(0.5, 0.5, 0.2));
        g.perforations.push(Perforation::Polygon {
            vertices: vec![[0.1, 0.1], [0.2, 0.1], [0.15, 0.2]],
        });
        let text = g.to_toml().unwrap();
        let back = PerforatedGeometry::from_toml(&text).unwrap();
        assert_eq!(g, back);
        assert_eq!(g.content_hash(), back.content_hash());
        assert_eq!(g.content_hash().len(), 64);
    }

    #[test]
    fn polygon_contains_and_gap() {
        let sq = Perforation::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        };
        assert!(sq.contains([0.5, 0.5]));
        assert!(!sq.contains([1.5, 0.5]));
        assert!((sq.area() - 1.0).abs() < 1e-15);
        let d = Perforation::disk(3.0, 0.5, 1.0);
        assert!((sq.gap(&d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_overlap_and_outside() {
        let mut g = PerforatedGeometry::unit_square();
        g.perforations = vec![Perforation::disk(0.3, 0.5, 0.1), Perforation::disk(0.45, 0.5, 0.1)];
        assert!(matches!(
            g.validate(0.0),
            Err(NlmcError::PerforationOverlap { a: 1, b: 2, .. })
        ));
        g.perforations = vec![Perforation::disk(0.05, 0.5, 0.1)];
        assert!(matches!(
            g.validate(0.0),
            Err(NlmcError::PerforationOutsideDomain { id: 1, .. })
        ));
    }

    #[test]
    fn generator_is_deterministic() {
        let gen = LayoutGenerator {
            count: 16,
            radius_min: 0.02,
            radius_max: 0.04,
            seed: 7,
            margin: 0.15,
            jitter: 0.02,
            clearance: 0.02,
        };
        let a = gen.generate(Rect::unit(), BoundaryRules::default()).unwrap();
        let b = gen.generate(Rect::unit(), BoundaryRules::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.perforations.len(), 16);
        a.validate(0.02).unwrap();
        let other = LayoutGenerator { seed: 8, ..gen }
            .generate(Rect::unit(), BoundaryRules::default())
            .unwrap();
        assert_ne!(a.content_hash(), other.content_hash());
    }
}
