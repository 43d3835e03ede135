//! Discrete manifolds: triangle meshes and closed polylines.
//!
//! A [`TriMesh`] is immutable once built. The ray acceleration structure is
//! created lazily on the first intersection query and shared by all readers
//! afterwards.

mod bvh;
mod obj;
pub mod shapes;

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use bvh::Bvh;
pub use obj::{load_obj, load_polyline_txt, write_obj};

pub type Vec3 = Vector3<f64>;

/// Distance below which a ray hit is ignored.
pub const RAY_EPSILON: f64 = 1e-6;

/// Two hits closer than this are treated as a tie; the lower face wins.
pub const HIT_TIE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshKind {
    /// Embedded 2-manifold made of triangles.
    Surface,
    /// Ordered closed polyline; edge `i` joins vertex `i` and `i + 1 mod n`.
    Loop,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    /// Face index, or edge index for polylines.
    pub face: usize,
    pub bary: [f64; 3],
    pub position: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Ray> {
        let norm = direction.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid("ray direction must be non-zero and finite"));
        }
        Ok(Ray {
            origin,
            direction: direction / norm,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub point: SurfacePoint,
    pub distance: f64,
}

#[derive(Debug)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    kind: MeshKind,
    bvh: OnceLock<Bvh>,
}

impl Clone for TriMesh {
    fn clone(&self) -> Self {
        TriMesh {
            vertices: self.vertices.clone(),
            faces: self.faces.clone(),
            kind: self.kind,
            bvh: OnceLock::new(),
        }
    }
}

impl TriMesh {
    /// Builds a validated triangle mesh.
    ///
    /// Faces must index existing vertices, must not be degenerate relative to
    /// the mean face area, and no edge may be shared by more than two faces.
    /// Open boundaries only produce a warning.
    pub fn new_surface(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<TriMesh> {
        if faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        let n = vertices.len();
        if let Some(v) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not finite")));
        }
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex out of range (vertex count {n})"
                )));
            }
        }
        let mesh = TriMesh {
            vertices,
            faces,
            kind: MeshKind::Surface,
            bvh: OnceLock::new(),
        };
        mesh.check_degenerate()?;
        mesh.check_manifold()?;
        Ok(mesh)
    }

    /// Builds a closed polyline through `vertices` in order.
    pub fn new_loop(vertices: Vec<Vec3>) -> Result<TriMesh> {
        if vertices.len() < 3 {
            return Err(Error::InvalidMesh(
                "closed polyline needs at least 3 vertices".into(),
            ));
        }
        let mesh = TriMesh {
            vertices,
            faces: Vec::new(),
            kind: MeshKind::Loop,
            bvh: OnceLock::new(),
        };
        let short: Vec<usize> = (0..mesh.vertices.len())
            .filter(|&i| mesh.edge_length(i) <= 0.0)
            .collect();
        if !short.is_empty() {
            return Err(Error::DegenerateFaces { faces: short });
        }
        Ok(mesh)
    }

    fn check_degenerate(&self) -> Result<()> {
        let areas: Vec<f64> = (0..self.faces.len()).map(|f| self.face_area(f)).collect();
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        let bad: Vec<usize> = areas
            .iter()
            .enumerate()
            .filter(|(_, &a)| !(a > 1e-12 * mean))
            .map(|(i, _)| i)
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::DegenerateFaces { faces: bad })
        }
    }

    fn check_manifold(&self) -> Result<()> {
        let edges = self.edge_faces();
        let mut bad: Vec<usize> = edges
            .values()
            .filter(|fs| fs.len() > 2)
            .flatten()
            .copied()
            .collect();
        if !bad.is_empty() {
            bad.sort_unstable();
            bad.dedup();
            return Err(Error::NonManifold { faces: bad });
        }
        let boundary = edges.values().filter(|fs| fs.len() == 1).count();
        if boundary > 0 {
            log::warn!("mesh is not watertight: {boundary} boundary edges");
        }
        Ok(())
    }

    /// Undirected edge -> incident faces.
    pub fn edge_faces(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        edges
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Number of faces, or of edges for a polyline.
    pub fn num_elements(&self) -> usize {
        match self.kind {
            MeshKind::Surface => self.faces.len(),
            MeshKind::Loop => self.vertices.len(),
        }
    }

    /// Vertex indices of an element. Polyline edges repeat their end vertex
    /// in the third slot, which always carries barycentric weight zero.
    pub fn element(&self, e: usize) -> [usize; 3] {
        match self.kind {
            MeshKind::Surface => self.faces[e],
            MeshKind::Loop => {
                let n = self.vertices.len();
                [e, (e + 1) % n, (e + 1) % n]
            }
        }
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let n = self.vertices.len();
        (self.vertices[(e + 1) % n] - self.vertices[e]).norm()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (b - a).cross(&(c - a)).normalize()
    }

    /// Total surface area, or length for a polyline.
    pub fn total_measure(&self) -> f64 {
        match self.kind {
            MeshKind::Surface => (0..self.faces.len()).map(|f| self.face_area(f)).sum(),
            MeshKind::Loop => (0..self.vertices.len()).map(|e| self.edge_length(e)).sum(),
        }
    }

    /// Lumped vertex areas: one third of each incident face area. For
    /// polylines, half the length of the two incident edges.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let n = self.vertices.len();
        let mut areas = vec![0.0; n];
        match self.kind {
            MeshKind::Surface => {
                for (fi, f) in self.faces.iter().enumerate() {
                    let third = self.face_area(fi) / 3.0;
                    for &v in f {
                        areas[v] += third;
                    }
                }
            }
            MeshKind::Loop => {
                for e in 0..n {
                    let half = 0.5 * self.edge_length(e);
                    areas[e] += half;
                    areas[(e + 1) % n] += half;
                }
            }
        }
        areas
    }

    /// Barycentric coordinates of `point` with respect to triangle `face`.
    ///
    /// The point must lie in the triangle's plane within `1e-6` of the face
    /// diameter. It may lie outside the triangle, in which case some
    /// coordinates are negative.
    pub fn barycentric(&self, face: usize, point: &Vec3) -> Result<[f64; 3]> {
        if self.kind != MeshKind::Surface {
            return Err(Error::invalid("barycentric() needs a triangle mesh"));
        }
        let [a, b, c] = self.faces[face];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let e0 = b - a;
        let e1 = c - a;
        let normal = e0.cross(&e1);
        let twice_area = normal.norm();
        let unit = normal / twice_area;
        let diameter = e0.norm().max(e1.norm()).max((c - b).norm());
        let distance = (point - a).dot(&unit);
        if distance.abs() > 1e-6 * diameter {
            return Err(Error::OffPlane { face, distance });
        }
        let w = point - a;
        let (d00, d01, d11) = (e0.dot(&e0), e0.dot(&e1), e1.dot(&e1));
        let (d20, d21) = (w.dot(&e0), w.dot(&e1));
        let denom = d00 * d11 - d01 * d01;
        let v = (d11 * d20 - d01 * d21) / denom;
        let w = (d00 * d21 - d01 * d20) / denom;
        Ok([1.0 - v - w, v, w])
    }

    /// Position of the barycentric combination on `face`.
    pub fn interpolate(&self, face: usize, bary: &[f64; 3]) -> Vec3 {
        let idx = self.element(face);
        self.vertices[idx[0]] * bary[0]
            + self.vertices[idx[1]] * bary[1]
            + self.vertices[idx[2]] * bary[2]
    }

    pub fn surface_point(&self, face: usize, bary: [f64; 3]) -> SurfacePoint {
        SurfacePoint {
            face,
            bary,
            position: self.interpolate(face, &bary),
        }
    }

    /// The surface point sitting exactly on vertex `v`.
    pub fn vertex_point(&self, v: usize) -> SurfacePoint {
        match self.kind {
            MeshKind::Loop => self.surface_point(v, [1.0, 0.0, 0.0]),
            MeshKind::Surface => {
                let (face, slot) = self
                    .faces
                    .iter()
                    .enumerate()
                    .find_map(|(fi, f)| f.iter().position(|&x| x == v).map(|k| (fi, k)))
                    .expect("vertex is referenced by a face");
                let mut bary = [0.0; 3];
                bary[slot] = 1.0;
                self.surface_point(face, bary)
            }
        }
    }

    /// [`TriMesh::vertex_point`] for every vertex, in one pass over the faces.
    pub fn vertex_points(&self) -> Vec<SurfacePoint> {
        match self.kind {
            MeshKind::Loop => (0..self.vertices.len()).map(|v| self.vertex_point(v)).collect(),
            MeshKind::Surface => {
                let mut slot = vec![None; self.vertices.len()];
                for (fi, f) in self.faces.iter().enumerate() {
                    for (k, &v) in f.iter().enumerate() {
                        slot[v].get_or_insert((fi, k));
                    }
                }
                slot.into_iter()
                    .map(|s| {
                        let (face, k) = s.expect("vertex is referenced by a face");
                        let mut bary = [0.0; 3];
                        bary[k] = 1.0;
                        self.surface_point(face, bary)
                    })
                    .collect()
            }
        }
    }

    /// Interpolates a per-vertex quantity at a surface point.
    pub fn interpolate_values(&self, values: &[f64], p: &SurfacePoint) -> f64 {
        let idx = self.element(p.face);
        (0..3).map(|k| p.bary[k] * values[idx[k]]).sum()
    }

    /// Nearest intersection along `ray`, or `None` on a miss.
    pub fn ray_intersect(&self, ray: &Ray) -> Option<Hit> {
        if self.kind != MeshKind::Surface {
            return None;
        }
        self.bvh().intersect(self, ray)
    }

    /// Reference all-faces intersection; same tie-breaking as the BVH path.
    pub fn ray_intersect_brute_force(&self, ray: &Ray) -> Option<Hit> {
        if self.kind != MeshKind::Surface {
            return None;
        }
        let mut best: Option<(usize, f64, [f64; 3])> = None;
        for f in 0..self.faces.len() {
            if let Some((t, bary)) = self.intersect_face(f, ray) {
                if closer(t, f, best.map(|b| (b.1, b.0))) {
                    best = Some((f, t, bary));
                }
            }
        }
        best.map(|(f, t, bary)| self.make_hit(f, t, bary))
    }

    pub fn bvh(&self) -> &Bvh {
        self.bvh.get_or_init(|| Bvh::build(self))
    }

    pub(crate) fn make_hit(&self, face: usize, t: f64, bary: [f64; 3]) -> Hit {
        Hit {
            point: self.surface_point(face, bary),
            distance: t,
        }
    }

    /// Möller–Trumbore test against one face, edges inclusive.
    pub(crate) fn intersect_face(&self, f: usize, ray: &Ray) -> Option<(f64, [f64; 3])> {
        const EDGE_EPS: f64 = 1e-12;
        let [a, b, c] = self.faces[f];
        let v0 = self.vertices[a];
        let e1 = self.vertices[b] - v0;
        let e2 = self.vertices[c] - v0;
        let p = ray.direction.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-300 {
            return None;
        }
        let inv = 1.0 / det;
        let s = ray.origin - v0;
        let u = s.dot(&p) * inv;
        if !(-EDGE_EPS..=1.0 + EDGE_EPS).contains(&u) {
            return None;
        }
        let q = s.cross(&e1);
        let v = ray.direction.dot(&q) * inv;
        if v < -EDGE_EPS || u + v > 1.0 + EDGE_EPS {
            return None;
        }
        let t = e2.dot(&q) * inv;
        if !(t > RAY_EPSILON) {
            return None;
        }
        let (u, v) = (u.max(0.0), v.max(0.0));
        let (u, v) = if u + v > 1.0 {
            (u / (u + v), v / (u + v))
        } else {
            (u, v)
        };
        Some((t, [1.0 - u - v, u, v]))
    }

    /// A copy with every vertex mapped through `x -> R x + t`.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vec3) -> TriMesh {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| rotation * v + translation)
                .collect(),
            faces: self.faces.clone(),
            kind: self.kind,
            bvh: OnceLock::new(),
        }
    }

    /// A copy whose vertex `i` is this mesh's vertex `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<TriMesh> {
        let n = self.vertices.len();
        if order.len() != n {
            return Err(Error::shape("permutation length differs from vertex count"));
        }
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::invalid("not a permutation"));
            }
            inverse[old] = new;
        }
        let vertices = order.iter().map(|&o| self.vertices[o]).collect();
        match self.kind {
            MeshKind::Surface => {
                let faces = self
                    .faces
                    .iter()
                    .map(|f| [inverse[f[0]], inverse[f[1]], inverse[f[2]]])
                    .collect();
                TriMesh::new_surface(vertices, faces)
            }
            MeshKind::Loop => Err(Error::invalid("polylines cannot be permuted")),
        }
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Hex SHA-256 over kind, vertex and face data.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(match self.kind {
            MeshKind::Surface => b"surface".as_slice(),
            MeshKind::Loop => b"loop".as_slice(),
        });
        h.update((self.vertices.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v.iter() {
                h.update(c.to_le_bytes());
            }
        }
        h.update((self.faces.len() as u64).to_le_bytes());
        for f in &self.faces {
            for &i in f {
                h.update((i as u64).to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

/// Whether a hit at `(t, face)` beats the current best `(t, face)`.
pub(crate) fn closer(t: f64, face: usize, best: Option<(f64, usize)>) -> bool {
    match best {
        None => true,
        Some((bt, bf)) => t < bt - HIT_TIE || ((t - bt).abs() <= HIT_TIE && face < bf),
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Rotation matrix from an axis (need not be unit) and angle in radians.
pub fn rotation(axis: Vec3, angle: f64) -> Matrix3<f64> {
    *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tetra() -> TriMesh {
        let s = 1.0 / 8f64.sqrt();
        let v = vec![
            Vec3::new(s, s, s),
            Vec3::new(s, -s, -s),
            Vec3::new(-s, s, -s),
            Vec3::new(-s, -s, s),
        ];
        TriMesh::new_surface(v, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]).unwrap()
    }

    #[test]
    fn regular_tetrahedron_vertex_areas() {
        let m = tetra();
        // edge length 1 after the 1/sqrt(8) scaling
        assert!((m.edge_faces().len() - 6) == 0);
        for a in m.vertex_areas() {
            assert!((a - 3f64.sqrt() / 4.0).abs() < 1e-12, "{a}");
        }
    }

    #[test]
    fn circle_polyline_vertex_areas() {
        // circumference 8 with 8 equal edges
        let r = 0.5 / (std::f64::consts::PI / 8.0).sin();
        let v = (0..8)
            .map(|i| {
                let t = i as f64 * std::f64::consts::TAU / 8.0;
                Vec3::new(r * t.cos(), r * t.sin(), 0.0)
            })
            .collect();
        let m = TriMesh::new_loop(v).unwrap();
        for a in m.vertex_areas() {
            assert!((a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn icosphere_area_close_to_sphere() {
        let m = shapes::icosphere(3, 1.0);
        let total: f64 = m.vertex_areas().iter().sum();
        let exact = 4.0 * std::f64::consts::PI;
        assert!(((total - exact) / exact).abs() < 0.01, "{total}");
        assert!(m.vertex_areas().iter().all(|&a| a > 0.0));
    }

    #[test]
    fn barycentric_special_points() {
        let m = tetra();
        let [a, b, c] = m.faces()[0];
        let (a, b, c) = (m.vertices()[a], m.vertices()[b], m.vertices()[c]);
        let centroid = m.barycentric(0, &((a + b + c) / 3.0)).unwrap();
        for x in centroid {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
        let at_v0 = m.barycentric(0, &a).unwrap();
        assert!((at_v0[0] - 1.0).abs() < 1e-12 && at_v0[1].abs() < 1e-12);
        let mid = m.barycentric(0, &((a + b) / 2.0)).unwrap();
        assert!((mid[0] - 0.5).abs() < 1e-12 && (mid[1] - 0.5).abs() < 1e-12 && mid[2].abs() < 1e-12);
    }

    #[test]
    fn barycentric_rejects_off_plane_point() {
        let m = tetra();
        let p = m.interpolate(0, &[0.2, 0.3, 0.5]) + m.face_normal(0) * 0.01;
        assert!(matches!(m.barycentric(0, &p), Err(Error::OffPlane { .. })));
    }

    #[test]
    fn degenerate_face_is_rejected() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        let err = TriMesh::new_surface(v, vec![[0, 1, 2], [0, 1, 3]]).unwrap_err();
        match err {
            Error::DegenerateFaces { faces } => assert_eq!(faces, vec![1]),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn non_manifold_edge_is_rejected() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let err =
            TriMesh::new_surface(v, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]]).unwrap_err();
        assert!(matches!(err, Error::NonManifold { .. }));
    }

    #[test]
    fn ray_hits_unit_icosphere_at_distance_one() {
        let m = shapes::icosphere(3, 1.0);
        let ray = Ray::new(Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.0, 0.0, -1.0)).unwrap();
        let hit = m.ray_intersect(&ray).unwrap();
        assert!((hit.distance - 1.0).abs() < 0.02, "{}", hit.distance);
        let s: f64 = hit.point.bary.iter().sum();
        assert!((s - 1.0).abs() < 1e-9 && hit.point.bary.iter().all(|&b| b >= -1e-9));
    }

    #[test]
    fn ray_pointing_away_misses() {
        let m = shapes::icosphere(2, 1.0);
        let ray = Ray::new(Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(m.ray_intersect(&ray).is_none());
    }

    #[test]
    fn ray_through_vertex() {
        let m = shapes::icosphere(2, 1.0);
        let target = m.vertices()[17];
        let ray = Ray::new(target * 3.0, -target).unwrap();
        let hit = m.ray_intersect(&ray).unwrap();
        let brute = m.ray_intersect_brute_force(&ray).unwrap();
        assert_eq!(hit.point.face, brute.point.face);
        assert_eq!(hit.distance, brute.distance);
        let max_b = hit.point.bary.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max_b - 1.0).abs() < 1e-9, "{:?}", hit.point.bary);
        assert!((hit.point.position - target).norm() < 1e-9);
    }

    #[test]
    fn bvh_matches_brute_force_on_random_rays() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for mesh in [shapes::icosphere(2, 1.0), shapes::torus(1.0, 0.35, 24, 12), shapes::dumbbell(16, 20)] {
            for _ in 0..1000 {
                let o = Vec3::new(rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5));
                let target = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let Ok(ray) = Ray::new(o, target - o) else { continue };
                let a = mesh.ray_intersect(&ray);
                let b = mesh.ray_intersect_brute_force(&ray);
                match (a, b) {
                    (None, None) => {}
                    (Some(a), Some(b)) => {
                        assert_eq!(a.point.face, b.point.face);
                        assert!((a.distance - b.distance).abs() <= 1e-9);
                    }
                    (a, b) => panic!("bvh {a:?} vs brute {b:?}"),
                }
            }
        }
    }

    #[test]
    fn vertex_areas_rigid_invariance() {
        let m = shapes::torus(1.0, 0.4, 20, 10);
        let r = rotation(Vec3::new(0.3, -1.0, 0.7), 1.1);
        let moved = m.transformed(&r, &Vec3::new(3.0, -2.0, 0.5));
        for (a, b) in m.vertex_areas().iter().zip(moved.vertex_areas()) {
            assert!(((a - b) / a).abs() < 1e-9);
        }
    }

    proptest::proptest! {
        #[test]
        fn barycentric_round_trip(face in 0usize..320, u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let m = shapes::icosphere(2, 1.0);
            let (u, v) = if u + v > 1.0 { (1.0 - u, 1.0 - v) } else { (u, v) };
            let bary = [1.0 - u - v, u, v];
            let p = m.interpolate(face, &bary);
            let back = m.barycentric(face, &p).unwrap();
            for k in 0..3 {
                proptest::prop_assert!((back[k] - bary[k]).abs() < 1e-7);
            }
        }
    }
}
