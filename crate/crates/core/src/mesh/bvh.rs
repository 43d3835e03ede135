//! Axis-aligned bounding volume hierarchy over mesh faces.

use super::{closer, Hit, Ray, TriMesh, Vec3, HIT_TIE, RAY_EPSILON};

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Aabb {
        Aabb {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&mut self, other: &Aabb) {
        self.lo = self.lo.inf(&other.lo);
        self.hi = self.hi.sup(&other.hi);
    }

    /// Entry distance of the slab test, if the box overlaps `[0, t_max]`.
    fn entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            let mut near = (self.lo[k] - origin[k]) * inv_dir[k];
            let mut far = (self.hi[k] - origin[k]) * inv_dir[k];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN arises for a zero direction component with the origin on a slab
            // plane; treat that axis as non-restricting.
            if near.is_nan() || far.is_nan() {
                continue;
            }
            // pad so that grazing hits on box faces are never culled
            let pad = 1e-9 * (1.0 + far.abs());
            t0 = t0.max(near - pad);
            t1 = t1.min(far + pad);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: first face in `order`. Interior: index of the left child; the
    /// right child is stored at `right`.
    start: usize,
    count: usize,
    right: usize,
}

/// Median-split BVH. Immutable after [`Bvh::build`].
#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Bvh {
        let faces = mesh.faces();
        let mut boxes = Vec::with_capacity(faces.len());
        let mut centroids = Vec::with_capacity(faces.len());
        for f in faces {
            let mut b = Aabb::empty();
            let mut c = Vec3::zeros();
            for &v in f {
                b.grow(&mesh.vertices()[v]);
                c += mesh.vertices()[v];
            }
            boxes.push(b);
            centroids.push(c / 3.0);
        }
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * faces.len() / LEAF_SIZE + 1),
            order: (0..faces.len()).collect(),
        };
        bvh.split(0, faces.len(), &boxes, &centroids);
        bvh
    }

    fn split(&mut self, start: usize, end: usize, boxes: &[Aabb], centroids: &[Vec3]) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbox = Aabb::empty();
        for &f in &self.order[start..end] {
            bounds.merge(&boxes[f]);
            cbox.grow(&centroids[f]);
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            start,
            count: end - start,
            right: 0,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let extent = cbox.hi - cbox.lo;
        let axis = extent.imax();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        self.split(start, mid, boxes, centroids);
        let right = self.split(mid, end, boxes, centroids);
        let node = &mut self.nodes[id];
        node.count = 0;
        node.start = id + 1;
        node.right = right;
        id
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub(crate) fn intersect(&self, mesh: &TriMesh, ray: &Ray) -> Option<Hit> {
        let inv_dir = Vec3::new(
            1.0 / ray.direction.x,
            1.0 / ray.direction.y,
            1.0 / ray.direction.z,
        );
        let mut best: Option<(usize, f64, [f64; 3])> = None;
        let mut stack = Vec::with_capacity(64);
        stack.push(0usize);
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let limit = best.map_or(f64::INFINITY, |b| b.1 + HIT_TIE);
            if node.bounds.entry(&ray.origin, &inv_dir, limit).is_none() {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start..node.start + node.count] {
                    if let Some((t, bary)) = mesh.intersect_face(f, ray) {
                        debug_assert!(t > RAY_EPSILON);
                        if closer(t, f, best.map(|b| (b.1, b.0))) {
                            best = Some((f, t, bary));
                        }
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.start);
            }
        }
        best.map(|(f, t, bary)| mesh.make_hit(f, t, bary))
    }
}
