//! Functional maps from point-to-point correspondences, and evaluation of a
//! trained intrinsic field on another shape through such a map.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::container::{Reader, Writer, P2P_MAGIC};
use crate::embedding::{EmbeddingSpec, IntrinsicSpec, PointEmbedding};
use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::mesh::{Ray, SurfacePoint, TriMesh, Vec3};
use crate::render::{render_view, Camera, NeuralField, Rendering};
use crate::spectrum::EigenBasis;

const ROW_SUM_TOL: f64 = 1e-9;

/// For each target vertex, the source surface point it corresponds to.
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondence {
    pub entries: Vec<(usize, [f64; 3])>,
    pub source_mesh_hash: Option<String>,
    pub target_mesh_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct P2pHeader {
    target_vertices: usize,
    #[serde(default)]
    source_mesh_hash: Option<String>,
    #[serde(default)]
    target_mesh_hash: Option<String>,
}

impl Correspondence {
    pub fn from_points(points: &[SurfacePoint]) -> Correspondence {
        Correspondence {
            entries: points.iter().map(|p| (p.face, p.bary)).collect(),
            source_mesh_hash: None,
            target_mesh_hash: None,
        }
    }

    /// Target vertex `i` sits on source vertex `map[i]`.
    pub fn from_vertex_map(source: &TriMesh, map: &[usize]) -> Result<Correspondence> {
        let points = source.vertex_points();
        let mut entries = Vec::with_capacity(map.len());
        for &v in map {
            let p = points
                .get(v)
                .ok_or_else(|| Error::shape(format!("vertex map refers to source vertex {v} of {}", points.len())))?;
            entries.push((p.face, p.bary));
        }
        Ok(Correspondence {
            entries,
            source_mesh_hash: Some(source.content_hash()),
            target_mesh_hash: None,
        })
    }

    pub fn identity(mesh: &TriMesh) -> Correspondence {
        let map: Vec<usize> = (0..mesh.num_vertices()).collect();
        let mut c = Correspondence::from_vertex_map(mesh, &map).expect("identity map is in range");
        c.target_mesh_hash = c.source_mesh_hash.clone();
        c
    }

    /// Records the meshes this correspondence was built for.
    pub fn bound_to(mut self, source: &TriMesh, target: &TriMesh) -> Correspondence {
        self.source_mesh_hash = Some(source.content_hash());
        self.target_mesh_hash = Some(target.content_hash());
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks faces, barycentric row sums and signs, and recorded hashes.
    pub fn validate(&self, source: &TriMesh, target: &TriMesh) -> Result<()> {
        if self.entries.len() != target.num_vertices() {
            return Err(Error::shape(format!(
                "correspondence has {} rows, target has {} vertices",
                self.entries.len(),
                target.num_vertices()
            )));
        }
        for (i, (face, bary)) in self.entries.iter().enumerate() {
            if *face >= source.num_elements() {
                return Err(Error::shape(format!("row {i}: face {face} out of range")));
            }
            let sum: f64 = bary.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || bary.iter().any(|&b| b < -ROW_SUM_TOL || !b.is_finite()) {
                return Err(Error::invalid(format!("row {i}: barycentric weights {bary:?} are not a convex combination")));
            }
        }
        for (recorded, mesh) in [(&self.source_mesh_hash, source), (&self.target_mesh_hash, target)] {
            if let Some(expected) = recorded {
                let found = mesh.content_hash();
                if *expected != found {
                    return Err(Error::HashMismatch {
                        expected: expected.clone(),
                        found,
                    });
                }
            }
        }
        Ok(())
    }

    /// `P Φ` for a per-source-vertex matrix `phi` (rows = source vertices).
    fn apply(&self, source: &TriMesh, phi: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.entries.len(), phi.ncols());
        for (i, (face, bary)) in self.entries.iter().enumerate() {
            let idx = source.element(*face);
            for k in 0..3 {
                if bary[k] != 0.0 {
                    let row = phi.row(idx[k]) * bary[k];
                    let mut target = out.row_mut(i);
                    target += row;
                }
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(P2P_MAGIC);
        w.json_block(&P2pHeader {
            target_vertices: self.entries.len(),
            source_mesh_hash: self.source_mesh_hash.clone(),
            target_mesh_hash: self.target_mesh_hash.clone(),
        })?;
        for (face, bary) in &self.entries {
            let face = u32::try_from(*face).map_err(|_| Error::Container("face index exceeds u32".into()))?;
            w.u32(face).f64s(bary);
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Correspondence> {
        let mut r = Reader::new(bytes, P2P_MAGIC)?;
        let h: P2pHeader = r.json_block()?;
        let mut entries = Vec::with_capacity(h.target_vertices.min(bytes.len() / 28));
        for _ in 0..h.target_vertices {
            let face = r.u32()? as usize;
            let b = r.f64s(3)?;
            entries.push((face, [b[0], b[1], b[2]]));
        }
        r.finish()?;
        Ok(Correspondence {
            entries,
            source_mesh_hash: h.source_mesh_hash,
            target_mesh_hash: h.target_mesh_hash,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Correspondence> {
        Correspondence::from_bytes(&std::fs::read(path)?)
    }
}

/// Correspondence for two star-shaped surfaces around `center`: each
/// target vertex maps to where the ray from `center` through it meets the
/// source. Meant for synthetic remeshes of the same shape.
pub fn radial_correspondence(source: &TriMesh, target: &TriMesh, center: Vec3) -> Result<Correspondence> {
    let mut entries = Vec::with_capacity(target.num_vertices());
    for (i, v) in target.vertices().iter().enumerate() {
        let ray = Ray::new(center, v - center)?;
        let hit = source
            .ray_intersect(&ray)
            .ok_or_else(|| Error::invalid(format!("no source surface behind target vertex {i}")))?;
        entries.push((hit.point.face, hit.point.bary));
    }
    Ok(Correspondence {
        entries,
        source_mesh_hash: None,
        target_mesh_hash: None,
    }
    .bound_to(source, target))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// `Φ_Tᵀ M_T`, the left inverse of an M-orthonormal basis.
    #[default]
    MassWeighted,
    /// `Φ_Tᵀ` as printed, without the mass matrix.
    Unweighted,
}

/// `d_T x d_C` matrix mapping source coefficients to target coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalMap {
    pub c: DMatrix<f64>,
    pub source_basis_hash: String,
    pub target_basis_hash: String,
}

impl FunctionalMap {
    /// `C = I` between a basis and itself.
    pub fn identity(basis: &EigenBasis) -> FunctionalMap {
        let h = basis.content_hash();
        FunctionalMap {
            c: DMatrix::identity(basis.d(), basis.d()),
            source_basis_hash: h.clone(),
            target_basis_hash: h,
        }
    }

    pub fn d_target(&self) -> usize {
        self.c.nrows()
    }

    pub fn d_source(&self) -> usize {
        self.c.ncols()
    }
}

/// `C = Φ_Tᵀ M_T P Φ_C` (or without `M_T`).
pub fn fmap_from_p2p(p: &Correspondence, source: &TriMesh, basis_src: &EigenBasis, target: &TriMesh, basis_tgt: &EigenBasis, projection: Projection) -> Result<FunctionalMap> {
    p.validate(source, target)?;
    basis_src.ensure_mesh(source)?;
    basis_tgt.ensure_mesh(target)?;
    let pphi = p.apply(source, &basis_src.to_matrix());
    let mut left = basis_tgt.to_matrix();
    if projection == Projection::MassWeighted {
        for (mut row, m) in left.row_iter_mut().zip(basis_tgt.mass()) {
            row *= *m;
        }
    }
    let c = left.transpose() * pphi;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("functional map".into()));
    }
    Ok(FunctionalMap {
        c,
        source_basis_hash: basis_src.content_hash(),
        target_basis_hash: basis_tgt.content_hash(),
    })
}

/// Intrinsic embedding of a source model evaluated on the target through a
/// functional map: rows of `Φ_T C`, interpolated barycentrically and scaled
/// by the source coefficients `a_i`.
pub struct TransferredEmbedding<'a> {
    rows: DMatrix<f64>,
    coefficients: Vec<f64>,
    mesh: &'a TriMesh,
}

impl<'a> TransferredEmbedding<'a> {
    pub fn new(fmap: &FunctionalMap, spec: &IntrinsicSpec, basis_tgt: &EigenBasis, target: &'a TriMesh) -> Result<TransferredEmbedding<'a>> {
        if fmap.d_source() != spec.d() {
            return Err(Error::shape(format!(
                "map has {} source columns, model embedding has {}",
                fmap.d_source(),
                spec.d()
            )));
        }
        if fmap.d_target() > basis_tgt.d() {
            return Err(Error::shape(format!(
                "map needs {} target eigenfunctions, basis has {}",
                fmap.d_target(),
                basis_tgt.d()
            )));
        }
        basis_tgt.ensure_mesh(target)?;
        let phi = basis_tgt.to_matrix().columns(0, fmap.d_target()).into_owned();
        Ok(TransferredEmbedding {
            rows: phi * &fmap.c,
            coefficients: spec.coefficients.clone(),
            mesh: target,
        })
    }
}

impl PointEmbedding for TransferredEmbedding<'_> {
    fn dim(&self) -> usize {
        self.coefficients.len()
    }

    fn embed(&self, p: &SurfacePoint) -> Vec<f64> {
        let d = self.dim();
        let idx = self.mesh.element(p.face);
        let mut out = vec![0.0; d];
        for k in 0..3 {
            let w = p.bary[k];
            if w == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += w * self.rows[(idx[k], j)];
            }
        }
        for (o, a) in out.iter_mut().zip(&self.coefficients) {
            *o *= a;
        }
        out
    }
}

/// Single-point version of [`TransferredEmbedding`].
pub fn transfer_embedding(fmap: &FunctionalMap, spec: &IntrinsicSpec, basis_tgt: &EigenBasis, target: &TriMesh, p: &SurfacePoint) -> Result<Vec<f64>> {
    Ok(TransferredEmbedding::new(fmap, spec, basis_tgt, target)?.embed(p))
}

/// Renders a model trained on the source with the intrinsic embedding
/// replaced by its transfer to the target. No retraining.
pub fn render_transferred(model: &FieldModel, fmap: &FunctionalMap, basis_tgt: &EigenBasis, target: &TriMesh, camera: &Camera, background: [f32; 3]) -> Result<Rendering> {
    let EmbeddingSpec::Intrinsic(spec) = &model.meta.embedding else {
        return Err(Error::invalid("only intrinsic fields can be transferred"));
    };
    if let Some(h) = &model.meta.basis_hash {
        if *h != fmap.source_basis_hash {
            return Err(Error::HashMismatch {
                expected: h.clone(),
                found: fmap.source_basis_hash.clone(),
            });
        }
    }
    let emb = TransferredEmbedding::new(fmap, spec, basis_tgt, target)?;
    let field = NeuralField::with_embedding(model, Box::new(emb))?;
    render_view(&field, target, camera, background)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::IntrinsicEmbedding;
    use crate::mesh::rotation;
    use crate::mesh::shapes::icosphere;

    fn sphere_and_basis(subdiv: u32, d: usize) -> (TriMesh, EigenBasis) {
        let m = icosphere(subdiv, 1.0);
        let b = EigenBasis::compute(&m, d, 0).unwrap().bound_to(&m);
        (m, b)
    }

    #[test]
    fn identity_map_is_identity() {
        let (m, b) = sphere_and_basis(2, 16);
        let p = Correspondence::identity(&m);
        let c = fmap_from_p2p(&p, &m, &b, &m, &b, Projection::MassWeighted).unwrap();
        assert!((c.c - DMatrix::identity(16, 16)).amax() < 1e-6);
    }

    #[test]
    fn sign_flip_shows_up_in_the_map() {
        let (m, b) = sphere_and_basis(2, 9);
        let mut phis = b.phis().to_vec();
        for v in 0..b.n() {
            phis[v * 9 + 1] = -phis[v * 9 + 1];
        }
        let flipped = EigenBasis::from_parts(b.lambdas().to_vec(), phis, b.mass().to_vec(), b.mesh_hash().to_string()).unwrap();
        let c = fmap_from_p2p(&Correspondence::identity(&m), &m, &b, &m, &flipped, Projection::MassWeighted).unwrap();
        let mut expect = DMatrix::identity(9, 9);
        expect[(1, 1)] = -1.0;
        assert!((c.c - expect).amax() < 1e-6);
    }

    #[test]
    fn rigid_rotation_gives_orthogonal_blocks_and_matching_embeddings() {
        let (m, b) = sphere_and_basis(3, 16);
        let rot = rotation(Vec3::new(0.3, -1.0, 0.5), 1.1);
        let t = m.transformed(&rot, &Vec3::zeros());
        let bt = EigenBasis::compute(&t, 16, 7).unwrap().bound_to(&t);
        let map: Vec<usize> = (0..m.num_vertices()).collect();
        let p = Correspondence::from_vertex_map(&m, &map).unwrap().bound_to(&m, &t);
        let c = fmap_from_p2p(&p, &m, &b, &t, &bt, Projection::MassWeighted).unwrap();
        for g in b.degenerate_groups(1e-6) {
            let block = c.c.view((g.start, g.start), (g.len(), g.len()));
            let err = (block.transpose() * block - DMatrix::identity(g.len(), g.len())).amax();
            assert!(err < 1e-3, "group {g:?}: {err}");
        }
        let spec = IntrinsicSpec::ones(16);
        let src = IntrinsicEmbedding::new(&spec, &b, &m).unwrap();
        let emb = TransferredEmbedding::new(&c, &spec, &bt, &t).unwrap();
        let tp = t.vertex_points();
        let sp = m.vertex_points();
        let mut worst: f64 = 0.0;
        for v in (0..m.num_vertices()).step_by(5) {
            for (a, b) in emb.embed(&tp[v]).iter().zip(src.embed(&sp[v])) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn transfer_is_linear_in_the_map_and_trivial_cases_hold() {
        let (m, b) = sphere_and_basis(2, 9);
        let spec = IntrinsicSpec::new(vec![1.0, 2.0, 2.0, 2.0, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
        let id = FunctionalMap::identity(&b);
        let pts = m.vertex_points();
        let direct = IntrinsicEmbedding::new(&spec, &b, &m).unwrap();
        let q = m.surface_point(17, [0.2, 0.3, 0.5]);
        for p in [pts[3], pts[40], q] {
            assert_eq!(transfer_embedding(&id, &spec, &b, &m, &p).unwrap(), direct.embed(&p));
        }
        let zero = FunctionalMap {
            c: DMatrix::zeros(9, 9),
            ..id.clone()
        };
        assert!(transfer_embedding(&zero, &spec, &b, &m, &q).unwrap().iter().all(|&v| v == 0.0));
        let c1 = FunctionalMap {
            c: DMatrix::from_fn(9, 9, |i, j| ((i * 3 + j * 7) % 5) as f64 * 0.25 - 0.5),
            ..id.clone()
        };
        let c2 = FunctionalMap {
            c: DMatrix::from_fn(9, 9, |i, j| ((i + 2 * j) % 3) as f64 * 0.5),
            ..id.clone()
        };
        let alpha = 0.75;
        let combo = FunctionalMap {
            c: &c1.c * alpha + &c2.c,
            ..id
        };
        let lhs = transfer_embedding(&combo, &spec, &b, &m, &q).unwrap();
        let e1 = transfer_embedding(&c1, &spec, &b, &m, &q).unwrap();
        let e2 = transfer_embedding(&c2, &spec, &b, &m, &q).unwrap();
        for k in 0..9 {
            assert!((lhs[k] - (alpha * e1[k] + e2[k])).abs() < 1e-12);
        }
        assert!(TransferredEmbedding::new(&c1, &IntrinsicSpec::ones(8), &b, &m).is_err());
    }

    #[test]
    fn maps_compose_over_permutations() {
        let (a, ba) = sphere_and_basis(2, 16);
        let n = a.num_vertices();
        let s1: Vec<usize> = (0..n).map(|i| (i * 37 + 11) % n).collect();
        let s2: Vec<usize> = (0..n).map(|i| (i * 101 + 5) % n).collect();
        let bm = a.permuted(&s1).unwrap();
        let cm = bm.permuted(&s2).unwrap();
        let bb = EigenBasis::compute(&bm, 16, 1).unwrap().bound_to(&bm);
        let bc = EigenBasis::compute(&cm, 16, 2).unwrap().bound_to(&cm);
        // new vertex i of B is old vertex s1[i] of A
        let p_ab = Correspondence::from_vertex_map(&a, &s1).unwrap();
        let p_bc = Correspondence::from_vertex_map(&bm, &s2).unwrap();
        let s12: Vec<usize> = s2.iter().map(|&i| s1[i]).collect();
        let p_ac = Correspondence::from_vertex_map(&a, &s12).unwrap();
        let f = |p: &Correspondence, sm: &TriMesh, sb: &EigenBasis, tm: &TriMesh, tb: &EigenBasis| {
            fmap_from_p2p(p, sm, sb, tm, tb, Projection::MassWeighted).unwrap().c
        };
        let ab = f(&p_ab, &a, &ba, &bm, &bb);
        let bc_ = f(&p_bc, &bm, &bb, &cm, &bc);
        let ac = f(&p_ac, &a, &ba, &cm, &bc);
        assert!((ac - bc_ * ab).amax() < 1e-3);
    }

    #[test]
    fn correspondence_validation_and_container() {
        let (m, _) = sphere_and_basis(1, 4);
        let mut p = Correspondence::identity(&m);
        p.validate(&m, &m).unwrap();
        let bytes = p.to_bytes().unwrap();
        assert_eq!(&bytes[..8], b"INFP2P\0\0");
        assert_eq!(Correspondence::from_bytes(&bytes).unwrap(), p);
        assert!(Correspondence::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        p.entries[0].1 = [0.5, 0.6, 0.0];
        assert!(p.validate(&m, &m).is_err());
        p.entries[0].1 = [1.2, -0.2, 0.0];
        assert!(p.validate(&m, &m).is_err());
        p.entries.pop();
        assert!(p.validate(&m, &m).is_err());
        let other = icosphere(1, 2.0);
        assert!(matches!(
            Correspondence::identity(&m).validate(&m, &other),
            Err(Error::HashMismatch { .. })
        ));
    }

    #[test]
    fn radial_map_between_remeshes() {
        let src = icosphere(3, 1.0);
        let tgt = crate::mesh::shapes::irregular_sphere(14, 28, 1.0, 3);
        let p = radial_correspondence(&src, &tgt, Vec3::zeros()).unwrap();
        p.validate(&src, &tgt).unwrap();
        for (i, (face, bary)) in p.entries.iter().enumerate() {
            let x = src.interpolate(*face, bary);
            assert!((x.normalize() - tgt.vertices()[i].normalize()).norm() < 1e-9);
        }
    }
}
