use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::mesh::{MeshKind, TriMesh};

/// Bound applied to each cotangent before it enters the Laplacian.
pub const COT_CLAMP: f64 = 1e6;

/// Cotangent stiffness matrix and lumped mass of a triangle mesh.
///
/// Off-diagonals are `-(cot a + cot b) / 2` for the two angles opposite each
/// edge; rows sum to zero. Negative edge weights from obtuse triangles are
/// kept.
pub fn cotan_laplacian(mesh: &TriMesh) -> Result<(CsrMatrix, Vec<f64>)> {
    if mesh.kind() != MeshKind::Surface {
        return Err(Error::invalid("cotan_laplacian needs a triangle mesh"));
    }
    let x = mesh.vertices();
    let n = x.len();
    let mut triplets = Vec::with_capacity(mesh.faces().len() * 12);
    for (fi, f) in mesh.faces().iter().enumerate() {
        for k in 0..3 {
            let (i, j, o) = (f[(k + 1) % 3], f[(k + 2) % 3], f[k]);
            let a = x[i] - x[o];
            let b = x[j] - x[o];
            let cross = a.cross(&b).norm();
            if cross <= 0.0 {
                return Err(Error::DegenerateFaces { faces: vec![fi] });
            }
            let w = 0.5 * (a.dot(&b) / cross).clamp(-COT_CLAMP, COT_CLAMP);
            triplets.push((i, j, -w));
            triplets.push((j, i, -w));
            triplets.push((i, i, w));
            triplets.push((j, j, w));
        }
    }
    Ok((CsrMatrix::from_triplets(n, triplets), mesh.vertex_areas()))
}

/// Chain Laplacian of a closed polyline: weights `1 / edge length`, mass
/// half the incident edge lengths.
pub fn polyline_laplacian(mesh: &TriMesh) -> Result<(CsrMatrix, Vec<f64>)> {
    if mesh.kind() != MeshKind::Loop {
        return Err(Error::invalid("polyline_laplacian needs a closed polyline"));
    }
    let n = mesh.num_vertices();
    let mut triplets = Vec::with_capacity(4 * n);
    for e in 0..n {
        let len = mesh.edge_length(e);
        if !(len > 0.0) {
            return Err(Error::DegenerateFaces { faces: vec![e] });
        }
        let (i, j) = (e, (e + 1) % n);
        let w = 1.0 / len;
        triplets.extend_from_slice(&[(i, j, -w), (j, i, -w), (i, i, w), (j, j, w)]);
    }
    Ok((CsrMatrix::from_triplets(n, triplets), mesh.vertex_areas()))
}

/// Dispatches on the mesh kind.
pub fn laplacian(mesh: &TriMesh) -> Result<(CsrMatrix, Vec<f64>)> {
    match mesh.kind() {
        MeshKind::Surface => cotan_laplacian(mesh),
        MeshKind::Loop => polyline_laplacian(mesh),
    }
}
