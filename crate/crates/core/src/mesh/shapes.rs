//! Procedural test geometry.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TriMesh, Vec3};

/// Subdivided icosahedron projected onto a sphere.
/// Level `s` has `10 * 4^s + 2` vertices.
pub fn icosphere(subdivisions: u32, radius: f64) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    TriMesh::new_surface(vertices, faces).expect("icosphere is valid")
}

/// Closed surface of revolution around the z axis from a profile
/// `t in [0, pi] -> (rho, z)` with `rho(0) = rho(pi) = 0`.
fn revolve(rings: usize, segments: usize, profile: impl Fn(f64) -> (f64, f64), mut jitter: impl FnMut(usize, usize) -> (f64, f64)) -> TriMesh {
    assert!(rings >= 2 && segments >= 3);
    let (_, z0) = profile(0.0);
    let (_, z1) = profile(PI);
    let mut vertices = vec![Vec3::new(0.0, 0.0, z0)];
    for i in 1..rings {
        for j in 0..segments {
            let (dt, dp) = jitter(i, j);
            let t = PI * (i as f64 + dt) / rings as f64;
            let phi = TAU * (j as f64 + dp) / segments as f64;
            let (rho, z) = profile(t);
            vertices.push(Vec3::new(rho * phi.cos(), rho * phi.sin(), z));
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, z1));
    let south = vertices.len() - 1;
    let ring = |i: usize, j: usize| 1 + (i - 1) * segments + j % segments;
    let mut faces = Vec::new();
    for j in 0..segments {
        faces.push([0, ring(1, j + 1), ring(1, j)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segments {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                faces.push([a, b, d]);
                faces.push([a, d, c]);
            } else {
                faces.push([a, b, c]);
                faces.push([b, d, c]);
            }
        }
    }
    for j in 0..segments {
        faces.push([south, ring(rings - 1, j), ring(rings - 1, j + 1)]);
    }
    TriMesh::new_surface(vertices, faces).expect("surface of revolution is valid")
}

/// Irregular latitude/longitude triangulation of the sphere, with ring and
/// vertex positions jittered. Its connectivity is unrelated to
/// [`icosphere`], so it serves as an independent remesh of the same surface.
pub fn irregular_sphere(rings: usize, segments: usize, radius: f64, seed: u64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ring_shift: Vec<f64> = (0..rings).map(|_| rng.random_range(-0.25..0.25)).collect();
    let ring_phase: Vec<f64> = (0..rings).map(|_| rng.random_range(-0.3..0.3)).collect();
    revolve(
        rings,
        segments,
        |t| (radius * t.sin(), radius * t.cos()),
        |i, _| {
            let dt = ring_shift[i] + rng.random_range(-0.15..0.15);
            let dp = ring_phase[i] + rng.random_range(-0.2..0.2);
            (dt, dp)
        },
    )
}

/// Two bulbs joined by a thin neck; a closed, non-uniform test surface.
pub fn dumbbell(rings: usize, segments: usize) -> TriMesh {
    revolve(
        rings,
        segments,
        |t| {
            let neck = 1.0 - 0.65 * (-((t - PI / 2.0) / 0.3).powi(2)).exp();
            (0.8 * t.sin() * neck, -1.6 * t.cos())
        },
        |_, _| (0.0, 0.0),
    )
}

pub fn torus(major: f64, minor: f64, nu: usize, nv: usize) -> TriMesh {
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = TAU * i as f64 / nu as f64;
        for j in 0..nv {
            let v = TAU * j as f64 / nv as f64;
            let r = major + minor * v.cos();
            vertices.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let id = |i: usize, j: usize| (i % nu) * nv + j % nv;
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh::new_surface(vertices, faces).expect("torus is valid")
}

/// Square `[-size/2, size/2]^2` in the z = 0 plane, split into `n x n` cells.
pub fn grid_plane(n: usize, size: f64) -> TriMesh {
    let mut vertices = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let x = size * (j as f64 / n as f64 - 0.5);
            let y = size * (i as f64 / n as f64 - 0.5);
            vertices.push(Vec3::new(x, y, 0.0));
        }
    }
    let id = |i: usize, j: usize| i * (n + 1) + j;
    let mut faces = Vec::new();
    for i in 0..n {
        for j in 0..n {
            faces.push([id(i, j), id(i, j + 1), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i + 1, j)]);
        }
    }
    TriMesh::new_surface(vertices, faces).expect("plane is valid")
}

/// Regular `n`-gon in the z = 0 plane with the given perimeter.
pub fn circle(n: usize, circumference: f64) -> TriMesh {
    let radius = circumference / (2.0 * n as f64 * (PI / n as f64).sin());
    let vertices = (0..n)
        .map(|i| {
            let t = TAU * i as f64 / n as f64;
            Vec3::new(radius * t.cos(), radius * t.sin(), 0.0)
        })
        .collect();
    TriMesh::new_loop(vertices).expect("circle is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for (s, v, f) in [(0, 12, 20), (3, 642, 1280), (4, 2562, 5120)] {
            let m = icosphere(s, 1.0);
            assert_eq!((m.num_vertices(), m.faces().len()), (v, f));
        }
    }

    #[test]
    fn closed_generators_are_watertight() {
        for m in [icosphere(2, 1.0), irregular_sphere(20, 40, 1.0, 3), dumbbell(24, 32), torus(1.0, 0.3, 16, 8)] {
            assert!(m.edge_faces().values().all(|f| f.len() == 2));
        }
    }

    #[test]
    fn irregular_sphere_is_on_the_sphere() {
        let m = irregular_sphere(36, 72, 1.0, 11);
        assert!(m.vertices().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        let area: f64 = m.vertex_areas().iter().sum();
        assert!((area / (4.0 * PI) - 1.0).abs() < 0.01);
    }

    #[test]
    fn circle_perimeter() {
        let c = circle(256, TAU);
        assert!((c.total_measure() - TAU).abs() < 1e-9);
    }
}
