//! Icosahedron subdivision and nearest-vertex lookup.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Unit sphere discretized by repeated icosahedron subdivision.
///
/// The full sphere is stored (no antipodal folding). Vertex ordering is
/// deterministic: the 12 icosahedron vertices first, then edge midpoints in
/// face-traversal order, level by level.
#[derive(Debug, Clone)]
pub struct DiscretizedSphere {
    pub vertices: Vec<Vec3>,
    pub subdivision_level: u32,
    faces: Vec<[u32; 3]>,
    adjacency_offsets: Vec<u32>,
    adjacency: Vec<u32>,
}

const MAX_LEVEL: u32 = 7;

/// Subdivide a regular icosahedron `level` times, projecting every new vertex
/// to unit norm. Vertex count is 10 * 4^level + 2.
pub fn subdivide_icosahedron(level: u32) -> Result<DiscretizedSphere> {
    if level > MAX_LEVEL {
        return Err(Error::parameter(format!(
            "subdivision level {level} out of range 0..={MAX_LEVEL}"
        )));
    }
    let (mut vertices, mut faces) = icosahedron();
    for _ in 0..level {
        let mut midpoint_cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for [v0, v1, v2] in faces {
            let a = midpoint(&mut vertices, &mut midpoint_cache, v0, v1);
            let b = midpoint(&mut vertices, &mut midpoint_cache, v1, v2);
            let c = midpoint(&mut vertices, &mut midpoint_cache, v2, v0);
            next_faces.push([v0, a, c]);
            next_faces.push([v1, b, a]);
            next_faces.push([v2, c, b]);
            next_faces.push([a, b, c]);
        }
        faces = next_faces;
    }

    let (adjacency_offsets, adjacency) = build_adjacency(vertices.len(), &faces);
    Ok(DiscretizedSphere {
        vertices,
        subdivision_level: level,
        faces,
        adjacency_offsets,
        adjacency,
    })
}

impl DiscretizedSphere {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        let lo = self.adjacency_offsets[v] as usize;
        let hi = self.adjacency_offsets[v + 1] as usize;
        &self.adjacency[lo..hi]
    }

    /// Index of the vertex maximizing the dot product with `dir`.
    ///
    /// Greedy ascent along mesh edges: the vertices lie on a convex polytope
    /// and the objective is linear, so every edge-local maximum is global.
    pub fn nearest_vertex(&self, dir: Vec3) -> usize {
        self.nearest_vertex_hinted(dir, 0)
    }

    /// Same as [`nearest_vertex`](Self::nearest_vertex) but starts the walk at
    /// `hint`, which shortens the path when queries are spatially coherent.
    pub fn nearest_vertex_hinted(&self, dir: Vec3, hint: usize) -> usize {
        let mut cur = if hint < self.len() { hint } else { 0 };
        let mut cur_dot = self.vertices[cur].dot(dir);
        loop {
            let mut best = cur;
            let mut best_dot = cur_dot;
            for &nb in self.neighbors(cur) {
                let d = self.vertices[nb as usize].dot(dir);
                if d > best_dot {
                    best = nb as usize;
                    best_dot = d;
                }
            }
            if best == cur {
                return cur;
            }
            cur = best;
            cur_dot = best_dot;
        }
    }

    /// Per-vertex solid angle: one third of each incident spherical triangle.
    /// Sums to 4π over the whole sphere.
    pub fn vertex_solid_angles(&self) -> Vec<f64> {
        let mut weights = vec![0.0; self.len()];
        for &[a, b, c] in &self.faces {
            let area = spherical_triangle_area(
                self.vertices[a as usize],
                self.vertices[b as usize],
                self.vertices[c as usize],
            );
            weights[a as usize] += area / 3.0;
            weights[b as usize] += area / 3.0;
            weights[c as usize] += area / 3.0;
        }
        weights
    }
}

fn icosahedron() -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let t = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw = [
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
    ];
    let vertices = raw
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces)
}

fn midpoint(
    vertices: &mut Vec<Vec3>,
    cache: &mut HashMap<(u32, u32), u32>,
    a: u32,
    b: u32,
) -> u32 {
    let key = (a.min(b), a.max(b));
    if let Some(&idx) = cache.get(&key) {
        return idx;
    }
    let m = (vertices[a as usize] + vertices[b as usize]).normalized();
    let idx = vertices.len() as u32;
    vertices.push(m);
    cache.insert(key, idx);
    idx
}

fn build_adjacency(n: usize, faces: &[[u32; 3]]) -> (Vec<u32>, Vec<u32>) {
    let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &[a, b, c] in faces {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            lists[u as usize].push(v);
            lists[v as usize].push(u);
        }
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut flat = Vec::new();
    offsets.push(0);
    for list in &mut lists {
        list.sort_unstable();
        list.dedup();
        flat.extend_from_slice(list);
        offsets.push(flat.len() as u32);
    }
    (offsets, flat)
}

/// L'Huilier's theorem on the three angular side lengths.
fn spherical_triangle_area(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let sa = angle(b, c);
    let sb = angle(c, a);
    let sc = angle(a, b);
    let s = 0.5 * (sa + sb + sc);
    let t = (0.5 * s).tan()
        * (0.5 * (s - sa)).tan()
        * (0.5 * (s - sb)).tan()
        * (0.5 * (s - sc)).tan();
    4.0 * t.max(0.0).sqrt().atan()
}

fn angle(a: Vec3, b: Vec3) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}
