use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{LineageTag, MeshError};
use crate::geom::{self, Vec3};

/// Vertices closer than this (model units) count as duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// Faces at or below this area are degenerate.
pub(crate) const DEGENERATE_AREA: f64 = 1e-12;

/// Closed, outward-wound triangle surface with lineage metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub lineage: LineageTag,
}

/// Regular icosahedron with unit circumradius, generation 0.
pub fn icosahedron() -> Mesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw: [Vec3; 12] = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let vertices: Vec<Vec3> = raw
        .iter()
        .map(|&v| geom::normalize(v).expect("non-zero"))
        .collect();
    let mut faces: Vec<[u32; 3]> = vec![
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
    // Convex and centred on the origin: outward means normal . centroid > 0.
    for f in faces.iter_mut() {
        let [a, b, c] = f.map(|i| vertices[i as usize]);
        let centroid = geom::scale(geom::add(geom::add(a, b), c), 1.0 / 3.0);
        if geom::dot(geom::tri_cross(a, b, c), centroid) < 0.0 {
            f.swap(1, 2);
        }
    }
    Mesh {
        vertices,
        faces,
        lineage: LineageTag {
            generation: 0,
            parent_id: None,
            object_id: "icosahedron".to_string(),
            category: None,
            seed: 0,
        },
    }
}

impl Mesh {
    pub fn face_points(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].map(|i| self.vertices[i as usize])
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_points(f);
        0.5 * geom::norm(geom::tri_cross(a, b, c))
    }

    pub fn face_normal(&self, f: usize) -> Option<Vec3> {
        let [a, b, c] = self.face_points(f);
        geom::normalize(geom::tri_cross(a, b, c))
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.face_points(f);
        geom::scale(geom::add(geom::add(a, b), c), 1.0 / 3.0)
    }

    /// Divergence-theorem volume; positive for outward winding.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i as usize]);
                geom::dot(a, geom::cross(b, c))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(u32, u32)> = self
            .faces
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.faces.len() as i64
    }

    /// Centre of the axis-aligned bounding box and the largest vertex
    /// distance from it.
    pub fn bounding_sphere(&self) -> (Vec3, f64) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let centre = geom::midpoint(lo, hi);
        let radius = self
            .vertices
            .iter()
            .map(|&v| geom::dist(v, centre))
            .fold(0.0, f64::max);
        (centre, radius)
    }

    /// Checks every structural invariant: closed 2-manifold with
    /// consistent winding, no degenerate faces, no duplicate vertices,
    /// positive volume.
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.faces.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = self.vertices.len() as u32;
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(MeshError::NonFinite(i as u32));
            }
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= nv) {
                return Err(MeshError::BadIndex { face: fi, vertex: bad });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::RepeatedIndex(fi));
            }
        }
        check_edges(&self.faces)?;
        check_vertex_fans(&self.faces, self.vertices.len())?;
        for fi in 0..self.faces.len() {
            let area = self.face_area(fi);
            if area <= DEGENERATE_AREA {
                return Err(MeshError::Degenerate { face: fi, area });
            }
        }
        if let Some((a, b)) = find_duplicate_vertex(&self.vertices, DUPLICATE_TOLERANCE) {
            return Err(MeshError::DuplicateVertex(a, b));
        }
        let vol = self.signed_volume();
        if !(vol > 0.0) {
            return Err(MeshError::NonPositiveVolume(vol));
        }
        Ok(())
    }

    /// Drops vertices no face references, keeping the relative order of the
    /// rest.
    pub(crate) fn compact(&mut self) {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &i in f {
                used[i as usize] = true;
            }
        }
        if used.iter().all(|&u| u) {
            return;
        }
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut kept = Vec::with_capacity(self.vertices.len());
        for (i, v) in self.vertices.iter().enumerate() {
            if used[i] {
                remap[i] = kept.len() as u32;
                kept.push(*v);
            }
        }
        self.vertices = kept;
        for f in self.faces.iter_mut() {
            *f = f.map(|i| remap[i as usize]);
        }
    }
}

/// Every directed edge must occur once and its reverse once.
fn check_edges(faces: &[[u32; 3]]) -> Result<(), MeshError> {
    let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(faces.len() * 3);
    for &[a, b, c] in faces {
        for e in [(a, b), (b, c), (c, a)] {
            let n = directed.entry(e).or_insert(0);
            *n += 1;
            if *n > 1 {
                return Err(MeshError::NonManifoldEdge(e.0, e.1));
            }
        }
    }
    for &[a, b, c] in faces {
        for (x, y) in [(a, b), (b, c), (c, a)] {
            if !directed.contains_key(&(y, x)) {
                return Err(MeshError::NonManifoldEdge(x, y));
            }
        }
    }
    Ok(())
}

/// The link of every vertex must be one closed cycle.
fn check_vertex_fans(faces: &[[u32; 3]], nv: usize) -> Result<(), MeshError> {
    let mut link: Vec<Vec<(u32, u32)>> = vec![Vec::new(); nv];
    for &[a, b, c] in faces {
        link[a as usize].push((b, c));
        link[b as usize].push((c, a));
        link[c as usize].push((a, b));
    }
    for (v, edges) in link.iter().enumerate() {
        if edges.is_empty() {
            continue;
        }
        let next: HashMap<u32, u32> = edges.iter().copied().collect();
        if next.len() != edges.len() {
            return Err(MeshError::NonManifoldVertex(v as u32));
        }
        let start = edges[0].0;
        let mut cur = start;
        let mut steps = 0;
        loop {
            cur = match next.get(&cur) {
                Some(&n) => n,
                None => return Err(MeshError::NonManifoldVertex(v as u32)),
            };
            steps += 1;
            if cur == start || steps > edges.len() {
                break;
            }
        }
        if cur != start || steps != edges.len() {
            return Err(MeshError::NonManifoldVertex(v as u32));
        }
    }
    Ok(())
}

fn cell_key(v: Vec3, cell: f64) -> (i64, i64, i64) {
    (
        (v[0] / cell).floor() as i64,
        (v[1] / cell).floor() as i64,
        (v[2] / cell).floor() as i64,
    )
}

/// First pair (in index order) of vertices within `tol` of each other.
pub(crate) fn find_duplicate_vertex(vertices: &[Vec3], tol: f64) -> Option<(u32, u32)> {
    let cell = tol.max(1e-12) * 16.0;
    let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    for (i, &v) in vertices.iter().enumerate() {
        let (x, y, z) = cell_key(v, cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = grid.get(&(x + dx, y + dy, z + dz)) {
                        if let Some(&j) = bucket
                            .iter()
                            .find(|&&j| geom::dist(vertices[j as usize], v) <= tol)
                        {
                            return Some((j, i as u32));
                        }
                    }
                }
            }
        }
        grid.entry((x, y, z)).or_default().push(i as u32);
    }
    None
}

/// Maps every vertex to the lowest-index vertex within `tol` of it.
pub(crate) fn merge_map(vertices: &[Vec3], tol: f64) -> Vec<u32> {
    let cell = tol.max(1e-12) * 16.0;
    let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    let mut map = Vec::with_capacity(vertices.len());
    for (i, &v) in vertices.iter().enumerate() {
        let (x, y, z) = cell_key(v, cell);
        let mut target = i as u32;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = grid.get(&(x + dx, y + dy, z + dz)) {
                        for &j in bucket {
                            if geom::dist(vertices[j as usize], v) <= tol {
                                target = target.min(j);
                                if target == j {
                                    break 'search;
                                }
                            }
                        }
                    }
                }
            }
        }
        if target == i as u32 {
            grid.entry((x, y, z)).or_default().push(i as u32);
        }
        map.push(target);
    }
    map
}
