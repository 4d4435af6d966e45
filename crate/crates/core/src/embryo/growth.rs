//! Growth events.
//!
//! A child is produced from its parent by a seeded sequence of local
//! surface events. Each event picks a site (area-weighted over the surface,
//! or near an earlier event for the interaction kinds), refines the face
//! patch around it until it is fine enough to carry a smooth bump, and
//! displaces the patch along its area-weighted normal with a cosine falloff
//! over a geodesic radius. A repair pass merges coincident vertices and
//! flips slivers; an event that still leaves an invalid mesh is resampled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mesh::{merge_map, DEGENERATE_AREA, DUPLICATE_TOLERANCE};
use super::{GrowthError, LineageTag, Mesh};
use crate::geom::{self, Vec3};
use crate::seed::keyed_rng;

/// Geodesic patch radius as a fraction of the bounding-sphere radius.
pub const PATCH_RADIUS_FRACTION: f64 = 0.15;
/// Resampling attempts per event after the first one fails.
pub const MAX_EVENT_RETRIES: usize = 8;

const MAX_REFINE_LEVELS: usize = 5;
/// Halvings of a folding displacement before the attempt fails.
const MAX_DAMPING: usize = 3;
/// Patch refinement stops once every patch edge is at most radius / this.
const EDGE_DIVISOR: f64 = 3.0;
/// Faces below this shape quality (1 = equilateral) are slivers.
const SLIVER_QUALITY: f64 = 1e-3;

const ORDER_KEY: u64 = 0x6f_7264_6572;
const EVENT_KEY: u64 = 0x65_7665_6e74;

/// Event counts per generation. The hydro counts must stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GrowthParams {
    pub threshold_growth: u32,
    pub interaction_growth: u32,
    pub shrinkage_pcd: u32,
    pub shrinkage_pcd_interaction: u32,
    pub hydro_pcd: u32,
    pub hydro_interaction_pcd: u32,
}

impl GrowthParams {
    pub const PARENT_GENERATION: GrowthParams = GrowthParams {
        threshold_growth: 6,
        interaction_growth: 6,
        shrinkage_pcd: 4,
        shrinkage_pcd_interaction: 6,
        hydro_pcd: 0,
        hydro_interaction_pcd: 0,
    };

    pub const SECOND_GENERATION: GrowthParams = GrowthParams {
        threshold_growth: 3,
        interaction_growth: 0,
        shrinkage_pcd: 0,
        shrinkage_pcd_interaction: 2,
        hydro_pcd: 0,
        hydro_interaction_pcd: 0,
    };

    pub fn validate(&self) -> Result<(), GrowthError> {
        if self.hydro_pcd != 0 || self.hydro_interaction_pcd != 0 {
            return Err(GrowthError::InvalidParams(
                "hydro PCD counts are not supported and must be 0".into(),
            ));
        }
        Ok(())
    }

    pub fn total_events(&self) -> u32 {
        self.threshold_growth + self.interaction_growth + self.shrinkage_pcd + self.shrinkage_pcd_interaction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    ThresholdGrowth,
    InteractionGrowth,
    ShrinkagePcd,
    ShrinkagePcdInteraction,
}

impl EventKind {
    fn name(self) -> &'static str {
        match self {
            EventKind::ThresholdGrowth => "threshold growth",
            EventKind::InteractionGrowth => "interaction growth",
            EventKind::ShrinkagePcd => "shrinkage PCD",
            EventKind::ShrinkagePcdInteraction => "shrinkage PCD interaction",
        }
    }

    fn targets_prior_events(self) -> bool {
        matches!(self, EventKind::InteractionGrowth | EventKind::ShrinkagePcdInteraction)
    }
}

/// Grows a child of `parent`. Identical inputs give bit-identical output.
///
/// The child keeps the parent's category and gets `generation + 1`; its
/// object id defaults to `<parent id>.<seed hex>` and is usually replaced
/// by the caller.
pub fn grow(parent: &Mesh, params: &GrowthParams, seed: u64) -> Result<Mesh, GrowthError> {
    parent.validate().map_err(GrowthError::InvalidParent)?;
    params.validate()?;

    let mut kinds = Vec::with_capacity(params.total_events() as usize);
    kinds.extend(std::iter::repeat_n(EventKind::ThresholdGrowth, params.threshold_growth as usize));
    kinds.extend(std::iter::repeat_n(EventKind::InteractionGrowth, params.interaction_growth as usize));
    kinds.extend(std::iter::repeat_n(EventKind::ShrinkagePcd, params.shrinkage_pcd as usize));
    kinds.extend(std::iter::repeat_n(
        EventKind::ShrinkagePcdInteraction,
        params.shrinkage_pcd_interaction as usize,
    ));
    kinds.shuffle(&mut keyed_rng(seed, &[ORDER_KEY]));

    let mut mesh = parent.clone();
    let mut sites: Vec<Vec3> = Vec::new();
    for (event, &kind) in kinds.iter().enumerate() {
        let mut last = String::new();
        let mut applied = false;
        for attempt in 0..=MAX_EVENT_RETRIES {
            let mut rng = keyed_rng(seed, &[EVENT_KEY, event as u64, attempt as u64]);
            match apply_event(&mesh, kind, &sites, &mut rng) {
                Ok((next, site)) => {
                    mesh = next;
                    sites.push(site);
                    applied = true;
                    break;
                }
                Err(msg) => last = msg,
            }
        }
        if !applied {
            return Err(GrowthError::EventFailed {
                event,
                kind: kind.name(),
                attempts: MAX_EVENT_RETRIES + 1,
                last,
            });
        }
    }

    mesh.lineage = LineageTag {
        generation: parent.lineage.generation + 1,
        parent_id: Some(parent.lineage.object_id.clone()),
        object_id: format!("{}.{:016x}", parent.lineage.object_id, seed),
        category: parent.lineage.category,
        seed,
    };
    Ok(mesh)
}

fn apply_event(
    mesh: &Mesh,
    kind: EventKind,
    sites: &[Vec3],
    rng: &mut ChaCha8Rng,
) -> Result<(Mesh, Vec3), String> {
    let (_, bs_radius) = mesh.bounding_sphere();
    let radius = PATCH_RADIUS_FRACTION * bs_radius;

    let candidates: Vec<usize> = if kind.targets_prior_events() && !sites.is_empty() {
        let anchor = sites[rng.random_range(0..sites.len())];
        let near: Vec<usize> = (0..mesh.faces.len())
            .filter(|&f| geom::dist(mesh.face_centroid(f), anchor) <= 2.0 * radius)
            .collect();
        if near.is_empty() {
            vec![nearest_face(mesh, anchor)]
        } else {
            near
        }
    } else {
        (0..mesh.faces.len()).collect()
    };
    let mut site_face = sample_area_weighted(mesh, &candidates, rng);
    let site = sample_in_face(mesh, site_face, rng);

    let mut work = mesh.clone();
    let mut dist;
    let mut level = 0;
    loop {
        let adjacency = vertex_adjacency(&work);
        dist = geodesic_distances(&work, &adjacency, site_face, site, 1.5 * radius);
        // Only patch faces still coarser than the target edge length split.
        let coarse: Vec<bool> = (0..work.faces.len())
            .map(|f| {
                (f == site_face || work.faces[f].iter().any(|&v| dist[v as usize] < radius))
                    && longest_edge(&work, f) > radius / EDGE_DIVISOR
            })
            .collect();
        if !coarse.contains(&true) || level == MAX_REFINE_LEVELS {
            break;
        }
        let (refined, parents) = refine(&work, &coarse);
        site_face = (0..refined.faces.len())
            .filter(|&f| parents[f] == site_face)
            .min_by(|&a, &b| {
                let [pa, pb, pc] = refined.face_points(a);
                let [qa, qb, qc] = refined.face_points(b);
                geom::point_triangle_distance(site, pa, pb, pc)
                    .total_cmp(&geom::point_triangle_distance(site, qa, qb, qc))
            })
            .expect("refined face has children");
        work = refined;
        level += 1;
    }

    let affected: Vec<usize> = (0..work.faces.len())
        .filter(|&f| work.faces[f].iter().any(|&v| dist[v as usize] < radius))
        .collect();
    let mut normal_sum = [0.0; 3];
    for &f in &affected {
        let [a, b, c] = work.face_points(f);
        normal_sum = geom::add(normal_sum, geom::tri_cross(a, b, c));
    }
    let normal = geom::normalize(normal_sum).ok_or("patch normal vanishes")?;

    let amplitude = match kind {
        EventKind::ThresholdGrowth => radius * rng.random_range(0.8..1.5),
        EventKind::InteractionGrowth => {
            let curvature = patch_curvature(&work, &dist, radius) * bs_radius;
            radius * rng.random_range(0.6..1.2) * (0.5 + curvature.min(4.0) / 4.0)
        }
        EventKind::ShrinkagePcd | EventKind::ShrinkagePcdInteraction => {
            -radius * rng.random_range(0.25..0.5)
        }
    };

    let before: Vec<Vec3> = affected
        .iter()
        .map(|&f| {
            let [a, b, c] = work.face_points(f);
            geom::tri_cross(a, b, c)
        })
        .collect();
    // A displacement that folds a face is damped before the event is
    // given up on.
    let rest = work.vertices.clone();
    let mut scale = 1.0;
    for damping in 0..=MAX_DAMPING {
        for (v, &d) in dist.iter().enumerate() {
            if d < radius {
                let falloff = 0.5 * (1.0 + (std::f64::consts::PI * d / radius).cos());
                work.vertices[v] = geom::add(rest[v], geom::scale(normal, scale * amplitude * falloff));
            }
        }
        let folded = affected.iter().zip(&before).find(|(&f, old)| {
            let [a, b, c] = work.face_points(f);
            let new = geom::tri_cross(a, b, c);
            geom::dot(new, **old) <= 0.0 || 0.5 * geom::norm(new) <= DEGENERATE_AREA
        });
        match folded {
            None => break,
            Some((&f, _)) if damping == MAX_DAMPING => return Err(format!("face {f} folded over")),
            Some(_) => scale *= 0.5,
        }
    }

    repair(&mut work)?;
    work.validate().map_err(|e| e.to_string())?;
    Ok((work, site))
}

fn nearest_face(mesh: &Mesh, p: Vec3) -> usize {
    (0..mesh.faces.len())
        .min_by(|&a, &b| {
            let [a0, a1, a2] = mesh.face_points(a);
            let [b0, b1, b2] = mesh.face_points(b);
            geom::point_triangle_distance(p, a0, a1, a2)
                .total_cmp(&geom::point_triangle_distance(p, b0, b1, b2))
        })
        .expect("mesh has faces")
}

fn sample_area_weighted(mesh: &Mesh, candidates: &[usize], rng: &mut ChaCha8Rng) -> usize {
    let mut cumulative = Vec::with_capacity(candidates.len());
    let mut total = 0.0;
    for &f in candidates {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    let u = rng.random::<f64>() * total;
    let idx = cumulative.partition_point(|&c| c <= u).min(candidates.len() - 1);
    candidates[idx]
}

fn sample_in_face(mesh: &Mesh, f: usize, rng: &mut ChaCha8Rng) -> Vec3 {
    let [a, b, c] = mesh.face_points(f);
    let s = rng.random::<f64>().sqrt();
    let t = rng.random::<f64>();
    let wa = 1.0 - s;
    let wb = s * (1.0 - t);
    let wc = s * t;
    [
        wa * a[0] + wb * b[0] + wc * c[0],
        wa * a[1] + wb * b[1] + wc * c[1],
        wa * a[2] + wb * b[2] + wc * c[2],
    ]
}

fn longest_edge(mesh: &Mesh, f: usize) -> f64 {
    let [a, b, c] = mesh.face_points(f);
    geom::dist(a, b).max(geom::dist(b, c)).max(geom::dist(c, a))
}

fn vertex_adjacency(mesh: &Mesh) -> Vec<Vec<u32>> {
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); mesh.vertices.len()];
    for &[a, b, c] in &mesh.faces {
        for (x, y) in [(a, b), (b, c), (c, a)] {
            adj[x as usize].push(y);
            adj[y as usize].push(x);
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

#[derive(PartialEq)]
struct Frontier(f64, u32);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then index
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Edge-graph distances from a point inside `face`, seeded with the
/// straight-line distance to that face's corners. Vertices beyond `limit`
/// stay at infinity.
fn geodesic_distances(mesh: &Mesh, adjacency: &[Vec<u32>], face: usize, site: Vec3, limit: f64) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; mesh.vertices.len()];
    let mut heap = BinaryHeap::new();
    for &v in &mesh.faces[face] {
        let d = geom::dist(mesh.vertices[v as usize], site);
        if d < dist[v as usize] {
            dist[v as usize] = d;
            heap.push(Frontier(d, v));
        }
    }
    while let Some(Frontier(d, v)) = heap.pop() {
        if d > dist[v as usize] || d > limit {
            continue;
        }
        let pv = mesh.vertices[v as usize];
        for &n in &adjacency[v as usize] {
            let nd = d + geom::dist(pv, mesh.vertices[n as usize]);
            if nd < dist[n as usize] && nd <= limit {
                dist[n as usize] = nd;
                heap.push(Frontier(nd, n));
            }
        }
    }
    dist
}

/// Mean absolute normal curvature estimate (umbrella operator) over the
/// patch vertices.
fn patch_curvature(mesh: &Mesh, dist: &[f64], radius: f64) -> f64 {
    let adjacency = vertex_adjacency(mesh);
    let mut vertex_normals = vec![[0.0; 3]; mesh.vertices.len()];
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.face_points(f);
        let n = geom::tri_cross(a, b, c);
        for &v in &mesh.faces[f] {
            vertex_normals[v as usize] = geom::add(vertex_normals[v as usize], n);
        }
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (v, &d) in dist.iter().enumerate() {
        if d >= radius || adjacency[v].is_empty() {
            continue;
        }
        let Some(n) = geom::normalize(vertex_normals[v]) else { continue };
        let p = mesh.vertices[v];
        let k = adjacency[v].len() as f64;
        let mut centroid = [0.0; 3];
        let mut edge_sq = 0.0;
        for &u in &adjacency[v] {
            let q = mesh.vertices[u as usize];
            centroid = geom::add(centroid, q);
            edge_sq += geom::dot(geom::sub(q, p), geom::sub(q, p));
        }
        let umbrella = geom::sub(geom::scale(centroid, 1.0 / k), p);
        let mean_edge_sq = edge_sq / k;
        if mean_edge_sq > 0.0 {
            total += 2.0 * geom::dot(umbrella, n).abs() / mean_edge_sq;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

#[inline]
fn edge_key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

/// Red-green refinement of the marked faces. Marked faces split 1-to-4;
/// unmarked faces with one split edge are bisected to stay conforming, and
/// any face with two or more split edges is promoted to marked first.
/// Returns the refined mesh and, per new face, its source face index.
fn refine(mesh: &Mesh, marked: &[bool]) -> (Mesh, Vec<usize>) {
    let mut marked = marked.to_vec();
    let mut split: HashSet<(u32, u32)>;
    loop {
        split = HashSet::new();
        for (f, &m) in marked.iter().enumerate() {
            if m {
                let [a, b, c] = mesh.faces[f];
                split.insert(edge_key(a, b));
                split.insert(edge_key(b, c));
                split.insert(edge_key(c, a));
            }
        }
        let mut changed = false;
        for (f, m) in marked.iter_mut().enumerate() {
            if *m {
                continue;
            }
            let [a, b, c] = mesh.faces[f];
            let n = [edge_key(a, b), edge_key(b, c), edge_key(c, a)]
                .iter()
                .filter(|e| split.contains(e))
                .count();
            if n >= 2 {
                *m = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut mids: HashMap<(u32, u32), u32> = HashMap::with_capacity(split.len());
    for (f, &m) in marked.iter().enumerate() {
        if !m {
            continue;
        }
        let [a, b, c] = mesh.faces[f];
        for (x, y) in [(a, b), (b, c), (c, a)] {
            mids.entry(edge_key(x, y)).or_insert_with(|| {
                vertices.push(geom::midpoint(mesh.vertices[x as usize], mesh.vertices[y as usize]));
                (vertices.len() - 1) as u32
            });
        }
    }

    let mut faces = Vec::with_capacity(mesh.faces.len() + 3 * split.len());
    let mut parents = Vec::with_capacity(faces.capacity());
    for (f, &[a, b, c]) in mesh.faces.iter().enumerate() {
        let m = [
            mids.get(&edge_key(a, b)).copied(),
            mids.get(&edge_key(b, c)).copied(),
            mids.get(&edge_key(c, a)).copied(),
        ];
        match m {
            [Some(ab), Some(bc), Some(ca)] => {
                for t in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
                    faces.push(t);
                    parents.push(f);
                }
            }
            [None, None, None] => {
                faces.push([a, b, c]);
                parents.push(f);
            }
            _ => {
                // exactly one split edge after closure
                let rot = [[a, b, c], [b, c, a], [c, a, b]];
                let k = m.iter().position(Option::is_some).expect("one split edge");
                let [x, y, z] = rot[k];
                let mid = m[k].expect("split");
                faces.push([x, mid, z]);
                faces.push([mid, y, z]);
                parents.push(f);
                parents.push(f);
            }
        }
    }

    (
        Mesh {
            vertices,
            faces,
            lineage: mesh.lineage.clone(),
        },
        parents,
    )
}

/// Merges coincident vertices and flips the longest edge of sliver faces.
fn repair(mesh: &mut Mesh) -> Result<(), String> {
    let map = merge_map(&mesh.vertices, DUPLICATE_TOLERANCE);
    if map.iter().enumerate().any(|(i, &t)| t != i as u32) {
        for f in mesh.faces.iter_mut() {
            *f = f.map(|i| map[i as usize]);
        }
        mesh.faces.retain(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2]);
        mesh.compact();
    }

    for _pass in 0..3 {
        let mut edge_face: HashMap<(u32, u32), usize> = HashMap::with_capacity(mesh.faces.len() * 3);
        for (f, &[a, b, c]) in mesh.faces.iter().enumerate() {
            edge_face.insert((a, b), f);
            edge_face.insert((b, c), f);
            edge_face.insert((c, a), f);
        }
        let mut touched = vec![false; mesh.faces.len()];
        let mut flipped = 0usize;
        for f in 0..mesh.faces.len() {
            if touched[f] || face_quality(mesh, f) >= SLIVER_QUALITY {
                continue;
            }
            let tri = mesh.faces[f];
            let pts = mesh.face_points(f);
            let k = (0..3)
                .max_by(|&i, &j| {
                    geom::dist(pts[i], pts[(i + 1) % 3]).total_cmp(&geom::dist(pts[j], pts[(j + 1) % 3]))
                })
                .expect("three edges");
            let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let Some(&g) = edge_face.get(&(b, a)) else {
                return Err("open edge during repair".into());
            };
            if touched[g] {
                continue;
            }
            let gt = mesh.faces[g];
            let d = gt.into_iter().find(|&v| v != a && v != b).expect("third vertex");
            if edge_face.contains_key(&(c, d)) || edge_face.contains_key(&(d, c)) {
                continue;
            }
            let (pa, pb, pc, pd) = (
                mesh.vertices[a as usize],
                mesh.vertices[b as usize],
                mesh.vertices[c as usize],
                mesh.vertices[d as usize],
            );
            let old = geom::add(geom::tri_cross(pa, pb, pc), geom::tri_cross(pb, pa, pd));
            let n1 = geom::tri_cross(pa, pd, pc);
            let n2 = geom::tri_cross(pd, pb, pc);
            if geom::dot(n1, old) <= 0.0 || geom::dot(n2, old) <= 0.0 {
                continue;
            }
            for (x, y) in [(a, b), (b, c), (c, a)] {
                edge_face.remove(&(x, y));
            }
            for (x, y) in [(gt[0], gt[1]), (gt[1], gt[2]), (gt[2], gt[0])] {
                edge_face.remove(&(x, y));
            }
            mesh.faces[f] = [a, d, c];
            mesh.faces[g] = [d, b, c];
            for (x, y) in [(a, d), (d, c), (c, a)] {
                edge_face.insert((x, y), f);
            }
            for (x, y) in [(d, b), (b, c), (c, d)] {
                edge_face.insert((x, y), g);
            }
            touched[f] = true;
            touched[g] = true;
            flipped += 1;
        }
        if flipped == 0 {
            break;
        }
    }
    Ok(())
}

/// 4*sqrt(3)*area / sum of squared edge lengths; 1 for equilateral.
fn face_quality(mesh: &Mesh, f: usize) -> f64 {
    let [a, b, c] = mesh.face_points(f);
    let s = geom::dot(geom::sub(a, b), geom::sub(a, b))
        + geom::dot(geom::sub(b, c), geom::sub(b, c))
        + geom::dot(geom::sub(c, a), geom::sub(c, a));
    if s <= 0.0 {
        return 0.0;
    }
    4.0 * 3f64.sqrt() * 0.5 * geom::norm(geom::tri_cross(a, b, c)) / s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embryo::icosahedron;

    #[test]
    fn zero_params_preserve_geometry() {
        let ico = icosahedron();
        let child = grow(&ico, &GrowthParams::default(), 99).unwrap();
        assert_eq!(child.vertices, ico.vertices);
        assert_eq!(child.faces, ico.faces);
        assert_eq!(child.lineage.generation, 1);
        assert_eq!(child.lineage.parent_id.as_deref(), Some("icosahedron"));
    }

    #[test]
    fn hydro_counts_rejected() {
        let params = GrowthParams {
            hydro_pcd: 1,
            ..GrowthParams::default()
        };
        assert!(matches!(
            grow(&icosahedron(), &params, 1),
            Err(GrowthError::InvalidParams(_))
        ));
    }

    #[test]
    fn invalid_parent_rejected() {
        let mut bad = icosahedron();
        bad.faces.pop();
        assert!(matches!(
            grow(&bad, &GrowthParams::SECOND_GENERATION, 1),
            Err(GrowthError::InvalidParent(_))
        ));
    }

    #[test]
    fn refine_full_mesh_is_loop_subdivision_topology() {
        let ico = icosahedron();
        let (fine, parents) = refine(&ico, &[true; 20]);
        assert_eq!(fine.faces.len(), 80);
        assert_eq!(fine.vertices.len(), 42);
        assert_eq!(parents.len(), 80);
        // midpoints sit inside the sphere, so validity holds but area shrinks
        fine.validate().unwrap();
    }

    #[test]
    fn refine_single_face_stays_conforming() {
        let ico = icosahedron();
        let mut marked = vec![false; 20];
        marked[0] = true;
        let (fine, _) = refine(&ico, &marked);
        // 4 children plus 3 bisected neighbours
        assert_eq!(fine.faces.len(), 20 - 1 + 4 - 3 + 6);
        fine.validate().unwrap();
    }

    #[test]
    fn each_event_kind_keeps_mesh_valid() {
        let ico = icosahedron();
        for (i, params) in [
            GrowthParams { threshold_growth: 2, ..Default::default() },
            GrowthParams { interaction_growth: 2, ..Default::default() },
            GrowthParams { shrinkage_pcd: 2, ..Default::default() },
            GrowthParams { shrinkage_pcd_interaction: 2, ..Default::default() },
        ]
        .iter()
        .enumerate()
        {
            let child = grow(&ico, params, 1000 + i as u64).unwrap();
            child.validate().unwrap();
            assert_eq!(child.euler_characteristic(), 2);
        }
    }

    #[test]
    fn growth_increases_volume_and_shrinkage_decreases_it() {
        let ico = icosahedron();
        let grown = grow(&ico, &GrowthParams { threshold_growth: 1, ..Default::default() }, 5).unwrap();
        assert!(grown.signed_volume() > ico.signed_volume());
        let shrunk = grow(&ico, &GrowthParams { shrinkage_pcd: 1, ..Default::default() }, 5).unwrap();
        assert!(shrunk.signed_volume() < ico.signed_volume());
    }
}
