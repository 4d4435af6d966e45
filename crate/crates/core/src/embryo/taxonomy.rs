use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{grow, icosahedron, Category, GrowthParams, LineageTag, Mesh, TaxonomyError};
use crate::seed::derive_seed;

pub const CHILDREN_PER_PARENT: usize = 100;

/// Grows the full two-generation taxonomy from `master_seed`.
///
/// Returns the three generation-1 parents (Lauz, Puns, Eulf) followed by
/// their children, category by category. Every object's seed is keyed by
/// its lineage position, so the result does not depend on scheduling.
pub fn spawn_taxonomy(master_seed: u64) -> Result<Vec<Mesh>, TaxonomyError> {
    spawn_taxonomy_with(master_seed, CHILDREN_PER_PARENT)
}

pub fn spawn_taxonomy_with(master_seed: u64, children: usize) -> Result<Vec<Mesh>, TaxonomyError> {
    let ancestor = icosahedron();
    let parents: Vec<Mesh> = Category::ALL
        .par_iter()
        .map(|&category| {
            let position = format!("gen1/{}", category.slug());
            let seed = derive_seed(master_seed, &position);
            let mut mesh = grow(&ancestor, &GrowthParams::PARENT_GENERATION, seed)
                .map_err(|source| TaxonomyError::Growth { position, source })?;
            mesh.lineage.object_id = category.slug().to_string();
            mesh.lineage.category = Some(category);
            Ok(mesh)
        })
        .collect::<Result<_, TaxonomyError>>()?;

    let jobs: Vec<(usize, usize)> = (0..parents.len())
        .flat_map(|p| (0..children).map(move |c| (p, c)))
        .collect();
    let kids: Vec<Mesh> = jobs
        .par_iter()
        .map(|&(p, c)| {
            let parent = &parents[p];
            let position = format!("gen2/{}/{c:03}", parent.lineage.object_id);
            let seed = derive_seed(master_seed, &position);
            let mut mesh = grow(parent, &GrowthParams::SECOND_GENERATION, seed)
                .map_err(|source| TaxonomyError::Growth { position, source })?;
            mesh.lineage.object_id = format!("{}_{c:03}", parent.lineage.object_id);
            Ok(mesh)
        })
        .collect::<Result<_, TaxonomyError>>()?;

    let mut all = parents;
    all.extend(kids);
    Ok(all)
}

/// One line of `objects/taxonomy.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    #[serde(flatten)]
    pub lineage: LineageTag,
    pub path: String,
    pub vertices: usize,
    pub faces: usize,
}

/// Writes one OFF file per mesh under `out/objects/<category>/` plus the
/// JSON Lines taxonomy manifest.
pub fn write_taxonomy(meshes: &[Mesh], out: &Path) -> Result<Vec<TaxonomyEntry>, TaxonomyError> {
    let objects = out.join("objects");
    let mut entries = Vec::with_capacity(meshes.len());
    for mesh in meshes {
        let dir = match mesh.lineage.category {
            Some(c) => c.slug(),
            None => "ancestor",
        };
        let rel = format!("objects/{dir}/{}.off", mesh.lineage.object_id);
        let path = out.join(&rel);
        fs::create_dir_all(path.parent().expect("has parent"))?;
        write_off(mesh, &path)?;
        entries.push(TaxonomyEntry {
            lineage: mesh.lineage.clone(),
            path: rel,
            vertices: mesh.vertices.len(),
            faces: mesh.faces.len(),
        });
    }
    let mut w = BufWriter::new(fs::File::create(objects.join("taxonomy.jsonl"))?);
    for e in &entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(entries)
}

/// ASCII OFF with the lineage in a leading comment. Coordinates use the
/// shortest round-trip representation.
pub fn write_off(mesh: &Mesh, path: &Path) -> Result<(), TaxonomyError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "OFF")?;
    writeln!(w, "# lineage {}", serde_json::to_string(&mesh.lineage)?)?;
    writeln!(w, "{} {} 0", mesh.vertices.len(), mesh.faces.len())?;
    for v in &mesh.vertices {
        writeln!(w, "{:?} {:?} {:?}", v[0], v[1], v[2])?;
    }
    for f in &mesh.faces {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_off(path: &Path) -> Result<Mesh, TaxonomyError> {
    let text = fs::read_to_string(path)?;
    let mut lineage = None;
    let mut lines = text.lines().filter_map(|l| {
        let l = l.trim();
        if let Some(rest) = l.strip_prefix("# lineage ") {
            lineage = serde_json::from_str::<LineageTag>(rest).ok();
            None
        } else if l.is_empty() || l.starts_with('#') {
            None
        } else {
            Some(l.to_string())
        }
    });
    let bad = |m: &str| TaxonomyError::Off(m.to_string());
    if lines.next().as_deref() != Some("OFF") {
        return Err(bad("missing OFF header"));
    }
    let counts = lines.next().ok_or_else(|| bad("missing counts"))?;
    let nums: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad count")))
        .collect::<Result<_, _>>()?;
    if nums.len() < 2 {
        return Err(bad("bad counts line"));
    }
    let mut vertices = Vec::with_capacity(nums[0]);
    for _ in 0..nums[0] {
        let line = lines.next().ok_or_else(|| bad("truncated vertices"))?;
        let xyz: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad coordinate")))
            .collect::<Result<_, _>>()?;
        if xyz.len() != 3 {
            return Err(bad("vertex needs 3 coordinates"));
        }
        vertices.push([xyz[0], xyz[1], xyz[2]]);
    }
    let mut faces = Vec::with_capacity(nums[1]);
    for _ in 0..nums[1] {
        let line = lines.next().ok_or_else(|| bad("truncated faces"))?;
        let idx: Vec<u32> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad index")))
            .collect::<Result<_, _>>()?;
        if idx.len() != 4 || idx[0] != 3 {
            return Err(bad("only triangles are supported"));
        }
        faces.push([idx[1], idx[2], idx[3]]);
    }
    let lineage = lineage.ok_or_else(|| bad("missing lineage comment"))?;
    Ok(Mesh {
        vertices,
        faces,
        lineage,
    })
}
