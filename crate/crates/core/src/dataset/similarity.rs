use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetError, SsimPlane};
use crate::embryo::Category;

/// Initial-view rendering of one object.
#[derive(Debug, Clone)]
pub struct InitialRendering {
    pub object_id: String,
    pub category: Category,
    pub image: RgbImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySimilarity {
    pub category: Category,
    /// Row/column order of `matrix`.
    pub object_ids: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    /// Mean SSIM of each object to the other objects of its category.
    pub mean_similarity: Vec<f64>,
    /// Top half by mean similarity, most similar first.
    pub kept: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub categories: Vec<CategorySimilarity>,
}

impl SimilarityReport {
    pub fn category(&self, category: Category) -> Option<&CategorySimilarity> {
        self.categories.iter().find(|c| c.category == category)
    }

    pub fn kept(&self, category: Category) -> &[String] {
        self.category(category).map(|c| c.kept.as_slice()).unwrap_or(&[])
    }

    pub fn kept_count(&self) -> usize {
        self.categories.iter().map(|c| c.kept.len()).sum()
    }

    /// One CSV per category, `similarity_<slug>.csv`: a header row of
    /// object ids, then one row per object.
    pub fn write_csv(&self, dir: &Path) -> Result<(), DatasetError> {
        std::fs::create_dir_all(dir)?;
        for cat in &self.categories {
            let mut w = csv::Writer::from_path(dir.join(format!("similarity_{}.csv", cat.category.slug())))?;
            let mut header = vec!["object_id".to_string()];
            header.extend(cat.object_ids.iter().cloned());
            w.write_record(&header)?;
            for (id, row) in cat.object_ids.iter().zip(&cat.matrix) {
                let mut rec = vec![id.clone()];
                rec.extend(row.iter().map(|v| format!("{v:.9}")));
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

/// Ranks the objects of each category by mean SSIM to the other objects of
/// that category and keeps the top half. Ties break on object id.
pub fn filter_coherent(renderings: &[InitialRendering]) -> Result<SimilarityReport, DatasetError> {
    let mut seen = HashSet::new();
    for r in renderings {
        if !seen.insert(r.object_id.as_str()) {
            return Err(DatasetError::DuplicateObject(r.object_id.clone()));
        }
    }
    let mut by_cat: BTreeMap<Category, Vec<&InitialRendering>> = BTreeMap::new();
    for r in renderings {
        by_cat.entry(r.category).or_default().push(r);
    }
    let mut categories = Vec::with_capacity(3);
    for category in Category::ALL {
        let Some(mut members) = by_cat.remove(&category) else {
            return Err(DatasetError::MissingRendering(category));
        };
        members.sort_by(|a, b| a.object_id.cmp(&b.object_id));
        categories.push(rank_category(category, &members)?);
    }
    Ok(SimilarityReport { categories })
}

fn rank_category(category: Category, members: &[&InitialRendering]) -> Result<CategorySimilarity, DatasetError> {
    let n = members.len();
    let planes: Vec<SsimPlane> = members
        .par_iter()
        .map(|r| SsimPlane::new(&r.image))
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| planes[i].ssim(&planes[j]))
        .collect::<Result<_, _>>()?;

    let mut matrix = vec![vec![1.0; n]; n];
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        matrix[i][j] = v;
        matrix[j][i] = v;
    }
    let mean_similarity: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                1.0
            } else {
                (0..n).filter(|&j| j != i).map(|j| matrix[i][j]).sum::<f64>() / (n - 1) as f64
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        mean_similarity[b]
            .total_cmp(&mean_similarity[a])
            .then_with(|| members[a].object_id.cmp(&members[b].object_id))
    });
    let kept = order[..n / 2].iter().map(|&i| members[i].object_id.clone()).collect();
    Ok(CategorySimilarity {
        category,
        object_ids: members.iter().map(|r| r.object_id.clone()).collect(),
        matrix,
        mean_similarity,
        kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn blob(object_id: &str, category: Category, cx: u32, r: u32) -> InitialRendering {
        let image = RgbImage::from_fn(32, 32, |x, y| {
            let (dx, dy) = (x as i32 - cx as i32, y as i32 - 16);
            if (dx * dx + dy * dy) as u32 <= r * r {
                Rgb([200, 200, 200])
            } else {
                Rgb([128, 128, 128])
            }
        });
        InitialRendering {
            object_id: object_id.into(),
            category,
            image,
        }
    }

    fn fixture() -> Vec<InitialRendering> {
        let mut out = Vec::new();
        for cat in Category::ALL {
            for k in 0..4u32 {
                out.push(blob(&format!("{}_{k}", cat.slug()), cat, 8 + 4 * k, 3 + k));
            }
        }
        out
    }

    #[test]
    fn keeps_half_and_matrix_is_symmetric() {
        let report = filter_coherent(&fixture()).unwrap();
        assert_eq!(report.kept_count(), 6);
        for c in &report.categories {
            assert_eq!(c.kept.len(), 2);
            for i in 0..4 {
                assert_eq!(c.matrix[i][i], 1.0);
                for j in 0..4 {
                    assert_eq!(c.matrix[i][j], c.matrix[j][i]);
                }
            }
        }
    }

    #[test]
    fn missing_category_is_an_error() {
        let only_lauz: Vec<_> = fixture().into_iter().filter(|r| r.category == Category::Lauz).collect();
        assert!(matches!(filter_coherent(&only_lauz), Err(DatasetError::MissingRendering(Category::Puns))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut f = fixture();
        f.push(f[0].clone());
        assert!(matches!(filter_coherent(&f), Err(DatasetError::DuplicateObject(_))));
    }
}
