//! Contextual structure: non-overlapping patch partitions and window
//! moment features.

use ndarray::Array2;

use crate::data::HsiCube;
use crate::error::{Error, Result};

/// Partition of the pixel indices `0..height*width` into contextual groups.
///
/// Groups produced by [`partition_into_patches`] are the pixel sets of
/// axis-aligned rectangles with sides at most `patch_width`; rectangles are
/// clipped at the right and bottom image edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    patch_width: usize,
    height: usize,
    width: usize,
}

impl GroupPartition {
    /// Build from explicit groups, checking that they are disjoint and cover
    /// every pixel exactly once.
    pub fn from_groups(
        groups: Vec<Vec<usize>>,
        patch_width: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let n = height * width;
        let mut seen = vec![false; n];
        let mut covered = 0usize;
        for group in &groups {
            if group.is_empty() {
                return Err(Error::InvalidArgument("empty contextual group".into()));
            }
            for &p in group {
                if p >= n {
                    return Err(Error::InvalidArgument(format!(
                        "pixel index {p} out of range for {height}x{width} image"
                    )));
                }
                if seen[p] {
                    return Err(Error::InvalidArgument(format!(
                        "pixel index {p} appears in more than one group"
                    )));
                }
                seen[p] = true;
                covered += 1;
            }
        }
        if covered != n {
            return Err(Error::InvalidArgument(format!(
                "groups cover {covered} of {n} pixels"
            )));
        }
        Ok(Self {
            groups,
            patch_width,
            height,
            width,
        })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn patch_width(&self) -> usize {
        self.patch_width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Split an image into non-overlapping `w x w` patches in row-major patch
/// order; edge patches are clipped to the image. Pixel indices are
/// `row * width + col`.
pub fn partition_into_patches(
    height: usize,
    width: usize,
    w: usize,
) -> Result<GroupPartition> {
    if w == 0 {
        return Err(Error::InvalidPatchWidth);
    }
    let rows = height.div_ceil(w);
    let cols = width.div_ceil(w);
    let mut groups = Vec::with_capacity(rows * cols);
    for pr in 0..rows {
        for pc in 0..cols {
            let r0 = pr * w;
            let c0 = pc * w;
            let r1 = (r0 + w).min(height);
            let c1 = (c0 + w).min(width);
            let mut group = Vec::with_capacity((r1 - r0) * (c1 - c0));
            for r in r0..r1 {
                for c in c0..c1 {
                    group.push(r * width + c);
                }
            }
            groups.push(group);
        }
    }
    GroupPartition::from_groups(groups, w, height, width)
}

/// Which moments to stack into a contextual feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentOrder {
    MeanOnly,
    MeanAndStd,
}

/// Per-band window moments: `dim = bands` (mean) or `2 * bands`
/// (mean followed by standard deviation). Column `i` belongs to
/// `centers[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextFeatures {
    values: Array2<f64>,
}

impl ContextFeatures {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Compute per-band mean (and, for [`MomentOrder::MeanAndStd`], population
/// standard deviation) over a `w x w` window centered at each requested
/// pixel and clipped to the image bounds.
pub fn window_moments(
    cube: &HsiCube,
    centers: &[(usize, usize)],
    w: usize,
    order: MomentOrder,
) -> Result<ContextFeatures> {
    if w % 2 == 0 {
        return Err(Error::EvenWindow(w));
    }
    if centers.is_empty() {
        return Err(Error::EmptyCenters);
    }
    let (height, width, bands) = (cube.height(), cube.width(), cube.bands());
    for &(r, c) in centers {
        if r >= height || c >= width {
            return Err(Error::InvalidArgument(format!(
                "center ({r}, {c}) outside {height}x{width} image"
            )));
        }
    }
    let half = w / 2;
    let dim = match order {
        MomentOrder::MeanOnly => bands,
        MomentOrder::MeanAndStd => 2 * bands,
    };
    let mut values = Array2::zeros((dim, centers.len()));
    for (i, &(r, c)) in centers.iter().enumerate() {
        let r0 = r.saturating_sub(half);
        let c0 = c.saturating_sub(half);
        let r1 = (r + half + 1).min(height);
        let c1 = (c + half + 1).min(width);
        let count = ((r1 - r0) * (c1 - c0)) as f64;
        for b in 0..bands {
            let mut sum = 0.0;
            for rr in r0..r1 {
                for cc in c0..c1 {
                    sum += cube.value(rr, cc, b);
                }
            }
            let mean = sum / count;
            values[(b, i)] = mean;
            if let MomentOrder::MeanAndStd = order {
                let mut sq = 0.0;
                for rr in r0..r1 {
                    for cc in c0..c1 {
                        let d = cube.value(rr, cc, b) - mean;
                        sq += d * d;
                    }
                }
                values[(bands + b, i)] = (sq / count).sqrt();
            }
        }
    }
    Ok(ContextFeatures { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_cube(height: usize, width: usize, bands: usize, v: f32) -> HsiCube {
        HsiCube::new(height, width, bands, vec![v; height * width * bands], None).unwrap()
    }

    #[test]
    fn patch_sizes_with_clipping() {
        let part = partition_into_patches(5, 5, 2).unwrap();
        let sizes: Vec<usize> = part.groups().iter().map(|g| g.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2, 4, 4, 2, 2, 2, 1]);
    }

    #[test]
    fn patch_count_145() {
        let part = partition_into_patches(145, 145, 8).unwrap();
        assert_eq!(part.num_groups(), 361);
    }

    #[test]
    fn patch_singletons() {
        let part = partition_into_patches(3, 4, 1).unwrap();
        assert_eq!(part.num_groups(), 12);
        assert!(part.groups().iter().all(|g| g.len() == 1));
    }

    #[test]
    fn patch_zero_width_rejected() {
        assert!(matches!(
            partition_into_patches(4, 4, 0),
            Err(Error::InvalidPatchWidth)
        ));
    }

    #[test]
    fn partition_covers_everything_once() {
        for (h, w, pw) in [(7, 3, 2), (8, 8, 8), (1, 9, 4), (6, 5, 3)] {
            let part = partition_into_patches(h, w, pw).unwrap();
            let total: usize = part.groups().iter().map(|g| g.len()).sum();
            assert_eq!(total, h * w);
            let mut seen = vec![false; h * w];
            for g in part.groups() {
                for &p in g {
                    assert!(!seen[p]);
                    seen[p] = true;
                }
            }
        }
    }

    #[test]
    fn moments_constant_cube() {
        let cube = constant_cube(4, 4, 3, 7.0);
        let feats =
            window_moments(&cube, &[(1, 2), (0, 0)], 3, MomentOrder::MeanOnly).unwrap();
        assert_eq!(feats.dim(), 3);
        assert!(feats.values().iter().all(|&v| v == 7.0));

        let feats =
            window_moments(&cube, &[(2, 2)], 3, MomentOrder::MeanAndStd).unwrap();
        assert_eq!(feats.dim(), 6);
        for b in 0..3 {
            assert_eq!(feats.values()[(b, 0)], 7.0);
            assert_eq!(feats.values()[(3 + b, 0)], 0.0);
        }
    }

    #[test]
    fn moments_match_brute_force_oracle() {
        // 3x3 single-band cube with values 1..9 row-major
        let cube =
            HsiCube::new(3, 3, 1, (1..=9).map(|v| v as f32).collect(), None).unwrap();
        let feats =
            window_moments(&cube, &[(1, 1)], 3, MomentOrder::MeanAndStd).unwrap();
        // independent enumeration of the window
        let window: Vec<f64> = (1..=9).map(f64::from).collect();
        let mean = window.iter().sum::<f64>() / 9.0;
        let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
        assert!((feats.values()[(0, 0)] - mean).abs() < 1e-12);
        assert!((feats.values()[(1, 0)] - var.sqrt()).abs() < 1e-12);
        assert!((mean - 5.0).abs() < 1e-12);
    }

    #[test]
    fn moments_unit_window_is_identity() {
        let cube =
            HsiCube::new(2, 2, 2, (0..8).map(|v| v as f32).collect(), None).unwrap();
        let feats = window_moments(
            &cube,
            &[(0, 0), (1, 1)],
            1,
            MomentOrder::MeanAndStd,
        )
        .unwrap();
        for (i, &(r, c)) in [(0usize, 0usize), (1, 1)].iter().enumerate() {
            for b in 0..2 {
                assert_eq!(feats.values()[(b, i)], cube.value(r, c, b));
                assert_eq!(feats.values()[(2 + b, i)], 0.0);
            }
        }
    }

    #[test]
    fn moments_corner_window_clips() {
        // corner of a 3x3 window keeps exactly the 4 in-bounds pixels
        let cube =
            HsiCube::new(3, 3, 1, (1..=9).map(|v| v as f32).collect(), None).unwrap();
        let feats = window_moments(&cube, &[(0, 0)], 3, MomentOrder::MeanOnly).unwrap();
        let expect = (1.0 + 2.0 + 4.0 + 5.0) / 4.0;
        assert!((feats.values()[(0, 0)] - expect).abs() < 1e-12);
    }

    #[test]
    fn moments_errors() {
        let cube = constant_cube(2, 2, 1, 0.0);
        assert!(matches!(
            window_moments(&cube, &[(0, 0)], 2, MomentOrder::MeanOnly),
            Err(Error::EvenWindow(2))
        ));
        assert!(matches!(
            window_moments(&cube, &[], 3, MomentOrder::MeanOnly),
            Err(Error::EmptyCenters)
        ));
    }
}
