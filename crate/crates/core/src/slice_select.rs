//! Ranking slices by cumulative in-focus mass and keeping the top `k`.

use serde::{Deserialize, Serialize};

use crate::blur_map::BlurMap;
use crate::error::{Error, Result};
use crate::image_io::to_u8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceScore {
    #[serde(rename = "z")]
    pub z_index: usize,
    pub score: u64,
}

/// Sum over pixels of `round(v·255)`; an exact integer.
pub fn in_focus_score(map: &BlurMap) -> u64 {
    map.image().data().iter().map(|&v| to_u8(v) as u64).sum()
}

/// Scores for a list of maps, `z_index` = list position.
pub fn score_maps(maps: &[BlurMap]) -> Vec<SliceScore> {
    maps.iter().enumerate().map(|(z, m)| SliceScore { z_index: z, score: in_focus_score(m) }).collect()
}

/// Indices of the `k` highest scores, best first; equal scores keep the
/// lower z index first. Requires `0 < k <= scores.len()`.
pub fn select_top_k(scores: &[SliceScore], k: usize) -> Result<Vec<usize>> {
    check_k(k, scores.len())?;
    let mut ranked: Vec<&SliceScore> = scores.iter().collect();
    ranked.sort_by(|a, b| b.score.cmp(&a.score).then(a.z_index.cmp(&b.z_index)));
    Ok(ranked.into_iter().take(k).map(|s| s.z_index).collect())
}

pub fn check_k(k: usize, z_count: usize) -> Result<()> {
    if k == 0 || k > z_count {
        return Err(Error::param(format!("k must satisfy 0 < k <= {z_count}, got {k}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Image;
    use proptest::prelude::*;

    fn scores(vals: &[u64]) -> Vec<SliceScore> {
        vals.iter().enumerate().map(|(z, &score)| SliceScore { z_index: z, score }).collect()
    }

    fn map(vals: &[f32]) -> BlurMap {
        BlurMap::new(Image::new(2, 2, vals.to_vec()).unwrap())
    }

    #[test]
    fn quantized_sums() {
        assert_eq!(in_focus_score(&map(&[0.0; 4])), 0);
        assert_eq!(in_focus_score(&map(&[1.0; 4])), 1020);
        assert_eq!(in_focus_score(&map(&[0.5, 0.5, 0.0, 1.0])), 511);
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(select_top_k(&scores(&[5, 1, 9]), 2).unwrap(), vec![2, 0]);
        assert_eq!(select_top_k(&scores(&[7, 7, 7]), 2).unwrap(), vec![0, 1]);
        let mut all = select_top_k(&scores(&[3, 8, 1, 8]), 4).unwrap();
        assert_eq!(all, vec![1, 3, 0, 2]);
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn k_bounds() {
        let s = scores(&[1, 2, 3]);
        assert!(matches!(select_top_k(&s, 0), Err(Error::Param(_))));
        assert!(matches!(select_top_k(&s, 4), Err(Error::Param(_))));
        assert!(select_top_k(&s, 3).is_ok());
    }

    proptest! {
        #[test]
        fn selected_dominate_rejected(vals in prop::collection::vec(0u64..20, 1..12), k_seed in 0usize..100) {
            let s = scores(&vals);
            let k = 1 + k_seed % vals.len();
            let sel = select_top_k(&s, k).unwrap();
            let min_sel = sel.iter().map(|&z| vals[z]).min().unwrap();
            let max_rej = (0..vals.len()).filter(|z| !sel.contains(z)).map(|z| vals[z]).max();
            if let Some(m) = max_rej {
                prop_assert!(min_sel >= m);
            }
        }

        #[test]
        fn input_order_does_not_matter(vals in prop::collection::vec(0u64..6, 1..10), k_seed in 0usize..100, rot in 0usize..10) {
            let s = scores(&vals);
            let k = 1 + k_seed % vals.len();
            let mut shuffled = s.clone();
            shuffled.rotate_left(rot % vals.len());
            shuffled.reverse();
            prop_assert_eq!(select_top_k(&s, k).unwrap(), select_top_k(&shuffled, k).unwrap());
        }
    }
}
