//! Chunk-level editing of latent codes.
//!
//! Edits happen at whole-chunk granularity: every masked chunk is copied in
//! full from a donor code and every other element is left bit-identical.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::layout::{LatentCode, LatentDataset};
use crate::mask::SelectionMask;

#[derive(Debug, Clone, PartialEq)]
pub enum DonorPolicy {
    /// Copy chunks from one explicit code.
    FromCode(LatentCode),
    /// Copy chunks from the elementwise mean of a group of samples.
    FromGroupMean(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulationRecipe {
    pub mask: SelectionMask,
    pub donor: DonorPolicy,
}

/// `base` with every chunk in `mask` taken from `donor`.
pub fn replace_chunks(base: &LatentCode, donor: &LatentCode, mask: &SelectionMask) -> Result<LatentCode> {
    if base.layout() != donor.layout() || base.layout() != mask.layout() {
        bail!(Structural, "base, donor and mask layouts differ");
    }
    let mut values = base.values().to_vec();
    for &c in mask.chunks() {
        let r = base.layout().chunk_range(c);
        values[r.clone()].copy_from_slice(&donor.values()[r]);
    }
    LatentCode::new(*base.layout(), values)
}

/// Elementwise mean of the codes at `group`.
pub fn group_mean_code(dataset: &LatentDataset, group: &[usize]) -> Result<LatentCode> {
    if group.is_empty() {
        bail!(InsufficientData, "cannot average an empty group");
    }
    let layout = *dataset.layout();
    let mut acc = alloc::vec![0.0; layout.total_dims()];
    for &i in group {
        let Some(s) = dataset.samples().get(i) else {
            bail!(Structural, "sample index {i} out of range");
        };
        for (a, v) in acc.iter_mut().zip(s.code.values()) {
            *a += v;
        }
    }
    let n = group.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    LatentCode::new(layout, acc)
}

/// Resolves the recipe's donor, then applies [`replace_chunks`].
pub fn apply_recipe(base: &LatentCode, recipe: &ManipulationRecipe, dataset: Option<&LatentDataset>) -> Result<LatentCode> {
    match &recipe.donor {
        DonorPolicy::FromCode(donor) => replace_chunks(base, donor, &recipe.mask),
        DonorPolicy::FromGroupMean(group) => {
            let Some(ds) = dataset else {
                bail!(Config, "group-mean donor needs a dataset");
            };
            let donor = group_mean_code(ds, group)?;
            replace_chunks(base, &donor, &recipe.mask)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::GazeLabel;
    use crate::layout::{LatentLayout, Sample};
    use alloc::format;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_code(layout: LatentLayout, rng: &mut ChaCha8Rng) -> LatentCode {
        LatentCode::new(layout, (0..layout.total_dims()).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
    }

    fn random_dataset(n: usize, seed: u64) -> LatentDataset {
        let layout = LatentLayout::new(2, 64, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LatentDataset::from_samples(
            layout,
            (0..n).map(|i| Sample {
                id: format!("{i}"),
                code: random_code(layout, &mut rng),
                label: GazeLabel::new(0.0, 0.0).unwrap(),
            }),
        )
        .unwrap()
    }

    #[test]
    fn empty_and_full_masks() {
        let layout = LatentLayout::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (b, d) = (random_code(layout, &mut rng), random_code(layout, &mut rng));
        assert_eq!(replace_chunks(&b, &d, &SelectionMask::empty(layout)).unwrap(), b);
        assert_eq!(replace_chunks(&b, &d, &SelectionMask::all(layout)).unwrap(), d);
    }

    #[test]
    fn single_chunk_indices() {
        let layout = LatentLayout::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (b, d) = (random_code(layout, &mut rng), random_code(layout, &mut rng));
        let out = replace_chunks(&b, &d, &SelectionMask::new(layout, vec![2]).unwrap()).unwrap();
        for e in 0..layout.total_dims() {
            let want = if (32..48).contains(&e) { d.values()[e] } else { b.values()[e] };
            assert_eq!(out.values()[e].to_bits(), want.to_bits(), "element {e}");
        }
    }

    #[test]
    fn layout_mismatch() {
        let a = LatentLayout::new(1, 32, 16).unwrap();
        let b = LatentLayout::new(2, 16, 16).unwrap();
        let r = replace_chunks(&LatentCode::zeros(a), &LatentCode::zeros(b), &SelectionMask::empty(a));
        assert!(matches!(r, Err(crate::Error::Structural(_))));
    }

    #[test]
    fn group_means() {
        let ds = random_dataset(100, 4);
        assert_eq!(group_mean_code(&ds, &[7]).unwrap(), ds.samples()[7].code);
        assert!(matches!(group_mean_code(&ds, &[]), Err(crate::Error::InsufficientData(_))));

        let all: Vec<usize> = (0..100).collect();
        let got = group_mean_code(&ds, &all).unwrap();
        for e in 0..ds.layout().total_dims() {
            let mut s = 0.0;
            for smp in ds.samples() {
                s += smp.code.values()[e];
            }
            assert!((got.values()[e] - s / 100.0).abs() <= 1e-12);
        }

        let layout = *ds.layout();
        let v = ds.samples()[0].code.clone();
        let neg = LatentCode::new(layout, v.values().iter().map(|x| -x).collect()).unwrap();
        let pair = LatentDataset::from_samples(
            layout,
            [
                Sample { id: "a".into(), code: v, label: GazeLabel::new(0.0, 0.0).unwrap() },
                Sample { id: "b".into(), code: neg, label: GazeLabel::new(0.0, 0.0).unwrap() },
            ],
        )
        .unwrap();
        assert!(group_mean_code(&pair, &[0, 1]).unwrap().values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn recipe_policies() {
        let ds = random_dataset(10, 8);
        let layout = *ds.layout();
        let base = ds.samples()[0].code.clone();
        let mask = SelectionMask::new(layout, vec![1, 5]).unwrap();

        let r = ManipulationRecipe { mask: SelectionMask::empty(layout), donor: DonorPolicy::FromCode(ds.samples()[3].code.clone()) };
        assert_eq!(apply_recipe(&base, &r, None).unwrap(), base);

        let single = ManipulationRecipe { mask: mask.clone(), donor: DonorPolicy::FromGroupMean(vec![4]) };
        let direct = replace_chunks(&base, &ds.samples()[4].code, &mask).unwrap();
        assert_eq!(apply_recipe(&base, &single, Some(&ds)).unwrap(), direct);
        assert!(matches!(apply_recipe(&base, &single, None), Err(crate::Error::Config(_))));

        let group = vec![2, 3, 6, 9];
        let r = ManipulationRecipe { mask: mask.clone(), donor: DonorPolicy::FromGroupMean(group.clone()) };
        let out = apply_recipe(&base, &r, Some(&ds)).unwrap();
        let out_means = out.chunk_means();
        for &c in mask.chunks() {
            let want = group.iter().map(|&i| ds.samples()[i].code.chunk_means()[c]).sum::<f64>() / 4.0;
            assert!((out_means[c] - want).abs() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn algebra(seed in 0u64..10_000, bits in proptest::collection::vec(proptest::bool::ANY, 8)) {
            let layout = LatentLayout::new(2, 64, 16).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (b, d) = (random_code(layout, &mut rng), random_code(layout, &mut rng));
            let m = SelectionMask::new(layout, (0..8).filter(|&i| bits[i]).collect()).unwrap();
            let once = replace_chunks(&b, &d, &m).unwrap();
            proptest::prop_assert_eq!(&replace_chunks(&once, &d, &m).unwrap(), &once);
            proptest::prop_assert_eq!(&replace_chunks(&d, &b, &m.complement()).unwrap(), &once);
            for c in m.complement().chunks() {
                for e in layout.chunk_range(*c) {
                    proptest::prop_assert_eq!(once.values()[e].to_bits(), b.values()[e].to_bits());
                }
            }
        }
    }
}
