//! Size-controlled sampling, multi-dataset mixtures and context unions.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::UniformExample;
use crate::{derive_seed, Error, Result};

/// Uniform sample of `k` items without replacement, keeping input order.
pub fn cap_dataset<T: Clone>(items: &[T], k: usize, seed: u64) -> Result<Vec<T>> {
    if k == 0 {
        return Err(Error::InvalidConfig("take count must be at least 1".into()));
    }
    if items.len() < k {
        return Err(Error::NotEnoughExamples {
            requested: k,
            available: items.len(),
        });
    }
    if items.len() == k {
        return Ok(items.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, items.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| items[i].clone()).collect())
}

/// Rewrites the id of every example as `<tag>:<id>`.
pub fn namespace(tag: &str, examples: impl IntoIterator<Item = UniformExample>) -> Vec<UniformExample> {
    examples
        .into_iter()
        .map(|mut ex| {
            ex.id = format!("{tag}:{}", ex.id);
            ex
        })
        .collect()
}

/// One mixture component: a tagged dataset and how many examples to take.
#[derive(Debug, Clone, Copy)]
pub struct MixPart<'a> {
    pub tag: &'a str,
    pub examples: &'a [UniformExample],
    pub take: usize,
}

/// Concatenates per-part caps with namespaced ids, then optionally shuffles.
///
/// Each part is capped with a seed derived from the mixture seed and the
/// part position, so adding a part does not change the earlier selections.
pub fn mix(parts: &[MixPart<'_>], seed: u64, shuffle: bool) -> Result<Vec<UniformExample>> {
    let mut tags = BTreeSet::new();
    for part in parts {
        if !tags.insert(part.tag) {
            return Err(Error::InvalidConfig(format!(
                "dataset `{}` listed twice in mix",
                part.tag
            )));
        }
    }
    let mut out = Vec::with_capacity(parts.iter().map(|p| p.take).sum());
    for (i, part) in parts.iter().enumerate() {
        let capped = cap_dataset(part.examples, part.take, derive_seed(seed, i as u64))?;
        out.extend(namespace(part.tag, capped));
    }
    if shuffle {
        out.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX)));
    }
    Ok(out)
}

/// Plain concatenation of datasets that share questions but differ in
/// context; ids are disambiguated by tag and nothing is deduplicated.
pub fn union_contexts(datasets: &[(&str, &[UniformExample])]) -> Vec<UniformExample> {
    datasets
        .iter()
        .flat_map(|(tag, examples)| namespace(tag, examples.iter().cloned()))
        .collect()
}

/// Takes the prefix of `items` of the given `fraction` of their length,
/// at least one item.
pub fn fraction_of<T: Clone>(items: &[T], fraction: f64) -> Vec<T> {
    let n = libm::round(items.len() as f64 * fraction) as usize;
    items[..n.clamp(1.min(items.len()), items.len())].to_vec()
}

/// Namespace of a mixed id, if any.
pub fn tag_of(id: &str) -> Option<&str> {
    id.split_once(':').map(|(tag, _)| tag)
}

/// Ids kept as owned strings, used by tests and the runner to compare
/// selections.
pub fn ids(examples: &[UniformExample]) -> Vec<String> {
    examples.iter().map(|e| e.id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;
    use alloc::vec;

    fn dataset(prefix: &str, n: usize) -> Vec<UniformExample> {
        (0..n)
            .map(|i| UniformExample {
                id: format!("{prefix}{i}"),
                question: format!("question {i}?"),
                documents: vec![Document::new("context")],
                answers: vec!["x".to_string()],
                metadata: BTreeMap::new(),
            })
            .collect()
    }

    #[test]
    fn cap_takes_exact_count_in_order() {
        let items: Vec<usize> = (0..140_000).collect();
        let capped = cap_dataset(&items, 75_000, 3).unwrap();
        assert_eq!(capped.len(), 75_000);
        assert!(capped.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(capped, cap_dataset(&items, 75_000, 3).unwrap());
        assert_ne!(capped, cap_dataset(&items, 75_000, 4).unwrap());
    }

    #[test]
    fn cap_identity_and_errors() {
        let items: Vec<u8> = (0..10).collect();
        assert_eq!(cap_dataset(&items, 10, 9).unwrap(), items);
        assert_eq!(
            cap_dataset(&items, 11, 0),
            Err(Error::NotEnoughExamples {
                requested: 11,
                available: 10
            })
        );
        assert!(cap_dataset(&items, 0, 0).is_err());
    }

    #[test]
    fn mix_counts_and_namespaces() {
        let names = ["squad", "newsqa", "searchqa", "tqa", "hotpot"];
        let data: Vec<Vec<UniformExample>> = names.iter().map(|n| dataset(n, 400)).collect();
        let parts: Vec<MixPart<'_>> = names
            .iter()
            .zip(&data)
            .map(|(tag, ex)| MixPart {
                tag,
                examples: ex,
                take: 150,
            })
            .collect();
        let mixed = mix(&parts, 11, true).unwrap();
        assert_eq!(mixed.len(), 750);
        for name in names {
            assert_eq!(mixed.iter().filter(|e| tag_of(&e.id) == Some(name)).count(), 150);
        }
        assert_eq!(ids(&mixed), ids(&mix(&parts, 11, true).unwrap()));
        let unshuffled = mix(&parts, 11, false).unwrap();
        assert_eq!(tag_of(&unshuffled[0].id), Some("squad"));
        assert_ne!(ids(&mixed), ids(&unshuffled));
    }

    #[test]
    fn single_part_mix_is_prefixed_cap() {
        let data = dataset("q", 20);
        let mixed = mix(
            &[MixPart {
                tag: "A",
                examples: &data,
                take: 20,
            }],
            0,
            false,
        )
        .unwrap();
        assert_eq!(mixed[3].id, "A:q3");
        assert_eq!(mixed.len(), 20);
    }

    #[test]
    fn mix_propagates_cap_errors_and_rejects_duplicate_tags() {
        let data = dataset("q", 5);
        let too_many = [MixPart {
            tag: "A",
            examples: &data,
            take: 6,
        }];
        assert!(matches!(mix(&too_many, 0, false), Err(Error::NotEnoughExamples { .. })));
        let dup = [
            MixPart {
                tag: "A",
                examples: &data,
                take: 1,
            },
            MixPart {
                tag: "A",
                examples: &data,
                take: 1,
            },
        ];
        assert!(mix(&dup, 0, false).is_err());
    }

    #[test]
    fn union_keeps_everything() {
        let a = dataset("q", 30);
        let b = dataset("q", 30);
        let c = dataset("q", 30);
        let all = union_contexts(&[("wiki", &a), ("web", &b), ("news", &c)]);
        assert_eq!(all.len(), 90);
        let unique: BTreeSet<_> = all.iter().map(|e| e.id.clone()).collect();
        assert_eq!(unique.len(), 90);
        let one = union_contexts(&[("wiki", &a)]);
        assert_eq!(one.len(), 30);
        assert_eq!(one[0].id, "wiki:q0");
        assert_eq!(one[0].question, a[0].question);
    }

    #[test]
    fn fraction_prefix() {
        let v: Vec<u32> = (0..10).collect();
        assert_eq!(fraction_of(&v, 0.25), vec![0, 1, 2]);
        assert_eq!(fraction_of(&v, 0.0), vec![0]);
        assert_eq!(fraction_of(&v, 1.0), v);
    }
}
