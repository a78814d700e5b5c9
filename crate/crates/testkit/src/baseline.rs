use std::collections::BTreeMap;

use cusprune::{NeuronClass, NeuronId, NeuronUniverse};
use rand::seq::index::sample;
use rand::Rng;

/// A random neuron set with the same count per class as `like`.
pub fn random_like(universe: &NeuronUniverse, like: &[NeuronId], rng: &mut impl Rng) -> Vec<NeuronId> {
    let mut want: BTreeMap<NeuronClass, usize> = BTreeMap::new();
    for n in like {
        *want.entry(n.class).or_default() += 1;
    }
    let mut out = Vec::new();
    for (class, k) in want {
        let candidates: Vec<NeuronId> = universe.ids().iter().filter(|n| n.class == class).copied().collect();
        out.extend(sample(rng, candidates.len(), k).into_iter().map(|i| candidates[i]));
    }
    out.sort();
    out
}
