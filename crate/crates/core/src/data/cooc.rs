use alloc::vec;
use alloc::vec::Vec;

use super::dataset::{InteractionDataset, ItemIdx};

/// Co-occurrence positives: items that share at least one user with an item.
#[derive(Debug, Clone, PartialEq)]
pub struct CoocIndex {
    positives_of: Vec<Vec<ItemIdx>>,
}

impl CoocIndex {
    /// Sorted positives of `item`, never containing `item` itself.
    pub fn positives(&self, item: ItemIdx) -> &[ItemIdx] {
        &self.positives_of[item]
    }

    pub fn is_positive(&self, item: ItemIdx, other: ItemIdx) -> bool {
        self.positives_of[item].binary_search(&other).is_ok()
    }

    pub fn n_items(&self) -> usize {
        self.positives_of.len()
    }
}

/// Builds the index through the user -> items inverted lists, i.e. the union
/// of `items_of_user(u)` over the users of each item.
pub fn build_cooccurrence_index(train: &InteractionDataset) -> CoocIndex {
    let n = train.n_items();
    let mut positives_of = vec![Vec::new(); n];
    // stamp[w] == v + 1 marks w as already collected for v
    let mut stamp = vec![0usize; n];
    for (v, out) in positives_of.iter_mut().enumerate() {
        stamp[v] = v + 1;
        for &u in train.users_of_item(v) {
            for &w in train.items_of_user(u) {
                if stamp[w] != v + 1 {
                    stamp[w] = v + 1;
                    out.push(w);
                }
            }
        }
        out.sort_unstable();
    }
    CoocIndex { positives_of }
}
