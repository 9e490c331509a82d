use alloc::collections::BTreeSet;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::schema::{AttributeSchema, AttributeValue};
use crate::{Error, Result};

pub type UserIdx = usize;
pub type ItemIdx = usize;

/// Per-item attribute records, shared between the splits of one dataset.
pub type Attributes = Arc<Vec<Vec<AttributeValue>>>;

/// Users, items and the set of observed interactions between them.
///
/// Users and items are dense indices. A dataset produced by a split keeps the
/// full index space of its source, and `members` marks which items belong to
/// the split. Interactions keep their first-seen order, which makes a
/// serialised dataset reload to the same indices.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    n_users: usize,
    n_items: usize,
    interactions: Vec<(UserIdx, ItemIdx)>,
    items_of_user: Vec<Vec<ItemIdx>>,
    users_of_item: Vec<Vec<UserIdx>>,
    members: Vec<bool>,
    attributes: Option<Attributes>,
}

impl InteractionDataset {
    /// Builds a dataset from raw pairs. Duplicate pairs are kept once.
    pub fn from_pairs(
        n_users: usize,
        n_items: usize,
        pairs: impl IntoIterator<Item = (UserIdx, ItemIdx)>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut interactions = Vec::new();
        let mut items_of_user = vec![Vec::new(); n_users];
        let mut users_of_item = vec![Vec::new(); n_items];
        for (u, v) in pairs {
            if u >= n_users || v >= n_items {
                return Err(Error::Dataset(format!(
                    "interaction ({u}, {v}) outside {n_users} users x {n_items} items"
                )));
            }
            if seen.insert((u, v)) {
                interactions.push((u, v));
                items_of_user[u].push(v);
                users_of_item[v].push(u);
            }
        }
        for list in items_of_user.iter_mut().chain(users_of_item.iter_mut()) {
            list.sort_unstable();
        }
        Ok(InteractionDataset {
            n_users,
            n_items,
            interactions,
            items_of_user,
            users_of_item,
            members: vec![true; n_items],
            attributes: None,
        })
    }

    /// Attaches attribute records after checking each against `schema`.
    pub fn with_attributes(
        mut self,
        schema: &AttributeSchema,
        records: Vec<Vec<AttributeValue>>,
    ) -> Result<Self> {
        if records.len() != self.n_items {
            return Err(Error::MissingAttributes(records.len().min(self.n_items)));
        }
        for (item, r) in records.iter().enumerate() {
            schema.check_record(item, r)?;
        }
        self.attributes = Some(Arc::new(records));
        Ok(self)
    }

    /// Attaches already validated, shared records.
    pub fn with_shared_attributes(mut self, attributes: Option<Attributes>) -> Self {
        self.attributes = attributes;
        self
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn interactions(&self) -> &[(UserIdx, ItemIdx)] {
        &self.interactions
    }

    /// Sorted items of `user`.
    pub fn items_of_user(&self, user: UserIdx) -> &[ItemIdx] {
        &self.items_of_user[user]
    }

    /// Sorted users of `item`.
    pub fn users_of_item(&self, item: ItemIdx) -> &[UserIdx] {
        &self.users_of_item[item]
    }

    pub fn contains(&self, user: UserIdx, item: ItemIdx) -> bool {
        self.users_of_item[item].binary_search(&user).is_ok()
    }

    /// Whether `item` belongs to this dataset (always true for unsplit data).
    pub fn is_member(&self, item: ItemIdx) -> bool {
        self.members[item]
    }

    pub fn member_items(&self) -> impl Iterator<Item = ItemIdx> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
    }

    /// Member items with at least one interaction.
    pub fn active_items(&self) -> Vec<ItemIdx> {
        self.member_items()
            .filter(|&v| !self.users_of_item[v].is_empty())
            .collect()
    }

    /// Users with at least one interaction.
    pub fn active_users(&self) -> Vec<UserIdx> {
        (0..self.n_users)
            .filter(|&u| !self.items_of_user[u].is_empty())
            .collect()
    }

    pub fn attributes(&self) -> Option<&Attributes> {
        self.attributes.as_ref()
    }

    pub fn item_attributes(&self, item: ItemIdx) -> Result<&[AttributeValue]> {
        self.attributes
            .as_ref()
            .and_then(|a| a.get(item))
            .map(Vec::as_slice)
            .ok_or(Error::MissingAttributes(item))
    }

    /// The sub-dataset made of `items` and exactly their interactions.
    pub fn restrict_to_items(&self, items: &[ItemIdx]) -> InteractionDataset {
        let mut members = vec![false; self.n_items];
        for &v in items {
            members[v] = true;
        }
        let pairs = self
            .interactions
            .iter()
            .copied()
            .filter(|&(_, v)| members[v]);
        let mut out = InteractionDataset::from_pairs(self.n_users, self.n_items, pairs)
            .expect("pairs come from a valid dataset");
        out.members = members;
        out.attributes = self.attributes.clone();
        out
    }
}
