use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::geometry::{is_finite_point, Point3};

pub type CorrId = u32;

/// A putative match between a source-model point and a target-scene point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub id: CorrId,
    pub source: Point3,
    pub target: Point3,
}

impl Correspondence {
    pub fn new(id: CorrId, source: Point3, target: Point3) -> Self {
        Self { id, source, target }
    }
}

/// Ordered correspondences with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    items: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(items: Vec<Correspondence>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(items.len());
        for c in &items {
            if !seen.insert(c.id) {
                return Err(Error::InvalidInput(format!("duplicate correspondence id {}", c.id)));
            }
            if !is_finite_point(&c.source) || !is_finite_point(&c.target) {
                return Err(Error::InvalidInput(format!("correspondence {} has non-finite points", c.id)));
            }
        }
        Ok(Self { items })
    }

    /// Builds a set from pairs, numbering them `0..n` in order.
    pub fn from_pairs<I: IntoIterator<Item = (Point3, Point3)>>(pairs: I) -> Result<Self> {
        let items = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (s, t))| Correspondence::new(i as CorrId, s, t))
            .collect();
        Self::new(items)
    }

    // Subsets of a valid set stay valid, so no re-check.
    pub(crate) fn from_subset(items: Vec<Correspondence>) -> Self {
        Self { items }
    }

    pub fn as_slice(&self) -> &[Correspondence] {
        &self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Correspondence> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<CorrId> {
        self.items.iter().map(|c| c.id).collect()
    }

    pub fn get(&self, index: usize) -> Option<&Correspondence> {
        self.items.get(index)
    }

    pub fn find(&self, id: CorrId) -> Option<&Correspondence> {
        self.items.iter().find(|c| c.id == id)
    }

    /// Keeps the order of `self`, dropping every id in `ids`.
    pub fn without(&self, ids: &HashSet<CorrId>) -> Self {
        Self::from_subset(self.items.iter().filter(|c| !ids.contains(&c.id)).copied().collect())
    }

    pub fn into_vec(self) -> Vec<Correspondence> {
        self.items
    }
}

impl<'a> IntoIterator for &'a CorrespondenceSet {
    type Item = &'a Correspondence;
    type IntoIter = std::slice::Iter<'a, Correspondence>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}
