use fixedbitset::FixedBitSet;

use super::NodeId;

/// A set of node ids drawn from `0..p`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct NodeSet {
    bits: FixedBitSet,
}

impl NodeSet {
    pub fn new(p: usize) -> Self {
        Self {
            bits: FixedBitSet::with_capacity(p),
        }
    }

    pub fn from_iter(p: usize, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let mut set = Self::new(p);
        for v in nodes {
            set.insert(v);
        }
        set
    }

    /// Size of the universe `0..p`.
    pub fn universe(&self) -> usize {
        self.bits.len()
    }

    pub fn insert(&mut self, v: NodeId) {
        self.bits.insert(v);
    }

    pub fn remove(&mut self, v: NodeId) {
        self.bits.set(v, false);
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.bits.contains(v)
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.bits.is_subset(&other.bits)
    }

    pub fn union_with(&mut self, other: &NodeSet) {
        self.bits.union_with(&other.bits);
    }

    pub fn difference_with(&mut self, other: &NodeSet) {
        self.bits.difference_with(&other.bits);
    }

    /// Members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.bits.ones()
    }

    pub fn to_vec(&self) -> Vec<NodeId> {
        self.iter().collect()
    }
}

impl std::fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_operations() {
        let mut a = NodeSet::from_iter(8, [1, 3, 5]);
        let b = NodeSet::from_iter(8, [1, 3, 5, 7]);
        assert!(a.is_subset(&b));
        assert!(!b.is_subset(&a));
        assert_eq!(a.len(), 3);
        a.remove(3);
        assert!(!a.contains(3));
        a.union_with(&b);
        assert_eq!(a, b);
        a.difference_with(&b);
        assert!(a.is_empty());
        assert_eq!(format!("{b:?}"), "{1, 3, 5, 7}");
    }
}
