/// Disjoint sets with path compression, union by rank and one aggregate per
/// root.
#[derive(Clone, Debug, Default)]
pub struct UnionFind<A> {
    parent: Vec<u32>,
    rank: Vec<u8>,
    aggregate: Vec<Option<A>>,
}

impl<A> UnionFind<A> {
    pub fn new() -> Self {
        UnionFind { parent: Vec::new(), rank: Vec::new(), aggregate: Vec::new() }
    }

    pub fn with_capacity(n: usize) -> Self {
        UnionFind {
            parent: Vec::with_capacity(n),
            rank: Vec::with_capacity(n),
            aggregate: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Adds a singleton set and returns its element.
    pub fn make_set(&mut self, aggregate: A) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.rank.push(0);
        self.aggregate.push(Some(aggregate));
        id
    }

    pub fn find(&mut self, x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = x;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    /// Merges the sets of `a` and `b`; `merge(into, from)` folds the losing
    /// root's aggregate into the winner's. Returns the new root.
    pub fn union_with(&mut self, a: u32, b: u32, merge: impl FnOnce(&mut A, A)) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (winner, loser) = match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => (rb, ra),
            std::cmp::Ordering::Greater => (ra, rb),
            std::cmp::Ordering::Equal => {
                self.rank[ra as usize] += 1;
                (ra, rb)
            }
        };
        self.parent[loser as usize] = winner;
        let from = self.aggregate[loser as usize].take().expect("root has an aggregate");
        let into = self.aggregate[winner as usize].as_mut().expect("root has an aggregate");
        merge(into, from);
        winner
    }

    pub fn same(&mut self, a: u32, b: u32) -> bool {
        self.find(a) == self.find(b)
    }

    /// Aggregate of `x`'s set, if it has not been taken.
    pub fn aggregate(&mut self, x: u32) -> Option<&A> {
        let r = self.find(x);
        self.aggregate[r as usize].as_ref()
    }

    pub fn aggregate_mut(&mut self, x: u32) -> Option<&mut A> {
        let r = self.find(x);
        self.aggregate[r as usize].as_mut()
    }

    /// Removes and returns the aggregate of `x`'s set.
    pub fn take_aggregate(&mut self, x: u32) -> Option<A> {
        let r = self.find(x);
        self.aggregate[r as usize].take()
    }

    /// Bytes reserved by the three backing arrays.
    pub fn heap_bytes(&self) -> usize {
        self.parent.capacity() * std::mem::size_of::<u32>()
            + self.rank.capacity()
            + self.aggregate.capacity() * std::mem::size_of::<Option<A>>()
    }
}
