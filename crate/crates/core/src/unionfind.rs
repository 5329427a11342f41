//! Disjoint-set forest with path halving and union by size.

#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        assert!(n < u32::MAX as usize, "too many elements");
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Number of disjoint sets.
    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Root of `x` without compressing.
    pub fn find_const(&self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            x = self.parent[x as usize];
        }
        x
    }

    /// Merges the sets of `a` and `b`; returns the new root when they differed.
    pub fn union(&mut self, a: u32, b: u32) -> Option<u32> {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return None;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        self.sets -= 1;
        Some(ra)
    }

    pub fn same(&mut self, a: u32, b: u32) -> bool {
        self.find(a) == self.find(b)
    }

    pub fn set_size(&mut self, x: u32) -> u32 {
        let r = self.find(x);
        self.size[r as usize]
    }

    /// Canonical labels: each element mapped to the smallest element of its set.
    pub fn labels(&mut self) -> Vec<u32> {
        let n = self.len();
        let mut min_of_root = vec![u32::MAX; n];
        let mut roots = Vec::with_capacity(n);
        for x in 0..n as u32 {
            let r = self.find(x);
            roots.push(r);
            if min_of_root[r as usize] == u32::MAX {
                min_of_root[r as usize] = x;
            }
        }
        roots.into_iter().map(|r| min_of_root[r as usize]).collect()
    }
}

/// True when every block of `fine` lies inside one block of `coarse`
/// (both given as per-element labels).
pub fn refines(fine: &[u32], coarse: &[u32]) -> bool {
    if fine.len() != coarse.len() {
        return false;
    }
    let mut image: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    fine.iter()
        .zip(coarse)
        .all(|(&f, &c)| *image.entry(f).or_insert(c) == c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_and_labels() {
        let mut uf = UnionFind::new(6);
        assert_eq!(uf.union(4, 2), Some(uf.find(2)));
        assert!(uf.union(2, 4).is_none());
        uf.union(5, 0);
        assert_eq!(uf.sets(), 4);
        assert_eq!(uf.labels(), vec![0, 1, 2, 3, 2, 0]);
        assert_eq!(uf.set_size(5), 2);
    }

    #[test]
    fn refinement() {
        assert!(refines(&[0, 0, 2, 3], &[0, 0, 0, 3]));
        assert!(!refines(&[0, 0, 2, 2], &[0, 1, 2, 2]));
    }
}
