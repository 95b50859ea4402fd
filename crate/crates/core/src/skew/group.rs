use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{FzError, Result};

/// Largest group whose subgroup lattice is enumerated exhaustively.
pub const SUBGROUP_BUDGET: usize = 24;

/// A finite group given by its multiplication table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinGroupTable {
    labels: Vec<String>,
    mult: Vec<Vec<usize>>,
    identity: usize,
    inverse: Vec<usize>,
}

impl FinGroupTable {
    /// Validates closure, associativity, identity and inverses on the full table.
    pub fn new(labels: Vec<String>, mult: Vec<Vec<usize>>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(FzError::Validation("a group needs at least one element".into()));
        }
        let distinct: BTreeSet<&String> = labels.iter().collect();
        if distinct.len() != n {
            return Err(FzError::Validation("group element labels must be distinct".into()));
        }
        if mult.len() != n || mult.iter().any(|r| r.len() != n) {
            return Err(FzError::Schema(format!("multiplication table must be {n}×{n}")));
        }
        if mult.iter().flatten().any(|&v| v >= n) {
            return Err(FzError::Validation("multiplication table leaves the group".into()));
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if mult[mult[a][b]][c] != mult[a][mult[b][c]] {
                        return Err(FzError::Validation(format!(
                            "multiplication is not associative at ({}, {}, {})",
                            labels[a], labels[b], labels[c]
                        )));
                    }
                }
            }
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|a| mult[e][a] == a && mult[a][e] == a))
            .ok_or_else(|| FzError::Validation("multiplication table has no identity".into()))?;
        let mut inverse = Vec::with_capacity(n);
        for a in 0..n {
            let inv = (0..n)
                .find(|&b| mult[a][b] == identity && mult[b][a] == identity)
                .ok_or_else(|| FzError::Validation(format!("element {} has no inverse", labels[a])))?;
            inverse.push(inv);
        }
        Ok(Self { labels, mult, identity, inverse })
    }

    /// `Z/n` with elements labelled `0..n`.
    pub fn cyclic(n: usize) -> Self {
        let labels = (0..n).map(|i| i.to_string()).collect();
        let mult = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
        Self::new(labels, mult).expect("cyclic group table")
    }

    /// Direct product; the pair `(a, b)` has index `a · |other| + b`.
    pub fn product(&self, other: &FinGroupTable) -> Self {
        let m = other.len();
        let mut labels = Vec::with_capacity(self.len() * m);
        for a in &self.labels {
            for b in &other.labels {
                labels.push(format!("({a},{b})"));
            }
        }
        let n = self.len() * m;
        let mult = (0..n)
            .map(|p| (0..n).map(|q| self.mult[p / m][q / m] * m + other.mult[p % m][q % m]).collect())
            .collect();
        Self::new(labels, mult).expect("product of valid tables")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, a: usize) -> &str {
        &self.labels[a]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn mult_table(&self) -> &[Vec<usize>] {
        &self.mult
    }

    #[inline]
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mult[a][b]
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    #[inline]
    pub fn inv(&self, a: usize) -> usize {
        self.inverse[a]
    }

    pub fn is_abelian(&self) -> bool {
        (0..self.len()).all(|a| (0..self.len()).all(|b| self.mult[a][b] == self.mult[b][a]))
    }
}

/// A subgroup, stored as a sorted member list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgroup {
    parent: Arc<FinGroupTable>,
    members: Vec<usize>,
}

impl Subgroup {
    pub fn new(parent: Arc<FinGroupTable>, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let set: BTreeSet<usize> = members.into_iter().collect();
        if set.iter().any(|&a| a >= parent.len()) {
            return Err(FzError::Validation("subgroup member outside the group".into()));
        }
        if !set.contains(&parent.identity()) {
            return Err(FzError::Validation("subgroup must contain the identity".into()));
        }
        for &a in &set {
            if !set.contains(&parent.inv(a)) {
                return Err(FzError::Validation(format!("subgroup is not closed under inverse at {}", parent.label(a))));
            }
            for &b in &set {
                if !set.contains(&parent.mul(a, b)) {
                    return Err(FzError::Validation(format!(
                        "subgroup is not closed under multiplication at ({}, {})",
                        parent.label(a),
                        parent.label(b)
                    )));
                }
            }
        }
        Ok(Self { parent, members: set.into_iter().collect() })
    }

    pub fn trivial(parent: Arc<FinGroupTable>) -> Self {
        let e = parent.identity();
        Self { parent, members: vec![e] }
    }

    pub fn full(parent: Arc<FinGroupTable>) -> Self {
        let members = (0..parent.len()).collect();
        Self { parent, members }
    }

    /// The subgroup generated by `gens`.
    pub fn generated(parent: Arc<FinGroupTable>, gens: &[usize]) -> Self {
        let mut set = BTreeSet::from([parent.identity()]);
        let mut frontier: Vec<usize> = vec![parent.identity()];
        while let Some(a) = frontier.pop() {
            for &g in gens {
                let b = parent.mul(a, g);
                if set.insert(b) {
                    frontier.push(b);
                }
            }
        }
        Self { parent, members: set.into_iter().collect() }
    }

    pub fn parent(&self) -> &Arc<FinGroupTable> {
        &self.parent
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn order(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, a: usize) -> bool {
        self.members.binary_search(&a).is_ok()
    }

    pub fn index(&self) -> usize {
        self.parent.len() / self.members.len()
    }

    /// Left cosets `kL`, each sorted, ordered by smallest element; the
    /// smallest element is the representative.
    pub fn left_cosets(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.parent.len()];
        let mut out = Vec::new();
        for k in 0..self.parent.len() {
            if seen[k] {
                continue;
            }
            let mut coset: Vec<usize> = self.members.iter().map(|&l| self.parent.mul(k, l)).collect();
            coset.sort_unstable();
            for &c in &coset {
                seen[c] = true;
            }
            out.push(coset);
        }
        out
    }

    /// Index into [`Subgroup::left_cosets`] of the coset containing `k`.
    pub fn coset_index(&self, k: usize) -> usize {
        self.left_cosets().iter().position(|c| c.binary_search(&k).is_ok()).expect("cosets cover the group")
    }

    pub fn labels(&self) -> Vec<String> {
        self.members.iter().map(|&a| self.parent.label(a).to_string()).collect()
    }
}

/// All subgroups, ordered by order and then by member list.
pub fn enumerate_subgroups(parent: &Arc<FinGroupTable>) -> Result<Vec<Subgroup>> {
    if parent.len() > SUBGROUP_BUDGET {
        return Err(FzError::BudgetExceeded { needed: parent.len() as u128, budget: SUBGROUP_BUDGET as u128 });
    }
    let mut found: BTreeSet<Vec<usize>> = BTreeSet::from([vec![parent.identity()]]);
    let mut frontier: Vec<Vec<usize>> = vec![vec![parent.identity()]];
    while let Some(members) = frontier.pop() {
        for g in 0..parent.len() {
            if members.binary_search(&g).is_ok() {
                continue;
            }
            let mut gens = members.clone();
            gens.push(g);
            let next = Subgroup::generated(parent.clone(), &gens).members;
            if found.insert(next.clone()) {
                frontier.push(next);
            }
        }
    }
    let mut subgroups: Vec<Subgroup> =
        found.into_iter().map(|members| Subgroup { parent: parent.clone(), members }).collect();
    subgroups.sort_by(|a, b| a.order().cmp(&b.order()).then_with(|| a.members.cmp(&b.members)));
    Ok(subgroups)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_and_product_tables() {
        let z2 = FinGroupTable::cyclic(2);
        let z3 = FinGroupTable::cyclic(3);
        let p = z2.product(&z3);
        assert_eq!(p.len(), 6);
        assert!(p.is_abelian());
        // (1,1) has order 6, so Z/2 × Z/3 is cyclic
        let g = p.index_of("(1,1)").unwrap();
        assert_eq!(Subgroup::generated(Arc::new(p), &[g]).order(), 6);
    }

    #[test]
    fn rejects_broken_tables() {
        let bad = FinGroupTable::new(vec!["a".into(), "b".into()], vec![vec![0, 1], vec![1, 1]]);
        assert!(bad.is_err());
    }

    #[test]
    fn subgroup_lattice_of_z4() {
        let z4 = Arc::new(FinGroupTable::cyclic(4));
        let subs = enumerate_subgroups(&z4).unwrap();
        let orders: Vec<usize> = subs.iter().map(Subgroup::order).collect();
        assert_eq!(orders, vec![1, 2, 4]);
        assert_eq!(subs[1].members(), &[0, 2]);
        assert_eq!(subs[1].left_cosets(), vec![vec![0, 2], vec![1, 3]]);
        assert!(Subgroup::new(z4, [0, 1]).is_err());
    }
}
