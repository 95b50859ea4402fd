use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, OnceLock};

use crate::error::{FzError, Result};
use crate::finsys::space::{format_rational, FinProbSpace};

/// Default bound on the number of enumerated group elements.
pub const DEFAULT_GROUP_CAP: usize = 10_000;

/// A permutation of `0..n`, stored as the image of each point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn from_images(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &i in &images {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(FzError::Validation(format!("{images:?} is not a permutation")));
            }
        }
        Ok(Self(images))
    }

    /// Cycle on `0..n` sending `i` to `i + 1 (mod n)`.
    pub fn cycle(n: usize) -> Self {
        Self((0..n).map(|i| (i + 1) % n).collect())
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation(other.0.iter().map(|&i| self.0[i]).collect())
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j] = i;
        }
        Permutation(inv)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i == j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub label: String,
    pub perm: Permutation,
}

/// An element of the generated permutation group together with a shortest
/// word in the generators. The word `[a, b, c]` denotes `g_a ∘ g_b ∘ g_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub perm: Permutation,
    pub word: Vec<usize>,
}

/// The finite group generated by a system's generator permutations,
/// enumerated breadth-first so that element 0 is the identity and words are
/// shortlex-minimal.
#[derive(Debug, Clone)]
pub struct Group {
    elements: Vec<GroupElement>,
    index: HashMap<Permutation, usize>,
}

impl Group {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &GroupElement {
        &self.elements[i]
    }

    pub fn index_of(&self, perm: &Permutation) -> Option<usize> {
        self.index.get(perm).copied()
    }

    /// Index of the product `elements[a] ∘ elements[b]`.
    pub fn mul(&self, a: usize, b: usize) -> usize {
        let p = self.elements[a].perm.compose(&self.elements[b].perm);
        self.index[&p]
    }

    pub fn iter(&self) -> impl Iterator<Item = &GroupElement> {
        self.elements.iter()
    }
}

/// Closure of `generators` (permutations of `0..n`) under composition.
pub fn enumerate_perms(n: usize, generators: &[Permutation], cap: usize) -> Result<Group> {
    let id = Permutation::identity(n);
    let mut elements = vec![GroupElement { perm: id.clone(), word: Vec::new() }];
    let mut index = HashMap::from([(id, 0usize)]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(cur) = queue.pop_front() {
        for (g, gen) in generators.iter().enumerate() {
            let next = elements[cur].perm.compose(gen);
            if index.contains_key(&next) {
                continue;
            }
            if elements.len() >= cap {
                return Err(FzError::CapExceeded { cap });
            }
            let mut word = elements[cur].word.clone();
            word.push(g);
            index.insert(next.clone(), elements.len());
            queue.push_back(elements.len());
            elements.push(GroupElement { perm: next, word });
        }
    }
    Ok(Group { elements, index })
}

/// A finite probability space with a measure-preserving action of the group
/// generated by labelled permutations.
#[derive(Debug)]
pub struct FinSystem {
    space: FinProbSpace,
    generators: Vec<Generator>,
    group_cap: usize,
    group: OnceLock<std::result::Result<Arc<Group>, usize>>,
}

impl Clone for FinSystem {
    fn clone(&self) -> Self {
        Self {
            space: self.space.clone(),
            generators: self.generators.clone(),
            group_cap: self.group_cap,
            group: self.group.clone(),
        }
    }
}

impl PartialEq for FinSystem {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.generators == other.generators
    }
}

impl FinSystem {
    pub fn new(space: FinProbSpace, generators: Vec<Generator>) -> Result<Self> {
        let n = space.len();
        let mut labels = std::collections::HashSet::new();
        for g in &generators {
            if !labels.insert(g.label.as_str()) {
                return Err(FzError::Validation(format!("duplicate generator label {:?}", g.label)));
            }
            if g.perm.len() != n {
                return Err(FzError::Validation(format!(
                    "generator {:?} acts on {} points, space has {n} atoms",
                    g.label,
                    g.perm.len()
                )));
            }
            for x in 0..n {
                let y = g.perm.apply(x);
                if space.weight(x) != space.weight(y) {
                    return Err(FzError::Validation(format!(
                        "generator {:?} is not measure-preserving: atom {:?} (weight {}) maps to {:?} (weight {})",
                        g.label,
                        space.atom_id(x),
                        format_rational(space.weight(x)),
                        space.atom_id(y),
                        format_rational(space.weight(y)),
                    )));
                }
            }
        }
        Ok(Self { space, generators, group_cap: DEFAULT_GROUP_CAP, group: OnceLock::new() })
    }

    /// Builds a system from `(label, images)` pairs.
    pub fn from_images(space: FinProbSpace, gens: Vec<(&str, Vec<usize>)>) -> Result<Self> {
        let generators = gens
            .into_iter()
            .map(|(label, images)| {
                Ok(Generator { label: label.to_string(), perm: Permutation::from_images(images)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, generators)
    }

    /// One atom, no generators.
    pub fn trivial() -> Self {
        Self::new(FinProbSpace::uniform(["*"]).expect("one atom"), Vec::new()).expect("trivial system")
    }

    pub fn with_group_cap(mut self, cap: usize) -> Self {
        self.group_cap = cap.max(1);
        self.group = OnceLock::new();
        self
    }

    pub fn group_cap(&self) -> usize {
        self.group_cap
    }

    pub fn space(&self) -> &FinProbSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn generator_index(&self, label: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.label == label)
    }

    pub fn weight_f64(&self, i: usize) -> f64 {
        self.space.weight_f64(i)
    }

    /// The generated group, enumerated once with the system's cap.
    pub fn group(&self) -> Result<Arc<Group>> {
        let cap = self.group_cap;
        self.group
            .get_or_init(|| {
                let gens: Vec<_> = self.generators.iter().map(|g| g.perm.clone()).collect();
                enumerate_perms(self.len(), &gens, cap).map(Arc::new).map_err(|_| cap)
            })
            .clone()
            .map_err(|cap| FzError::CapExceeded { cap })
    }
}

/// Enumerates the acting group with an explicit cap, bypassing the cache.
pub fn enumerate_group(sys: &FinSystem, cap: usize) -> Result<Group> {
    let gens: Vec<_> = sys.generators().iter().map(|g| g.perm.clone()).collect();
    enumerate_perms(sys.len(), &gens, cap)
}
