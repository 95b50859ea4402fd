use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{FzError, Result};
use crate::ergodic::orbits;
use crate::finsys::{load_system_file, FactorMap, FinProbSpace, FinSystem, Generator, Permutation};
use crate::structure::{classify_compact, CompactnessReport};

use super::group::{enumerate_subgroups, FinGroupTable, Subgroup};

/// Default budget on the number of transfer maps `|K|^{|Y|}`.
pub const DEFAULT_MACKEY_BUDGET: u128 = 1 << 20;

/// A `K`-valued cocycle over `Y`, given on the generators of `Y`'s action
/// and extended to words by `ρ_{γγ'} = (ρ_γ ∘ S^{γ'}) ρ_{γ'}`.
#[derive(Debug, Clone)]
pub struct Cocycle {
    base: Arc<FinSystem>,
    group: Arc<FinGroupTable>,
    /// `values[g][y]` for generator `g` and factor atom `y`.
    values: Vec<Vec<usize>>,
}

impl Cocycle {
    pub fn new(base: Arc<FinSystem>, group: Arc<FinGroupTable>, values: Vec<Vec<usize>>) -> Result<Self> {
        if values.len() != base.generators().len() || values.iter().any(|v| v.len() != base.len()) {
            return Err(FzError::Schema("cocycle needs one value per generator and atom".into()));
        }
        if values.iter().flatten().any(|&k| k >= group.len()) {
            return Err(FzError::Validation("cocycle value outside the group".into()));
        }
        Ok(Self { base, group, values })
    }

    /// The cocycle identically equal to the identity element.
    pub fn trivial(base: Arc<FinSystem>, group: Arc<FinGroupTable>) -> Self {
        let e = group.identity();
        let values = vec![vec![e; base.len()]; base.generators().len()];
        Self { base, group, values }
    }

    pub fn base(&self) -> &Arc<FinSystem> {
        &self.base
    }

    pub fn group(&self) -> &Arc<FinGroupTable> {
        &self.group
    }

    pub fn value(&self, gen: usize, y: usize) -> usize {
        self.values[gen][y]
    }

    pub fn values(&self) -> &[Vec<usize>] {
        &self.values
    }

    /// `b(S y)⁻¹ ρ(y) b(y)`, the cohomologous cocycle for a transfer map `b`.
    pub fn conjugate(&self, transfer: &[usize]) -> Cocycle {
        let k = &self.group;
        let values = self
            .base
            .generators()
            .iter()
            .enumerate()
            .map(|(g, gen)| {
                (0..self.base.len())
                    .map(|y| k.mul(k.mul(k.inv(transfer[gen.perm.apply(y)]), self.values[g][y]), transfer[y]))
                    .collect()
            })
            .collect();
        Cocycle { base: self.base.clone(), group: self.group.clone(), values }
    }

    /// Enumerates the acting group: pairs `(s, c)` acting on `Y × K` by
    /// `(y, k) ↦ (s y, c(y) k)`, generated by the generator pairs.
    pub fn enumerate(&self, cap: usize) -> Result<CocycleTable> {
        let ny = self.base.len();
        let nk = self.group.len();
        // each element is recorded by its permutation of Y × K, index y·|K| + k
        let as_perm = |s: &Permutation, c: &[usize]| -> Permutation {
            Permutation::from_images((0..ny * nk).map(|p| s.apply(p / nk) * nk + self.group.mul(c[p / nk], p % nk)).collect())
                .expect("skew map is a bijection")
        };
        let gens: Vec<(Permutation, Vec<usize>)> =
            self.base.generators().iter().zip(&self.values).map(|(g, c)| (g.perm.clone(), c.clone())).collect();
        let mut elements = vec![(Permutation::identity(ny), vec![self.group.identity(); ny])];
        let mut perms = vec![Permutation::identity(ny * nk)];
        let mut words: Vec<Vec<usize>> = vec![Vec::new()];
        let mut index: HashMap<Permutation, usize> = HashMap::from([(perms[0].clone(), 0)]);
        let mut queue = VecDeque::from([0usize]);
        while let Some(cur) = queue.pop_front() {
            for (g, (s2, c2)) in gens.iter().enumerate() {
                // (s1, c1) ∘ (s2, c2) = (s1 s2, y ↦ c1(s2 y) c2(y))
                let (s1, c1) = &elements[cur];
                let s = s1.compose(s2);
                let c: Vec<usize> = (0..ny).map(|y| self.group.mul(c1[s2.apply(y)], c2[y])).collect();
                let p = as_perm(&s, &c);
                if index.contains_key(&p) {
                    continue;
                }
                if elements.len() >= cap {
                    return Err(FzError::CapExceeded { cap });
                }
                let mut w = words[cur].clone();
                w.push(g);
                index.insert(p.clone(), elements.len());
                queue.push_back(elements.len());
                elements.push((s, c));
                perms.push(p);
                words.push(w);
            }
        }
        // products from the Y × K permutations, independently of the pair formula
        let n = elements.len();
        let mut mul = vec![vec![0; n]; n];
        for a in 0..n {
            for b in 0..n {
                mul[a][b] = index[&perms[a].compose(&perms[b])];
            }
        }
        Ok(CocycleTable {
            base_perms: elements.iter().map(|e| e.0.clone()).collect(),
            values: elements.into_iter().map(|e| e.1).collect(),
            mul,
            words,
            group: self.group.clone(),
        })
    }
}

/// The cocycle on every enumerated group element, with the group's
/// multiplication table.
#[derive(Debug, Clone)]
pub struct CocycleTable {
    /// Action of each element on `Y`.
    pub base_perms: Vec<Permutation>,
    /// `values[a][y] = ρ_a(y)`.
    pub values: Vec<Vec<usize>>,
    /// `mul[a][b]` is the index of `a ∘ b`.
    pub mul: Vec<Vec<usize>>,
    pub words: Vec<Vec<usize>>,
    pub group: Arc<FinGroupTable>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CocycleCheck {
    pub ok: bool,
    pub elements: usize,
    pub pairs_checked: usize,
    /// First failing `(a, b, y)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<(usize, usize, usize)>,
}

/// Exhaustive check of `ρ_{ab}(y) = ρ_a(S_b y) ρ_b(y)` over all pairs.
pub fn verify_cocycle(table: &CocycleTable) -> CocycleCheck {
    let n = table.values.len();
    let k = &table.group;
    let mut pairs_checked = 0;
    for a in 0..n {
        for b in 0..n {
            pairs_checked += 1;
            let ab = table.mul[a][b];
            for y in 0..table.base_perms[b].len() {
                let rhs = k.mul(table.values[a][table.base_perms[b].apply(y)], table.values[b][y]);
                if table.values[ab][y] != rhs {
                    return CocycleCheck { ok: false, elements: n, pairs_checked, witness: Some((a, b, y)) };
                }
            }
        }
    }
    CocycleCheck { ok: true, elements: n, pairs_checked, witness: None }
}

/// The homogeneous skew product `Y ⋊_ρ K/L` with its projection onto `Y`.
/// Atoms are `"y|k"` with `k` the smallest element of the coset, weights
/// `ν(y) / [K:L]`, and `T(y, kL) = (S y, ρ(y) k L)`.
pub fn skew_build(rho: &Cocycle, l: &Subgroup) -> Result<(Arc<FinSystem>, FactorMap)> {
    if l.parent().as_ref() != rho.group().as_ref() {
        return Err(FzError::Mismatch("subgroup belongs to a different group".into()));
    }
    let y = rho.base();
    let k = rho.group();
    let cosets = l.left_cosets();
    let mut coset_of = vec![0; k.len()];
    for (i, c) in cosets.iter().enumerate() {
        for &a in c {
            coset_of[a] = i;
        }
    }
    let nc = cosets.len();
    let index = BigRational::from_integer(BigInt::from(nc));
    let atoms = (0..y.len())
        .flat_map(|yi| {
            let w = y.space().weight(yi) / &index;
            cosets.iter().map(move |c| (format!("{}|{}", y.space().atom_id(yi), k.label(c[0])), w.clone()))
        })
        .collect();
    let space = FinProbSpace::new(atoms)?;
    let gens = y
        .generators()
        .iter()
        .enumerate()
        .map(|(g, gen)| {
            let images = (0..y.len() * nc)
                .map(|p| {
                    let (yi, ci) = (p / nc, p % nc);
                    gen.perm.apply(yi) * nc + coset_of[k.mul(rho.value(g, yi), cosets[ci][0])]
                })
                .collect();
            Ok(Generator { label: gen.label.clone(), perm: Permutation::from_images(images)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let x = Arc::new(FinSystem::new(space, gens)?.with_group_cap(y.group_cap()));
    let map = (0..x.len()).map(|p| p / nc).collect();
    let pi = FactorMap::new(x.clone(), y.clone(), map, (0..y.generators().len()).collect())?;
    Ok((x, pi))
}

#[derive(Debug, Clone)]
pub struct MackeyRange {
    pub subgroup: Subgroup,
    /// Transfer map `b : Y → K` conjugating `ρ` into the subgroup.
    pub transfer: Vec<usize>,
    pub candidates_checked: u128,
}

/// Smallest subgroup `H` (by order, then member list) into which `ρ` can be
/// conjugated by a transfer map, found by exhaustive search. Transfer maps
/// are tried in lexicographic order with the first factor atom most
/// significant.
pub fn mackey_range(rho: &Cocycle, budget: u128) -> Result<MackeyRange> {
    let y = rho.base();
    if orbits(y).len() != 1 {
        return Err(FzError::NotErgodic(format!("base has {} orbits", orbits(y).len())));
    }
    let k = rho.group();
    let nk = k.len() as u128;
    let needed = (0..y.len()).try_fold(1u128, |acc, _| acc.checked_mul(nk)).unwrap_or(u128::MAX);
    if needed > budget {
        return Err(FzError::BudgetExceeded { needed, budget });
    }
    let subgroups = enumerate_subgroups(k)?;
    let mut checked = 0u128;
    for h in subgroups {
        let mut b = vec![0usize; y.len()];
        loop {
            checked += 1;
            // generator checks suffice: H is closed under products
            let fits = y.generators().iter().enumerate().all(|(g, gen)| {
                (0..y.len()).all(|yi| h.contains(k.mul(k.mul(k.inv(b[gen.perm.apply(yi)]), rho.value(g, yi)), b[yi])))
            });
            if fits {
                return Ok(MackeyRange { subgroup: h, transfer: b, candidates_checked: checked });
            }
            if !next_lex(&mut b, k.len()) {
                break;
            }
        }
    }
    Err(FzError::Equivalence("no subgroup contains the cocycle, not even the whole group".into()))
}

/// Advances `digits` to its lexicographic successor, last position fastest.
fn next_lex(digits: &mut [usize], base: usize) -> bool {
    for pos in (0..digits.len()).rev() {
        digits[pos] += 1;
        if digits[pos] < base {
            return true;
        }
        digits[pos] = 0;
    }
    false
}

/// Builds the skew product and classifies `Y ⋊ K/L → Y`.
pub fn skew_is_compact_check(rho: &Cocycle, l: &Subgroup) -> Result<CompactnessReport> {
    let (_, pi) = skew_build(rho, l)?;
    classify_compact(&pi)
}

#[derive(Debug, Clone)]
pub struct ProductQuotient {
    pub cocycle: Cocycle,
    pub subgroup: Subgroup,
    /// `Y ⋊ ΠK/ΠL` matches the fibered product of the `Y ⋊ K_α/L_α`:
    /// bijective on atoms, measure preserving and equivariant.
    pub quotient_identity: bool,
    pub quotient_atoms: usize,
}

/// Componentwise product of cocycles over a common base, and the check that
/// the product skew product is the fibered product of the factors.
pub fn cocycle_product_quotient(cocycles: &[Cocycle], subgroups: &[Subgroup]) -> Result<ProductQuotient> {
    let first = cocycles.first().ok_or_else(|| FzError::Precondition("need at least one cocycle".into()))?;
    if cocycles.len() != subgroups.len() {
        return Err(FzError::Mismatch("one subgroup per cocycle is required".into()));
    }
    for c in cocycles {
        if c.base().as_ref() != first.base().as_ref() {
            return Err(FzError::Mismatch("cocycles live over different bases".into()));
        }
    }
    let y = first.base().clone();
    let mut group = first.group().as_ref().clone();
    let mut values = first.values.clone();
    let mut members: Vec<usize> = subgroups[0].members().to_vec();
    for (c, l) in cocycles.iter().zip(subgroups).skip(1) {
        let m = c.group().len();
        values = values
            .iter()
            .zip(&c.values)
            .map(|(a, b)| a.iter().zip(b).map(|(&p, &q)| p * m + q).collect())
            .collect();
        members = members.iter().flat_map(|&p| l.members().iter().map(move |&q| p * m + q)).collect();
        group = group.product(c.group());
    }
    let group = Arc::new(group);
    let cocycle = Cocycle::new(y.clone(), group.clone(), values)?;
    let subgroup = Subgroup::new(group, members)?;
    let (px, _) = skew_build(&cocycle, &subgroup)?;

    // componentwise comparison: atom (y, coset) ↦ (coset index per factor)
    let parts = cocycles.iter().zip(subgroups).map(|(c, l)| skew_build(c, l)).collect::<Result<Vec<_>>>()?;
    let sizes: Vec<usize> = parts.iter().map(|(x, _)| x.len() / y.len()).collect();
    let per: usize = sizes.iter().product();
    let mut ok = px.len() == y.len() * per;
    if ok {
        // fix the product's coset order against the factors' by matching labels
        let mut expected_label = Vec::with_capacity(px.len());
        let mut product_coset_of: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
        for p in 0..px.len() {
            let yi = p / per;
            let id = px.space().atom_id(p);
            let klabel = &id[id.find('|').map_or(0, |i| i + 1)..];
            let kp = subgroup.parent().index_of(klabel).expect("coset label is a group element");
            // decompose the product element into components and find factor cosets
            let mut comps = Vec::with_capacity(cocycles.len());
            let mut rest = kp;
            for c in cocycles.iter().rev() {
                comps.push(rest % c.group().len());
                rest /= c.group().len();
            }
            comps.reverse();
            let digits: Vec<usize> = comps.iter().zip(subgroups).map(|(&a, l)| l.coset_index(a)).collect();
            product_coset_of.insert((yi, digits.clone()), p);
            expected_label.push((yi, digits));
        }
        ok = product_coset_of.len() == px.len();
        for (p, (yi, digits)) in expected_label.iter().enumerate() {
            if !ok {
                break;
            }
            ok &= px.space().weight(p) == &(y.space().weight(*yi) / BigRational::from_integer(BigInt::from(per)));
            for g in 0..y.generators().len() {
                let image = px.generators()[g].perm.apply(p);
                let moved: Vec<usize> = parts
                    .iter()
                    .zip(digits)
                    .map(|((x, _), &d)| x.generators()[g].perm.apply(*yi * (x.len() / y.len()) + d) % (x.len() / y.len()))
                    .collect();
                let ny = y.generators()[g].perm.apply(*yi);
                ok &= product_coset_of.get(&(ny, moved)) == Some(&image);
            }
        }
    }
    Ok(ProductQuotient { quotient_atoms: px.len(), cocycle, subgroup, quotient_identity: ok })
}

/// JSON form of a cocycle over a base system stored in another file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocycleDoc {
    /// Path of the base system, relative to this document.
    pub base: String,
    pub elements: Vec<String>,
    /// `mult[a][b]` as element indices.
    pub mult: Vec<Vec<usize>>,
    /// `{y-atom: {generator: element}}`.
    pub cocycle: BTreeMap<String, BTreeMap<String, String>>,
    /// Members of `L`; the trivial subgroup when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgroup: Option<Vec<String>>,
}

/// A loaded cocycle document.
#[derive(Debug, Clone)]
pub struct CocycleSpec {
    pub cocycle: Cocycle,
    pub subgroup: Subgroup,
}

pub fn load_cocycle(document: &str, base_dir: &Path, group_cap: usize) -> Result<CocycleSpec> {
    let doc: CocycleDoc = serde_json::from_str(document).map_err(|e| FzError::Schema(e.to_string()))?;
    let base = Arc::new(load_system_file(base_dir.join(&doc.base))?.with_group_cap(group_cap));
    let group = Arc::new(FinGroupTable::new(doc.elements.clone(), doc.mult.clone())?);
    let elem = |label: &str| -> Result<usize> {
        group.index_of(label).ok_or_else(|| FzError::Schema(format!("unknown group element {label:?}")))
    };
    let mut values = vec![vec![usize::MAX; base.len()]; base.generators().len()];
    for (yid, per_gen) in &doc.cocycle {
        let yi = base.space().index_of(yid).ok_or_else(|| FzError::Schema(format!("unknown base atom {yid:?}")))?;
        for (label, value) in per_gen {
            let g = base.generator_index(label).ok_or_else(|| FzError::Schema(format!("unknown generator {label:?}")))?;
            values[g][yi] = elem(value)?;
        }
    }
    if values.iter().flatten().any(|&v| v == usize::MAX) {
        return Err(FzError::Schema("cocycle must give a value for every base atom and generator".into()));
    }
    let cocycle = Cocycle::new(base, group.clone(), values)?;
    let members = match &doc.subgroup {
        Some(members) => Some(members.iter().map(|m| elem(m)).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    let subgroup = match members {
        Some(members) => Subgroup::new(group, members)?,
        None => Subgroup::trivial(group),
    };
    Ok(CocycleSpec { cocycle, subgroup })
}

pub fn load_cocycle_file(path: impl AsRef<Path>, group_cap: usize) -> Result<CocycleSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    load_cocycle(&text, path.parent().unwrap_or(Path::new(".")), group_cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodic::invariant_factor;

    fn swap() -> Arc<FinSystem> {
        Arc::new(FinSystem::from_images(FinProbSpace::uniform(["y1", "y2"]).unwrap(), vec![("S", vec![1, 0])]).unwrap())
    }

    fn ergodic_z2() -> Cocycle {
        Cocycle::new(swap(), Arc::new(FinGroupTable::cyclic(2)), vec![vec![1, 0]]).unwrap()
    }

    #[test]
    fn ergodic_cocycle_builds_a_four_cycle() {
        let rho = ergodic_z2();
        let (x, pi) = skew_build(&rho, &Subgroup::trivial(rho.group().clone())).unwrap();
        assert_eq!(x.len(), 4);
        assert!(invariant_factor(&x).unwrap().ergodic);
        assert_eq!(x.group().unwrap().len(), 4);
        assert!(pi.validate().passed);
        let m = mackey_range(&rho, DEFAULT_MACKEY_BUDGET).unwrap();
        assert_eq!(m.subgroup.order(), 2);
    }

    #[test]
    fn trivial_cocycle_decouples() {
        let rho = Cocycle::trivial(swap(), Arc::new(FinGroupTable::cyclic(2)));
        let (x, _) = skew_build(&rho, &Subgroup::trivial(rho.group().clone())).unwrap();
        assert_eq!(invariant_factor(&x).unwrap().inv_dimension, 2);
        let m = mackey_range(&rho, DEFAULT_MACKEY_BUDGET).unwrap();
        assert_eq!(m.subgroup.order(), 1);
        assert_eq!(m.transfer, vec![0, 0]);
        let (x, pi) = skew_build(&rho, &Subgroup::full(rho.group().clone())).unwrap();
        assert_eq!(x.len(), 2);
        assert!(pi.is_isomorphism());
    }

    #[test]
    fn planted_coboundary_is_recovered() {
        // ρ(y) = b(S y)⁻¹ b(y)... conjugating the trivial cocycle by b
        let k = Arc::new(FinGroupTable::cyclic(3));
        let y = Arc::new(
            FinSystem::from_images(FinProbSpace::uniform(["a", "b", "c"]).unwrap(), vec![("S", vec![1, 2, 0])]).unwrap(),
        );
        let planted = Cocycle::trivial(y, k.clone()).conjugate(&[0, 2, 1]);
        let m = mackey_range(&planted, DEFAULT_MACKEY_BUDGET).unwrap();
        assert_eq!(m.subgroup.order(), 1);
        assert!(planted.conjugate(&m.transfer).values().iter().flatten().all(|&v| v == k.identity()));
    }

    #[test]
    fn cocycle_law_and_corruption() {
        let rho = ergodic_z2();
        let mut table = rho.enumerate(1000).unwrap();
        assert!(verify_cocycle(&table).ok);
        let last = table.values.len() - 1;
        table.values[last][0] ^= 1;
        let check = verify_cocycle(&table);
        assert!(!check.ok && check.witness.is_some());
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(mackey_range(&ergodic_z2(), 3), Err(FzError::BudgetExceeded { needed: 4, budget: 3 })));
    }

    #[test]
    fn products_and_quotients() {
        let y = swap();
        let a = Cocycle::new(y.clone(), Arc::new(FinGroupTable::cyclic(2)), vec![vec![1, 0]]).unwrap();
        let b = Cocycle::new(y.clone(), Arc::new(FinGroupTable::cyclic(3)), vec![vec![1, 2]]).unwrap();
        let la = Subgroup::trivial(a.group().clone());
        let lb = Subgroup::trivial(b.group().clone());
        let pq = cocycle_product_quotient(&[a.clone(), b.clone()], &[la, lb]).unwrap();
        assert_eq!(pq.cocycle.group().len(), 6);
        assert!(pq.quotient_identity);
        assert!(verify_cocycle(&pq.cocycle.enumerate(1000).unwrap()).ok);
        let full = cocycle_product_quotient(
            &[a.clone(), b.clone()],
            &[Subgroup::full(a.group().clone()), Subgroup::full(b.group().clone())],
        )
        .unwrap();
        assert!(full.quotient_identity);
        assert_eq!(full.quotient_atoms, 2);
    }
}
