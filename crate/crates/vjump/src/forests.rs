//! Principal minors of the transition matrix, both by direct determinants and
//! by constrained spanning-forest enumeration (matrix-tree route).

use ndarray::Array2;
use ndarray_linalg::Determinant;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{TransitionMatrix, VelocityModel};

/// Spanning-forest counts grow exponentially; past this the determinant
/// routes are the only ones offered.
pub const MAX_ENUMERATION_STATES: usize = 16;

/// A strictly increasing set of vertex indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.is_empty() {
            return Err(Error::Invalid("index set must be nonempty".into()));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid("index set contains duplicates".into()));
        }
        if *indices.last().unwrap() >= n {
            return Err(Error::Invalid(format!(
                "index {} out of range for n = {n}",
                indices.last().unwrap()
            )));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A partition of the vertices into vertex-disjoint trees. Arcs are stored as
/// `(i, j)` with `i < j` in lexicographic order; the weight is the product of
/// the arc rates, with singleton trees contributing 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Forest {
    /// Vertex sets, each sorted, ordered by smallest member.
    pub trees: Vec<Vec<usize>>,
    pub arcs: Vec<(usize, usize)>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestFamily {
    /// The separating index set, when the family was built against one.
    pub constraint: Option<IndexSet>,
    pub members: Vec<Forest>,
}

impl ForestFamily {
    pub fn weight_sum(&self) -> f64 {
        self.members.iter().map(|f| f.weight).sum()
    }

    /// Members of a two-tree family keeping `i` and `j` in different trees.
    pub fn separating(&self, i: usize, j: usize) -> impl Iterator<Item = &Forest> {
        self.members.iter().filter(move |f| {
            f.trees.len() == 2
                && ((f.trees[0].contains(&i) && f.trees[1].contains(&j))
                    || (f.trees[0].contains(&j) && f.trees[1].contains(&i)))
        })
    }
}

/// Determinant of `B` with the rows and columns of `I` removed; 1 when the
/// whole index range is deleted. Sizes up to 3 use closed forms to keep
/// rounding noise out of the matrix-tree comparisons.
pub fn principal_minor(b: &TransitionMatrix, set: &IndexSet) -> f64 {
    let n = b.size();
    let keep: Vec<usize> = (0..n).filter(|i| !set.indices().contains(i)).collect();
    minor_on(b, &keep)
}

fn minor_on(b: &TransitionMatrix, keep: &[usize]) -> f64 {
    let e = b.entries();
    let at = |r: usize, c: usize| e[[keep[r], keep[c]]];
    match keep.len() {
        0 => 1.0,
        1 => at(0, 0),
        2 => at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0),
        3 => {
            at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1))
                - at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0))
                + at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0))
        }
        m => {
            let mut sub = Array2::<f64>::zeros((m, m));
            for r in 0..m {
                for c in 0..m {
                    sub[[r, c]] = at(r, c);
                }
            }
            sub.det().expect("pivoted determinant of principal submatrix")
        }
    }
}

/// Sum of first-order principal minors; the denominator of the drift and
/// diffusion formulas. Zero is reported, not an error, here.
pub fn i1(b: &TransitionMatrix) -> f64 {
    let n = b.size();
    (0..n)
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            minor_on(b, &keep)
        })
        .sum()
}

struct Enumerator<'a> {
    model: &'a VelocityModel,
    arcs: Vec<(usize, usize)>,
    /// Per-vertex: does the DSU component contain a constrained vertex?
    constrained: Vec<bool>,
    target_arcs: usize,
    out: Vec<Forest>,
}

impl<'a> Enumerator<'a> {
    fn run(mut self) -> Vec<Forest> {
        let n = self.model.num_states();
        let parent: Vec<usize> = (0..n).collect();
        let flags = self.constrained.clone();
        let mut chosen = Vec::new();
        self.recurse(0, 0, parent, flags, &mut chosen);
        self.out
    }

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    fn recurse(
        &mut self,
        next_arc: usize,
        taken: usize,
        mut parent: Vec<usize>,
        flags: Vec<bool>,
        chosen: &mut Vec<(usize, usize)>,
    ) {
        if taken == self.target_arcs {
            // Each merge was blocked from joining two constrained components,
            // so with #components == #constraints every tree holds exactly one.
            self.emit(&mut parent, chosen);
            return;
        }
        if self.arcs.len() - next_arc < self.target_arcs - taken {
            return; // not enough arcs left
        }
        let (i, j) = self.arcs[next_arc];
        let ri = Self::find(&mut parent, i);
        let rj = Self::find(&mut parent, j);
        // Include the arc, unless it closes a cycle or joins two trees that
        // both already own a constrained vertex.
        if ri != rj && !(flags[ri] && flags[rj]) {
            let mut parent2 = parent.clone();
            let mut flags2 = flags.clone();
            parent2[rj] = ri;
            flags2[ri] = flags2[ri] || flags2[rj];
            chosen.push((i, j));
            self.recurse(next_arc + 1, taken + 1, parent2, flags2, chosen);
            chosen.pop();
        }
        // Exclude the arc.
        self.recurse(next_arc + 1, taken, parent, flags, chosen);
    }

    fn emit(&mut self, parent: &mut Vec<usize>, chosen: &[(usize, usize)]) {
        let n = self.model.num_states();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut group_of = vec![usize::MAX; n];
        for v in 0..n {
            let r = Self::find(parent, v);
            if group_of[r] == usize::MAX {
                group_of[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[group_of[r]].push(v);
        }
        // Vertices are visited in order, so trees come out sorted by their
        // smallest member with sorted contents.
        let weight = chosen
            .iter()
            .map(|&(i, j)| self.model.rate(i, j))
            .product::<f64>();
        self.out.push(Forest { trees: groups, arcs: chosen.to_vec(), weight });
    }
}

fn check_enumerable(model: &VelocityModel) -> Result<()> {
    if !model.is_symmetric() {
        return Err(Error::Precondition(
            "forest enumeration requires symmetric transition rates".into(),
        ));
    }
    if model.num_states() > MAX_ENUMERATION_STATES {
        return Err(Error::Guard(format!(
            "forest enumeration capped at n <= {MAX_ENUMERATION_STATES}, got n = {}",
            model.num_states()
        )));
    }
    Ok(())
}

/// All spanning forests with exactly `|set|` trees, one constrained vertex per
/// tree. Deterministic lexicographic order by sorted arc lists.
pub fn enumerate_forests(model: &VelocityModel, set: &IndexSet) -> Result<ForestFamily> {
    check_enumerable(model)?;
    let n = model.num_states();
    if set.indices().iter().any(|&i| i >= n) {
        return Err(Error::Invalid("index set out of range".into()));
    }
    let mut constrained = vec![false; n];
    for &i in set.indices() {
        constrained[i] = true;
    }
    let members = Enumerator {
        model,
        arcs: model.arcs(),
        constrained,
        target_arcs: n - set.len(),
        out: Vec::new(),
    }
    .run();
    Ok(ForestFamily { constraint: Some(set.clone()), members })
}

/// Matrix-tree route to the principal minor: the weight sum over the
/// constrained forest family.
pub fn forest_minor(model: &VelocityModel, set: &IndexSet) -> Result<f64> {
    Ok(enumerate_forests(model, set)?.weight_sum())
}

/// The full family of two-tree spanning forests.
pub fn forest_pairs(model: &VelocityModel) -> Result<ForestFamily> {
    check_enumerable(model)?;
    if !crate::model::check_irreducible(model).connected {
        return Err(Error::Precondition(
            "two-tree forest family requires a connected rate graph".into(),
        ));
    }
    let n = model.num_states();
    let members = Enumerator {
        model,
        arcs: model.arcs(),
        constrained: vec![false; n],
        target_arcs: n - 2,
        out: Vec::new(),
    }
    .run();
    Ok(ForestFamily { constraint: None, members })
}
