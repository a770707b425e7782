//! The LC transformation: commute filters past activations until every
//! filter application touches the feature chain directly.

use crate::formula::{count_redexes, is_redex, Formula, FormulaError};
use std::collections::BTreeSet;
use std::fmt;

/// Powers `k` such that `S^k·X` is consumed by an LC formula. `0` stands for
/// the bare feature matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlanSpec {
    powers: BTreeSet<u32>,
}

impl PlanSpec {
    /// Collects the filter powers touching `X` in an LC formula.
    pub fn from_lc(f: &Formula) -> Result<Self, FormulaError> {
        if !validate_lc(f) {
            return Err(FormulaError::NotLc(f.to_string()));
        }
        let mut powers = BTreeSet::new();
        collect_powers(f, 0, &mut powers);
        Ok(Self { powers })
    }

    pub fn from_powers(powers: impl IntoIterator<Item = u32>) -> Self {
        Self {
            powers: powers.into_iter().collect(),
        }
    }

    pub fn powers(&self) -> impl Iterator<Item = u32> + '_ {
        self.powers.iter().copied()
    }

    pub fn contains(&self, k: u32) -> bool {
        self.powers.contains(&k)
    }

    pub fn max_power(&self) -> u32 {
        self.powers.iter().next_back().copied().unwrap_or(0)
    }
}

impl fmt::Display for PlanSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.powers.iter().map(u32::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

fn collect_powers(f: &Formula, acc: u32, out: &mut BTreeSet<u32>) {
    match f {
        Formula::Feature => {
            out.insert(acc);
        }
        Formula::Filter(c) | Formula::FilterPower(_, c) => collect_powers(c, acc + f.filter_power().unwrap(), out),
        _ => {
            for c in f.children() {
                collect_powers(c, 0, out);
            }
        }
    }
}

/// True iff no filter has an activation, weight, combination, attention
/// sum or softmax as its direct child.
pub fn validate_lc(f: &Formula) -> bool {
    let mut ok = true;
    f.visit(&mut |node| {
        if let Formula::Filter(c) | Formula::FilterPower(_, c) = node {
            if !matches!(**c, Formula::Feature | Formula::Filter(_) | Formula::FilterPower(..)) {
                ok = false;
            }
        }
    });
    ok
}

/// Moves a filter of power `j` onto the front of the multiplicative chain
/// `t`, merging with an existing filter: `S^j·(S^i·u·W) = S^{i+j}·u·W`.
fn push_filter(j: u32, t: Formula) -> Formula {
    match t {
        Formula::Filter(u) => Formula::FilterPower(j + 1, u),
        Formula::FilterPower(i, u) => Formula::FilterPower(i + j, u),
        Formula::WeightMul(w, u) => Formula::WeightMul(w, Box::new(push_filter(j, *u))),
        other => Formula::FilterPower(j, Box::new(other)),
    }
}

/// Fires a redex: `S^j·(σ(t)·W_a·…)` becomes `σ(S^j·t)·W_a·…`, and a chain
/// without an activation, `S^j·(u·W_a·…)`, becomes `(S^j·u)·W_a·…`.
fn fire(redex: Formula) -> Formula {
    let j = redex.filter_power().expect("redex is a filter");
    let (Formula::Filter(child) | Formula::FilterPower(_, child)) = redex else {
        unreachable!()
    };
    fn descend(j: u32, t: Formula) -> Formula {
        match t {
            Formula::WeightMul(w, u) => Formula::WeightMul(w, Box::new(descend(j, *u))),
            Formula::Activation(kind, u) => Formula::Activation(kind, Box::new(push_filter(j, *u))),
            other => push_filter(j, other),
        }
    }
    descend(j, *child)
}

fn rewrite_first(f: &Formula) -> Option<Formula> {
    if is_redex(f) {
        return Some(fire(f.clone()));
    }
    let rebuild_one =
        |c: &Formula, wrap: &dyn Fn(Box<Formula>) -> Formula| rewrite_first(c).map(|new| wrap(Box::new(new)));
    match f {
        Formula::Feature => None,
        Formula::Filter(c) => rebuild_one(c, &Formula::Filter),
        Formula::FilterPower(k, c) => rebuild_one(c, &|b| Formula::FilterPower(*k, b)),
        Formula::WeightMul(i, c) => rebuild_one(c, &|b| Formula::WeightMul(*i, b)),
        Formula::Activation(a, c) => rebuild_one(c, &|b| Formula::Activation(*a, b)),
        Formula::Softmax(c) => rebuild_one(c, &Formula::Softmax),
        Formula::Combine(_, cs) | Formula::AttnSum(cs) => {
            let (pos, new) = cs
                .iter()
                .enumerate()
                .find_map(|(i, c)| rewrite_first(c).map(|n| (i, n)))?;
            let mut cs = cs.clone();
            cs[pos] = new;
            Some(match f {
                Formula::Combine(kind, _) => Formula::Combine(*kind, cs),
                _ => Formula::AttnSum(cs),
            })
        }
    }
}

/// Applies one commutation at the outermost, leftmost redex. Returns the
/// input unchanged when there is none.
pub fn apply_f_lc(f: &Formula) -> Formula {
    rewrite_first(f).unwrap_or_else(|| f.clone())
}

/// Sum over activation and weight nodes of the number of filter nodes
/// above them. Strictly decreases with every [`apply_f_lc`] step.
pub fn lc_measure(f: &Formula) -> usize {
    fn go(f: &Formula, filters_above: usize) -> usize {
        let here = usize::from(matches!(f, Formula::Activation(..) | Formula::WeightMul(..))) * filters_above;
        let below = filters_above + usize::from(f.filter_power().is_some());
        here + f.children().into_iter().map(|c| go(c, below)).sum::<usize>()
    }
    go(f, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcResult {
    pub original: Formula,
    /// Formula after each rewrite step; the last entry is the LC formula.
    pub trace: Vec<Formula>,
    pub formula: Formula,
    pub plan: PlanSpec,
}

/// Rewrites to fixpoint, keeping every intermediate formula.
pub fn lc_transform_traced(f: &Formula) -> Result<LcResult, FormulaError> {
    f.validate()?;
    let bound = f.count_nodes(|n| matches!(n, Formula::Activation(..) | Formula::WeightMul(..)))
        * f.count_nodes(|n| n.filter_power().is_some());
    let mut cur = f.clone();
    let mut trace = Vec::new();
    while count_redexes(&cur) > 0 {
        cur = apply_f_lc(&cur);
        trace.push(cur.clone());
        debug_assert!(trace.len() <= bound, "rewrite exceeded its step bound");
    }
    let plan = PlanSpec::from_lc(&cur)?;
    Ok(LcResult {
        original: f.clone(),
        trace,
        formula: cur,
        plan,
    })
}

/// The LC version of `f` together with the powers of `S` it needs.
pub fn lc_transform(f: &Formula) -> Result<(Formula, PlanSpec), FormulaError> {
    lc_transform_traced(f).map(|r| (r.formula, r.plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{build_formula, render_formula, CombineKind, ModelFamily, ModelSpec};

    fn built(spec: ModelSpec) -> Formula {
        build_formula(&spec).unwrap()
    }

    #[test]
    fn single_step_on_gcn() {
        let gcn = built(ModelSpec::new(ModelFamily::Gcn, 2));
        assert_eq!(render_formula(&apply_f_lc(&gcn)), "softmax(σ(S^2·X·W_1)·W_2)");
    }

    #[test]
    fn sgc_is_a_fixpoint() {
        let sgc = built(ModelSpec::new(ModelFamily::Sgc, 2));
        assert_eq!(apply_f_lc(&sgc), sgc);
        assert!(validate_lc(&sgc));
        let r = lc_transform_traced(&sgc).unwrap();
        assert!(r.trace.is_empty());
        assert_eq!(r.plan, PlanSpec::from_powers([2]));
    }

    #[test]
    fn jknet_k2_after_two_steps() {
        let f = built(ModelSpec::new(ModelFamily::JkNet, 2));
        let once = apply_f_lc(&f);
        assert_eq!(once, apply_f_lc(&f));
        let twice = apply_f_lc(&once);
        assert_eq!(
            render_formula(&twice),
            "softmax(COMB_concat[S^1·X·W_1, σ(S^2·X·W_1)·W_2])"
        );
        assert!(validate_lc(&twice));
    }

    #[test]
    fn lc_transform_examples() {
        let (gcn, plan) = lc_transform(&built(ModelSpec::new(ModelFamily::Gcn, 2))).unwrap();
        assert_eq!(render_formula(&gcn), "softmax(σ(S^2·X·W_1)·W_2)");
        assert_eq!(plan.to_string(), "2");

        let jk = ModelSpec::new(ModelFamily::JkNet, 3).with_combine(CombineKind::Concat);
        let (_, plan) = lc_transform(&built(jk)).unwrap();
        assert_eq!(plan.to_string(), "1,2,3");

        let gpr = ModelSpec::new(ModelFamily::GprGnn, 3).with_mlp_layers(2);
        let (f, plan) = lc_transform(&built(gpr)).unwrap();
        assert_eq!(plan.to_string(), "0,1,2,3");
        assert_eq!(
            render_formula(&f),
            "softmax(Σγ[σ(X·W_1)·W_2, σ(S^1·X·W_1)·W_2, σ(S^2·X·W_1)·W_2, σ(S^3·X·W_1)·W_2])"
        );
    }

    #[test]
    fn validate_lc_examples() {
        assert!(!validate_lc(&built(ModelSpec::new(ModelFamily::Gcn, 2))));
        assert!(!validate_lc(&Formula::x().weight(1).filter()));
        assert!(validate_lc(&Formula::x().filter().filter_pow(2)));
    }

    #[test]
    fn plan_requires_lc_form() {
        assert!(PlanSpec::from_lc(&built(ModelSpec::new(ModelFamily::Gcn, 2))).is_err());
    }

    #[test]
    fn measure_decreases_on_gcn_k4() {
        let mut f = built(ModelSpec::new(ModelFamily::Gcn, 4));
        let mut m = lc_measure(&f);
        while count_redexes(&f) > 0 {
            f = apply_f_lc(&f);
            let next = lc_measure(&f);
            assert!(next < m);
            m = next;
        }
        assert_eq!(m, 0);
    }

    #[test]
    fn filters_merge_through_weight_chains() {
        let gpr = built(ModelSpec::new(ModelFamily::GprGnn, 2).with_mlp_layers(1));
        let (lc, plan) = lc_transform(&gpr).unwrap();
        assert_eq!(render_formula(&lc), "softmax(Σγ[X·W_1, S^1·X·W_1, S^2·X·W_1])");
        assert_eq!(plan.to_string(), "0,1,2");

        let nested = Formula::x().filter_pow(3).weight(2).filter();
        assert_eq!(render_formula(&apply_f_lc(&nested)), "S^4·X·W_2");
    }
}
