//! Entropy, mutual information, conditional mutual information and relative
//! entropy of [`DiscreteDistribution`]s. All values are in nats and follow the
//! `0 log 0 = 0` convention.

use std::collections::{HashMap, HashSet};

use crate::empirical::{DiscreteDistribution, Projection};
use crate::layout::SlotMask;

/// Negative round-off below this magnitude is reported as zero.
pub const CLAMP_TOL: f64 = 1e-12;

pub const LN_2: f64 = std::f64::consts::LN_2;

/// Converts nats to bits.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / LN_2
}

/// Kahan-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

fn clamp_nonneg(value: f64) -> f64 {
    if value < 0.0 {
        debug_assert!(value > -1e-9, "large negative information value {value}");
        0.0
    } else {
        value
    }
}

/// Shannon entropy `-sum p log p`.
pub fn entropy(p: &DiscreteDistribution) -> f64 {
    entropy_of_probs(p.iter().map(|e| e.1))
}

/// Entropy of a list of cell probabilities.
pub fn entropy_of_probs(probs: impl IntoIterator<Item = f64>) -> f64 {
    let mut probs: Vec<f64> = probs.into_iter().filter(|&p| p > 0.0).collect();
    // decreasing order makes the compensated sum independent of storage order
    probs.sort_unstable_by(|a, b| b.total_cmp(a));
    let h = -compensated_sum(probs.iter().map(|&p| p * p.ln()));
    if h < 0.0 && h > -CLAMP_TOL {
        0.0
    } else {
        clamp_nonneg(h)
    }
}

/// Entropy of the marginal on `slots`; the empty set has entropy 0.
pub fn marginal_entropy(joint: &DiscreteDistribution, slots: SlotMask) -> f64 {
    if slots.is_empty() {
        return 0.0;
    }
    entropy(&joint.marginalize(slots).expect("nonempty mask within slot range"))
}

/// `H(U | W) = H(U, W) - H(W)`.
pub fn conditional_entropy(joint: &DiscreteDistribution, u: SlotMask, w: SlotMask) -> f64 {
    clamp_nonneg(marginal_entropy(joint, u | w) - marginal_entropy(joint, w))
}

/// `I(U; V) = H(U) + H(V) - H(U, V)` for disjoint slot sets `u`, `v`.
///
/// Evaluated like [`conditional_mutual_information`] with an empty `W`.
pub fn mutual_information(joint: &DiscreteDistribution, u: SlotMask, v: SlotMask) -> f64 {
    conditional_mutual_information(joint, u, v, SlotMask::EMPTY)
}

/// `I(U; V | W) = H(U,W) + H(V,W) - H(U,V,W) - H(W)`.
///
/// The four entropies are large and nearly cancel when `U` and `V` are close
/// to conditionally independent, so the sum is evaluated in the equivalent form
/// `sum q phi(p/q - 1)` with `q = p(u,w) p(v,w) / p(w)` and
/// `phi(d) = (1+d) log(1+d) - d`, which is second order in the deviation from
/// conditional independence. An empty `u` or `v` gives 0; an empty `w` gives
/// the mutual information.
pub fn conditional_mutual_information(joint: &DiscreteDistribution, u: SlotMask, v: SlotMask, w: SlotMask) -> f64 {
    debug_assert!(!u.intersects(v) && !u.intersects(w) && !v.intersects(w));
    if u.is_empty() || v.is_empty() {
        return 0.0;
    }
    let all = u | v | w;
    let j = joint.marginalize(all).expect("nonempty mask within slot range");
    let (cu, cv, cw) = (compact(u, all), compact(v, all), compact(w, all));
    let factors = Factors::new(&j, cu, cv, cw);

    let mut terms = Vec::with_capacity(j.support_size());
    for (z, p) in j.iter() {
        let (puw, pvw, pw) = factors.probs(z);
        let d = diff_of_products(p, pw, puw, pvw) / (puw * pvw);
        terms.push(puw * pvw / pw * phi(d));
    }
    terms.push(factors.unobserved_mass(&j));
    terms.sort_unstable_by(|a, b| b.total_cmp(a));
    clamp_nonneg(compensated_sum(terms))
}

/// `phi(d) = (1+d) log(1+d) - d`, by its power series near 0.
fn phi(d: f64) -> f64 {
    if d == -1.0 {
        1.0
    } else if d.abs() < 0.1 {
        // sum_{j>=2} (-1)^j d^j / (j (j-1))
        let mut power = d * d;
        let mut sum = 0.0;
        for j in 2..60 {
            let jf = j as f64;
            let t = power / (jf * (jf - 1.0));
            sum += if j % 2 == 0 { t } else { -t };
            if t.abs() <= 1e-18 * sum.abs() {
                break;
            }
            power *= d;
        }
        sum
    } else {
        (1.0 + d) * d.ln_1p() - d
    }
}

/// `a b - c d` with one rounding (Kahan's fma scheme).
#[inline]
fn diff_of_products(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let w = c * d;
    let e = (-c).mul_add(d, w);
    let f = a.mul_add(b, -w);
    f + e
}

/// Renumbers the slots of `mask` as positions within `within`.
fn compact(mask: SlotMask, within: SlotMask) -> SlotMask {
    let mut out = 0u64;
    let mut rank = 0;
    for s in 0..64 {
        if within.contains(s) {
            if mask.contains(s) {
                out |= 1 << rank;
            }
            rank += 1;
        }
    }
    SlotMask(out)
}

/// The `(U,W)`, `(V,W)` and `W` marginals of a `(U,V,W)` law, with the index
/// maps between them.
struct Factors {
    uw: DiscreteDistribution,
    vw: DiscreteDistribution,
    w: Option<DiscreteDistribution>,
    to_uw: Projection,
    to_vw: Projection,
    to_w: Option<Projection>,
    cu: SlotMask,
    cv: SlotMask,
    cw: SlotMask,
}

impl Factors {
    fn new(j: &DiscreteDistribution, cu: SlotMask, cv: SlotMask, cw: SlotMask) -> Self {
        let radices = j.radices();
        let proj = |m: SlotMask| Projection::new(radices, m).expect("nonempty mask");
        let marg = |m: SlotMask| j.marginalize(m).expect("nonempty mask");
        Factors {
            uw: marg(cu | cw),
            vw: marg(cv | cw),
            w: (!cw.is_empty()).then(|| marg(cw)),
            to_uw: proj(cu | cw),
            to_vw: proj(cv | cw),
            to_w: (!cw.is_empty()).then(|| proj(cw)),
            cu,
            cv,
            cw,
        }
    }

    fn probs(&self, z: u64) -> (f64, f64, f64) {
        let pw = match (&self.w, &self.to_w) {
            (Some(w), Some(p)) => w.prob(p.project(z)),
            _ => 1.0,
        };
        (
            self.uw.prob(self.to_uw.project(z)),
            self.vw.prob(self.to_vw.project(z)),
            pw,
        )
    }

    /// `sum q` over cells with `q > 0` and zero joint mass, where `phi(-1) = 1`.
    fn unobserved_mass(&self, j: &DiscreteDistribution) -> f64 {
        let radices = j.radices();
        let (pu, pv) = (
            Projection::new(radices, self.cu).expect("nonempty mask"),
            Projection::new(radices, self.cv).expect("nonempty mask"),
        );
        let pw = (!self.cw.is_empty()).then(|| Projection::new(radices, self.cw).expect("nonempty mask"));
        let wkey = |z: u64| pw.as_ref().map_or(0, |p| p.project(z));
        let observed: HashSet<(u64, u64, u64)> =
            j.iter().map(|(z, _)| (pu.project(z), pv.project(z), wkey(z))).collect();

        // u- and v-marginal cells available under each w
        let split = |dist: &DiscreteDistribution, part: SlotMask, whole: SlotMask| -> HashMap<u64, Vec<(u64, f64)>> {
            let r = dist.radices();
            let to_part = Projection::new(r, compact(part, whole)).expect("nonempty mask");
            let to_w =
                (!self.cw.is_empty()).then(|| Projection::new(r, compact(self.cw, whole)).expect("nonempty mask"));
            let mut groups: HashMap<u64, Vec<(u64, f64)>> = HashMap::new();
            for (i, p) in dist.iter() {
                let wk = to_w.as_ref().map_or(0, |t| t.project(i));
                groups.entry(wk).or_default().push((to_part.project(i), p));
            }
            groups
        };
        let us = split(&self.uw, self.cu, self.cu | self.cw);
        let vs = split(&self.vw, self.cv, self.cv | self.cw);
        let product_cells: usize = us.iter().map(|(wk, u)| u.len() * vs.get(wk).map_or(0, Vec::len)).sum();
        if product_cells == observed.len() {
            return 0.0;
        }
        let w_probs: HashMap<u64, f64> = match &self.w {
            Some(w) => w.iter().collect(),
            None => std::iter::once((0, 1.0)).collect(),
        };
        let mut terms = Vec::new();
        if product_cells <= 8 * observed.len() + (1 << 20) {
            for (wk, ulist) in &us {
                let pw = w_probs[wk];
                for &(ui, puw) in ulist {
                    for &(vi, pvw) in &vs[wk] {
                        if !observed.contains(&(ui, vi, *wk)) {
                            terms.push(puw * pvw / pw);
                        }
                    }
                }
            }
        } else {
            // too many cells to enumerate: complement of the observed mass
            let mut seen = 0.0;
            for (z, _) in j.iter() {
                let (puw, pvw, pw) = self.probs(z);
                seen += puw * pvw / pw;
            }
            terms.push((1.0 - seen).max(0.0));
        }
        terms.sort_unstable_by(|a, b| b.total_cmp(a));
        compensated_sum(terms)
    }
}

/// `D(p || q) = sum_{p>0} p log(p/q)`; `+inf` when `p` is not absolutely
/// continuous with respect to `q`.
///
/// Panics if the two distributions live on different index spaces.
pub fn relative_entropy(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    assert_eq!(p.radices(), q.radices(), "relative entropy needs a common index space");
    let mut terms = Vec::with_capacity(p.support_size());
    for (i, pi) in p.iter() {
        let qi = q.prob(i);
        if qi == 0.0 {
            return f64::INFINITY;
        }
        terms.push((pi, pi * (pi / qi).ln()));
    }
    terms.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let d = compensated_sum(terms.into_iter().map(|t| t.1));
    if d < 0.0 && d > -CLAMP_TOL {
        0.0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(radices: Vec<usize>, p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::from_dense(radices, p).unwrap()
    }

    const U: SlotMask = SlotMask(0b001);
    const V: SlotMask = SlotMask(0b010);
    const W: SlotMask = SlotMask(0b100);

    #[test]
    fn entropy_basics() {
        assert_eq!(entropy(&dist(vec![3], &[0.0, 1.0, 0.0])), 0.0);
        assert!((entropy(&dist(vec![4], &[0.25; 4])) - 4f64.ln()).abs() < 1e-15);
        let direct = -(0.7f64 * 0.7f64.ln() + 0.3 * 0.3f64.ln());
        assert!((entropy(&dist(vec![2], &[0.7, 0.3])) - direct).abs() < 1e-15);
    }

    #[test]
    fn mutual_information_basics() {
        let px = dist(vec![2], &[0.3, 0.7]);
        let py = dist(vec![3], &[0.2, 0.5, 0.3]);
        let prod = px.product(&py).unwrap();
        assert!(mutual_information(&prod, SlotMask(1), SlotMask(2)) < 1e-15);
        let copy = dist(vec![2, 2], &[0.5, 0.0, 0.0, 0.5]);
        assert!((mutual_information(&copy, SlotMask(1), SlotMask(2)) - LN_2).abs() < 1e-15);
    }

    #[test]
    fn mutual_information_matches_kl_form() {
        let p = [0.05, 0.1, 0.15, 0.2, 0.02, 0.08, 0.1, 0.2, 0.1];
        let joint = dist(vec![3, 3], &p);
        let pu: Vec<f64> = (0..3).map(|a| (0..3).map(|b| p[a * 3 + b]).sum()).collect();
        let pv: Vec<f64> = (0..3).map(|b| (0..3).map(|a| p[a * 3 + b]).sum()).collect();
        let mut direct = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let x = p[a * 3 + b];
                direct += x * (x / (pu[a] * pv[b])).ln();
            }
        }
        let i = mutual_information(&joint, SlotMask(1), SlotMask(2));
        assert!((i - direct).abs() < 1e-12);
        let prod = dist(vec![3], &pu).product(&dist(vec![3], &pv)).unwrap();
        assert!((relative_entropy(&joint, &prod) - i).abs() < 1e-12);
    }

    #[test]
    fn conditional_mutual_information_cases() {
        // U and V independent given W, by construction
        let pw = [0.4, 0.6];
        let pu_w = [[0.1, 0.9], [0.7, 0.3]];
        let pv_w = [[0.5, 0.5], [0.2, 0.8]];
        let mut p = vec![0.0; 8];
        for u in 0..2 {
            for v in 0..2 {
                for w in 0..2 {
                    p[u * 4 + v * 2 + w] = pw[w] * pu_w[w][u] * pv_w[w][v];
                }
            }
        }
        let joint = dist(vec![2, 2, 2], &p);
        assert!(conditional_mutual_information(&joint, U, V, W) < 1e-12);

        // constant W reduces to plain MI
        let uv = [0.3, 0.1, 0.2, 0.4];
        let with_w = dist(vec![2, 2, 1], &uv);
        let plain = dist(vec![2, 2], &uv);
        let cmi = conditional_mutual_information(&with_w, U, V, W);
        assert!((cmi - mutual_information(&plain, U, V)).abs() < 1e-15);
        assert_eq!(
            conditional_mutual_information(&plain, U, V, SlotMask::EMPTY),
            mutual_information(&plain, U, V)
        );
    }

    #[test]
    fn conditional_mutual_information_direct_sum() {
        let p = [0.02, 0.08, 0.15, 0.05, 0.2, 0.1, 0.25, 0.15];
        let joint = dist(vec![2, 2, 2], &p);
        // slots: U = slot 0, V = slot 1, W = slot 2
        let idx = |u: usize, v: usize, w: usize| u * 4 + v * 2 + w;
        let mut direct = 0.0;
        for w in 0..2 {
            let pw: f64 = (0..4).map(|uv| p[idx(uv / 2, uv % 2, w)]).sum();
            for u in 0..2 {
                let puw: f64 = (0..2).map(|v| p[idx(u, v, w)]).sum();
                for v in 0..2 {
                    let pvw: f64 = (0..2).map(|u2| p[idx(u2, v, w)]).sum();
                    let x = p[idx(u, v, w)];
                    direct += x * ((x / pw) / ((puw / pw) * (pvw / pw))).ln();
                }
            }
        }
        let cmi = conditional_mutual_information(&joint, U, V, W);
        assert!((cmi - direct).abs() < 1e-12, "{cmi} vs {direct}");
    }

    #[test]
    fn relative_entropy_cases() {
        let p = dist(vec![2], &[1.0, 0.0]);
        let q = dist(vec![2], &[0.5, 0.5]);
        assert_eq!(relative_entropy(&q, &q), 0.0);
        assert!((relative_entropy(&p, &q) - LN_2).abs() < 1e-15);
        assert_eq!(relative_entropy(&q, &p), f64::INFINITY);
    }

    #[test]
    fn bits_conversion() {
        assert!((nats_to_bits(LN_2) - 1.0).abs() < 1e-15);
    }
}
