//! Rate oracle properties, plus a cross-check against a fluid model of the
//! token buckets stepped at 1 us.

use htbsim_core::{expected_rates, ActiveSet, ClassId, HtbClassConfig, HtbTree, Rate};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct LeafGen {
    parent: usize,
    share: f64,
    headroom: f64,
    priority: u8,
    load: f64,
}

#[derive(Debug, Clone)]
struct TreeGen {
    link_mbps: u64,
    inner: Vec<(f64, f64)>,
    fill: f64,
    leaves: Vec<LeafGen>,
}

fn tree_gen(max_leaves: usize, max_prio: u8) -> impl Strategy<Value = TreeGen> {
    (20u64..=100, 1usize..=3, 0.5f64..=1.0).prop_flat_map(move |(link, n_inner, fill)| {
        (
            Just(link),
            prop::collection::vec((0.1f64..1.0, 0.0f64..=1.0), n_inner),
            Just(fill),
            prop::collection::vec(
                (0..n_inner, 0.1f64..1.0, 0.0f64..=1.0, 0..=max_prio, 0.2f64..2.0).prop_map(
                    |(parent, share, headroom, priority, load)| LeafGen {
                        parent,
                        share,
                        headroom,
                        priority,
                        load,
                    },
                ),
                1..=max_leaves,
            ),
        )
            .prop_map(|(link_mbps, inner, fill, leaves)| TreeGen {
                link_mbps,
                inner,
                fill,
                leaves,
            })
    })
}

/// Rates in whole kbit/s, assured sums never above the parent's.
fn realize(g: &TreeGen, scale: u64) -> (Vec<HtbClassConfig>, Vec<f64>) {
    let link = g.link_mbps * 1000;
    let k = |x: u64| Rate::kbps(x * scale);
    let mut h = vec![HtbClassConfig::root(2, k(link))];
    let wsum: f64 = g.inner.iter().map(|i| i.0).sum();
    let mut inner = Vec::new();
    for (i, (w, head)) in g.inner.iter().enumerate() {
        let a = ((link as f64) * g.fill * w / wsum) as u64;
        let c = a + ((link - a) as f64 * head) as u64;
        h.push(HtbClassConfig::inner(&format!("inner{i}"), "root", 1, k(a.max(1)), k(c.max(1))));
        inner.push((a.max(1), c.max(1)));
    }
    let mut offered = Vec::new();
    for (p, &(pa, pc)) in inner.iter().enumerate() {
        let kids: Vec<&LeafGen> = g.leaves.iter().filter(|l| l.parent == p).collect();
        let ws: f64 = kids.iter().map(|l| l.share).sum();
        for l in kids {
            let a = ((pa as f64) * g.fill * l.share / ws).max(1.0) as u64;
            let a = a.min(pa);
            let c = a + ((pc - a) as f64 * l.headroom) as u64;
            let i = offered.len();
            h.push(
                HtbClassConfig::leaf(&format!("leaf{i}"), &format!("inner{p}"), k(a), k(c), i as u32)
                    .with_quantum(1500)
                    .with_priority(l.priority),
            );
            offered.push((c * scale) as f64 * 1000.0 * l.load);
        }
    }
    (h, offered)
}

fn leaves_of(tree: &HtbTree, n: usize) -> Vec<ClassId> {
    (0..n).map(|i| tree.class_id(&format!("leaf{i}")).unwrap()).collect()
}

fn solve(g: &TreeGen, scale: u64) -> (HtbTree, Vec<ClassId>, Vec<f64>, Vec<f64>) {
    let (h, offered) = realize(g, scale);
    let tree = HtbTree::build(&h, Rate::kbps(g.link_mbps * 1000 * scale)).unwrap();
    let leaves = leaves_of(&tree, offered.len());
    let set: ActiveSet = leaves.iter().copied().zip(offered.iter().copied()).collect();
    let r = expected_rates(&tree, &set).unwrap();
    (tree, leaves, offered, r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn conservation_and_bounds(g in tree_gen(8, 2)) {
        let (tree, leaves, offered, r) = solve(&g, 1);
        let link = tree.link_rate().as_f64();
        let total: f64 = leaves.iter().map(|l| r[l.index()]).sum();
        prop_assert!(total <= link * (1.0 + 1e-9));
        prop_assert!((r[tree.root().index()] - total).abs() <= 1e-6 * link);
        for (l, &o) in leaves.iter().zip(&offered) {
            let p = tree.params(*l);
            let got = r[l.index()];
            prop_assert!(got <= o.min(p.ceil.as_f64()) * (1.0 + 1e-9));
            prop_assert!(got >= o.min(p.assured.as_f64()) * (1.0 - 1e-9));
        }
        for c in tree.ids() {
            prop_assert!(r[c.index()] <= tree.params(c).ceil.as_f64() * (1.0 + 1e-9));
        }
        // unused capacity implies every leaf is held back by some ceiling or its load
        let demand: f64 = leaves.iter().zip(&offered).map(|(l, o)| o.min(tree.params(*l).ceil.as_f64())).sum();
        let inner_capped = tree.ids().filter(|&c| !tree.is_leaf(c) && c != tree.root())
            .any(|c| r[c.index()] >= tree.params(c).ceil.as_f64() * (1.0 - 1e-9));
        if demand >= link && !inner_capped {
            prop_assert!((total - link).abs() <= 1e-6 * link, "{total} vs {link}");
        }
    }

    #[test]
    fn scale_invariance(g in tree_gen(8, 2), scale in 2u64..=5) {
        let (_, leaves, _, r1) = solve(&g, 1);
        let (_, _, _, r2) = solve(&g, scale);
        for l in leaves {
            let (a, b) = (r1[l.index()] * scale as f64, r2[l.index()]);
            prop_assert!((a - b).abs() <= 1e-6 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn better_priority_never_loses(g in tree_gen(8, 3), pick in 0usize..8) {
        let pick = pick % g.leaves.len();
        prop_assume!(g.leaves[pick].priority > 0);
        let (_, leaves, _, before) = solve(&g, 1);
        let mut g2 = g.clone();
        g2.leaves[pick].priority -= 1;
        let (_, _, _, after) = solve(&g2, 1);
        let idx = position_after_grouping(&g, pick);
        let l = leaves[idx];
        prop_assert!(after[l.index()] >= before[l.index()] * (1.0 - 1e-9));
    }
}

/// Index of generated leaf `pick` once leaves are grouped by parent.
fn position_after_grouping(g: &TreeGen, pick: usize) -> usize {
    let mut order: Vec<usize> = (0..g.leaves.len()).collect();
    order.sort_by_key(|&i| g.leaves[i].parent);
    order.iter().position(|&i| i == pick).unwrap()
}

/// Buckets as continuous byte levels, advanced in fixed steps. Each step
/// serves levels bottom-up and priorities best-first; a lender shares its
/// tokens among eligible borrowers by quantum, subject to every ctoken bucket
/// on the borrow path and to the link. Buckets start empty so no initial
/// burst has to drain before the rates settle.
struct Fluid {
    assured: Vec<f64>,
    ceil: Vec<f64>,
    burst: Vec<f64>,
    cburst: Vec<f64>,
    level: Vec<usize>,
    depth: usize,
    link: f64,
    /// Per leaf: ancestry as class indices (leaf first), priority, quantum, offered B/s.
    leaves: Vec<(Vec<usize>, u8, f64, f64)>,
    prios: Vec<u8>,
    tokens: Vec<f64>,
    ctokens: Vec<f64>,
    backlog: Vec<f64>,
    sent: Vec<f64>,
}

/// Bucket residue below this many bytes counts as empty.
const DUST: f64 = 1e-9;

struct Limit {
    members: Vec<usize>,
    room: f64,
}

/// Quantum-weighted progressive filling of `want` under shared limits.
fn fill(want: &[f64], weight: &[f64], limits: &mut [Limit]) -> Vec<f64> {
    let n = want.len();
    let mut got = vec![0.0; n];
    let mut open: Vec<bool> = want.iter().map(|&w| w > 0.0).collect();
    loop {
        let w_open = |m: &[usize], open: &[bool]| m.iter().filter(|&&i| open[i]).map(|&i| weight[i]).sum::<f64>();
        let mut t = f64::INFINITY;
        for i in (0..n).filter(|&i| open[i]) {
            t = t.min((want[i] - got[i]) / weight[i]);
        }
        for l in limits.iter() {
            let w = w_open(&l.members, &open);
            if w > 0.0 {
                t = t.min(l.room / w);
            }
        }
        if !t.is_finite() {
            return got;
        }
        let t = t.max(0.0);
        for i in (0..n).filter(|&i| open[i]) {
            got[i] += t * weight[i];
        }
        for l in limits.iter_mut() {
            l.room -= t * w_open(&l.members, &open);
        }
        let mut closed = false;
        for i in 0..n {
            let tight = want[i] - got[i] <= 1e-12 * want[i].max(1.0)
                || limits.iter().any(|l| l.members.contains(&i) && l.room <= 1e-12);
            if open[i] && tight {
                open[i] = false;
                closed = true;
            }
        }
        if !closed || !open.iter().any(|&o| o) {
            return got;
        }
    }
}

impl Fluid {
    fn new(tree: &HtbTree, leaves: &[ClassId], offered: &[f64]) -> Self {
        let f = |g: &dyn Fn(ClassId) -> f64| tree.ids().map(g).collect::<Vec<f64>>();
        let mut prios: Vec<u8> = leaves.iter().map(|&l| tree.params(l).priority).collect();
        prios.sort();
        prios.dedup();
        Fluid {
            assured: f(&|c| tree.params(c).assured.as_f64() / 8.0),
            ceil: f(&|c| tree.params(c).ceil.as_f64() / 8.0),
            burst: f(&|c| f64::from(tree.params(c).burst)),
            cburst: f(&|c| f64::from(tree.params(c).cburst)),
            level: tree.ids().map(|c| tree.level(c)).collect(),
            depth: tree.ids().map(|c| tree.level(c)).max().unwrap_or(0),
            link: tree.link_rate().as_f64() / 8.0,
            leaves: leaves
                .iter()
                .zip(offered)
                .map(|(&l, &o)| {
                    let p = tree.params(l);
                    (tree.ancestry(l).map(|c| c.index()).collect(), p.priority, f64::from(p.quantum), o / 8.0)
                })
                .collect(),
            prios,
            tokens: vec![0.0; tree.len()],
            ctokens: vec![0.0; tree.len()],
            backlog: vec![0.0; leaves.len()],
            sent: vec![0.0; leaves.len()],
        }
    }

    /// Position along `leaf`'s ancestry of the class that would lend to it,
    /// if the borrow path is open.
    fn lender(&self, leaf: usize) -> Option<usize> {
        for (k, &c) in self.leaves[leaf].0.iter().enumerate() {
            if self.ctokens[c] <= DUST {
                return None;
            }
            if self.tokens[c] > DUST {
                return Some(k);
            }
        }
        None
    }

    fn step(&mut self, dt: f64) {
        for c in 0..self.tokens.len() {
            self.tokens[c] = (self.tokens[c] + self.assured[c] * dt).min(self.burst[c]);
            self.ctokens[c] = (self.ctokens[c] + self.ceil[c] * dt).min(self.cburst[c]);
        }
        for (l, leaf) in self.leaves.iter().enumerate() {
            self.backlog[l] += leaf.3 * dt;
        }
        let mut link = self.link * dt;
        for lvl in 0..=self.depth {
            for pi in 0..self.prios.len() {
                let prio = self.prios[pi];
                if link <= 0.0 {
                    return;
                }
                // (leaf, position of its lender in the ancestry)
                let members: Vec<(usize, usize)> = (0..self.leaves.len())
                    .filter(|&l| self.leaves[l].1 == prio && self.backlog[l] > 0.0)
                    .filter_map(|l| self.lender(l).map(|k| (l, k)))
                    .filter(|&(l, k)| self.level[self.leaves[l].0[k]] == lvl)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let want: Vec<f64> = members.iter().map(|&(l, _)| self.backlog[l]).collect();
                let weight: Vec<f64> = members.iter().map(|&(l, _)| self.leaves[l].2).collect();
                let mut limits = vec![Limit {
                    members: (0..members.len()).collect(),
                    room: link,
                }];
                for c in 0..self.tokens.len() {
                    let on_path: Vec<usize> = (0..members.len())
                        .filter(|&i| {
                            let (l, k) = members[i];
                            self.leaves[l].0[..=k].contains(&c)
                        })
                        .collect();
                    if on_path.is_empty() {
                        continue;
                    }
                    limits.push(Limit {
                        members: on_path,
                        room: self.ctokens[c],
                    });
                    let lent: Vec<usize> = (0..members.len())
                        .filter(|&i| {
                            let (l, k) = members[i];
                            self.leaves[l].0[k] == c
                        })
                        .collect();
                    if !lent.is_empty() {
                        limits.push(Limit {
                            members: lent,
                            room: self.tokens[c],
                        });
                    }
                }
                let got = fill(&want, &weight, &mut limits);
                for (&(l, k), &a) in members.iter().zip(&got) {
                    let lender_level = self.level[self.leaves[l].0[k]];
                    for &c in &self.leaves[l].0 {
                        self.ctokens[c] -= a;
                        if self.level[c] >= lender_level {
                            self.tokens[c] -= a;
                        }
                    }
                    self.backlog[l] -= a;
                    self.sent[l] += a;
                    link -= a;
                }
            }
        }
    }
}

fn fluid_rates(tree: &HtbTree, leaves: &[ClassId], offered: &[f64]) -> Vec<f64> {
    let mut f = Fluid::new(tree, leaves, offered);
    let dt = 1e-6;
    for _ in 0..200_000 {
        f.step(dt);
    }
    let before = f.sent.clone();
    let steps = 500_000;
    for _ in 0..steps {
        f.step(dt);
    }
    (0..leaves.len())
        .map(|l| (f.sent[l] - before[l]) * 8.0 / (steps as f64 * dt))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_matches_fluid_model(g in tree_gen(4, 1)) {
        let (tree, leaves, offered, r) = solve(&g, 1);
        let fluid = fluid_rates(&tree, &leaves, &offered);
        for (l, f) in leaves.iter().zip(&fluid) {
            let want = r[l.index()];
            prop_assert!((f - want).abs() <= 0.005 * want, "{}: fluid {f} oracle {want}", tree.name(*l));
        }
    }
}
