//! Island detection and full Newton-Raphson AC power flow (polar form).
//!
//! Closed switches fuse their two buses into one electrical node. Each
//! energized island (one containing a generator) is solved independently
//! from a flat start; de-energized buses report zero voltage.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{PowerError, PowerNetwork};

pub const TOLERANCE_PU: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 20;

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Union keeping the smaller root, so class ids are input-order stable.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Compact labels `0..k` in order of first appearance.
fn relabel(uf: &mut UnionFind, n: usize) -> (Vec<usize>, usize) {
    let mut label = vec![usize::MAX; n];
    let mut out = vec![0; n];
    let mut next = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let r = uf.find(i);
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        *o = label[r];
    }
    (out, next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandMap {
    /// Island id per bus.
    pub island_of: Vec<usize>,
    /// Whether each island holds an in-service generator.
    pub energized: Vec<bool>,
}

impl IslandMap {
    pub fn count(&self) -> usize {
        self.energized.len()
    }

    pub fn energized_buses(&self) -> usize {
        self.island_of.iter().filter(|&&i| self.energized[i]).count()
    }
}

struct Topology {
    /// Electrical node (fused class) of each bus.
    class_of: Vec<usize>,
    n_classes: usize,
    /// Island of each class.
    island_of_class: Vec<usize>,
    energized: Vec<bool>,
}

fn topology(net: &PowerNetwork) -> Topology {
    let n = net.buses.len();
    let mut uf = UnionFind::new(n);
    for s in net.switches.iter().filter(|s| s.closed) {
        uf.union(s.bus, s.element_ref);
    }
    let (class_of, n_classes) = relabel(&mut uf, n);

    let mut uf = UnionFind::new(n_classes);
    for l in net.lines.iter().filter(|l| l.in_service) {
        uf.union(class_of[l.from_bus], class_of[l.to_bus]);
    }
    for t in net.transformers.iter().filter(|t| t.in_service) {
        uf.union(class_of[t.hv_bus], class_of[t.lv_bus]);
    }
    let (island_of_class, n_islands) = relabel(&mut uf, n_classes);
    let mut energized = vec![false; n_islands];
    for g in &net.generators {
        energized[island_of_class[class_of[g.bus]]] = true;
    }
    Topology {
        class_of,
        n_classes,
        island_of_class,
        energized,
    }
}

/// Connected components over in-service branches and closed switches.
pub fn detect_islands(net: &PowerNetwork) -> IslandMap {
    let t = topology(net);
    IslandMap {
        island_of: t.class_of.iter().map(|&c| t.island_of_class[c]).collect(),
        energized: t.energized,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusResult {
    pub vm_pu: f64,
    pub va_deg: f64,
    pub island: usize,
    pub energized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchResult {
    pub name: String,
    pub from_bus: usize,
    pub to_bus: usize,
    pub in_service: bool,
    pub p_from_mw: f64,
    pub q_from_mvar: f64,
    pub p_to_mw: f64,
    pub q_to_mvar: f64,
    pub i_from_ka: f64,
    pub i_to_ka: f64,
    /// Larger of the two end currents.
    pub i_ka: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchResult {
    pub id: String,
    pub closed: bool,
    /// Flow from `bus` towards `element_ref`.
    pub p_mw: f64,
    pub q_mvar: f64,
    pub i_ka: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionResult {
    pub name: String,
    pub bus: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    pub step: Option<usize>,
    pub base_mva: f64,
    pub buses: Vec<BusResult>,
    pub lines: Vec<BranchResult>,
    pub transformers: Vec<BranchResult>,
    pub switches: Vec<SwitchResult>,
    pub generators: Vec<InjectionResult>,
    pub loads: Vec<InjectionResult>,
    pub islands: usize,
    pub energized_islands: usize,
    pub converged: bool,
    /// Largest iteration count over islands.
    pub iterations: usize,
    /// Largest |ΔP|,|ΔQ| mismatch in pu at the returned state.
    pub residual: f64,
}

impl FlowSolution {
    /// Per-island (P, Q) imbalance `Σgen − Σload − Σloss` in pu, computed
    /// from the reported injections and branch flows.
    pub fn island_balance(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0); self.islands];
        for g in &self.generators {
            let i = self.buses[g.bus].island;
            out[i].0 += g.p_mw;
            out[i].1 += g.q_mvar;
        }
        for l in &self.loads {
            let i = self.buses[l.bus].island;
            out[i].0 -= l.p_mw;
            out[i].1 -= l.q_mvar;
        }
        for b in self.lines.iter().chain(&self.transformers) {
            let i = self.buses[b.from_bus].island;
            out[i].0 -= b.p_from_mw + b.p_to_mw;
            out[i].1 -= b.q_from_mvar + b.q_to_mvar;
        }
        out.into_iter()
            .map(|(p, q)| (p / self.base_mva, q / self.base_mva))
            .collect()
    }

    pub fn max_balance_error(&self) -> f64 {
        self.island_balance()
            .into_iter()
            .map(|(p, q)| p.abs().max(q.abs()))
            .fold(0.0, f64::max)
    }
}

/// Series admittances (pu on system base) of every in-service branch,
/// lines first then transformers, as (from_bus, to_bus, y).
fn branch_admittances(net: &PowerNetwork) -> (Vec<Option<Complex64>>, Vec<Option<Complex64>>) {
    let lines = net
        .lines
        .iter()
        .map(|l| {
            l.in_service.then(|| {
                let kv = net.buses[l.from_bus].nominal_kv;
                let z_base = kv * kv / net.base_mva;
                let z = Complex64::new(l.r_ohm_per_km, l.x_ohm_per_km) * l.length_km / z_base;
                1.0 / z
            })
        })
        .collect();
    let trafos = net
        .transformers
        .iter()
        .map(|t| {
            t.in_service.then(|| {
                let scale = net.base_mva / t.sn_mva;
                let z_abs = t.vk_percent / 100.0 * scale;
                let r = t.vkr_percent / 100.0 * scale;
                let x = (z_abs * z_abs - r * r).max(0.0).sqrt();
                1.0 / Complex64::new(r, x)
            })
        })
        .collect();
    (lines, trafos)
}

#[derive(Clone, Copy, PartialEq)]
enum NodeType {
    Slack,
    Pv,
    Pq,
}

struct IslandResult {
    vm: Vec<f64>,
    va: Vec<f64>,
    converged: bool,
    iterations: usize,
    residual: f64,
}

/// Newton-Raphson on one island. `g`/`b` are the dense admittance parts,
/// `adj` the nonzero pattern per row (including the diagonal).
#[allow(clippy::too_many_arguments)]
fn newton_raphson(
    g: &DMatrix<f64>,
    b: &DMatrix<f64>,
    adj: &[Vec<usize>],
    kind: &[NodeType],
    p_spec: &[f64],
    q_spec: &[f64],
    v_set: &[f64],
) -> IslandResult {
    let n = kind.len();
    let mut vm: Vec<f64> = (0..n)
        .map(|i| if kind[i] == NodeType::Pq { 1.0 } else { v_set[i] })
        .collect();
    let mut va = vec![0.0; n];

    // Unknown ordering: angles of non-slack nodes, then magnitudes of PQ nodes.
    let ang: Vec<usize> = (0..n).filter(|&i| kind[i] != NodeType::Slack).collect();
    let mag: Vec<usize> = (0..n).filter(|&i| kind[i] == NodeType::Pq).collect();
    let mut ang_pos = vec![usize::MAX; n];
    let mut mag_pos = vec![usize::MAX; n];
    for (k, &i) in ang.iter().enumerate() {
        ang_pos[i] = k;
    }
    for (k, &i) in mag.iter().enumerate() {
        mag_pos[i] = ang.len() + k;
    }
    let dim = ang.len() + mag.len();

    let injections = |vm: &[f64], va: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            for &k in &adj[i] {
                let t = va[i] - va[k];
                let (s, c) = t.sin_cos();
                p[i] += vm[i] * vm[k] * (g[(i, k)] * c + b[(i, k)] * s);
                q[i] += vm[i] * vm[k] * (g[(i, k)] * s - b[(i, k)] * c);
            }
        }
        (p, q)
    };
    let mismatch = |p: &[f64], q: &[f64]| -> (DVector<f64>, f64) {
        let mut f = DVector::zeros(dim);
        for &i in &ang {
            f[ang_pos[i]] = p_spec[i] - p[i];
        }
        for &i in &mag {
            f[mag_pos[i]] = q_spec[i] - q[i];
        }
        let norm = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        (f, norm)
    };

    let mut iterations = 0;
    loop {
        let (p, q) = injections(&vm, &va);
        let (f, norm) = mismatch(&p, &q);
        if norm < TOLERANCE_PU || dim == 0 {
            return IslandResult {
                vm,
                va,
                converged: true,
                iterations,
                residual: norm,
            };
        }
        if iterations >= MAX_ITERATIONS {
            return IslandResult {
                vm,
                va,
                converged: false,
                iterations,
                residual: norm,
            };
        }
        iterations += 1;

        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for &i in ang.iter() {
            let row_p = ang_pos[i];
            let row_q = mag_pos[i];
            for &k in &adj[i] {
                let t = va[i] - va[k];
                let (s, c) = t.sin_cos();
                let (gik, bik) = (g[(i, k)], b[(i, k)]);
                if i == k {
                    let dp_da = -q[i] - bik * vm[i] * vm[i];
                    let dp_dv = p[i] / vm[i] + gik * vm[i];
                    let dq_da = p[i] - gik * vm[i] * vm[i];
                    let dq_dv = q[i] / vm[i] - bik * vm[i];
                    jac[(row_p, ang_pos[i])] = dp_da;
                    if row_q != usize::MAX {
                        jac[(row_p, row_q)] = dp_dv;
                        jac[(row_q, ang_pos[i])] = dq_da;
                        jac[(row_q, row_q)] = dq_dv;
                    }
                } else {
                    let h = vm[i] * vm[k] * (gik * s - bik * c);
                    let nn = vm[i] * (gik * c + bik * s);
                    let m = -vm[i] * vm[k] * (gik * c + bik * s);
                    let l = vm[i] * (gik * s - bik * c);
                    if ang_pos[k] != usize::MAX {
                        jac[(row_p, ang_pos[k])] = h;
                        if row_q != usize::MAX {
                            jac[(row_q, ang_pos[k])] = m;
                        }
                    }
                    if mag_pos[k] != usize::MAX {
                        jac[(row_p, mag_pos[k])] = nn;
                        if row_q != usize::MAX {
                            jac[(row_q, mag_pos[k])] = l;
                        }
                    }
                }
            }
        }
        let Some(dx) = jac.lu().solve(&f) else {
            return IslandResult {
                vm,
                va,
                converged: false,
                iterations,
                residual: norm,
            };
        };
        for &i in &ang {
            va[i] += dx[ang_pos[i]];
        }
        for &i in &mag {
            vm[i] += dx[mag_pos[i]];
        }
    }
}

fn current_ka(s_mva: Complex64, vm: f64, kv: f64) -> f64 {
    if vm <= 0.0 {
        0.0
    } else {
        s_mva.norm() / (3f64.sqrt() * vm * kv)
    }
}

/// Solve every energized island of `net`.
pub fn solve_power_flow(net: &PowerNetwork) -> Result<FlowSolution, PowerError> {
    let topo = topology(net);
    let nb = net.buses.len();
    let nc = topo.n_classes;
    let base = net.base_mva;
    let (y_lines, y_trafos) = branch_admittances(net);

    // Branch endpoints as classes; self-loops carry nothing.
    let mut branches: Vec<(usize, usize, Complex64)> = Vec::new();
    for (l, y) in net.lines.iter().zip(&y_lines) {
        if let Some(y) = y {
            branches.push((topo.class_of[l.from_bus], topo.class_of[l.to_bus], *y));
        }
    }
    for (t, y) in net.transformers.iter().zip(&y_trafos) {
        if let Some(y) = y {
            branches.push((topo.class_of[t.hv_bus], topo.class_of[t.lv_bus], *y));
        }
    }

    let mut p_spec = vec![0.0; nc];
    let mut q_spec = vec![0.0; nc];
    for g in &net.generators {
        p_spec[topo.class_of[g.bus]] += g.p_mw / base;
    }
    for l in &net.loads {
        p_spec[topo.class_of[l.bus]] -= l.p_mw / base;
        q_spec[topo.class_of[l.bus]] -= l.q_mvar / base;
    }

    let n_islands = topo.energized.len();
    let mut class_vm = vec![0.0; nc];
    let mut class_va = vec![0.0; nc];
    let mut converged = true;
    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    let mut slack_gen_of_island = vec![usize::MAX; n_islands];

    for (island, slack_slot) in slack_gen_of_island.iter_mut().enumerate() {
        if !topo.energized[island] {
            continue;
        }
        let members: Vec<usize> = (0..nc).filter(|&c| topo.island_of_class[c] == island).collect();
        let mut local = vec![usize::MAX; nc];
        for (k, &c) in members.iter().enumerate() {
            local[c] = k;
        }
        let gens: Vec<usize> = (0..net.generators.len())
            .filter(|&gi| topo.island_of_class[topo.class_of[net.generators[gi].bus]] == island)
            .collect();
        let slack = gens
            .iter()
            .copied()
            .find(|&gi| net.generators[gi].is_slack)
            .or_else(|| gens.first().copied())
            .ok_or(PowerError::NoSlack { island })?;
        let n = members.len();
        let mut kind = vec![NodeType::Pq; n];
        let mut v_set = vec![1.0; n];
        for &gi in gens.iter().rev() {
            let k = local[topo.class_of[net.generators[gi].bus]];
            kind[k] = NodeType::Pv;
            v_set[k] = net.generators[gi].vm_pu;
        }
        let sk = local[topo.class_of[net.generators[slack].bus]];
        kind[sk] = NodeType::Slack;
        v_set[sk] = net.generators[slack].vm_pu;
        *slack_slot = slack;

        let mut g = DMatrix::<f64>::zeros(n, n);
        let mut b = DMatrix::<f64>::zeros(n, n);
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(f, t, y) in &branches {
            if topo.island_of_class[f] != island || f == t {
                continue;
            }
            let (i, k) = (local[f], local[t]);
            g[(i, i)] += y.re;
            b[(i, i)] += y.im;
            g[(k, k)] += y.re;
            b[(k, k)] += y.im;
            g[(i, k)] -= y.re;
            b[(i, k)] -= y.im;
            g[(k, i)] -= y.re;
            b[(k, i)] -= y.im;
            if !adj[i].contains(&k) {
                adj[i].push(k);
                adj[k].push(i);
            }
        }
        let ps: Vec<f64> = members.iter().map(|&c| p_spec[c]).collect();
        let qs: Vec<f64> = members.iter().map(|&c| q_spec[c]).collect();
        let r = newton_raphson(&g, &b, &adj, &kind, &ps, &qs, &v_set);
        converged &= r.converged;
        iterations = iterations.max(r.iterations);
        residual = residual.max(r.residual);
        for (k, &c) in members.iter().enumerate() {
            class_vm[c] = r.vm[k];
            class_va[c] = r.va[k];
        }
    }

    let voltage = |bus: usize| {
        let c = topo.class_of[bus];
        Complex64::from_polar(class_vm[c], class_va[c])
    };
    let buses: Vec<BusResult> = (0..nb)
        .map(|i| {
            let c = topo.class_of[i];
            let island = topo.island_of_class[c];
            BusResult {
                vm_pu: class_vm[c],
                va_deg: class_va[c].to_degrees(),
                island,
                energized: topo.energized[island],
            }
        })
        .collect();

    // Net injection per bus (MVA) used for the switch flows below.
    let mut bus_injection = vec![Complex64::new(0.0, 0.0); nb];
    let branch_result = |name: &str, from: usize, to: usize, y: Option<Complex64>, bus_injection: &mut [Complex64]| {
        let (vf, vt) = (voltage(from), voltage(to));
        let (sf, st) = match y {
            Some(y) if buses[from].energized => {
                let i = y * (vf - vt);
                (vf * i.conj() * base, vt * (-i).conj() * base)
            }
            _ => (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
        };
        bus_injection[from] -= sf;
        bus_injection[to] -= st;
        let i_from_ka = current_ka(sf, buses[from].vm_pu, net.buses[from].nominal_kv);
        let i_to_ka = current_ka(st, buses[to].vm_pu, net.buses[to].nominal_kv);
        BranchResult {
            name: name.to_string(),
            from_bus: from,
            to_bus: to,
            in_service: y.is_some(),
            p_from_mw: sf.re,
            q_from_mvar: sf.im,
            p_to_mw: st.re,
            q_to_mvar: st.im,
            i_from_ka,
            i_to_ka,
            i_ka: i_from_ka.max(i_to_ka),
        }
    };
    let lines: Vec<BranchResult> = net
        .lines
        .iter()
        .zip(&y_lines)
        .map(|(l, y)| branch_result(&l.name, l.from_bus, l.to_bus, *y, &mut bus_injection))
        .collect();
    let transformers: Vec<BranchResult> = net
        .transformers
        .iter()
        .zip(&y_trafos)
        .map(|(t, y)| branch_result(&t.name, t.hv_bus, t.lv_bus, *y, &mut bus_injection))
        .collect();

    let loads: Vec<InjectionResult> = net
        .loads
        .iter()
        .map(|l| {
            let on = buses[l.bus].energized;
            let s = if on {
                Complex64::new(l.p_mw, l.q_mvar)
            } else {
                Complex64::new(0.0, 0.0)
            };
            bus_injection[l.bus] -= s;
            InjectionResult {
                name: l.name.clone(),
                bus: l.bus,
                p_mw: s.re,
                q_mvar: s.im,
            }
        })
        .collect();

    // Generator outputs: scheduled P, except the slack which closes the
    // balance of its node; reactive power closes the balance at every
    // generator node and goes to the first generator there.
    let mut class_load = vec![Complex64::new(0.0, 0.0); nc];
    for l in &loads {
        class_load[topo.class_of[l.bus]] += Complex64::new(l.p_mw, l.q_mvar);
    }
    let mut class_branch = vec![Complex64::new(0.0, 0.0); nc];
    for br in lines.iter().chain(&transformers) {
        class_branch[topo.class_of[br.from_bus]] += Complex64::new(br.p_from_mw, br.q_from_mvar);
        class_branch[topo.class_of[br.to_bus]] += Complex64::new(br.p_to_mw, br.q_to_mvar);
    }
    // The slack generator, or else the first generator of a node, absorbs
    // that node's balance.
    let mut absorber_of_class = vec![usize::MAX; nc];
    for (gi, g) in net.generators.iter().enumerate() {
        let c = topo.class_of[g.bus];
        if absorber_of_class[c] == usize::MAX {
            absorber_of_class[c] = gi;
        }
    }
    for &gi in slack_gen_of_island.iter().filter(|&&g| g != usize::MAX) {
        absorber_of_class[topo.class_of[net.generators[gi].bus]] = gi;
    }
    let generators: Vec<InjectionResult> = net
        .generators
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let c = topo.class_of[g.bus];
            let needed = class_load[c] + class_branch[c];
            let others_p: f64 = net
                .generators
                .iter()
                .enumerate()
                .filter(|(gj, o)| *gj != gi && topo.class_of[o.bus] == c)
                .map(|(_, o)| o.p_mw)
                .sum();
            let absorbs = absorber_of_class[c] == gi;
            let is_slack = slack_gen_of_island[topo.island_of_class[c]] == gi;
            let p = if is_slack { needed.re - others_p } else { g.p_mw };
            let q = if absorbs { needed.im } else { 0.0 };
            bus_injection[g.bus] += Complex64::new(p, q);
            InjectionResult {
                name: g.name.clone(),
                bus: g.bus,
                p_mw: p,
                q_mvar: q,
            }
        })
        .collect();

    let switches = switch_flows(net, &buses, &bus_injection);

    Ok(FlowSolution {
        step: net.step,
        base_mva: base,
        buses,
        lines,
        transformers,
        switches,
        generators,
        loads,
        islands: n_islands,
        energized_islands: topo.energized.iter().filter(|e| **e).count(),
        converged,
        iterations,
        residual,
    })
}

/// Flows through closed switches from per-bus injections: within each
/// fused node the closed switches form a forest, and the flow through an
/// edge equals the net injection of the subtree behind it. Switches that
/// close a loop of switches carry no flow.
fn switch_flows(net: &PowerNetwork, buses: &[BusResult], injection: &[Complex64]) -> Vec<SwitchResult> {
    let nb = net.buses.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nb];
    for (si, s) in net.switches.iter().enumerate() {
        if s.closed && s.bus != s.element_ref {
            adj[s.bus].push((s.element_ref, si));
            adj[s.element_ref].push((s.bus, si));
        }
    }
    let mut parent_edge = vec![usize::MAX; nb];
    let mut visited = vec![false; nb];
    let mut order = Vec::with_capacity(nb);
    for root in 0..nb {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            order.push(u);
            for &(v, si) in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    parent_edge[v] = si;
                    stack.push(v);
                }
            }
        }
    }
    let mut subtree: Vec<Complex64> = injection.to_vec();
    let mut edge_flow = vec![Complex64::new(0.0, 0.0); net.switches.len()];
    for &v in order.iter().rev() {
        let si = parent_edge[v];
        if si == usize::MAX {
            continue;
        }
        let s = &net.switches[si];
        let parent = if s.bus == v { s.element_ref } else { s.bus };
        // Flow from parent into v is what the subtree at v consumes.
        let into_child = -subtree[v];
        edge_flow[si] = if s.bus == parent { into_child } else { -into_child };
        let sv = subtree[v];
        subtree[parent] += sv;
    }
    net.switches
        .iter()
        .zip(edge_flow)
        .map(|(s, f)| {
            let f = if buses[s.bus].energized && s.closed { f } else { Complex64::new(0.0, 0.0) };
            SwitchResult {
                id: s.id.clone(),
                closed: s.closed,
                p_mw: f.re,
                q_mvar: f.im,
                i_ka: current_ka(f, buses[s.bus].vm_pu, net.buses[s.bus].nominal_kv),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::*;

    /// Two buses joined by one line; the slack holds bus 0 at 1 pu.
    pub(crate) fn two_bus(p_mw: f64, q_mvar: f64, r_pu: f64, x_pu: f64) -> PowerNetwork {
        // Base 100 MVA, 10 kV: z_base = 1 Ω, so ohms equal pu for 1 km.
        PowerNetwork {
            buses: vec![
                Bus { id: "N0".into(), nominal_kv: 10.0, substation: "S".into(), voltage_level: "V".into() },
                Bus { id: "N1".into(), nominal_kv: 10.0, substation: "S".into(), voltage_level: "V".into() },
            ],
            generators: vec![Generator {
                name: "G".into(),
                bus: 0,
                rated_p_mw: 0.0,
                p_mw: 0.0,
                vm_pu: 1.0,
                is_slack: true,
                sequence: None,
            }],
            loads: vec![Load {
                name: "L".into(),
                bus: 1,
                rated_p_mw: p_mw,
                rated_q_mvar: q_mvar,
                p_mw,
                q_mvar,
                sequence: None,
            }],
            lines: vec![Line {
                name: "Ln".into(),
                from_bus: 0,
                to_bus: 1,
                length_km: 1.0,
                r_ohm_per_km: r_pu,
                x_ohm_per_km: x_pu,
                in_service: true,
                sequence: None,
            }],
            transformers: vec![],
            switches: vec![],
            n_steps: 1,
            base_mva: 100.0,
            step: None,
        }
    }

    #[test]
    fn lossless_two_bus_matches_closed_form() {
        let sol = solve_power_flow(&two_bus(50.0, 0.0, 0.0, 0.1)).unwrap();
        // |V2|² = (1 + sqrt(1 − 4P²x²)) / 2 for a lossless line, Q = 0.
        let (p, x) = (0.5f64, 0.1f64);
        let v2 = ((1.0 + (1.0 - 4.0 * p * p * x * x).sqrt()) / 2.0).sqrt();
        assert!(sol.converged);
        assert!((sol.buses[1].vm_pu - v2).abs() < 1e-9);
        assert!(sol.max_balance_error() < 1e-9);
    }

    #[test]
    fn no_load_is_flat() {
        let sol = solve_power_flow(&two_bus(0.0, 0.0, 0.01, 0.1)).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.buses[1].vm_pu, 1.0);
        assert_eq!(sol.buses[1].va_deg, 0.0);
        assert_eq!(sol.lines[0].p_from_mw, 0.0);
    }

    #[test]
    fn open_line_de_energizes_load() {
        let mut net = two_bus(10.0, 1.0, 0.01, 0.1);
        net.lines[0].in_service = false;
        let sol = solve_power_flow(&net).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.buses[1].vm_pu, 0.0);
        assert!(!sol.buses[1].energized);
        assert_eq!(sol.loads[0].p_mw, 0.0);
        assert_eq!(detect_islands(&net).count(), 2);
    }

    #[test]
    fn switch_carries_load_flow() {
        let mut net = two_bus(10.0, 2.0, 0.01, 0.1);
        net.buses.push(Bus { id: "N2".into(), nominal_kv: 10.0, substation: "S".into(), voltage_level: "V".into() });
        net.loads[0].bus = 2;
        net.switches.push(Switch {
            id: "CB".into(),
            bus: 1,
            element_ref: 2,
            closed: true,
            kind: SwitchKind::Cbr,
            scheduled: true,
            sequence: None,
            forced: None,
        });
        let sol = solve_power_flow(&net).unwrap();
        assert!((sol.switches[0].p_mw - 10.0).abs() < 1e-9);
        assert!((sol.switches[0].q_mvar - 2.0).abs() < 1e-9);
        net.switches[0].closed = false;
        let sol = solve_power_flow(&net).unwrap();
        assert_eq!(sol.switches[0].p_mw, 0.0);
        assert_eq!(sol.buses[2].vm_pu, 0.0);
    }
}
