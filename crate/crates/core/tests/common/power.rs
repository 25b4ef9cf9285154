//! Power-flow oracles independent of the solver's flow reporting.

use num_complex::Complex64;
use sgcr_core::power::{Bus, FlowSolution, Generator, Line, Load, PowerNetwork};
use sgcr_core::sample::{sample_bundle, SampleVariant};
use sgcr_core::scenario::compile_range;

pub fn two_bus(p_mw: f64, q_mvar: f64, r: f64, x: f64) -> PowerNetwork {
    let bus = |id: &str| Bus {
        id: id.into(),
        nominal_kv: 10.0,
        substation: "S".into(),
        voltage_level: "V".into(),
    };
    PowerNetwork {
        buses: vec![bus("N0"), bus("N1")],
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
            name: "Line".into(),
            from_bus: 0,
            to_bus: 1,
            length_km: 1.0,
            r_ohm_per_km: r,
            x_ohm_per_km: x,
            in_service: true,
            sequence: None,
        }],
        transformers: Vec::new(),
        switches: Vec::new(),
        n_steps: 1,
        base_mva: 100.0,
        step: None,
    }
}

/// Receiving-end voltage magnitude of a source at 1∠0 feeding P + jQ through
/// R + jX (all pu): the larger root of
/// V⁴ + (2(PR + QX) − 1)V² + (P² + Q²)(R² + X²) = 0.
pub fn two_bus_oracle(p: f64, q: f64, r: f64, x: f64) -> f64 {
    let b = 1.0 - 2.0 * (p * r + q * x);
    let c = (p * p + q * q) * (r * r + x * x);
    ((b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt()
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    parent[i] = r;
    r
}

/// Largest nodal power mismatch in pu, with branch flows recomputed from the
/// reported bus voltages and buses joined by closed switches treated as one
/// node.
pub fn kcl_mismatch(net: &PowerNetwork, sol: &FlowSolution) -> f64 {
    let n = net.buses.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for s in net.switches.iter().filter(|s| s.closed) {
        let (a, b) = (find(&mut parent, s.bus), find(&mut parent, s.element_ref));
        parent[a] = b;
    }
    let v: Vec<Complex64> = sol
        .buses
        .iter()
        .map(|b| Complex64::from_polar(b.vm_pu, b.va_deg.to_radians()))
        .collect();
    let mut s = vec![Complex64::new(0.0, 0.0); n];
    let base = net.base_mva;
    for g in &sol.generators {
        let k = find(&mut parent, g.bus);
        s[k] += Complex64::new(g.p_mw, g.q_mvar) / base;
    }
    for l in &sol.loads {
        let k = find(&mut parent, l.bus);
        s[k] -= Complex64::new(l.p_mw, l.q_mvar) / base;
    }
    let mut branch = |f: usize, t: usize, y: Complex64| {
        let i_ft = (v[f] - v[t]) * y;
        let (kf, kt) = (find(&mut parent, f), find(&mut parent, t));
        s[kf] -= v[f] * i_ft.conj();
        s[kt] -= v[t] * (-i_ft).conj();
    };
    for l in net.lines.iter().filter(|l| l.in_service) {
        let kv = net.buses[l.from_bus].nominal_kv;
        let z = Complex64::new(l.r_ohm_per_km, l.x_ohm_per_km) * l.length_km / (kv * kv / base);
        branch(l.from_bus, l.to_bus, 1.0 / z);
    }
    for t in net.transformers.iter().filter(|t| t.in_service) {
        let scale = base / t.sn_mva;
        let zk = t.vk_percent / 100.0 * scale;
        let r = t.vkr_percent / 100.0 * scale;
        branch(t.hv_bus, t.lv_bus, 1.0 / Complex64::new(r, (zk * zk - r * r).sqrt()));
    }
    s.iter().map(|x| x.re.abs().max(x.im.abs())).fold(0.0, f64::max)
}

pub fn sample_network(variant: SampleVariant) -> PowerNetwork {
    let spec = compile_range(&sample_bundle(variant, 1)).expect("sample compiles");
    spec.power
}
