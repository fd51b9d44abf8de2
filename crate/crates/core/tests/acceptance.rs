//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use transient_bench_core::analysis::{
    dominant_frequency, lattice_oracle, lc_step_oracle, natural_frequency, peak_overvoltage,
    travel_metrics, Trace, DEFAULT_EXCLUDE_BELOW_HZ,
};
use transient_bench_core::scenarios::{
    build, parse_scenario, run_scenario, BuiltScenario, ScenarioConfig,
};
use transient_bench_core::solver::{self, Solver};
use transient_bench_core::transformer::{
    build_model, leakage_inductance, tap_ratio, BuildOptions, Side, TransformerNameplate,
};
use transient_bench_core::{Circuit, Element, NodeRef, ProbeTarget, WaveformSet};

const G: NodeRef = NodeRef::GROUND;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

fn scenario(text: &str) -> (ScenarioConfig, BuiltScenario, WaveformSet) {
    let cfg = parse_scenario(text).expect("scenario parses");
    let built = build(&cfg).expect("scenario builds");
    let w = run_scenario(&cfg).expect("scenario runs");
    (cfg, built, w)
}

fn probe<'a>(w: &'a WaveformSet, name: &str) -> Trace<'a> {
    Trace::from_set(w, name).unwrap_or_else(|| panic!("probe {name}"))
}

fn peak_pu(w: &WaveformSet, name: &str, u: f64) -> f64 {
    peak_overvoltage(&probe(w, name), u).unwrap().per_unit
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dc_source(node: NodeRef, v: f64, r: f64) -> Element {
    Element::VoltageSource {
        n_pos: node,
        amplitude: v,
        freq: 0.0,
        phase: 0.0,
        r_thev: r,
        l_thev: 0.0,
        r_parallel: None,
    }
}

fn criterion_1() -> Outcome {
    let np = TransformerNameplate::zvd();
    let l = leakage_inductance(&np, 11, Side::Lv).unwrap();
    outcome(
        (l - 12.45e-3).abs() <= 0.01e-3,
        format!(
            "leakage inductance {:.4} mH (target 12.45 +/- 0.01 mH)",
            l * 1e3
        ),
    )
}

fn criterion_2() -> Outcome {
    let f1 = natural_frequency(12.45e-3, 13.2e-9).unwrap();
    let f2 = natural_frequency(12.45e-3, 8.8e-9).unwrap();
    let l_b = leakage_inductance(&TransformerNameplate::ddw(), 11, Side::Lv).unwrap();
    let f3 = natural_frequency(l_b, 118e-9).unwrap();
    let formulas = within(f1, 12.4e3, 0.01) && within(f2, 15.2e3, 0.01) && within(f3, 3.76e3, 0.02);

    let start = Instant::now();
    let (_, built, w) = scenario("case_kind = \"case_b\"\n[sim]\ndt_s = 1e-6\nt_end_s = 0.05\n");
    let elapsed = start.elapsed().as_secs_f64();
    let t0 = built.event_time;
    let peak = dominant_frequency(&probe(&w, "lv_a"), t0, t0 + 40e-3, DEFAULT_EXCLUDE_BELOW_HZ)
        .unwrap()
        .expect("oscillation present");
    let sim_ok = within(peak.frequency, f3, 0.02);
    outcome(
        formulas && sim_ok && elapsed < 10.0,
        format!(
            "formula {:.0} / {:.0} / {:.0} Hz; simulated Case B LV {:.0} Hz ({:+.2}% vs formula); run {:.2} s",
            f1,
            f2,
            f3,
            peak.frequency,
            100.0 * (peak.frequency / f3 - 1.0),
            elapsed
        ),
    )
}

fn criterion_3() -> Outcome {
    let (l, c): (f64, f64) = (12.45e-3, 13.2e-9);
    let t0 = 2.0 * PI * (l * c).sqrt();
    let dt = t0 / 200.0;
    let mut circuit = Circuit::new();
    circuit
        .add_element(dc_source(NodeRef(1), 67e3, 0.0))
        .unwrap();
    circuit
        .add_element(Element::Switch {
            n1: NodeRef(1),
            n2: NodeRef(2),
            t_close: Some(10.0 * dt),
        })
        .unwrap();
    circuit
        .add_element(Element::Inductor {
            n1: NodeRef(2),
            n2: NodeRef(3),
            l,
            i0: 0.0,
        })
        .unwrap();
    circuit
        .add_element(Element::Capacitor {
            n1: NodeRef(3),
            n2: G,
            c,
            v0: 0.0,
        })
        .unwrap();
    circuit.add_probe("vc", ProbeTarget::Voltage(NodeRef(3)));
    let w = solver::run(&circuit, dt, 3.0 * t0).unwrap();
    let peak = max_abs(w.probe("vc").unwrap());
    outcome(
        within(peak, 134e3, 0.005),
        format!(
            "67 kV step -> {:.2} kV peak ({:.4}x) at dt = T0/200",
            peak / 1e3,
            peak / 67e3
        ),
    )
}

fn criterion_4() -> Outcome {
    let tau = travel_metrics(7100.0, 150e6).unwrap().tau;
    let period = 4.0 * tau;
    let (_, built, w) = scenario("case_kind = \"case_a\"\nphases = 1\n");
    let t0 = built.event_time;
    let peak = dominant_frequency(&probe(&w, "hv"), t0, t0 + 10e-3, DEFAULT_EXCLUDE_BELOW_HZ)
        .unwrap()
        .expect("oscillation present");
    let measured = 1.0 / peak.frequency;
    let square = within(measured, period, 0.02) && within(peak.frequency, 5.28e3, 0.02);

    let (z_c, lt, r_s) = (40.0, 10e-6, 20.0);
    let mut c = Circuit::new();
    c.add_element(dc_source(NodeRef(1), 1.0, r_s)).unwrap();
    c.add_element(Element::BergeronLine {
        n_send: NodeRef(1),
        n_recv: NodeRef(2),
        z_c,
        tau: lt,
        r_total: 0.0,
    })
    .unwrap();
    c.add_probe("recv", ProbeTarget::Voltage(NodeRef(2)));
    let lw = solver::run(&c, lt / 20.0, 6.0 * lt).unwrap();
    let recv = lw.probe("recv").unwrap();
    // sample mid-plateau to stay clear of the arrival instants
    let mut worst = 0.0f64;
    for k in 0..6 {
        let t = (k as f64 + 0.5) * lt;
        let exact = lattice_oracle(z_c, lt, r_s, 1.0, t);
        let sim = recv[lw.index_at(t)];
        worst = worst.max((sim - exact).abs() / 2.0);
    }
    let lattice = worst <= 0.02;
    outcome(
        square && lattice,
        format!(
            "HV period {:.1} us vs 4 tau {:.1} us, dominant {:.0} Hz; lattice max error {:.2e} of the 2x plateau",
            measured * 1e6,
            period * 1e6,
            peak.frequency,
            worst
        ),
    )
}

fn criterion_5() -> Outcome {
    let (cfg, built, w) = scenario("case_kind = \"case_a\"\nphases = 1\n[sim]\ndt_s = 0.5e-6\n");
    let cable = cfg.primary_cable.unwrap();
    let model = build_model(
        &cfg.transformer.nameplate,
        cfg.transformer.tap,
        &BuildOptions::default(),
    )
    .unwrap();
    let l_hv = model.l_leak_lv * model.ratio * model.ratio;
    let z_ratio = 2.0 * PI * 5e3 * l_hv / cable.z_c_ohm;

    let delta = 10e-6;
    let t0 = built.event_time;
    let bus = w.probe("bus").unwrap();
    let hv = w.probe("hv").unwrap();
    let pre = bus[w.index_at(t0) - 1];
    let incident = bus[w.index_at(t0 + delta)];
    let arrived = hv[w.index_at(t0 + cable.tau() + delta)];
    let ratio = arrived / incident;
    outcome(
        z_ratio >= 50.0 && within(ratio, 2.0, 0.03),
        format!(
            "HV plateau / incident = {ratio:.4} (incident {:.1} kV from {:.1} kV bus); transformer surge impedance {z_ratio:.0}x z_c",
            incident / 1e3,
            pre / 1e3
        ),
    )
}

fn criterion_6() -> Outcome {
    let doc = "case_kind = \"case_b\"\nphases = 1\nprobes = [\"hv\", \"lv\"]\n\
               [source]\nsc_current_a = 1e9\nsurge_impedance_ohm = 0.0\n\
               [secondary]\nlength_m = 40000.0\nz_c_ohm = 200.0\n\
               [sim]\ndt_s = 0.5e-6\nt_end_s = 0.0055\n";
    let (cfg, _, w) = scenario(doc);
    let ratio = tap_ratio(&cfg.transformer.nameplate, cfg.transformer.tap).unwrap();
    let hv = w.probe("hv").unwrap();
    let lv = w.probe("lv").unwrap();
    let amplitude = (2.0f64 / 3.0).sqrt() * cfg.source.u_ll_rms_v;
    let start = hv
        .iter()
        .position(|v| v.abs() > 0.01 * amplitude)
        .expect("breaker closes");
    let tau_c = 75e-6;
    let mut worst = 0.0f64;
    let mut k = start;
    while w.time(k) - w.time(start) <= 3.0 * tau_c {
        let t = w.time(k) - w.time(start);
        let envelope = lv[k] / (hv[k] / ratio);
        worst = worst.max((envelope - (1.0 - (-t / tau_c).exp())).abs());
        k += 1;
    }
    outcome(
        worst <= 0.03,
        format!(
            "LV/(HV/n) vs 1 - exp(-t/75 us) over [0, 225 us]: max deviation {:.4}",
            worst
        ),
    )
}

fn case_b_lv_peak(tap: u32) -> f64 {
    let (_, _, w) = scenario(&format!(
        "case_kind = \"case_b\"\nphases = 1\n[transformer]\ntap = {tap}\n"
    ));
    peak_pu(&w, "lv", 52.5e3)
}

fn criterion_7() -> Outcome {
    let p21 = case_b_lv_peak(21);
    let p11 = case_b_lv_peak(11);
    let p1 = case_b_lv_peak(1);
    let (r_hi, r_lo) = (p21 / p11, p1 / p11);
    outcome(
        within(r_hi, 150.0 / 127.5, 0.02) && within(r_lo, 150.0 / 172.5, 0.02),
        format!("tap21/tap11 = {r_hi:.4} (target 1.176), tap1/tap11 = {r_lo:.4} (target 0.870)"),
    )
}

fn criterion_8() -> Outcome {
    let freq = |variant: &str| {
        let (_, built, w) = scenario(&format!(
            "case_kind = \"case_b\"\nphases = 1\nvariant = \"{variant}\"\n"
        ));
        let t0 = built.event_time;
        dominant_frequency(&probe(&w, "lv"), t0, t0 + 20e-3, DEFAULT_EXCLUDE_BELOW_HZ)
            .unwrap()
            .expect("oscillation present")
    };
    let base = freq("base");
    let alone = freq("line_alone");
    let diff = (base.frequency - alone.frequency).abs();
    outcome(
        diff <= base.bin_width,
        format!(
            "transformer+line {:.1} Hz, line alone {:.1} Hz, bin {:.1} Hz",
            base.frequency, alone.frequency, base.bin_width
        ),
    )
}

fn criterion_9() -> Outcome {
    let doc = |saturable: bool| {
        format!(
            "case_kind = \"case_b\"\nphases = 1\nprobes = [\"flux\", \"i_mag\"]\n\
             [secondary]\nkind = \"none\"\n[transformer]\nsaturable = {saturable}\n\
             [switching]\nmode = \"phase_a_zero\"\n[sim]\ndt_s = 2e-6\nt_end_s = 0.1\n"
        )
    };
    let (cfg, _, w) = scenario(&doc(false));
    let np = &cfg.transformer.nameplate;
    let model = build_model(np, cfg.transformer.tap, &BuildOptions::default()).unwrap();
    let w_rad = 2.0 * PI * cfg.source.f_hz;
    let v_lv = (2.0f64 / 3.0).sqrt() * cfg.source.u_ll_rms_v / model.ratio;
    let steady_flux = v_lv / w_rad;
    let flux_ratio = max_abs(w.probe("flux").unwrap()) / steady_flux;

    let (_, _, ws) = scenario(&doc(true));
    let i = ws.probe("i_mag").unwrap();
    let unsat_peak = v_lv / (w_rad * model.l_mag_lv);
    let peak = i.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let trough = i.iter().copied().fold(f64::INFINITY, f64::min);
    let unipolar = trough >= -unsat_peak * 1.05;
    outcome(
        within(flux_ratio, 2.0, 0.02) && peak > 10.0 * unsat_peak && unipolar,
        format!(
            "peak flux {flux_ratio:.4}x steady state; inrush {:.0} A = {:.0}x unsaturated peak, most negative {:.2} A",
            peak,
            peak / unsat_peak,
            trough
        ),
    )
}

fn series_rlc(r: f64, l: f64, c: f64) -> Circuit {
    let mut k = Circuit::new();
    k.add_element(dc_source(NodeRef(1), 1.0, 0.0)).unwrap();
    k.add_element(Element::Resistor {
        n1: NodeRef(1),
        n2: NodeRef(2),
        r,
    })
    .unwrap();
    k.add_element(Element::Inductor {
        n1: NodeRef(2),
        n2: NodeRef(3),
        l,
        i0: 0.0,
    })
    .unwrap();
    k.add_element(Element::Capacitor {
        n1: NodeRef(3),
        n2: G,
        c,
        v0: 0.0,
    })
    .unwrap();
    k.add_probe("vc", ProbeTarget::Voltage(NodeRef(3)));
    k
}

fn rlc_error(dt: f64) -> f64 {
    let (r, l, c) = (100.0, 12.45e-3, 13.2e-9);
    let w = solver::run(&series_rlc(r, l, c), dt, 300e-6).unwrap();
    let vc = w.probe("vc").unwrap();
    w.times()
        .enumerate()
        .map(|(k, t)| (vc[k] - lc_step_oracle(1.0, l, c, r, t).unwrap()).abs())
        .fold(0.0, f64::max)
}

fn energy_never_rises(r: f64) -> bool {
    let mut k = Circuit::new();
    k.add_element(Element::Capacitor {
        n1: NodeRef(1),
        n2: G,
        c: 13.2e-9,
        v0: 100.0,
    })
    .unwrap();
    k.add_element(Element::Inductor {
        n1: NodeRef(1),
        n2: NodeRef(2),
        l: 12.45e-3,
        i0: 0.5,
    })
    .unwrap();
    k.add_element(Element::Resistor {
        n1: NodeRef(2),
        n2: G,
        r,
    })
    .unwrap();
    let mut s = Solver::new(&k, 1e-6).unwrap();
    let mut last = s.stored_energy();
    for _ in 0..2000 {
        s.assemble_and_solve().unwrap();
        let e = s.stored_energy();
        if e > last * (1.0 + 1e-12) {
            return false;
        }
        last = e;
    }
    true
}

fn criterion_10() -> Outcome {
    let coarse = rlc_error(1e-6);
    let fine = rlc_error(0.5e-6);
    let convergence = fine <= 0.3 * coarse;

    let passive = [0.1, 1.0, 20.0, 500.0, 1e4, 1e6]
        .iter()
        .all(|&r| energy_never_rises(r));

    // scaling the short-circuit current with the voltage keeps the source impedance fixed
    let scaled = |k: f64| {
        let doc = format!(
            "case_kind = \"case_a\"\nphases = 1\nprobes = [\"bus\", \"hv\", \"lv\", \"i_breaker\"]\n\
             [source]\nu_ll_rms_v = {:?}\nsc_current_a = {:?}\n[parallel_branch]\nenabled = false\n[sim]\nt_end_s = 0.008\n",
            150e3 * k,
            33e3 * k
        );
        run_scenario(&parse_scenario(&doc).unwrap()).unwrap()
    };
    let one = scaled(1.0);
    let two = scaled(2.0);
    let mut linear = true;
    for (name, col) in one.columns() {
        let other = two.probe(name).unwrap();
        let scale = max_abs(col);
        linear &= col
            .iter()
            .zip(other)
            .all(|(a, b)| (b - 2.0 * a).abs() <= 1e-12 * scale);
    }
    let identical = scaled(1.0) == one;
    outcome(
        convergence && passive && linear && identical,
        format!(
            "RLC error {coarse:.2e} -> {fine:.2e} (factor {:.3}); passivity {passive}; linear scaling {linear}; bit-identical rerun {identical}",
            fine / coarse
        ),
    )
}

fn criterion_11() -> Outcome {
    let lv_peak = |doc: &str| {
        let (cfg, _, w) = scenario(doc);
        (0..cfg.phases)
            .map(|p| {
                let name = transient_bench_core::scenarios::probe_label("lv", p, cfg.phases);
                peak_pu(&w, &name, 52.5e3)
            })
            .fold(0.0, f64::max)
    };
    let base = lv_peak("case_kind = \"case_a\"\n");
    let bare = lv_peak("case_kind = \"case_a\"\n[secondary]\nkind = \"none\"\n");
    outcome(
        (2.5..=3.5).contains(&base) && (1.3..=1.8).contains(&bare),
        format!("Case A LV peak {base:.3} p.u. with 60 m cable, {bare:.3} p.u. without"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("nameplate conversion", criterion_1),
        ("natural frequencies", criterion_2),
        ("1-cos doubling", criterion_3),
        ("travelling-wave pattern", criterion_4),
        ("reflection doubling", criterion_5),
        ("L/Z time constant", criterion_6),
        ("tap scaling", criterion_7),
        ("oscillation frequency invariance", criterion_8),
        ("flux 1-cos and inrush", criterion_9),
        ("solver properties", criterion_10),
        ("magnitude plausibility", criterion_11),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {} ({name}): {}", k + 1, result.detail);
        if !result.pass {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
